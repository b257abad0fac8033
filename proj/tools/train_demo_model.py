#!/usr/bin/env python3
"""Trains the demo residual ECG conv net and writes it in the `tcu` model format.

Training beats come from make_synthetic_ecg.py with a seed distinct from the
shipped 500-beat sample. Output: <out>.nnmodel manifest plus <out>.nnw blob
(little-endian float64, per parameterized layer: kernel row-major, then bias).
"""

import argparse
import os
import struct
import sys

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
from make_synthetic_ecg import generate  # noqa: E402


class DemoNet(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv1d(1, 8, 5)
        self.conv2 = nn.Conv1d(8, 8, 5, padding=2)
        self.conv3 = nn.Conv1d(8, 16, 3)
        self.fc1 = nn.Linear(21 * 16, 32)
        self.fc2 = nn.Linear(32, 5)

    def forward(self, x):
        x = x[:, None, :]
        a = F.max_pool1d(F.relu(self.conv1(x)), 2)
        x = a + F.relu(self.conv2(a))
        x = F.max_pool1d(x, 2)
        x = F.max_pool1d(F.relu(self.conv3(x)), 2)
        # Position-major flatten, matching the [length, channels] layout.
        x = x.permute(0, 2, 1).reshape(x.shape[0], -1)
        return self.fc2(F.relu(self.fc1(x)))


MANIFEST = """tcu-model 1
name ecg_demo
input 187,1
weights {blob}
layer conv1 Conv1D in=input kernel=5 stride=1 padding=valid filters=8
layer relu1 ReLU in=conv1
layer pool1 MaxPool1D in=relu1 kernel=2 stride=2 padding=valid
layer conv2 Conv1D in=pool1 kernel=5 stride=1 padding=same filters=8
layer relu2 ReLU in=conv2
layer res Add in=pool1,relu2
layer pool2 MaxPool1D in=res kernel=2 stride=2 padding=valid
layer conv3 Conv1D in=pool2 kernel=3 stride=1 padding=valid filters=16
layer relu3 ReLU in=conv3
layer pool3 MaxPool1D in=relu3 kernel=2 stride=2 padding=valid
layer flat Flatten in=pool3
layer fc1 Dense in=flat units=32
layer relu4 ReLU in=fc1
layer fc2 Dense in=relu4 units=5
output fc2
"""


def conv_matrix(conv):
    w = conv.weight.detach().double()  # (out, in, k)
    out_ch, in_ch, k = w.shape
    return w.permute(2, 1, 0).reshape(k * in_ch, out_ch).numpy()


def export(model, path):
    blob = os.path.splitext(path)[0] + ".nnw"
    params = [
        ("conv1", conv_matrix(model.conv1), model.conv1.bias),
        ("conv2", conv_matrix(model.conv2), model.conv2.bias),
        ("conv3", conv_matrix(model.conv3), model.conv3.bias),
        ("fc1", model.fc1.weight.detach().double().T.numpy(), model.fc1.bias),
        ("fc2", model.fc2.weight.detach().double().T.numpy(), model.fc2.bias),
    ]
    text = MANIFEST.format(blob=os.path.basename(blob))
    data = bytearray()
    for name, kernel, bias in params:
        text += f"param {name} {kernel.shape[0]} {kernel.shape[1]}\n"
        for v in np.ascontiguousarray(kernel).ravel():
            data += struct.pack("<d", float(v))
        for v in bias.detach().double().numpy():
            data += struct.pack("<d", float(v))
    with open(path, "w") as f:
        f.write(text)
    with open(blob, "wb") as f:
        f.write(bytes(data))


def snap_to_grid(model, frac_bits):
    """Rounds every parameter to the fixed-point grid so quantizing the
    shipped weights is exact."""
    scale = float(1 << frac_bits)
    with torch.no_grad():
        for p in model.parameters():
            p.copy_(torch.round(p * scale) / scale)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True, help="manifest path (.nnmodel)")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--frac-bits", type=int, default=8)
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    data = generate([1200, 800, 800, 600, 600], seed=args.seed + 1000)
    x = torch.tensor(data[:, :-1], dtype=torch.float32)
    y = torch.tensor(data[:, -1], dtype=torch.long)

    model = DemoNet()
    opt = torch.optim.Adam(model.parameters(), lr=2e-3, weight_decay=1e-4)
    n = len(y)
    for epoch in range(args.epochs):
        perm = torch.randperm(n)
        total = 0.0
        for i in range(0, n, 64):
            idx = perm[i:i + 64]
            logits = model(x[idx])
            # Keep logits small.
            loss = F.cross_entropy(logits, y[idx], label_smoothing=0.1)
            loss = loss + 1e-3 * logits.pow(2).mean()
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        with torch.no_grad():
            acc = (model(x).argmax(1) == y).float().mean().item()
        print(f"epoch {epoch + 1}: loss {total / n:.4f} train acc {acc:.4f}")
    snap_to_grid(model, args.frac_bits)
    with torch.no_grad():
        acc = (model(x).argmax(1) == y).float().mean().item()
    print(f"after snapping to 2^-{args.frac_bits}: train acc {acc:.4f}")
    export(model, args.out)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
