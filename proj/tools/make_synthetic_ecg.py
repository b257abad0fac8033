#!/usr/bin/env python3
"""Synthetic segmented-beat ECG CSV in the 188-column layout read by `tcu`.

Each row holds 187 samples normalized to [0, 1] followed by a label:
0 normal, 1 supraventricular ectopic, 2 ventricular ectopic, 3 fusion,
4 unclassifiable/paced. Beats are built from Gaussian P/QRS/T components
with per-class timing and width, then jittered, normalized and zero padded
like the public MIT-BIH heartbeat segment files.
"""

import argparse

import numpy as np

SAMPLES = 187
T = np.arange(SAMPLES, dtype=np.float64)

# (p_amp, qrs_width, qrs_amp, t_amp, t_width, rr, spike)
CLASSES = {
    0: (0.15, 2.0, 1.00, 0.30, 9.0, 105.0, False),
    1: (0.05, 2.0, 0.95, 0.25, 8.0, 70.0, False),
    2: (0.00, 6.5, 1.10, -0.35, 12.0, 120.0, False),
    3: (0.08, 4.0, 1.00, 0.05, 10.0, 100.0, False),
    4: (0.00, 5.0, 0.90, 0.20, 11.0, 95.0, True),
}


def bump(center, width, amp):
    return amp * np.exp(-0.5 * ((T - center) / width) ** 2)


def beat(label, rng):
    p_amp, qrs_w, qrs_amp, t_amp, t_w, rr, spike = CLASSES[label]
    j = lambda s: rng.normal(0.0, s)
    r0 = 6.0 + j(1.0)
    rr = rr * (1.0 + j(0.06))
    x = bump(r0, qrs_w * (1 + j(0.1)), qrs_amp * (1 + j(0.08)))
    x += bump(r0 + 4 + qrs_w, qrs_w * 1.2, -0.15 * qrs_amp)  # S wave
    x += bump(r0 + 35 + 2 * qrs_w + j(3), t_w * (1 + j(0.1)), t_amp * (1 + j(0.15)))
    x += bump(r0 + rr - 18 + j(2), 5.0, p_amp * (1 + j(0.2)))
    x += bump(r0 + rr, qrs_w, qrs_amp * 0.9)  # next R peak
    if spike:
        x += bump(r0 - 3, 0.6, 0.8) + bump(r0 + rr - 3, 0.6, 0.8)
    x += 0.05 * np.sin(2 * np.pi * T / (180 + j(20)) + rng.uniform(0, 2 * np.pi))
    x += rng.normal(0.0, 0.015, SAMPLES)
    x = (x - x.min()) / (x.max() - x.min())
    end = int(min(SAMPLES, r0 + rr + 15 + j(5)))
    x[end:] = 0.0
    return np.round(x, 6)


def generate(counts, seed):
    rng = np.random.default_rng(seed)
    labels = np.concatenate([np.full(n, c) for c, n in enumerate(counts)])
    rng.shuffle(labels)
    rows = [np.append(beat(int(c), rng), c) for c in labels]
    return np.array(rows)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True)
    ap.add_argument("--counts", default="300,50,80,30,40",
                    help="beats per class 0..4")
    ap.add_argument("--seed", type=int, default=187)
    args = ap.parse_args()
    counts = [int(c) for c in args.counts.split(",")]
    if len(counts) != 5:
        ap.error("--counts needs five values")
    data = generate(counts, args.seed)
    with open(args.out, "w") as f:
        for row in data:
            f.write(",".join(f"{v:.6f}" for v in row[:-1]))
            f.write(f",{int(row[-1])}\n")


if __name__ == "__main__":
    main()
