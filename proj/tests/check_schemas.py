"""Validates the JSON printed by the tcu CLI against docs/schemas."""
import copy
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema

ROOT = Path(__file__).resolve().parents[1]


def schema(name):
    s = json.loads((ROOT / "docs" / "schemas" / f"{name}.schema.json").read_text())
    jsonschema.Draft7Validator.check_schema(s)
    return s


def tcu(binary, *args):
    res = subprocess.run([binary, *args], capture_output=True, text=True)
    if res.returncode != 0:
        raise SystemExit(f"tcu {' '.join(args)} exited {res.returncode}: {res.stderr}")
    return json.loads(res.stdout)


def expect_invalid(doc, s, label):
    try:
        jsonschema.validate(doc, s)
    except jsonschema.ValidationError:
        return
    raise SystemExit(f"{label}: schema accepted a broken document")


def main(binary):
    model = str(ROOT / "models" / "ecg_demo.nnmodel")
    data = str(ROOT / "data" / "ecg_sample_500.csv")

    arch = tcu(binary, "arch", "--json")
    jsonschema.validate(arch, schema("arch_estimate"))

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run([binary, "compile", "--model", model, "--out", tmp], check=True,
                       capture_output=True)
        sim = tcu(binary, "sim", "--bundle", str(Path(tmp) / "ecg_demo.tmodel"),
                  "--csv", data, "--row", "0")
    jsonschema.validate(sim, schema("sim_report"))

    bench = tcu(binary, "bench", "--model", model, "--data", data, "--beats", "4")
    jsonschema.validate(bench, schema("bench_report"))
    jsonschema.validate(bench["metrics"], schema("metrics_report"))

    broken = copy.deepcopy(sim)
    del broken["output"]
    expect_invalid(broken, schema("sim_report"), "sim")
    broken = copy.deepcopy(bench)
    broken["sim"]["total_cycles"] = -1
    expect_invalid(broken, schema("bench_report"), "bench")
    print("schemas ok")


if __name__ == "__main__":
    main(sys.argv[1])
