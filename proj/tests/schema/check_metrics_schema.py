"""Runs a short synthetic train + eval and validates metrics.json against the schema."""
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema


def run(cmd):
    result = subprocess.run(cmd, capture_output=True, text=True)
    if result.returncode != 0:
        sys.exit(f"{' '.join(map(str, cmd))} exited {result.returncode}:\n{result.stderr}")
    return result.stdout


def main():
    exe, schema_path = sys.argv[1], Path(sys.argv[2])
    schema = json.loads(schema_path.read_text())
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        synth = ["--n-train", "10", "--n-test", "4", "--min-len", "80", "--max-len", "120", "--seed", "5"]
        run([exe, "synth", "--out", tmp / "data", *synth])
        config = {
            "subset": "SYNTH",
            "data_root": str(tmp / "data"),
            "model": {"preset": "tiny"},
            "train": {"max_epochs": 2, "seed": 1},
            "output_dir": str(tmp / "out"),
        }
        (tmp / "cfg.json").write_text(json.dumps(config))
        run([exe, "train", "--config", tmp / "cfg.json"])
        printed = json.loads(run([exe, "eval", "--checkpoint", tmp / "out" / "run_0" / "checkpoint.rfck",
                                  "--data-root", tmp / "data", "--subset", "SYNTH", "--out", tmp / "eval"]))
        for doc in (printed,
                    json.loads((tmp / "eval" / "metrics.json").read_text()),
                    json.loads((tmp / "out" / "run_0" / "metrics.json").read_text())):
            jsonschema.validate(doc, schema)
        if printed["n_engines"] != 4 or len(printed["per_engine"]) != 4:
            sys.exit("expected 4 engines")
    print("metrics.json matches schema")


if __name__ == "__main__":
    main()
