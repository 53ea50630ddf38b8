"""Run the full synthetic pipeline: fixtures, insert, height field, simulate, correct poses, metrics.

Usage: python scripts/pipeline_demo.py [workdir]
"""
import json
import sys
from pathlib import Path

from roves import cli


def run(argv: list[str]) -> None:
    print("$ roves " + " ".join(argv))
    code = cli.main(argv)
    if code:
        sys.exit(code)


def main() -> None:
    work = Path(sys.argv[1] if len(sys.argv) > 1 else "demo")
    cfg = str(work / "config.json")
    run(["fixtures", "--out", str(work)])
    for cmd in ("insert", "heightfield", "simulate", "correct-poses"):
        run([cmd, "--config", cfg])
    out = work / "out"
    run(["metrics", str(out / "sim_ego.csv"), str(out / "sim_front.csv"), "--column", "z_s", "--column", "theta"])
    doc = json.loads((out / "poses_corrected.json").read_text())
    print(f"corrected vehicles: {sorted(k for k in doc if k != 'provenance')}")


if __name__ == "__main__":
    main()
