#!/usr/bin/env python3
"""Run every JSON configuration in scripts/configs (or the ones named) and tabulate the verdicts.

    python3 scripts/run_all.py                       # all configs, full scale
    python3 scripts/run_all.py lipschitz-quick gr-lemma --threads 4
"""
import argparse
import json
import sys
import time
from pathlib import Path

from wiener_coupling.cli import main as cli

HERE = Path(__file__).resolve().parent / "configs"


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help="config stems (default: all)")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", default="results", help="root output directory")
    args = ap.parse_args()

    paths = sorted(HERE.glob("*.json")) if not args.names else [HERE / f"{n}.json" for n in args.names]
    verdicts = []
    for path in paths:
        t = time.perf_counter()
        out = Path(args.out) / path.stem
        code = cli(["run", str(path), "--threads", str(args.threads), "--out", str(out), "--no-timestamp"])
        summary = json.loads((out / "summary.json").read_text()) if code in (0, 1) else {}
        verdicts.append((path.stem, code, time.perf_counter() - t, len(summary.get("claims", []))))
    print()
    for stem, code, secs, n in verdicts:
        status = {0: "pass", 1: "FAIL"}.get(code, "error")
        print(f"{stem:28s} {status:5s} {n:3d} claims {secs:8.1f}s")
    return max(code for _, code, _, _ in verdicts) if verdicts else 0


if __name__ == "__main__":
    sys.exit(main())
