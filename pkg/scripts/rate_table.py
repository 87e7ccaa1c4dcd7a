#!/usr/bin/env python3
"""Print the fitted exponents stored in summary.json files under a results directory."""
import json
import sys
from pathlib import Path

root = Path(sys.argv[1] if len(sys.argv) > 1 else "results")
for path in sorted(root.glob("*/summary.json")):
    summary = json.loads(path.read_text())
    for label, fit in summary.get("rate_fits", {}).items():
        lo, hi = fit["slope_ci"]
        print(f"{summary['experiment']:24s} {label:18s} slope {fit['slope']:.4f}  95% CI [{lo:.4f}, {hi:.4f}]"
              + (f"  dropped {len(fit['dropped'])}" if fit.get("dropped") else ""))
