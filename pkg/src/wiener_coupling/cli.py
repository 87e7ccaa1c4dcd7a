"""Command line experiment runner.

    python3 -m wiener_coupling list
    python3 -m wiener_coupling run config.json --out results/ --threads 4 --no-timestamp
    python3 -m wiener_coupling selftest
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .experiments import DEFAULTS, DETERMINISTIC, EXPERIMENTS, resolve_config, run_experiment

CSV_COLUMNS = ["experiment", "param_key", "param_value", "p", "value", "std_error", "n_paths", "seed"]
THREADS_ENV = "WIENER_COUPLING_THREADS"


class ConfigError(Exception):
    pass


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def results_csv(rows, timestamp: bool) -> str:
    buf = io.StringIO()
    if timestamp:
        buf.write(f"# generated {_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def load_config(path: str | None, seed_override: int | None, out_override: str | None) -> dict:
    if path is None:
        raise ConfigError("no configuration given (use `run <config>` or --config)")
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"configuration file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"configuration is not valid JSON: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    if seed_override is not None:
        raw["seed"] = seed_override
    if out_override is not None:
        raw["out"] = out_override
    try:
        return resolve_config(raw)
    except KeyError as e:
        raise ConfigError(f"missing required field '{e.args[0]}'") from None
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from None


def _threads(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get(THREADS_ENV)
    return max(1, int(env)) if env else 1


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config_pos or args.config, args.seed, args.out)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    res = run_experiment(cfg, threads=_threads(args.threads))
    out = Path(cfg.get("out") or "results")
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(results_csv(res.rows, timestamp=not args.no_timestamp))
    summary = res.summary()
    summary["config"] = {k: v for k, v in cfg.items() if k != "out"}
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2) + "\n")
    for c in res.claims:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['paper_claim_id']}: measured {c['measured']}")
    print(f"{res.name}: {'pass' if res.passed else 'fail'}; wrote {out / 'results.csv'} and {out / 'summary.json'}")
    return 0 if res.passed else 1


def cmd_list(args) -> int:
    for name in EXPERIMENTS:
        d = DEFAULTS[name]
        tag = " (deterministic)" if name in DETERMINISTIC else f" n_paths={d.get('n_paths')}"
        print(f"{name}{tag}")
    return 0


def selftest_suites():
    """Deterministic algebraic checks, no Monte Carlo."""
    from . import chaos
    from .estimators import bmo_s2_norm, rate_fit
    from .wiener import make_grid

    def chaos_exact():
        v = chaos.coupled_second_moment_exact(chaos.ChaosVariable.hermite(2).spectrum(), 0.5)
        return abs(v - 1.0) < 1e-12

    def rates():
        f1 = rate_fit([(1, 1), (0.5, 0.5), (0.25, 0.25)])
        f2 = rate_fit([(2.0**-k, 2.0 ** (-k / 2)) for k in range(4)])
        return abs(f1.slope - 1) < 1e-12 and abs(f2.slope - 0.5) < 1e-12

    def bmo():
        g = make_grid(0.0, 1.0, 64)
        return abs(bmo_s2_norm(np.full(65, 2.0), g).value - 2.0) < 1e-12

    suites = [("chaos-exact", chaos_exact), ("rate-fit", rates), ("bmo-deterministic", bmo)]
    for name in DETERMINISTIC:
        suites.append((name, lambda n=name: run_experiment(resolve_config({"experiment": n, "seed": 0})).passed))
    suites.append(("d12-lemma", lambda: run_experiment(resolve_config(
        {"experiment": "d12-profile", "seed": 0, "n_paths": 0})).passed))
    return suites


def cmd_selftest(args) -> int:
    ok = True
    for name, fn in selftest_suites():
        passed = bool(fn())
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wiener-coupling", description="Coupling experiments for SDEs and BSDEs.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment from a JSON configuration")
    run.add_argument("config_pos", nargs="?", metavar="config")
    run.add_argument("--config", help="configuration file (alternative to the positional argument)")
    run.add_argument("--seed", type=int, help="override the configuration seed")
    run.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    run.add_argument("--no-timestamp", action="store_true", help="omit the timestamp line in results.csv")
    run.add_argument("--out", help="output directory (default: config 'out' or ./results)")
    run.set_defaults(func=cmd_run)
    sub.add_parser("list", help="list experiments").set_defaults(func=cmd_list)
    sub.add_parser("selftest", help="deterministic checks").set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
