"""Command line entry point: ``fedplora {run,sweep,verify,cost}``."""
from __future__ import annotations

import argparse
import csv
import json
import statistics
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import costmeter
from .fedengine import ExperimentConfig, RoundRecord, run
from .numkit import ConfigError

SUMMARY_FIELDS = [
    "seed", "strategy", "selection", "rounds", "final_eval_loss", "final_recovery_error",
    "median_eval_loss", "median_recovery_error", "mean_init_noise", "mean_agg_noise",
    "total_comm_up_bytes", "total_comm_down_bytes", "total_fold_flops",
]
SWEEP_AXES = {"strategy": "strategy", "rank_profile": "ranks", "alpha": "data.alpha"}


class UsageError(Exception):
    pass


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _parse_value(text: str):
    try:
        return tomllib.loads(f"x = {text}")["x"]
    except tomllib.TOMLDecodeError:
        return text


def load_config(path, overrides=(), seed=None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        flat = _flatten(tomllib.loads(path.read_text()))
    except tomllib.TOMLDecodeError as e:
        raise UsageError(f"cannot parse {path}: {e}") from None
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        flat[key.strip()] = _parse_value(value.strip())
    if seed is not None:
        flat["seed"] = seed
    try:
        return ExperimentConfig.from_flat(flat)
    except ConfigError as e:
        raise UsageError(str(e)) from None


def summarize(records, config: ExperimentConfig) -> dict:
    """Summary row; every number is recomputable from the records alone."""
    losses = [r.eval_loss for r in records if r.eval_loss is not None]
    recs = [r.recovery_error for r in records if r.recovery_error is not None]
    last = records[-1] if records else None

    def med(xs):
        return statistics.median(xs) if xs else None

    return {
        "seed": config.seed, "strategy": config.strategy, "selection": config.selection,
        "rounds": len(records),
        "final_eval_loss": last.eval_loss if last else None,
        "final_recovery_error": last.recovery_error if last else None,
        "median_eval_loss": med(losses), "median_recovery_error": med(recs),
        "mean_init_noise": statistics.fmean([r.noise["init_noise"] for r in records]) if records else None,
        "mean_agg_noise": statistics.fmean([r.noise["agg_noise"] for r in records]) if records else None,
        "total_comm_up_bytes": sum(r.comm_up_bytes for r in records),
        "total_comm_down_bytes": sum(r.comm_down_bytes for r in records),
        "total_fold_flops": sum(r.fold_flops for r in records),
    }


def _cell(x):
    if x is None:
        return ""
    return repr(float(x)) if isinstance(x, float) else str(x)


def write_run(out: Path, config: ExperimentConfig, records) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "rounds.jsonl", "w") as f:
        for r in records:
            f.write(json.dumps(r.to_dict(), allow_nan=False) + "\n")
    summary = summarize(records, config)
    with open(out / "summary.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=SUMMARY_FIELDS)
        w.writeheader()
        w.writerow({k: _cell(v) for k, v in summary.items()})
    with open(out / "config.echo", "w") as f:
        f.write(f"# effective seed = {config.seed}\n")
        for k, v in config.to_flat().items():
            f.write(f"{k} = {json.dumps(v)}\n")
    return summary


def read_records(path) -> list[RoundRecord]:
    with open(path) as f:
        return [RoundRecord.from_dict(json.loads(line)) for line in f if line.strip()]


def cmd_run(args) -> int:
    config = load_config(args.config, args.set, args.seed)
    print(f"seed {config.seed}: {config.strategy}/{config.selection}, {config.rounds} rounds")
    records = run(config)
    summary = write_run(Path(args.out), config, records)
    print(f"wrote {len(records)} rounds to {args.out}; final recovery error "
          f"{summary['final_recovery_error']}")
    return 0


def _deviation(xs):
    m = statistics.median(xs)
    return m, m - min(xs), max(xs) - m


def cmd_sweep(args) -> int:
    key = SWEEP_AXES[args.axis]
    out = Path(args.out)
    # validate every cell before running any of them
    configs = {(value, seed): load_config(args.config, list(args.set) + [f"{key}={json.dumps(value)}"], seed)
               for value in args.values for seed in args.seeds}
    rows, failed = [], 0
    for value in args.values:
        finals = {"final_recovery_error": [], "final_eval_loss": []}
        for seed in args.seeds:
            cell = out / f"{args.axis}={value}" / f"seed={seed}"
            config = configs[(value, seed)]
            try:
                summary = write_run(cell, config, run(config))
            except Exception as e:  # keep going, report at the end
                failed += 1
                print(f"cell {cell} failed: {e}", file=sys.stderr)
                continue
            for k in finals:
                if summary[k] is not None:
                    finals[k].append(summary[k])
            print(f"{args.axis}={value} seed={seed}: recovery {summary['final_recovery_error']}")
        row = {"axis": args.axis, "value": value, "n_seeds": len(finals["final_eval_loss"])}
        for k, xs in finals.items():
            m, lo, hi = _deviation(xs) if xs else (None, None, None)
            row.update({f"median_{k}": m, f"lower_dev_{k}": lo, f"upper_dev_{k}": hi})
        rows.append(row)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: _cell(v) if not isinstance(v, str) else v for k, v in row.items()})
    return 1 if failed else 0


def cmd_verify(args) -> int:
    from . import checks

    failures = []
    for name, ok, detail in checks.run_all(skip_slow=args.skip_slow):
        print(f"{'PASS' if ok else 'FAIL'}  {name}" + ("" if ok else f": {detail}"))
        if not ok:
            failures.append((name, detail))
    if failures:
        name, detail = failures[0]
        print(f"verify failed: {len(failures)} check(s); first: {name}: {detail}")
        return 1
    print("all checks passed")
    return 0


def cmd_cost(args) -> int:
    try:
        p = costmeter.CostProfile(args.d, args.k, args.L, args.R, args.r_i, args.bpp)
    except ConfigError as e:
        raise UsageError(str(e)) from None
    rows = costmeter.cost_table(p, args.participants)
    head = f"{'method':<10}{'uplink MB':>12}{'downlink MB':>13}{'downlink MiB':>14}{'fold flops':>14}{'agg flops':>12}{'temp mem MB':>13}"
    print(f"d={p.d} k={p.k} L={p.L} R={p.R} r_i={p.r_i} bytes/param={p.bytes_per_param}")
    print(head)
    for r in rows:
        print(f"{r['method']:<10}{r['uplink_bytes'] / costmeter.MB:>12.4f}"
              f"{r['downlink_bytes'] / costmeter.MB:>13.4f}{r['downlink_bytes'] / costmeter.MIB:>14.4f}"
              f"{r['fold_flops']:>14.3e}{r['agg_flops']:>12.3e}{r['temp_memory_bytes'] / costmeter.MB:>13.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedplora", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="out")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="cross product of axis values and seeds")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    p.add_argument("--values", nargs="+", required=True)
    p.add_argument("--seeds", nargs="+", type=int, default=[0])
    p.add_argument("--out", default="sweep")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the invariant suite")
    p.add_argument("--skip-slow", action="store_true", help="skip the multi-seed method-ordering check")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("cost", help="print the per-method cost table")
    p.add_argument("--d", type=int, default=768)
    p.add_argument("--k", type=int, default=768)
    p.add_argument("--L", type=int, default=12)
    p.add_argument("--R", type=int, default=16)
    p.add_argument("--r-i", dest="r_i", type=int, default=1)
    p.add_argument("--bpp", type=int, default=2)
    p.add_argument("--participants", type=int, default=1)
    p.set_defaults(func=cmd_cost)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"runtime error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
