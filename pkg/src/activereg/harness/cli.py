"""Command-line entry point: ``activereg <pipeline> [flags]`` prints or writes a JSON report."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiments import run_experiment

_COMMON_INT = {"n": None, "d": None}

# flag name -> (type, help); defaults live in the experiment runners
_FLAGS = {
    "lewis": {"n": int, "d": int, "p": float, "tol": float},
    "embed": {"n": int, "d": int, "p": float, "eps": float, "delta": float, "C_se": float, "spike": int, "dirs": int, "ascent": int},
    "regress-lp": {"n": int, "d": int, "p": float, "eps": float, "delta": float, "C": float, "frac": float, "scale": float, "method": str},
    "regress-m": {"n": int, "d": int, "loss": str, "eps": float, "delta": float, "C_m": float, "frac": float, "scale": float},
    "regress-huber": {"n": int, "d": int, "eps": float, "delta": float, "tau": float, "C_h": float, "kappa_h": float, "C_m": float, "frac": float},
    "regress-tukey": {"n": int, "d": int, "tau": float, "p": float, "eps": float, "C_m": float, "frac": float, "scale": float},
    "kron": {"p": float, "eps": float, "delta": float, "C": float, "shapes": str, "factors": str, "b": str, "generator": str},
    "orlicz": {"n": int, "d": int, "loss": str, "eps": float, "rows": int, "dirs": int},
    "sens": {"loss": str, "tau": float, "kind": str, "d": int, "n_list": str, "scale": float, "single_hash": bool},
    "hardness": {"kind": str, "delta": float, "p": float, "n": int, "eps": float, "m": int, "C": float},
}

_HELP = {
    "lewis": "Lewis weights of a random matrix",
    "embed": "ℓp subspace embedding and its measured distortion",
    "regress-lp": "active ℓp regression against a full solve",
    "regress-m": "active regression for a catalog loss, e.g. --loss 'huber(1)'",
    "regress-huber": "active Huber regression",
    "regress-tukey": "active Tukey regression",
    "kron": "Kronecker-product ℓp regression",
    "orlicz": "Orlicz-norm subspace embedding",
    "sens": "sensitivity sums as n grows",
    "hardness": "lower-bound instances: naive vs boosted sampling",
}


def _convert(name: str, value):
    if value is None:
        return None
    if name == "shapes":
        return [tuple(int(v) for v in part.lower().split("x")) for part in value.split(",")]
    if name == "factors":
        return value.split(",")
    if name == "n_list":
        return [int(v) for v in value.split(",")]
    return value


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="activereg", description="Active regression experiments; writes a JSON report.")
    sub = ap.add_subparsers(dest="pipeline", required=True)
    for name, flags in _FLAGS.items():
        sp = sub.add_parser(name, help=_HELP[name])
        sp.add_argument("--seeds", type=int, default=1, help="number of seeds (default 1)")
        sp.add_argument("--seed", type=int, default=0, help="first seed (default 0)")
        sp.add_argument("--out", type=Path, help="write the JSON report here instead of stdout")
        sp.add_argument("--csv", type=Path, help="also write per-trial records as CSV")
        for flag, typ in flags.items():
            opt = "--" + flag.replace("_", "-")
            if typ is bool:
                sp.add_argument(opt, dest=flag, action="store_true")
            else:
                sp.add_argument(opt, dest=flag, type=typ)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    params = {}
    for flag in _FLAGS[args.pipeline]:
        val = _convert(flag, getattr(args, flag))
        if val is not None and val is not False:
            params[flag] = val
    try:
        report = run_experiment({"pipeline": args.pipeline, "params": params, "seeds": args.seeds, "seed": args.seed})
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"activereg: error: {exc}", file=sys.stderr)
        return 2
    text = report.to_json()
    if args.out:
        args.out.write_text(text + "\n")
    else:
        print(text)
    if args.csv:
        args.csv.write_text(report.to_csv())
    if not args.out:
        return 0
    summary = {k: v.get("median", v.get("rate")) for k, v in report.summary.items()}
    print(json.dumps({"pipeline": args.pipeline, "medians": summary}, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
