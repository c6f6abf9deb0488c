"""Command-line interface.

Exit codes: 0 ok, 2 usage/config/parse error, 3 I/O error, 4 numeric or
infeasible-payload error. Summary lines on stdout are space-separated
``key=value`` pairs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .costs import DEFAULT_FILTER_SIZE, CostMap, build_cost_map, hill_cost
from .embedding import (
    LOG2_3,
    BracketError,
    InfeasiblePayloadError,
    RULES,
    pattern_to_bytes,
    simulate_embedding,
)
from .evaluation import ExperimentReport, SweepConfig, format_table, run_sweep
from .features import DEFAULT_T
from .image_io import PGMError, desk_corpus, load_pgm, save_pgm, synth_cover
from .oracles import FilterLogitOracle, load_oracle, save_oracle, train_linear_oracle
from .rng import GENERATOR_NAME


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _threads(value: str) -> int:
    if value == "auto":
        return os.cpu_count() or 1
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"threads must be a positive integer or 'auto', got {value!r}")
    if n < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1")
    return n


def _odd(value: str) -> int:
    k = int(value)
    if k < 1 or k % 2 == 0:
        raise argparse.ArgumentTypeError(f"filter size must be a positive odd integer, got {value}")
    return k


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _read_image(path: str) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise CliError(3, f"cannot read image: {p}")
    try:
        return load_pgm(p)
    except PGMError as exc:
        raise CliError(2, f"{p}: {exc}")


def _oracle_from_args(args):
    if args.oracle == "linear":
        if not args.weights:
            raise CliError(2, "--oracle linear requires --weights")
        path = Path(args.weights)
        if not path.is_file():
            raise CliError(2, f"oracle weights file not found: {path}")
        try:
            return load_oracle(path)
        except ValueError as exc:
            raise CliError(2, f"{path}: {exc}")
    if args.weights:
        path = Path(args.weights)
        if not path.is_file():
            raise CliError(2, f"oracle weights file not found: {path}")
        return load_oracle(path)
    return FilterLogitOracle(args.gain, args.bias)


def _cost_from_args(args, img):
    """Cost map and the settings that produced it."""
    if getattr(args, "cost", None):
        p = Path(args.cost)
        if not p.is_file():
            raise CliError(3, f"cannot read cost map: {p}")
        rho = CostMap.load(p)
        if rho.shape != img.shape:
            raise CliError(2, f"cost map {rho.shape} does not match image {img.shape}")
        return rho, {"cost_file": str(p)}
    if args.method == "hill":
        return hill_cost(img), {"method": "hill"}
    oracle = _oracle_from_args(args)
    rho = build_cost_map(oracle, img, args.k, args.threads)
    meta = {"method": "proposed", "oracle": oracle.kind, "k": args.k}
    if args.weights:
        meta["weights"] = str(args.weights)
    else:
        meta.update(gain=oracle.gain, bias=oracle.bias)
    return rho, meta


def _add_cost_options(p):
    p.add_argument("--method", choices=("proposed", "hill"), default="proposed")
    p.add_argument("--oracle", choices=("filter", "linear"), default="filter")
    p.add_argument("--weights", help="oracle weights file (required for --oracle linear)")
    p.add_argument("--gain", type=float, default=1.0, help="filter oracle gain")
    p.add_argument("--bias", type=float, default=0.0, help="filter oracle bias")
    p.add_argument("-k", "--filter-size", dest="k", type=_odd, default=DEFAULT_FILTER_SIZE)
    p.add_argument("--threads", type=_threads, default=1)


def cmd_cost(args) -> int:
    img = _read_image(args.input)
    rho, _ = _cost_from_args(args, img)
    try:
        rho.save(args.output)
    except OSError as exc:
        raise CliError(3, f"cannot write {args.output}: {exc}")
    dry = rho.costs[~rho.wet]
    stats = (dry.min(), dry.max(), dry.mean()) if dry.size else (float("nan"),) * 3
    print(
        f"min={_fmt(stats[0])} max={_fmt(stats[1])} mean={_fmt(stats[2])} "
        f"wet={int(rho.wet.sum())} pixels={rho.costs.size}"
    )
    return 0


def cmd_embed(args) -> int:
    img = _read_image(args.input)
    if args.alpha < 0:
        raise CliError(2, "--alpha must be nonnegative")
    rho, cost_meta = _cost_from_args(args, img)
    if args.alpha > LOG2_3:
        dry = int((~rho.wet).sum())
        raise InfeasiblePayloadError(args.alpha * img.size, dry * LOG2_3, img.size)
    res = simulate_embedding(img, rho, args.alpha, args.rule, args.seed)
    meta = {
        "alpha": args.alpha,
        "rule": args.rule,
        "seed": args.seed,
        "generator": GENERATOR_NAME,
        "lambda": res.solution.lam,
        "message_bits": res.solution.message_bits,
        "entropy_bits": res.solution.entropy,
        "expected_distortion": res.expected_distortion,
        "change_count": res.change_count,
        "cost": cost_meta,
        "version": __version__,
    }
    try:
        save_pgm(args.output, res.stego)
        if args.pattern:
            Path(args.pattern).write_bytes(pattern_to_bytes(res.pattern))
        if args.probs:
            res.probabilities.save(args.probs)
        if args.meta:
            Path(args.meta).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise CliError(3, f"cannot write output: {exc}")
    print(
        f"lambda={_fmt(res.solution.lam)} entropy={_fmt(res.solution.entropy)} "
        f"changes={res.change_count} distortion={_fmt(res.expected_distortion)}"
    )
    return 0


def cmd_sweep(args) -> int:
    path = Path(args.config)
    if not path.is_file():
        raise CliError(3, f"cannot read config: {path}")
    try:
        spec = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CliError(2, f"{path}: invalid JSON: {exc}")
    if args.threads is not None:
        spec["threads"] = args.threads
    try:
        config = SweepConfig.from_dict(spec, base_dir=path.parent)
        config.validate()
        config.split()
    except FileNotFoundError as exc:
        raise CliError(2, str(exc))
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(2, f"{path}: {exc}")
    report = run_sweep(config)
    try:
        Path(args.output).write_text(report.to_json())
    except OSError as exc:
        raise CliError(3, f"cannot write {args.output}: {exc}")
    print(format_table(report))
    return 0


def _pgm_names(d: Path) -> list[str]:
    if not d.is_dir():
        raise CliError(2, f"not a directory: {d}")
    return sorted(p.name for p in d.glob("*.pgm"))


def cmd_train_oracle(args) -> int:
    cdir, sdir = Path(args.covers), Path(args.stegos)
    cn, sn = _pgm_names(cdir), _pgm_names(sdir)
    if not cn or cn != sn:
        missing = sorted(set(cn) ^ set(sn))
        raise CliError(2, f"cover and stego directories must hold the same .pgm files (differ on {missing[:5]})")
    covers = [_read_image(cdir / n) for n in cn]
    stegos = [_read_image(sdir / n) for n in sn]
    oracle = train_linear_oracle(covers, stegos, epochs=args.epochs, rate=args.rate, seed=args.seed, T=args.T)
    try:
        save_oracle(args.output, oracle)
    except OSError as exc:
        raise CliError(3, f"cannot write {args.output}: {exc}")
    print(f"accuracy={_fmt(oracle.training_accuracy)} pairs={len(covers)} epochs={args.epochs} seed={args.seed}")
    return 0


def cmd_synth(args) -> int:
    try:
        if args.count is not None:
            out = Path(args.output)
            out.mkdir(parents=True, exist_ok=True)
            kinds = tuple(args.kind.split(",")) if args.kind else None
            covers = desk_corpus(args.count, args.size, args.seed, **({"kinds": kinds} if kinds else {}))
            for i, c in enumerate(covers):
                save_pgm(out / f"{i:05d}.pgm", c)
            print(f"covers={len(covers)} dir={out}")
        else:
            img = synth_cover(args.kind or "textured(13)", args.size, args.size, args.seed)
            save_pgm(args.output, img)
            print(f"kind={args.kind or 'textured(13)'} size={args.size} path={args.output}")
    except OSError as exc:
        raise CliError(3, str(exc))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stegosense", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cost", help="compute a cost map (COST file)")
    p.add_argument("input", help="cover PGM")
    p.add_argument("-o", "--output", required=True)
    _add_cost_options(p)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("embed", help="simulate embedding at a relative payload")
    p.add_argument("input", help="cover PGM")
    p.add_argument("-o", "--output", required=True, help="stego PGM")
    p.add_argument("--cost", help="precomputed COST file (overrides cost options)")
    _add_cost_options(p)
    p.add_argument("--alpha", type=float, required=True, help="relative payload, bits per pixel")
    p.add_argument("--rule", choices=RULES, default="capped")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pattern", help="write the PATT change pattern here")
    p.add_argument("--probs", help="write the PROB change probabilities here")
    p.add_argument("--meta", help="write metadata JSON here")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("sweep", help="run a detectability sweep from a JSON config")
    p.add_argument("config")
    p.add_argument("-o", "--output", required=True, help="report JSON")
    p.add_argument("--threads", type=_threads, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("train-oracle", help="fit a linear residual oracle to cover/stego pairs")
    p.add_argument("--covers", required=True, help="directory of cover PGMs")
    p.add_argument("--stegos", required=True, help="directory of stego PGMs with matching names")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--rate", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-T", type=int, default=DEFAULT_T)
    p.set_defaults(func=cmd_train_oracle)

    p = sub.add_parser("synth", help="write synthetic cover(s)")
    p.add_argument("-o", "--output", required=True, help="PGM path, or a directory with --count")
    p.add_argument("--kind", help="cover kind, e.g. 'two-region(9)'; comma list with --count")
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, help="write a corpus of this many covers")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (InfeasiblePayloadError, BracketError) as exc:
        extra = f" max_payload={_fmt(exc.max_payload)}" if isinstance(exc, InfeasiblePayloadError) else ""
        print(f"error: {exc}{extra}", file=sys.stderr)
        return 4
    except PGMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
