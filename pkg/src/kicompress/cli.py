"""Command-line interface.

Exit codes: 0 success, 1 input error, 2 decomposition failure,
3 internal assertion (window or faithfulness check failed).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import ensemble as en
from .errors import DecompositionFailed, DimensionTooLarge, InternalConsistencyError, InvalidEnsemble
from .kidecomp import DEFAULT_T_SAMPLES, DecompConfig, decomposition_to_dict, ki_decompose
from .rates import report_from_decomposition
from .vlfcodec import roundtrip_check, run_nblock, sample_lengths

EXIT_OK, EXIT_INPUT, EXIT_DECOMP, EXIT_ASSERT = 0, 1, 2, 3
FAITHFUL_TOL = 1e-7

log = logging.getLogger("kicompress")


@dataclass(frozen=True)
class RunConfig:
    tolerances: dict = field(default_factory=dict)
    seed: int = 0
    t_samples: int = len(DEFAULT_T_SAMPLES)
    max_retries: int = 4
    format: str = "json"
    max_dim: int = en.DEFAULT_MAX_DIM
    lenient: bool = False

    def __post_init__(self):
        if any(not v > 0 for v in self.tolerances.values()):
            raise ValueError("tolerances must be positive")
        if self.max_retries < 0:
            raise ValueError("--max-retries must be nonnegative")
        if self.t_samples < 1:
            raise ValueError("--t-samples must be at least 1")

    def decomp_config(self) -> DecompConfig:
        ts = list(DEFAULT_T_SAMPLES[: self.t_samples])
        if self.t_samples > len(ts):
            # extra samples come from a stream separate from the retry draws
            rng = np.random.default_rng([int(self.seed) & 0xFFFFFFFFFFFFFFFF, 1])
            ts += [float(t) for t in rng.uniform(-2.0, 2.0, self.t_samples - len(ts))]
        return DecompConfig(seed=self.seed, t_samples=tuple(ts), max_retries=self.max_retries, **self.tolerances)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol-p1", type=float, default=None, help="reconstruction tolerance (trace distance)")
    p.add_argument("--tol-p2", type=float, default=None, help="product-form tolerance (trace distance)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t-samples", type=int, default=len(DEFAULT_T_SAMPLES),
                   help="number of modular-flow parameters in the first attempt")
    p.add_argument("--max-retries", type=int, default=4)
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("--max-dim", type=int, default=en.DEFAULT_MAX_DIM)
    p.add_argument("--lenient", action="store_true", help="ignore unknown fields in input files")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kicompress", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="block decomposition of an ensemble file")
    p.add_argument("input")
    _add_common(p)

    p = sub.add_parser("rates", help="compression rates, gaps and classification")
    p.add_argument("input")
    p.add_argument("--table1", action="store_true", help="append the rate relation for the classification cell")
    _add_common(p)

    p = sub.add_parser("codec", help="run the variable-length faithful codec on n-letter blocks")
    p.add_argument("input")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--trials", type=int, default=0, help="Monte Carlo trials (0 = skip)")
    _add_common(p)

    p = sub.add_parser("fixtures", help="write the built-in ensembles E1..E7")
    p.add_argument("name", help="E1..E7 or 'all'")
    p.add_argument("--out", default=".", help="output directory")
    return parser


def _run_config(args) -> RunConfig:
    tols = {}
    if args.tol_p1 is not None:
        tols["tol_p1"] = args.tol_p1
    if args.tol_p2 is not None:
        tols["tol_p2"] = args.tol_p2
    return RunConfig(tols, args.seed, args.t_samples, args.max_retries, args.format, args.max_dim, args.lenient)


def _load(args, cfg: RunConfig) -> en.Ensemble:
    e = en.read_ensemble(args.input, lenient=cfg.lenient)
    en.require_valid(e)
    if e.dim > cfg.max_dim:
        raise DimensionTooLarge(f"dimension {e.dim} exceeds --max-dim {cfg.max_dim}")
    return e


def _emit(obj: dict, text: str | None, fmt: str) -> None:
    if fmt == "text" and text is not None:
        sys.stdout.write(text)
    else:
        sys.stdout.write(en.dumps_json(obj) + "\n")


def _decomposition_text(d) -> str:
    lines = [f"dimension {d.dim}, {len(d.blocks)} block(s), attempts {d.attempts}"]
    for b in d.blocks:
        lines.append(f"block {b.index}: dim_J={b.dim_J} dim_K={b.dim_K} p_l={b.p_l:.10f} "
                     f"p_il=[{', '.join(f'{x:.6f}' for x in b.p_il)}]")
    if d.report is not None:
        r = d.report
        lines.append(f"P1 {r.p1_residual:.3e}  P2 {r.p2_residual:.3e}  P3 {list(r.p3_commutant_dims)}  "
                     f"{'passed' if r.passed else 'FAILED'}")
    return "\n".join(lines) + "\n"


def cmd_decompose(args) -> int:
    cfg = _run_config(args)
    e = _load(args, cfg)
    d = ki_decompose(e, cfg.decomp_config())
    _emit(decomposition_to_dict(d), _decomposition_text(d), cfg.format)
    return EXIT_OK


def cmd_rates(args) -> int:
    cfg = _run_config(args)
    e = _load(args, cfg)
    dc = cfg.decomp_config()
    report = report_from_decomposition(e, ki_decompose(e, dc), dc.commute_tol)
    _emit(report.to_dict(table1=args.table1), report.to_text(table1=args.table1), cfg.format)
    return EXIT_OK


def cmd_codec(args) -> int:
    cfg = _run_config(args)
    e = _load(args, cfg)
    if args.n < 1:
        raise InvalidEnsemble("--n must be positive")
    res = run_nblock(e, args.n, cfg.decomp_config(), cfg.max_dim)
    residual = roundtrip_check(res.decomposition, res.code, res.ensemble)
    out = res.stats.to_dict()
    out["roundtrip_residual"] = residual
    if args.trials > 0:
        out["monte_carlo"] = sample_lengths(res.decomposition, res.code, res.ensemble, args.trials, cfg.seed).to_dict()
    lo, hi = res.stats.window
    text = (f"n = {args.n}\nexpected block length {res.stats.expected_length:.10f}\n"
            f"per-letter rate {res.stats.per_letter_rate:.10f} in [{lo:.10f}, {hi:.10f}]\n"
            f"roundtrip residual {residual:.3e}\n"
            + "".join(f"block {l}: codeword '{c}'\n" for l, c in res.stats.codewords.items()))
    if "monte_carlo" in out:
        mcs = out["monte_carlo"]
        text += f"monte carlo mean {mcs['mean']:.6f} +- {mcs['stderr']:.6f} ({mcs['trials']} trials)\n"
    _emit(out, text, cfg.format)
    if residual > FAITHFUL_TOL:
        raise InternalConsistencyError(f"roundtrip residual {residual:.3e} exceeds {FAITHFUL_TOL}")
    return EXIT_OK


def cmd_fixtures(args) -> int:
    names = en.FIXTURE_NAMES if args.name == "all" else (args.name,)
    for name in names:
        if name not in en.FIXTURE_NAMES:
            raise InvalidEnsemble(f"unknown fixture {name!r}")
    os.makedirs(args.out, exist_ok=True)
    for name in names:
        path = os.path.join(args.out, f"{name}.json")
        en.write_ensemble(en.fixture(name), path)
        print(path)
    return EXIT_OK


COMMANDS = {"decompose": cmd_decompose, "rates": cmd_rates, "codec": cmd_codec, "fixtures": cmd_fixtures}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; 2 is reserved for decomposition failures
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DecompositionFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        payload = {"error": str(exc)}
        if exc.report is not None:
            payload["verification"] = exc.report.to_dict()
        sys.stdout.write(en.dumps_json(payload) + "\n")
        return EXIT_DECOMP
    except InternalConsistencyError as exc:
        print(f"internal assertion failed: {exc}", file=sys.stderr)
        return EXIT_ASSERT
    except (InvalidEnsemble, DimensionTooLarge, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        violations = getattr(exc, "violations", None)
        for v in violations or []:
            print(f"  {v.kind} (index {v.index}): {v.message}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
