"""Batch command-line front end.

Subcommands: ``generate`` (seeded random problems with exact spectra),
``solve`` (run the sweep solver, emit a JSON report plus CSV and a vector
sidecar), ``oracle`` (brute-force enumeration of the exact tuples),
``compare`` (match a solve report against an oracle table), and ``bench``
(phase timings across a parameter range, with and without operator
rounding).

Exit codes: 0 success (an empty found list is success), 2 validation
error, 3 numerical failure, 4 resource-cap refusal. Heavy imports happen
after argument parsing so ``--threads`` can cap the BLAS pools.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttmep",
        description="Tensor-train subspace solver for multiparameter eigenvalue problems",
    )
    parser.add_argument(
        "--threads", type=int, default=None, help="upper bound on BLAS threads"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="write a seeded random problem file")
    p_gen.add_argument("--m", type=int, required=True, help="number of parameters")
    p_gen.add_argument("--n", type=int, required=True, help="matrix size")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True, help="output problem JSON path")

    p_solve = sub.add_parser("solve", help="run the sweep solver on a problem file")
    p_solve.add_argument("problem", help="problem JSON path")
    p_solve.add_argument("--target", type=float, default=0.0)
    p_solve.add_argument("--out", required=True, help="output base path (or .json)")
    _add_config_flags(p_solve)

    p_oracle = sub.add_parser("oracle", help="enumerate exact tuples of a generated problem")
    p_oracle.add_argument("problem", help="problem JSON path (with generator metadata)")
    p_oracle.add_argument("--target", type=float, default=0.0)
    p_oracle.add_argument("--how-many", type=int, default=20)
    p_oracle.add_argument("--out", required=True, help="output CSV path")

    p_cmp = sub.add_parser("compare", help="match solve results against an oracle table")
    p_cmp.add_argument("report", help="solve report JSON path")
    p_cmp.add_argument("oracle", help="oracle CSV path")
    p_cmp.add_argument("--tol", type=float, default=1e-6)
    p_cmp.add_argument("--wanted", type=int, default=20, help="top oracle rows to grade")
    p_cmp.add_argument("--out", default=None, help="output base path for the match table")

    p_bench = sub.add_parser("bench", help="phase timings over a parameter range")
    group = p_bench.add_mutually_exclusive_group(required=True)
    group.add_argument("--m-range", help="A:B inclusive range of m at fixed --n")
    group.add_argument("--n-range", help="A:B:STEP range of n at fixed --m")
    p_bench.add_argument("--m", type=int, default=4, help="fixed m for --n-range")
    p_bench.add_argument("--n", type=int, default=10, help="fixed n for --m-range")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--sweeps", type=int, default=1)
    p_bench.add_argument("--out", required=True, help="output CSV path")
    return parser


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--b", type=int, default=None, help="block size")
    p.add_argument("--sweeps", type=int, default=None)
    p.add_argument("--kick", type=int, default=None, help="random enrichment columns")
    p.add_argument("--max-rank", type=int, default=None)
    p.add_argument("--eps", type=float, default=None, help="residual tolerance")
    p.add_argument("--eps1", type=float, default=None, help="projected-residual walk tolerance")
    p.add_argument("--xi", type=float, default=None, help="duplicate-rejection threshold")
    p.add_argument("--cos-threshold", type=float, default=None)
    p.add_argument("--round-tol", type=float, default=None, help="operator rounding tolerance")
    p.add_argument("--no-round", action="store_true", help="skip operator rounding")
    p.add_argument(
        "--ritz-rule",
        choices=("positive-real-part", "positive-imag-part"),
        default=None,
    )
    p.add_argument("--seed", type=int, default=None)


def _config_from_args(args):
    from .solver import SolverConfig

    kw = {}
    mapping = {
        "b": "block_size",
        "sweeps": "sweeps",
        "kick": "kick",
        "max_rank": "max_rank",
        "eps": "eps",
        "eps1": "eps1",
        "xi": "xi",
        "cos_threshold": "cos_threshold",
        "ritz_rule": "ritz_rule",
        "seed": "seed",
    }
    for arg_name, field_name in mapping.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            kw[field_name] = value
    if getattr(args, "no_round", False):
        kw["delta_round_tol"] = None
    elif getattr(args, "round_tol", None) is not None:
        kw["delta_round_tol"] = args.round_tol
    return SolverConfig(**kw)


def _out_base(path: str) -> Path:
    p = Path(path)
    return p.with_suffix("") if p.suffix == ".json" else p


def cmd_generate(args) -> int:
    from .mep_problem import generate_random_mep, save_problem

    g = generate_random_mep(args.m, args.n, args.seed)
    save_problem(args.out, g)
    print(f"wrote {args.out} (m={args.m}, n={args.n}, seed={args.seed})")
    return 0


def cmd_solve(args) -> int:
    from .mep_problem import GeneratedProblem, load_problem
    from .solver import solve
    from .tt_core import TTVector, tt_to_json

    loaded = load_problem(args.problem)
    prob = loaded.problem if isinstance(loaded, GeneratedProblem) else loaded
    config = _config_from_args(args)
    tuples, report = solve(prob, target=args.target, config=config)
    base = _out_base(args.out)
    base.parent.mkdir(parents=True, exist_ok=True)
    report["problem"] = str(args.problem)
    report["vectors_file"] = str(base) + ".vectors.json"
    if not tuples:
        report["warnings"] = ["no converged tuples"]
    Path(str(base) + ".json").write_text(json.dumps(report, indent=1) + "\n")
    with open(str(base) + ".csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["rank_index", "lambda_m_real", "lambda_m_imag", "residual", "found_flag"]
        )
        for i, t in enumerate(tuples):
            writer.writerow(
                [i, repr(float(t.lam[-1].real)), repr(float(t.lam[-1].imag)), repr(float(t.residual_norm)), 1]
            )
    sidecar = {
        "tuples": [
            {
                "index": i,
                "real": tt_to_json(
                    TTVector([v.real.reshape(1, -1, 1).copy() for v in t.vectors])
                ),
                "imag": tt_to_json(
                    TTVector([v.imag.reshape(1, -1, 1).copy() for v in t.vectors])
                ),
            }
            for i, t in enumerate(tuples)
        ]
    }
    Path(report["vectors_file"]).write_text(json.dumps(sidecar) + "\n")
    if not tuples:
        print("warning: no converged tuples", file=sys.stderr)
    print(f"found {len(tuples)} tuples; report at {base}.json")
    return 0


def cmd_oracle(args) -> int:
    from .mep_problem import GeneratedProblem, load_problem, oracle_eigenvalues

    loaded = load_problem(args.problem)
    if not isinstance(loaded, GeneratedProblem):
        raise ValueError("oracle needs a problem file with generator metadata")
    t0 = time.perf_counter()
    tuples, skipped = oracle_eigenvalues(loaded, args.how_many, target=args.target)
    elapsed = time.perf_counter() - t0
    m = loaded.m
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["rank_index", "lambda_m_real", "lambda_m_imag", "residual"]
        for j in range(1, m + 1):
            header += [f"lambda_{j}_real", f"lambda_{j}_imag"]
        writer.writerow(header)
        for i, t in enumerate(tuples):
            row = [i, repr(float(t.lam[-1].real)), repr(float(t.lam[-1].imag)), repr(float(t.residual_norm))]
            for j in range(m):
                row += [repr(float(t.lam[j].real)), repr(float(t.lam[j].imag))]
            writer.writerow(row)
    print(
        f"enumerated {loaded.n ** m} systems in {elapsed:.2f}s, "
        f"skipped {skipped} singular, wrote {len(tuples)} tuples to {args.out}"
    )
    return 0


def cmd_compare(args) -> int:
    report = json.loads(Path(args.report).read_text())
    found = [complex(lam[-1][0], lam[-1][1]) for lam in
             (t["lambda"] for t in report["tuples"])]
    oracle_rows = []
    with open(args.oracle, newline="") as fh:
        for row in csv.DictReader(fh):
            oracle_rows.append(complex(float(row["lambda_m_real"]), float(row["lambda_m_imag"])))
    wanted = oracle_rows[: args.wanted]
    tol = args.tol
    matched_flags = []
    for w in wanted:
        matched_flags.append(any(abs(w - f) <= tol for f in found))
    spurious = sum(1 for f in found if not any(abs(f - o) <= tol for o in oracle_rows))
    summary = {
        "wanted_considered": len(wanted),
        "found_among_wanted": int(sum(matched_flags)),
        "spurious": int(spurious),
        "tol": tol,
        "n_found": len(found),
    }
    if args.out:
        base = _out_base(args.out)
        with open(str(base) + ".csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["rank_index", "lambda_m_real", "lambda_m_imag", "found_flag"])
            for i, (w, flag) in enumerate(zip(wanted, matched_flags)):
                writer.writerow([i, repr(float(w.real)), repr(float(w.imag)), int(flag)])
        Path(str(base) + ".json").write_text(json.dumps(summary, indent=1) + "\n")
    print(json.dumps(summary))
    return 0


def _sampled_lambda_m_min(g, samples: int = 20_000, seed: int = 0) -> float:
    """Approximate min real lambda_m from a random subsample of the spectra.

    Enough for choosing an exteriorizing shift when full enumeration (n^m
    systems) is out of reach.
    """
    import numpy as np

    m, n = g.m, g.n
    rng = np.random.default_rng(seed)
    count = min(samples, n**m)
    idx = rng.integers(0, n, size=(count, m))
    a_spec = np.stack(g.spectrum_a)
    b_spec = np.stack([np.stack(row) for row in g.spectrum_b])
    rows = np.arange(m)
    mats = b_spec[
        rows[np.newaxis, :, np.newaxis],
        rows[np.newaxis, np.newaxis, :],
        idx[:, :, np.newaxis],
    ]
    rhs = a_spec[rows[np.newaxis, :], idx]
    lam = np.linalg.solve(mats, rhs[..., np.newaxis])[..., 0]
    finite = np.all(np.isfinite(lam), axis=1)
    return float(lam[finite, m - 1].real.min())


def cmd_bench(args) -> int:
    from .mep_problem import generate_random_mep
    from .solver import SolverConfig, solve

    if args.m_range:
        lo, hi = (int(x) for x in args.m_range.split(":"))
        params = [("m", m, m, args.n) for m in range(lo, hi + 1)]
    else:
        parts = [int(x) for x in args.n_range.split(":")]
        step = parts[2] if len(parts) > 2 else 1
        params = [("n", n, args.m, n) for n in range(parts[0], parts[1] + 1, step)]
    from .delta_builder import shift_generated

    rows = []
    warnings = []
    for label, value, m, n in params:
        g = generate_random_mep(m, n, args.seed)
        # shift so the searched lambda_m sit at positive values (exterior target)
        shifted = shift_generated(
            g, -_sampled_lambda_m_min(g, seed=args.seed) + 1.0
        ).problem
        for rounded in (False, True):
            config = SolverConfig(
                sweeps=args.sweeps,
                seed=args.seed,
                delta_round_tol=1e-13 if rounded else None,
            )
            t0 = time.perf_counter()
            _tuples, report = solve(shifted, target=0.0, config=config)
            total = time.perf_counter() - t0
            phase_sums: dict[str, float] = {}
            for step_rec in report["steps"]:
                for phase, ms in step_rec["phase_ms"].items():
                    phase_sums[phase] = phase_sums.get(phase, 0.0) + ms / 1e3
            for phase, seconds in phase_sums.items():
                rows.append((value, phase, rounded, seconds))
            rows.append((value, "total", rounded, total))
        by_phase = {
            (rnd, phase): sec for (val, phase, rnd, sec) in rows if val == value
        }
        if value >= 8 and by_phase.get((True, "projection"), 0.0) > by_phase.get(
            (False, "projection"), 0.0
        ):
            warnings.append(
                f"{label}={value}: rounding did not speed up projection formation"
            )
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["param", "phase", "rounded", "seconds"])
        for value, phase, rounded, seconds in rows:
            writer.writerow([value, phase, int(rounded), repr(float(seconds))])
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"wrote {len(rows)} timing rows to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            parser.error("--threads must be positive")
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, str(args.threads))
    handlers = {
        "generate": cmd_generate,
        "solve": cmd_solve,
        "oracle": cmd_oracle,
        "compare": cmd_compare,
        "bench": cmd_bench,
    }
    from numpy.linalg import LinAlgError

    from .dense_kernels import SingularPencilError
    from .mep_problem import SingularRayleighError
    from .tt_core import CapExceededError, RankCapError

    try:
        return handlers[args.command](args)
    except (CapExceededError, RankCapError) as exc:
        print(f"resource cap: {exc}", file=sys.stderr)
        return 4
    except (LinAlgError, SingularPencilError, SingularRayleighError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
