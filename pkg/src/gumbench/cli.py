"""Command-line front-end.

Subcommands cover experiment execution (run-synthetic, run-blockwise),
the built-in verification suites (verify-unbiased, golden-check), and
offline reporting (memory-report, analyze-spectrum). Exit codes: 0 on
success, 2 for configuration problems, 3 for numerical blow-up, 4 when a
verification fails.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

from .errors import GumBenchError, InvalidInputError
from .metrics import spectrum_snapshot
from .optim import memory_footprint, monte_carlo_unbiasedness
from .runner import (
    STATUS_CONFIG_ERROR,
    STATUS_NUMERICAL_FAILURE,
    STATUS_OK,
    STATUS_VERIFICATION_FAILURE,
    ExperimentConfig,
    golden_trace_check,
    load_checkpoint,
    run_suite,
)

__all__ = ["main", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gumbench",
        description=(
            "Sampled low-rank orthogonalized-momentum optimizers on synthetic "
            "problems, with deterministic traces and verification suites."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_syn = sub.add_parser(
        "run-synthetic",
        help="run a configured method on the noisy linear regression problem",
    )
    run_syn.add_argument("--config", required=True, help="JSON experiment config")
    run_syn.add_argument("--seed", type=int, default=None, help="override master seed")
    run_syn.add_argument("--out", default=None, help="output directory")

    run_blk = sub.add_parser(
        "run-blockwise",
        help="run a configured method on the multi-block quadratic problem",
    )
    run_blk.add_argument("--config", required=True, help="JSON experiment config")
    run_blk.add_argument("--seed", type=int, default=None, help="override master seed")
    run_blk.add_argument("--out", default=None, help="output directory")

    verify = sub.add_parser(
        "verify-unbiased",
        help="Monte-Carlo check that sampled effective gradients average to G",
    )
    verify.add_argument("--trials", type=int, default=20, help="seeded (G, P, q) triples")
    verify.add_argument("--draws", type=int, default=100_000, help="draws per triple")
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--out", default=None, help="write the JSON report here too")

    mem = sub.add_parser(
        "memory-report",
        help="optimizer-state scalar counts per method for a list of block shapes",
    )
    mem.add_argument("--shapes", required=True, help="JSON file: list of [m, n] pairs")
    mem.add_argument("--rank", type=int, required=True, help="projected baseline rank")
    mem.add_argument(
        "--rank-prime", type=int, required=True, help="sampled method rank"
    )
    mem.add_argument(
        "--gamma",
        type=float,
        required=True,
        help="expected number of full-rank blocks per period",
    )
    mem.add_argument("--out", default=None, help="write the JSON report here too")

    spec = sub.add_parser(
        "analyze-spectrum",
        help="singular-value snapshots and stable ranks from a checkpoint",
    )
    spec.add_argument("--checkpoint", required=True, help="checkpoint directory")
    spec.add_argument(
        "--out", default=None, help="output directory (defaults to the checkpoint)"
    )

    golden = sub.add_parser(
        "golden-check",
        help="re-run a pinned config and compare its trace against a reference CSV",
    )
    golden.add_argument("--config", required=True, help="JSON experiment config")
    golden.add_argument("--reference", required=True, help="reference trace CSV")

    return parser


def _load_config(path: str) -> ExperimentConfig:
    return ExperimentConfig.from_json_file(path)


def _default_out(cfg: ExperimentConfig) -> Path:
    return Path("runs") / f"{cfg.method}_{cfg.config_hash()[:12]}"


def _cmd_run(args, expected_problem: str) -> int:
    cfg = _load_config(args.config)
    if cfg.problem != expected_problem:
        print(
            f"config error: this command runs {expected_problem}, "
            f"config declares {cfg.problem}",
            file=sys.stderr,
        )
        return STATUS_CONFIG_ERROR
    out = Path(args.out) if args.out else _default_out(cfg)
    summary = run_suite(cfg, out, seed_override=args.seed)
    for run in summary["runs"]:
        tag = "ok" if run["status"] == STATUS_OK else "blow-up"
        print(
            f"seed {run['seed']}: {tag}, final step {run['final_step']}, "
            f"loss {run['final_loss']:.6e} -> {out / run['trace_file']}"
        )
    return summary["status"]


def _cmd_verify_unbiased(args) -> int:
    if args.trials < 1 or args.draws < 2:
        print("config error: need --trials >= 1 and --draws >= 2", file=sys.stderr)
        return STATUS_CONFIG_ERROR
    reports = []
    for variant in (False, True):
        triples = monte_carlo_unbiasedness(
            n_triples=args.trials,
            n_draws=args.draws,
            seed=args.seed,
            compensated_variant=variant,
        )
        reports.append(
            {
                "variant": "compensated" if variant else "plain",
                "triples": triples,
                "all_passed": all(t["passed"] for t in triples),
                "worst_error_over_bound": max(
                    t["mean_error_fro"] / t["four_sigma_bound"] for t in triples
                ),
            }
        )
    report = {
        "trials": args.trials,
        "draws": args.draws,
        "seed": args.seed,
        "variants": reports,
        "all_passed": all(r["all_passed"] for r in reports),
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return STATUS_OK if report["all_passed"] else STATUS_VERIFICATION_FAILURE


def _read_shapes(path: str) -> list[tuple[int, int]]:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InvalidInputError(f"cannot read shapes file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"shapes file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, list) or not data:
        raise InvalidInputError("shapes file must hold a nonempty list of [m, n] pairs")
    shapes = []
    for entry in data:
        if (
            not isinstance(entry, (list, tuple))
            or len(entry) != 2
            or not all(isinstance(v, int) and v >= 1 for v in entry)
        ):
            raise InvalidInputError(f"bad shape entry {entry!r}; want [m, n] of ints >= 1")
        shapes.append((entry[0], entry[1]))
    return shapes


def _cmd_memory_report(args) -> int:
    shapes = _read_shapes(args.shapes)
    n_blocks = len(shapes)
    q = args.gamma / n_blocks
    if not 0.0 <= q <= 1.0:
        raise InvalidInputError(
            f"gamma={args.gamma} with {n_blocks} blocks gives q={q:.4g} outside [0, 1]"
        )
    blocks = []
    totals = {"full_training": 0, "galore": 0, "gum_expected": 0.0, "gum_worst_case": 0}
    for idx, (rows, cols) in enumerate(shapes):
        m, n = (rows, cols) if rows <= cols else (cols, rows)
        baseline = memory_footprint(m, n, args.rank, q)
        sampled = memory_footprint(m, n, args.rank_prime, q)
        entry = {
            "block": idx,
            "shape": [rows, cols],
            "full_training": baseline.full_training,
            "galore": baseline.galore,
            "gum_expected": sampled.gum_expected,
            "gum_worst_case": sampled.gum_worst_case,
        }
        # Break-even q exists only for square blocks with r' strictly inside (0, r].
        if m == n and args.rank_prime < args.rank and m > args.rank_prime:
            entry["break_even_q"] = (
                2.0 * (args.rank - args.rank_prime) / (m - args.rank_prime)
            )
        blocks.append(entry)
        totals["full_training"] += baseline.full_training
        totals["galore"] += baseline.galore
        totals["gum_expected"] += sampled.gum_expected
        totals["gum_worst_case"] += sampled.gum_worst_case
    report = {
        "rank": args.rank,
        "rank_prime": args.rank_prime,
        "gamma": args.gamma,
        "q": q,
        "blocks": blocks,
        "totals": totals,
        "gum_within_galore_budget": totals["gum_expected"] <= totals["galore"],
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return STATUS_OK


def _cmd_analyze_spectrum(args) -> int:
    blocks, manifest = load_checkpoint(args.checkpoint)
    out = Path(args.out) if args.out else Path(args.checkpoint)
    out.mkdir(parents=True, exist_ok=True)
    step = int(manifest.get("global_step", 0))
    spectra = []
    rank_rows = ["block_id,stable_rank"]
    for idx, b in enumerate(blocks):
        snap = spectrum_snapshot(b, block_id=idx, step=step)
        spectra.append(
            {
                "block_id": snap.block_id,
                "step": snap.step,
                "period_index": snap.period_index,
                "singular_values": list(snap.singular_values),
            }
        )
        svals = snap.singular_values
        if svals and svals[0] > 0.0:
            sq = [s * s for s in svals]
            rank_rows.append(f"{idx},{format(sum(sq) / sq[0], '.17g')}")
        else:
            rank_rows.append(f"{idx},")
    spectra_path = out / "spectra.json"
    with open(spectra_path, "w") as fh:
        json.dump(spectra, fh, indent=2, sort_keys=True)
        fh.write("\n")
    ranks_path = out / "stable_ranks.csv"
    ranks_path.write_text("\n".join(rank_rows) + "\n")
    print(f"{len(blocks)} blocks at step {step} -> {spectra_path}, {ranks_path}")
    return STATUS_OK


def _cmd_golden_check(args) -> int:
    cfg = _load_config(args.config)
    reference = Path(args.reference)
    if not reference.is_file():
        print(f"config error: no reference trace at {reference}", file=sys.stderr)
        return STATUS_CONFIG_ERROR
    seed = cfg.seeds[0]
    with tempfile.TemporaryDirectory(prefix="gumbench-golden-") as tmp:
        summary = run_suite(cfg, tmp, seed_override=seed)
        if summary["status"] != STATUS_OK:
            print("numerical failure while reproducing the trace", file=sys.stderr)
            return STATUS_NUMERICAL_FAILURE
        candidate = Path(tmp) / f"trace_seed_{seed}.csv"
        result = golden_trace_check(candidate, reference)
    if result.ok:
        print(f"golden check passed: {result.message}")
        return STATUS_OK
    print(f"golden check FAILED: {result.message}", file=sys.stderr)
    return STATUS_VERIFICATION_FAILURE


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run-synthetic":
            return _cmd_run(args, "noisy_linear_regression")
        if args.command == "run-blockwise":
            return _cmd_run(args, "multi_block_quadratic")
        if args.command == "verify-unbiased":
            return _cmd_verify_unbiased(args)
        if args.command == "memory-report":
            return _cmd_memory_report(args)
        if args.command == "analyze-spectrum":
            return _cmd_analyze_spectrum(args)
        if args.command == "golden-check":
            return _cmd_golden_check(args)
    except GumBenchError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return STATUS_CONFIG_ERROR
    parser.error(f"unknown command {args.command!r}")
    return STATUS_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
