"""Run diagnostics: projection residuals, spectra, and trace bookkeeping.

Also owns the delimited trace format. One record per logged step, one CSV
row per record; fields that are undefined at a given step (chi before any
projector exists, stable rank of all-zero weights) stay empty rather than
being faked with sentinels.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple, Optional, Sequence

import numpy as np

from .errors import InvalidInputError
from .linalg import as_matrix, stable_rank, svd_thin

if TYPE_CHECKING:
    from .optim import BlockState

__all__ = [
    "TraceRecord",
    "SpectrumHistogram",
    "chi_residual",
    "chi_aggregate",
    "spectrum_snapshot",
    "StableRankSummary",
    "stable_rank_trace",
    "GradNormSummary",
    "grad_norm_trace",
    "TRACE_CSV_FIELDS",
    "write_trace_csv",
    "read_trace_csv",
]


@dataclass(frozen=True)
class TraceRecord:
    """One logged step of an optimization run.

    ``assignment_full`` holds one flag per block, True when the block ran
    the compensated full-rank update during the current period.
    ``stable_rank_skipped`` lists blocks whose weights were all zero, which
    have no stable rank.
    """

    step: int
    loss: float
    grad_trace_norm: float
    chi_residual: Optional[float]
    stable_ranks: tuple[float, ...]
    stable_rank_skipped: tuple[int, ...]
    assignment_full: tuple[bool, ...]
    memory_scalars: int

    @property
    def stable_rank_mean(self) -> Optional[float]:
        if not self.stable_ranks:
            return None
        return float(np.mean(self.stable_ranks))

    @property
    def assignment_bits(self) -> str:
        return "".join("1" if f else "0" for f in self.assignment_full)


@dataclass(frozen=True)
class SpectrumHistogram:
    """Singular values of one block's weights at one point in a run."""

    block_id: int
    singular_values: tuple[float, ...]
    step: int
    period_index: int

    def __post_init__(self) -> None:
        vals = np.asarray(self.singular_values)
        if vals.size and (np.any(vals < 0) or np.any(np.diff(vals) > 0)):
            raise InvalidInputError(
                "singular values must be nonnegative and nonincreasing"
            )


def chi_residual(g_unprojected, g_projected) -> float:
    """Relative error between a gradient and its projected version.

    ||G_u - G_p||_F / ||G_u||_F. For an orthogonal projection the value
    lies in [0, 1]; 0 means the projection kept everything.
    """
    gu = as_matrix(g_unprojected, name="unprojected gradient")
    gp = as_matrix(g_projected, name="projected gradient")
    if gu.shape != gp.shape:
        raise InvalidInputError(
            f"shape mismatch: {gu.shape} vs {gp.shape}"
        )
    denom = float(np.linalg.norm(gu))
    if denom == 0.0:
        raise InvalidInputError("chi is undefined for a zero unprojected gradient")
    return float(np.linalg.norm(gu - gp) / denom)


def chi_aggregate(pairs: Sequence[tuple[np.ndarray, np.ndarray]]) -> float:
    """chi over several blocks, treating them as one stacked gradient."""
    num = 0.0
    den = 0.0
    for gu, gp in pairs:
        diff = gu - gp
        num += float(np.sum(diff * diff))
        den += float(np.sum(gu * gu))
    if den == 0.0:
        raise InvalidInputError("chi is undefined for zero unprojected gradients")
    return float(np.sqrt(num / den))


def spectrum_snapshot(state: "BlockState", block_id: int, step: int) -> SpectrumHistogram:
    """Singular values of the block's current weights, descending."""
    s = svd_thin(state.weights).s
    return SpectrumHistogram(
        block_id=block_id,
        singular_values=tuple(float(x) for x in s),
        step=step,
        period_index=state.period_index,
    )


class StableRankSummary(NamedTuple):
    ranks: tuple[float, ...]
    mean: Optional[float]
    skipped: tuple[int, ...]


def stable_rank_trace(states: Sequence["BlockState"]) -> StableRankSummary:
    """Per-block stable ranks plus their mean; zero blocks are skipped."""
    ranks = []
    skipped = []
    for i, state in enumerate(states):
        if not state.weights.any():
            skipped.append(i)
            continue
        ranks.append(stable_rank(state.weights))
    mean = float(np.mean(ranks)) if ranks else None
    return StableRankSummary(tuple(ranks), mean, tuple(skipped))


class GradNormSummary(NamedTuple):
    min_so_far: np.ndarray
    final: float


def grad_norm_trace(trace: Sequence[TraceRecord]) -> GradNormSummary:
    """Running minimum of the gradient trace norm along a trace."""
    if not trace:
        raise InvalidInputError("grad_norm_trace needs a nonempty trace")
    norms = np.asarray([rec.grad_trace_norm for rec in trace], dtype=np.float64)
    mins = np.minimum.accumulate(norms)
    return GradNormSummary(min_so_far=mins, final=float(mins[-1]))


TRACE_CSV_FIELDS = (
    "step",
    "loss",
    "grad_trace_norm",
    "chi_residual",
    "stable_rank_mean",
    "memory_scalars",
    "assignment_bits",
)


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else format(x, ".17g")


def write_trace_csv(path, records: Sequence[TraceRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_CSV_FIELDS)
        for rec in records:
            writer.writerow(
                [
                    str(rec.step),
                    _fmt(rec.loss),
                    _fmt(rec.grad_trace_norm),
                    _fmt(rec.chi_residual),
                    _fmt(rec.stable_rank_mean),
                    str(rec.memory_scalars),
                    rec.assignment_bits,
                ]
            )


def read_trace_csv(path) -> list[dict]:
    """Parse a trace CSV into dicts; empty optional fields become None."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != TRACE_CSV_FIELDS:
            raise InvalidInputError(
                f"unexpected trace header in {path}: {reader.fieldnames}"
            )
        for raw in reader:
            rows.append(
                {
                    "step": int(raw["step"]),
                    "loss": float(raw["loss"]),
                    "grad_trace_norm": float(raw["grad_trace_norm"]),
                    "chi_residual": (
                        float(raw["chi_residual"]) if raw["chi_residual"] else None
                    ),
                    "stable_rank_mean": (
                        float(raw["stable_rank_mean"])
                        if raw["stable_rank_mean"]
                        else None
                    ),
                    "memory_scalars": int(raw["memory_scalars"]),
                    "assignment_bits": raw["assignment_bits"],
                }
            )
    return rows
