"""Orthogonalized-momentum optimizers with sampled low-rank projection.

Four update families share one set of per-block states:

* ``muon_step``: full-parameter momentum followed by a matrix-sign step.
* ``gum_low_rank_step``: momentum kept in a projected r-dimensional space,
  scaled by 1/(1-q) so the two sampled branches stay unbiased in expectation.
* ``gum_full_rank_step``: the compensated complement, momentum on
  (1/q)(G - P P^T G).
* ``unbiased_paradigm_step``: the same dispatch for an arbitrary projector
  rule and base optimizer, provided the projector has orthonormal columns
  and the base update commutes with left-multiplication by it.

``run_period`` drives one refresh period: momentum restart, fresh gradient,
projector from its SVD, per-block Bernoulli(q) full-rank assignment, then K
inner iterations. Blocks are oriented so the projected side is the shorter
one; weights are transposed back whenever they leave the optimizer.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import (
    InvalidInputError,
    InvalidProjectorError,
    InvalidStateError,
)
from .linalg import (
    NEWTON_SCHULZ_DEFAULT,
    NewtonSchulzCoeffs,
    as_matrix,
    msign_exact,
    newton_schulz,
    svd_thin,
    trace_norm,
)
from .metrics import TraceRecord, chi_aggregate, stable_rank_trace

__all__ = [
    "Assignment",
    "GumConfig",
    "Projector",
    "BlockState",
    "TraceHooks",
    "PeriodResult",
    "assemble_record",
    "init_block_state",
    "external_weights",
    "orient_like_block",
    "muon_step",
    "galore_projector",
    "sample_assignments",
    "gum_low_rank_step",
    "gum_full_rank_step",
    "run_period",
    "unbiased_paradigm_step",
    "MemoryReport",
    "memory_footprint",
    "state_scalar_count",
    "monte_carlo_unbiasedness",
]


class Assignment(enum.Enum):
    LOW_RANK = "low_rank"
    FULL_RANK = "full_rank"


@dataclass(frozen=True)
class GumConfig:
    """Hyperparameters shared by every update family.

    ``full_rank_layers_gamma`` only sets the sampling probability
    q = gamma / n_blocks; blocks are assigned independently, not in
    exactly-gamma batches, so fractional values are legal (a single-block
    problem at q = 0.5 needs gamma = 0.5). ``compensated_variant`` switches
    the full-rank
    momentum increment to (1/q)(G - (1-q) P P^T G) and drops the low-rank
    1/(1-q) scaling, which keeps the expectation unbiased and recovers the
    plain full-parameter update at q = 1. The three optional problem
    constants are bookkeeping inputs for convergence-trend reports; nothing
    estimates them.
    """

    period_k: int
    rank_r: int
    full_rank_layers_gamma: float
    n_blocks: int
    momentum_beta: float = 0.95
    step_size_eta: float = 0.01
    compensated_variant: bool = False
    use_damping: bool = False
    msign_mode: str = "newton_schulz"
    ns_coeffs: NewtonSchulzCoeffs = NEWTON_SCHULZ_DEFAULT
    smoothness_l_op: Optional[float] = None
    initial_gap_delta: Optional[float] = None
    noise_trace_norm: Optional[float] = None

    def __post_init__(self) -> None:
        if self.period_k < 1:
            raise InvalidInputError("period_k must be >= 1")
        if self.rank_r < 1:
            raise InvalidInputError("rank_r must be >= 1")
        if self.n_blocks < 1:
            raise InvalidInputError("n_blocks must be >= 1")
        if not 0 <= self.full_rank_layers_gamma <= self.n_blocks:
            raise InvalidInputError(
                "full_rank_layers_gamma must lie in [0, n_blocks]"
            )
        if not 0.0 <= self.momentum_beta < 1.0:
            raise InvalidInputError("momentum_beta must lie in [0, 1)")
        if self.step_size_eta <= 0.0:
            raise InvalidInputError("step_size_eta must be positive")
        if self.msign_mode not in ("newton_schulz", "exact_oracle"):
            raise InvalidInputError(f"unknown msign_mode {self.msign_mode!r}")

    @property
    def q(self) -> float:
        return self.full_rank_layers_gamma / self.n_blocks


@dataclass(frozen=True)
class Projector:
    """An m x r matrix with orthonormal columns."""

    p: np.ndarray

    def __post_init__(self) -> None:
        p = as_matrix(self.p, name="projector")
        gram_err = np.linalg.norm(p.T @ p - np.eye(p.shape[1]))
        if gram_err > 1e-8:
            raise InvalidProjectorError(
                f"projector columns are not orthonormal (residual {gram_err:.3e})"
            )
        object.__setattr__(self, "p", p)

    @property
    def rank(self) -> int:
        return int(self.p.shape[1])


@dataclass(frozen=True)
class BlockState:
    """Optimizer state of one parameter block, stored with rows <= cols.

    ``transposed`` records whether the block was flipped on ingestion; use
    :func:`external_weights` to read weights back in their original layout.
    Momentum is (r, n) under a low-rank assignment and (m, n) under a
    full-rank one, and is zeroed at every period boundary.
    """

    weights: np.ndarray
    momentum: np.ndarray
    projector: Optional[Projector]
    assignment: Assignment
    period_index: int = 0
    transposed: bool = False


def init_block_state(weights) -> BlockState:
    """Wrap raw weights, transposing tall blocks so rows <= cols."""
    w = as_matrix(weights, name="weights")
    transposed = w.shape[0] > w.shape[1]
    if transposed:
        w = w.T.copy()
    return BlockState(
        weights=w,
        momentum=np.zeros_like(w),
        projector=None,
        assignment=Assignment.FULL_RANK,
        period_index=0,
        transposed=transposed,
    )


def external_weights(state: BlockState) -> np.ndarray:
    """Weights in the orientation the problem defined them in."""
    return state.weights.T if state.transposed else state.weights


def orient_like_block(state: BlockState, grad) -> np.ndarray:
    """Bring a problem-orientation gradient into the block's layout."""
    g = as_matrix(grad, name="gradient")
    return g.T if state.transposed else g


def _msign(m: np.ndarray, cfg: GumConfig) -> np.ndarray:
    # Zero momentum must produce a zero step in either mode.
    if not m.any():
        return np.zeros_like(m)
    if cfg.msign_mode == "exact_oracle":
        return msign_exact(m)
    return newton_schulz(m, cfg.ns_coeffs)


def muon_step(state: BlockState, grad, cfg: GumConfig) -> BlockState:
    """Full-parameter baseline: momentum then a matrix-sign descent step."""
    g = as_matrix(grad, name="gradient")
    if g.shape != state.weights.shape:
        raise InvalidInputError(
            f"gradient shape {g.shape} does not match weights {state.weights.shape}"
        )
    if state.momentum.shape != state.weights.shape:
        raise InvalidStateError("muon_step requires full-shape momentum")
    damp = (1.0 - cfg.momentum_beta) if cfg.use_damping else 1.0
    momentum = cfg.momentum_beta * state.momentum + damp * g
    weights = state.weights - cfg.step_size_eta * _msign(momentum, cfg)
    return replace(state, weights=weights, momentum=momentum)


def galore_projector(grad, r: int) -> Projector:
    """Top-r left singular vectors of the gradient, deterministic signs."""
    g = as_matrix(grad, name="gradient")
    if not 1 <= r <= min(g.shape):
        raise InvalidInputError(
            f"rank {r} out of range for gradient of shape {g.shape}"
        )
    return Projector(svd_thin(g).u[:, :r])


def sample_assignments(
    n_blocks: int,
    q: float,
    rng: np.random.Generator,
    exact_gamma: Optional[int] = None,
) -> list[Assignment]:
    """Independent Bernoulli(q) full-rank draws, one per block.

    ``exact_gamma`` switches to without-replacement sampling of exactly that
    many full-rank blocks, for hard memory caps. Off by default because the
    unbiasedness argument needs the independent form.
    """
    if n_blocks < 1:
        raise InvalidInputError("n_blocks must be >= 1")
    if not 0.0 <= q <= 1.0:
        raise InvalidInputError("q must lie in [0, 1]")
    if exact_gamma is not None:
        if not 0 <= exact_gamma <= n_blocks:
            raise InvalidInputError("exact_gamma must lie in [0, n_blocks]")
        chosen = set(rng.choice(n_blocks, size=exact_gamma, replace=False).tolist())
        return [
            Assignment.FULL_RANK if i in chosen else Assignment.LOW_RANK
            for i in range(n_blocks)
        ]
    draws = rng.random(n_blocks)
    return [
        Assignment.FULL_RANK if d < q else Assignment.LOW_RANK for d in draws
    ]


def gum_low_rank_step(state: BlockState, grad, cfg: GumConfig) -> BlockState:
    """Projected update: R <- beta R + scale * P^T G, step along P msign(R).

    scale is 1/(1-q), or exactly 1 under the compensated variant.
    """
    if state.assignment is not Assignment.LOW_RANK:
        raise InvalidStateError("block is not assigned a low-rank update")
    if state.projector is None:
        raise InvalidStateError("low-rank update requires a projector")
    g = as_matrix(grad, name="gradient")
    if g.shape != state.weights.shape:
        raise InvalidInputError(
            f"gradient shape {g.shape} does not match weights {state.weights.shape}"
        )
    q = cfg.q
    if q >= 1.0:
        raise InvalidStateError("a low-rank assignment is impossible at q = 1")
    p = state.projector.p
    scale = 1.0 if cfg.compensated_variant else 1.0 / (1.0 - q)
    damp = (1.0 - cfg.momentum_beta) if cfg.use_damping else 1.0
    increment = scale * (p.T @ g)
    momentum = cfg.momentum_beta * state.momentum + damp * increment
    weights = state.weights - cfg.step_size_eta * (p @ _msign(momentum, cfg))
    return replace(state, weights=weights, momentum=momentum)


def gum_full_rank_step(state: BlockState, grad, cfg: GumConfig) -> BlockState:
    """Compensated update on the projector's complement.

    R <- beta R + (1/q)(G - P P^T G); with the compensated variant the
    retained term is weighted by (1-q), so q = 1 degenerates to plain
    full-parameter momentum on G (computed without touching the projector,
    which keeps the reduction exact to the last bit).
    """
    if state.assignment is not Assignment.FULL_RANK:
        raise InvalidStateError("block is not assigned a full-rank update")
    g = as_matrix(grad, name="gradient")
    if g.shape != state.weights.shape:
        raise InvalidInputError(
            f"gradient shape {g.shape} does not match weights {state.weights.shape}"
        )
    q = cfg.q
    if q <= 0.0:
        raise InvalidStateError("a full-rank assignment is impossible at q = 0")
    damp = (1.0 - cfg.momentum_beta) if cfg.use_damping else 1.0
    if cfg.compensated_variant and q == 1.0:
        increment = g
    else:
        if state.projector is None:
            raise InvalidStateError("compensated update requires a projector")
        p = state.projector.p
        inv_q = 1.0 / q
        if cfg.compensated_variant:
            increment = inv_q * (g - (1.0 - q) * (p @ (p.T @ g)))
        else:
            increment = inv_q * (g - p @ (p.T @ g))
    momentum = cfg.momentum_beta * state.momentum + damp * increment
    weights = state.weights - cfg.step_size_eta * _msign(momentum, cfg)
    return replace(state, weights=weights, momentum=momentum)


GradientOracle = Callable[[list[np.ndarray], np.random.Generator], list[np.ndarray]]


@dataclass(frozen=True)
class TraceHooks:
    """Problem-side callbacks used to assemble trace records.

    ``loss_fn`` and ``mean_grad_fn`` receive weights in problem orientation.
    The deterministic gradient (not the drawn one) feeds the trace-norm
    column so the record reflects true progress rather than noise.
    """

    loss_fn: Callable[[list[np.ndarray]], float]
    mean_grad_fn: Callable[[list[np.ndarray]], list[np.ndarray]]
    record_cadence: int = 1
    chi_cadence: int = 20
    loss_abort: float = 1e12


class PeriodResult(NamedTuple):
    blocks: list[BlockState]
    records: list[TraceRecord]
    aborted: bool


def assemble_record(
    step: int,
    blocks: Sequence[BlockState],
    hooks: TraceHooks,
    loss: float,
    stoch_grads: Optional[list[np.ndarray]],
) -> TraceRecord:
    """Build one trace row from the current block states.

    chi is only defined once every block carries a projector; the drawn
    gradients (block orientation) feed it, while the trace-norm column uses
    the noise-free gradient at the current weights.
    """
    ext = [external_weights(b) for b in blocks]
    mean_grads = hooks.mean_grad_fn(ext)
    grad_trace = float(sum(trace_norm(g) for g in mean_grads))
    chi = None
    if (
        stoch_grads is not None
        and hooks.chi_cadence > 0
        and step % hooks.chi_cadence == 0
        and all(b.projector is not None for b in blocks)
    ):
        pairs = []
        for b, g in zip(blocks, stoch_grads):
            p = b.projector.p
            pairs.append((g, p @ (p.T @ g)))
        chi = chi_aggregate(pairs)
    ranks = stable_rank_trace(blocks)
    return TraceRecord(
        step=step,
        loss=loss,
        grad_trace_norm=grad_trace,
        chi_residual=chi,
        stable_ranks=ranks.ranks,
        stable_rank_skipped=ranks.skipped,
        assignment_full=tuple(
            b.assignment is Assignment.FULL_RANK for b in blocks
        ),
        memory_scalars=state_scalar_count(blocks),
    )


def run_period(
    blocks: Sequence[BlockState],
    oracle: GradientOracle,
    cfg: GumConfig,
    grad_rng: np.random.Generator,
    assignment_rng: np.random.Generator,
    *,
    period_index: int = 0,
    global_step: int = 0,
    hooks: Optional[TraceHooks] = None,
) -> PeriodResult:
    """One refresh period of the sampled optimizer.

    Restarts momentum, draws the period-start gradient (which doubles as the
    k = 0 inner gradient), refreshes each projector from its SVD, resamples
    assignments, then runs K dispatched inner iterations. Gradient and
    assignment randomness come from separate streams so that changing one
    never perturbs the other.
    """
    if len(blocks) != cfg.n_blocks:
        raise InvalidInputError(
            f"got {len(blocks)} blocks for a config declaring {cfg.n_blocks}"
        )
    q = cfg.q
    ext = [external_weights(b) for b in blocks]
    grads0 = oracle(ext, grad_rng)
    projectors = []
    for b, g in zip(blocks, grads0):
        oriented = orient_like_block(b, g)
        if cfg.rank_r > min(oriented.shape):
            raise InvalidInputError(
                f"rank_r={cfg.rank_r} exceeds min dimension of block {oriented.shape}"
            )
        projectors.append(galore_projector(oriented, cfg.rank_r))
    assignments = sample_assignments(cfg.n_blocks, q, assignment_rng)

    current = []
    for b, proj, assign in zip(blocks, projectors, assignments):
        m, n = b.weights.shape
        mom_shape = (cfg.rank_r, n) if assign is Assignment.LOW_RANK else (m, n)
        current.append(
            replace(
                b,
                momentum=np.zeros(mom_shape),
                projector=proj,
                assignment=assign,
                period_index=period_index,
            )
        )

    records: list[TraceRecord] = []
    for k in range(cfg.period_k):
        if k == 0:
            step_grads = grads0
        else:
            step_grads = oracle([external_weights(b) for b in current], grad_rng)
        stepped = []
        for b, g in zip(current, step_grads):
            oriented = orient_like_block(b, g)
            if b.assignment is Assignment.LOW_RANK:
                stepped.append(gum_low_rank_step(b, oriented, cfg))
            else:
                stepped.append(gum_full_rank_step(b, oriented, cfg))
        current = stepped
        step = global_step + k + 1
        if hooks is not None:
            loss = hooks.loss_fn([external_weights(b) for b in current])
            if step % hooks.record_cadence == 0:
                records.append(
                    assemble_record(
                        step,
                        current,
                        hooks,
                        loss,
                        [orient_like_block(b, g) for b, g in zip(current, step_grads)],
                    )
                )
            if loss > hooks.loss_abort:
                return PeriodResult(current, records, True)
    return PeriodResult(current, records, False)


ProjectorRule = Callable[[np.ndarray, np.random.Generator], object]
BaseOptimizer = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


def unbiased_paradigm_step(
    state: BlockState,
    grad,
    projector_rule: ProjectorRule,
    base_optimizer: BaseOptimizer,
    q: float,
    rng: np.random.Generator,
    *,
    step_size_eta: float,
) -> BlockState:
    """Generic sampled-debiasing dispatch for any commuting base optimizer.

    ``projector_rule(grad, rng)`` may return a :class:`Projector` or a raw
    array, checked here for orthonormal columns. ``base_optimizer`` maps
    (momentum_state, effective_gradient) to (new_state, direction); with a
    momentum-plus-msign base and an SVD projector rule this reproduces the
    dedicated low/full-rank steps bit for bit.
    """
    g = as_matrix(grad, name="gradient")
    if g.shape != state.weights.shape:
        raise InvalidInputError(
            f"gradient shape {g.shape} does not match weights {state.weights.shape}"
        )
    if not 0.0 <= q <= 1.0:
        raise InvalidInputError("q must lie in [0, 1]")
    raw = projector_rule(g, rng)
    p = raw.p if isinstance(raw, Projector) else as_matrix(raw, name="projector")
    gram_err = np.linalg.norm(p.T @ p - np.eye(p.shape[1]))
    if gram_err > 1e-6:
        raise InvalidProjectorError(
            f"projector rule output is not orthonormal (residual {gram_err:.3e})"
        )
    if state.assignment is Assignment.FULL_RANK:
        if q <= 0.0:
            raise InvalidStateError("a full-rank assignment is impossible at q = 0")
        inv_q = 1.0 / q
        effective = inv_q * (g - p @ (p.T @ g))
        momentum, direction = base_optimizer(state.momentum, effective)
        weights = state.weights - step_size_eta * direction
    else:
        if q >= 1.0:
            raise InvalidStateError("a low-rank assignment is impossible at q = 1")
        scale = 1.0 / (1.0 - q)
        effective = scale * (p.T @ g)
        momentum, direction = base_optimizer(state.momentum, effective)
        weights = state.weights - step_size_eta * (p @ direction)
    new_proj = raw if isinstance(raw, Projector) else Projector(p)
    return replace(state, weights=weights, momentum=momentum, projector=new_proj)


@dataclass(frozen=True)
class MemoryReport:
    """Optimizer-state scalar counts for one oriented block."""

    full_training: int
    galore: int
    gum_expected: float
    gum_worst_case: int


def memory_footprint(m: int, n: int, r: int, q: float) -> MemoryReport:
    """Exact state counts: projector plus momentum, not big-O classes.

    A projected block stores an m x r projector and an r x n momentum; a
    compensated block stores the projector and a full m x n momentum. The
    expected count interpolates with the sampling probability q.
    """
    if not 1 <= r <= m <= n:
        raise InvalidInputError("expected 1 <= r <= m <= n")
    if not 0.0 <= q <= 1.0:
        raise InvalidInputError("q must lie in [0, 1]")
    galore = m * r + r * n
    worst = m * r + m * n
    return MemoryReport(
        full_training=m * n,
        galore=galore,
        gum_expected=(1.0 - q) * galore + q * worst,
        gum_worst_case=worst,
    )


def state_scalar_count(blocks: Sequence[BlockState]) -> int:
    """Scalars held by the optimizer right now (momenta plus projectors)."""
    total = 0
    for b in blocks:
        total += b.momentum.size
        if b.projector is not None:
            total += b.projector.p.size
    return total


def monte_carlo_unbiasedness(
    n_triples: int = 20,
    n_draws: int = 100_000,
    seed: int = 0,
    compensated_variant: bool = False,
    chunk: int = 20_000,
) -> list[dict]:
    """Empirically check E[effective gradient] = G over assignment draws.

    For each seeded (G, P, q) triple the per-draw effective gradient is the
    full-rank compensation with probability q and the scaled projection
    otherwise. The sample mean must match G within four standard errors,
    aggregated over entries in the Frobenius sense.
    """
    rng = np.random.default_rng(seed)
    results = []
    for t in range(n_triples):
        m = int(rng.integers(5, 17))
        n = int(rng.integers(m, 25))
        r = int(rng.integers(1, m))
        g = rng.standard_normal((m, n)) * float(rng.uniform(0.5, 3.0))
        p = galore_projector(rng.standard_normal((m, n)), r).p
        q = float(rng.uniform(0.1, 0.9))
        projected = p @ (p.T @ g)
        if compensated_variant:
            full_eff = (g - (1.0 - q) * projected) / q
            low_eff = projected
        else:
            full_eff = (g - projected) / q
            low_eff = projected / (1.0 - q)

        total = np.zeros_like(g)
        total_sq = np.zeros_like(g)
        n_full = 0
        done = 0
        while done < n_draws:
            size = min(chunk, n_draws - done)
            mask = rng.random(size) < q
            n_full += int(mask.sum())
            samples = np.where(mask[:, None, None], full_eff, low_eff)
            total += samples.sum(axis=0)
            total_sq += (samples * samples).sum(axis=0)
            done += size
        mean = total / n_draws
        var = (total_sq / n_draws - mean * mean) * (n_draws / (n_draws - 1))
        err = float(np.linalg.norm(mean - g))
        bound = 4.0 * float(np.sqrt(var.sum() / n_draws))
        results.append(
            {
                "triple": t,
                "shape": [m, n],
                "rank": r,
                "q": q,
                "full_rank_fraction": n_full / n_draws,
                "mean_error_fro": err,
                "four_sigma_bound": bound,
                "passed": bool(err <= bound),
            }
        )
    return results
