"""Synthetic objectives with exact analytic oracles.

``NoisyLinearRegression`` is a square-matrix least-squares problem whose
stochastic gradient carries rank-r noise of tunable size sitting exactly in
the coordinates the true gradient never touches. With large sigma the top-r
singular vectors of every noisy gradient point at pure noise, which is the
regime where greedy SVD projectors pick a useless subspace. The
``MultiBlockQuadratic`` is plain least squares over several independent
blocks, there to exercise blockwise sampling rather than to be hard.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .linalg import as_matrix

__all__ = [
    "NoisyLinearRegression",
    "nlr_loss",
    "nlr_mean_grad",
    "nlr_grad",
    "nlr_grad_with_xi",
    "nlr_optimal_value",
    "nlr_reference_instance",
    "MultiBlockQuadratic",
    "mbq_loss",
    "mbq_mean_grad",
    "mbq_grad",
    "mbq_random_instance",
]

NOISE_KINDS = ("rademacher", "bernoulli01")

DEFAULT_NLR_SEED = 7


@dataclass(frozen=True)
class NoisyLinearRegression:
    """min over n x n matrices X of 0.5*||A X||_F^2 + <B, X>.

    A = [I_{n-r} 0] keeps the first n-r rows of X, B embeds a frozen
    Gaussian matrix D in the top-left corner, and the noise term xi*sigma*C
    lives on the bottom-right r x r identity block. The minimizer places -D
    in the top-left corner, for a minimum of -0.5*||D||_F^2.

    ``noise_kind`` selects the law of xi: "rademacher" draws -1/+1 with equal
    probability (zero mean, noise present in every draw), "bernoulli01"
    draws 0/1 with equal probability (mean 0.5, so the stochastic gradient
    is biased by 0.5*sigma*C; kept for exactness of that construction).
    """

    n: int
    r_noise: int
    sigma: float
    seed: int
    noise_kind: str = "rademacher"

    def __post_init__(self) -> None:
        if not 1 <= self.r_noise < self.n:
            raise InvalidInputError("need 1 <= r_noise < n")
        if self.sigma < 0:
            raise InvalidInputError("sigma must be nonnegative")
        if self.noise_kind not in NOISE_KINDS:
            raise InvalidInputError(f"unknown noise_kind {self.noise_kind!r}")
        d = np.random.default_rng(self.seed).standard_normal(
            (self.signal_dim, self.signal_dim)
        )
        object.__setattr__(self, "_d", d)

    @property
    def signal_dim(self) -> int:
        return self.n - self.r_noise

    @property
    def d(self) -> np.ndarray:
        """The frozen (n-r) x (n-r) Gaussian block inside B."""
        return self._d


def _check_nlr_point(problem: NoisyLinearRegression, x) -> np.ndarray:
    xm = as_matrix(x, name="X")
    if xm.shape != (problem.n, problem.n):
        raise InvalidInputError(
            f"X must be {problem.n} x {problem.n}, got {xm.shape}"
        )
    return xm


def nlr_loss(problem: NoisyLinearRegression, x) -> float:
    xm = _check_nlr_point(problem, x)
    s = problem.signal_dim
    top = xm[:s, :]
    return float(0.5 * np.sum(top * top) + np.sum(problem.d * xm[:s, :s]))


def nlr_mean_grad(problem: NoisyLinearRegression, x) -> np.ndarray:
    """The noise-free gradient A^T A X + B, supported on the top rows."""
    xm = _check_nlr_point(problem, x)
    s = problem.signal_dim
    g = np.zeros_like(xm)
    g[:s, :] = xm[:s, :]
    g[:s, :s] += problem.d
    return g


def nlr_grad_with_xi(problem: NoisyLinearRegression, x, xi: float) -> np.ndarray:
    """Stochastic gradient for an explicitly chosen noise value xi."""
    g = nlr_mean_grad(problem, x)
    s = problem.signal_dim
    idx = np.arange(s, problem.n)
    g[idx, idx] += xi * problem.sigma
    return g


def nlr_grad(
    problem: NoisyLinearRegression, x, rng: np.random.Generator
) -> np.ndarray:
    """Stochastic gradient with xi drawn by the instance's noise law."""
    u = rng.random()
    if problem.noise_kind == "rademacher":
        xi = 1.0 if u < 0.5 else -1.0
    else:
        xi = 1.0 if u < 0.5 else 0.0
    return nlr_grad_with_xi(problem, x, xi)


def nlr_optimal_value(problem: NoisyLinearRegression) -> float:
    """Closed-form minimum -0.5*||D||_F^2 (attained at top-left block -D)."""
    return float(-0.5 * np.sum(problem.d * problem.d))


def nlr_reference_instance(
    seed: int = DEFAULT_NLR_SEED, noise_kind: str = "rademacher"
) -> NoisyLinearRegression:
    """The 20 x 20 instance with rank-12 noise at sigma = 100.

    Sized so that a rank-12 greedy projector always latches onto noise while
    the true gradient (rank at most 8) is annihilated by it.
    """
    return NoisyLinearRegression(
        n=20, r_noise=12, sigma=100.0, seed=seed, noise_kind=noise_kind
    )


@dataclass(frozen=True)
class MultiBlockQuadratic:
    """Sum over blocks of 0.5*||A_l W_l - Y_l||_F^2 with Gaussian gradient noise."""

    blocks: tuple[tuple[np.ndarray, np.ndarray], ...]
    noise_sigma: float
    seed: int

    def __post_init__(self) -> None:
        if not self.blocks:
            raise InvalidInputError("need at least one block")
        if self.noise_sigma < 0:
            raise InvalidInputError("noise_sigma must be nonnegative")
        checked = []
        for i, (a, y) in enumerate(self.blocks):
            am = as_matrix(a, name=f"A[{i}]")
            ym = as_matrix(y, name=f"Y[{i}]")
            if am.shape[0] != ym.shape[0]:
                raise InvalidInputError(
                    f"block {i}: A has {am.shape[0]} rows but Y has {ym.shape[0]}"
                )
            checked.append((am, ym))
        object.__setattr__(self, "blocks", tuple(checked))

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def weight_shapes(self) -> list[tuple[int, int]]:
        return [(a.shape[1], y.shape[1]) for a, y in self.blocks]


def _check_mbq_weights(
    problem: MultiBlockQuadratic, weights: Sequence
) -> list[np.ndarray]:
    if len(weights) != problem.n_blocks:
        raise InvalidInputError(
            f"expected {problem.n_blocks} weight blocks, got {len(weights)}"
        )
    out = []
    for i, (w, shape) in enumerate(zip(weights, problem.weight_shapes())):
        wm = as_matrix(w, name=f"W[{i}]")
        if wm.shape != shape:
            raise InvalidInputError(
                f"block {i}: weights must be {shape}, got {wm.shape}"
            )
        out.append(wm)
    return out


def mbq_loss(problem: MultiBlockQuadratic, weights: Sequence) -> float:
    ws = _check_mbq_weights(problem, weights)
    total = 0.0
    for (a, y), w in zip(problem.blocks, ws):
        resid = a @ w - y
        total += 0.5 * float(np.sum(resid * resid))
    return total


def mbq_mean_grad(
    problem: MultiBlockQuadratic, weights: Sequence
) -> list[np.ndarray]:
    ws = _check_mbq_weights(problem, weights)
    return [a.T @ (a @ w - y) for (a, y), w in zip(problem.blocks, ws)]


def mbq_grad(
    problem: MultiBlockQuadratic, weights: Sequence, rng: np.random.Generator
) -> list[np.ndarray]:
    """Per-block gradients with i.i.d. Gaussian noise of scale noise_sigma."""
    grads = mbq_mean_grad(problem, weights)
    if problem.noise_sigma > 0:
        grads = [
            g + problem.noise_sigma * rng.standard_normal(g.shape) for g in grads
        ]
    return grads


def mbq_random_instance(
    shapes: Sequence[Sequence[int]],
    seed: int,
    noise_sigma: float = 0.0,
    target_norm: float = 10.0,
    skew: float = 0.2,
) -> MultiBlockQuadratic:
    """A consistent least-squares instance with known minimum loss 0.

    Each block gets a square, well-conditioned A = I + skew * G and a target
    Y = A @ W_star with ||W_star||_F = target_norm, so W = 0 starts a known
    distance from the solution.
    """
    rng = np.random.default_rng(seed)
    blocks = []
    for m, n in shapes:
        m, n = int(m), int(n)
        if m < 1 or n < 1:
            raise InvalidInputError(f"bad block shape ({m}, {n})")
        a = np.eye(m) + skew * rng.standard_normal((m, m)) / np.sqrt(m)
        w_star = rng.standard_normal((m, n))
        w_star *= target_norm / np.linalg.norm(w_star)
        blocks.append((a, a @ w_star))
    return MultiBlockQuadratic(
        blocks=tuple(blocks), noise_sigma=noise_sigma, seed=seed
    )
