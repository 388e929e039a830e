"""Synthetic problem tests: regression counterexample and multi-block quadratic."""

import numpy as np
import pytest

from gumbench import (
    ExperimentConfig,
    InvalidInputError,
    MultiBlockQuadratic,
    NoisyLinearRegression,
    galore_projector,
    mbq_grad,
    mbq_loss,
    mbq_mean_grad,
    mbq_random_instance,
    nlr_grad,
    nlr_grad_with_xi,
    nlr_loss,
    nlr_mean_grad,
    nlr_optimal_value,
    nlr_reference_instance,
    run_single,
)


@pytest.fixture(scope="module")
def reference():
    return nlr_reference_instance()


def dense_assembly_loss(problem: NoisyLinearRegression, x: np.ndarray) -> float:
    """Brute-force evaluation building the full A and B matrices."""
    s, n = problem.signal_dim, problem.n
    a = np.zeros((s, n))
    a[:, :s] = np.eye(s)
    b = np.zeros((n, n))
    b[:s, :s] = problem.d
    return float(0.5 * np.sum((a @ x) ** 2) + np.trace(b.T @ x))


def test_nlr_construction_validation():
    with pytest.raises(InvalidInputError):
        NoisyLinearRegression(n=5, r_noise=5, sigma=1.0, seed=0)
    with pytest.raises(InvalidInputError):
        NoisyLinearRegression(n=5, r_noise=2, sigma=-1.0, seed=0)
    with pytest.raises(InvalidInputError):
        NoisyLinearRegression(n=5, r_noise=2, sigma=1.0, seed=0, noise_kind="cauchy")


def test_nlr_reference_instance_dimensions(reference):
    assert reference.n == 20
    assert reference.r_noise == 12
    assert reference.sigma == 100.0
    assert reference.signal_dim == 8
    assert reference.d.shape == (8, 8)
    assert reference.noise_kind == "rademacher"


def test_nlr_d_frozen_and_seeded():
    a = NoisyLinearRegression(n=10, r_noise=4, sigma=1.0, seed=5)
    b = NoisyLinearRegression(n=10, r_noise=4, sigma=1.0, seed=5)
    c = NoisyLinearRegression(n=10, r_noise=4, sigma=1.0, seed=6)
    assert np.array_equal(a.d, b.d)
    assert not np.array_equal(a.d, c.d)


def test_nlr_loss_at_zero(reference):
    assert nlr_loss(reference, np.zeros((20, 20))) == 0.0


def test_nlr_loss_at_minimizer(reference):
    x = np.zeros((20, 20))
    x[:8, :8] = -reference.d
    assert nlr_loss(reference, x) == pytest.approx(-0.5 * float(np.sum(reference.d**2)))


def test_nlr_loss_matches_dense_assembly(reference):
    rng = np.random.default_rng(60)
    for _ in range(5):
        x = rng.standard_normal((20, 20))
        assert nlr_loss(reference, x) == pytest.approx(
            dense_assembly_loss(reference, x), rel=1e-12
        )


def test_nlr_loss_shape_mismatch(reference):
    with pytest.raises(InvalidInputError):
        nlr_loss(reference, np.zeros((19, 20)))


def test_nlr_loss_convexity(reference):
    rng = np.random.default_rng(61)
    for _ in range(10):
        x1 = rng.standard_normal((20, 20))
        x2 = rng.standard_normal((20, 20))
        lam = float(rng.uniform())
        mix = nlr_loss(reference, lam * x1 + (1.0 - lam) * x2)
        bound = lam * nlr_loss(reference, x1) + (1.0 - lam) * nlr_loss(reference, x2)
        assert mix <= bound + 1e-10


def test_nlr_grad_sigma_zero_at_origin():
    p = NoisyLinearRegression(n=20, r_noise=12, sigma=0.0, seed=7)
    g = nlr_grad(p, np.zeros((20, 20)), np.random.default_rng(0))
    b = np.zeros((20, 20))
    b[:8, :8] = p.d
    assert np.array_equal(g, b)


def test_nlr_grad_with_xi_one_at_origin(reference):
    g = nlr_grad_with_xi(reference, np.zeros((20, 20)), 1.0)
    expected = np.zeros((20, 20))
    expected[:8, :8] = reference.d
    expected[8:, 8:] += 100.0 * np.eye(12)
    assert np.array_equal(g, expected)


def test_nlr_noise_support_is_bottom_right_block(reference):
    rng = np.random.default_rng(62)
    x = rng.standard_normal((20, 20))
    diff = nlr_grad_with_xi(reference, x, 1.0) - nlr_grad_with_xi(reference, x, 0.0)
    assert np.all(diff[:8, :] == 0.0)
    assert np.all(diff[:, :8] == 0.0)
    assert np.allclose(diff[8:, 8:], 100.0 * np.eye(12))


def test_nlr_rademacher_noise_is_centered(reference):
    rng = np.random.default_rng(63)
    x = np.random.default_rng(1).standard_normal((20, 20))
    total = np.zeros((20, 20))
    draws = 10_000
    for _ in range(draws):
        total += nlr_grad(reference, x, rng)
    mean = total / draws
    # Mean of +/-sigma entries shrinks like sigma/sqrt(N).
    tol = 4.0 * reference.sigma / np.sqrt(draws)
    assert np.max(np.abs(mean - nlr_mean_grad(reference, x))) <= tol


def test_nlr_bernoulli01_noise_has_half_sigma_mean():
    # The literal construction draws xi in {0, 1}, so the noise mean is 0.5*sigma*C.
    p = nlr_reference_instance(noise_kind="bernoulli01")
    rng = np.random.default_rng(64)
    x = np.random.default_rng(2).standard_normal((20, 20))
    total = np.zeros((20, 20))
    draws = 10_000
    for _ in range(draws):
        total += nlr_grad(p, x, rng)
    mean = total / draws
    shifted = nlr_mean_grad(p, x).copy()
    shifted[8:, 8:] += 0.5 * p.sigma * np.eye(12)
    tol = 4.0 * 0.5 * p.sigma / np.sqrt(draws)
    assert np.max(np.abs(mean - shifted)) <= tol


def test_nlr_mean_grad_finite_differences(reference):
    rng = np.random.default_rng(65)
    x = rng.standard_normal((20, 20))
    g = nlr_mean_grad(reference, x)
    fd = np.zeros_like(x)
    for idx in [(0, 0), (3, 11), (7, 7), (12, 4), (19, 19)]:
        h = 1e-6 * (1.0 + abs(x[idx]))
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        fd[idx] = (nlr_loss(reference, xp) - nlr_loss(reference, xm)) / (2.0 * h)
        assert abs(fd[idx] - g[idx]) <= 1e-4 * (1.0 + np.linalg.norm(g))


def test_nlr_optimal_value_closed_form(reference):
    assert nlr_optimal_value(reference) == pytest.approx(
        -0.5 * float(np.sum(reference.d**2))
    )
    flat = NoisyLinearRegression(n=6, r_noise=3, sigma=0.0, seed=11)
    assert nlr_optimal_value(flat) == pytest.approx(-0.5 * float(np.sum(flat.d**2)))


def test_nlr_optimal_value_reached_by_optimizer():
    # Full-parameter baseline run as a numerical cross-check of the closed form.
    cfg = ExperimentConfig(
        problem="noisy_linear_regression",
        method="muon",
        total_steps=800,
        period_k=20,
        rank_r=12,
        full_rank_layers_gamma=0.0,
        step_size_eta=0.01,
        msign_mode="exact_oracle",
        seeds=(0,),
        chi_cadence=0,
    )
    out = run_single(cfg, 0)
    shifted = min(r.loss for r in out.records)
    initial = out.records[0].loss
    assert shifted <= 0.01 * initial


def test_nlr_adversarial_spectrum_at_origin(reference):
    g_noisy = nlr_grad_with_xi(reference, np.zeros((20, 20)), 1.0)
    p = galore_projector(g_noisy, 12).p
    span = np.zeros((20, 12))
    span[8:, :] = np.eye(12)
    cos = np.linalg.svd(p.T @ span, compute_uv=False)
    assert np.max(np.abs(cos - 1.0)) <= 1e-8
    g_true = nlr_mean_grad(reference, np.zeros((20, 20)))
    assert np.linalg.norm(p @ (p.T @ g_true)) <= 1e-8 * np.linalg.norm(g_true)


def test_mbq_exact_solution_has_zero_loss_and_grad():
    problem = mbq_random_instance([[4, 4], [3, 5]], seed=9, noise_sigma=0.0)
    solved = [np.linalg.solve(a, y) for a, y in problem.blocks]
    assert mbq_loss(problem, solved) <= 1e-16
    grads = mbq_mean_grad(problem, solved)
    assert all(np.linalg.norm(g) <= 1e-8 for g in grads)


def test_mbq_identity_design_gradient():
    y = np.arange(6.0).reshape(2, 3)
    problem = MultiBlockQuadratic(
        blocks=((np.eye(2), y),), noise_sigma=0.0, seed=0
    )
    w = np.ones((2, 3))
    grads = mbq_mean_grad(problem, [w])
    assert np.allclose(grads[0], w - y)


def test_mbq_finite_difference_gradient():
    problem = mbq_random_instance([[3, 3], [2, 4], [4, 2]], seed=13)
    rng = np.random.default_rng(66)
    weights = [rng.standard_normal(s) for s in problem.weight_shapes()]
    grads = mbq_mean_grad(problem, weights)
    for b, (w, g) in enumerate(zip(weights, grads)):
        idx = (0, 0)
        h = 1e-6 * (1.0 + abs(w[idx]))
        wp = [x.copy() for x in weights]
        wp[b][idx] += h
        wm = [x.copy() for x in weights]
        wm[b][idx] -= h
        fd = (mbq_loss(problem, wp) - mbq_loss(problem, wm)) / (2.0 * h)
        assert fd == pytest.approx(g[idx], rel=1e-5, abs=1e-7)


def test_mbq_noise_has_configured_scale():
    problem = mbq_random_instance([[4, 4]], seed=21, noise_sigma=0.5)
    rng = np.random.default_rng(67)
    w = [np.zeros((4, 4))]
    clean = mbq_mean_grad(problem, w)[0]
    draws = 4000
    diffs = np.stack([mbq_grad(problem, w, rng)[0] - clean for _ in range(draws)])
    assert abs(float(diffs.std()) - 0.5) <= 0.05
    assert abs(float(diffs.mean())) <= 4.0 * 0.5 / np.sqrt(diffs.size)


def test_mbq_shape_mismatch():
    problem = mbq_random_instance([[3, 3]], seed=1)
    with pytest.raises(InvalidInputError):
        mbq_loss(problem, [np.zeros((2, 3))])
    with pytest.raises(InvalidInputError):
        mbq_loss(problem, [np.zeros((3, 3)), np.zeros((3, 3))])
