"""Diagnostics tests: chi residual, spectra, stable ranks, trace CSV round trip."""

import numpy as np
import pytest

from gumbench import (
    TRACE_CSV_FIELDS,
    InvalidInputError,
    TraceRecord,
    chi_aggregate,
    chi_residual,
    galore_projector,
    grad_norm_trace,
    init_block_state,
    read_trace_csv,
    spectrum_snapshot,
    stable_rank_trace,
    svd_thin,
    write_trace_csv,
)


def test_chi_residual_equal_gradients_is_zero():
    g = np.ones((3, 4))
    assert chi_residual(g, g) == 0.0


def test_chi_residual_zero_projection_is_one():
    g = np.ones((3, 4))
    assert chi_residual(g, np.zeros((3, 4))) == pytest.approx(1.0)


def test_chi_residual_pythagoras():
    rng = np.random.default_rng(70)
    p = galore_projector(rng.standard_normal((6, 8)), 2).p
    inside = p @ rng.standard_normal((2, 8))
    outside = rng.standard_normal((6, 8))
    outside -= p @ (p.T @ outside)
    for alpha in (0.2, 0.5, 0.9):
        g = alpha * inside / np.linalg.norm(inside)
        g += np.sqrt(1.0 - alpha**2) * outside / np.linalg.norm(outside)
        chi = chi_residual(g, p @ (p.T @ g))
        assert chi == pytest.approx(np.sqrt(1.0 - alpha**2), abs=1e-9)


def test_chi_residual_stays_in_unit_interval_for_projections():
    rng = np.random.default_rng(71)
    for _ in range(20):
        g = rng.standard_normal((5, 9))
        p = galore_projector(rng.standard_normal((5, 9)), 3).p
        chi = chi_residual(g, p @ (p.T @ g))
        assert -1e-12 <= chi <= 1.0 + 1e-12


def test_chi_residual_errors():
    with pytest.raises(InvalidInputError):
        chi_residual(np.zeros((2, 2)), np.zeros((2, 2)))
    with pytest.raises(InvalidInputError):
        chi_residual(np.ones((2, 2)), np.ones((2, 3)))


def test_chi_aggregate_matches_stacked_formula():
    rng = np.random.default_rng(72)
    pairs = []
    num = 0.0
    den = 0.0
    for shape in ((3, 5), (4, 4)):
        g = rng.standard_normal(shape)
        p = galore_projector(rng.standard_normal(shape), 2).p
        proj = p @ (p.T @ g)
        pairs.append((g, proj))
        num += float(np.sum((g - proj) ** 2))
        den += float(np.sum(g * g))
    assert chi_aggregate(pairs) == pytest.approx(np.sqrt(num / den))


def test_spectrum_snapshot_identity_and_rank_one():
    ident = spectrum_snapshot(init_block_state(np.eye(4)), block_id=0, step=3)
    assert ident.singular_values == pytest.approx((1.0, 1.0, 1.0, 1.0))
    assert ident.block_id == 0
    assert ident.step == 3
    u = np.array([[1.0], [2.0]])
    v = np.array([[3.0], [1.0], [0.5]])
    one = spectrum_snapshot(init_block_state(u @ v.T), block_id=1, step=0)
    svals = np.array(one.singular_values)
    assert svals[0] > 0.0
    assert np.all(svals[1:] <= 1e-12 * svals[0])


def test_spectrum_snapshot_matches_svd():
    rng = np.random.default_rng(73)
    w = rng.standard_normal((5, 7))
    snap = spectrum_snapshot(init_block_state(w), block_id=2, step=10)
    # The block is stored transposed or not; singular values are unaffected.
    assert np.array_equal(np.array(snap.singular_values), svd_thin(w).s)
    assert np.all(np.diff(snap.singular_values) <= 0.0)


def test_stable_rank_trace_mean_and_skips():
    blocks = [
        init_block_state(np.eye(4)),
        init_block_state(np.array([[1.0, 2.0], [2.0, 4.0]])),
        init_block_state(np.zeros((3, 3))),
    ]
    summary = stable_rank_trace(blocks)
    assert summary.ranks[0] == pytest.approx(4.0)
    assert summary.ranks[1] == pytest.approx(1.0)
    assert summary.skipped == (2,)
    assert summary.mean == pytest.approx((4.0 + 1.0) / 2.0)


def test_grad_norm_trace_constant_and_decreasing():
    def rec(step, norm):
        return TraceRecord(
            step=step,
            loss=1.0,
            grad_trace_norm=norm,
            chi_residual=None,
            stable_ranks=(),
            stable_rank_skipped=(),
            assignment_full=(),
            memory_scalars=0,
        )

    flat = grad_norm_trace([rec(i, 2.0) for i in range(5)])
    assert np.array_equal(flat.min_so_far, np.full(5, 2.0))
    falling = grad_norm_trace([rec(i, 5.0 - i) for i in range(5)])
    assert np.array_equal(falling.min_so_far, np.array([5.0, 4.0, 3.0, 2.0, 1.0]))
    assert falling.final == 1.0


def test_grad_norm_trace_running_min_nonincreasing():
    rng = np.random.default_rng(74)
    records = [
        TraceRecord(
            step=i,
            loss=0.0,
            grad_trace_norm=float(rng.uniform(0.0, 10.0)),
            chi_residual=None,
            stable_ranks=(),
            stable_rank_skipped=(),
            assignment_full=(),
            memory_scalars=0,
        )
        for i in range(50)
    ]
    curve = grad_norm_trace(records).min_so_far
    assert np.all(np.diff(curve) <= 0.0)


def test_trace_record_derived_fields():
    rec = TraceRecord(
        step=7,
        loss=1.5,
        grad_trace_norm=2.5,
        chi_residual=0.25,
        stable_ranks=(2.0, 4.0),
        stable_rank_skipped=(),
        assignment_full=(True, False),
        memory_scalars=99,
    )
    assert rec.stable_rank_mean == pytest.approx(3.0)
    assert rec.assignment_bits == "10"
    empty = TraceRecord(
        step=0,
        loss=0.0,
        grad_trace_norm=0.0,
        chi_residual=None,
        stable_ranks=(),
        stable_rank_skipped=(),
        assignment_full=(),
        memory_scalars=0,
    )
    assert empty.stable_rank_mean is None
    assert empty.assignment_bits == ""


def test_trace_csv_round_trip(tmp_path):
    records = [
        TraceRecord(
            step=0,
            loss=32.125,
            grad_trace_norm=1.0 / 3.0,
            chi_residual=None,
            stable_ranks=(),
            stable_rank_skipped=(),
            assignment_full=(),
            memory_scalars=0,
        ),
        TraceRecord(
            step=1,
            loss=1e-17,
            grad_trace_norm=123456.789,
            chi_residual=0.9999999999999999,
            stable_ranks=(1.5, 2.5),
            stable_rank_skipped=(),
            assignment_full=(True, True),
            memory_scalars=42,
        ),
    ]
    path = tmp_path / "trace.csv"
    write_trace_csv(path, records)
    rows = read_trace_csv(path)
    assert [r["step"] for r in rows] == [0, 1]
    assert rows[0]["chi_residual"] is None
    assert rows[0]["stable_rank_mean"] is None
    assert rows[0]["assignment_bits"] == ""
    # repr-faithful float formatting survives the round trip exactly
    assert rows[0]["grad_trace_norm"] == 1.0 / 3.0
    assert rows[1]["loss"] == 1e-17
    assert rows[1]["chi_residual"] == 0.9999999999999999
    assert rows[1]["stable_rank_mean"] == 2.0
    assert rows[1]["assignment_bits"] == "11"
    assert rows[1]["memory_scalars"] == 42


def test_trace_csv_header_is_schema(tmp_path):
    path = tmp_path / "trace.csv"
    write_trace_csv(path, [])
    assert path.read_text().splitlines()[0] == ",".join(TRACE_CSV_FIELDS)


def test_trace_csv_rejects_foreign_header(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(InvalidInputError):
        read_trace_csv(path)
