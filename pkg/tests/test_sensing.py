import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import dct_matrix
from radcs.allocation import full_plan, uniform_plan
from radcs.geometry import BLOCK_H, BLOCK_SIZE, BLOCK_W, N_AZIMUTH, N_RANGE, BlockIndex, PolarFrame, extract_block
from radcs.sensing import (
    BlockMeasurement,
    BPSolverConfig,
    FrameMeasurements,
    PlanError,
    basis_pursuit,
    build_measurement_matrix,
    dct2,
    idct2,
    read_rmeas,
    reconstruct_block,
    reconstruct_frame,
    sense_block,
    sense_frame,
    write_rmeas,
)


def sparse_block(rng, k=10):
    coeffs = np.zeros(BLOCK_SIZE)
    coeffs[rng.choice(BLOCK_SIZE, k, replace=False)] = rng.standard_normal(k)
    return idct2(coeffs)


def test_dct_matches_cosine_formula(rng):
    # vec(C_h X C_w^T) == kron(C_h, C_w) vec(X) for row-major vec
    basis = np.kron(dct_matrix(BLOCK_H), dct_matrix(BLOCK_W))
    x = rng.standard_normal(BLOCK_SIZE)
    assert np.allclose(dct2(x), basis @ x, atol=1e-10)
    assert np.allclose(idct2(basis @ x), x, atol=1e-10)


@given(st.integers(0, 2**32 - 1))
def test_dct_is_orthonormal(seed):
    x = np.random.default_rng(seed).standard_normal(BLOCK_SIZE)
    c = dct2(x)
    assert np.linalg.norm(c) == pytest.approx(np.linalg.norm(x), rel=1e-12)
    assert np.allclose(idct2(c), x, atol=1e-10)


def test_measurement_matrix_is_reproducible():
    a = build_measurement_matrix(7, 3, BlockIndex(4, 5), 96)
    b = build_measurement_matrix(7, 3, (4, 5), 96)
    assert a.entries.shape == (96, BLOCK_SIZE)
    assert np.array_equal(a.entries, b.entries)
    for other in [(8, 3, (4, 5)), (7, 4, (4, 5)), (7, 3, (4, 6)), (7, 3, (5, 5))]:
        assert not np.array_equal(a.entries, build_measurement_matrix(*other, 96).entries)


def test_measurement_matrix_rows_are_nested():
    # a shorter matrix is the top of a longer one for the same block
    short = build_measurement_matrix(1, 2, (3, 4), 96)
    long = build_measurement_matrix(1, 2, (3, 4), 288)
    assert np.allclose(short.entries, long.entries[:96] * np.sqrt(288 / 96), rtol=1e-12)


def test_measurement_matrix_statistics():
    phi = build_measurement_matrix(0, 1, (0, 0), 480).entries
    assert phi.mean() == pytest.approx(0.0, abs=3e-4)
    assert phi.var() == pytest.approx(1 / 480, rel=0.01)
    with pytest.raises(ValueError):
        build_measurement_matrix(0, 1, (0, 0), 0)
    with pytest.raises(ValueError):
        build_measurement_matrix(0, 1, (0, 0), 961)


def test_sense_block_is_matrix_product(rng):
    x = rng.uniform(0, 5, BLOCK_SIZE)
    phi = build_measurement_matrix(3, 2, (1, 1), 200)
    meas = sense_block(x, phi)
    assert meas.m == 200
    assert np.allclose(meas.y, phi.entries @ x)
    with pytest.raises(ValueError):
        sense_block(np.zeros(10), phi)


def test_bp_recovers_sparse_block(rng):
    x = sparse_block(rng)
    meas = sense_block(x, build_measurement_matrix(11, 1, (2, 2), 288))
    res = reconstruct_block(meas)
    assert res.converged
    assert np.linalg.norm(res.x - x) / np.linalg.norm(x) < 1e-3


def test_bp_zero_measurements():
    meas = BlockMeasurement(np.zeros(96), 96, 0, 0, BlockIndex(0, 0))
    res = reconstruct_block(meas)
    assert res.converged and res.iterations == 0
    assert not res.x.any()


@given(st.integers(0, 2**32 - 1), st.integers(20, 120))
def test_bp_output_is_feasible(seed, m):
    """Converged or not, the returned coefficients reproduce the measurements."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, 200)) / np.sqrt(m)
    y = rng.standard_normal(m)
    res = basis_pursuit(A, y, BPSolverConfig(max_iterations=30))
    assert np.linalg.norm(A @ res.x - y) / np.linalg.norm(y) < 1e-6
    assert res.residual < 1e-6


def test_bp_l1_not_worse_than_least_norm(rng):
    A = rng.standard_normal((60, 200)) / np.sqrt(60)
    s = np.zeros(200)
    s[rng.choice(200, 5, replace=False)] = 1.0
    y = A @ s
    res = basis_pursuit(A, y)
    ln = np.linalg.lstsq(A, y, rcond=None)[0]
    assert np.abs(res.x).sum() <= np.abs(ln).sum() + 1e-9


def test_solver_config_validation():
    with pytest.raises(ValueError):
        BPSolverConfig(max_iterations=0)
    with pytest.raises(ValueError):
        BPSolverConfig(relaxation=2.0)
    with pytest.raises(ValueError):
        BPSolverConfig(primal_tolerance=0)


def small_scene_frame(frame_id=2):
    data = np.zeros((N_AZIMUTH, N_RANGE), np.float32)
    data[40:46, 100:110] = 120.0
    data[300:303, 400:420] = 80.0
    return PolarFrame(data, frame_id)


def test_full_plan_is_lossless():
    frame = small_scene_frame()
    meas = sense_frame(frame, full_plan(), seed=0)
    recon, report = reconstruct_frame(meas, workers=1)
    assert recon == frame
    assert report.cs_blocks == 0


def test_sense_frame_counts_follow_plan():
    plan = uniform_plan(0.1)
    meas = sense_frame(small_scene_frame(), plan, seed=5)
    assert meas.total_values == 23040
    assert all(v.shape == (96,) and v.dtype == np.float32 for v in meas.values)
    # empty blocks store zeros and need no solve
    assert not meas.values[0].any()


def test_sense_frame_matches_block_sensing():
    frame = small_scene_frame()
    plan = uniform_plan(0.2)
    meas = sense_frame(frame, plan, seed=9)
    idx = BlockIndex(2, 2)  # holds the first patch
    phi = build_measurement_matrix(9, frame.frame_id, idx, 192)
    direct = sense_block(extract_block(frame, idx), phi).y.astype(np.float32)
    assert np.array_equal(meas.values[idx.flat], direct)


def test_sense_frame_rejects_bad_plan():
    class Plan:
        m_per_block = np.full(239, 96)

    with pytest.raises(PlanError):
        sense_frame(small_scene_frame(), Plan(), 0)


def test_reconstruction_does_not_depend_on_workers():
    meas = sense_frame(small_scene_frame(), uniform_plan(0.3), seed=1)
    cfg = BPSolverConfig(max_iterations=50)
    a, ra = reconstruct_frame(meas, cfg, workers=1)
    b, rb = reconstruct_frame(meas, cfg, workers=4)
    assert a == b
    assert np.array_equal(ra.iterations, rb.iterations)
    assert a.data.min() >= 0


def test_rmeas_roundtrip(tmp_path):
    meas = sense_frame(small_scene_frame(), uniform_plan(0.1), seed=2**40 + 3)
    write_rmeas(tmp_path / "f.rmeas", meas)
    back = read_rmeas(tmp_path / "f.rmeas")
    assert back == meas
    assert isinstance(back, FrameMeasurements)
    (tmp_path / "bad.rmeas").write_bytes(b"nope" * 10)
    with pytest.raises(ValueError):
        read_rmeas(tmp_path / "bad.rmeas")
