"""리저버 생성, 스펙트럼 반경 스케일링, 상태 시뮬레이션 테스트"""

import numpy as np
import pytest

from src.exceptions import DimensionMismatch, NilpotentMatrix
from src.reservoir import (Reservoir, ReservoirParams, activation, init_reservoir, run, scale_spectral_radius,
                           spectral_radius, step)


def test_same_seed_gives_identical_reservoir():
    params = ReservoirParams(size=50, seed=7)
    a = init_reservoir(params)
    b = init_reservoir(params)
    assert np.array_equal(a.W, b.W)
    assert np.array_equal(a.W_in, b.W_in)
    assert np.array_equal(a.b, b.b)


def test_different_seed_gives_different_reservoir():
    a = init_reservoir(ReservoirParams(size=20, seed=0))
    b = init_reservoir(ReservoirParams(size=20, seed=1))
    assert not np.array_equal(a.W, b.W)


def test_spectral_radius_matches_target():
    r = init_reservoir(ReservoirParams(size=100, spectral_radius=0.9, seed=3))
    independent = np.max(np.abs(np.linalg.eigvals(r.W)))
    assert independent == pytest.approx(0.9, rel=1e-8)


def test_sparsity_keeps_exact_count():
    r = init_reservoir(ReservoirParams(size=100, recurrent_sparsity=0.1, input_sparsity=0.5))
    assert np.count_nonzero(r.W) == 1000
    assert np.count_nonzero(r.W_in) == 50


def test_full_density_has_no_zero_entries():
    r = init_reservoir(ReservoirParams(size=100, recurrent_sparsity=1.0))
    assert np.count_nonzero(r.W) == 10000


def test_input_scaling_per_channel():
    params = ReservoirParams(size=30, n_inputs=2, input_scaling=(0.1, 2.0), input_sparsity=1.0)
    r = init_reservoir(params)
    assert np.abs(r.W_in[:, 0]).max() <= 0.1
    assert np.abs(r.W_in[:, 1]).max() > 0.1
    assert params.input_scaling == (0.1, 2.0)


def test_scalar_input_scaling_broadcasts():
    params = ReservoirParams(n_inputs=2, input_scaling=0.5)
    assert params.input_scaling == (0.5, 0.5)


@pytest.mark.parametrize("kwargs", [
    {"size": 0},
    {"spectral_radius": 0.0},
    {"recurrent_sparsity": 0.0},
    {"input_sparsity": 1.5},
    {"nonlinearity": "relu"},
    {"n_inputs": 2, "input_scaling": (0.1, 0.2, 0.3)},
])
def test_invalid_params_rejected(kwargs):
    with pytest.raises(ValueError):
        ReservoirParams(**kwargs)


def test_scale_diagonal_matrix():
    scaled = scale_spectral_radius(np.diag([0.5, 0.25]), 0.9)
    np.testing.assert_allclose(scaled, np.diag([0.9, 0.45]), atol=1e-10)


def test_scale_to_own_radius_is_identity():
    M = np.random.default_rng(0).uniform(-1, 1, size=(6, 6))
    np.testing.assert_allclose(scale_spectral_radius(M, spectral_radius(M)), M, atol=1e-12)


def test_nilpotent_matrix_rejected():
    with pytest.raises(NilpotentMatrix):
        scale_spectral_radius(np.array([[0.0, 2.0], [0.0, 0.0]]), 0.9)


def test_spectral_radius_complex_pair_falls_back():
    # 회전 행렬: 지배 고유값이 복소 켤레쌍 (|λ| = 0.8)
    theta = 0.7
    M = 0.8 * np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    assert spectral_radius(M) == pytest.approx(0.8, rel=1e-10)


def test_step_zero_weights_tanh_gives_zero():
    r = Reservoir(W=np.zeros((4, 4)), W_in=np.zeros((4, 1)), b=np.zeros(4), nonlinearity="tanh")
    out = step(r, np.random.default_rng(0).normal(size=4), np.array([0.3]))
    assert np.array_equal(out, np.zeros(4))


def test_step_rejects_wrong_shapes():
    r = init_reservoir(ReservoirParams(size=5))
    with pytest.raises(DimensionMismatch):
        step(r, np.zeros(4), np.array([0.1]))


def test_elu_values():
    f, _ = activation("elu")
    np.testing.assert_allclose(f(np.array([0.0, -1.0, 2.0])), [0.0, np.exp(-1.0) - 1.0, 2.0])
    assert f(np.array([-1.0]))[0] == pytest.approx(-0.63212, abs=1e-5)


@pytest.mark.parametrize("name", ["elu", "tanh"])
def test_derivative_matches_finite_difference(name):
    f, df = activation(name)
    z = np.random.default_rng(1).uniform(-3, 3, size=100)
    h = 1e-6
    numeric = (f(z + h) - f(z - h)) / (2 * h)
    np.testing.assert_allclose(df(f(z)), numeric, atol=1e-6)


def test_tanh_states_stay_inside_unit_interval():
    r = init_reservoir(ReservoirParams(size=50, nonlinearity="tanh", input_scaling=2.0))
    u = np.random.default_rng(0).uniform(0, 0.5, size=300)
    states = run(r, u, washout=0).states
    assert np.all(np.abs(states) < 1.0)


def test_run_minimal_length():
    r = init_reservoir(ReservoirParams(size=8))
    trajectory = run(r, np.full(11, 0.2), washout=10)
    assert len(trajectory) == 11
    assert trajectory.usable.shape == (1, 8)


def test_run_requires_length_above_washout():
    r = init_reservoir(ReservoirParams(size=8))
    with pytest.raises(ValueError):
        run(r, np.zeros(10), washout=10)


def test_run_is_deterministic():
    r = init_reservoir(ReservoirParams(size=20))
    u = np.random.default_rng(2).uniform(0, 0.5, size=100)
    assert np.array_equal(run(r, u, washout=0).states, run(r, u, washout=0).states)


def test_echo_state_forgets_initial_state():
    r = init_reservoir(ReservoirParams(size=100, spectral_radius=0.9, seed=0))
    rng = np.random.default_rng(5)
    u = rng.uniform(0, 0.5, size=400)
    from_zero = run(r, u, washout=200)
    from_random = run(r, u, washout=200, initial_state=rng.uniform(-0.5, 0.5, size=100))
    difference = np.linalg.norm(from_zero.usable - from_random.usable, axis=1)
    assert difference.max() < 1e-6
