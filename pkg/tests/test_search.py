"""하이퍼파라미터 랜덤 탐색과 목적함수 테스트"""

import numpy as np
import pytest

from src.exceptions import AllTrialsFailed, SingularSystem
from src.reservoir import ReservoirParams
from src.search import (DimensionKind, ReservoirObjective, SearchSpace, TrialStatus, apply_point, choice,
                        default_bptt_space, default_reservoir_space, evaluate_reservoir_config, log_uniform,
                        load_trials_csv, random_search, sample_points, save_trials_csv, trials_frame, uniform)


def first_value(point, seed):
    return point["x"]


def constant(point, seed):
    return 0.5


def fails_above_half(point, seed):
    if point["x"] > 0.5:
        raise SingularSystem(1e20)
    return point["x"]


def returns_seed(point, seed):
    return float(seed % 1000)


@pytest.fixture
def unit_space():
    return SearchSpace((uniform("x", 0.0, 1.0),))


def test_dimension_validation():
    with pytest.raises(ValueError):
        uniform("a", 1.0, 1.0)
    with pytest.raises(ValueError):
        log_uniform("a", 0.0, 1.0)
    with pytest.raises(ValueError):
        choice("a")
    with pytest.raises(ValueError):
        SearchSpace((uniform("a", 0, 1), uniform("a", 0, 2)))


def test_samples_stay_in_range():
    rng = np.random.default_rng(0)
    dim = log_uniform("lr", 1e-5, 1e-2)
    values = [dim.sample(rng) for _ in range(200)]
    assert min(values) >= 1e-5 and max(values) <= 1e-2
    pick = choice("batch_size", 30, 60, 120)
    assert {pick.sample(rng) for _ in range(100)} <= {30, 60, 120}


def test_default_spaces():
    assert default_reservoir_space().names == ["spectral_radius", "input_scaling", "bias_scaling",
                                               "input_sparsity", "recurrent_sparsity"]
    bptt = default_bptt_space()
    assert bptt.names == ["lr0", "weight_decay", "grad_noise_eta", "batch_size"]
    assert bptt.dimensions[3].kind == DimensionKind.CHOICE
    assert SearchSpace.from_dict(bptt.to_dict()) == bptt


def test_sampling_is_deterministic():
    space = default_reservoir_space()
    assert sample_points(space, 5, seed=1) == sample_points(space, 5, seed=1)
    assert sample_points(space, 5, seed=1) != sample_points(space, 5, seed=2)


def test_budget_one(unit_space):
    best, trials = random_search(unit_space, 1, first_value, seed=0)
    assert len(trials) == 1
    assert best == trials[0]


def test_best_of_hundred_uniform_samples(unit_space):
    best, trials = random_search(unit_space, 100, first_value, seed=0)
    assert best.value < 0.05
    assert all(best.value <= t.value for t in trials if t.ok)


def test_same_seed_same_trials(unit_space):
    _, first = random_search(unit_space, 10, first_value, seed=3)
    _, second = random_search(unit_space, 10, first_value, seed=3)
    assert [(t.point, t.value) for t in first] == [(t.point, t.value) for t in second]


def test_ties_go_to_earliest_trial(unit_space):
    best, _ = random_search(unit_space, 5, constant, seed=0)
    assert best.trial_id == 0


def test_failed_trials_are_recorded(unit_space):
    best, trials = random_search(unit_space, 20, fails_above_half, seed=1)
    failed = [t for t in trials if not t.ok]
    assert failed
    assert all(t.status == TrialStatus.FAILED and t.error.startswith("SingularSystem") for t in failed)
    assert best.ok and best.value <= 0.5


def test_all_trials_failed():
    space = SearchSpace((uniform("x", 0.6, 1.0),))
    with pytest.raises(AllTrialsFailed):
        random_search(space, 3, fails_above_half, seed=0)


def test_non_finite_value_is_failure(unit_space):
    best, trials = random_search(unit_space, 3, lambda point, seed: float("nan") if point["x"] > 0.5 else 1.0,
                                 seed=0)
    assert all(t.ok == (t.point["x"] <= 0.5) for t in trials)


def test_trial_seeds(unit_space):
    _, derived = random_search(unit_space, 4, returns_seed, seed=0)
    assert len({t.seed for t in derived}) == 4
    _, common = random_search(unit_space, 4, returns_seed, seed=0, objective_seed=42)
    assert {t.seed for t in common} == {42}


def test_apply_point_overrides_reservoir_keys():
    params = apply_point(ReservoirParams(), {"spectral_radius": 0.5, "lr0": 1.0})
    assert params.spectral_radius == 0.5
    assert params.input_scaling == (0.5,)


def test_reservoir_objective_is_deterministic(small_split):
    point = {"spectral_radius": 0.8, "input_scaling": 0.3}
    objective = ReservoirObjective(data=small_split, washout=50, size=10)
    first = objective(point, 0)
    assert first == objective(point, 0)
    assert first >= 0
    assert first == evaluate_reservoir_config(point, small_split, seed=0, washout=50, size=10)


def test_monolithic_objective(small_split):
    value = evaluate_reservoir_config({"spectral_radius": 0.9}, small_split, architecture="monolithic",
                                      washout=50, size=20)
    assert np.isfinite(value) and value >= 0


def test_trials_csv(tmp_path, unit_space):
    _, trials = random_search(unit_space, 3, first_value, seed=0)
    frame = trials_frame(trials, unit_space)
    assert list(frame.columns) == ["trial_id", "x", "value", "status", "seed"]
    loaded = load_trials_csv(save_trials_csv(trials, unit_space, tmp_path / "trials.csv"))
    assert loaded["trial_id"].tolist() == [0, 1, 2]
    assert loaded["x"].tolist() == [t.point["x"] for t in trials]
    assert loaded["value"].tolist() == [t.value for t in trials]
