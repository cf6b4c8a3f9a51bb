"""리지 회귀 리드아웃과 블록 교차검증 테스트"""

import numpy as np
import pytest

from src.exceptions import DimensionMismatch, SingularSystem
from src.readout import (ReadoutWeights, RidgeConfig, cv_select_lambda, fit_with_cv, fold_blocks, predict,
                         ridge_fit)


def test_exact_line_through_origin():
    weights = ridge_fit([[1.0], [2.0]], [2.0, 4.0], 0.0)
    np.testing.assert_allclose(weights.w, [2.0])
    assert weights.b0 == pytest.approx(0.0, abs=1e-12)


def test_infinite_shrinkage_leaves_mean():
    weights = ridge_fit([[1.0], [2.0]], [2.0, 4.0], 1e12)
    assert abs(weights.w[0]) < 1e-9
    assert weights.b0 == pytest.approx(3.0, abs=1e-9)


def test_normal_equation_residual():
    rng = np.random.default_rng(0)
    S = rng.normal(size=(50, 5))
    y = rng.normal(size=50)
    lam = 0.1
    weights = ridge_fit(S, y, lam)
    Sc = S - S.mean(axis=0)
    lhs = (Sc.T @ Sc + lam * np.eye(5)) @ weights.w
    rhs = Sc.T @ (y - y.mean())
    assert np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs) < 1e-9
    # 편향은 정규화되지 않으므로 잔차 평균은 0
    assert np.mean(S @ weights.w + weights.b0 - y) == pytest.approx(0.0, abs=1e-12)


def test_interpolates_consistent_system():
    rng = np.random.default_rng(1)
    S = rng.normal(size=(20, 3))
    y = S @ np.array([0.5, -1.0, 2.0]) + 0.7
    weights = ridge_fit(S, y, 0.0)
    np.testing.assert_allclose(predict(weights, S), y, atol=1e-9)


def test_singular_system_without_regularization():
    S = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    with pytest.raises(SingularSystem):
        ridge_fit(S, [1.0, 2.0, 3.0], 0.0)


def test_mismatched_lengths_rejected():
    with pytest.raises(DimensionMismatch):
        ridge_fit(np.zeros((5, 2)), np.zeros(4), 1.0)


def test_negative_lambda_rejected():
    with pytest.raises(ValueError):
        ridge_fit(np.eye(3), np.ones(3), -1.0)


def test_monotone_shrinkage():
    rng = np.random.default_rng(2)
    S = rng.normal(size=(40, 6))
    y = rng.normal(size=40)
    norms = [np.linalg.norm(ridge_fit(S, y, lam).w) for lam in (1e-6, 1e-3, 1.0, 1e3)]
    assert all(a >= b - 1e-12 for a, b in zip(norms, norms[1:]))


def test_predict_constant_and_dot_product():
    np.testing.assert_allclose(predict(ReadoutWeights(w=np.zeros(3), b0=1.5), np.ones((4, 3))), np.full(4, 1.5))
    assert predict(ReadoutWeights(w=np.array([1.0, 1.0]), b0=0.0), [[2.0, 3.0]])[0] == 5.0


def test_predict_rejects_wrong_width():
    with pytest.raises(DimensionMismatch):
        predict(ReadoutWeights(w=np.zeros(3), b0=0.0), np.zeros((2, 4)))


def test_readout_weights_must_be_finite():
    with pytest.raises(ValueError):
        ReadoutWeights(w=np.array([1.0, np.nan]), b0=0.0)


def test_fold_blocks_are_contiguous_partition():
    blocks = fold_blocks(103, 5)
    assert blocks[0].start == 0 and blocks[-1].stop == 103
    assert all(a.stop == b.start for a, b in zip(blocks, blocks[1:]))


def test_single_lambda_grid():
    rng = np.random.default_rng(3)
    result = cv_select_lambda(rng.normal(size=(30, 2)), rng.normal(size=30), RidgeConfig(lambda_grid=[0.01]))
    assert result.best_lambda == 0.01
    assert result.scores.shape == (1,)


def test_duplicate_lambdas_have_identical_scores():
    rng = np.random.default_rng(4)
    result = cv_select_lambda(rng.normal(size=(30, 2)), rng.normal(size=30),
                              RidgeConfig(lambda_grid=[1e-3, 1e-3, 1.0]))
    assert result.scores[0] == result.scores[1]


def test_ties_choose_larger_lambda():
    # 특성이 모두 0이면 모든 λ에서 w=0 이므로 점수가 같음
    y = np.random.default_rng(5).normal(size=50)
    result = cv_select_lambda(np.zeros((50, 2)), y, RidgeConfig(lambda_grid=[0.1, 1.0, 10.0]))
    assert result.scores[0] == result.scores[1] == result.scores[2]
    assert result.best_lambda == 10.0


def test_noiseless_data_prefers_smallest_lambda():
    rng = np.random.default_rng(6)
    S = rng.normal(size=(100, 3))
    y = S @ np.array([1.0, -2.0, 0.5]) + 1.0
    result = cv_select_lambda(S, y, RidgeConfig(lambda_grid=[1e-6, 1e-3, 1.0, 1e3]))
    assert result.best_lambda == 1e-6
    assert np.all(np.diff(result.scores) >= 0)


@pytest.mark.parametrize("n, folds", [(60, 4), (1000, 5)])
def test_cv_matches_brute_force_refit(n, folds):
    rng = np.random.default_rng(7)
    S = rng.normal(size=(n, 6))
    y = S @ rng.normal(size=6) + 0.5 * rng.normal(size=n)
    cfg = RidgeConfig(lambda_grid=[1e-3, 1.0, 10.0, 100.0, 1e3], folds=folds)
    result = cv_select_lambda(S, y, cfg)
    brute = []
    for i, lam in enumerate(cfg.lambda_grid):
        scores = []
        for block in fold_blocks(n, folds):
            keep = np.ones(n, dtype=bool)
            keep[block] = False
            weights = ridge_fit(S[keep], y[keep], lam)
            residual = predict(weights, S[block]) - y[block]
            scores.append(np.mean(residual ** 2) / np.var(y[block]))
        assert result.scores[i] == pytest.approx(np.mean(scores), rel=1e-8)
        brute.append(np.mean(scores))
    assert result.best_lambda == cfg.lambda_grid[int(np.argmin(brute))]


def test_fit_with_cv_refits_on_all_data():
    rng = np.random.default_rng(8)
    S = rng.normal(size=(40, 2))
    y = S @ np.array([1.0, 1.0])
    cfg = RidgeConfig(lambda_grid=[1e-6, 1.0])
    np.testing.assert_allclose(fit_with_cv(S, y, cfg).w, ridge_fit(S, y, 1e-6).w)


@pytest.mark.parametrize("kwargs", [{"lambda_grid": []}, {"lambda_grid": [1.0, 0.1]}, {"folds": 1},
                                    {"lambda_grid": [-1.0]}])
def test_invalid_ridge_config(kwargs):
    with pytest.raises(ValueError):
        RidgeConfig(**kwargs)
