"""NARMA-10 과제, 분해 목표, NMSE, 데이터셋 저장 형식 테스트"""

import numpy as np
import pytest

from src.exceptions import DimensionMismatch, DivergentSeries, ZeroVariance
from src.tasks import (BINARY_MAGIC, Series, SeriesRole, delay_target, gen_input, load_split_binary,
                       load_split_csv, make_split, narma10, narma_tail_target, nmse, product_target,
                       save_split_binary, save_split_csv)


def test_input_range_and_determinism():
    u = gen_input(1000, 3)
    assert u.role == SeriesRole.INPUT
    assert u.values.min() >= 0.0 and u.values.max() <= 0.5
    assert np.array_equal(u.values, gen_input(1000, 3).values)


def test_input_moments():
    u = gen_input(100000, 0).values
    assert u.mean() == pytest.approx(0.25, abs=0.005)
    assert u.var() == pytest.approx(0.02083, abs=0.001)


def test_narma_initial_values():
    y = narma10(gen_input(10, 0)).values
    assert y[0] == pytest.approx(0.1, abs=1e-15)
    assert y[1] == pytest.approx(0.1305, abs=1e-15)
    assert y[2] == pytest.approx(0.1406540125, abs=1e-12)


def test_narma_first_values_ignore_input():
    a = narma10(np.full(9, 0.4)).values
    b = narma10(np.zeros(9)).values
    assert np.array_equal(a, b)


def test_narma_divergence_detected():
    with pytest.raises(DivergentSeries):
        narma10(np.full(50, 5.0))


def test_delay_target():
    u = gen_input(40, 1).values
    y1 = delay_target(u).values
    assert np.all(y1[:9] == 0)
    assert y1[9] == u[0]
    twice = delay_target(y1).values
    assert np.array_equal(twice[18:], u[:-18])


def test_product_target():
    u = gen_input(30, 2).values
    assert np.all(product_target(u, np.zeros(30)).values == 0)
    y1 = gen_input(30, 3).values
    assert np.array_equal(product_target(np.ones(30), y1).values, y1)
    np.testing.assert_array_equal(product_target(u, delay_target(u)).values[9:], u[9:] * u[:-9])
    with pytest.raises(DimensionMismatch):
        product_target(u, np.zeros(29))


def test_tail_target_with_dead_input():
    y3 = narma_tail_target(np.zeros(5)).values
    assert y3[0] == pytest.approx(0.1, abs=1e-15)
    assert y3[1] == pytest.approx(0.1305, abs=1e-15)


def test_decomposition_reproduces_narma():
    u = gen_input(5000, 4)
    composed = narma_tail_target(product_target(u, delay_target(u)))
    assert np.max(np.abs(composed.values - narma10(u).values)) <= 1e-12


def test_tail_target_is_causal():
    u = gen_input(200, 5).values
    y2 = product_target(u, delay_target(u)).values.copy()
    reference = narma10(u).values
    n0 = 100
    y2[n0] += 0.05
    perturbed = narma_tail_target(y2).values
    assert np.array_equal(perturbed[:n0 + 1], reference[:n0 + 1])
    assert perturbed[n0 + 1] != reference[n0 + 1]


def test_nmse_properties():
    y = narma10(gen_input(500, 6)).values
    assert nmse(y, y) == 0.0
    assert nmse(np.full_like(y, y.mean()), y) == pytest.approx(1.0, abs=1e-12)
    c = 0.05
    assert nmse(y + c, y) == pytest.approx(c ** 2 / np.var(y), rel=1e-10)


def test_nmse_washout_excludes_prefix():
    y = narma10(gen_input(300, 7)).values
    y_hat = y.copy()
    y_hat[:50] += 10.0
    assert nmse(y_hat, y, washout=50) == 0.0
    assert nmse(y_hat, y) > 0.0


def test_nmse_errors():
    with pytest.raises(ZeroVariance):
        nmse(np.ones(10), np.ones(10))
    with pytest.raises(DimensionMismatch):
        nmse(np.ones(10), np.ones(9))


def test_series_rejects_non_finite():
    with pytest.raises(ValueError):
        Series(np.array([0.1, np.inf]))
    with pytest.raises(DimensionMismatch):
        Series(np.zeros((2, 2)))


def test_make_split_uses_consecutive_seeds():
    split = make_split(300, 10)
    assert split.seeds == (10, 11, 12)
    assert [name for name, _ in split.items()] == ["train", "validation", "test"]
    u_train, y_train = split.train
    u_test, _ = split.test
    assert len(u_train) == len(y_train) == 300
    assert not np.array_equal(u_train.values, u_test.values)
    assert np.array_equal(split.validation[0].values, gen_input(300, 11).values)


def test_binary_format(tmp_path):
    u, y = make_split(100, 0).train
    path = tmp_path / "train.rcds"
    save_split_binary(u, y, path)
    raw = path.read_bytes()
    assert raw[:4] == BINARY_MAGIC
    assert int.from_bytes(raw[4:8], "little") == 100
    assert len(raw) == 8 + 16 * 100
    loaded_u, loaded_y = load_split_binary(path)
    assert np.array_equal(loaded_u.values, u.values)
    assert np.array_equal(loaded_y.values, y.values)


def test_binary_rejects_wrong_magic(tmp_path):
    path = tmp_path / "bad.rcds"
    path.write_bytes(b"XXXX" + (0).to_bytes(4, "little"))
    with pytest.raises(ValueError):
        load_split_binary(path)


@pytest.mark.parametrize("length", [100, 2000])
def test_csv_is_exact_and_stable(tmp_path, length):
    u, y = make_split(length, 1).test
    first = save_split_csv(u, y, tmp_path / "a.csv")
    second = save_split_csv(u, y, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    loaded_u, loaded_y = load_split_csv(first)
    assert np.array_equal(loaded_u.values, u.values)
    assert np.array_equal(loaded_y.values, y.values)
    assert second.endswith("b.csv")
