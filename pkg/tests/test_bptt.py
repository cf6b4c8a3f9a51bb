"""BPTT 배치 구성, 순전파 손실, 역전파 기울기, 파라미터 갱신, 학습 루프 테스트"""

from dataclasses import replace

import numpy as np
import pytest

from src.bptt import (AdamOptimizer, BpttConfig, apply_update, backward, bptt_train, clip_by_global_norm, epoch_seed,
                      evaluate_bptt_config, forward_train, global_norm, gradient_check, init_model,
                      learning_rate, load_checkpoint, make_batches, population_stats, save_checkpoint,
                      save_train_log_csv, update_running_stats)
from src.network import chain3_spec, evaluate, forward, monolithic_spec
from src.reservoir import ReservoirParams, run
from src.tasks import make_split


@pytest.fixture
def tiny_model():
    return init_model(chain3_spec(ReservoirParams(), seed=0, size=10), seed=0)


@pytest.fixture
def tiny_batch(small_split, tiny_bptt_config):
    return make_batches(small_split.train, tiny_bptt_config, epoch_seed=0)[0]


def test_learning_rate_halves():
    cfg = BpttConfig()
    assert learning_rate(cfg, 59) == 0.0005
    assert learning_rate(cfg, 60) == 0.00025


@pytest.mark.parametrize("kwargs", [{"epochs": 0}, {"chunk_length": 30, "chunk_washout": 30},
                                    {"batch_size": 0}, {"grad_clip_norm": 0.0}, {"grad_noise_eta": -1.0},
                                    {"bn_momentum": 1.0}])
def test_invalid_config(kwargs):
    with pytest.raises(ValueError):
        BpttConfig(**kwargs)


def test_default_batch_arithmetic():
    zeros = np.zeros(100000)
    batches = make_batches((zeros, zeros), BpttConfig(), epoch_seed=0)
    assert sum(batch.size for batch in batches) == 1000
    assert sum(batch.size == 60 for batch in batches) == 16
    assert batches[-1].size == 40


def test_batches_partition_series():
    u = np.arange(1000, dtype=float)
    cfg = BpttConfig(chunk_length=100, chunk_washout=10, batch_size=3)
    batches = make_batches((u, -u), cfg, epoch_seed=5)
    ids = np.concatenate([batch.chunk_ids for batch in batches])
    assert sorted(ids.tolist()) == list(range(10))
    for batch in batches:
        for row, chunk in zip(batch.u, batch.chunk_ids):
            assert np.array_equal(row, u[chunk * 100:(chunk + 1) * 100])
        assert np.array_equal(batch.y, -batch.u)


def test_same_epoch_seed_same_shuffle():
    u = np.arange(500, dtype=float)
    cfg = BpttConfig(chunk_length=50, chunk_washout=5, batch_size=4)
    first = [b.chunk_ids.tolist() for b in make_batches((u, u), cfg, epoch_seed(3, 1))]
    second = [b.chunk_ids.tolist() for b in make_batches((u, u), cfg, epoch_seed(3, 1))]
    assert first == second


def test_series_shorter_than_chunk_rejected():
    with pytest.raises(ValueError):
        make_batches((np.zeros(10), np.zeros(10)), BpttConfig(chunk_length=20, chunk_washout=5), 0)


def test_init_model_requires_chain3():
    with pytest.raises(ValueError):
        init_model(monolithic_spec(ReservoirParams(), 0, size=10), seed=0)


def test_init_params_shapes(tiny_model):
    assert tiny_model.params["esn1.w"].shape == (10,)
    assert tiny_model.params["esn1.b0"].shape == (1,)
    assert np.array_equal(tiny_model.params["esn2.gamma"], np.ones(10))
    assert np.array_equal(tiny_model.params["esn3.beta"], np.zeros(10))


def test_initial_loss_is_finite(tiny_model, tiny_batch, tiny_bptt_config):
    loss, _ = forward_train(tiny_model, tiny_batch, tiny_bptt_config)
    assert np.isfinite(loss) and loss > 0


def test_eval_mode_loss_is_repeatable(tiny_model, tiny_batch, tiny_bptt_config):
    first, _ = forward_train(tiny_model, tiny_batch, tiny_bptt_config, training=False)
    second, _ = forward_train(tiny_model, tiny_batch, tiny_bptt_config, training=False)
    assert first == second


def test_washout_mask_changes_loss(tiny_model, tiny_batch, tiny_bptt_config):
    masked, _ = forward_train(tiny_model, tiny_batch, tiny_bptt_config)
    unmasked, _ = forward_train(tiny_model, tiny_batch, tiny_bptt_config, mask_washout=False)
    assert masked != unmasked


@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(seed, tiny_batch, tiny_bptt_config):
    model = init_model(chain3_spec(ReservoirParams(), seed=seed, size=10), seed=seed)
    assert gradient_check(model, tiny_batch, tiny_bptt_config, h=1e-5) < 1e-4


def test_gradients_match_finite_differences_tanh(tiny_batch, tiny_bptt_config):
    model = init_model(chain3_spec(ReservoirParams(), seed=1, size=8, nonlinearity="tanh"), seed=1)
    assert gradient_check(model, tiny_batch, tiny_bptt_config, h=1e-5) < 1e-4


def test_severed_path_has_zero_gradient(tiny_model, tiny_batch, tiny_bptt_config):
    reservoir = tiny_model.reservoirs["esn2"]
    W_in = np.array(reservoir.W_in)
    W_in[:, 1] = 0.0
    tiny_model.reservoirs["esn2"] = replace(reservoir, W_in=W_in)
    _, cache = forward_train(tiny_model, tiny_batch, tiny_bptt_config)
    grads = backward(cache)
    for key in ("esn1.w", "esn1.b0", "esn1.gamma", "esn1.beta"):
        assert np.all(grads[key] == 0)
    assert np.any(grads["esn2.w"] != 0)


def test_loss_scale_scales_gradients(tiny_model, tiny_batch, tiny_bptt_config):
    _, cache = forward_train(tiny_model, tiny_batch, tiny_bptt_config)
    _, doubled_cache = forward_train(tiny_model, tiny_batch, tiny_bptt_config, loss_scale=2.0)
    grads = backward(cache)
    doubled = backward(doubled_cache)
    for key in grads:
        np.testing.assert_allclose(doubled[key], 2.0 * grads[key], rtol=1e-12, atol=1e-15)


def test_clip_to_exact_norm():
    grads = {"a.w": np.array([3.0, 4.0]), "b.b0": np.array([0.0])}
    clipped, norm = clip_by_global_norm(grads, max_norm=2.5)
    assert norm == 5.0
    assert global_norm(clipped) == pytest.approx(2.5, rel=1e-12)
    unchanged, _ = clip_by_global_norm(grads, max_norm=10.0)
    assert np.array_equal(unchanged["a.w"], grads["a.w"])


def test_zero_gradients_only_decay_readout_weights():
    params = {"esn1.w": np.array([1.0, -2.0]), "esn1.gamma": np.array([1.0, 1.0])}
    grads = {key: np.zeros_like(value) for key, value in params.items()}
    cfg = BpttConfig(grad_noise_eta=0.0, weight_decay=0.1)
    updated = apply_update(params, grads, cfg, step_index=1, optimizer=AdamOptimizer(params), lr=0.5)
    np.testing.assert_allclose(updated["esn1.w"], params["esn1.w"] * (1 - 0.5 * 0.1))
    assert np.array_equal(updated["esn1.gamma"], params["esn1.gamma"])


def test_gradient_noise_requires_generator():
    params = {"esn1.w": np.ones(2)}
    with pytest.raises(ValueError):
        apply_update(params, {"esn1.w": np.zeros(2)}, BpttConfig(grad_noise_eta=0.01), 1, AdamOptimizer(params), 0.1)


def test_adam_first_step_moves_by_lr():
    params = {"x.b0": np.array([1.0])}
    optimizer = AdamOptimizer(params)
    updated = optimizer.step(params, {"x.b0": np.array([0.3])}, lr=0.01)
    assert updated["x.b0"][0] == pytest.approx(0.99, abs=1e-9)
    assert optimizer.t == 1


def test_first_running_update_equals_batch_stats(tiny_model, tiny_batch, small_split, tiny_bptt_config):
    next_batch = make_batches(small_split.train, tiny_bptt_config, epoch_seed=0)[1]
    _, cache = forward_train(tiny_model, tiny_batch, tiny_bptt_config)
    update_running_stats(tiny_model, cache, momentum=0.99)
    for name, node_cache in cache.nodes.items():
        np.testing.assert_allclose(tiny_model.running_mean[name], node_cache.batch_mean, rtol=1e-12)
        np.testing.assert_allclose(tiny_model.running_var[name], node_cache.batch_var, rtol=1e-12)

    _, second = forward_train(tiny_model, next_batch, tiny_bptt_config)
    update_running_stats(tiny_model, second, momentum=0.99)
    assert tiny_model.bn_updates == 2
    for name in second.nodes:
        expected = (0.99 * cache.nodes[name].batch_var + second.nodes[name].batch_var) / 1.99
        np.testing.assert_allclose(tiny_model.running_var[name], expected, rtol=1e-12)


def test_population_stats_cover_all_training_chunks(tiny_model, small_split, tiny_bptt_config):
    means, variances = population_stats(tiny_model, small_split.train, tiny_bptt_config)
    u, _ = small_split.train
    L = tiny_bptt_config.chunk_length
    chunks = u.values[:len(u) // L * L].reshape(-1, L)
    states = np.concatenate([run(tiny_model.reservoirs["esn1"], chunk, washout=0).states for chunk in chunks])
    np.testing.assert_allclose(means["esn1"], states.mean(axis=0), rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(variances["esn1"], states.var(axis=0), rtol=1e-9, atol=1e-12)
    assert set(means) == {"esn1", "esn2", "esn3"}
    assert all(np.all(v > 0) for v in variances.values())


def test_snapshot_uses_training_set_statistics(small_split, tiny_bptt_config):
    net, log = bptt_train(chain3_spec(ReservoirParams(), 6, size=10), small_split, tiny_bptt_config, washout=50)
    model = init_model(chain3_spec(ReservoirParams(), 6, size=10), seed=0)
    means, variances = population_stats(model, small_split.train, tiny_bptt_config)
    # 노드 1의 상태 통계는 학습 파라미터와 무관
    np.testing.assert_allclose(net.batch_norm["esn1"].running_mean, means["esn1"], rtol=1e-12)
    np.testing.assert_allclose(net.batch_norm["esn1"].running_var, variances["esn1"], rtol=1e-12)
    u, y = small_split.validation
    assert log.val_nmse[0] == evaluate(net, u, y, 50)


def test_one_epoch_smoke(medium_split):
    cfg = BpttConfig(epochs=1, batch_size=5, chunk_length=50, chunk_washout=10, seed=3)
    net, log = bptt_train(chain3_spec(ReservoirParams(), 3, size=10), medium_split, cfg, washout=50)
    assert len(log) == 1
    assert log.epoch == [0]
    assert net.metadata["best_val_nmse"] == log.val_nmse[0]
    assert all(net.batch_norm[name] is not None for name in ("esn1", "esn2", "esn3"))


def test_training_is_deterministic(small_split, tiny_bptt_config):
    spec = chain3_spec(ReservoirParams(), 4, size=10)
    cfg = replace(tiny_bptt_config, grad_noise_eta=0.01, seed=4)
    _, first = bptt_train(spec, small_split, cfg, washout=50)
    _, second = bptt_train(spec, small_split, cfg, washout=50)
    assert first.train_loss == second.train_loss
    assert first.val_nmse == second.val_nmse


def test_checkpoint_and_train_log(tmp_path, small_split, tiny_bptt_config):
    spec = chain3_spec(ReservoirParams(), 5, size=10)
    checkpoint = tmp_path / "checkpoint.json"
    _, log = bptt_train(spec, small_split, tiny_bptt_config, washout=50, checkpoint_path=checkpoint)
    net, optimizer, epoch = load_checkpoint(checkpoint)
    assert epoch == 0
    assert optimizer.t == len(make_batches(small_split.train, tiny_bptt_config, epoch_seed(0, 0)))
    u, _ = small_split.test
    assert len(forward(net, u).final) == len(u)

    path = save_train_log_csv(log, tmp_path / "train_log.csv")
    header = open(path, encoding="utf-8").readline().strip()
    assert header == "epoch,train_loss,val_nmse,lr"


def test_save_checkpoint_roundtrip(tmp_path, tiny_model, tiny_bptt_config):
    optimizer = AdamOptimizer(tiny_model.params)
    path = save_checkpoint(tmp_path / "ckpt.json", tiny_model, optimizer, epoch=7, cfg=tiny_bptt_config)
    net, loaded_optimizer, epoch = load_checkpoint(path)
    assert epoch == 7
    assert set(loaded_optimizer.m) == set(tiny_model.params)
    np.testing.assert_array_equal(net.readouts["esn3"].w, tiny_model.params["esn3.w"])


def test_evaluate_bptt_config(small_split, tiny_bptt_config):
    point = {"lr0": 1e-3, "weight_decay": 1e-4, "grad_noise_eta": 1e-3, "batch_size": 5}
    value = evaluate_bptt_config(point, small_split, tiny_bptt_config, ReservoirParams(), seed=0, washout=50, size=10)
    assert value >= 0


@pytest.mark.slow
def test_loss_decreases_over_training():
    data = make_split(20000, 0)
    cfg = BpttConfig(epochs=11, lr0=0.005, grad_noise_eta=0.0, seed=0)
    _, log = bptt_train(chain3_spec(ReservoirParams(), 0), data, cfg)
    assert log.train_loss[10] < log.train_loss[0]
    # 상수(편향) 예측기는 검증 NMSE 1 근처에 머묾
    assert min(log.val_nmse) < 0.8
