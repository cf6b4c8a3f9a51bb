"""
실험 기본 설정 모음
설정 파일과 --set 덮어쓰기는 이 구조에 병합되며, 여기에 없는 키는 거부됩니다.
"""

DEFAULT_LAMBDA_GRID = [1e-09, 1e-08, 1e-07, 1e-06, 1e-05, 1e-04, 1e-03, 1e-02, 1e-01, 1.0, 10.0, 100.0, 1000.0]

REGIMES = ("monolithic", "engineered", "bptt", "transfer")
ARCHITECTURES = ("monolithic", "chain3")
SEARCH_TARGETS = ("reservoir", "bptt")

DEFAULT_EXPERIMENT_CONFIG = {
    "seed": 42,
    "jobs": 1,
    "output_dir": "results",
    "repetitions": 10,
    "architecture": "chain3",
    "regime": "engineered",
    "task": {
        "length": 100000,
        "seed": 0,
        "washout": 200,
    },
    "reservoir": {
        # null이면 구조별 기본값 (chain3: 100 노드 ELU, monolithic: 300 노드 tanh)
        "size": None,
        "nonlinearity": None,
        "spectral_radius": 0.9,
        "input_scaling": 0.5,
        "bias_scaling": 0.1,
        "input_sparsity": 1.0,
        "recurrent_sparsity": 0.1,
        "params_file": None,
    },
    "ridge": {
        "lambda_grid": DEFAULT_LAMBDA_GRID,
        "folds": 5,
    },
    "bptt": {
        "epochs": 120,
        "batch_size": 60,
        "lr0": 0.0005,
        "lr_halving_epoch": 60,
        "weight_decay": 0.0001,
        "grad_clip_norm": 1.0,
        "grad_noise_eta": 0.01,
        "chunk_length": 100,
        "chunk_washout": 30,
        "beta1": 0.9,
        "beta2": 0.999,
        "adam_eps": 1e-08,
        "bn_momentum": 0.99,
        "bn_eps": 1e-05,
    },
    "transfer": {
        "source_network": None,
        "train_source": True,
        "source_repetitions": 10,
    },
    "search": {
        "target": "reservoir",
        "budget": 100,
    },
}

SCALE_PRESETS = {
    "desk": {
        "task": {"length": 20000},
        # 스텝 수가 적은 축소 규모(에폭당 4 배치)에서는 큰 학습률, 잡음 없음
        "bptt": {"epochs": 40, "lr0": 0.005, "grad_noise_eta": 0.0},
        "transfer": {"source_repetitions": 3},
        "repetitions": 3,
    },
    "full": {
        "task": {"length": 100000},
        "bptt": {"epochs": 120},
        "transfer": {"source_repetitions": 10},
        "repetitions": 10,
    },
}

# 설정 반향(echo)에서 제외되는 키 (결과에 영향을 주지 않음)
NON_REPRODUCIBLE_KEYS = ("jobs", "output_dir")
