"""
EsnNet - 다중 리저버 에코 상태 네트워크 실험 도구
명령행 애플리케이션 (generate-data / tune / run / analyze / report)
"""

import argparse
import os
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from joblib import Parallel, delayed

# 프로젝트 루트 디렉터리를 Python 경로에 추가
current_dir = os.path.dirname(__file__)
project_root = os.path.dirname(current_dir)
sys.path.append(project_root)

from src.logging_config import get_logger, log_function_call, log_performance

# 로거 설정
logger = get_logger(__name__)

from src import __version__
from src.analysis import (RunRecord, RunSet, correlation_table, engineered_reference, lag_table, runs_table,
                          save_correlation_csv, save_frame_csv, signal_excerpts, summarize_values)
from src.bptt import bptt_train, load_checkpoint, save_train_log_csv
from src.config_manager import PARAMS_FILE_VERSION, ConfigManager, ExperimentConfig
from src.exceptions import AllTrialsFailed, ConfigError
from src.experiment_manager import ExperimentManager, ExperimentReport
from src.network import (Architecture, SignalRecord, TrainedNetwork, evaluate, load_network, load_signals_csv,
                         record_signals, save_network, save_signals_csv, train_engineered, train_monolithic,
                         train_transfer)
from src.search import (BpttObjective, ReservoirObjective, default_bptt_space, default_reservoir_space,
                        random_search, save_trials_csv)
from src.tasks import DatasetSplit, make_split, nmse
from src.utils import format_duration, load_environment, load_json, relative_path, save_json

EXIT_OK = 0
EXIT_FAILED_RUNS = 1
EXIT_CONFIG_ERROR = 2
REFERENCE_CHOICES = ("engineered", "targets")


def run_repetition(regime: str, run_id: int, seed: int, config: ExperimentConfig, data: DatasetSplit,
                   base_dir: Path, source_record: Optional[SignalRecord] = None) -> Dict[str, Any]:
    """
    반복 실행 하나를 수행합니다. 실패해도 예외를 던지지 않고 실패 행을 반환합니다.

    Returns:
        Dict: run_id, seed, success, test_nmse, val_nmse, error, artifacts(base_dir 기준 상대 경로)
    """
    start_time = time.perf_counter()
    run_dir = Path(base_dir) / f"run_{run_id}"
    washout = config.task.washout
    row: Dict[str, Any] = {"run_id": run_id, "seed": seed, "success": False, "test_nmse": None,
                           "val_nmse": None, "error": None, "artifacts": {}}
    artifacts: Dict[str, str] = {}
    try:
        spec = config.network_spec(seed)
        if regime == "monolithic":
            net = train_monolithic(spec, data, config.ridge, washout)
        elif regime == "engineered":
            net, _ = train_engineered(spec, data, config.ridge, washout)
        elif regime == "bptt":
            net, train_log = bptt_train(spec, data, replace(config.bptt, seed=seed), washout)
            artifacts["train_log"] = save_train_log_csv(train_log, run_dir / "train_log.csv")
        elif regime == "transfer":
            net = train_transfer(spec, source_record, data, config.ridge, washout)
        else:
            raise ConfigError(f"알 수 없는 학습 방식입니다: {regime}")

        test_u, test_y = data.test
        record = record_signals(net, test_u)
        val_u, val_y = data.validation
        row["test_nmse"] = nmse(record.final, test_y, washout)
        row["val_nmse"] = evaluate(net, val_u, val_y, washout)
        artifacts["network"] = save_network(net, run_dir / "network.json")
        artifacts["signals"] = save_signals_csv(record, run_dir / "signals_test.csv")
        row["success"] = True
        logger.info(f"[{regime}] 실행 {run_id} 완료 (시드 {seed}): 테스트 NMSE {row['test_nmse']:.4f}")
    except Exception as e:
        logger.error(f"[{regime}] 실행 {run_id} 실패 (시드 {seed}): {e}")
        logger.exception("상세 오류 정보:")
        row["error"] = f"{type(e).__name__}: {e}"

    row["artifacts"] = {key: relative_path(path, base_dir) for key, path in sorted(artifacts.items())}
    log_performance(f"{regime} 실행 {run_id}", time.perf_counter() - start_time, success=row["success"])
    return row


def _summary(rows: Sequence[Dict[str, Any]]) -> Optional[Dict[str, Any]]:
    values = {row["run_id"]: row["test_nmse"] for row in rows if row["success"]}
    if not values:
        return None
    summary = summarize_values(values)
    return {"mean": summary.mean, "std": summary.std, "best_run_id": summary.best_run_id,
            "completed": len(values), "failed": len(rows) - len(values)}


def _best_by_validation(rows: Sequence[Dict[str, Any]]) -> Optional[Dict[str, Any]]:
    """검증 NMSE가 가장 낮은 성공 실행 (동점이면 작은 run_id)"""
    completed = sorted((row for row in rows if row["success"]), key=lambda row: row["run_id"])
    best = None
    for row in completed:
        if best is None or row["val_nmse"] < best["val_nmse"]:
            best = row
    return best


def load_source_network(path: str) -> TrainedNetwork:
    """네트워크 JSON 또는 BPTT 체크포인트에서 원본 네트워크를 불러옵니다."""
    document = load_json(path)
    if document is None:
        raise ConfigError(f"원본 네트워크 파일을 찾을 수 없습니다: {path}")
    if "optimizer" in document:
        net, _, _ = load_checkpoint(path)
        return net
    return load_network(path)


class EsnNetApp:
    def __init__(self, args: argparse.Namespace):
        """EsnNet 애플리케이션 초기화"""
        logger.info("EsnNetApp 초기화 시작")
        self.args = args

        logger.info("환경 변수 로드 중...")
        self.env_vars = load_environment()

        flags = {
            "seed": args.seed if args.seed is not None else self.env_vars["master_seed"],
            "jobs": args.jobs if args.jobs is not None else self.env_vars["jobs"],
            "output_dir": args.out if args.out is not None else self.env_vars["output_dir"],
        }
        self.config_manager = ConfigManager(args.config)
        self.config = self.config_manager.load(args.set or (), args.scale, flags)
        self.output_dir = Path(self.config.output_dir)
        logger.info("EsnNetApp 초기화 완료")

    def dispatch(self) -> int:
        commands = {
            "generate-data": self.cmd_generate_data,
            "tune": self.cmd_tune,
            "run": self.cmd_run,
            "analyze": self.cmd_analyze,
            "report": self.cmd_report,
        }
        start_time = time.perf_counter()
        log_function_call(self.args.command, scale=self.args.scale, overrides=self.args.set)
        code = commands[self.args.command]()
        elapsed = time.perf_counter() - start_time
        logger.info(f"명령 {self.args.command} 종료 (코드 {code}, 소요 {format_duration(elapsed)})")
        return code

    def _report(self, command: str, regime: str, architecture: str, data: Optional[DatasetSplit],
                manager: ExperimentManager, **kwargs) -> ExperimentReport:
        seeds: Dict[str, Any] = {"master": self.config.seed}
        if data is not None:
            seeds["data"] = list(data.seeds)
        return ExperimentReport(command=command, regime=regime, architecture=architecture,
                                config=self.config.echo(), seeds=seeds,
                                data=manager.data_files() if data is not None else [], **kwargs)

    def cmd_generate_data(self) -> int:
        """train/validation/test 분할을 CSV와 RCDS 바이너리로 저장합니다."""
        manager = ExperimentManager(self.output_dir)
        task = self.config.task
        split = make_split(task.length, task.seed)
        written = manager.save_dataset(split, task.length, task.seed)
        for path in written:
            print(path)
        return EXIT_OK

    def _run_repetitions(self, regime: str, seeds: Sequence[int], data: DatasetSplit, base_dir: Path,
                         source_record: Optional[SignalRecord] = None) -> List[Dict[str, Any]]:
        rows = Parallel(n_jobs=self.config.jobs)(
            delayed(run_repetition)(regime, run_id, seed, self.config, data, base_dir, source_record)
            for run_id, seed in enumerate(seeds)
        )
        return sorted(rows, key=lambda row: row["run_id"])

    def _register_rows(self, manager: ExperimentManager, rows: Sequence[Dict[str, Any]], prefix: str = ""):
        for row in rows:
            for key in sorted(row["artifacts"]):
                row["artifacts"][key] = f"{prefix}{row['artifacts'][key]}"
                manager.artifacts.append(row["artifacts"][key])

    def cmd_run(self) -> int:
        """설정된 학습 방식을 repetitions번 반복 실행하고 보고서를 남깁니다."""
        config = self.config
        manager = ExperimentManager(self.output_dir, f"runs/{config.regime}")
        data = manager.load_or_generate_dataset(config.task.length, config.task.seed)
        extra: Dict[str, Any] = {}
        source_record = None
        offset = 0

        if config.regime == "transfer":
            source = self._prepare_transfer_source(manager, data)
            extra["source"] = source["info"]
            source_record = source["record"]
            offset = config.transfer.source_repetitions
            if source_record is None:
                report = self._report("run", config.regime, config.architecture.value, data, manager,
                                      runs=[], summary=None, extra=extra)
                manager.save_report(report)
                return EXIT_FAILED_RUNS

        seeds = [config.run_seed(run_id, offset) for run_id in range(config.repetitions)]
        logger.info(f"[{config.regime}] 반복 실행 {config.repetitions}회 시작 (시드 {seeds}, 작업 {config.jobs})")
        rows = self._run_repetitions(config.regime, seeds, data, manager.base_dir, source_record)
        self._register_rows(manager, rows)

        manager.register(save_frame_csv(runs_table(rows), manager.path("runs.csv")))
        summary = _summary(rows)
        report = self._report("run", config.regime, config.architecture.value, data, manager,
                              runs=rows, summary=summary, extra=extra)
        report.seeds["runs"] = {str(row["run_id"]): row["seed"] for row in rows}
        path = manager.save_report(report)

        if summary is not None:
            print(f"{config.regime}: 평균 NMSE {summary['mean']:.4f} ± {summary['std']:.4f} "
                  f"(최고 실행 {summary['best_run_id']}, 성공 {summary['completed']}/{len(rows)})")
        print(path)
        return EXIT_OK if report.all_succeeded and summary is not None else EXIT_FAILED_RUNS

    def _prepare_transfer_source(self, manager: ExperimentManager, data: DatasetSplit) -> Dict[str, Any]:
        """
        전이 학습의 원본(Net 0) 네트워크를 불러오거나 BPTT로 학습한 뒤 학습 입력에서 중간 신호를 기록합니다.
        """
        config = self.config
        info: Dict[str, Any] = {}
        if config.transfer.source_network:
            path = config.transfer.source_network
            source_net = load_source_network(path)
            info["network"] = relative_path(path, manager.base_dir)
        else:
            source_dir = manager.path("source", "report.json").parent
            seeds = [config.run_seed(run_id) for run_id in range(config.transfer.source_repetitions)]
            logger.info(f"원본 BPTT 네트워크 {len(seeds)}개 학습 시작")
            rows = self._run_repetitions("bptt", seeds, data, source_dir)
            self._register_rows(manager, rows, prefix="source/")
            info["runs"] = rows
            info["summary"] = _summary(rows)
            best = _best_by_validation(rows)
            if best is None:
                logger.error("원본 BPTT 실행이 모두 실패했습니다.")
                info["error"] = "all source runs failed"
                return {"info": info, "record": None}
            info["run_id"] = best["run_id"]
            info["network"] = best["artifacts"]["network"]
            source_net = load_network(manager.base_dir / info["network"])

        train_u, _ = data.train
        record = record_signals(source_net, train_u)
        info["signals"] = manager.register(save_signals_csv(record, manager.path("source", "signals_train.csv")))
        test_u, test_y = data.test
        val_u, val_y = data.validation
        info["test_nmse"] = evaluate(source_net, test_u, test_y, config.task.washout)
        info["val_nmse"] = evaluate(source_net, val_u, val_y, config.task.washout)
        logger.info(f"원본 네트워크 선택: {info['network']} (테스트 NMSE {info['test_nmse']:.4f})")
        return {"info": info, "record": record}

    def cmd_tune(self) -> int:
        """리저버 또는 BPTT 하이퍼파라미터를 랜덤 탐색하고 best_params.json을 저장합니다."""
        config = self.config
        target = config.search.target
        manager = ExperimentManager(self.output_dir, f"tune/{target}")
        data = manager.load_or_generate_dataset(config.task.length, config.task.seed)

        if target == "reservoir":
            space = default_reservoir_space()
            objective = ReservoirObjective(data=data, architecture=config.architecture, base_params=config.reservoir,
                                           ridge_cfg=config.ridge, washout=config.task.washout,
                                           size=config.reservoir_size, nonlinearity=config.nonlinearity)
        else:
            if config.architecture != Architecture.CHAIN3:
                raise ConfigError("BPTT 탐색은 chain3 구조에서만 가능합니다.")
            space = default_bptt_space()
            objective = BpttObjective(data=data, base_cfg=config.bptt, reservoir_params=config.reservoir,
                                      washout=config.task.washout, size=config.reservoir_size or 100,
                                      nonlinearity=config.nonlinearity or "elu")

        trials_path = manager.path("trials.csv")
        try:
            best, trials = random_search(space, config.search.budget, objective, seed=config.seed,
                                         n_jobs=config.jobs, objective_seed=config.seed)
        except AllTrialsFailed as e:
            logger.error(f"탐색 실패: {e}")
            return EXIT_FAILED_RUNS

        manager.register(save_trials_csv(trials, space, trials_path))
        best_params = {"format_version": PARAMS_FILE_VERSION, "target": target, "point": best.point,
                       "value": best.value, "trial_id": best.trial_id}
        manager.register(save_json(best_params, manager.path("best_params.json")))

        rows = [{"run_id": t.trial_id, "seed": t.seed, "success": t.ok, "test_nmse": None,
                 "val_nmse": t.value if t.ok else None, "error": t.error, "artifacts": {}} for t in trials]
        summary = {"best_trial_id": best.trial_id, "best_value": best.value,
                   "completed": sum(t.ok for t in trials), "failed": sum(not t.ok for t in trials)}
        report = self._report("tune", config.regime, config.architecture.value, data, manager,
                              runs=rows, summary=summary, extra={"space": space.to_dict(), "best": best_params})
        manager.save_report(report)
        print(f"최적 시도 {best.trial_id}: 검증 NMSE {best.value:.4f} {best.point}")
        return EXIT_OK

    def _load_run_set(self, report_path: str, report: ExperimentReport) -> RunSet:
        runs = []
        for row in sorted(report.completed, key=lambda r: r["run_id"]):
            record = load_signals_csv(ExperimentManager.resolve(report_path, row["artifacts"]["signals"]))
            runs.append(RunRecord(run_id=row["run_id"], record=record, test_nmse=row["test_nmse"]))
        return RunSet(tuple(runs))

    def _engineered_reference(self, report_path: str, report: ExperimentReport) -> Optional[SignalRecord]:
        """수작업 분해 학습 보고서에서 검증 NMSE가 가장 좋은 실행의 테스트 신호"""
        engineered_path = self.args.engineered_report
        if engineered_path is None and report.regime == "engineered":
            engineered_path = report_path
        if engineered_path is None:
            return None
        engineered = ExperimentManager.load_report(engineered_path)
        if engineered.regime != "engineered":
            raise ConfigError(f"기준 보고서는 engineered 학습 결과여야 합니다: {engineered_path}")
        best = _best_by_validation(engineered.runs)
        if best is None:
            raise ConfigError(f"기준 보고서에 성공한 실행이 없습니다: {engineered_path}")
        return load_signals_csv(ExperimentManager.resolve(engineered_path, best["artifacts"]["signals"]))

    def cmd_analyze(self) -> int:
        """노드 1, 2의 상관 행렬, 신호 발췌, 지연 분석 CSV를 생성합니다."""
        report_path = self.args.report
        report = ExperimentManager.load_report(report_path)
        if report.architecture != Architecture.CHAIN3.value or report.command != "run":
            raise ConfigError(f"분석에는 chain3 실행 보고서가 필요합니다: {report_path}")
        runs = self._load_run_set(report_path, report)
        if len(runs) == 0:
            raise ConfigError(f"보고서에 성공한 실행이 없습니다: {report_path}")

        washout = int(report.config["task"]["washout"])
        test_u = runs.runs[0].record.u
        reference_kind = self.args.reference
        reference = None
        if reference_kind == "engineered":
            reference = self._engineered_reference(report_path, report)
            if reference is None:
                logger.warning("engineered 기준 보고서가 없어 수작업 목표 신호를 기준으로 사용합니다.")
                reference_kind = "targets"
        if reference is None:
            reference = engineered_reference(test_u)
        if len(reference) != len(test_u) or not (reference.u.values == test_u.values).all():
            raise ConfigError("기준 신호와 실행 신호의 테스트 입력이 다릅니다.")

        manager = ExperimentManager(self.output_dir, f"analysis/{report.regime}")
        excerpt_length = min(100, len(test_u) - washout)
        matrices = {}
        for node_index in (1, 2):
            matrix = correlation_table(reference, runs, node_index, washout)
            matrices[f"node{node_index}"] = list(matrix.labels)
            manager.register(save_correlation_csv(matrix, manager.path(f"correlation_node{node_index}.csv")))
            excerpts = signal_excerpts(reference, runs, node_index, washout, excerpt_length)
            manager.register(save_frame_csv(excerpts, manager.path(f"excerpts_node{node_index}.csv")))
            lags = lag_table(reference, runs, node_index, washout=washout)
            manager.register(save_frame_csv(lags, manager.path(f"lags_node{node_index}.csv")))

        analysis = ExperimentReport(
            command="analyze", regime=report.regime, architecture=report.architecture, config=report.config,
            seeds=report.seeds, runs=[], summary=_summary(report.runs),
            extra={"source_report": relative_path(report_path, manager.base_dir), "reference": reference_kind,
                   "labels": matrices, "excerpt_length": excerpt_length},
        )
        path = manager.save_report(analysis)
        print(path)
        return EXIT_OK

    def cmd_report(self) -> int:
        """여러 보고서의 요약 표를 출력하고 CSV로 저장합니다."""
        manager = ExperimentManager(self.output_dir, "reports")
        rows = []
        for report_path in self.args.reports:
            report = ExperimentManager.load_report(report_path)
            summary = report.summary or {}
            rows.append({
                "report": relative_path(report_path, manager.base_dir),
                "command": report.command,
                "regime": report.regime,
                "runs": len(report.runs),
                "completed": len(report.completed),
                "mean": summary.get("mean"),
                "std": summary.get("std"),
                "best_run_id": summary.get("best_run_id"),
            })
        frame = pd.DataFrame(rows, columns=["report", "command", "regime", "runs", "completed", "mean", "std",
                                            "best_run_id"])
        path = save_frame_csv(frame, manager.path("summary.csv"))
        print(frame.to_string(index=False))
        print(path)
        return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON 실험 설정 파일")
    common.add_argument("--set", action="append", metavar="K=V", help="설정 덮어쓰기 (예: task.length=2000)")
    common.add_argument("--seed", type=int, help="마스터 시드")
    common.add_argument("--jobs", type=int, help="병렬 작업 수")
    common.add_argument("--scale", choices=("desk", "full"), help="규모 프리셋")
    common.add_argument("--out", help="출력 디렉터리")

    parser = argparse.ArgumentParser(prog="esnnet", description="다중 리저버 ESN 학습/분석 도구")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    subparsers.add_parser("generate-data", parents=[common], help="NARMA-10 데이터셋 생성")
    subparsers.add_parser("tune", parents=[common], help="하이퍼파라미터 랜덤 탐색")
    subparsers.add_parser("run", parents=[common], help="학습 방식 반복 실행")

    analyze = subparsers.add_parser("analyze", parents=[common], help="중간 신호 상관 분석")
    analyze.add_argument("report", help="chain3 실행 보고서(report.json)")
    analyze.add_argument("--engineered-report", help="기준으로 쓸 engineered 실행 보고서")
    analyze.add_argument("--reference", choices=REFERENCE_CHOICES, default="engineered",
                         help="상관 기준 신호 (engineered: 최고 engineered 실행, targets: 수작업 목표 신호)")

    report = subparsers.add_parser("report", parents=[common], help="보고서 요약")
    report.add_argument("reports", nargs="+", help="보고서 파일 목록")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """명령행 진입점. 종료 코드: 0 전체 성공, 1 일부 실패, 2 설정 오류"""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        app = EsnNetApp(args)
        return app.dispatch()
    except ConfigError as e:
        logger.error(f"설정 오류: {e}")
        print(f"설정 오류: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except Exception as e:
        logger.error(f"명령 실행 실패: {e}")
        logger.exception("상세 오류 정보:")
        return EXIT_FAILED_RUNS


if __name__ == "__main__":
    sys.exit(main())
