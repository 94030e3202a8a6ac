"""
End-to-end continual-learning loop on synthetic tasks.

Each session trains one task from the base model, folds its delta into the
session state and appends the task's prototypes. After every session the
accuracy matrix row is filled: seen tasks through their reconstructed
models (or through routing in task-agnostic mode), unseen tasks through
routing over the prototypes seen so far.
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from tabulate import tabulate

from lib.fusion.fusion_core import SessionReport, SessionState, run_session, session_report
from lib.harness.config import BenchmarkConfig
from lib.harness.metrics import AccuracyMatrix
from lib.harness.synthetic_tasks import SyntheticTask, gen_pretraining_task, gen_tasks
from lib.harness.toy_model import ToyModel, base_features, pretrain_base, train_task
from lib.routing.prototypes import PrototypeSet, compute_prototypes, group_by_label
from lib.routing.router import predict_with_models, reconstruct_task_models
from lib.store.container import content_hash
from lib.store.tensor_store import FlatVector
from lib.utils.enums import ReportFormat
from lib.utils.errors import BadConfigError, EmptyInputError
from lib.utils.utilities import format_float, render_csv

logger = logging.getLogger(__name__)


class BenchmarkMetrics(BaseModel):
    transfer: Optional[float]
    average: float
    last: float
    backward_transfer: float
    forgetting: float
    zero_shot_mean: float
    individual_mean: float
    reconstructed_mean: float
    task_agnostic_last: float


class BenchmarkResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    matrix: AccuracyMatrix
    state: SessionState
    base: FlatVector
    metrics: BenchmarkMetrics
    individual_accuracies: List[float]
    reconstructed_accuracies: List[float]
    task_agnostic_accuracies: List[float]
    delta_l1: List[float]
    session_reports: List[SessionReport]


class KSweepRow(BaseModel):
    k: int
    transfer: Optional[float]
    task_agnostic_last: float


class KSweepTable(BaseModel):
    rows: List[KSweepRow]

    @property
    def transfer_spread(self) -> Optional[float]:
        values = [row.transfer for row in self.rows if row.transfer is not None]
        return max(values) - min(values) if values else None

    @property
    def last_spread(self) -> float:
        values = [row.task_agnostic_last for row in self.rows]
        return max(values) - min(values)


def task_prototypes(task: SyntheticTask, base: ToyModel, task_id: int) -> PrototypeSet:
    """Prototypes from base-model features of the training samples; text feature is the base class row."""
    features, labels = task.train_data()
    image_features = group_by_label(base_features(features), labels)
    text_features = {str(label): base.weights[label] for label in range(task.class_count)}
    return compute_prototypes(image_features, text_features, task_id)


def _routed_accuracy(
    task: SyntheticTask,
    models: Sequence[ToyModel],
    prototypes: Sequence[Optional[PrototypeSet]],
    k: int,
) -> float:
    features, labels = task.test_data()
    predictions = predict_with_models(features, models, prototypes, k)
    return float(np.mean(predictions == labels))


def run_benchmark(
    tasks: Sequence[SyntheticTask],
    config: BenchmarkConfig,
    base: Optional[ToyModel] = None,
) -> BenchmarkResult:
    """
    Run one session per task, in the given order.

    :param tasks: Tasks in learning order.
    :param config: Training mode, step count, learning rate and routing K.
    :param base: Pre-trained base model; pre-trained from the config seed when omitted.
    :raises EmptyInputError: If ``tasks`` is empty.
    """
    if not tasks:
        raise EmptyInputError("at least one task is required", "run_benchmark")
    if base is None:
        first = tasks[0]
        pretraining = gen_pretraining_task(config.seed, first.feature_dim, first.class_count, first.spread)
        base = pretrain_base(pretraining, config.pretrain_steps, config.lr)
    base_vec = base.to_flat()
    base_hash = content_hash(base_vec)

    task_count = len(tasks)
    matrix = AccuracyMatrix(task_count)
    for t, task in enumerate(tasks):
        matrix.update(0, t, base.accuracy(*task.test_data()))

    state: Optional[SessionState] = None
    individual: List[float] = []
    delta_l1: List[float] = []
    reports: List[SessionReport] = []
    models: List[ToyModel] = []
    for session, task in enumerate(tasks, start=1):
        trained, delta = train_task(task, base, config.mode, config.steps, config.lr, task_id=session - 1)
        individual.append(trained.accuracy(*task.test_data()))
        delta_l1.append(delta.l1)

        state = run_session(state, delta, task_prototypes(task, base, session - 1), base_hash)
        reports.append(session_report(state))
        models = reconstruct_task_models(state, base_vec)

        for t, eval_task in enumerate(tasks):
            if t < session and not config.task_agnostic:
                accuracy = models[t].accuracy(*eval_task.test_data())
            else:
                accuracy = _routed_accuracy(eval_task, models, state.prototypes, config.k)
            matrix.update(session, t, accuracy)
        logger.info(f"Session {session}/{task_count}: row {np.round(matrix.session_row(session), 4).tolist()}")

    reconstructed = [model.accuracy(*task.test_data()) for model, task in zip(models, tasks)]
    agnostic = [_routed_accuracy(task, models, state.prototypes, config.k) for task in tasks]
    all_metrics = matrix.compute_all()
    metrics = BenchmarkMetrics(
        transfer=None if config.task_agnostic else all_metrics["transfer"],
        average=all_metrics["average"],
        last=all_metrics["last"],
        backward_transfer=all_metrics["backward_transfer"],
        forgetting=all_metrics["forgetting"],
        zero_shot_mean=all_metrics["zero_shot_mean"],
        individual_mean=float(np.mean(individual)),
        reconstructed_mean=float(np.mean(reconstructed)),
        task_agnostic_last=float(np.mean(agnostic)),
    )
    logger.info(f"Benchmark finished: {metrics.model_dump()}")
    return BenchmarkResult(
        matrix=matrix,
        state=state,
        base=base_vec,
        metrics=metrics,
        individual_accuracies=individual,
        reconstructed_accuracies=reconstructed,
        task_agnostic_accuracies=agnostic,
        delta_l1=delta_l1,
        session_reports=reports,
    )


def configured_tasks(config: BenchmarkConfig) -> List[SyntheticTask]:
    """Generate the config's tasks, with few-shot sample counts and task order applied."""
    tasks = gen_tasks(
        config.seed,
        config.task_count,
        config.feature_dim,
        config.class_count,
        config.spread,
        relatedness=config.relatedness,
        train_per_class=config.samples_per_class,
        test_per_class=config.test_per_class,
    )
    if config.task_order is not None:
        tasks = [tasks[index] for index in config.task_order]
    return tasks


def run_configured_benchmark(config: BenchmarkConfig) -> Tuple[List[SyntheticTask], BenchmarkResult]:
    tasks = configured_tasks(config)
    return tasks, run_benchmark(tasks, config)


def sweep_k(config: BenchmarkConfig, k_values: Sequence[int]) -> KSweepTable:
    """
    Train once, then re-evaluate routing for each K against the final state.

    Per K, the transfer analog is the accuracy on task ``t`` when routing
    over tasks learned before it (the first ``t - 1`` tasks of the final
    state), averaged over tasks 2..T; the task-agnostic last is the routed
    accuracy over all tasks.
    """
    unique = sorted(set(k_values))
    if not unique or unique[0] < 1:
        logger.error(f"Invalid K values {list(k_values)}")
        raise BadConfigError("K values must be a non-empty set of integers >= 1", "sweep_k")

    tasks, result = run_configured_benchmark(config)
    models = reconstruct_task_models(result.state, result.base)
    prototypes = result.state.prototypes

    rows = []
    for k in unique:
        transfer = None
        if len(tasks) > 1:
            transfer = float(np.mean([
                _routed_accuracy(tasks[t], models[:t], prototypes[:t], k) for t in range(1, len(tasks))
            ]))
        last = float(np.mean([_routed_accuracy(task, models, prototypes, k) for task in tasks]))
        rows.append(KSweepRow(k=k, transfer=transfer, task_agnostic_last=last))
        logger.info(f"K={k}: transfer {transfer}, task-agnostic last {last:.4f}")
    return KSweepTable(rows=rows)


def summary_lines(result: BenchmarkResult) -> List[List[str]]:
    metrics = result.metrics
    return [
        ["Transfer", format_float(metrics.transfer)],
        ["Average", format_float(metrics.average)],
        ["Last", format_float(metrics.last)],
        ["Backward transfer", format_float(metrics.backward_transfer)],
        ["Forgetting", format_float(metrics.forgetting)],
        ["Zero-shot mean", format_float(metrics.zero_shot_mean)],
        ["Individual mean", format_float(metrics.individual_mean)],
        ["Reconstructed mean", format_float(metrics.reconstructed_mean)],
        ["Task-agnostic last", format_float(metrics.task_agnostic_last)],
    ]


def render_summary(result: BenchmarkResult, fmt: ReportFormat = ReportFormat.text) -> str:
    if ReportFormat(fmt) == ReportFormat.csv:
        return render_csv(["metric", "value"], summary_lines(result))
    return tabulate(summary_lines(result), headers=["metric", "value"]) + "\n"


def render_accuracy_matrix(matrix: AccuracyMatrix, fmt: ReportFormat = ReportFormat.csv) -> str:
    if ReportFormat(fmt) == ReportFormat.csv:
        return render_csv(matrix.csv_header(), matrix.csv_rows())
    return tabulate(matrix.csv_rows(), headers=matrix.csv_header()) + "\n"


def render_k_sweep(table: KSweepTable, fmt: ReportFormat = ReportFormat.text) -> str:
    header = ["K", "transfer", "task_agnostic_last"]
    rows = [[str(row.k), format_float(row.transfer), format_float(row.task_agnostic_last)] for row in table.rows]
    if ReportFormat(fmt) == ReportFormat.csv:
        return render_csv(header, rows)
    footer = (
        f"spread (max - min): transfer {format_float(table.transfer_spread)}, "
        f"task-agnostic last {format_float(table.last_spread)}\n"
    )
    return tabulate(rows, headers=header) + "\n" + footer


def delta_norms_preserved(result: BenchmarkResult, rel_tol: float = 1e-6) -> Dict[int, bool]:
    """Per session, whether every seen task's reconstructed L1 matches its trained delta's L1."""
    checks = {}
    for session, report in enumerate(result.session_reports, start=1):
        ok = True
        for t, l1 in enumerate(report.reconstructed_l1):
            original = result.delta_l1[t]
            if report.lambdas[t] == 0.0:
                continue
            if abs(l1 - original) > rel_tol * max(original, 1e-300):
                ok = False
        checks[session] = ok
    return checks
