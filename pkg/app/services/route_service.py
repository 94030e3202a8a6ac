import logging
from typing import Dict

import numpy as np

from app.models.requests import RouteRequest
from lib.fusion.session_store import load_session
from lib.harness.benchmark import configured_tasks
from lib.harness.config import load_benchmark_config
from lib.routing.router import reconstruct_task_models, route_batch
from lib.store.container import load_flat
from lib.utils.utilities import write_csv_rows

logger = logging.getLogger(__name__)

ROUTE_CSV_HEADER = ["task", "sample", "label", "prediction", "selected_tasks"]


def route_service(request: RouteRequest) -> Dict[int, float]:
    """
    Route the synthetic test samples through a stored state and write one
    CSV row per sample. Returns the per-task accuracy (1-based task keys).
    """
    config = load_benchmark_config(request.config, request.overrides())
    tasks = configured_tasks(config)
    state = load_session(request.state)
    base = load_flat(request.base)
    models = reconstruct_task_models(state, base)

    rows = []
    accuracies = {}
    for task_number, task in enumerate(tasks, start=1):
        features, labels = task.test_data()
        results = route_batch(features, models, state.prototypes, request.k)
        for sample, ((prediction, decision), label) in enumerate(zip(results, labels)):
            selected = " ".join(str(index + 1) for index in decision.selected_tasks)
            rows.append([task_number, sample, int(label), prediction, selected])
        predictions = np.array([prediction for prediction, _ in results])
        accuracies[task_number] = float(np.mean(predictions == labels))
        logger.info(f"Task {task_number}: routed accuracy {accuracies[task_number]:.4f}")

    write_csv_rows(ROUTE_CSV_HEADER, rows, request.out)
    return accuracies
