import logging

from app.models.requests import SweepKRequest
from app.utils import emit_report
from lib.harness.benchmark import KSweepTable, render_k_sweep, sweep_k
from lib.harness.config import load_benchmark_config

logger = logging.getLogger(__name__)


def sweep_k_service(request: SweepKRequest) -> KSweepTable:
    """ Sweep routing K over one trained run; K defaults to 1..T. """
    config = load_benchmark_config(request.config, request.overrides())
    k_values = request.k or list(range(1, config.task_count + 1))
    table = sweep_k(config, k_values)
    emit_report(render_k_sweep(table, request.report), request.out)
    return table
