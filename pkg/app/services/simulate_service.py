import logging
import os

from app.models.requests import SimulateRequest
from app.utils import emit_report
from lib.fusion.session_store import save_session
from lib.harness.benchmark import BenchmarkResult, render_accuracy_matrix, render_summary, run_configured_benchmark
from lib.harness.config import load_benchmark_config
from lib.store.container import save_flat
from lib.utils.enums import ContainerKind, ReportFormat
from lib.utils.utilities import write_text_file

logger = logging.getLogger(__name__)

ACCURACY_FILE = "accuracy.csv"
SUMMARY_FILE = "summary.txt"
STATE_FILE = "state.cdt"
BASE_FILE = "base.cdt"


def simulate_service(request: SimulateRequest) -> BenchmarkResult:
    """
    Run the synthetic benchmark. With ``out`` set, the accuracy matrix,
    summary, final state and base model are written into that directory;
    the summary always goes to standard output.
    """
    overrides = request.overrides()
    overrides["k"] = request.k
    config = load_benchmark_config(request.config, overrides)
    _, result = run_configured_benchmark(config)

    if request.out:
        write_text_file(render_accuracy_matrix(result.matrix, ReportFormat.csv), os.path.join(request.out, ACCURACY_FILE))
        write_text_file(render_summary(result, ReportFormat.text), os.path.join(request.out, SUMMARY_FILE))
        save_session(result.state, os.path.join(request.out, STATE_FILE))
        save_flat(result.base, os.path.join(request.out, BASE_FILE), ContainerKind.BASE_MODEL)
        logger.info(f"Simulation results written to {request.out}")

    emit_report(render_summary(result, request.report))
    return result
