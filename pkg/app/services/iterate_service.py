import logging

from app.models.requests import IterateRequest
from app.utils import emit_report
from lib.convergence.convergence_lab import IterationTrace, iterate_until
from lib.convergence.trace_report import render_trace
from lib.fusion.fusion_core import DeltaModel
from lib.store.container import load_flat
from lib.store.tensor_store import require_same_layout

logger = logging.getLogger(__name__)


def iterate_service(request: IterateRequest) -> IterationTrace:
    """ Run the fixed-set iteration over delta files and report the trace. """
    vectors = [load_flat(path) for path in request.deltas]
    for path, vec in zip(request.deltas[1:], vectors[1:]):
        require_same_layout(vectors[0], vec, path)
    deltas = [DeltaModel(vec=vec, task_id=task_id) for task_id, vec in enumerate(vectors)]

    _, trace = iterate_until(deltas, request.eps, request.max_steps)
    emit_report(render_trace(trace, request.report), request.out)
    return trace
