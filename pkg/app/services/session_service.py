import logging

from app.models.requests import SessionRequest
from app.utils import load_task_delta
from lib.fusion.fusion_core import SessionState, run_session, session_report
from lib.fusion.session_store import load_session, save_session
from lib.store.container import content_hash, load_flat

logger = logging.getLogger(__name__)


def session_service(request: SessionRequest) -> SessionState:
    """ Fold one new task delta into a stored state (or start a new one). """
    base = load_flat(request.base)
    state = load_session(request.state) if request.state else None
    task_id = state.task_count if state is not None else 0
    delta = load_task_delta(request.delta, base, task_id)

    new_state = run_session(state, delta, None, content_hash(base))
    save_session(new_state, request.out)
    report = session_report(new_state)
    logger.info(f"Session written to {request.out}: lambdas {report.lambdas}, popcounts {report.popcounts}")
    return new_state
