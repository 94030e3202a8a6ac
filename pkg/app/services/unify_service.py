import logging

from app.models.requests import UnifyRequest
from app.utils import load_task_delta
from lib.fusion.fusion_core import SessionState, unify_and_trigger
from lib.fusion.session_store import save_session
from lib.store.container import content_hash, load_flat

logger = logging.getLogger(__name__)


def unify_service(request: UnifyRequest) -> SessionState:
    """ Fuse the given deltas in one shot and store the resulting session state. """
    base = load_flat(request.base)
    deltas = [load_task_delta(path, base, task_id) for task_id, path in enumerate(request.deltas)]
    unified, triggers = unify_and_trigger(deltas)
    state = SessionState(
        base_hash=content_hash(base),
        unified=unified,
        triggers=tuple(triggers),
        prototypes=(None,) * len(triggers),
    )
    save_session(state, request.out)
    logger.info(f"Unified {len(deltas)} deltas into {request.out}")
    return state
