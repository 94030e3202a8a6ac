import logging

from app.models.requests import DecoupleRequest
from lib.fusion.fusion_core import decouple, reconstruct_model
from lib.fusion.session_store import load_session
from lib.store.container import load_flat, save_flat
from lib.store.tensor_store import FlatVector
from lib.utils.enums import ContainerKind
from lib.utils.errors import UnknownTaskError
from lib.utils.log_utils import log_error

logger = logging.getLogger(__name__)


def decouple_service(request: DecoupleRequest) -> FlatVector:
    """
    Reconstruct one task's delta (or, with a base, its full model) from a
    stored session state.
    """
    state = load_session(request.state)
    task_index = request.task - 1
    if task_index >= state.task_count:
        log_error(UnknownTaskError, f"task {request.task} is not among the {state.task_count} stored tasks", "decouple")
    trigger = state.triggers[task_index]

    if request.base:
        vec = reconstruct_model(load_flat(request.base), state.unified, trigger)
        save_flat(vec, request.out, ContainerKind.BASE_MODEL)
    else:
        vec = decouple(state.unified, trigger).vec
        save_flat(vec, request.out, ContainerKind.DELTA_MODEL)
    logger.info(f"Wrote task {request.task} to {request.out}")
    return vec
