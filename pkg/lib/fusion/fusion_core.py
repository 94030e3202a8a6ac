"""
Delta construction, sign-election unification, trigger computation and
decoupling, plus the per-session continual update.

All operations are pure; ``run_session`` returns a new ``SessionState``.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from lib.fusion.triggers import TaskTrigger, mask_apply, mask_bits_from_bool, popcount
from lib.routing.prototypes import PrototypeSet
from lib.store.tensor_store import FlatVector, require_same_layout
from lib.utils.errors import EmptyInputError, LayoutMismatchError, LengthMismatchError

logger = logging.getLogger(__name__)

EMPTY_BASE_HASH = bytes(32)


class DeltaModel(BaseModel):
    model_config = ConfigDict(frozen=True)

    vec: FlatVector
    task_id: int = Field(default=0, ge=0)

    @property
    def l1(self) -> float:
        return float(np.sum(np.abs(self.vec.values)))


class UnifiedDelta(BaseModel):
    model_config = ConfigDict(frozen=True)

    vec: FlatVector
    task_count: int = Field(ge=1)


class SessionState(BaseModel):
    """Everything the continual learner keeps between sessions."""

    model_config = ConfigDict(frozen=True)

    base_hash: bytes = EMPTY_BASE_HASH
    unified: UnifiedDelta
    triggers: Tuple[TaskTrigger, ...]
    prototypes: Tuple[Optional[PrototypeSet], ...]

    @field_validator("base_hash")
    @classmethod
    def check_hash(cls, value: bytes) -> bytes:
        if len(value) != 32:
            raise ValueError(f"base hash must be 32 bytes, got {len(value)}")
        return value

    @model_validator(mode="after")
    def check_counts(self) -> "SessionState":
        count = self.unified.task_count
        if len(self.triggers) != count or len(self.prototypes) != count:
            raise ValueError(
                f"{len(self.triggers)} triggers and {len(self.prototypes)} prototype slots "
                f"for {count} tasks"
            )
        size = len(self.unified.vec)
        for trigger in self.triggers:
            if trigger.mask.bit_len != size:
                raise ValueError(f"trigger {trigger.task_id} mask has {trigger.mask.bit_len} bits, expected {size}")
        return self

    @property
    def task_count(self) -> int:
        return self.unified.task_count


class SessionReport(BaseModel):
    task_count: int
    task_ids: List[int]
    lambdas: List[float]
    popcounts: List[int]
    reconstructed_l1: List[float]
    degenerate_tasks: List[int]


def delta_from(theta: FlatVector, theta0: FlatVector, task_id: int = 0) -> DeltaModel:
    """Parameter offset of a fine-tuned model from its base: ``theta - theta0``."""
    require_same_layout(theta, theta0, "delta_from")
    values = theta.values - theta0.values
    return DeltaModel(vec=FlatVector(layout=theta0.layout, values=values), task_id=task_id)


def unify(deltas: Sequence[DeltaModel]) -> UnifiedDelta:
    """
    Elect one value per element across ``deltas``.

    With ``S`` the sum of the inputs at an element, the result is the largest
    input when ``S > 0``, the smallest when ``S < 0`` and 0 when ``S == 0``.
    The sum is accumulated input by input in list order.
    """
    if not deltas:
        logger.error("unify called with no deltas")
        raise EmptyInputError("at least one delta is required", "unify")
    first = deltas[0].vec
    for delta in deltas[1:]:
        require_same_layout(first, delta.vec, "unify")

    total = np.zeros(len(first))
    upper = np.full(len(first), -np.inf)
    lower = np.full(len(first), np.inf)
    for delta in deltas:
        values = delta.vec.values
        total += values
        np.maximum(upper, values, out=upper)
        np.minimum(lower, values, out=lower)

    elected = np.where(total > 0, upper, np.where(total < 0, lower, 0.0))
    logger.debug(f"Unified {len(deltas)} deltas over {len(first)} elements")
    return UnifiedDelta(
        vec=FlatVector(layout=first.layout, values=elected),
        task_count=len(deltas),
    )


def compute_trigger(delta: DeltaModel, unified: UnifiedDelta) -> TaskTrigger:
    """
    Mask of elements where ``delta`` and the unified delta agree in sign, and
    the rescaler that restores ``delta``'s L1 norm on the masked unified delta.

    A zero denominator yields ``lambda = 0``.
    """
    require_same_layout(delta.vec, unified.vec, "compute_trigger")
    values = delta.vec.values
    elected = unified.vec.values

    gate = (values * elected) > 0
    numerator = float(np.sum(np.abs(values)))
    denominator = float(np.sum(np.abs(np.where(gate, elected, 0.0))))
    if denominator > 0:
        lam = numerator / denominator
    else:
        lam = 0.0
        logger.warning(f"Task {delta.task_id} shares no sign with the unified delta; rescaler set to 0")

    return TaskTrigger(mask=mask_bits_from_bool(gate), lam=lam, task_id=delta.task_id)


def decouple(unified: UnifiedDelta, trigger: TaskTrigger) -> DeltaModel:
    """Reconstruct one task delta as ``lambda * (mask ⊙ unified)``."""
    if trigger.mask.bit_len != len(unified.vec):
        logger.error(f"Trigger mask of {trigger.mask.bit_len} bits for unified delta of {len(unified.vec)}")
        raise LengthMismatchError(
            f"mask has {trigger.mask.bit_len} bits, unified delta has {len(unified.vec)} elements",
            "decouple",
        )
    gated = mask_apply(trigger.mask, unified.vec)
    return DeltaModel(vec=gated.with_values(trigger.lam * gated.values), task_id=trigger.task_id)


def reconstruct_model(theta0: FlatVector, unified: UnifiedDelta, trigger: TaskTrigger) -> FlatVector:
    """Task-specific model ``theta0 + decouple(unified, trigger)``."""
    if theta0.layout != unified.vec.layout:
        logger.error("Base model layout differs from the unified delta layout")
        raise LayoutMismatchError("base and unified delta layouts differ", "reconstruct_model")
    delta = decouple(unified, trigger)
    return theta0.with_values(theta0.values + delta.vec.values)


def unify_and_trigger(deltas: Sequence[DeltaModel]) -> Tuple[UnifiedDelta, List[TaskTrigger]]:
    """One-shot fusion of a full delta set: the unified delta and one trigger per input."""
    unified = unify(deltas)
    triggers = [compute_trigger(delta, unified) for delta in deltas]
    return unified, triggers


def decouple_all(state: SessionState) -> List[DeltaModel]:
    return [decouple(state.unified, trigger) for trigger in state.triggers]


def run_session(
    state: Optional[SessionState],
    new_delta: DeltaModel,
    new_prototypes: Optional[PrototypeSet],
    base_hash: Optional[bytes] = None,
) -> SessionState:
    """
    One continual-learning session.

    Previous tasks are decoupled from the current unified delta, unified
    together with ``new_delta``, and every trigger is recomputed against the
    new unified delta. Old triggers are discarded.

    :param state: The state after the previous session, or ``None`` for the first.
    :param new_delta: Delta of the task learned in this session.
    :param new_prototypes: Prototype set of the new task (``None`` leaves an empty slot).
    :param base_hash: Digest of the base model; used only when ``state`` is ``None``.
    """
    if state is None:
        deltas = [new_delta]
        prototypes: Tuple[Optional[PrototypeSet], ...] = (new_prototypes,)
        digest = base_hash if base_hash is not None else EMPTY_BASE_HASH
    else:
        if new_delta.vec.layout != state.unified.vec.layout:
            logger.error(f"Task {new_delta.task_id} delta layout differs from the session layout")
            raise LayoutMismatchError("new delta layout differs from the unified delta", "run_session")
        deltas = decouple_all(state) + [new_delta]
        prototypes = state.prototypes + (new_prototypes,)
        digest = state.base_hash

    unified, triggers = unify_and_trigger(deltas)
    new_state = SessionState(
        base_hash=digest,
        unified=unified,
        triggers=tuple(triggers),
        prototypes=prototypes,
    )
    degenerate = [trigger.task_id for trigger in triggers if trigger.lam == 0.0]
    if degenerate:
        logger.warning(f"Session {unified.task_count}: degenerate tasks {degenerate} reconstruct to zero")
    logger.info(
        f"Session {unified.task_count} complete; lambdas "
        f"{[round(trigger.lam, 6) for trigger in triggers]}"
    )
    return new_state


def session_report(state: SessionState) -> SessionReport:
    reconstructed = decouple_all(state)
    return SessionReport(
        task_count=state.task_count,
        task_ids=[trigger.task_id for trigger in state.triggers],
        lambdas=[trigger.lam for trigger in state.triggers],
        popcounts=[popcount(trigger.mask) for trigger in state.triggers],
        reconstructed_l1=[delta.l1 for delta in reconstructed],
        degenerate_tasks=[trigger.task_id for trigger in state.triggers if trigger.lam == 0.0],
    )
