"""
Fixed-set iteration of unify → trigger → decouple and the checks run on it.

Step 0 of a trace is the initial delta set; step ``j >= 1`` records the
triggers computed in iteration ``j`` and the set it produced.
"""
import hashlib
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from lib.fusion.fusion_core import DeltaModel, decouple, unify_and_trigger
from lib.fusion.triggers import PackedMask, TaskTrigger, popcount, unpack
from lib.store.tensor_store import require_same_layout
from lib.utils.errors import BadConfigError, EmptyInputError

logger = logging.getLogger(__name__)


class IterationStep(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    step: int
    lambdas: List[float]
    popcounts: List[int]
    masks: List[PackedMask]
    # (n, d) int8 signs of the set after this step
    signs: np.ndarray
    l1_norms: List[float]
    hashes: List[str]
    mean_l1_diff: float
    lambda_order_stable: bool
    masks_overlap: bool


class IterationTrace(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    task_count: int
    steps: List[IterationStep] = []
    converged_step: Optional[int] = None

    @property
    def iterations(self) -> List[IterationStep]:
        """Steps produced by an iteration (step 0 excluded)."""
        return self.steps[1:]

    @property
    def mean_l1_diffs(self) -> List[float]:
        return [step.mean_l1_diff for step in self.iterations]


class AssumptionFlags(BaseModel):
    lambda_order_stable: bool
    masks_overlap: bool
    first_order_break: Optional[int] = None

    @property
    def held(self) -> bool:
        return self.lambda_order_stable and self.masks_overlap


class Violation(BaseModel):
    kind: str
    step: int
    task: int
    element: Optional[int] = None


class SignStabilityReport(BaseModel):
    passed: bool
    violation: Optional[Violation] = None


class IncrementalRow(BaseModel):
    task_count: int
    mean_diff: float
    new_task_diff: float
    mask_changes: int


class PerturbationReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    rows: List[IncrementalRow]
    final_deltas: List[DeltaModel]
    final_masks: List[PackedMask]


def _check_set(deltas: Sequence[DeltaModel], context: str) -> None:
    if not deltas:
        logger.error(f"{context} called with an empty delta set")
        raise EmptyInputError("at least one delta is required", context)
    for delta in deltas[1:]:
        require_same_layout(deltas[0].vec, delta.vec, context)


def _iterate(deltas: Sequence[DeltaModel]) -> Tuple[List[DeltaModel], List[TaskTrigger]]:
    unified, triggers = unify_and_trigger(deltas)
    return [decouple(unified, trigger) for trigger in triggers], triggers


def iterate_once(deltas: Sequence[DeltaModel]) -> List[DeltaModel]:
    """One unify → trigger → decouple round over the whole set; task order preserved."""
    _check_set(deltas, "iterate_once")
    return _iterate(deltas)[0]


def mean_l1_diff(current: Sequence[DeltaModel], previous: Sequence[DeltaModel]) -> float:
    """``(1/n) * sum_i ||current_i - previous_i||_1``."""
    total = sum(float(np.sum(np.abs(a.vec.values - b.vec.values))) for a, b in zip(current, previous))
    return total / len(current)


def _digest(delta: DeltaModel) -> str:
    return hashlib.sha256(delta.vec.values.tobytes()).hexdigest()


def _order_inversion(previous: Sequence[float], current: Sequence[float]) -> bool:
    before = np.asarray(previous)
    after = np.asarray(current)
    was_below = before[:, None] < before[None, :]
    now_above = after[:, None] > after[None, :]
    return bool(np.any(was_below & now_above))


def _masks_overlap(masks: Sequence[PackedMask]) -> bool:
    gates = [unpack(mask).astype(bool) for mask in masks]
    for i in range(len(gates)):
        for k in range(i + 1, len(gates)):
            if not np.any(gates[i] & gates[k]):
                return False
    return True


def _record(
    step: int,
    deltas: Sequence[DeltaModel],
    triggers: Optional[Sequence[TaskTrigger]],
    diff: float,
    order_stable: bool,
    overlap: bool,
) -> IterationStep:
    return IterationStep(
        step=step,
        lambdas=[trigger.lam for trigger in triggers] if triggers else [],
        popcounts=[popcount(trigger.mask) for trigger in triggers] if triggers else [],
        masks=[trigger.mask for trigger in triggers] if triggers else [],
        signs=np.vstack([np.sign(delta.vec.values).astype(np.int8) for delta in deltas]),
        l1_norms=[delta.l1 for delta in deltas],
        hashes=[_digest(delta) for delta in deltas],
        mean_l1_diff=diff,
        lambda_order_stable=order_stable,
        masks_overlap=overlap,
    )


def iterate_until(
    deltas: Sequence[DeltaModel],
    eps: float = 1e-10,
    max_steps: int = 200,
) -> Tuple[List[DeltaModel], IterationTrace]:
    """
    Iterate the fixed set until ``mean_l1_diff < eps`` or ``max_steps`` iterations.

    Assumption flags are computed as the run goes: the λ relative order is
    compared between consecutive steps and the pairwise mask overlap is
    checked at step 1.

    :raises BadConfigError: If ``eps <= 0`` or ``max_steps < 1``.
    """
    if eps <= 0 or max_steps < 1:
        logger.error(f"Invalid iteration bounds eps={eps} max_steps={max_steps}")
        raise BadConfigError(f"eps must be > 0 and max_steps >= 1, got {eps} and {max_steps}", "iterate_until")
    _check_set(deltas, "iterate_until")

    current = list(deltas)
    trace = IterationTrace(task_count=len(current))
    trace.steps.append(_record(0, current, None, 0.0, True, True))

    overlap = True
    previous_lambdas: Optional[List[float]] = None
    for step in range(1, max_steps + 1):
        following, triggers = _iterate(current)
        lambdas = [trigger.lam for trigger in triggers]
        if step == 1:
            overlap = _masks_overlap([trigger.mask for trigger in triggers])
            order_stable = True
        else:
            order_stable = not _order_inversion(previous_lambdas, lambdas)
        diff = mean_l1_diff(following, current)
        trace.steps.append(_record(step, following, triggers, diff, order_stable, overlap))
        logger.debug(f"Iteration {step}: mean L1 diff {diff:.3e}, lambdas {lambdas}")

        current = following
        previous_lambdas = lambdas
        if diff < eps:
            trace.converged_step = step
            break

    flags = assumption_flags(trace)
    if not flags.held:
        logger.warning(
            f"Assumption flags failed (lambda order stable={flags.lambda_order_stable}, "
            f"mask overlap={flags.masks_overlap})"
        )
    logger.info(f"Iteration stopped after {len(trace.iterations)} steps; converged at {trace.converged_step}")
    return current, trace


def assumption_flags(trace: IterationTrace) -> AssumptionFlags:
    first_break = next((step.step for step in trace.iterations if not step.lambda_order_stable), None)
    return AssumptionFlags(
        lambda_order_stable=first_break is None,
        masks_overlap=all(step.masks_overlap for step in trace.iterations),
        first_order_break=first_break,
    )


def sign_stability_check(trace: IterationTrace) -> SignStabilityReport:
    """
    Check that every task's mask stays equal to its step-1 mask and that no
    element flips sign or comes back from zero.
    """
    iterations = trace.iterations
    if iterations:
        first_masks = iterations[0].masks
        for step in iterations[1:]:
            for task, (mask, reference) in enumerate(zip(step.masks, first_masks)):
                if mask != reference:
                    changed = np.flatnonzero(unpack(mask) != unpack(reference))
                    return SignStabilityReport(
                        passed=False,
                        violation=Violation(kind="mask_changed", step=step.step, task=task, element=int(changed[0])),
                    )

    for previous, step in zip(trace.steps, trace.steps[1:]):
        for task in range(trace.task_count):
            before = previous.signs[task]
            after = step.signs[task]
            flipped = np.flatnonzero((before * after) < 0)
            if flipped.size:
                return SignStabilityReport(
                    passed=False,
                    violation=Violation(kind="sign_flip", step=step.step, task=task, element=int(flipped[0])),
                )
            resurrected = np.flatnonzero((before == 0) & (after != 0))
            if resurrected.size:
                return SignStabilityReport(
                    passed=False,
                    violation=Violation(
                        kind="zero_resurrection", step=step.step, task=task, element=int(resurrected[0])
                    ),
                )
    return SignStabilityReport(passed=True)


def l1_preserved(trace: IterationTrace, rel_tol: float = 1e-9) -> bool:
    """Every task's L1 norm at every step equals its initial norm, skipping tasks whose λ is 0."""
    initial = trace.steps[0].l1_norms
    for step in trace.iterations:
        for task, (norm, lam) in enumerate(zip(step.l1_norms, step.lambdas)):
            if lam == 0.0:
                continue
            if abs(norm - initial[task]) > rel_tol * initial[task]:
                logger.warning(f"Task {task} L1 norm {norm} drifted from {initial[task]} at step {step.step}")
                return False
    return True


def popcounts_non_increasing(trace: IterationTrace) -> bool:
    counts = [step.popcounts for step in trace.iterations]
    return all(all(b <= a for a, b in zip(prev, cur)) for prev, cur in zip(counts, counts[1:]))


def mean_l1_diff_monotone(trace: IterationTrace, start: int = 2, rel_tol: float = 1e-9) -> bool:
    """Whether mean_l1_diff never increases from step ``start`` on (small relative slack)."""
    diffs = [step.mean_l1_diff for step in trace.iterations if step.step >= start]
    return all(b <= a * (1.0 + rel_tol) + 1e-15 for a, b in zip(diffs, diffs[1:]))


def _changed_bits(before: PackedMask, after: PackedMask) -> int:
    return int(np.count_nonzero(unpack(before) != unpack(after)))


def incremental_perturbation_study(
    initial: Sequence[DeltaModel],
    new_deltas_stream: Sequence[DeltaModel],
    steps_per_add: int = 1,
) -> PerturbationReport:
    """
    Add deltas one at a time to an iterated set and measure how much the
    existing tasks move.

    The initial set is iterated ``steps_per_add`` times first. After each
    addition the enlarged set is iterated ``steps_per_add`` times; the row
    records the mean L1 change over all tasks (the new task measured against
    its raw delta), the new task's own change, and how many mask bits of the
    existing tasks changed.
    """
    if not new_deltas_stream:
        raise EmptyInputError("the stream of new deltas is empty", "incremental_perturbation_study")
    if steps_per_add < 1:
        raise BadConfigError(f"steps_per_add must be >= 1, got {steps_per_add}", "incremental_perturbation_study")
    _check_set(list(initial) + list(new_deltas_stream), "incremental_perturbation_study")

    current = list(initial)
    masks: List[PackedMask] = []
    for _ in range(steps_per_add):
        current, triggers = _iterate(current)
        masks = [trigger.mask for trigger in triggers]

    rows = []
    for new_delta in new_deltas_stream:
        before = current + [new_delta]
        following = before
        for _ in range(steps_per_add):
            following, triggers = _iterate(following)
        new_masks = [trigger.mask for trigger in triggers]

        count = len(following)
        new_task_diff = float(np.sum(np.abs(following[-1].vec.values - new_delta.vec.values)))
        row = IncrementalRow(
            task_count=count,
            mean_diff=mean_l1_diff(following, before),
            new_task_diff=new_task_diff,
            mask_changes=sum(_changed_bits(old, new) for old, new in zip(masks, new_masks)),
        )
        rows.append(row)
        logger.info(f"n={count}: mean diff {row.mean_diff:.3e}, mask changes {row.mask_changes}")
        current = following
        masks = new_masks

    return PerturbationReport(rows=rows, final_deltas=current, final_masks=masks)
