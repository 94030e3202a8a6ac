"""
Semantic routing for samples without a task id: score each task by its best
prototype cosine similarity, keep the top K tasks, and add the raw logits of
their reconstructed models.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from lib.fusion.fusion_core import SessionState, reconstruct_model
from lib.harness.toy_model import ToyModel, base_features
from lib.routing.prototypes import PrototypeSet
from lib.store.container import content_hash
from lib.store.tensor_store import FlatVector
from lib.utils.errors import (
    BadConfigError,
    DimMismatchError,
    LengthMismatchError,
    MissingPrototypesError,
    RoutingContractError,
    UnknownTaskError,
    ZeroVectorError,
)

logger = logging.getLogger(__name__)

DEFAULT_K = 4


class RoutingDecision(BaseModel):
    model_config = ConfigDict(frozen=True)

    per_task_best_sim: Tuple[float, ...]
    selected_tasks: Tuple[int, ...]
    weights: Tuple[int, ...]


def cosine_similarity(vec1: np.ndarray, vec2: np.ndarray) -> float:
    norm = np.linalg.norm(vec1) * np.linalg.norm(vec2)
    if norm == 0:
        raise ZeroVectorError("cosine similarity of a zero vector", "cosine_similarity")
    return float(np.dot(vec1, vec2) / norm)


def _best_similarities(sample_feature: np.ndarray, all_prototypes: Sequence[Optional[PrototypeSet]]) -> List[float]:
    sample = np.asarray(sample_feature, dtype=np.float64).reshape(-1)
    sample_norm = np.linalg.norm(sample)
    if sample_norm == 0:
        logger.error("Routing sample has zero norm")
        raise ZeroVectorError("sample feature has zero norm", "route")
    unit_sample = sample / sample_norm

    best = []
    for index, prototypes in enumerate(all_prototypes):
        if prototypes is None:
            logger.error(f"Task {index} has no prototype set")
            raise MissingPrototypesError(f"task {index} was stored without prototypes", "route")
        if prototypes.feature_dim != sample.size:
            logger.error(f"Sample dim {sample.size} vs prototype dim {prototypes.feature_dim} for task {index}")
            raise DimMismatchError(
                f"sample has {sample.size} features, task {index} prototypes have {prototypes.feature_dim}",
                "route",
            )
        unit_prototypes = prototypes.vectors / np.linalg.norm(prototypes.vectors, axis=1, keepdims=True)
        similarities = np.clip(unit_prototypes @ unit_sample, -1.0, 1.0)
        best.append(float(similarities.max()))
    return best


def route(
    sample_feature: np.ndarray,
    all_prototypes: Sequence[Optional[PrototypeSet]],
    k: int = DEFAULT_K,
) -> RoutingDecision:
    """
    Pick the ``k`` tasks whose best prototype is most similar to the sample.

    Ties go to the lower task index. ``k`` at or above the task count selects
    every task.
    """
    if k < 1:
        raise BadConfigError(f"K must be at least 1, got {k}", "route")
    if not all_prototypes:
        raise MissingPrototypesError("routing needs at least one task", "route")

    best = _best_similarities(sample_feature, all_prototypes)
    ranked = sorted(range(len(best)), key=lambda index: (-best[index], index))
    selected = tuple(sorted(ranked[:k]))
    weights = tuple(1 if index in selected else 0 for index in range(len(best)))
    logger.debug(f"Routed sample to tasks {selected} with similarities {best}")
    return RoutingDecision(per_task_best_sim=tuple(best), selected_tasks=selected, weights=weights)


def aggregate_logits(
    per_task_logits: Sequence[Sequence[float]],
    decision: RoutingDecision,
) -> Tuple[int, np.ndarray]:
    """
    Sum the raw logits of the selected tasks in task order and predict the
    argmax (lowest index on ties).
    """
    if len(per_task_logits) != len(decision.weights):
        raise LengthMismatchError(
            f"{len(per_task_logits)} logit arrays for {len(decision.weights)} tasks", "aggregate_logits"
        )
    if not any(decision.weights):
        logger.error("Routing decision selects no task")
        raise RoutingContractError("at least one task must carry weight 1", "aggregate_logits")

    arrays = [np.asarray(logits, dtype=np.float64).reshape(-1) for logits in per_task_logits]
    width = arrays[0].size
    if any(array.size != width for array in arrays):
        raise LengthMismatchError("logit arrays differ in length", "aggregate_logits")

    fused = np.zeros(width)
    for weight, logits in zip(decision.weights, arrays):
        if weight:
            fused = fused + weight * logits
    return int(np.argmax(fused)), fused


def _check_base(state: SessionState, base: FlatVector) -> None:
    if state.base_hash != bytes(32) and content_hash(base) != state.base_hash:
        logger.warning("Base model digest differs from the one recorded in the session state")


def reconstruct_task_models(state: SessionState, base: FlatVector) -> List[ToyModel]:
    """Every task-specific model the state can decouple, in task order."""
    _check_base(state, base)
    return [
        ToyModel.from_flat(reconstruct_model(base, state.unified, trigger))
        for trigger in state.triggers
    ]


def predict_task_aware(sample: np.ndarray, task_id: int, state: SessionState, base: FlatVector) -> int:
    """Predict with the reconstructed model of a known task (0-based ``task_id``)."""
    if not 0 <= task_id < state.task_count:
        logger.error(f"Unknown task {task_id}; state has {state.task_count} tasks")
        raise UnknownTaskError(f"task {task_id} is not among the {state.task_count} seen tasks", "predict")
    _check_base(state, base)
    model = ToyModel.from_flat(reconstruct_model(base, state.unified, state.triggers[task_id]))
    return int(model.predict(np.asarray(sample, dtype=np.float64).reshape(1, -1))[0])


def route_batch(
    samples: np.ndarray,
    models: Sequence[ToyModel],
    prototypes: Sequence[Optional[PrototypeSet]],
    k: int = DEFAULT_K,
) -> List[Tuple[int, RoutingDecision]]:
    """Route every sample and aggregate the logits of its selected models."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    for index, model in enumerate(models):
        if model.feature_dim != samples.shape[1]:
            logger.error(f"Samples have {samples.shape[1]} features, task {index} model expects {model.feature_dim}")
            raise DimMismatchError(
                f"samples have {samples.shape[1]} features, task {index} model takes {model.feature_dim}",
                "route",
            )
    all_logits = [model.logits(samples) for model in models]
    features = base_features(samples)
    results = []
    for row in range(samples.shape[0]):
        decision = route(features[row], prototypes, k)
        label, _ = aggregate_logits([logits[row] for logits in all_logits], decision)
        results.append((label, decision))
    return results


def predict_with_models(
    samples: np.ndarray,
    models: Sequence[ToyModel],
    prototypes: Sequence[Optional[PrototypeSet]],
    k: int = DEFAULT_K,
) -> np.ndarray:
    """Task-agnostic predictions for a batch, given already reconstructed models."""
    results = route_batch(samples, models, prototypes, k)
    return np.array([label for label, _ in results], dtype=np.int64)


def predict_task_agnostic(sample: np.ndarray, state: SessionState, base: FlatVector, k: int = DEFAULT_K) -> int:
    models = reconstruct_task_models(state, base)
    return int(predict_with_models(np.asarray(sample).reshape(1, -1), models, state.prototypes, k)[0])
