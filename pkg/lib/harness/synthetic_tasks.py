"""
Gaussian-blob classification tasks standing in for real datasets.

Every task shares the label space ``0..C-1``. A task's class means mix the
pre-training means (weight ``relatedness``) with fresh task-specific
directions, so the pre-trained base is better than chance on every task but
worse than a model tuned on it.
"""
import logging
import math
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from lib.utils.errors import BadConfigError

logger = logging.getLogger(__name__)

TRAIN_STREAM = 0
TEST_STREAM = 1


class SyntheticTask(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    task_id: int = Field(ge=0)
    feature_dim: int = Field(ge=1)
    class_count: int = Field(ge=1)
    class_means: np.ndarray
    spread: float = Field(ge=0.0)
    train_per_class: int = Field(ge=1)
    test_per_class: int = Field(ge=1)
    seed: int

    def _sample(self, per_class: int, stream: int) -> Tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng([self.seed, stream])
        noise = rng.standard_normal((self.class_count * per_class, self.feature_dim))
        features = np.repeat(self.class_means, per_class, axis=0) + self.spread * noise
        labels = np.repeat(np.arange(self.class_count), per_class)
        return features, labels

    def train_data(self) -> Tuple[np.ndarray, np.ndarray]:
        return self._sample(self.train_per_class, TRAIN_STREAM)

    def test_data(self) -> Tuple[np.ndarray, np.ndarray]:
        return self._sample(self.test_per_class, TEST_STREAM)


def _derived_seed(*keys: int) -> int:
    return int(np.random.SeedSequence(list(keys)).generate_state(1)[0])


def _check_dims(task_count: int, feature_dim: int, class_count: int, spread: float) -> None:
    if task_count < 1 or feature_dim < 1 or class_count < 1 or spread < 0:
        logger.error(
            f"Bad task config: T={task_count} D={feature_dim} C={class_count} spread={spread}"
        )
        raise BadConfigError(
            "task count, feature dim and class count must be positive and spread non-negative",
            "gen_tasks",
        )


def pretraining_means(seed: int, feature_dim: int, class_count: int) -> np.ndarray:
    return np.random.default_rng([seed, 0]).standard_normal((class_count, feature_dim))


def gen_pretraining_task(
    seed: int,
    feature_dim: int,
    class_count: int,
    spread: float,
    per_class: int = 50,
) -> SyntheticTask:
    """The held-out blob mixture the base model is pre-trained on."""
    _check_dims(1, feature_dim, class_count, spread)
    return SyntheticTask(
        task_id=0,
        feature_dim=feature_dim,
        class_count=class_count,
        class_means=pretraining_means(seed, feature_dim, class_count),
        spread=spread,
        train_per_class=per_class,
        test_per_class=per_class,
        seed=_derived_seed(seed, 0),
    )


def gen_tasks(
    seed: int,
    task_count: int,
    feature_dim: int,
    class_count: int,
    spread: float,
    relatedness: float = 0.3,
    train_per_class: int = 50,
    test_per_class: int = 50,
) -> List[SyntheticTask]:
    """
    Generate ``task_count`` tasks, deterministic in ``seed``.

    :raises BadConfigError: On non-positive sizes, negative spread, or relatedness outside [0, 1].
    """
    _check_dims(task_count, feature_dim, class_count, spread)
    if not 0.0 <= relatedness <= 1.0:
        raise BadConfigError(f"relatedness {relatedness} is outside [0, 1]", "gen_tasks")

    shared = pretraining_means(seed, feature_dim, class_count)
    fresh_weight = math.sqrt(1.0 - relatedness ** 2)
    tasks = []
    for task_id in range(task_count):
        fresh = np.random.default_rng([seed, 1, task_id]).standard_normal((class_count, feature_dim))
        means = relatedness * shared + fresh_weight * fresh
        for a in range(class_count):
            for b in range(a + 1, class_count):
                if np.array_equal(means[a], means[b]):
                    raise BadConfigError(f"task {task_id} has coinciding class means", "gen_tasks")
        tasks.append(
            SyntheticTask(
                task_id=task_id,
                feature_dim=feature_dim,
                class_count=class_count,
                class_means=means,
                spread=spread,
                train_per_class=train_per_class,
                test_per_class=test_per_class,
                seed=_derived_seed(seed, 1, task_id),
            )
        )
    logger.info(f"Generated {task_count} tasks (seed={seed}, D={feature_dim}, C={class_count}, spread={spread})")
    return tasks
