"""
Softmax linear classifier used as the stand-in model, and its trainer.

The frozen base acts as an identity feature extractor: a sample's base
feature is the sample itself, and the category "text" feature is the base
model's weight row for that category.
"""
import logging
from typing import Optional, Tuple

import numpy as np

from lib.fusion.fusion_core import DeltaModel
from lib.harness.config import TrainMode
from lib.harness.synthetic_tasks import SyntheticTask
from lib.store.tensor_store import FlatVector, TensorLayout, flatten
from lib.utils.enums import TrainModeKind
from lib.utils.errors import BadConfigError, LayoutMismatchError, NonFiniteLossError

logger = logging.getLogger(__name__)


class ToyModel:
    """Logits ``X @ W.T + b`` with ``W`` of shape (C, D) and ``b`` of shape (C,)."""

    def __init__(self, weights: np.ndarray, bias: np.ndarray):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64).reshape(-1)
        if self.weights.ndim != 2 or self.bias.size != self.weights.shape[0]:
            raise ValueError(f"weights {self.weights.shape} and bias {self.bias.shape} disagree")

    @classmethod
    def zeros(cls, class_count: int, feature_dim: int) -> "ToyModel":
        return cls(np.zeros((class_count, feature_dim)), np.zeros(class_count))

    @property
    def class_count(self) -> int:
        return int(self.weights.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.weights.shape[1])

    @staticmethod
    def layout_for(class_count: int, feature_dim: int) -> TensorLayout:
        return TensorLayout.from_shapes([("W", [class_count, feature_dim]), ("b", [class_count])])

    def to_flat(self) -> FlatVector:
        return flatten([
            ("W", list(self.weights.shape), self.weights),
            ("b", [self.class_count], self.bias),
        ])

    @classmethod
    def from_flat(cls, vec: FlatVector) -> "ToyModel":
        if vec.layout.names != ["W", "b"] or len(vec.layout.entries[0].dims) != 2:
            logger.error(f"Flat vector with tensors {vec.layout.names} is not a toy model")
            raise LayoutMismatchError("expected layout [W (C, D), b (C)]", "ToyModel.from_flat")
        return cls(vec.tensor("W"), vec.tensor("b"))

    def logits(self, features: np.ndarray) -> np.ndarray:
        return np.atleast_2d(features) @ self.weights.T + self.bias

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(features), axis=1)

    def accuracy(self, features: np.ndarray, labels: np.ndarray) -> float:
        if len(labels) == 0:
            return 0.0
        return float(np.mean(self.predict(features) == np.asarray(labels)))


def base_features(samples: np.ndarray) -> np.ndarray:
    """Features the frozen base extracts from samples (identity map)."""
    return np.atleast_2d(np.asarray(samples, dtype=np.float64))


def _loss_and_gradient(
    weights: np.ndarray,
    bias: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
) -> Tuple[float, np.ndarray, np.ndarray]:
    logits = features @ weights.T + bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(labels.size)
    loss = float(np.mean(log_norm - shifted[rows, labels]))

    probs = np.exp(shifted - log_norm[:, None])
    probs[rows, labels] -= 1.0
    probs /= labels.size
    return loss, probs.T @ features, probs.sum(axis=0)


def train_task(
    task: SyntheticTask,
    base: ToyModel,
    mode: TrainMode = TrainMode(),
    steps: int = 200,
    lr: float = 0.5,
    task_id: Optional[int] = None,
) -> Tuple[ToyModel, DeltaModel]:
    """
    Fine-tune ``base`` on ``task`` with full-batch gradient descent.

    In full mode every weight and bias is trained. In low-rank mode only a
    rank-``r`` update ``A @ B`` of the weight matrix is trained (bias frozen),
    and the update is multiplied out into a dense delta.

    :return: ``(trained model, delta)``, the trained model being exactly ``base + delta``.
    :raises BadConfigError: On ``steps < 1``, negative ``lr`` or a rank above min(C, D).
    :raises NonFiniteLossError: If the loss becomes NaN or infinite.
    """
    if steps < 1 or lr < 0:
        raise BadConfigError(f"steps={steps} and lr={lr} must satisfy steps >= 1, lr >= 0", "train_task")
    if base.class_count != task.class_count or base.feature_dim != task.feature_dim:
        raise BadConfigError(
            f"base model is {base.class_count}x{base.feature_dim}, task is {task.class_count}x{task.feature_dim}",
            "train_task",
        )
    features, labels = task.train_data()
    delta_weights = np.zeros_like(base.weights)
    delta_bias = np.zeros_like(base.bias)

    if mode.kind == TrainModeKind.low_rank:
        if mode.rank > min(task.class_count, task.feature_dim):
            raise BadConfigError(
                f"rank {mode.rank} exceeds min(C, D) = {min(task.class_count, task.feature_dim)}", "train_task"
            )
        down = np.zeros((task.class_count, mode.rank))
        up = np.random.default_rng([task.seed, 2]).normal(
            0.0, 1.0 / np.sqrt(task.feature_dim), size=(mode.rank, task.feature_dim)
        )

    loss = float("nan")
    for step in range(steps):
        loss, grad_weights, grad_bias = _loss_and_gradient(
            base.weights + delta_weights, base.bias + delta_bias, features, labels
        )
        if not np.isfinite(loss):
            logger.error(f"Loss became {loss} at step {step} on task {task.task_id}")
            raise NonFiniteLossError(f"loss is {loss} at step {step}", f"task {task.task_id}")
        if mode.kind == TrainModeKind.low_rank:
            grad_down = grad_weights @ up.T
            grad_up = down.T @ grad_weights
            down = down - lr * grad_down
            up = up - lr * grad_up
            delta_weights = down @ up
        else:
            delta_weights = delta_weights - lr * grad_weights
            delta_bias = delta_bias - lr * grad_bias
        if step % 50 == 0:
            logger.debug(f"task {task.task_id} step {step} loss {loss:.6f}")

    logger.info(f"Trained task {task.task_id} ({mode}) for {steps} steps, final loss {loss:.6f}")

    delta_vec = flatten([
        ("W", list(delta_weights.shape), delta_weights),
        ("b", [delta_bias.size], delta_bias),
    ])
    trained = ToyModel(base.weights + delta_weights, base.bias + delta_bias)
    delta = DeltaModel(vec=delta_vec, task_id=task.task_id if task_id is None else task_id)
    return trained, delta


def pretrain_base(task: SyntheticTask, steps: int = 200, lr: float = 0.5) -> ToyModel:
    """Train the base model from zero weights on the pre-training mixture."""
    model, _ = train_task(task, ToyModel.zeros(task.class_count, task.feature_dim), TrainMode(), steps, lr)
    return model
