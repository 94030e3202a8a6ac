"""
Continual-learning accuracy matrix and the metrics derived from it.

Row 0 holds the base model's zero-shot accuracy on every task; row ``s``
(1..T) holds accuracies after session ``s``. Columns are tasks in the order
they are learned, so column ``t`` (0-based) is learned in session ``t + 1``.
"""
from typing import Dict, List, Optional, Sequence

import numpy as np

from lib.utils.utilities import format_float


class AccuracyMatrix:
    """Accuracy after each session on every task's test set."""

    def __init__(self, task_count: int):
        if task_count < 1:
            raise ValueError("task_count must be at least 1")
        self.task_count = task_count
        self.values = np.zeros((task_count + 1, task_count))

    @classmethod
    def from_session_rows(
        cls,
        rows: Sequence[Sequence[float]],
        zero_shot: Optional[Sequence[float]] = None,
    ) -> "AccuracyMatrix":
        """Build from a T×T block of session rows, with an optional zero-shot row."""
        rows = np.asarray(rows, dtype=np.float64)
        matrix = cls(rows.shape[1])
        if rows.shape != (matrix.task_count, matrix.task_count):
            raise ValueError(f"expected a square block of session rows, got {rows.shape}")
        matrix.values[1:] = rows
        if zero_shot is not None:
            matrix.values[0] = np.asarray(zero_shot, dtype=np.float64)
        return matrix

    def update(self, session: int, task: int, accuracy: float) -> None:
        if not 0.0 <= accuracy <= 1.0:
            raise ValueError(f"accuracy {accuracy} is outside [0, 1]")
        self.values[session, task] = accuracy

    def session_row(self, session: int) -> np.ndarray:
        return self.values[session].copy()

    def zero_shot_mean(self) -> float:
        return float(np.mean(self.values[0]))

    def transfer(self) -> Optional[float]:
        """
        Accuracy on tasks before they are learned: per task ``t`` the mean of
        the cells of sessions ``1..t``, averaged over tasks 2..T.
        """
        if self.task_count < 2:
            return None
        per_task = [np.mean(self.values[1:t + 1, t]) for t in range(1, self.task_count)]
        return float(np.mean(per_task))

    def average(self) -> float:
        """Column mean over sessions 1..T, then averaged over tasks."""
        return float(np.mean(np.mean(self.values[1:], axis=0)))

    def last(self) -> float:
        return float(np.mean(self.values[self.task_count]))

    def backward_transfer(self) -> float:
        if self.task_count < 2:
            return 0.0
        final = self.values[self.task_count]
        return float(np.mean([final[t] - self.values[t + 1, t] for t in range(self.task_count - 1)]))

    def forgetting(self) -> float:
        if self.task_count < 2:
            return 0.0
        drops = []
        for t in range(self.task_count - 1):
            best = np.max(self.values[t + 1:self.task_count, t])
            drops.append(best - self.values[self.task_count, t])
        return float(np.mean(drops))

    def compute_all(self) -> Dict[str, Optional[float]]:
        return {
            "transfer": self.transfer(),
            "average": self.average(),
            "last": self.last(),
            "backward_transfer": self.backward_transfer(),
            "forgetting": self.forgetting(),
            "zero_shot_mean": self.zero_shot_mean(),
        }

    def csv_header(self) -> List[str]:
        return ["session"] + [f"task_{t + 1}" for t in range(self.task_count)]

    def csv_rows(self) -> List[List[str]]:
        return [
            [str(session)] + [format_float(value) for value in self.values[session]]
            for session in range(self.task_count + 1)
        ]

    def __eq__(self, other) -> bool:
        if not isinstance(other, AccuracyMatrix):
            return NotImplemented
        return self.values.shape == other.values.shape and self.values.tobytes() == other.values.tobytes()
