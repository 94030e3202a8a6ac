"""
Flat parameter space shared by every ConDU artifact.

A model is a list of named tensors. ``flatten`` concatenates them in input
order, row-major within each tensor, into one float64 vector described by a
``TensorLayout``. All fusion math runs on these vectors in 64-bit precision;
``dtype`` only records the precision used when the vector is written to disk.
"""
import logging
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from lib.utils.enums import DType
from lib.utils.errors import (
    DuplicateNameError,
    LayoutMismatchError,
    LengthMismatchError,
    NonFiniteValueError,
)

logger = logging.getLogger(__name__)

NamedTensor = Tuple[str, Sequence[int], Sequence[float]]


class LayoutEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    dims: Tuple[int, ...]
    offset: int = Field(ge=0)
    length: int = Field(ge=0)

    @model_validator(mode="after")
    def check_length(self) -> "LayoutEntry":
        if any(d <= 0 for d in self.dims):
            raise ValueError(f"dims of '{self.name}' must be positive, got {self.dims}")
        if self.length != int(np.prod(self.dims, dtype=np.int64)):
            raise ValueError(f"length of '{self.name}' must equal product of dims {self.dims}")
        return self


class TensorLayout(BaseModel):
    model_config = ConfigDict(frozen=True)

    entries: Tuple[LayoutEntry, ...] = ()

    @model_validator(mode="after")
    def check_contiguous(self) -> "TensorLayout":
        seen = set()
        expected_offset = 0
        for entry in self.entries:
            if entry.name in seen:
                logger.error(f"Duplicate tensor name in layout: {entry.name}")
                raise DuplicateNameError(f"tensor name '{entry.name}' appears twice", "layout")
            seen.add(entry.name)
            if entry.offset != expected_offset:
                raise ValueError(
                    f"entry '{entry.name}' starts at {entry.offset}, expected {expected_offset}"
                )
            expected_offset += entry.length
        return self

    @property
    def total_len(self) -> int:
        return sum(entry.length for entry in self.entries)

    @property
    def names(self) -> List[str]:
        return [entry.name for entry in self.entries]

    def entry(self, name: str) -> LayoutEntry:
        for candidate in self.entries:
            if candidate.name == name:
                return candidate
        raise KeyError(name)

    @classmethod
    def from_shapes(cls, shapes: Sequence[Tuple[str, Sequence[int]]]) -> "TensorLayout":
        """Build a contiguous layout from ``(name, dims)`` pairs in the given order."""
        entries = []
        offset = 0
        seen = set()
        for name, dims in shapes:
            if name in seen:
                logger.error(f"Duplicate tensor name: {name}")
                raise DuplicateNameError(f"tensor name '{name}' appears twice", "flatten")
            seen.add(name)
            dims = tuple(int(d) for d in dims)
            length = int(np.prod(dims, dtype=np.int64))
            entries.append(LayoutEntry(name=name, dims=dims, offset=offset, length=length))
            offset += length
        return cls(entries=tuple(entries))


class FlatVector(BaseModel):
    """
    A real vector over a ``TensorLayout``.

    ``values`` is always a read-only, contiguous float64 array. When ``dtype``
    is R32 the values are rounded through float32 at construction, so saving
    and loading the vector is exact.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    layout: TensorLayout
    values: np.ndarray
    dtype: DType = DType.r64

    @model_validator(mode="before")
    @classmethod
    def coerce_values(cls, data):
        if isinstance(data, dict) and "values" in data:
            dtype = DType(data.get("dtype", DType.r64))
            values = np.array(data["values"], dtype=np.float64).reshape(-1)
            if dtype == DType.r32:
                with np.errstate(over="ignore"):
                    values = values.astype(np.float32).astype(np.float64)
            values.setflags(write=False)
            data = {**data, "values": values, "dtype": dtype}
        return data

    @model_validator(mode="after")
    def check_values(self) -> "FlatVector":
        if self.values.size != self.layout.total_len:
            logger.error(
                f"Vector has {self.values.size} values but layout expects {self.layout.total_len}"
            )
            raise LengthMismatchError(
                f"{self.values.size} values for a layout of {self.layout.total_len} elements",
                "FlatVector",
            )
        if not np.all(np.isfinite(self.values)):
            bad = int(np.flatnonzero(~np.isfinite(self.values))[0])
            logger.error(f"Non-finite value at element {bad}")
            raise NonFiniteValueError(f"element {bad} is {self.values[bad]}", "FlatVector")
        return self

    def __eq__(self, other) -> bool:
        if not isinstance(other, FlatVector):
            return NotImplemented
        return (
            self.layout == other.layout
            and self.dtype == other.dtype
            and self.values.tobytes() == other.values.tobytes()
        )

    def __hash__(self) -> int:
        return hash((self.layout, self.dtype, self.values.tobytes()))

    def __len__(self) -> int:
        return int(self.values.size)

    def with_values(self, values) -> "FlatVector":
        """New vector over the same layout and dtype."""
        return FlatVector(layout=self.layout, values=values, dtype=self.dtype)

    def zeros_like(self) -> "FlatVector":
        return self.with_values(np.zeros(self.layout.total_len))

    def tensor(self, name: str) -> np.ndarray:
        """Row-major view of one named tensor, reshaped to its dims."""
        entry = self.layout.entry(name)
        return self.values[entry.offset:entry.offset + entry.length].reshape(entry.dims)


def require_same_layout(a: FlatVector, b: FlatVector, context: str) -> None:
    if a.layout != b.layout:
        logger.error(f"Layout mismatch in {context}: {a.layout.names} vs {b.layout.names}")
        raise LayoutMismatchError("operands have different tensor layouts", context)


def flatten(named_tensors: Sequence[NamedTensor], dtype: DType = DType.r64) -> FlatVector:
    """
    Concatenate named tensors into one flat vector.

    :param named_tensors: ``(name, dims, values)`` triples; ``values`` may be
        nested or flat and is read row-major.
    :param dtype: Storage precision recorded on the result.
    :return: FlatVector whose layout keeps the input order.
    :raises DuplicateNameError: If two tensors share a name.
    :raises LengthMismatchError: If a tensor's values do not fill its dims.
    :raises NonFiniteValueError: If any value is NaN or infinite.
    """
    shapes = []
    chunks = []
    for name, dims, values in named_tensors:
        array = np.asarray(values, dtype=np.float64).reshape(-1)
        expected = int(np.prod(tuple(dims), dtype=np.int64))
        if array.size != expected:
            logger.error(f"Tensor '{name}' has {array.size} values, dims {tuple(dims)} need {expected}")
            raise LengthMismatchError(
                f"tensor '{name}' has {array.size} values for dims {tuple(dims)}", "flatten"
            )
        shapes.append((name, dims))
        chunks.append(array)

    layout = TensorLayout.from_shapes(shapes)
    values = np.concatenate(chunks) if chunks else np.zeros(0)
    logger.debug(f"Flattened {len(shapes)} tensors into {values.size} elements")
    return FlatVector(layout=layout, values=values, dtype=dtype)


def unflatten(vec: FlatVector) -> List[Tuple[str, List[int], np.ndarray]]:
    """Inverse of ``flatten``: one ``(name, dims, flat values)`` triple per layout entry."""
    return [
        (entry.name, list(entry.dims), vec.values[entry.offset:entry.offset + entry.length].copy())
        for entry in vec.layout.entries
    ]
