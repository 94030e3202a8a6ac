"""
Per-task prototype sets: one vector per category, equal to the text-side
feature of the category plus the mean of its image-side features, both taken
from the frozen base model.
"""
import logging
import struct
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from lib.store.container import Container, Section, SectionReader
from lib.utils.enums import ContainerKind, SectionTag
from lib.utils.errors import (
    ConduError,
    CorruptSectionError,
    DimMismatchError,
    EmptyCategoryError,
    NonFiniteValueError,
    ZeroVectorError,
)

logger = logging.getLogger(__name__)

_PROTO_HEAD = struct.Struct("<III")


class PrototypeSet(BaseModel):
    """
    Prototype vectors of one task, row ``k`` belonging to ``labels[k]``.

    Vectors are rounded through float32 at construction, the precision they
    are stored with.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    task_id: int = Field(ge=0)
    labels: Tuple[str, ...]
    vectors: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def coerce_vectors(cls, data):
        if isinstance(data, dict) and "vectors" in data:
            vectors = np.array(data["vectors"], dtype=np.float64)
            if vectors.ndim == 1:
                vectors = vectors.reshape(1, -1)
            with np.errstate(over="ignore"):
                vectors = vectors.astype(np.float32).astype(np.float64)
            vectors.setflags(write=False)
            data = {**data, "vectors": vectors, "labels": tuple(data.get("labels", ()))}
        return data

    @model_validator(mode="after")
    def check_vectors(self) -> "PrototypeSet":
        if self.vectors.ndim != 2 or self.vectors.shape[0] == 0:
            raise EmptyCategoryError("a prototype set needs at least one category", f"task {self.task_id}")
        if len(self.labels) != self.vectors.shape[0]:
            raise DimMismatchError(
                f"{len(self.labels)} labels for {self.vectors.shape[0]} vectors", f"task {self.task_id}"
            )
        if not np.all(np.isfinite(self.vectors)):
            raise NonFiniteValueError("prototype vectors must be finite", f"task {self.task_id}")
        norms = np.linalg.norm(self.vectors, axis=1)
        if np.any(norms == 0):
            label = self.labels[int(np.flatnonzero(norms == 0)[0])]
            logger.error(f"Prototype for category '{label}' of task {self.task_id} is the zero vector")
            raise ZeroVectorError(f"prototype for category '{label}' is all zero", f"task {self.task_id}")
        return self

    def __eq__(self, other) -> bool:
        if not isinstance(other, PrototypeSet):
            return NotImplemented
        return (
            self.task_id == other.task_id
            and self.labels == other.labels
            and self.vectors.shape == other.vectors.shape
            and self.vectors.tobytes() == other.vectors.tobytes()
        )

    def __hash__(self) -> int:
        return hash((self.task_id, self.labels, self.vectors.tobytes()))

    @property
    def feature_dim(self) -> int:
        return int(self.vectors.shape[1])


def compute_prototypes(
    image_features: Mapping[str, Sequence[Sequence[float]]],
    text_features: Mapping[str, Sequence[float]],
    task_id: int = 0,
) -> PrototypeSet:
    """
    Build a task's prototypes: ``text[k] + mean(images[k])`` per category.

    :param image_features: Category label → image-side feature vectors (at least one each).
    :param text_features: Category label → text-side feature vector.
    :param task_id: Task the prototypes belong to.
    :raises EmptyCategoryError: If a category has no image features or no text feature.
    :raises DimMismatchError: If feature dimensions differ.
    :raises ZeroVectorError: If a prototype comes out as the zero vector.
    """
    labels: List[str] = []
    rows: List[np.ndarray] = []
    feature_dim: Optional[int] = None
    for label, images in image_features.items():
        images = np.asarray(images, dtype=np.float64)
        if images.size == 0:
            logger.error(f"Category '{label}' of task {task_id} has no image features")
            raise EmptyCategoryError(f"category '{label}' has no image features", f"task {task_id}")
        if images.ndim == 1:
            images = images.reshape(1, -1)
        if label not in text_features:
            raise EmptyCategoryError(f"category '{label}' has no text feature", f"task {task_id}")
        text = np.asarray(text_features[label], dtype=np.float64).reshape(-1)
        if feature_dim is None:
            feature_dim = text.size
        if text.size != feature_dim or images.shape[1] != feature_dim:
            logger.error(f"Feature dimension mismatch in category '{label}' of task {task_id}")
            raise DimMismatchError(
                f"category '{label}' has text dim {text.size} and image dim {images.shape[1]}, "
                f"expected {feature_dim}",
                f"task {task_id}",
            )
        labels.append(str(label))
        rows.append(text + images.mean(axis=0))

    if not rows:
        raise EmptyCategoryError("no categories given", f"task {task_id}")
    return PrototypeSet(task_id=task_id, labels=tuple(labels), vectors=np.vstack(rows))


def encode_prototypes(prototypes: Optional[PrototypeSet], task_id: int = 0) -> Section:
    """Prototype section; ``None`` is written as an empty slot (zero categories)."""
    if prototypes is None:
        return Section(tag=SectionTag.PROTOTYPES, payload=_PROTO_HEAD.pack(task_id, 0, 0))
    parts = [_PROTO_HEAD.pack(prototypes.task_id, len(prototypes.labels), prototypes.feature_dim)]
    for label, vector in zip(prototypes.labels, prototypes.vectors):
        encoded = label.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(vector.astype("<f4").tobytes())
    return Section(tag=SectionTag.PROTOTYPES, payload=b"".join(parts))


def decode_prototypes(section: Section) -> Optional[PrototypeSet]:
    reader = SectionReader(section.payload, "prototype section")
    task_id, category_count, feature_dim = reader.take(_PROTO_HEAD.format)
    if category_count == 0:
        reader.finish()
        return None
    labels = []
    rows = []
    for _ in range(category_count):
        (label_len,) = reader.take("<H")
        try:
            labels.append(reader.take_bytes(label_len).decode("utf-8"))
        except UnicodeDecodeError as e:
            raise CorruptSectionError(f"label is not UTF-8: {e}", "prototype section")
        rows.append(np.frombuffer(reader.take_bytes(4 * feature_dim), dtype="<f4"))
    reader.finish()
    try:
        return PrototypeSet(task_id=task_id, labels=tuple(labels), vectors=np.vstack(rows))
    except (ConduError, ValueError) as e:
        logger.error(f"Prototype section of task {task_id} holds invalid vectors: {e}")
        raise CorruptSectionError(str(e), "prototype section") from e


def bundle_to_container(prototype_sets: Sequence[Optional[PrototypeSet]]) -> Container:
    sections = tuple(encode_prototypes(p, index) for index, p in enumerate(prototype_sets))
    return Container(kind=ContainerKind.PROTOTYPE_BUNDLE, sections=sections)


def bundle_from_container(container: Container) -> List[Optional[PrototypeSet]]:
    return [decode_prototypes(section) for section in container.find_all(SectionTag.PROTOTYPES)]


def group_by_label(features: np.ndarray, labels: Sequence[int]) -> Dict[str, np.ndarray]:
    """Split a feature matrix into per-category arrays, keyed by the label as text, in label order."""
    labels = np.asarray(labels)
    return {str(label): features[labels == label] for label in np.unique(labels)}
