"""
CONDUF01 container: the single on-disk format for bases, deltas, session
states and prototype bundles.

Layout (little-endian)::

    magic "CONDUF01" | version u32 | kind u8 | section count u32
    section := tag u16 | byte length u64 | payload | crc32 u32

Each module owns the payload codec of its own section tag; this module only
frames sections and provides the layout and values codecs.
"""
import hashlib
import logging
import struct
import zlib
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from lib.store.tensor_store import FlatVector, TensorLayout
from lib.utils.enums import ContainerKind, DType, SectionTag
from lib.utils.errors import (
    BadMagicError,
    CorruptSectionError,
    IoError,
    UnsupportedVersionError,
)

logger = logging.getLogger(__name__)

MAGIC = b"CONDUF01"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<8sIBI")
_SECTION_HEAD = struct.Struct("<HQ")
_CRC = struct.Struct("<I")


class Section(BaseModel):
    model_config = ConfigDict(frozen=True)

    tag: int = Field(ge=0, le=0xFFFF)
    payload: bytes


class Container(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: ContainerKind
    version: int = FORMAT_VERSION
    sections: Tuple[Section, ...] = ()

    def find(self, tag: SectionTag) -> Optional[Section]:
        for section in self.sections:
            if section.tag == tag:
                return section
        return None

    def find_all(self, tag: SectionTag) -> List[Section]:
        return [section for section in self.sections if section.tag == tag]

    def require(self, tag: SectionTag) -> Section:
        section = self.find(tag)
        if section is None:
            logger.error(f"Container of kind {self.kind.name} has no section {tag.name}")
            raise CorruptSectionError(f"missing section {tag.name}", "container")
        return section


def encode_container(container: Container) -> bytes:
    parts = [_HEADER.pack(MAGIC, container.version, int(container.kind), len(container.sections))]
    for section in container.sections:
        parts.append(_SECTION_HEAD.pack(section.tag, len(section.payload)))
        parts.append(section.payload)
        parts.append(_CRC.pack(zlib.crc32(section.payload) & 0xFFFFFFFF))
    return b"".join(parts)


def decode_container(data: bytes) -> Container:
    """
    Parse container bytes.

    :raises BadMagicError: If the first 8 bytes are not ``CONDUF01``.
    :raises UnsupportedVersionError: If the version is not 1.
    :raises CorruptSectionError: On truncation, trailing bytes, unknown kind or CRC mismatch.
    """
    if len(data) < len(MAGIC) and MAGIC.startswith(data):
        raise CorruptSectionError("container truncated inside the magic", "container")
    if data[:len(MAGIC)] != MAGIC:
        logger.error(f"Bad magic {data[:len(MAGIC)]!r}")
        raise BadMagicError(f"expected {MAGIC!r}, found {data[:len(MAGIC)]!r}", "container")
    if len(data) < _HEADER.size:
        raise CorruptSectionError("truncated container header", "container")

    _, version, kind_code, section_count = _HEADER.unpack_from(data, 0)
    if version != FORMAT_VERSION:
        logger.error(f"Unsupported container version {version}")
        raise UnsupportedVersionError(f"version {version} is not supported", "container")
    try:
        kind = ContainerKind(kind_code)
    except ValueError:
        raise CorruptSectionError(f"unknown container kind {kind_code}", "container")

    sections = []
    position = _HEADER.size
    for index in range(section_count):
        if position + _SECTION_HEAD.size > len(data):
            raise CorruptSectionError(f"section {index} header is truncated", "container")
        tag, length = _SECTION_HEAD.unpack_from(data, position)
        position += _SECTION_HEAD.size
        end = position + length
        if end + _CRC.size > len(data):
            logger.error(f"Section {index} (tag 0x{tag:04x}) declares {length} bytes past end of file")
            raise CorruptSectionError(f"section {index} is truncated", "container")
        payload = data[position:end]
        (crc,) = _CRC.unpack_from(data, end)
        if crc != zlib.crc32(payload) & 0xFFFFFFFF:
            logger.error(f"CRC mismatch in section {index} (tag 0x{tag:04x})")
            raise CorruptSectionError(f"section {index} checksum mismatch", "container")
        sections.append(Section(tag=tag, payload=payload))
        position = end + _CRC.size

    if position != len(data):
        raise CorruptSectionError(f"{len(data) - position} trailing bytes after last section", "container")
    return Container(kind=kind, version=version, sections=tuple(sections))


def save(container: Container, path: str) -> None:
    data = encode_container(container)
    try:
        with open(path, "wb") as file:
            file.write(data)
    except OSError as e:
        logger.error(f"Error writing container to {path}: {e}")
        raise IoError(str(e), path) from e
    logger.info(f"Saved {container.kind.name} container ({len(data)} bytes) to {path}")


def load(path: str) -> Container:
    try:
        with open(path, "rb") as file:
            data = file.read()
    except OSError as e:
        logger.error(f"Error reading container from {path}: {e}")
        raise IoError(str(e), path) from e
    container = decode_container(data)
    logger.info(f"Loaded {container.kind.name} container with {len(container.sections)} sections from {path}")
    return container


class SectionReader:
    """Bounds-checked cursor over one section payload."""

    def __init__(self, payload: bytes, context: str):
        self.payload = payload
        self.position = 0
        self.context = context

    def take(self, fmt: str) -> Tuple[Any, ...]:
        size = struct.calcsize(fmt)
        if self.position + size > len(self.payload):
            raise CorruptSectionError("payload ends inside a field", self.context)
        values = struct.unpack_from(fmt, self.payload, self.position)
        self.position += size
        return values

    def take_bytes(self, count: int) -> bytes:
        if self.position + count > len(self.payload):
            raise CorruptSectionError("payload ends inside a byte run", self.context)
        chunk = self.payload[self.position:self.position + count]
        self.position += count
        return chunk

    @property
    def exhausted(self) -> bool:
        return self.position == len(self.payload)

    def finish(self) -> None:
        if not self.exhausted:
            raise CorruptSectionError(
                f"{len(self.payload) - self.position} unread bytes", self.context
            )


def encode_layout(layout: TensorLayout) -> Section:
    parts = []
    for entry in layout.entries:
        name = entry.name.encode("utf-8")
        parts.append(struct.pack("<H", len(name)))
        parts.append(name)
        parts.append(struct.pack("<B", len(entry.dims)))
        parts.append(struct.pack(f"<{len(entry.dims)}I", *entry.dims))
    return Section(tag=SectionTag.LAYOUT, payload=b"".join(parts))


def decode_layout(section: Section) -> TensorLayout:
    reader = SectionReader(section.payload, "layout section")
    shapes = []
    while not reader.exhausted:
        (name_len,) = reader.take("<H")
        try:
            name = reader.take_bytes(name_len).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CorruptSectionError(f"tensor name is not UTF-8: {e}", "layout section")
        (ndim,) = reader.take("<B")
        dims = reader.take(f"<{ndim}I")
        shapes.append((name, dims))
    try:
        return TensorLayout.from_shapes(shapes)
    except ValueError as e:
        raise CorruptSectionError(str(e), "layout section")


def encode_values(vec: FlatVector) -> Section:
    raw = vec.values.astype(vec.dtype.numpy_dtype).tobytes()
    return Section(tag=SectionTag.VALUES, payload=struct.pack("<B", vec.dtype.code) + raw)


def decode_values(section: Section, layout: TensorLayout) -> FlatVector:
    reader = SectionReader(section.payload, "values section")
    (code,) = reader.take("<B")
    try:
        dtype = DType.from_code(code)
    except ValueError as e:
        raise CorruptSectionError(str(e), "values section")
    raw = reader.take_bytes(layout.total_len * dtype.itemsize)
    reader.finish()
    values = np.frombuffer(raw, dtype=dtype.numpy_dtype).astype(np.float64)
    return FlatVector(layout=layout, values=values, dtype=dtype)


def flat_to_container(vec: FlatVector, kind: ContainerKind = ContainerKind.DELTA_MODEL) -> Container:
    return Container(kind=kind, sections=(encode_layout(vec.layout), encode_values(vec)))


def flat_from_container(container: Container) -> FlatVector:
    layout = decode_layout(container.require(SectionTag.LAYOUT))
    return decode_values(container.require(SectionTag.VALUES), layout)


def save_flat(vec: FlatVector, path: str, kind: ContainerKind = ContainerKind.DELTA_MODEL) -> None:
    save(flat_to_container(vec, kind), path)


def load_flat(path: str) -> FlatVector:
    return flat_from_container(load(path))


def content_hash(vec: FlatVector) -> bytes:
    """32-byte SHA-256 digest of the encoded layout and values of ``vec``."""
    digest = hashlib.sha256()
    digest.update(encode_layout(vec.layout).payload)
    digest.update(encode_values(vec).payload)
    return digest.digest()


def inspect_container(container: Container) -> Dict[str, Any]:
    """Summary of a container's framing, for the ``inspect`` command."""
    summary: Dict[str, Any] = {
        "kind": container.kind.name,
        "version": container.version,
        "sections": [
            {
                "tag": _tag_name(section.tag),
                "bytes": len(section.payload),
            }
            for section in container.sections
        ],
    }
    layout_section = container.find(SectionTag.LAYOUT)
    if layout_section is not None:
        layout = decode_layout(layout_section)
        summary["layout"] = [(entry.name, list(entry.dims)) for entry in layout.entries]
        summary["total_len"] = layout.total_len
    return summary


def _tag_name(tag: int) -> str:
    try:
        return SectionTag(tag).name
    except ValueError:
        return f"0x{tag:04x}"
