"""
Task triggers: a bit-packed sign-agreement mask plus one rescaling scalar.

Masks are stored LSB-first: byte ``k`` bit ``b`` holds element ``8k + b``.
"""
import logging
import math
import struct
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from tabulate import tabulate

from lib.store.container import Section, SectionReader
from lib.store.tensor_store import FlatVector
from lib.utils.enums import DType, ReportFormat, SectionTag
from lib.utils.errors import BadConfigError, CorruptSectionError, LengthMismatchError
from lib.utils.utilities import render_csv

logger = logging.getLogger(__name__)

MIB = float(1 << 20)
LAMBDA_BYTES = 8

_POPCOUNT_TABLE = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)
_TRIGGER_HEAD = struct.Struct("<IdQ")


class PackedMask(BaseModel):
    model_config = ConfigDict(frozen=True)

    bits: bytes
    bit_len: int = Field(ge=0)

    @model_validator(mode="after")
    def check_padding(self) -> "PackedMask":
        expected = (self.bit_len + 7) // 8
        if len(self.bits) != expected:
            raise ValueError(f"{len(self.bits)} bytes for {self.bit_len} bits, expected {expected}")
        tail = self.bit_len % 8
        if tail and self.bits[-1] >> tail:
            raise ValueError("unused high bits of the last byte must be zero")
        return self

    def __len__(self) -> int:
        return self.bit_len


class TaskTrigger(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    mask: PackedMask
    lam: float = Field(alias="lambda", ge=0.0, allow_inf_nan=False)
    task_id: int = Field(ge=0)


def pack(mask_bits: Sequence[int]) -> PackedMask:
    """Pack a 0/1 sequence (or boolean array) into LSB-first bytes."""
    array = np.asarray(mask_bits)
    if array.size and not np.all((array == 0) | (array == 1)):
        raise ValueError("mask bits must be 0 or 1")
    bits = np.packbits(array.astype(np.uint8).reshape(-1), bitorder="little")
    return PackedMask(bits=bits.tobytes(), bit_len=int(array.size))


def unpack(mask: PackedMask) -> np.ndarray:
    """Expand a packed mask into a uint8 array of 0/1 of length ``bit_len``."""
    raw = np.frombuffer(mask.bits, dtype=np.uint8)
    return np.unpackbits(raw, count=mask.bit_len, bitorder="little")


def popcount(mask: PackedMask) -> int:
    raw = np.frombuffer(mask.bits, dtype=np.uint8)
    return int(_POPCOUNT_TABLE[raw].sum(dtype=np.int64))


def mask_apply(mask: PackedMask, vec: FlatVector) -> FlatVector:
    """Gate ``vec`` elementwise: keep ``vec[j]`` where bit ``j`` is set, else 0."""
    if mask.bit_len != len(vec):
        logger.error(f"Mask of {mask.bit_len} bits applied to vector of {len(vec)} elements")
        raise LengthMismatchError(f"mask has {mask.bit_len} bits, vector has {len(vec)}", "mask_apply")
    gate = unpack(mask).astype(bool)
    return vec.with_values(np.where(gate, vec.values, 0.0))


def encode_trigger(trigger: TaskTrigger) -> Section:
    head = _TRIGGER_HEAD.pack(trigger.task_id, trigger.lam, trigger.mask.bit_len)
    return Section(tag=SectionTag.TRIGGER, payload=head + trigger.mask.bits)


def decode_trigger(section: Section) -> TaskTrigger:
    reader = SectionReader(section.payload, "trigger section")
    task_id, lam, bit_len = reader.take(_TRIGGER_HEAD.format)
    bits = reader.take_bytes((bit_len + 7) // 8)
    reader.finish()
    try:
        return TaskTrigger(mask=PackedMask(bits=bits, bit_len=bit_len), lam=lam, task_id=task_id)
    except ValueError as e:
        raise CorruptSectionError(str(e), "trigger section")


class StorageReport(BaseModel):
    param_count: int
    dtype: DType
    task_count: int
    dense_model_bytes: int
    individual_bytes: int
    unified_bytes: int
    mask_bytes_per_task: int
    mask_bytes_total: int
    rescaler_bytes: int
    condu_bytes: int
    condu_with_base_bytes: int
    savings_ratio: float
    mask_to_dense_ratio: float
    lora_params: Optional[int] = None
    lora_unified_bytes: Optional[int] = None
    lora_mask_bytes_total: Optional[int] = None
    lora_condu_with_base_bytes: Optional[int] = None
    lora_individual_with_base_bytes: Optional[int] = None

    def rows(self) -> List[List[str]]:
        rows = [
            ["dense model", _mib(self.dense_model_bytes)],
            ["individual models", _mib(self.individual_bytes)],
            ["unified delta", _mib(self.unified_bytes)],
            ["masks", _mib(self.mask_bytes_total)],
            ["rescalers", f"{self.rescaler_bytes / 1024:.3f} KB"],
            ["condu total", _mib(self.condu_bytes)],
            ["condu total with base", _mib(self.condu_with_base_bytes)],
            ["savings ratio", f"{self.savings_ratio:.4f}"],
            ["mask/dense ratio", f"{self.mask_to_dense_ratio:.6f}"],
        ]
        if self.lora_params is not None:
            rows.extend([
                ["low-rank unified delta", _mib(self.lora_unified_bytes)],
                ["low-rank masks", _mib(self.lora_mask_bytes_total)],
                ["low-rank condu total with base", _mib(self.lora_condu_with_base_bytes)],
                ["low-rank individual with base", _mib(self.lora_individual_with_base_bytes)],
            ])
        return rows


def _mib(num_bytes: Optional[int]) -> str:
    return f"{num_bytes / MIB:.2f} MB"


def _mask_bytes(param_count: int) -> int:
    return (param_count + 7) // 8


def storage_report(
    param_count: int,
    dense_dtype: DType,
    task_count: int,
    lora_params: Optional[int] = None,
) -> StorageReport:
    """
    Byte accounting for storing ``task_count`` tasks densely versus as one
    unified delta plus per-task triggers.

    Rescalers are counted as one float64 per task. MB figures in the
    rendered report are 2**20 bytes.
    """
    if param_count <= 0 or task_count < 1:
        raise BadConfigError("param_count must be positive and task_count at least 1", "storage_report")
    dense_dtype = DType(dense_dtype)

    dense = param_count * dense_dtype.itemsize
    mask_per_task = _mask_bytes(param_count)
    masks = task_count * mask_per_task
    rescalers = task_count * LAMBDA_BYTES
    condu = dense + masks + rescalers

    fields = dict(
        param_count=param_count,
        dtype=dense_dtype,
        task_count=task_count,
        dense_model_bytes=dense,
        individual_bytes=task_count * dense,
        unified_bytes=dense,
        mask_bytes_per_task=mask_per_task,
        mask_bytes_total=masks,
        rescaler_bytes=rescalers,
        condu_bytes=condu,
        condu_with_base_bytes=dense + condu,
        savings_ratio=(task_count * dense) / condu,
        mask_to_dense_ratio=mask_per_task / dense,
    )
    if lora_params is not None:
        if lora_params <= 0:
            raise BadConfigError("lora_params must be positive", "storage_report")
        lora_dense = lora_params * dense_dtype.itemsize
        lora_masks = task_count * _mask_bytes(lora_params)
        fields.update(
            lora_params=lora_params,
            lora_unified_bytes=lora_dense,
            lora_mask_bytes_total=lora_masks,
            lora_condu_with_base_bytes=dense + lora_dense + lora_masks + rescalers,
            lora_individual_with_base_bytes=dense + task_count * lora_dense,
        )
    report = StorageReport(**fields)
    logger.info(
        f"Storage for {task_count} tasks of {param_count} params: "
        f"masks {report.mask_bytes_total / MIB:.2f} MB, condu {report.condu_bytes / MIB:.2f} MB"
    )
    return report


def render_storage_report(report: StorageReport, fmt: ReportFormat = ReportFormat.text) -> str:
    if ReportFormat(fmt) == ReportFormat.csv:
        return render_csv(["item", "value"], report.rows())
    header = (
        f"params={report.param_count} dtype={report.dtype.value} tasks={report.task_count}\n"
        f"rescalers: one float64 per task ({LAMBDA_BYTES} bytes each)\n"
    )
    return header + tabulate(report.rows(), headers=["item", "size"]) + "\n"


def mask_bits_from_bool(gate: np.ndarray) -> PackedMask:
    """Vectorized pack of a boolean gate array."""
    gate = np.asarray(gate, dtype=bool).reshape(-1)
    bits = np.packbits(gate, bitorder="little")
    return PackedMask(bits=bits.tobytes(), bit_len=int(gate.size))


def expected_trigger_bytes(bit_len: int) -> int:
    """Serialized size of one trigger section including framing."""
    return 2 + 8 + _TRIGGER_HEAD.size + int(math.ceil(bit_len / 8)) + 4
