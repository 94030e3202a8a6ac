from enum import Enum


class DType(str, Enum):
    r32 = "r32"
    r64 = "r64"

    @property
    def code(self) -> int:
        """Byte written in the values section: 0 = R32, 1 = R64."""
        return 0 if self == DType.r32 else 1

    @property
    def itemsize(self) -> int:
        return 4 if self == DType.r32 else 8

    @property
    def numpy_dtype(self) -> str:
        return "<f4" if self == DType.r32 else "<f8"

    @classmethod
    def from_code(cls, code: int) -> "DType":
        if code == 0:
            return cls.r32
        if code == 1:
            return cls.r64
        raise ValueError(f"Unknown dtype code {code}")


class ContainerKind(int, Enum):
    BASE_MODEL = 0
    DELTA_MODEL = 1
    SESSION_STATE = 2
    PROTOTYPE_BUNDLE = 3


class SectionTag(int, Enum):
    LAYOUT = 0x0001
    VALUES = 0x0002
    TRIGGER = 0x0003
    PROTOTYPES = 0x0004
    SESSION_HEADER = 0x0005


class TrainModeKind(str, Enum):
    full = "full"
    low_rank = "lora"


class ReportFormat(str, Enum):
    csv = "csv"
    text = "text"
