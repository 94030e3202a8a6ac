from typing import Optional


class ConduError(Exception):
    """Base class for every domain error raised by the library.

    ``code`` is the stable error name printed by the CLI; ``context`` names the
    artifact or operation the error belongs to.
    """

    code = "ConduError"

    def __init__(self, message: str, context: Optional[str] = None):
        self.message = message
        self.context = context
        if context:
            super().__init__(f"{context}: {message}")
        else:
            super().__init__(message)


class DuplicateNameError(ConduError):
    code = "DuplicateName"


class LengthMismatchError(ConduError):
    code = "LengthMismatch"


class NonFiniteValueError(ConduError):
    code = "NonFiniteValue"


class LayoutMismatchError(ConduError):
    code = "LayoutMismatch"


class EmptyInputError(ConduError):
    code = "EmptyInput"


class IoError(ConduError):
    code = "IoError"


class BadMagicError(ConduError):
    code = "BadMagic"


class UnsupportedVersionError(ConduError):
    code = "UnsupportedVersion"


class CorruptSectionError(ConduError):
    code = "CorruptSection"


class EmptyCategoryError(ConduError):
    code = "EmptyCategory"


class DimMismatchError(ConduError):
    code = "DimMismatch"


class ZeroVectorError(ConduError):
    code = "ZeroVector"


class RoutingContractError(ConduError):
    code = "RoutingContract"


class UnknownTaskError(ConduError):
    code = "UnknownTask"


class MissingPrototypesError(ConduError):
    code = "MissingPrototypes"


class BadConfigError(ConduError):
    code = "BadConfig"


class NonFiniteLossError(ConduError):
    code = "NonFiniteLoss"
