"""Exception hierarchy shared by all subpackages."""


class SecInferError(Exception):
    """Base class for every error raised by this package."""


# CKKS parameter and evaluation errors
class ParamError(SecInferError):
    pass


class BudgetExceeded(ParamError):
    pass


class DegreeUnusable(ParamError):
    pass


class NonNttPrime(ParamError):
    pass


class LevelMismatch(SecInferError):
    pass


class LevelExhausted(SecInferError):
    pass


class ScaleMismatch(SecInferError):
    pass


class ScaleOutOfRange(SecInferError):
    pass


class TooManyValues(SecInferError):
    pass


class MissingRotationStep(SecInferError):
    pass


class MalformedMessage(SecInferError):
    """A serialized object or wire frame could not be decoded."""


# Garbled circuits / OT
class UnsupportedWidth(SecInferError):
    pass


class FixedPointOverflow(SecInferError):
    pass


class MissingInputLabel(SecInferError):
    pass


class LabelMismatch(SecInferError):
    pass


class ProtocolAbort(SecInferError):
    pass


# Transport
class ChannelClosed(SecInferError):
    pass


class FrameTooLarge(SecInferError):
    pass


class AddressInUse(SecInferError):
    pass


class ConnectionRefused(SecInferError):
    pass


# Model files
class ModelParseError(SecInferError):
    pass


class DimMismatch(ModelParseError):
    pass


# Harness
class PartyError(SecInferError):
    """A protocol party failed; ``role`` says which one."""

    def __init__(self, role: str, error: str, message: str):
        super().__init__(f"{role}: {error}: {message}")
        self.role = role
        self.error = error
        self.message = message
