"""Exception hierarchy shared by every role.

Each exception carries a stable ``code`` so servers can report failures over
the wire as an ``Error`` message and clients can re-raise the same type.
"""


class PplsError(Exception):
    code = "PplsError"


class PlaintextOutOfRange(PplsError, ValueError):
    code = "PlaintextOutOfRange"


class MalformedCiphertext(PplsError, ValueError):
    code = "MalformedCiphertext"


class DecryptionFailure(PplsError):
    code = "DecryptionFailure"


class EmptyIdentity(PplsError, ValueError):
    code = "EmptyIdentity"


class ThresholdOutOfRange(PplsError, ValueError):
    code = "ThresholdOutOfRange"


class RadiusOutOfRange(PplsError, ValueError):
    code = "RadiusOutOfRange"


class BadSignature(PplsError):
    code = "BadSignature"


class StaleTimestamp(PplsError):
    code = "StaleTimestamp"


class AlreadyRegistered(PplsError):
    code = "AlreadyRegistered"


class UnknownVehicle(PplsError, KeyError):
    code = "UnknownVehicle"


class UnknownRequester(PplsError, KeyError):
    code = "UnknownRequester"


class UnknownTarget(PplsError, KeyError):
    code = "UnknownTarget"


class MalformedFrame(PplsError, ValueError):
    code = "MalformedFrame"


class UnknownTag(MalformedFrame):
    code = "UnknownTag"


class PeerClosed(PplsError, ConnectionError):
    code = "PeerClosed"


class Timeout(PplsError, TimeoutError):
    code = "Timeout"


class ConfigInvalid(PplsError, ValueError):
    """Raised when a scenario config fails validation.

    ``diagnostics`` holds one human-readable line per problem found.
    """

    code = "ConfigInvalid"

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(self.diagnostics))


class RemoteError(PplsError):
    """A peer answered with an ``Error`` frame whose code has no local class."""

    code = "RemoteError"


_BY_CODE = {
    cls.code: cls
    for cls in (
        PlaintextOutOfRange, MalformedCiphertext, DecryptionFailure, EmptyIdentity,
        ThresholdOutOfRange, RadiusOutOfRange, BadSignature, StaleTimestamp, AlreadyRegistered,
        UnknownVehicle, UnknownRequester, UnknownTarget, MalformedFrame, UnknownTag,
    )
}


def error_for_code(code: str, detail: str) -> PplsError:
    cls = _BY_CODE.get(code, RemoteError)
    return cls(detail)
