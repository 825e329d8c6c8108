"""Exception types shared across the package."""


class VetError(Exception):
    """Base class for all errors raised by this package."""


class Rejected(VetError):
    """A verifier refused a proof or bundle.

    ``reason`` is a short machine-readable code (e.g. "bad-signature",
    "cipher-mismatch"); ``detail`` is free text for humans.
    """

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason}: {detail}" if detail else reason)


class ProtocolError(VetError):
    """A session or wire-protocol violation (notary, toy TLS, proxy)."""


class CapacityExceeded(ProtocolError):
    """A session attempted to relay more bytes than its declared capacity."""


class ValidationError(VetError):
    """A document or template failed structural validation."""
