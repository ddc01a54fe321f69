class SrpsError(Exception):
    """Root of every error raised by the lab."""


class CryptoError(SrpsError):
    pass


class InvalidParameter(CryptoError, ValueError):
    pass


class ChainExhausted(CryptoError):
    """Raised when a one-way chain has no undisclosed element left."""
