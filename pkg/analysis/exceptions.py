from crypto_core.exceptions import SrpsError


class DomainError(SrpsError, ValueError):
    """An argument outside the range a formula is defined on."""
