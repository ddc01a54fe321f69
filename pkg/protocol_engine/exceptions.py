from crypto_core.exceptions import SrpsError


class ProtocolError(SrpsError):
    pass


class RenewalRequired(ProtocolError):
    """The pair's SNV chain has no usable request left; run the renewal exchange first."""
