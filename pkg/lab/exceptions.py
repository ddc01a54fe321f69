from crypto_core.exceptions import SrpsError


class LabError(SrpsError):
    pass


class CheckFailed(LabError):
    """An acceptance check found the build wrong; the message says how."""
