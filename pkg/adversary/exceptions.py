from crypto_core.exceptions import SrpsError


class AdversaryError(SrpsError):
    pass


class ProfileError(AdversaryError, ValueError):
    """An adversary profile that cannot be carried out as declared."""
