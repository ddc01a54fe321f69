from typing import Optional

from crypto_core.exceptions import SrpsError


class SimulationError(SrpsError):
    pass


class ConfigurationError(SimulationError, ValueError):
    """A scenario that cannot run as written; carries where in the config file the problem sits."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None,
                 column: Optional[int] = None):
        self.key = key
        self.line = line
        self.column = column
        super().__init__(message)

    def __str__(self):
        message = super().__str__()
        if self.line is not None:
            where = f'line {self.line}' + (f', column {self.column}' if self.column is not None else '')
            return f'{where}: {message}'
        return message


class TopologyError(ConfigurationError):
    """No placement satisfied connectivity and colluder spacing within the retry budget."""
