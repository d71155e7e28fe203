"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NetworkError -> 4.
"""


class MoldistillError(Exception):
    """Base class for all package-specific errors."""


class SmilesError(MoldistillError):
    """Malformed SMILES input. Carries the byte offset of the offending token."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class GraphError(MoldistillError):
    """A molecular graph violates a structural invariant."""


class DataError(MoldistillError):
    """Dataset files missing, malformed, or inconsistent with their task spec."""


class ConfigError(MoldistillError):
    """Invalid configuration value. Carries the dotted path to the offending key."""

    def __init__(self, message: str, key: str = ""):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


class NetworkError(MoldistillError):
    """Remote call failed after retries, or a cold cache was hit in offline mode."""


class NonFiniteError(MoldistillError):
    """A numeric operation produced NaN or Inf."""
