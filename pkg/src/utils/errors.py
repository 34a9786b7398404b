class NluForgeError(Exception):
    """Base class for errors raised by the toolkit"""

    exit_code: int = 1
    kind: str = "error"


class ConfigError(NluForgeError, ValueError):
    """Invalid command line usage or project configuration"""

    exit_code = 1
    kind = "config"


class DataError(NluForgeError, ValueError):
    """Malformed input data, schema violations or missing stage inputs"""

    exit_code = 2
    kind = "data"


class BackendError(NluForgeError, RuntimeError):
    """Translation backend or I/O failure"""

    exit_code = 3
    kind = "backend"

    def __init__(self, message: str, pivot_lang: str | None = None):
        super().__init__(message)
        self.pivot_lang = pivot_lang
