"""Exception types raised across the analyzer."""


class AxeError(Exception):
    """Base class for all analyzer errors."""


class EmptyBytecode(AxeError):
    pass


class MalformedHex(AxeError):
    pass


class ManifestError(AxeError):
    """Manifest does not match the schema; ``path`` names the offending field."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class RoleError(ManifestError):
    pass


class BindError(AxeError):
    pass


class UsageError(AxeError):
    pass


class AnalysisTimeout(AxeError):
    pass
