"""Error types shared across the pipeline."""


class NFTGuardError(Exception):
    """Base class for analyzer errors."""


class CompilerNotFound(NFTGuardError):
    pass


class CompilationFailed(NFTGuardError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class VersionMismatch(NFTGuardError):
    pass


class MalformedSourceMap(NFTGuardError):
    pass


class UnsupportedType(NFTGuardError):
    pass


class SolverFailure(NFTGuardError):
    pass


class ManifestMismatch(NFTGuardError):
    def __init__(self, message, mismatches=None):
        super().__init__(message)
        self.mismatches = mismatches or []
