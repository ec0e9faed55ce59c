"""Exception types shared across the toolkit."""


class ConfigError(ValueError):
    """Invalid construction or experiment configuration."""


class SceneError(ValueError):
    """Invalid acoustic scene (source/microphone placement, geometry)."""


class NumericalError(RuntimeError):
    """A numerical routine failed (SVD non-convergence, singular solve)."""


class RankDeficiencyError(NumericalError):
    """A requested modal subspace includes singular values below the floor."""

    def __init__(self, message: str, mode_index: int | None = None):
        super().__init__(message)
        self.mode_index = mode_index


class SfmxFormatError(ValueError):
    """Malformed SFMX file. Carries the byte offset of the defect."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
