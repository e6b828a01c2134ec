"""Exception types shared across the toolkit.

Every error raised deliberately by this package derives from ExamLensError so
callers can catch one base type at process boundaries. The CLI maps these to
exit codes; see examlens.cli.
"""


class ExamLensError(Exception):
    """Base class for all errors raised by examlens."""


class ConfigError(ExamLensError):
    """Invalid configuration value, file, or override."""


class RosterError(ExamLensError):
    """Malformed roster input (duplicates, empty names, bad CSV)."""


class UnreadableVideo(ExamLensError):
    """The video file is missing, corrupt, or not decodable."""


class EmptyVideo(ExamLensError):
    """The container opened but holds zero frames."""


class TooShortVideo(ExamLensError):
    """Harvested dataset is too sparse to train from.

    Signals that the caller should discard the dataset and supply a longer
    recording.
    """


class DatasetTooSmall(ExamLensError):
    """Dataset cannot be split into non-empty train/val/test parts."""


class ModelLoadError(ExamLensError):
    """A model artifact is missing, fails its checksum, or will not load."""


class InferenceError(ExamLensError):
    """The backend raised during a forward pass."""


class EngineUnavailable(ExamLensError):
    """The requested OCR engine is not usable in this environment."""


class BackendError(ExamLensError):
    """An underlying library failed in a way we cannot recover from."""


class CapacityExceeded(ExamLensError):
    """A join event would overflow the gallery grid."""


class AmbiguousMatch(ExamLensError):
    """A harvested name matches several roster entries equally well.

    Carries the offending name and the candidate roster names so reports can
    surface the conflict.
    """

    def __init__(self, name: str, candidates: list[str]):
        super().__init__(f"name {name!r} matches {len(candidates)} roster entries: {candidates}")
        self.name = name
        self.candidates = list(candidates)
