"""Post-exam video analysis toolkit.

Harvests a labeled face dataset from a gallery-view exam recording (name
strips provide the weak labels), trains a per-student face recognizer, and
turns per-second recognitions into presence windows, absence intervals, and
report artifacts. Submodules are imported lazily by the CLI; importing
examlens itself stays light.
"""

from .errors import (
    AmbiguousMatch,
    BackendError,
    CapacityExceeded,
    ConfigError,
    DatasetTooSmall,
    EmptyVideo,
    EngineUnavailable,
    ExamLensError,
    InferenceError,
    ModelLoadError,
    RosterError,
    TooShortVideo,
    UnreadableVideo,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "AmbiguousMatch",
    "BackendError",
    "CapacityExceeded",
    "ConfigError",
    "DatasetTooSmall",
    "EmptyVideo",
    "EngineUnavailable",
    "ExamLensError",
    "InferenceError",
    "ModelLoadError",
    "RosterError",
    "TooShortVideo",
    "UnreadableVideo",
]
