"""Pipeline configuration: defaults, YAML files, and dotted overrides.

Precedence is flags over file over defaults. The config is a nested mapping
with a fixed schema; unknown keys are rejected so typos fail fast. A sha256
of the canonical JSON form identifies a configuration in run manifests.
"""

import copy
import hashlib
import json
from pathlib import Path

import yaml

from .detect import DetectorSpec
from .errors import ConfigError
from .model import AnalysisConfig
from .ocr import NameStripSpec, OcrConfig

DEFAULTS: dict = {
    "grid": {"rows": 5, "cols": 5},
    "detector": {
        "kind": "haar_cascade",
        "model_artifact": None,
        "model_sha256": None,
        "input_side": 300,
        "min_confidence": 0.5,
    },
    "ocr": {
        "engine": "template",
        "threshold": 180,
        "upscale_k": 3,
        "auto_threshold": True,
        "strip": {"x_frac": 0.0, "y_frac": 0.85, "w_frac": 0.40, "h_frac": 0.15},
    },
    "dataset": {
        "sample_every_n": None,
        "worker_count": 1,
        "crop_margin_frac": 0.25,
        "min_class_count": 100,
        "fuzzy_max_dist": 0.3,
        "min_class_frac": 0.8,
    },
    "train": {
        "epochs": 10,
        "learning_rate": 1e-3,
        "batch_size": 32,
        "seed": 0,
        "input_side": 64,
        "backbone": "small_resnet",
        "random_flip": True,
        "random_rotation_deg": 10.0,
        "random_crop_frac": 0.875,
    },
    "analysis": {
        "fps_assumed": 30.0,
        "window_s": 30,
        "presence_min_count": 10,
        "accept_threshold": 0.5,
    },
}

# keys that may hold None (and what type a non-null value must have)
_NULLABLE = {
    ("detector", "model_artifact"): str,
    ("detector", "model_sha256"): str,
    ("dataset", "sample_every_n"): int,
}


def _coerce(path: tuple, value, default):
    if value is None or default is None:
        if path in _NULLABLE:
            if value is None:
                return None
            expected = _NULLABLE[path]
            if isinstance(value, expected) or (expected is float and isinstance(value, int)):
                return value
            raise ConfigError(f"config key {'.'.join(path)}: expected {expected.__name__} or null")
        if value is None:
            raise ConfigError(f"config key {'.'.join(path)} may not be null")
        raise ConfigError(f"config key {'.'.join(path)} unexpectedly defaults to null")
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        raise ConfigError(f"config key {'.'.join(path)}: expected boolean, got {value!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {'.'.join(path)}: expected integer, got {value!r}")
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"config key {'.'.join(path)}: expected integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {'.'.join(path)}: expected number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"config key {'.'.join(path)}: expected string, got {value!r}")
        return value
    raise ConfigError(f"config key {'.'.join(path)}: unsupported type")  # pragma: no cover


def _merge(defaults: dict, data: dict, prefix: tuple = ()) -> dict:
    out = {}
    unknown = set(data) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown config key(s) {sorted(unknown)} under {'.'.join(prefix) or 'root'}")
    for key, dval in defaults.items():
        path = prefix + (key,)
        if key not in data:
            out[key] = copy.deepcopy(dval)
        elif isinstance(dval, dict):
            if not isinstance(data[key], dict):
                raise ConfigError(f"config key {'.'.join(path)} must be a mapping")
            out[key] = _merge(dval, data[key], path)
        else:
            out[key] = _coerce(path, data[key], dval)
    return out


class PipelineConfig:
    """Validated configuration tree with typed accessors per module."""

    def __init__(self, data: dict | None = None):
        self.data = _merge(DEFAULTS, data or {})

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            try:
                raw = yaml.safe_load(fh)
            except yaml.YAMLError as exc:
                raise ConfigError(f"config file is not valid YAML: {exc}") from exc
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
        return cls(raw)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(self.data, fh, sort_keys=True, default_flow_style=False)

    def with_overrides(self, overrides: dict[str, object]) -> "PipelineConfig":
        """New config with dotted-key overrides applied (flags beat files)."""
        data = self.to_dict()
        for dotted, value in overrides.items():
            if value is None:
                continue
            parts = dotted.split(".")
            node = data
            for p in parts[:-1]:
                if not isinstance(node, dict) or p not in node:
                    raise ConfigError(f"unknown config key {dotted!r}")
                node = node[p]
            if not isinstance(node, dict) or parts[-1] not in node:
                raise ConfigError(f"unknown config key {dotted!r}")
            node[parts[-1]] = value
        return PipelineConfig(data)

    def sha256(self) -> str:
        canonical = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    # typed accessors; validation in the target dataclasses applies here

    def strip_spec(self) -> NameStripSpec:
        s = self.data["ocr"]["strip"]
        return NameStripSpec(s["x_frac"], s["y_frac"], s["w_frac"], s["h_frac"])

    def ocr_config(self) -> OcrConfig:
        o = self.data["ocr"]
        return OcrConfig(
            engine=o["engine"],
            threshold=o["threshold"],
            upscale_k=o["upscale_k"],
            auto_threshold=o["auto_threshold"],
        )

    def detector_spec(self) -> DetectorSpec:
        d = self.data["detector"]
        return DetectorSpec(
            kind=d["kind"],
            model_artifact=d["model_artifact"],
            model_sha256=d["model_sha256"],
            input_side=d["input_side"],
            min_confidence=d["min_confidence"],
        )

    def build_options(self):
        from .dataset import BuildOptions  # keeps config import light

        ds = self.data["dataset"]
        g = self.data["grid"]
        return BuildOptions(
            rows=g["rows"],
            cols=g["cols"],
            sample_every_n=ds["sample_every_n"],
            worker_count=ds["worker_count"],
            crop_margin_frac=ds["crop_margin_frac"],
            strip=self.strip_spec(),
            detector=self.detector_spec(),
            ocr=self.ocr_config(),
        )

    def train_config(self):
        from .recognize import TrainConfig  # torch import stays lazy

        t = self.data["train"]
        try:
            return TrainConfig(
                epochs=t["epochs"],
                learning_rate=t["learning_rate"],
                batch_size=t["batch_size"],
                seed=t["seed"],
                input_side=t["input_side"],
                backbone=t["backbone"],
                random_flip=t["random_flip"],
                random_rotation_deg=t["random_rotation_deg"],
                random_crop_frac=t["random_crop_frac"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def analysis_config(self) -> AnalysisConfig:
        a = self.data["analysis"]
        g = self.data["grid"]
        return AnalysisConfig(
            fps_assumed=a["fps_assumed"],
            window_s=a["window_s"],
            presence_min_count=a["presence_min_count"],
            accept_threshold=a["accept_threshold"],
            rows=g["rows"],
            cols=g["cols"],
        )
