"""Per-class face recognition: split, train, predict, accept.

The dataset is globally shuffled once and split 70/20/10 by default. Flip,
small-rotation, and crop augmentation apply to training batches only, never
to validation or test data. The default backbone is a small residual net
sized for CPU training on face crops; the torchvision resnets are available
when more capacity is wanted. A prediction is accepted only when its softmax
peak clears the acceptance threshold strictly.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .dataset import FaceSample, LabeledDataset
from .errors import DatasetTooSmall, InferenceError, ModelLoadError

MODEL_SUFFIX = ".model"
MANIFEST_SUFFIX = ".manifest.json"
MODEL_SCHEMA_VERSION = 1

_NORM_MEAN = 0.5
_NORM_STD = 0.5

BACKBONES = ("small_resnet", "resnet18", "resnet50")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    input_side: int = 64
    backbone: str = "small_resnet"
    random_flip: bool = True
    random_rotation_deg: float = 10.0
    random_crop_frac: float = 0.875

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.input_side < 16:
            raise ValueError(f"input_side must be >= 16, got {self.input_side}")
        if self.backbone not in BACKBONES:
            raise ValueError(f"unknown backbone {self.backbone!r}; known: {BACKBONES}")
        if not (0.0 < self.random_crop_frac <= 1.0):
            raise ValueError(f"random_crop_frac must be in (0, 1], got {self.random_crop_frac}")


@dataclass
class DatasetSplit:
    train: list[FaceSample]
    val: list[FaceSample]
    test: list[FaceSample]
    seed: int


def split_dataset(
    ds: LabeledDataset, fractions: tuple[float, float, float] = (0.7, 0.2, 0.1), seed: int = 0
) -> DatasetSplit:
    """Shuffle all samples once and cut train/val/test.

    Sizes are floor(N * frac) for train and val (with a tiny epsilon so
    exact products like 0.7 * 10 do not round down); test takes the
    remainder. Raises DatasetTooSmall when any part would be empty.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValueError(f"need three positive fractions, got {fractions}")
    if sum(fractions) > 1.0 + 1e-9:
        raise ValueError(f"fractions must sum to at most 1, got {fractions}")
    samples = ds.all_samples()
    n = len(samples)
    order = np.random.RandomState(seed).permutation(n)
    shuffled = [samples[i] for i in order]
    n_train = int(n * fractions[0] + 1e-6)
    n_val = int(n * fractions[1] + 1e-6)
    train = shuffled[:n_train]
    val = shuffled[n_train : n_train + n_val]
    test = shuffled[n_train + n_val :]
    if not train or not val or not test:
        raise DatasetTooSmall(
            f"{n} samples split into {len(train)}/{len(val)}/{len(test)}; "
            "every part must be non-empty"
        )
    return DatasetSplit(train=train, val=val, test=test, seed=seed)


class _ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(channels)

    def forward(self, x):
        y = F.relu(self.bn1(self.conv1(x)))
        y = self.bn2(self.conv2(y))
        return F.relu(x + y)


class _SmallResNet(nn.Module):
    """Three-stage residual net; about 120k parameters at 64x64 input."""

    def __init__(self, n_classes: int):
        super().__init__()
        def down(cin, cout):
            return nn.Sequential(
                nn.Conv2d(cin, cout, 3, stride=2, padding=1, bias=False),
                nn.BatchNorm2d(cout),
                nn.ReLU(inplace=True),
            )

        self.features = nn.Sequential(
            down(3, 16),
            _ResidualBlock(16),
            down(16, 32),
            _ResidualBlock(32),
            down(32, 64),
            _ResidualBlock(64),
            nn.AdaptiveAvgPool2d(1),
            nn.Flatten(),
        )
        self.head = nn.Linear(64, n_classes)

    def forward(self, x):
        return self.head(self.features(x))


class StubLogitsModel(nn.Module):
    """Returns fixed logits for any input; lets tests drive the predict path."""

    def __init__(self, logits):
        super().__init__()
        self.register_buffer("logits", torch.as_tensor(logits, dtype=torch.float32))

    def forward(self, x):
        return self.logits.unsqueeze(0).expand(x.shape[0], -1)


def build_backbone(name: str, n_classes: int) -> nn.Module:
    if name == "small_resnet":
        return _SmallResNet(n_classes)
    import torchvision.models as tvm

    if name == "resnet18":
        net = tvm.resnet18(weights=None)
        net.fc = nn.Linear(net.fc.in_features, n_classes)
        return net
    if name == "resnet50":
        net = tvm.resnet50(weights=None)
        net.fc = nn.Linear(net.fc.in_features, n_classes)
        return net
    raise ValueError(f"unknown backbone {name!r}")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis, float64 out."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class Prediction:
    probs: np.ndarray
    argmax_class: str
    argmax_prob: float


def accept_prediction(pred: Prediction, threshold: float = 0.5) -> str | None:
    """Class name when the peak probability strictly exceeds threshold."""
    if pred.argmax_prob > threshold:
        return pred.argmax_class
    return None


class Classifier:
    """Trained recognizer plus everything needed to run and reload it."""

    def __init__(self, model: nn.Module, class_names: tuple[str, ...], input_side: int, backbone: str):
        if len(class_names) != len(set(class_names)):
            raise ValueError("class names must be unique")
        self.model = model
        self.class_names = tuple(class_names)
        self.input_side = input_side
        self.backbone = backbone
        self.model.eval()

    def preprocess(self, image_bgr: np.ndarray) -> torch.Tensor:
        """BGR uint8 image of any size -> normalized 1x3xSxS float tensor."""
        if image_bgr.ndim == 2:
            image_bgr = cv2.cvtColor(image_bgr, cv2.COLOR_GRAY2BGR)
        img = cv2.resize(image_bgr, (self.input_side, self.input_side), interpolation=cv2.INTER_AREA)
        rgb = cv2.cvtColor(img, cv2.COLOR_BGR2RGB).astype(np.float32) / 255.0
        rgb = (rgb - _NORM_MEAN) / _NORM_STD
        return torch.from_numpy(rgb.transpose(2, 0, 1)).unsqueeze(0)

    def predict(self, image_bgr: np.ndarray) -> Prediction:
        """Probabilities over class_names; ties resolve to the lowest index."""
        x = self.preprocess(image_bgr)
        try:
            with torch.no_grad():
                logits = self.model(x).numpy()[0]
        except RuntimeError as exc:
            raise InferenceError(f"recognizer forward pass failed: {exc}") from exc
        probs = softmax(logits)
        idx = int(np.argmax(probs))
        return Prediction(probs=probs, argmax_class=self.class_names[idx], argmax_prob=float(probs[idx]))

    def manifest(self) -> dict:
        return {
            "schema_version": MODEL_SCHEMA_VERSION,
            "class_names": list(self.class_names),
            "input_side": self.input_side,
            "backbone": self.backbone,
            "normalization": {"mean": _NORM_MEAN, "std": _NORM_STD},
            "torch_version": torch.__version__,
        }

    def save(self, prefix: str | Path) -> tuple[Path, Path]:
        """Write <prefix>.model (weights) and <prefix>.manifest.json."""
        prefix = Path(prefix)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        model_path = prefix.with_name(prefix.name + MODEL_SUFFIX)
        manifest_path = prefix.with_name(prefix.name + MANIFEST_SUFFIX)
        torch.save({"state_dict": self.model.state_dict()}, model_path)
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return model_path, manifest_path

    @classmethod
    def load(cls, prefix: str | Path) -> "Classifier":
        prefix = Path(prefix)
        model_path = prefix.with_name(prefix.name + MODEL_SUFFIX)
        manifest_path = prefix.with_name(prefix.name + MANIFEST_SUFFIX)
        if not model_path.is_file() or not manifest_path.is_file():
            raise ModelLoadError(f"missing model files: {model_path} / {manifest_path}")
        try:
            with open(manifest_path, encoding="utf-8") as fh:
                manifest = json.load(fh)
            class_names = tuple(manifest["class_names"])
            backbone = manifest["backbone"]
            input_side = int(manifest["input_side"])
            model = build_backbone(backbone, len(class_names))
            payload = torch.load(model_path, map_location="cpu", weights_only=True)
            model.load_state_dict(payload["state_dict"])
        except ModelLoadError:
            raise
        except Exception as exc:
            raise ModelLoadError(f"could not load classifier {prefix}: {exc}") from exc
        return cls(model=model, class_names=class_names, input_side=input_side, backbone=backbone)


def _load_images(samples: list[FaceSample], root: Path, input_side: int) -> torch.Tensor:
    arrays = np.empty((len(samples), 3, input_side, input_side), dtype=np.float32)
    for i, s in enumerate(samples):
        path = Path(root) / s.image_ref
        img = cv2.imread(str(path))
        if img is None:
            raise ModelLoadError(f"sample image unreadable: {path}")
        img = cv2.resize(img, (input_side, input_side), interpolation=cv2.INTER_AREA)
        rgb = cv2.cvtColor(img, cv2.COLOR_BGR2RGB).astype(np.float32) / 255.0
        arrays[i] = ((rgb - _NORM_MEAN) / _NORM_STD).transpose(2, 0, 1)
    return torch.from_numpy(arrays)


def _augment_batch(x: torch.Tensor, cfg: TrainConfig, gen: torch.Generator) -> torch.Tensor:
    import torchvision.transforms.functional as TF

    out = x
    if cfg.random_flip:
        mask = torch.rand(x.shape[0], generator=gen) < 0.5
        if mask.any():
            out = out.clone()
            out[mask] = torch.flip(out[mask], dims=[3])
    if cfg.random_rotation_deg > 0:
        angle = float(
            (torch.rand(1, generator=gen).item() * 2 - 1) * cfg.random_rotation_deg
        )
        out = TF.rotate(out, angle)
    if cfg.random_crop_frac < 1.0:
        side = x.shape[-1]
        crop = max(8, int(side * cfg.random_crop_frac))
        max_off = side - crop
        ox = int(torch.randint(0, max_off + 1, (1,), generator=gen).item())
        oy = int(torch.randint(0, max_off + 1, (1,), generator=gen).item())
        out = F.interpolate(
            out[:, :, oy : oy + crop, ox : ox + crop], size=(side, side),
            mode="bilinear", align_corners=False,
        )
    return out


def _batch_accuracy(model: nn.Module, x: torch.Tensor, y: torch.Tensor, batch_size: int) -> float:
    model.eval()
    correct = 0
    with torch.no_grad():
        for i in range(0, len(x), batch_size):
            logits = model(x[i : i + batch_size])
            correct += int((logits.argmax(dim=1) == y[i : i + batch_size]).sum())
    return correct / max(1, len(x))


def train(
    ds: LabeledDataset,
    cfg: TrainConfig = TrainConfig(),
    split: DatasetSplit | None = None,
) -> tuple[Classifier, list[tuple[float, float]]]:
    """Train a recognizer; returns the classifier and per-epoch history.

    History holds exactly cfg.epochs entries of (train_loss, val_accuracy).
    Augmentation touches training batches only. Runs are deterministic for a
    fixed config and dataset (single-process CPU training).
    """
    class_names = tuple(ds.labels)
    if len(class_names) < 2:
        raise DatasetTooSmall(f"need at least 2 classes to train, got {len(class_names)}")
    if split is None:
        split = split_dataset(ds, seed=cfg.seed)
    label_to_idx = {name: i for i, name in enumerate(class_names)}

    x_train = _load_images(split.train, ds.root, cfg.input_side)
    y_train = torch.tensor([label_to_idx[s.label] for s in split.train], dtype=torch.long)
    x_val = _load_images(split.val, ds.root, cfg.input_side)
    y_val = torch.tensor([label_to_idx[s.label] for s in split.val], dtype=torch.long)

    torch.manual_seed(cfg.seed)
    model = build_backbone(cfg.backbone, len(class_names))
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    gen = torch.Generator().manual_seed(cfg.seed)

    history: list[tuple[float, float]] = []
    n = len(x_train)
    for _ in range(cfg.epochs):
        model.train()
        perm = torch.randperm(n, generator=gen)
        losses = []
        for i in range(0, n, cfg.batch_size):
            idx = perm[i : i + cfg.batch_size]
            xb = _augment_batch(x_train[idx], cfg, gen)
            yb = y_train[idx]
            optimizer.zero_grad()
            loss = F.cross_entropy(model(xb), yb)
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
        val_acc = _batch_accuracy(model, x_val, y_val, cfg.batch_size)
        history.append((float(np.mean(losses)), val_acc))

    clf = Classifier(model=model, class_names=class_names, input_side=cfg.input_side, backbone=cfg.backbone)
    return clf, history


def evaluate(classifier: Classifier, samples: list[FaceSample], root: str | Path) -> float:
    """Top-1 accuracy of the classifier on the given samples."""
    if not samples:
        raise ValueError("cannot evaluate on zero samples")
    x = _load_images(samples, Path(root), classifier.input_side)
    y = torch.tensor(
        [classifier.class_names.index(s.label) for s in samples], dtype=torch.long
    )
    return _batch_accuracy(classifier.model, x, y, batch_size=64)
