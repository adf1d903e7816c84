"""Torch models behind the scorers, and the scorer manifest.

Both nets are deliberately small CPU models. The scene scorer ships with
seeded random weights (its role in desk runs is producing schema-correct,
deterministic evidence); the country classifier is trained by train_toy.
Swap either for a real model checkpoint via the model path arguments.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from torch import nn

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

SCENE_INPUT_SIZE = 64
CROP_INPUT_SIZE = 224


@dataclass
class ScorerManifest:
    scene_model: str
    face_detector: str
    country_model: str
    n_classes: int
    taxonomy_version: str

    def validate_against_k(self, k: int) -> None:
        if self.n_classes != k:
            raise ValueError(f"n_classes {self.n_classes} != grouping K {k}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


class TinySceneNet(nn.Module):
    """365-way scene scorer over 64x64 inputs; normalized output layer."""

    def __init__(self, n_categories: int = 365, seed: int = 1234):
        super().__init__()
        torch.manual_seed(seed)
        self.features = nn.Sequential(
            nn.Conv2d(3, 16, 5, stride=2, padding=2), nn.ReLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(32, 64, 3, stride=2, padding=1), nn.ReLU(),
            nn.AdaptiveAvgPool2d(1),
        )
        self.classifier = nn.Linear(64, n_categories)
        self.n_categories = n_categories

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = self.features(x).flatten(1)
        return self.classifier(feats)


class TinyCountryNet(nn.Module):
    """Country-class scorer over 224x224 crops."""

    def __init__(self, n_classes: int, seed: int = 4321):
        super().__init__()
        torch.manual_seed(seed)
        self.features = nn.Sequential(
            nn.Conv2d(3, 16, 5, stride=4, padding=2), nn.ReLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(32, 64, 3, stride=2, padding=1), nn.ReLU(),
            nn.AdaptiveAvgPool2d(1),
        )
        self.classifier = nn.Linear(64, n_classes)
        self.n_classes = n_classes

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        feats = self.features(x).flatten(1)
        return self.classifier(feats)


def normalize_batch(x: torch.Tensor) -> torch.Tensor:
    """[0,1] RGB batch -> standardized with the pretraining statistics."""
    mean = torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1)
    std = torch.tensor(IMAGENET_STD).view(1, 3, 1, 1)
    return (x - mean) / std


def save_country_model(path: Path | str, model: TinyCountryNet) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({"state_dict": model.state_dict(), "n_classes": model.n_classes}, path)


def load_country_model(path: Path | str) -> TinyCountryNet:
    checkpoint = torch.load(Path(path), map_location="cpu", weights_only=True)
    model = TinyCountryNet(n_classes=int(checkpoint["n_classes"]))
    model.load_state_dict(checkpoint["state_dict"])
    model.eval()
    return model
