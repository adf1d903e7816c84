"""Desk-scale trainer for the country-class scorer.

Mirrors the full-scale recipe at toy size: momentum SGD (lr 1e-2, momentum
0.9, weight decay 1e-4), horizontal/vertical flips, a random crop covering
at least 2/3 of the image area resized to 224, and cross entropy weighted by
the supplied 1/sqrt(n) table. The full-scale run uses batch size 320 for 25
epochs; the defaults here are scaled down to finish in minutes on a CPU.

The first batch's probabilities, targets, and summed loss are dumped at
float64 so the loss can be recomputed independently from the weight table.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from countrykit.dataset_ops import WeightTable

from .io_utils import atomic_write_text
from .models import CROP_INPUT_SIZE, TinyCountryNet, normalize_batch, save_country_model


@dataclass
class Hyperparameters:
    learning_rate: float = 1e-2
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0


@dataclass
class TrainResult:
    model: TinyCountryNet
    history: list[dict] = field(default_factory=list)
    first_batch: dict = field(default_factory=dict)


def _check_labels_against_table(labels: list[int], table: WeightTable) -> int:
    present = set(labels)
    missing = sorted(present - set(table.entries))
    if missing:
        raise ValueError(f"labels {missing} have no weight table entry (class-count mismatch)")
    return max(table.entries) + 1


def _to_chw(array: np.ndarray) -> torch.Tensor:
    if not array.flags.writeable:
        array = array.copy()  # PIL-backed arrays are read-only
    return torch.from_numpy(np.ascontiguousarray(array)).permute(2, 0, 1).float() / 255.0


def _augment(x: torch.Tensor, rng: random.Random) -> torch.Tensor:
    if rng.random() < 0.5:
        x = torch.flip(x, dims=[2])
    if rng.random() < 0.5:
        x = torch.flip(x, dims=[1])
    _, h, w = x.shape
    side = math.sqrt(rng.uniform(2.0 / 3.0, 1.0))
    ch = max(1, round(h * side))
    cw = max(1, round(w * side))
    top = rng.randint(0, h - ch)
    left = rng.randint(0, w - cw)
    crop = x[:, top : top + ch, left : left + cw]
    return F.interpolate(
        crop.unsqueeze(0), size=(CROP_INPUT_SIZE, CROP_INPUT_SIZE),
        mode="bilinear", align_corners=False,
    )[0]


def _plain_resize(x: torch.Tensor) -> torch.Tensor:
    return F.interpolate(
        x.unsqueeze(0), size=(CROP_INPUT_SIZE, CROP_INPUT_SIZE),
        mode="bilinear", align_corners=False,
    )[0]


@torch.no_grad()
def evaluate_top1(model: TinyCountryNet, dataset: list[tuple[np.ndarray, int]]) -> float:
    model.eval()
    correct = 0
    for array, label in dataset:
        x = normalize_batch(_plain_resize(_to_chw(array)).unsqueeze(0))
        pred = int(model(x).argmax(dim=1).item())
        correct += pred == label
    return correct / len(dataset)


def train_toy(
    train_set: list[tuple[np.ndarray, int]],
    weight_table: WeightTable,
    hp: Hyperparameters = Hyperparameters(),
    val_set: list[tuple[np.ndarray, int]] | None = None,
    out_dir: Path | str | None = None,
) -> TrainResult:
    labels = [label for _, label in train_set]
    n_classes = _check_labels_against_table(labels, weight_table)

    torch.manual_seed(hp.seed)
    model = TinyCountryNet(n_classes, seed=hp.seed)
    optimizer = torch.optim.SGD(
        model.parameters(), lr=hp.learning_rate, momentum=hp.momentum,
        weight_decay=hp.weight_decay,
    )
    weights = torch.zeros(n_classes, dtype=torch.float32)
    for class_id, entry in weight_table.entries.items():
        weights[class_id] = entry.weight

    result = TrainResult(model=model)
    aug_rng = random.Random(hp.seed ^ 0x5EED)
    for epoch in range(hp.epochs):
        model.train()
        order = list(range(len(train_set)))
        random.Random(hp.seed + epoch).shuffle(order)
        epoch_loss_sum = 0.0
        n_seen = 0
        for start in range(0, len(order), hp.batch_size):
            batch_idx = order[start : start + hp.batch_size]
            xs = torch.stack([
                _augment(_to_chw(train_set[i][0]), aug_rng) for i in batch_idx
            ])
            xs = normalize_batch(xs)
            ys = torch.tensor([train_set[i][1] for i in batch_idx])
            logits = model(xs)
            log_probs = F.log_softmax(logits, dim=1)
            loss_sum = F.nll_loss(log_probs, ys, weight=weights, reduction="sum")
            # optimize the weight-normalized mean (torch's weighted-CE mean
            # convention) so the step size is independent of the weight scale;
            # the logged/cross-checked quantity stays the plain sum
            loss = loss_sum / weights[ys].sum()
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

            if epoch == 0 and start == 0:
                # float64 dump with the table's exact weights, so the loss is
                # reproducible from the dump alone
                probs64 = torch.softmax(logits.detach().double(), dim=1)
                loss64 = 0.0
                for row, target in zip(probs64, ys.tolist()):
                    p = max(float(row[target]), 1e-12)
                    loss64 += -weight_table.weight(target) * math.log(p)
                result.first_batch = {
                    "probs": [[float(v) for v in row] for row in probs64],
                    "targets": ys.tolist(),
                    "weights": {str(c): e.weight for c, e in sorted(weight_table.entries.items())},
                    "loss_sum": loss64,
                }
            epoch_loss_sum += float(loss_sum.detach())
            n_seen += len(batch_idx)

        entry = {
            "epoch": epoch,
            "train_loss_sum": epoch_loss_sum,
            "train_loss_mean": epoch_loss_sum / n_seen,
        }
        if val_set:
            entry["val_top1"] = evaluate_top1(model, val_set)
        result.history.append(entry)
        if out_dir is not None:
            save_country_model(Path(out_dir) / f"checkpoint_epoch{epoch}.pt", model)

    model.eval()
    if out_dir is not None:
        out_dir = Path(out_dir)
        save_country_model(out_dir / "model.pt", model)
        log = "\n".join(json.dumps(e, sort_keys=True) for e in result.history)
        atomic_write_text(out_dir / "training_log.jsonl", log + "\n")
        atomic_write_text(
            out_dir / "first_batch.json",
            json.dumps(result.first_batch, sort_keys=True) + "\n",
        )
    return result
