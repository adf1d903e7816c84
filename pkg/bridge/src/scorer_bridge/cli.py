"""Standalone scorer commands; outputs are the pipeline's evidence formats."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from countrykit.dataset_ops import read_weight_table
from countrykit.grouping import load_grouping
from countrykit.manifest import read_manifest

from .faces import detect_faces
from .grey import flag_grey
from .infer import infer_country
from .io_utils import load_labels_file, resolve
from .models import ScorerManifest, TinySceneNet, load_country_model
from .scenes import score_scenes
from .shapes import write_split
from .train import Hyperparameters, evaluate_top1, train_toy


def log(message: str) -> None:
    print(message, file=sys.stderr)


def _manifest_items(manifest_path: str, image_dir: str | None):
    return [
        (record.id, resolve(record.path_or_url, image_dir))
        for record in read_manifest(manifest_path)
    ]


def cmd_score_scenes(args) -> int:
    items = _manifest_items(args.manifest, args.image_dir)
    summary = score_scenes(items, args.out, TinySceneNet(seed=args.seed))
    log(f"scene evidence: {summary} -> {args.out}")
    return 0


def cmd_detect_faces(args) -> int:
    items = _manifest_items(args.manifest, args.image_dir)
    summary = detect_faces(items, args.out)
    log(f"face evidence: {summary} -> {args.out}")
    return 0


def cmd_flag_grey(args) -> int:
    items = _manifest_items(args.manifest, args.image_dir)
    summary = flag_grey(items, args.out)
    log(f"grey evidence: {summary} -> {args.out}")
    return 0


def cmd_make_shapes(args) -> int:
    out_dir = Path(args.out_dir)
    for split_name, n, seed in (
        ("train", args.train, args.seed),
        ("val", args.val, args.seed + 1),
        ("test", args.test, args.seed + 2),
    ):
        labels = write_split(out_dir, n, seed, split_name)
        log(f"wrote {n} {split_name} images, labels -> {labels}")
    return 0


def _load_split(data_dir: Path, split_name: str):
    import numpy as np
    from PIL import Image

    rows = load_labels_file(data_dir / f"{split_name}_labels.jsonl")
    dataset = []
    for row in rows:
        img = Image.open(data_dir / row["path"]).convert("RGB")
        dataset.append((np.asarray(img), int(row["class_id"])))
    return dataset


def cmd_train_toy(args) -> int:
    data_dir = Path(args.data_dir)
    train_set = _load_split(data_dir, "train")
    val_set = _load_split(data_dir, "val") if (data_dir / "val_labels.jsonl").exists() else None
    table = read_weight_table(args.weights)
    hp = Hyperparameters(
        batch_size=args.batch_size, epochs=args.epochs, seed=args.seed,
    )
    result = train_toy(train_set, table, hp, val_set=val_set, out_dir=args.out_dir)
    manifest = ScorerManifest(
        scene_model="tiny-scene/seeded",
        face_detector="template-correlation/1",
        country_model=f"tiny-country/trained-seed{args.seed}",
        n_classes=result.model.n_classes,
        taxonomy_version="default-365",
    )
    (Path(args.out_dir) / "scorer_manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    for entry in result.history:
        log(f"epoch {entry['epoch']}: loss_mean={entry['train_loss_mean']:.4f}"
            + (f" val_top1={entry['val_top1']:.3f}" if "val_top1" in entry else ""))
    if val_set:
        log(f"final val top-1: {evaluate_top1(result.model, val_set):.3f}")
    return 0


def cmd_infer(args) -> int:
    rows = load_labels_file(args.labels)
    model = load_country_model(args.model)
    n_classes = args.n_classes
    if args.grouping:
        grouping = load_grouping(args.grouping)
        n_classes = grouping.k
    if n_classes is None:
        n_classes = model.n_classes
    items = [(r["id"], int(r["class_id"]), Path(r["path"])) for r in rows]
    records, _means = infer_country(items, model, n_classes, args.out, image_dir=args.image_dir)
    log(f"wrote {len(records)} five-crop predictions (N={n_classes}) -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scorer-bridge",
        description="Emit scene/face/grey evidence and five-crop country predictions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score-scenes", help="Scene top-5 evidence for a manifest.")
    p.add_argument("--manifest", required=True)
    p.add_argument("--image-dir", dest="image_dir")
    p.add_argument("--seed", type=int, default=1234)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score_scenes)

    p = sub.add_parser("detect-faces", help="Face boxes for a manifest.")
    p.add_argument("--manifest", required=True)
    p.add_argument("--image-dir", dest="image_dir")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect_faces)

    p = sub.add_parser("flag-grey", help="Grey-level flags for a manifest.")
    p.add_argument("--manifest", required=True)
    p.add_argument("--image-dir", dest="image_dir")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_flag_grey)

    p = sub.add_parser("make-shapes", help="Generate the 3-class synthetic shape dataset.")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--train", type=int, default=360)
    p.add_argument("--val", type=int, default=60)
    p.add_argument("--test", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_shapes)

    p = sub.add_parser("train-toy", help="Train the toy country classifier.")
    p.add_argument("--data-dir", dest="data_dir", required=True)
    p.add_argument("--weights", required=True, help="class-weight table file")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("infer", help="Five-crop predictions for labeled images.")
    p.add_argument("--labels", required=True, help="JSONL of id/path/class_id rows")
    p.add_argument("--image-dir", dest="image_dir")
    p.add_argument("--model", required=True)
    p.add_argument("--n-classes", dest="n_classes", type=int)
    p.add_argument("--grouping", help="grouping file; its K overrides --n-classes")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        log(f"error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
