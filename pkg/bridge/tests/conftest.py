from pathlib import Path

import numpy as np
import pytest
from PIL import Image

PRIMARY_ROOT = Path(__file__).parents[2]
PRIMARY_FIXTURES = PRIMARY_ROOT / "tests" / "fixtures"


@pytest.fixture(scope="session")
def shape_data_dir(tmp_path_factory) -> Path:
    """Small on-disk shape dataset: 12 train / 6 val / 6 test."""
    from scorer_bridge.shapes import write_split

    out = tmp_path_factory.mktemp("shapes")
    write_split(out, 12, seed=0, split_name="train")
    write_split(out, 6, seed=1, split_name="val")
    write_split(out, 6, seed=2, split_name="test")
    return out


@pytest.fixture(scope="session")
def scored_images(tmp_path_factory) -> list[tuple[str, Path]]:
    """A handful of (image_id, path) pairs: shapes, a face, a grey image, a bad file."""
    from scorer_bridge.faces import draw_face
    from scorer_bridge.shapes import make_shape_image

    import random

    out = tmp_path_factory.mktemp("imgs")
    rng = random.Random(3)
    items = []
    for i in range(6):
        array = make_shape_image(i % 3, rng)
        path = out / f"shape{i}.png"
        Image.fromarray(array).save(path)
        items.append((f"shape{i}", path))
    scene = np.full((320, 320, 3), 205, np.uint8)
    scene[40:200, 60:220] = draw_face(160)
    face_path = out / "face.png"
    Image.fromarray(scene).save(face_path)
    items.append(("face0", face_path))
    grey = np.repeat(np.random.default_rng(1).integers(0, 255, (80, 80), np.uint8)[..., None], 3, axis=2)
    grey_path = out / "grey.png"
    Image.fromarray(grey).save(grey_path)
    items.append(("grey0", grey_path))
    bad = out / "broken.png"
    bad.write_bytes(b"this is not a png")
    items.append(("broken0", bad))
    return items
