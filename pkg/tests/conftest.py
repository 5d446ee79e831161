import json
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml
from PIL import Image

sys.path.insert(0, str(Path(__file__).parent))

from genaug.datasets import dataset_from_directory, save_manifest
from genaug.imagegen import ImageSpec, StubT2IBackend, resize


def write_stub_image_tree(root: Path, labels, per_class, size=16, seed0=5000):
    """Materialize a class-per-subdirectory tree of stub pipeline images."""
    backend = StubT2IBackend()
    spec = ImageSpec(width=size, height=size)
    for label in labels:
        d = root / label
        d.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            seed = seed0 + i
            base = backend.generate_base(label, seed)
            up = backend.upsample(base, label, seed)
            Image.fromarray(resize(up, spec), mode="RGB").save(d / f"{i:04d}.png")
    return root


@pytest.fixture
def toy_image_root(tmp_path):
    root = tmp_path / "data"
    write_stub_image_tree(root, ["bike", "chair"], per_class=10, size=16)
    return root


@pytest.fixture
def toy_manifest(toy_image_root):
    ds = dataset_from_directory(toy_image_root, "toy", ImageSpec(width=16, height=16))
    return save_manifest(ds, toy_image_root / "manifest.jsonl")


@pytest.fixture
def coco_captions_file(tmp_path):
    annotations = []
    texts = [
        "a white bike near the wall",
        "a dog chases a frisbee in the park",
        "a cat sits on a wooden chair",
        "a bird flies over the tree",
        "a man rides a bike on the road",
        "a bowl of fruit on the table",
        "a lamp beside the bed",
        "a boat floats on the lake",
        "a horse grazes in the field",
        "running quickly",  # no extractable keywords
    ]
    for i, text in enumerate(texts):
        annotations.append({"image_id": i // 2, "caption": text})
    p = tmp_path / "captions_train.json"
    p.write_text(json.dumps({"annotations": annotations}))
    return p


def write_config(path: Path, **entries) -> Path:
    path.write_text(yaml.safe_dump(entries))
    return path
