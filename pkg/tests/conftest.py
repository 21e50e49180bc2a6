"""Shared synthetic-data builders for the test suite.

Images are flat two-tone scenes (few distinct colors keeps the bilateral
filter cheap in tests); activation stacks carry a Gaussian bump at the blob
location plus seeded noise, so every fixture is reproducible byte-for-byte.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from maskctl.tensor_store import write_tensor


def blob_image(size: int, center: tuple[int, int], radius: int) -> tuple[np.ndarray, np.ndarray]:
    """A two-tone RGB uint8 image and the boolean blob support."""
    yy, xx = np.mgrid[0:size, 0:size]
    blob = (yy - center[0]) ** 2 + (xx - center[1]) ** 2 < radius**2
    img = np.zeros((size, size, 3), dtype=np.uint8)
    img[..., 0] = np.where(blob, 200, 40)
    img[..., 1] = np.where(blob, 70, 130)
    img[..., 2] = np.where(blob, 60, 110)
    return img, blob


def bump_stack(size: int, center: tuple[float, float], sigma: float, channels: int,
               rng: np.random.Generator, noise: float = 0.05) -> np.ndarray:
    """(C, size, size) activation stack: shared Gaussian bump plus noise."""
    yy, xx = np.mgrid[0:size, 0:size]
    bump = np.exp(-((yy - center[0]) ** 2 + (xx - center[1]) ** 2) / (2.0 * sigma**2))
    stack = bump[None].repeat(channels, axis=0) + rng.normal(0.0, noise, (channels, size, size))
    return stack.astype(np.float32)


def build_dataset(
    root: Path,
    *,
    ids: tuple[str, ...] = ("img_a", "img_b", "img_c"),
    size: int = 20,
    num_classes: int = 3,
    seed: int = 7,
    scores: str | None = "normal",
) -> Path:
    """Write a small dataset (images, activations, scores, manifest) under root.

    scores="normal" draws N(0, 1.5) score maps, "saturated" makes the absent
    class win by +30 logits everywhere (probabilities pinned against 1, which
    defeats finite differences), None omits score tensors entirely.
    Returns the manifest path.
    """
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for n, image_id in enumerate(ids):
        center = (size // 3 + 2 * n, size // 2 - n)
        radius = size // 4
        img, _ = blob_image(size, center, radius)
        Image.fromarray(img).save(root / f"{image_id}.png")
        for name, scale in (("conv4", 2), ("conv5", 4)):
            stack = bump_stack(
                size // scale, (center[0] / scale, center[1] / scale), radius / scale, 4, rng
            )
            write_tensor(root / f"{image_id}.{name}.fgbg", stack)
        entry = {
            "image_id": image_id,
            "image_path": f"{image_id}.png",
            "activation_paths": {
                "conv4": f"{image_id}.conv4.fgbg",
                "conv5": f"{image_id}.conv5.fgbg",
            },
            "tags": {"present": [0, 1], "absent": list(range(2, num_classes))},
        }
        if scores is not None:
            s = rng.normal(0.0, 1.5, (num_classes, size, size)).astype(np.float32)
            if scores == "saturated":
                s = np.zeros((num_classes, size, size), dtype=np.float32)
                s[num_classes - 1] = 30.0
            write_tensor(root / f"{image_id}.scores.fgbg", s)
            entry["score_path"] = f"{image_id}.scores.fgbg"
        entries.append(entry)
    manifest = root / "manifest.json"
    manifest.write_text(json.dumps({"num_classes": num_classes, "entries": entries}, indent=2))
    return manifest


def tree_digest(root: Path) -> dict[str, bytes]:
    """Relative path -> file bytes for every file under root (byte comparisons)."""
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }
