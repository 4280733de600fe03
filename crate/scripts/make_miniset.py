"""Builds the annotated face mini-set used by the detection tests.

Faces come from the LFW subset shipped with scikit-image. Each face crop is
upscaled, tinted, and pasted onto a smooth noisy background; the paste
rectangle is the annotation.
"""
import json
import os
import sys

import numpy as np
from PIL import Image

OUT = sys.argv[1] if len(sys.argv) > 1 else "crates/core/data/miniset"
LFW = os.path.join(os.path.dirname(__import__("skimage").__file__), "data", "lfw_subset.npy")


def background(rng, h, w):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    base = rng.uniform(60, 200, 3)
    slope = rng.uniform(-0.25, 0.25, (2, 3))
    img = base + yy[..., None] * slope[0] + xx[..., None] * slope[1]
    img += rng.normal(0, 4, (h, w, 3))
    return img


def main():
    rng = np.random.default_rng(20240611)
    faces = np.load(LFW)[:100]
    os.makedirs(OUT, exist_ok=True)
    annotations = []
    picks = rng.choice(100, 20, replace=False)
    for n, idx in enumerate(picks):
        h = int(rng.integers(200, 260))
        w = int(rng.integers(240, 330))
        size = int(rng.integers(80, 140))
        size = min(size, h - 20, w - 20)
        x = int(rng.integers(5, w - size - 5))
        y = int(rng.integers(5, h - size - 5))
        face = Image.fromarray((faces[idx] * 255).astype(np.uint8)).resize((size, size), Image.BICUBIC)
        f = np.asarray(face, dtype=np.float64)[..., None]
        tint = rng.uniform(0.85, 1.1, 3) * np.array([1.05, 0.95, 0.85])
        img = background(rng, h, w)
        img[y:y + size, x:x + size] = f * tint
        img = np.clip(np.round(img), 0, 255).astype(np.uint8)
        name = f"face_{n:02d}.png"
        Image.fromarray(img).save(os.path.join(OUT, name))
        annotations.append({"file": name, "box": {"x": x, "y": y, "w": size, "h": size}})
    with open(os.path.join(OUT, "annotations.json"), "w") as fh:
        json.dump({"source": "scikit-image lfw_subset", "faces": annotations}, fh, indent=2)
        fh.write("\n")


if __name__ == "__main__":
    main()
