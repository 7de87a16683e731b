#!/usr/bin/env python3
"""Regenerate assets/benchmark/*.pgm from scikit-image's bundled sample images.

Each image is converted to 8-bit grayscale (Rec. 601 luma for RGB sources)
and center-cropped. The results are written as binary PGM (P5, maxval 255).

Run from the repository root:  python3 scripts/make_dataset.py
"""

import os

import numpy as np
import skimage.data as data

OUT = os.path.join(os.path.dirname(__file__), "..", "assets", "benchmark")

# name -> (loader, crop size (h, w))
SOURCES = {
    "camera": (data.camera, (256, 256)),
    "astronaut": (data.astronaut, (256, 256)),
    "moon": (data.moon, (256, 256)),
    "coffee": (data.coffee, (256, 256)),
    "chelsea": (data.chelsea, (256, 256)),
    "coins": (data.coins, (256, 256)),
    "brick": (data.brick, (256, 256)),
    "grass": (data.grass, (256, 256)),
    "text": (data.text, (168, 256)),
    "page": (data.page, (190, 256)),
}


def to_gray_u8(img):
    if img.ndim == 2:
        g = img.astype(np.float64)
    else:
        rgb = img.astype(np.float64)
        g = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.clip(np.floor(g + 0.5), 0, 255).astype(np.uint8)


def center_crop(img, h, w):
    top = (img.shape[0] - h) // 2
    left = (img.shape[1] - w) // 2
    return img[top : top + h, left : left + w]


def write_pgm(path, img):
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        fh.write(img.tobytes())


def main():
    os.makedirs(OUT, exist_ok=True)
    for name, (loader, (h, w)) in sorted(SOURCES.items()):
        img = to_gray_u8(loader())
        if img.shape[0] < h or img.shape[1] < w:
            raise SystemExit(f"{name}: source {img.shape} smaller than crop {h}x{w}")
        img = center_crop(img, h, w)
        out = os.path.join(OUT, f"{name}.pgm")
        write_pgm(out, img)
        print(f"{out}: {img.shape[1]}x{img.shape[0]}")


if __name__ == "__main__":
    main()
