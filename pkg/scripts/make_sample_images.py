"""Regenerate the bundled sample images from scikit-image's data module.

Each source is converted to 8-bit gray (ITU-R 601 luma), downsampled 2x by
block averaging and center-cropped. Only needed by maintainers; the package
itself does not depend on scikit-image.
"""

from pathlib import Path

import numpy as np
import skimage.data

from csdesign.imageio import write_pgm

DATA = Path(__file__).resolve().parents[1] / "src" / "csdesign" / "data"

TEST = ["camera", "coins", "moon", "astronaut", "coffee", "clock"]
TRAIN = ["brick", "grass", "gravel", "chelsea", "rocket", "immunohistochemistry"]


def gray(name):
    img = getattr(skimage.data, name)().astype(np.float64)
    if img.ndim == 3:
        img = img[..., :3] @ np.array([0.299, 0.587, 0.114])
    return img


def shrink(img):
    h, w = (s // 2 * 2 for s in img.shape)
    return img[:h, :w].reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def crop(img, size):
    h, w = img.shape
    top, left = (h - size) // 2, (w - size) // 2
    return img[top:top + size, left:left + size]


def main():
    for sub, names, size in (("test", TEST, 96), ("train", TRAIN, 128)):
        for name in names:
            out = DATA / sub / f"{name}.pgm"
            write_pgm(out, np.round(crop(shrink(gray(name)), size)))
            print(out)


if __name__ == "__main__":
    main()
