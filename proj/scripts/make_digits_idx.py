#!/usr/bin/env python3
"""Build the bundled handwritten-digits fixtures in IDX format.

Takes the classic scikit-learn digits set (1797 real 8x8 grayscale digit
scans, 10 classes), upsamples each image to 28x28 with bilinear
interpolation, and writes a train/test split as big-endian IDX files
(the same on-disk format as the classic MNIST distribution):

    data/digits-train-images-idx3-ubyte   (1597 images, 28x28, uint8)
    data/digits-train-labels-idx1-ubyte
    data/digits-test-images-idx3-ubyte    (200 images)
    data/digits-test-labels-idx1-ubyte

The output is deterministic; the generated files are committed so the
C++ tests do not depend on Python being available.
"""

import os
import struct
import sys

import numpy as np
from sklearn.datasets import load_digits

OUT_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), os.pardir, "data")
TEST_COUNT = 200
SIZE = 28


def bilinear_upsample(img, size):
    """Upsample a 2D array to size x size, align-corners bilinear."""
    h, w = img.shape
    ys = np.linspace(0.0, h - 1.0, size)
    xs = np.linspace(0.0, w - 1.0, size)
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 2)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 2)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    a = img[np.ix_(y0, x0)]
    b = img[np.ix_(y0, x0 + 1)]
    c = img[np.ix_(y0 + 1, x0)]
    d = img[np.ix_(y0 + 1, x0 + 1)]
    return (a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx
            + c * fy * (1 - fx) + d * fy * fx)


def write_idx_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), SIZE, SIZE))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    raw = load_digits()
    # Raw pixel range is 0..16; rescale to bytes before interpolation.
    imgs = raw.images * (255.0 / 16.0)
    labels = raw.target.astype(np.uint8)

    rng = np.random.default_rng(0)
    order = rng.permutation(len(imgs))
    imgs, labels = imgs[order], labels[order]

    up = np.zeros((len(imgs), SIZE, SIZE))
    for i, im in enumerate(imgs):
        up[i] = bilinear_upsample(im, SIZE)
    up = np.clip(np.round(up), 0, 255).astype(np.uint8)

    os.makedirs(OUT_DIR, exist_ok=True)
    n_train = len(up) - TEST_COUNT
    write_idx_images(os.path.join(OUT_DIR, "digits-train-images-idx3-ubyte"), up[:n_train])
    write_idx_labels(os.path.join(OUT_DIR, "digits-train-labels-idx1-ubyte"), labels[:n_train])
    write_idx_images(os.path.join(OUT_DIR, "digits-test-images-idx3-ubyte"), up[n_train:])
    write_idx_labels(os.path.join(OUT_DIR, "digits-test-labels-idx1-ubyte"), labels[n_train:])
    print(f"wrote {n_train} train / {TEST_COUNT} test images to {os.path.normpath(OUT_DIR)}",
          file=sys.stderr)


if __name__ == "__main__":
    main()
