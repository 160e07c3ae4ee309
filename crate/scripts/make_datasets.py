#!/usr/bin/env python3
"""Regenerate the bundled benchmark images under data/.

Sources are the sample images shipped with scikit-image and
scikit-learn, plus text pages rendered with the DejaVu fonts. Output is
deterministic for a given set of installed packages.
"""
import os
import random

import numpy as np
from PIL import Image, ImageDraw, ImageFont
import skimage.data
from sklearn.datasets import load_sample_image

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data")


def to_gray(a):
    a = np.asarray(a)
    if a.ndim == 3:
        a = a[..., :3].astype(np.float64).mean(axis=2)
    return a.astype(np.float64)


def square_resize(a, side):
    h, w = a.shape
    s = min(h, w)
    top, left = (h - s) // 2, (w - s) // 2
    a = a[top:top + s, left:left + s]
    img = Image.fromarray(np.clip(np.rint(a), 0, 255).astype(np.uint8))
    return img.resize((side, side), Image.LANCZOS)


def save(img, *parts):
    path = os.path.join(ROOT, *parts)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    img.save(path)


def generic():
    train = {
        "astronaut": skimage.data.astronaut(),
        "chelsea": skimage.data.chelsea(),
        "coffee": skimage.data.coffee(),
        "china": load_sample_image("china.jpg"),
        "motorcycle": skimage.data.stereo_motorcycle()[0],
    }
    for name, a in train.items():
        save(square_resize(to_gray(a), 256), "generic", "train", name + ".png")
    save(square_resize(to_gray(skimage.data.camera()), 256), "generic", "test", "cameraman.png")


WORDS = (
    "the of and to in is that for it as was with be by on not he this are or his "
    "from at which but have an they you were her she there been one all we their "
    "image patch prior mixture gaussian noise blur kernel signal restoration method "
    "results table figure section model estimate sample measurement matrix operator "
    "variance iteration algorithm inverse problem data class text face training"
).split()


def text_page(rng, size=128):
    fonts = [
        "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
        "/usr/share/fonts/truetype/dejavu/DejaVuSerif.ttf",
        "/usr/share/fonts/truetype/dejavu/DejaVuSansMono.ttf",
    ]
    font = ImageFont.truetype(rng.choice(fonts), rng.choice([11, 12, 13, 14]))
    img = Image.new("L", (size, size), 255)
    draw = ImageDraw.Draw(img)
    y = rng.randint(-4, 2)
    while y < size:
        x = rng.randint(-6, 2)
        line = " ".join(rng.choice(WORDS) for _ in range(8))
        draw.text((x, y), line, fill=0, font=font)
        y += font.size + rng.randint(2, 4)
    return img


def text():
    rng = random.Random(2016)
    for i in range(10):
        split = "test" if i == 0 else "train"
        save(text_page(rng), "text", split, "text_%02d.png" % i)


def faces():
    path = os.path.join(os.path.dirname(skimage.data.__file__), "lfw_subset.npy")
    stack = np.load(path)[:100]
    for i, a in enumerate(stack):
        img = Image.fromarray(np.clip(np.rint(a * 255.0), 0, 255).astype(np.uint8))
        save(img, "faces", "face_%03d.png" % i)


if __name__ == "__main__":
    generic()
    text()
    faces()
