"""Exports the natural test images used by the haze-monotonicity check.

Images come from the scikit-image sample data, centre-cropped to a square and
resized to 96 x 96 RGB PNGs.
"""

import argparse
from pathlib import Path

import numpy as np
from skimage import data, io, transform, util

SIZE = 96


def sources():
    left, right, _ = data.stereo_motorcycle()
    coffee = data.coffee()
    return {
        "astronaut": data.astronaut(),
        "chelsea": data.chelsea(),
        "coffee": coffee,
        "coffee_detail": coffee[:200, 300:],
        "rocket": data.rocket(),
        "hubble": data.hubble_deep_field(),
        "ihc": data.immunohistochemistry(),
        "retina": data.retina(),
        "motorcycle_left": left,
        "motorcycle_right": right,
    }


def square(image):
    h, w = image.shape[:2]
    side = min(h, w)
    top, left = (h - side) // 2, (w - side) // 2
    return image[top:top + side, left:left + side]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "tests/data/natural")
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name, image in sources().items():
        small = transform.resize(square(image[..., :3]), (SIZE, SIZE), anti_aliasing=True)
        io.imsave(args.out / f"{name}.png", util.img_as_ubyte(np.clip(small, 0, 1)), check_contrast=False)
        print(name)


if __name__ == "__main__":
    main()
