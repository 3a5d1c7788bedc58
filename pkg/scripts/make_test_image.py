"""Write the 128x128 natural test image used by the image-regression runs.

Takes scikit-image's bundled astronaut photo (512x512) and averages 4x4 blocks.

    python scripts/make_test_image.py data/astronaut128.ppm
"""
import sys

import numpy as np
from skimage import data

from stablesim.imageio import ImageGrid, save_ppm


def main(out="data/astronaut128.ppm", size=128):
    img = data.astronaut().astype(np.float64) / 255.0
    f = img.shape[0] // size
    small = img[: size * f, : size * f].reshape(size, f, size, f, 3).mean(axis=(1, 3))
    save_ppm(ImageGrid(small), out)
    print(f"wrote {out} ({size}x{size})")


if __name__ == "__main__":
    main(*sys.argv[1:])
