"""Regenerate src/fconv/data/crops from scikit-image's sample images.

Images are converted to gray, downscaled 4x with anti-aliasing, and cut
into 48x48 crops at seeded random positions. Needs scikit-image; the
package itself does not.
"""

from pathlib import Path

import numpy as np
from skimage import data
from skimage.color import rgb2gray
from skimage.transform import rescale

from fconv.io import write_pgm

SOURCES = ["camera", "astronaut", "coffee", "chelsea", "rocket", "coins", "moon",
           "immunohistochemistry", "hubble_deep_field", "grass", "gravel", "brick"]
CROP = 48
PER_IMAGE = 3

out = Path(__file__).resolve().parents[1] / "src" / "fconv" / "data" / "crops"
out.mkdir(parents=True, exist_ok=True)
rng = np.random.default_rng(2021)
n = 0
for name in SOURCES:
    img = getattr(data, name)()
    if img.ndim == 3:
        img = rgb2gray(img[..., :3])
    img = img.astype(float)
    img = (img - img.min()) / (img.max() - img.min())
    small = rescale(img, 0.25, anti_aliasing=True)
    for _ in range(PER_IMAGE):
        i = rng.integers(0, small.shape[0] - CROP + 1)
        j = rng.integers(0, small.shape[1] - CROP + 1)
        write_pgm(out / f"crop{n:02d}_{name}.pgm", small[i:i + CROP, j:j + CROP], 0.0, 1.0)
        n += 1
print(f"wrote {n} crops to {out}")
