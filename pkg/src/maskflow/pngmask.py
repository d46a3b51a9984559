"""Binary mask PNG round trip: 255 = foreground, 0 = background.

Foreground is written as 255 so exported masks are visually inspectable;
readers accept any nonzero pixel as foreground.
"""

from pathlib import Path

import numpy as np
from PIL import Image


def save_mask_png(path: str | Path, mask: np.ndarray) -> Path:
    path = Path(path)
    Image.fromarray(np.asarray(mask, dtype=bool).astype(np.uint8) * 255, mode="L").save(path)
    return path


def load_mask_png(path: str | Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("L")) != 0
