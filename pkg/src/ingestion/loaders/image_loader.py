"""
PGM image loader for tvflow.
Uses Pillow to decode 8-bit grayscale PGM (P2 or P5) images.
"""

from pathlib import Path
from typing import List

import numpy as np
from loguru import logger
from PIL import Image, UnidentifiedImageError

from src.core.errors import UnsupportedImageFormat

from .base_loader import BaseLoader


class PGMImageLoader(BaseLoader):
    """Loader for 8-bit grayscale PGM images."""

    def get_supported_extensions(self) -> List[str]:
        return [".pgm", ".PGM"]

    def load(self) -> np.ndarray:
        """Load the image as a float array of shape (rows, cols) scaled to [0, 1].

        Raises:
            UnsupportedImageFormat: If the file is not an 8-bit grayscale PGM.
        """
        try:
            with Image.open(self.file_path) as image:
                image.load()
                if image.format != "PPM" or image.mode != "L":
                    raise UnsupportedImageFormat(
                        f"{self.file_path.name}: expected 8-bit grayscale PGM, got {image.format} mode {image.mode}"
                    )
                pixels = np.asarray(image, dtype=float) / 255.0
        except (UnidentifiedImageError, OSError) as e:
            raise UnsupportedImageFormat(f"{self.file_path.name}: {e}") from e

        logger.info(f"Loaded {self.file_path.name}: {pixels.shape[0]}x{pixels.shape[1]} pixels")
        return pixels


def load_pgm(path: Path) -> np.ndarray:
    return PGMImageLoader(path).load()
