"""Paired image/mask datasets: directory ingestion and a synthetic generator.

A dataset directory holds ``<name>.ppm`` images with matching
``<name>_mask.pgm`` masks, where mask value 255 marks the foreground.
The synthetic generator produces a solid-colored subject (ellipse or
rounded rectangle) over a noise-textured background, with an exact
binary mask, as a desk-scale stand-in for real portrait data.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ioutil import atomic_write_bytes
from .raster import NetpbmError, RasterImage, decode_image, encode_image, round_half_away


class DatasetError(ValueError):
    """Dataset directory or sample violates the pairing contract."""


@dataclass(eq=False)
class SamplePair:
    """One training sample: RGB image plus strictly binary {0, 255} mask."""

    image: RasterImage
    mask: RasterImage

    def __post_init__(self):
        if self.image.channels != 3:
            raise DatasetError(f"sample image must be RGB, got {self.image.channels} channels")
        if self.mask.channels != 1:
            raise DatasetError(f"sample mask must be single-channel, got {self.mask.channels}")
        if (self.image.width, self.image.height) != (self.mask.width, self.mask.height):
            raise DatasetError(
                f"image {self.image.width}x{self.image.height} and mask "
                f"{self.mask.width}x{self.mask.height} dimensions differ"
            )
        values = np.unique(self.mask.pixels)
        if not np.isin(values, (0, 255)).all():
            raise DatasetError(f"mask must be strictly binary 0/255, found values {values[:8]}")

    @property
    def label_map(self) -> np.ndarray:
        """(height, width) int array: 1 on foreground, 0 on background."""
        return (self.mask.pixels[:, :, 0] == 255).astype(np.int64)


def load_dataset(directory) -> list[SamplePair]:
    """Load all ``<name>.ppm`` / ``<name>_mask.pgm`` pairs, lexicographic by name.

    Mask samples are snapped to {0, 255} with threshold 128. Orphan files
    and dimension mismatches raise DatasetError naming the file.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"not a directory: {directory}")
    image_stems = {p.stem for p in directory.glob("*.ppm")}
    mask_stems = {p.name[: -len("_mask.pgm")] for p in directory.glob("*_mask.pgm")}
    for stem in sorted(mask_stems - image_stems):
        raise DatasetError(f"orphan mask without image: {stem}_mask.pgm")

    pairs = []
    for stem in sorted(image_stems):
        image_path = directory / f"{stem}.ppm"
        mask_path = directory / f"{stem}_mask.pgm"
        if not mask_path.exists():
            raise DatasetError(f"orphan image without mask: {image_path.name}")
        try:
            image = decode_image(image_path.read_bytes())
            mask = decode_image(mask_path.read_bytes())
        except NetpbmError as err:
            raise DatasetError(f"{stem}: {err}") from err
        snapped = np.where(mask.pixels >= 128, 255, 0).astype(np.uint8)
        try:
            pairs.append(SamplePair(image, RasterImage(snapped)))
        except DatasetError as err:
            raise DatasetError(f"{stem}: {err}") from err
    return pairs


def save_dataset(samples, directory) -> None:
    """Write samples as sample_NNNN.ppm / sample_NNNN_mask.pgm pairs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(max(len(samples) - 1, 0))))
    for i, sample in enumerate(samples):
        stem = f"sample_{i:0{width}d}"
        atomic_write_bytes(directory / f"{stem}.ppm", encode_image(sample.image))
        atomic_write_bytes(directory / f"{stem}_mask.pgm", encode_image(sample.mask))


def _ellipse_mask(size: int, rng: np.random.Generator) -> np.ndarray:
    cy, cx = rng.uniform(0.35 * size, 0.65 * size, size=2)
    ry, rx = rng.uniform(0.18 * size, 0.42 * size, size=2)
    ys = np.arange(size)[:, None]
    xs = np.arange(size)[None, :]
    return ((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2 <= 1.0


def _rounded_rect_mask(size: int, rng: np.random.Generator) -> np.ndarray:
    cy, cx = rng.uniform(0.35 * size, 0.65 * size, size=2)
    hh, hw = rng.uniform(0.18 * size, 0.40 * size, size=2)
    corner = rng.uniform(0.2, 0.8) * min(hh, hw)
    ys = np.arange(size)[:, None]
    xs = np.arange(size)[None, :]
    dy = np.maximum(np.abs(ys - cy) - (hh - corner), 0.0)
    dx = np.maximum(np.abs(xs - cx) - (hw - corner), 0.0)
    return dy * dy + dx * dx <= corner * corner


def _contrasting_colors(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    background = rng.integers(0, 256, size=3)
    while True:
        subject = rng.integers(0, 256, size=3)
        if np.abs(subject - background).sum() >= 200:
            return background, subject


def generate_synthetic_dataset(n: int, size: int, seed: int) -> list[SamplePair]:
    """n samples of one solid subject over a noisy background, deterministic per seed.

    Subject coverage lands in 15-55% of pixels (rejection-sampled), so every
    mask is binary and non-empty.
    """
    if size < 16:
        raise ValueError(f"size must be >= 16, got {size}")
    rng = np.random.default_rng(seed)
    samples = []
    for _ in range(n):
        background_color, subject_color = _contrasting_colors(rng)
        for _attempt in range(100):
            shape_fn = _ellipse_mask if rng.random() < 0.5 else _rounded_rect_mask
            subject = shape_fn(size, rng)
            coverage = subject.mean()
            if 0.15 <= coverage <= 0.55:
                break
        else:
            raise RuntimeError("could not sample a subject with 15-55% coverage")

        noise_bg = rng.uniform(-45.0, 45.0, size=(size, size, 3))
        noise_fg = rng.uniform(-6.0, 6.0, size=(size, size, 3))
        pixels = np.where(
            subject[:, :, None],
            subject_color[None, None, :] + noise_fg,
            background_color[None, None, :] + noise_bg,
        )
        image = RasterImage(np.clip(round_half_away(pixels), 0, 255).astype(np.uint8))
        mask = RasterImage(np.where(subject, 255, 0).astype(np.uint8)[:, :, None])
        samples.append(SamplePair(image, mask))
    return samples
