"""Dataset ingestion: IDX image files and small synthetic datasets.

All loaders return float64 arrays with values in ``[-1, 1]``; image sets have
shape ``(n, 1, h, w)``, the 2-D mixture has shape ``(n, 2)``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, FormatError

IDX_IMAGE_MAGIC = 0x00000803


def load_idx(path, image_size=None):
    """Read an IDX3 unsigned-byte image file (the MNIST container).

    Layout: big-endian uint32 magic ``0x00000803``, then count, rows and
    columns as big-endian uint32, then ``count * rows * cols`` pixel bytes.
    Pixels are mapped linearly from ``[0, 255]`` to ``[-1, 1]``.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise FormatError("truncated IDX header", offset=len(raw))
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGE_MAGIC:
        raise FormatError(f"bad IDX magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}", offset=0)
    expected = 16 + count * rows * cols
    if len(raw) < expected:
        raise FormatError(f"truncated IDX pixel data: need {expected} bytes, have {len(raw)}",
                          offset=len(raw))
    pixels = np.frombuffer(raw, dtype=np.uint8, count=count * rows * cols, offset=16)
    images = pixels.reshape(count, 1, rows, cols).astype(np.float64) / 127.5 - 1.0
    if image_size and image_size != rows:
        images = downsample(images, image_size)
    return images


def downsample(images, size):
    """Area-average ``(n, c, h, w)`` images down to ``size x size``."""
    n, c, h, w = images.shape
    if h % size or w % size:
        raise ConfigurationError(f"cannot area-average {h}x{w} to {size}x{size}")
    fh, fw = h // size, w // size
    return images.reshape(n, c, size, fh, size, fw).mean(axis=(3, 5))


def write_idx(path, images):
    """Write uint8 images ``(n, h, w)`` or ``(n, 1, h, w)`` as an IDX3 file."""
    images = np.asarray(images, dtype=np.uint8)
    if images.ndim == 4:
        images = images[:, 0]
    n, h, w = images.shape
    Path(path).write_bytes(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, h, w) + images.tobytes())


def _glyphs():
    glyphs = []
    for t in (1, 2):
        for length in (4, 6):
            g = np.ones((t, length), dtype=bool)
            glyphs.append(g)          # horizontal bar
            glyphs.append(g.T.copy())  # vertical bar
    for size in (3, 5):
        g = np.zeros((size, size), dtype=bool)
        g[size // 2, :] = True
        g[:, size // 2] = True
        glyphs.append(g)  # cross
    for size in (4, 6):
        g = np.zeros((size, size), dtype=bool)
        g[0, :] = g[-1, :] = g[:, 0] = g[:, -1] = True
        glyphs.append(g)  # box
    return glyphs


GLYPHS = _glyphs()


def synthetic_shapes(n_samples, rng, size=8):
    """Binary 8x8 glyphs (bars, crosses, boxes) at random positions, pixels in {-1, +1}."""
    out = -np.ones((n_samples, 1, size, size))
    choice = rng.integers(len(GLYPHS), size=n_samples)
    for i, gi in enumerate(choice):
        g = GLYPHS[gi]
        r = rng.integers(size - g.shape[0] + 1)
        c = rng.integers(size - g.shape[1] + 1)
        out[i, 0, r:r + g.shape[0], c:c + g.shape[1]][g] = 1.0
    return out


def gaussian_mixture_2d(n_samples, rng, components=8, radius=0.8, std=0.05):
    """Isotropic 2-D Gaussians centred evenly on a circle, clipped to ``[-1, 1]``."""
    angles = 2 * np.pi * np.arange(components) / components
    centres = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    which = rng.integers(components, size=n_samples)
    points = centres[which] + std * rng.standard_normal((n_samples, 2))
    return np.clip(points, -1.0, 1.0)


def synth_dataset(config, rng):
    if config.dataset == "synthetic-shapes-8x8":
        return synthetic_shapes(config.dataset_samples, rng)
    if config.dataset == "gaussian-mixture-2d":
        return gaussian_mixture_2d(config.dataset_samples, rng, config.mixture_components,
                                   config.mixture_radius, config.mixture_std)
    raise ConfigurationError(f"{config.dataset} is not a synthetic dataset")


def load_dataset(config):
    """Dataset described by ``config``; synthetic sets are seeded by ``config.seed``."""
    if config.dataset == "idx-images":
        if not config.dataset_path:
            raise ConfigurationError("idx-images dataset needs dataset_path")
        images = load_idx(config.dataset_path, config.image_size or None)
        if config.dataset_samples and config.dataset_samples < len(images):
            images = images[:config.dataset_samples]
        return images
    return synth_dataset(config, np.random.default_rng([config.seed, 1]))
