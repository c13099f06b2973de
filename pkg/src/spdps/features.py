"""Per-pixel feature fields and region covariance descriptors.

An image becomes a set of SPD matrices in three steps: build a stack of
per-pixel feature planes (intensity, derivative magnitudes, Gabor
magnitudes, coordinates, colour), take the sample covariance of the
feature vectors over a rectangular region, and floor the result to
strict positive definiteness.  Four channel layouts are supported,
named by their descriptor dimension.

Pixel (x, y) means column x, row y; arrays are indexed [y, x].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .spd_core import SpdMatrix, regularize

DESCRIPTOR_DIMS = {"texture5": 5, "virus25": 25, "face43": 43, "color11": 11}

# Protocol raster sizes per descriptor kind; None keeps the input size.
PROTOCOL_SIZES = {
    "texture5": (256, 256),
    "virus25": None,
    "face43": (64, 64),
    "color11": (64, 32),
}

GABOR_SIGMA_RATIO = 0.56
GABOR_ASPECT = 0.5
GABOR_TRUNCATE = 1.5


@dataclass(frozen=True)
class FeatureField:
    """Stack of per-pixel feature planes, one channel per descriptor entry."""

    height: int
    width: int
    channels: np.ndarray
    descriptor_kind: str

    def __post_init__(self) -> None:
        channels = np.asarray(self.channels, dtype=np.float64)
        if channels.ndim != 3 or channels.shape[1:] != (self.height, self.width):
            raise ValueError("channels must be stacked planes of the stated size")
        if not np.all(np.isfinite(channels)):
            raise ValueError("feature planes must be finite")
        if self.descriptor_kind not in DESCRIPTOR_DIMS:
            raise ValueError(f"unknown descriptor kind {self.descriptor_kind!r}")
        if channels.shape[0] != DESCRIPTOR_DIMS[self.descriptor_kind]:
            raise ValueError(
                f"{self.descriptor_kind} needs {DESCRIPTOR_DIMS[self.descriptor_kind]} "
                f"channels, got {channels.shape[0]}"
            )
        channels.setflags(write=False)
        object.__setattr__(self, "channels", channels)

    @property
    def dim(self) -> int:
        return self.channels.shape[0]


def load_image(path) -> np.ndarray:
    """Read an 8-bit image file as float64 in [0, 1].

    Returns a (h, w) plane for grayscale inputs and (h, w, 3) for
    colour; palette or alpha images are flattened to RGB.
    """
    from PIL import Image

    try:
        with Image.open(path) as img:
            if img.mode != "L":
                img = img.convert("RGB")
            data = np.asarray(img, dtype=np.float64)
    except OSError as exc:
        raise ValueError(f"cannot read image {path}: {exc}") from exc
    return data / 255.0


def rec601_luma(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("expected an (h, w, 3) colour image")
    return rgb @ np.array([0.299, 0.587, 0.114])


def _overlap_weights(src: int, dst: int) -> np.ndarray:
    # Row i holds the fraction of each source cell covered by output cell i.
    ratio = src / dst
    weights = np.zeros((dst, src))
    for i in range(dst):
        lo, hi = i * ratio, (i + 1) * ratio
        for j in range(int(np.floor(lo)), min(int(np.ceil(hi)), src)):
            weights[i, j] = min(hi, j + 1.0) - max(lo, float(j))
        weights[i] /= ratio
    return weights


def area_resample(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Resample a plane (or h x w x c stack) by exact area averaging."""
    image = np.asarray(image, dtype=np.float64)
    if height < 1 or width < 1:
        raise ValueError("target size must be positive")
    rows = _overlap_weights(image.shape[0], height)
    cols = _overlap_weights(image.shape[1], width)
    if image.ndim == 2:
        return rows @ image @ cols.T
    if image.ndim == 3:
        return np.einsum("ij,jkc,lk->ilc", rows, image, cols)
    raise ValueError("expected a 2-d or 3-d image array")


def _as_plane(image) -> np.ndarray:
    plane = np.asarray(image, dtype=np.float64)
    if plane.ndim == 3:
        plane = rec601_luma(plane)
    if plane.ndim != 2:
        raise ValueError("expected a single image plane")
    if not np.all(np.isfinite(plane)):
        raise ValueError("image must be finite")
    return plane


def gradients(image) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Absolute first and second central differences along x and y.

    Borders are replicated before differencing, so border responses are
    damped rather than extrapolated.
    """
    plane = _as_plane(image)
    if plane.shape[0] < 3 or plane.shape[1] < 3:
        raise ValueError("image must be at least 3 x 3")
    p = np.pad(plane, 1, mode="edge")
    ix = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    iy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    ixx = p[1:-1, 2:] - 2.0 * p[1:-1, 1:-1] + p[1:-1, :-2]
    iyy = p[2:, 1:-1] - 2.0 * p[1:-1, 1:-1] + p[:-2, 1:-1]
    return np.abs(ix), np.abs(iy), np.abs(ixx), np.abs(iyy)


def gabor_kernel(
    wavelength: float,
    theta: float,
    sigma_ratio: float = GABOR_SIGMA_RATIO,
    aspect: float = GABOR_ASPECT,
    truncate: float = GABOR_TRUNCATE,
) -> np.ndarray:
    """Complex Gabor kernel, DC-corrected and scaled to unit energy.

    The zero-mean correction kills the response to constant images; the
    unit L2 norm makes response magnitudes comparable across scales
    (otherwise coarse kernels outgain fine ones on any input).
    """
    if wavelength <= 0.0:
        raise ValueError("wavelength must be positive")
    sigma = sigma_ratio * wavelength
    half = int(np.ceil(truncate * sigma))
    ys, xs = np.mgrid[-half : half + 1, -half : half + 1]
    xr = xs * np.cos(theta) + ys * np.sin(theta)
    yr = -xs * np.sin(theta) + ys * np.cos(theta)
    envelope = np.exp(-(xr**2 + (aspect * yr) ** 2) / (2.0 * sigma**2))
    kernel = envelope * np.exp(2j * np.pi * xr / wavelength)
    kernel -= kernel.mean()
    return kernel / np.linalg.norm(kernel)


def default_wavelengths(scales: int) -> np.ndarray:
    return np.geomspace(4.0, 32.0, scales)


def gabor_bank(
    image,
    scales: int = 5,
    orientations: int = 8,
    wavelengths=None,
    sigma_ratio: float = GABOR_SIGMA_RATIO,
    aspect: float = GABOR_ASPECT,
    truncate: float = GABOR_TRUNCATE,
) -> np.ndarray:
    """Convolution magnitudes for scales x orientations Gabor kernels.

    Plane order is scale-major: index v * orientations + u holds scale v
    at orientation u * pi / orientations.  Wavelengths default to a
    geometric ladder from 4 to 32 pixels.
    """
    plane = _as_plane(image)
    if scales < 1 or orientations < 1:
        raise ValueError("need at least one scale and one orientation")
    if wavelengths is None:
        wavelengths = default_wavelengths(scales)
    wavelengths = np.asarray(wavelengths, dtype=np.float64)
    if wavelengths.shape != (scales,):
        raise ValueError("need one wavelength per scale")
    out = np.empty((scales * orientations, *plane.shape))
    for v, lam in enumerate(wavelengths):
        half = int(np.ceil(truncate * sigma_ratio * lam))
        size = 2 * half + 1
        if plane.shape[0] < size or plane.shape[1] < size:
            raise ValueError(
                f"image {plane.shape} is smaller than the {size} x {size} "
                f"kernel at wavelength {lam:g}"
            )
        padded = np.pad(plane, half, mode="edge")
        for u in range(orientations):
            kernel = gabor_kernel(lam, u * np.pi / orientations, sigma_ratio, aspect, truncate)
            out[v * orientations + u] = np.abs(fftconvolve(padded, kernel, mode="valid"))
    return out


def _coordinate_planes(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    return xs, ys


def build_feature_field(image, kind: str) -> FeatureField:
    """Assemble the per-pixel channel stack for one descriptor kind."""
    if kind not in DESCRIPTOR_DIMS:
        raise ValueError(f"unknown descriptor kind {kind!r}")
    image = np.asarray(image, dtype=np.float64)
    if kind == "color11":
        if image.ndim != 3 or image.shape[2] != 3:
            raise ValueError("color11 needs an RGB image")
        height, width = image.shape[:2]
        xs, ys = _coordinate_planes(height, width)
        planes = [xs, ys] + [image[:, :, c] for c in range(3)]
        firsts, seconds = [], []
        for c in range(3):
            gx, gy, gxx, gyy = gradients(image[:, :, c])
            firsts.append(np.hypot(gx, gy))
            seconds.append(np.hypot(gxx, gyy))
        planes += firsts + seconds
        return FeatureField(height, width, np.stack(planes), kind)
    plane = _as_plane(image)
    height, width = plane.shape
    if kind == "texture5":
        planes = [plane, *gradients(plane)]
    elif kind == "virus25":
        planes = [plane, *gradients(plane), *gabor_bank(plane, scales=5, orientations=4)]
    else:
        xs, ys = _coordinate_planes(height, width)
        planes = [plane, xs, ys, *gabor_bank(plane, scales=5, orientations=8)]
    return FeatureField(height, width, np.stack(planes), kind)


def covariance_descriptor(field, region) -> SpdMatrix:
    """Unbiased covariance of the feature vectors in a rectangle, floored PD.

    The region is (row, col, height, width) in field coordinates; a raw
    (channels, h, w) stack is accepted in place of a FeatureField.
    """
    channels = np.asarray(getattr(field, "channels", field), dtype=np.float64)
    if channels.ndim != 3:
        raise ValueError("expected stacked feature planes")
    row, col, height, width = (int(v) for v in region)
    if height < 1 or width < 1 or height * width < 2:
        raise ValueError("region must contain at least 2 pixels")
    if row < 0 or col < 0 or row + height > channels.shape[1] or col + width > channels.shape[2]:
        raise ValueError("region exceeds field bounds")
    block = channels[:, row : row + height, col : col + width]
    samples = block.reshape(channels.shape[0], height * width)
    cov = np.cov(samples, ddof=1)
    return regularize(np.atleast_2d(cov))


def image_to_points(image, kind: str, tiling=None) -> list[SpdMatrix]:
    """Protocol pipeline: resample, build the field, one descriptor per tile.

    Texture images tile into an 8 x 8 grid by default; the other kinds
    produce a single whole-image descriptor.
    """
    if kind not in DESCRIPTOR_DIMS:
        raise ValueError(f"unknown descriptor kind {kind!r}")
    image = np.asarray(image, dtype=np.float64)
    target = PROTOCOL_SIZES[kind]
    if target is not None and image.shape[:2] != target:
        image = area_resample(image, *target)
    field = build_feature_field(image, kind)
    if tiling is None:
        tiling = (8, 8) if kind == "texture5" else (1, 1)
    rows, cols = (int(v) for v in tiling)
    if rows < 1 or cols < 1:
        raise ValueError("tiling must be positive")
    if field.height % rows or field.width % cols:
        raise ValueError(
            f"tiling {rows} x {cols} does not divide the {field.height} x {field.width} field"
        )
    tile_h, tile_w = field.height // rows, field.width // cols
    return [
        covariance_descriptor(field, (r * tile_h, c * tile_w, tile_h, tile_w))
        for r in range(rows)
        for c in range(cols)
    ]
