"""Input perturbations: weak/strong image pipelines, green-channel color
normalization, and Gaussian vector noise for the synthetic feature datasets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateImageError, ShapeError

WEAK = "weak"
STRONG = "strong"
VECTOR = "vector"

# luminance weights (Rec. 601), used by saturation/contrast jitter
_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class RgbImage:
    """Three float planes (R, G, B) of shape (3, height, width), values in [0, 1]."""

    planes: np.ndarray

    def __post_init__(self):
        self.planes = np.asarray(self.planes, dtype=np.float64)
        if self.planes.ndim != 3 or self.planes.shape[0] != 3:
            raise ShapeError(f"RgbImage planes must have shape (3, h, w), got {self.planes.shape}")

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]


@dataclass
class PerturbSpec:
    mode: str = VECTOR
    noise_sigma: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.mode not in (WEAK, STRONG, VECTOR):
            raise ConfigError(f"unknown perturbation mode {self.mode!r}")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


def _rng_for(spec: PerturbSpec, rng) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng(spec.rng_seed)


def _clamp(planes: np.ndarray) -> np.ndarray:
    return np.clip(planes, 0.0, 1.0)


def color_normalize(img: RgbImage) -> RgbImage:
    """Rescale the red and blue planes so their means match the green mean."""
    r, g, b = img.planes
    r_mean, g_mean, b_mean = r.mean(), g.mean(), b.mean()
    if r_mean <= 0.0 or b_mean <= 0.0:
        raise DegenerateImageError("color_normalize needs positive red and blue means")
    scaled = np.stack([r * (g_mean / r_mean), g, b * (g_mean / b_mean)])
    return RgbImage(_clamp(scaled))


def _affine_sample(planes: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Bilinear sampling of each plane at source coords matrix @ (x, y, 1),
    measured from the image center; out-of-bounds reads are zero."""
    _, h, w = planes.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    dx, dy = xs - cx, ys - cy
    sx = matrix[0, 0] * dx + matrix[0, 1] * dy + matrix[0, 2] + cx
    sy = matrix[1, 0] * dx + matrix[1, 1] * dy + matrix[1, 2] + cy
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx, fy = sx - x0, sy - y0
    out = np.zeros_like(planes)
    for (iy, ix), weight in (
        ((y0, x0), (1 - fy) * (1 - fx)),
        ((y0, x0 + 1), (1 - fy) * fx),
        ((y0 + 1, x0), fy * (1 - fx)),
        ((y0 + 1, x0 + 1), fy * fx),
    ):
        valid = (iy >= 0) & (iy < h) & (ix >= 0) & (ix < w)
        iyc = np.where(valid, iy, 0)
        ixc = np.where(valid, ix, 0)
        for p in range(planes.shape[0]):
            out[p] += np.where(valid, planes[p][iyc, ixc], 0.0) * weight
    return out


def _rotate(planes: np.ndarray, angle_deg: float) -> np.ndarray:
    t = np.deg2rad(angle_deg)
    c, s = np.cos(t), np.sin(t)
    inverse = np.array([[c, s, 0.0], [-s, c, 0.0]])
    return _affine_sample(planes, inverse)


def _erase(planes: np.ndarray, rng: np.random.Generator,
           max_fraction: float) -> np.ndarray:
    """Overwrite one rectangle with uniform random pixels. The realized area
    fraction is kept inside [0.02, max_fraction]; degenerate images where no
    such rectangle fits are returned unchanged."""
    _, h, w = planes.shape
    area = h * w
    lo = 0.02
    for _ in range(100):
        fraction = rng.uniform(lo, max_fraction)
        aspect = np.exp(rng.uniform(np.log(0.3), np.log(1.0 / 0.3)))
        eh = int(round(np.sqrt(fraction * area * aspect)))
        ew = int(round(np.sqrt(fraction * area / aspect)))
        if 1 <= eh <= h and 1 <= ew <= w and lo * area <= eh * ew <= max_fraction * area:
            top = int(rng.integers(0, h - eh + 1))
            left = int(rng.integers(0, w - ew + 1))
            out = planes.copy()
            out[:, top:top + eh, left:left + ew] = rng.uniform(0.0, 1.0, size=(3, eh, ew))
            return out
    return planes


def _jitter(planes: np.ndarray, rng: np.random.Generator,
            lo: float, hi: float) -> np.ndarray:
    out = planes
    # brightness: scale all channels
    out = _clamp(out * rng.uniform(lo, hi))
    # saturation: interpolate toward per-pixel luminance
    luma = np.tensordot(_LUMA, out, axes=1)
    f = rng.uniform(lo, hi)
    out = _clamp(f * out + (1.0 - f) * luma[None, :, :])
    # contrast: interpolate toward the mean luminance
    mean_luma = np.tensordot(_LUMA, out, axes=1).mean()
    f = rng.uniform(lo, hi)
    out = _clamp(f * out + (1.0 - f) * mean_luma)
    return out


def weak_augment(img: RgbImage, spec: PerturbSpec, rng=None) -> RgbImage:
    """Flip (p=0.5), rotate by U[0, 180] degrees, erase 2-33% of the area,
    then jitter brightness/saturation/contrast by U[0.9, 1.1] factors."""
    if spec.mode != WEAK:
        raise ConfigError(f"weak_augment requires mode={WEAK!r}, got {spec.mode!r}")
    rng = _rng_for(spec, rng)
    planes = img.planes
    if rng.uniform() < 0.5:
        planes = planes[:, :, ::-1]
    planes = _clamp(_rotate(planes, rng.uniform(0.0, 180.0)))
    planes = _erase(planes, rng, max_fraction=0.33)
    planes = _jitter(planes, rng, 0.9, 1.1)
    return RgbImage(planes)


def strong_augment(img: RgbImage, spec: PerturbSpec, rng=None) -> RgbImage:
    """The weak pipeline with widened ranges (erase up to 50%, jitter factors
    U[0.6, 1.4]) plus one extra shear or translation of up to 20%."""
    if spec.mode != STRONG:
        raise ConfigError(f"strong_augment requires mode={STRONG!r}, got {spec.mode!r}")
    rng = _rng_for(spec, rng)
    planes = img.planes
    if rng.uniform() < 0.5:
        planes = planes[:, :, ::-1]
    planes = _clamp(_rotate(planes, rng.uniform(0.0, 180.0)))
    planes = _erase(planes, rng, max_fraction=0.5)
    planes = _jitter(planes, rng, 0.6, 1.4)
    if rng.uniform() < 0.5:
        shear = rng.uniform(-0.2, 0.2)
        matrix = np.array([[1.0, shear, 0.0], [0.0, 1.0, 0.0]])
    else:
        tx = rng.uniform(-0.2, 0.2) * img.width
        ty = rng.uniform(-0.2, 0.2) * img.height
        matrix = np.array([[1.0, 0.0, tx], [0.0, 1.0, ty]])
    planes = _clamp(_affine_sample(planes, matrix))
    return RgbImage(planes)


def perturb_vector(x: np.ndarray, spec: PerturbSpec, rng=None) -> np.ndarray:
    """Additive isotropic Gaussian noise; sigma 0 is the identity."""
    if spec.mode != VECTOR:
        raise ConfigError(f"perturb_vector requires mode={VECTOR!r}, got {spec.mode!r}")
    x = np.asarray(x, dtype=np.float64)
    if spec.noise_sigma == 0.0:
        return x.copy()
    rng = _rng_for(spec, rng)
    return x + rng.normal(0.0, spec.noise_sigma, size=x.shape)


def augment_image(img: RgbImage, spec: PerturbSpec, rng=None) -> RgbImage:
    if spec.mode == WEAK:
        return weak_augment(img, spec, rng)
    if spec.mode == STRONG:
        return strong_augment(img, spec, rng)
    raise ConfigError(f"augment_image requires an image mode, got {spec.mode!r}")


# -- PPM (P6) fixtures --------------------------------------------------------


def write_ppm(img: RgbImage, path) -> None:
    """Binary 8-bit P6 with maxval 255."""
    h, w = img.height, img.width
    pixels = np.clip(np.rint(img.planes * 255.0), 0, 255).astype(np.uint8)
    interleaved = np.transpose(pixels, (1, 2, 0)).tobytes()
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(interleaved)


def read_ppm(path) -> RgbImage:
    with open(path, "rb") as fh:
        data = fh.read()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4 and pos < len(data):
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":  # comment until end of line
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if len(tokens) != 4 or tokens[0] != b"P6":
        raise ConfigError(f"{path}: not a binary P6 PPM file")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ConfigError(f"{path}: only maxval 255 is supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    raw = np.frombuffer(data, dtype=np.uint8, count=width * height * 3, offset=pos)
    planes = np.transpose(raw.reshape(height, width, 3), (2, 0, 1)).astype(np.float64) / 255.0
    return RgbImage(planes)
