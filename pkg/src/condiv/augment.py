"""Stochastic two-view augmentation for ``C x H x W`` images in [0, 1].

Stages run in a fixed order: crop, hflip, rotation, jitter, grayscale,
blur, noise.  Rotation and noise are off in both image presets; noise is
the only stage of the ``vector`` preset used for flat feature data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

STAGES = ("crop", "hflip", "rotation", "jitter", "grayscale", "blur", "noise")
SPATIAL_STAGES = ("crop", "hflip", "rotation", "blur")
LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class Crop:
    enabled: bool = True
    area_range: tuple[float, float] = (0.2, 1.0)
    aspect_range: tuple[float, float] = (3 / 4, 4 / 3)


@dataclass(frozen=True)
class Flip:
    enabled: bool = True
    prob: float = 0.5


@dataclass(frozen=True)
class Jitter:
    enabled: bool = True
    prob: float = 0.8
    strengths: tuple[float, float, float, float] = (0.4, 0.4, 0.4, 0.1)


@dataclass(frozen=True)
class Grayscale:
    enabled: bool = True
    prob: float = 0.2


@dataclass(frozen=True)
class Blur:
    enabled: bool = False
    prob: float = 0.5
    sigma_range: tuple[float, float] = (0.1, 2.0)


@dataclass(frozen=True)
class Rotation:
    enabled: bool = False
    prob: float = 0.5
    max_degrees: float = 10.0


@dataclass(frozen=True)
class Noise:
    enabled: bool = False
    prob: float = 1.0
    std: float = 0.05


@dataclass(frozen=True)
class AugmentSpec:
    crop: Crop = field(default_factory=Crop)
    hflip: Flip = field(default_factory=Flip)
    rotation: Rotation = field(default_factory=Rotation)
    jitter: Jitter = field(default_factory=Jitter)
    grayscale: Grayscale = field(default_factory=Grayscale)
    blur: Blur = field(default_factory=Blur)
    noise: Noise = field(default_factory=Noise)

    def __post_init__(self):
        for name in STAGES:
            stage = getattr(self, name)
            p = getattr(stage, "prob", 1.0)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name}.prob must lie in [0, 1], got {p}")
        lo, hi = self.crop.area_range
        if not 0.0 < lo <= hi <= 1.0:
            raise ValueError(f"crop.area_range must satisfy 0 < lo <= hi <= 1, got {self.crop.area_range}")
        lo, hi = self.crop.aspect_range
        if not 0.0 < lo <= hi:
            raise ValueError(f"crop.aspect_range must satisfy 0 < lo <= hi, got {self.crop.aspect_range}")
        lo, hi = self.blur.sigma_range
        if not 0.0 < lo <= hi:
            raise ValueError(f"blur.sigma_range must satisfy 0 < lo <= hi, got {self.blur.sigma_range}")
        if min(self.jitter.strengths) < 0:
            raise ValueError("jitter strengths must be nonnegative")

    def enabled_stages(self) -> list[str]:
        return [s for s in STAGES if getattr(self, s).enabled]


def preset(name: str) -> AugmentSpec:
    if name == "small":
        return AugmentSpec()
    if name == "imagenet":
        return AugmentSpec(crop=Crop(area_range=(0.08, 1.0)),
                           jitter=Jitter(strengths=(0.8, 0.8, 0.8, 0.2)),
                           blur=Blur(enabled=True, prob=0.5, sigma_range=(0.1, 2.0)))
    if name == "vector":
        return drop_all(AugmentSpec(noise=Noise(enabled=True)))
    if name == "none":
        return drop_all(AugmentSpec())
    raise ValueError(f"unknown augmentation preset {name!r}")


def drop_stage(spec: AugmentSpec, stage: str) -> AugmentSpec:
    if stage not in STAGES:
        raise ValueError(f"unknown augmentation stage {stage!r}; choose from {STAGES}")
    return replace(spec, **{stage: replace(getattr(spec, stage), enabled=False)})


def drop_all(spec: AugmentSpec, keep: tuple[str, ...] = ("noise",)) -> AugmentSpec:
    for s in STAGES:
        if s not in keep:
            spec = drop_stage(spec, s)
    return spec


# resampling

def _bilinear_matrix(n_in: int, n_out: int, start: float = 0.0, length: float | None = None) -> np.ndarray:
    """Row-stochastic ``n_out x n_in`` interpolation weights with half-pixel centers.

    Output pixel ``k`` samples source coordinate
    ``start + (k + 0.5) * length / n_out - 0.5``, clamped to the valid range.
    """
    length = n_in if length is None else length
    src = start + (np.arange(n_out) + 0.5) * (length / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    m = np.zeros((n_out, n_in))
    m[np.arange(n_out), lo] += 1.0 - frac
    m[np.arange(n_out), hi] += frac
    return m


def resize(x: np.ndarray, out_h: int, out_w: int, box: tuple[float, float, float, float] | None = None) -> np.ndarray:
    """Bilinear resize of ``x`` (or the sub-box ``top, left, h, w``) to ``out_h x out_w``."""
    _, h, w = x.shape
    top, left, bh, bw = box if box is not None else (0.0, 0.0, h, w)
    rh = _bilinear_matrix(h, out_h, top, bh)
    rw = _bilinear_matrix(w, out_w, left, bw)
    return np.einsum("ih,chw,jw->cij", rh, x, rw)


def eval_transform(x: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Resize so the shorter side equals ``min(out_hw)`` then center-crop to ``out_hw``."""
    x = np.asarray(x, dtype=np.float64)
    _, h, w = x.shape
    oh, ow = out_hw
    target = min(oh, ow)
    if min(h, w) != target:
        scale = target / min(h, w)
        nh, nw = (target, int(round(w * scale))) if h <= w else (int(round(h * scale)), target)
        x = resize(x, nh, nw)
    _, h, w = x.shape
    if oh > h or ow > w:
        raise ValueError(f"cannot center-crop {out_hw} from resized image {(h, w)}")
    top, left = (h - oh) // 2, (w - ow) // 2
    return x[:, top:top + oh, left:left + ow].copy()


# colour helpers

def to_grayscale(x: np.ndarray) -> np.ndarray:
    if x.shape[0] == 1:
        return x.copy()
    g = np.tensordot(LUMA, x, axes=(0, 0))
    return np.repeat(g[None], x.shape[0], axis=0)


def _rgb_to_hsv(x: np.ndarray) -> np.ndarray:
    r, g, b = x
    mx, mn = x.max(axis=0), x.min(axis=0)
    delta = mx - mn
    safe = np.where(delta > 0, delta, 1.0)
    h = np.where(mx == r, ((g - b) / safe) % 6.0,
                 np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0)) / 6.0
    h = np.where(delta > 0, h, 0.0)
    s = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    return np.stack([h, s, mx])


def _hsv_to_rgb(x: np.ndarray) -> np.ndarray:
    h, s, v = x
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    i = i.astype(int) % 6
    choices = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)]
    out = np.zeros_like(x)
    for k, (r, g, b) in enumerate(choices):
        sel = i == k
        out[0][sel], out[1][sel], out[2][sel] = r[sel], g[sel], b[sel]
    return out


def _jitter(x: np.ndarray, cfg: Jitter, rng: np.random.Generator) -> np.ndarray:
    strengths = dict(zip(("brightness", "contrast", "saturation", "hue"), cfg.strengths))
    for op in rng.permutation(list(strengths)):
        s = strengths[op]
        if s == 0:
            continue
        if op == "hue":
            u = rng.uniform(-s, s)
            if x.shape[0] == 3:
                hsv = _rgb_to_hsv(x)
                hsv[0] = (hsv[0] + u) % 1.0
                x = _hsv_to_rgb(hsv)
            continue
        u = rng.uniform(max(0.0, 1 - s), 1 + s)
        if op == "brightness":
            x = x * u
        elif op == "contrast":
            x = u * x + (1 - u) * to_grayscale(x).mean()
        elif x.shape[0] == 3:
            x = u * x + (1 - u) * to_grayscale(x)
        x = np.clip(x, 0.0, 1.0)
    return np.clip(x, 0.0, 1.0)


def _gaussian_blur(x: np.ndarray, sigma: float) -> np.ndarray:
    _, h, w = x.shape
    size = max(3, int(round(0.1 * min(h, w))) | 1)
    radius = min(size // 2, max(1, math.ceil(2 * sigma)))
    t = np.arange(-radius, radius + 1)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    k /= k.sum()
    pad = np.pad(x, ((0, 0), (radius, radius), (radius, radius)), mode="reflect")
    rows = sum(k[i] * pad[:, i:i + h, :] for i in range(k.size))
    return sum(k[i] * rows[:, :, i:i + w] for i in range(k.size))


def _rotate(x: np.ndarray, degrees: float) -> np.ndarray:
    _, h, w = x.shape
    th = math.radians(degrees)
    yy, xx = np.meshgrid(np.arange(h) - (h - 1) / 2, np.arange(w) - (w - 1) / 2, indexing="ij")
    sy = math.cos(th) * yy - math.sin(th) * xx + (h - 1) / 2
    sx = math.sin(th) * yy + math.cos(th) * xx + (w - 1) / 2
    sy, sx = np.clip(sy, 0, h - 1), np.clip(sx, 0, w - 1)
    y0, x0 = np.floor(sy).astype(int), np.floor(sx).astype(int)
    y1, x1 = np.minimum(y0 + 1, h - 1), np.minimum(x0 + 1, w - 1)
    fy, fx = sy - y0, sx - x0
    return ((1 - fy) * (1 - fx) * x[:, y0, x0] + (1 - fy) * fx * x[:, y0, x1]
            + fy * (1 - fx) * x[:, y1, x0] + fy * fx * x[:, y1, x1])


def _crop_box(h: int, w: int, cfg: Crop, rng: np.random.Generator) -> tuple[int, int, int, int]:
    area = h * w
    log_lo, log_hi = math.log(cfg.aspect_range[0]), math.log(cfg.aspect_range[1])
    for _ in range(10):
        target = area * rng.uniform(*cfg.area_range)
        ratio = math.exp(rng.uniform(log_lo, log_hi))
        cw = int(round(math.sqrt(target * ratio)))
        ch = int(round(math.sqrt(target / ratio)))
        if 0 < cw <= w and 0 < ch <= h:
            top = int(rng.integers(0, h - ch + 1))
            left = int(rng.integers(0, w - cw + 1))
            return top, left, ch, cw
    # fall back to a centered crop clamped to the allowed aspect ratios
    ratio = w / h
    if ratio < cfg.aspect_range[0]:
        cw, ch = w, int(round(w / cfg.aspect_range[0]))
    elif ratio > cfg.aspect_range[1]:
        ch, cw = h, int(round(h * cfg.aspect_range[1]))
    else:
        ch, cw = h, w
    return (h - ch) // 2, (w - cw) // 2, ch, cw


def augment(x: np.ndarray, spec: AugmentSpec, rng: np.random.Generator) -> np.ndarray:
    """One random draw of the augmentation chain."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] not in (1, 3):
        raise ValueError(f"expected a C x H x W image with C in (1, 3), got shape {x.shape}")
    _, h, w = x.shape
    if (h < 2 or w < 2) and any(getattr(spec, s).enabled for s in SPATIAL_STAGES):
        raise ValueError(f"spatial augmentation needs H, W >= 2, got {(h, w)}")
    if spec.crop.enabled:
        box = _crop_box(h, w, spec.crop, rng)
        x = resize(x, h, w, box)
    if spec.hflip.enabled and rng.uniform() < spec.hflip.prob:
        x = x[:, :, ::-1]
    if spec.rotation.enabled and rng.uniform() < spec.rotation.prob:
        x = _rotate(x, rng.uniform(-spec.rotation.max_degrees, spec.rotation.max_degrees))
    if spec.jitter.enabled and rng.uniform() < spec.jitter.prob:
        x = _jitter(x, spec.jitter, rng)
    if spec.grayscale.enabled and rng.uniform() < spec.grayscale.prob:
        x = to_grayscale(x)
    if spec.blur.enabled and rng.uniform() < spec.blur.prob:
        x = _gaussian_blur(x, rng.uniform(*spec.blur.sigma_range))
    if spec.noise.enabled and rng.uniform() < spec.noise.prob:
        x = x + rng.normal(0.0, spec.noise.std, x.shape)
    return np.clip(x, 0.0, 1.0)


def two_views(x: np.ndarray, spec: AugmentSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    return augment(x, spec, rng), augment(x, spec, rng)


def augment_batch(images: np.ndarray, spec: AugmentSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Two independent views of every image in an ``n x C x H x W`` batch."""
    if not spec.enabled_stages():
        x = np.asarray(images, dtype=np.float64)
        return x.copy(), x.copy()
    if spec.enabled_stages() == ["noise"]:
        # flat feature data: vectorized over the batch
        x = np.asarray(images, dtype=np.float64)
        views = []
        for _ in range(2):
            keep = rng.uniform(size=(x.shape[0],) + (1,) * (x.ndim - 1)) < spec.noise.prob
            views.append(np.clip(x + keep * rng.normal(0.0, spec.noise.std, x.shape), 0.0, 1.0))
        return views[0], views[1]
    pairs = [two_views(img, spec, rng) for img in images]
    return np.stack([a for a, _ in pairs]), np.stack([b for _, b in pairs])
