"""IR-to-RGB alignment and pixel-level fusion of the aligned pair.

The RGB frame is the reference: the IR raster is warped into it with a
homography, then blended channel-wise with a colormapped copy of itself.
"""

from __future__ import annotations

import csv
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from msfuse import jsonio
from msfuse.raster import Raster

EPS_DENOM = 1e-12
EPS_DET = 1e-12
COLLINEAR_TOL = 1e-9


class RegistrationError(ValueError):
    pass


class PointAtInfinityError(RegistrationError):
    pass


class DegenerateConfigurationError(RegistrationError):
    pass


class NoConsensusError(RegistrationError):
    pass


class CorrespondenceFormatError(ValueError):
    pass


class Homography:
    """A 3x3 projective map, normalized so that ``h[2, 2] == 1``."""

    def __init__(self, matrix):
        m = np.array(matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("homography entries must be finite")
        if abs(m[2, 2]) <= EPS_DENOM:
            raise ValueError("homography with h33 == 0 cannot be normalized")
        m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= EPS_DET:
            raise ValueError("homography is singular")
        m.setflags(write=False)
        self.matrix = m

    @classmethod
    def identity(cls) -> Homography:
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx: float, ty: float) -> Homography:
        return cls([[1, 0, tx], [0, 1, ty], [0, 0, 1]])

    def inverse(self) -> Homography:
        return Homography(np.linalg.inv(self.matrix))

    def __matmul__(self, other: Homography) -> Homography:
        return Homography(self.matrix @ other.matrix)

    def __repr__(self):
        return f"Homography({self.matrix.tolist()!r})"

    def to_dict(self) -> dict:
        return {"h": [[float(v) for v in row] for row in self.matrix]}

    @classmethod
    def from_dict(cls, doc) -> Homography:
        try:
            m = doc["h"]
        except (KeyError, TypeError):
            raise ValueError("homography JSON needs an 'h' field") from None
        return cls(m)


def apply(h: Homography, p):
    """Map point ``p = (x, y)`` through ``h``."""
    x, y = p
    m = h.matrix
    den = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    if abs(den) <= EPS_DENOM:
        raise PointAtInfinityError(f"point {p} maps to infinity")
    return (
        float((m[0, 0] * x + m[0, 1] * y + m[0, 2]) / den),
        float((m[1, 0] * x + m[1, 1] * y + m[1, 2]) / den),
    )


def apply_many(h: Homography, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    m = h.matrix
    den = m[2, 0] * pts[:, 0] + m[2, 1] * pts[:, 1] + m[2, 2]
    if np.any(np.abs(den) <= EPS_DENOM):
        raise PointAtInfinityError("a point maps to infinity")
    x = (m[0, 0] * pts[:, 0] + m[0, 1] * pts[:, 1] + m[0, 2]) / den
    y = (m[1, 0] * pts[:, 0] + m[1, 1] * pts[:, 1] + m[1, 2]) / den
    return np.stack([x, y], axis=1)


# -- estimation -------------------------------------------------------------

@dataclass(frozen=True)
class Correspondence:
    src: tuple[float, float]
    dst: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "src", (float(self.src[0]), float(self.src[1])))
        object.__setattr__(self, "dst", (float(self.dst[0]), float(self.dst[1])))
        if not np.all(np.isfinite([*self.src, *self.dst])):
            raise ValueError(f"non-finite correspondence {self}")


@dataclass(frozen=True)
class RansacParams:
    iterations: int = 1000
    inlier_threshold: float = 3.0
    seed: int = 0
    # stop early once an outlier-free sample has been drawn with this probability
    confidence: float = 0.999


def _hartley(pts: np.ndarray) -> np.ndarray:
    """Similarity taking points to zero mean and mean distance sqrt(2)."""
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    if d <= 0:
        raise DegenerateConfigurationError("all points coincide")
    s = np.sqrt(2.0) / d
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])


def _tri_area(a, b, c) -> float:
    return 0.5 * abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def _has_collinear_triple(pts) -> bool:
    return any(_tri_area(*t) <= COLLINEAR_TOL for t in itertools.combinations(pts, 3))


def _dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    ts, td = _hartley(src), _hartley(dst)
    s = src @ ts[:2, :2].T + ts[:2, 2]
    d = dst @ td[:2, :2].T + td[:2, 2]
    n = len(s)
    a = np.zeros((2 * n, 9))
    x, y, u, v = s[:, 0], s[:, 1], d[:, 0], d[:, 1]
    a[0::2, 0:3] = np.stack([-x, -y, -np.ones(n)], axis=1)
    a[0::2, 6:9] = np.stack([u * x, u * y, u], axis=1)
    a[1::2, 3:6] = np.stack([-x, -y, -np.ones(n)], axis=1)
    a[1::2, 6:9] = np.stack([v * x, v * y, v], axis=1)
    _, sv, vt = np.linalg.svd(a)
    # the 8 constraints must be independent for a unique solution
    if sv.size < 8 or sv[7] <= COLLINEAR_TOL * sv[0]:
        raise DegenerateConfigurationError("correspondences do not determine a homography")
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(td) @ hn @ ts
    if abs(h[2, 2]) <= EPS_DENOM:
        raise DegenerateConfigurationError("estimated homography has h33 == 0")
    return h / h[2, 2]


def _reprojection_error(h: np.ndarray, src, dst) -> np.ndarray:
    ph = np.c_[src, np.ones(len(src))] @ h.T
    with np.errstate(divide="ignore", invalid="ignore"):
        proj = ph[:, :2] / ph[:, 2:3]
        err = np.sqrt(((proj - dst) ** 2).sum(axis=1))
    return np.where(np.isfinite(err), err, np.inf)


def estimate_homography(corrs, robust: RansacParams | None = None) -> Homography:
    """Normalized DLT over all correspondences, or RANSAC + refit if ``robust``."""
    corrs = list(corrs)
    if len(corrs) < 4:
        raise RegistrationError(f"need at least 4 correspondences, got {len(corrs)}")
    src = np.array([c.src for c in corrs], dtype=float)
    dst = np.array([c.dst for c in corrs], dtype=float)
    if len(corrs) == 4 and _has_collinear_triple(src):
        raise DegenerateConfigurationError("three of the four source points are collinear")
    if robust is None:
        return _finish(_dlt(src, dst))
    return _finish(_ransac(src, dst, robust))


def _finish(h: np.ndarray) -> Homography:
    try:
        return Homography(h)
    except ValueError as e:
        raise DegenerateConfigurationError(str(e)) from None


def _ransac_trials(inlier_ratio: float, confidence: float) -> float:
    p_clean = inlier_ratio**4
    if p_clean >= 1.0:
        return 0
    if p_clean <= 0.0 or confidence >= 1.0:
        return float("inf")
    return np.log(1.0 - confidence) / np.log(1.0 - p_clean)


def _ransac(src, dst, params: RansacParams) -> np.ndarray:
    rng = np.random.default_rng(params.seed)
    n = len(src)
    best_inliers = None
    needed = params.iterations
    k = 0
    while k < min(needed, params.iterations):
        k += 1
        idx = rng.choice(n, 4, replace=False)
        if _has_collinear_triple(src[idx]) or _has_collinear_triple(dst[idx]):
            continue
        try:
            h = _dlt(src[idx], dst[idx])
        except DegenerateConfigurationError:
            continue
        inliers = _reprojection_error(h, src, dst) <= params.inlier_threshold
        if best_inliers is None or inliers.sum() > best_inliers.sum():
            best_inliers = inliers
            needed = _ransac_trials(inliers.mean(), params.confidence)
    if best_inliers is None or best_inliers.sum() < 4:
        raise NoConsensusError("RANSAC found fewer than 4 inliers")
    h = _dlt(src[best_inliers], dst[best_inliers])
    # one re-scoring pass against the refit model
    inliers = _reprojection_error(h, src, dst) <= params.inlier_threshold
    if inliers.sum() >= 4 and not np.array_equal(inliers, best_inliers):
        h = _dlt(src[inliers], dst[inliers])
    return h


# -- warping ----------------------------------------------------------------

def _round_half_away(v: np.ndarray) -> np.ndarray:
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def _warp_rows(src: np.ndarray, h: Homography, rows: range, out_w: int, fill: float) -> np.ndarray:
    sh, sw, ch = src.shape
    yy, xx = np.meshgrid(np.arange(rows.start, rows.stop, dtype=float), np.arange(out_w, dtype=float), indexing="ij")
    pts = np.stack([xx.ravel() + 0.5, yy.ravel() + 0.5], axis=1)
    mapped = apply_many(h, pts) - 0.5
    sx, sy = mapped[:, 0], mapped[:, 1]
    tol = 1e-9
    inside = (sx >= -tol) & (sx <= sw - 1 + tol) & (sy >= -tol) & (sy <= sh - 1 + tol)
    sx = np.clip(sx, 0, sw - 1)
    sy = np.clip(sy, 0, sh - 1)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, sw - 1)
    y1 = np.minimum(y0 + 1, sh - 1)
    fx = (sx - x0)[:, None]
    fy = (sy - y0)[:, None]
    s = src.astype(float)
    top = s[y0, x0] * (1 - fx) + s[y0, x1] * fx
    bot = s[y1, x0] * (1 - fx) + s[y1, x1] * fx
    val = top * (1 - fy) + bot * fy
    val[~inside] = fill
    return val.reshape(len(rows), out_w, ch)


def warp(src: Raster, h: Homography, out_w: int, out_h: int, fill: float = 0, threads: int = 1) -> Raster:
    """Resample ``src`` onto an ``out_w`` x ``out_h`` grid.

    ``h`` maps output pixel coordinates to source coordinates. Pixel centers
    sit at ``(i + 0.5, j + 0.5)``; samples are bilinear, out-of-bounds ones
    take ``fill``. Depth and channel count are preserved.
    """
    if out_w <= 0 or out_h <= 0:
        raise ValueError(f"output size must be positive, got {out_w}x{out_h}")
    if not 0 <= fill <= src.maxval:
        raise ValueError(f"fill value {fill} outside [0, {src.maxval}]")
    chunk = max(1, -(-out_h // max(1, threads)))
    bands = [range(r, min(r + chunk, out_h)) for r in range(0, out_h, chunk)]
    work = lambda rows: _warp_rows(src.data, h, rows, out_w, fill)  # noqa: E731
    if threads > 1 and len(bands) > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(work, bands))
    else:
        parts = [work(b) for b in bands]
    out = np.concatenate(parts, axis=0)
    out = np.clip(_round_half_away(out), 0, src.maxval).astype(src.data.dtype)
    return Raster(out)


# -- fusion -----------------------------------------------------------------

def _iron_lut() -> np.ndarray:
    # black -> indigo -> magenta -> red -> orange -> yellow -> white
    anchors = np.array([
        (0.00, 0, 0, 0),
        (0.15, 32, 0, 96),
        (0.35, 145, 0, 150),
        (0.55, 220, 40, 60),
        (0.72, 250, 120, 0),
        (0.88, 255, 210, 20),
        (1.00, 255, 255, 255),
    ], dtype=float)
    t = np.linspace(0.0, 1.0, 256)
    lut = np.stack([np.interp(t, anchors[:, 0], anchors[:, k]) for k in (1, 2, 3)], axis=1)
    return _round_half_away(lut).astype(np.uint8)


IRON_LUT = _iron_lut()
COLORMAPS = ("gray", "iron")


def normalize_ir(ir: Raster, value_range: tuple[float, float] | None = None) -> np.ndarray:
    """Map IR samples to [0, 1]: per-image min/max, or a fixed ``(lo, hi)``."""
    v = ir.data[:, :, 0].astype(float)
    lo, hi = (float(v.min()), float(v.max())) if value_range is None else map(float, value_range)
    if hi <= lo:
        if value_range is not None:
            raise ValueError(f"invalid IR range {value_range}")
        return np.zeros_like(v)
    return np.clip((v - lo) / (hi - lo), 0.0, 1.0)


def colorize(norm: np.ndarray, colormap: str = "gray") -> np.ndarray:
    """HxW values in [0, 1] -> HxWx3 floats on the 0..255 scale."""
    if colormap == "gray":
        g = norm * 255.0
        return np.repeat(g[:, :, None], 3, axis=2)
    if colormap == "iron":
        idx = _round_half_away(norm * 255.0).astype(np.int64)
        return IRON_LUT[idx].astype(float)
    raise ValueError(f"unknown colormap {colormap!r}; choose from {COLORMAPS}")


def fuse_images(rgb: Raster, ir_aligned: Raster, weight: float, colormap: str = "gray",
                ir_range: tuple[float, float] | None = None) -> Raster:
    """Weighted blend ``weight * RGB + (1 - weight) * colormap(IR)``, 8-bit output."""
    if rgb.channels != 3 or rgb.depth != 8:
        raise ValueError("rgb must be an 8-bit 3-channel raster")
    if ir_aligned.channels != 1:
        raise ValueError("ir must be a single-channel raster")
    if (rgb.width, rgb.height) != (ir_aligned.width, ir_aligned.height):
        raise ValueError(
            f"size mismatch: rgb {rgb.width}x{rgb.height} vs ir {ir_aligned.width}x{ir_aligned.height}"
        )
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"weight must be in [0, 1], got {weight}")
    if weight == 1.0:
        return Raster(rgb.data.copy())
    ir_rgb = colorize(normalize_ir(ir_aligned, ir_range), colormap)
    out = weight * rgb.data.astype(float) + (1.0 - weight) * ir_rgb
    return Raster(np.clip(_round_half_away(out), 0, 255).astype(np.uint8))


# -- files ------------------------------------------------------------------

def read_correspondences(path) -> list[Correspondence]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        want = ["src_x", "src_y", "dst_x", "dst_y"]
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != want:
            raise CorrespondenceFormatError(f"{path}: header must be {','.join(want)}")
        for n, row in enumerate(reader, start=2):
            try:
                vals = [float(row[k]) for k in want]
            except (TypeError, ValueError):
                raise CorrespondenceFormatError(f"{path}: line {n}: expected four decimal numbers") from None
            out.append(Correspondence((vals[0], vals[1]), (vals[2], vals[3])))
    return out


def write_correspondences(corrs, path) -> None:
    lines = ["src_x,src_y,dst_x,dst_y"]
    lines += [f"{c.src[0]!r},{c.src[1]!r},{c.dst[0]!r},{c.dst[1]!r}" for c in corrs]
    jsonio.write_atomic(path, "\n".join(lines) + "\n")


def load_homography(path) -> Homography:
    return Homography.from_dict(jsonio.read_json(path))


def save_homography(h: Homography, path) -> None:
    jsonio.write_json(path, h.to_dict())
