"""Cost-volume stereo: SAD matching cost, soft-argmin readout, triangulation.

The readout is the softmax expectation over negated costs::

    d_hat(r, c) = sum_d softmax(-S[r, c, :])_d * d,   d = 0 .. d_max

so *lower cost means a better match*. Raw window SAD on [0, 1] intensities
spans at most one unit, which makes the softmax nearly flat over 193 planes;
``cost_gain`` rescales the SAD so the readout is as peaked as a learned cost
volume would be. Any externally produced volume or disparity map goes through
the same readout and triangulation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d

from .errors import DimensionMismatch, InvalidArgument
from .geometry import CameraIntrinsics

DISP_MIN = 0.5
D_MAX = 192


@dataclass(frozen=True)
class ImageGray:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.size == 0:
            raise InvalidArgument("image must be a non-empty 2-D array")
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("image has non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class CostVolume:
    """Matching cost indexed ``cost[row, col, d]`` for ``d = 0 .. d_max``."""

    cost: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.cost)
        if c.ndim != 3 or c.shape[2] < 2:
            raise InvalidArgument("cost volume must be (H, W, d_max + 1) with d_max >= 1")
        object.__setattr__(self, "cost", c)

    @property
    def d_max(self) -> int:
        return self.cost.shape[2] - 1

    @property
    def height(self) -> int:
        return self.cost.shape[0]

    @property
    def width(self) -> int:
        return self.cost.shape[1]


@dataclass(frozen=True)
class DisparityMap:
    disp: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.disp, dtype=float)
        v = np.asarray(self.valid, dtype=bool)
        if d.shape != v.shape or d.ndim != 2:
            raise InvalidArgument("disparity and validity mask must be matching 2-D arrays")
        object.__setattr__(self, "disp", d)
        object.__setattr__(self, "valid", v)

    @classmethod
    def from_array(cls, disp) -> "DisparityMap":
        """Wrap an external disparity array; non-finite or negative entries are invalid."""
        d = np.asarray(disp, dtype=float)
        ok = np.isfinite(d) & (d >= 0)
        return cls(np.where(ok, d, 0.0), ok)


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel depth in meters; 0 marks an invalid pixel."""

    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        if z.ndim != 2:
            raise InvalidArgument("depth map must be 2-D")
        if not np.all(np.isfinite(z)) or np.any(z < 0):
            raise InvalidArgument("depth must be finite and nonnegative")
        object.__setattr__(self, "z", z)

    @property
    def valid(self) -> np.ndarray:
        return self.z > 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.z.shape

    @classmethod
    def empty(cls, height: int, width: int) -> "DepthMap":
        return cls(np.zeros((height, width)))


@dataclass(frozen=True)
class StereoParams:
    d_max: int = D_MAX
    window: int = 7
    cost_gain: float = 100.0
    readout: str = "soft_argmin"
    disp_min: float = DISP_MIN
    ambiguity_threshold: float = np.inf

    def __post_init__(self):
        if self.readout not in ("soft_argmin", "winner_take_all"):
            raise InvalidArgument(f"unknown readout {self.readout!r}")
        if self.window < 1 or self.window % 2 == 0:
            raise InvalidArgument("window must be a positive odd integer")


def build_cost_volume(
    left: ImageGray,
    right: ImageGray,
    d_max: int,
    window: int,
    gain: float = 1.0,
    dtype=np.float64,
) -> CostVolume:
    """Window-mean absolute difference, left-referenced.

    ``cost[r, c, d] = gain * mean |L(r, c + k) - R(r, c - d + k)|`` over the
    window. Comparisons that fall outside either image count as the maximum
    per-pixel difference 1.
    """
    if left.values.shape != right.values.shape:
        raise DimensionMismatch(f"stereo pair sizes differ: {left.values.shape} vs {right.values.shape}")
    if window < 1 or window % 2 == 0:
        raise InvalidArgument("window must be a positive odd integer")
    h, w = left.values.shape
    if not 1 <= d_max < w:
        raise InvalidArgument(f"d_max={d_max} must satisfy 1 <= d_max < width={w}")
    L = left.values
    R = right.values
    half = window // 2
    out = np.empty((h, w, d_max + 1), dtype=dtype)
    diff = np.empty((h + 2 * half, w + 2 * half))
    for d in range(d_max + 1):
        diff.fill(1.0)
        core = diff[half : half + h, half : half + w]
        core[:, d:] = np.abs(L[:, d:] - R[:, : w - d])
        # separable box mean; padding already holds the max cost
        box = uniform_filter1d(diff, window, axis=0, mode="nearest")
        box = uniform_filter1d(box, window, axis=1, mode="nearest")
        out[:, :, d] = gain * box[half : half + h, half : half + w]
    return CostVolume(out)


def soft_argmin(volume: CostVolume, chunk_rows: int = 32) -> DisparityMap:
    cost = volume.cost
    h, w, n = cost.shape
    d = np.arange(n, dtype=np.float64)
    disp = np.empty((h, w))
    for r0 in range(0, h, chunk_rows):
        c = -np.asarray(cost[r0 : r0 + chunk_rows], dtype=np.float64)
        c -= c.max(axis=2, keepdims=True)
        e = np.exp(c)
        disp[r0 : r0 + chunk_rows] = (e @ d) / e.sum(axis=2)
    return DisparityMap(disp, np.ones((h, w), dtype=bool))


def winner_take_all(volume: CostVolume, ambiguity_threshold: float = np.inf) -> DisparityMap:
    """Per-pixel argmin; ``np.argmin`` already breaks ties toward the smaller disparity."""
    idx = np.argmin(volume.cost, axis=2)
    best = np.take_along_axis(volume.cost, idx[..., None], axis=2)[..., 0]
    return DisparityMap(idx.astype(float), best < ambiguity_threshold)


def disparity_to_depth(disp: DisparityMap, K: CameraIntrinsics, disp_min: float = DISP_MIN) -> DepthMap:
    """``z = baseline * fx / d`` where the disparity is valid and above ``disp_min``."""
    ok = disp.valid & (disp.disp > disp_min)
    z = np.zeros(disp.disp.shape)
    z[ok] = (K.baseline * K.fx) / disp.disp[ok]
    return DepthMap(z)


def depth_to_disparity(depth: DepthMap, K: CameraIntrinsics) -> DisparityMap:
    ok = depth.valid
    d = np.zeros(depth.z.shape)
    d[ok] = (K.baseline * K.fx) / depth.z[ok]
    return DisparityMap(d, ok)


def ambiguous_pixels(volume: CostVolume, spread: float = 1e-9) -> np.ndarray:
    """Pixels whose cost curve is flat, i.e. where the readout carries no information."""
    c = volume.cost
    return (c.max(axis=2) - c.min(axis=2)) <= spread


def compute_disparity(left: ImageGray, right: ImageGray, params: StereoParams = StereoParams()) -> DisparityMap:
    # float32 halves the memory of a full 640x480x193 volume
    vol = build_cost_volume(left, right, params.d_max, params.window, params.cost_gain, dtype=np.float32)
    if params.readout == "soft_argmin":
        return soft_argmin(vol)
    return winner_take_all(vol, params.ambiguity_threshold)


def estimate_depth(
    left: ImageGray, right: ImageGray, K: CameraIntrinsics, params: StereoParams = StereoParams()
) -> DepthMap:
    """Cost volume, readout, triangulation. No filtering of any kind afterwards."""
    return disparity_to_depth(compute_disparity(left, right, params), K, params.disp_min)
