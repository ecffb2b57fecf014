"""Tool-mask rendering and the evaluation metrics (IoU, depth RMSE, valid fraction, feature error)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidArgument
from .fusion import BinaryMask
from .geometry import (
    CameraIntrinsics,
    JointState,
    KinematicChain,
    LumpedErrorState,
    Transform3D,
    link_transforms,
)
from .stereo import DepthMap


@dataclass(frozen=True)
class Primitive:
    """Capsule (segment ``a``-``b`` swept by ``radius``) or sphere (``b`` is None) on one link."""

    link_index: int
    a: np.ndarray
    radius: float
    b: np.ndarray | None = None

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidArgument("primitive radius must be positive")
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float).reshape(3))
        if self.b is not None:
            object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(3))

    @property
    def kind(self) -> str:
        return "sphere" if self.b is None else "capsule"


@dataclass(frozen=True)
class ToolGeometry:
    primitives: tuple[Primitive, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))


def _ray_point_dist2(d: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Squared distance from ``p`` to the rays ``t * d``, ``t >= 0``; ``d`` is ``(M, 3)``."""
    dd = np.einsum("ij,ij->i", d, d)
    t = np.maximum(d @ p, 0.0) / dd
    g = t[:, None] * d - p
    return np.einsum("ij,ij->i", g, g)


def _ray_segment_dist2(d: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared distance between the rays ``t * d`` (``t >= 0``) and segment ``a``-``b``.

    The objective is a convex quadratic in ``(t, s)``; its minimum is either the
    unconstrained stationary point (when feasible) or lies on one of the edges
    ``s = 0``, ``s = 1`` or ``t = 0``.
    """
    e = b - a
    ee = float(e @ e)
    best = np.minimum(_ray_point_dist2(d, a), _ray_point_dist2(d, b))
    if ee > 0.0:
        s0 = np.clip(-(a @ e) / ee, 0.0, 1.0)
        q = a + s0 * e
        best = np.minimum(best, float(q @ q))
        dd = np.einsum("ij,ij->i", d, d)
        de = d @ e
        da = d @ a
        ea = float(e @ a)
        det = de * de - dd * ee
        ok = np.abs(det) > 1e-12 * dd * ee
        safe = np.where(ok, det, 1.0)
        t = (de * ea - ee * da) / safe
        s = (dd * ea - de * da) / safe
        feasible = ok & (t >= 0.0) & (s >= 0.0) & (s <= 1.0)
        if np.any(feasible):
            g = t[feasible, None] * d[feasible] - a - s[feasible, None] * e
            best[feasible] = np.minimum(best[feasible], np.einsum("ij,ij->i", g, g))
    return best


def _pixel_box(K: CameraIntrinsics, centers: np.ndarray, radius: float):
    """Conservative pixel bounding box of spheres of ``radius`` at ``centers`` (camera frame)."""
    z = centers[:, 2]
    if np.min(z) - radius <= 1e-9:
        return 0, K.height, 0, K.width
    zr = z - radius
    u = K.fx * centers[:, 0] / z + K.cx
    v = K.fy * centers[:, 1] / z + K.cy
    ru = K.fx * radius / zr
    rv = K.fy * radius / zr
    c0 = int(np.floor(np.min(u - ru))) - 1
    c1 = int(np.ceil(np.max(u + ru))) + 1
    r0 = int(np.floor(np.min(v - rv))) - 1
    r1 = int(np.ceil(np.max(v + rv))) + 1
    return max(r0, 0), min(r1, K.height), max(c0, 0), min(c1, K.width)


def rasterize_primitives(prims_cam: Sequence[tuple], K: CameraIntrinsics) -> BinaryMask:
    """Union of camera-frame primitives sampled at pixel centers.

    ``prims_cam`` holds ``(a, b_or_None, radius)`` tuples already expressed in
    the camera frame.
    """
    mask = np.zeros(K.shape, dtype=bool)
    for a, b, radius in prims_cam:
        ends = np.array([a] if b is None else [a, b])
        if np.all(ends[:, 2] < -radius):
            continue
        r0, r1, c0, c1 = _pixel_box(K, ends, radius)
        if r0 >= r1 or c0 >= c1:
            continue
        cols = np.arange(c0, c1) + 0.5
        rows = np.arange(r0, r1) + 0.5
        uu, vv = np.meshgrid(cols, rows)
        d = np.stack([(uu - K.cx) / K.fx, (vv - K.cy) / K.fy, np.ones_like(uu)], axis=-1).reshape(-1, 3)
        if b is None:
            dist2 = _ray_point_dist2(d, a)
        else:
            dist2 = _ray_segment_dist2(d, a, b)
        hit = (dist2 <= radius * radius).reshape(r1 - r0, c1 - c0)
        mask[r0:r1, c0:c1] |= hit
    return BinaryMask(mask)


def primitives_in_camera(
    geometry: ToolGeometry,
    chain: KinematicChain,
    joints: JointState,
    lumped: LumpedErrorState | None,
) -> list[tuple]:
    links = link_transforms(chain, joints)
    to_cam = chain.hand_eye_prior
    if lumped is not None:
        to_cam = to_cam @ lumped.transform()
    out = []
    for prim in geometry.primitives:
        if not 0 <= prim.link_index <= chain.n_joints:
            raise InvalidArgument(f"primitive attached to missing link {prim.link_index}")
        T: Transform3D = to_cam @ links[prim.link_index]
        out.append((T.apply(prim.a), None if prim.b is None else T.apply(prim.b), prim.radius))
    return out


def render_tool_mask(
    geometry: ToolGeometry,
    chain: KinematicChain,
    joints: JointState,
    lumped: LumpedErrorState | None,
    K: CameraIntrinsics,
) -> BinaryMask:
    """Silhouette of the tool posed through the chain, lumped error and hand-eye prior.

    ``lumped=None`` renders through the raw kinematic chain.
    """
    return rasterize_primitives(primitives_in_camera(geometry, chain, joints, lumped), K)


def _same_shape(a, b, what: str):
    if a.shape != b.shape:
        raise DimensionMismatch(f"{what} sizes differ: {a.shape} vs {b.shape}")


def iou(a: BinaryMask, b: BinaryMask) -> float:
    _same_shape(a, b, "mask")
    inter = int(np.count_nonzero(a.bits & b.bits))
    union = int(np.count_nonzero(a.bits | b.bits))
    if union == 0:
        warnings.warn("IoU of two empty masks is defined as 1", RuntimeWarning, stacklevel=2)
        return 1.0
    return inter / union


def depth_rmse(est: DepthMap, gt: DepthMap) -> float:
    """RMS depth error over the pixels valid in both maps."""
    _same_shape(est, gt, "depth map")
    both = est.valid & gt.valid
    n = int(np.count_nonzero(both))
    if n == 0:
        raise InvalidArgument("no pixel is valid in both depth maps")
    diff = est.z[both] - gt.z[both]
    return float(np.sqrt(np.sum(diff * diff) / n))


def valid_fraction(est: DepthMap) -> float:
    return int(np.count_nonzero(est.valid)) / est.z.size


def feature_error(
    pred: Mapping[int, Mapping[str, Sequence[float]]],
    gt: Mapping[int, Mapping[str, Sequence[float]]],
    feature_id: str,
) -> float:
    """Mean pixel distance for one feature over the frames where both sides report it.

    ``pred`` and ``gt`` map ``frame_id -> {feature_id: (u, v)}``.
    """
    errs = []
    for frame in sorted(set(pred) & set(gt)):
        if feature_id in pred[frame] and feature_id in gt[frame]:
            d = np.asarray(pred[frame][feature_id], dtype=float) - np.asarray(gt[frame][feature_id], dtype=float)
            errs.append(float(np.sqrt(d @ d)))
    if not errs:
        raise InvalidArgument(f"feature {feature_id!r} never appears in both prediction and ground truth")
    return float(np.sum(errs) / len(errs))
