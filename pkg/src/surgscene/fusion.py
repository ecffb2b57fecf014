"""Projective surfel fusion of tool-masked depth maps.

This is a deliberately simple stand-in for a full non-rigid tissue tracker:
surfels live in the (quasi-static) camera frame and are associated to pixels
by projecting them into the incoming depth map. There is no deformation graph
and no warp solve, so tissue motion is absorbed only through the running
average of associated surfels. The evaluation interface it feeds (a depth map
re-rendered from the model) is the same as for a full tracker.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.ndimage import maximum_filter

from .errors import DimensionMismatch, InvalidArgument
from .geometry import CameraIntrinsics
from .stereo import DepthMap


@dataclass(frozen=True)
class BinaryMask:
    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits).astype(bool)
        if b.ndim != 2:
            raise InvalidArgument("mask must be 2-D")
        object.__setattr__(self, "bits", b)

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    @classmethod
    def empty(cls, height: int, width: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))


@dataclass(frozen=True)
class Surfel:
    position: np.ndarray
    radius: float
    confidence: float
    last_seen: int


@dataclass(frozen=True)
class FusionParams:
    tau_z: float = 0.005
    dilation_radius: int = 5
    c_min: float = 1.0
    t_stale: int = 30


def _empty_rows(n: int = 0):
    return (
        np.zeros((n, 3)),
        np.zeros(n),
        np.zeros(n),
        np.zeros(n, dtype=np.int64),
        np.zeros((n, 2), dtype=np.int64),
    )


@dataclass(frozen=True)
class SurfelModel:
    """Column-wise surfel storage.

    ``pixel`` keeps the ``(row, col)`` of the depth pixel that last created or
    updated each surfel, which is what the mask-safety audit inspects.
    """

    positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    radii: np.ndarray = field(default_factory=lambda: np.zeros(0))
    confidences: np.ndarray = field(default_factory=lambda: np.zeros(0))
    last_seen: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    pixel: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    frame_count: int = 0

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        n = pos.shape[0]
        rad = np.asarray(self.radii, dtype=float).reshape(n)
        conf = np.asarray(self.confidences, dtype=float).reshape(n)
        seen = np.asarray(self.last_seen, dtype=np.int64).reshape(n)
        pix = np.asarray(self.pixel, dtype=np.int64).reshape(n, 2)
        if not np.all(np.isfinite(pos)):
            raise InvalidArgument("surfel positions must be finite")
        if np.any(rad <= 0) or np.any(conf <= 0):
            raise InvalidArgument("surfel radius and confidence must be positive")
        for name, arr in (("positions", pos), ("radii", rad), ("confidences", conf), ("last_seen", seen), ("pixel", pix)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def surfels(self) -> list[Surfel]:
        return [
            Surfel(self.positions[i], float(self.radii[i]), float(self.confidences[i]), int(self.last_seen[i]))
            for i in range(len(self))
        ]

    def select(self, keep: np.ndarray) -> "SurfelModel":
        return SurfelModel(
            self.positions[keep], self.radii[keep], self.confidences[keep],
            self.last_seen[keep], self.pixel[keep], self.frame_count,
        )


def dilate_mask(mask: BinaryMask, radius: int) -> BinaryMask:
    """Dilation by a square element of half-width ``radius`` (side ``2 * radius + 1``)."""
    if radius <= 0:
        return mask
    # a square element is separable, so a running maximum is exact and fast
    grown = maximum_filter(mask.bits.view(np.uint8), size=2 * radius + 1, mode="constant", cval=0)
    return BinaryMask(grown.astype(bool))


def subtract_mask(depth: DepthMap, mask: BinaryMask, dilation_radius: int = 5) -> DepthMap:
    if depth.shape != mask.shape:
        raise DimensionMismatch(f"depth {depth.shape} and mask {mask.shape} differ in size")
    grown = dilate_mask(mask, dilation_radius).bits
    return DepthMap(np.where(grown, 0.0, depth.z))


def backproject(depth: DepthMap, K: CameraIntrinsics):
    """3-D points of every valid pixel (through the pixel center), row-major order.

    Returns ``(points (M, 3), rows (M,), cols (M,))``.
    """
    rows, cols = np.nonzero(depth.valid)
    z = depth.z[rows, cols]
    x = (cols + 0.5 - K.cx) / K.fx * z
    y = (rows + 0.5 - K.cy) / K.fy * z
    return np.stack([x, y, z], axis=1), rows, cols


def _project_to_pixels(points: np.ndarray, K: CameraIntrinsics):
    z = points[:, 2]
    front = z > 0
    safe = np.where(front, z, 1.0)
    u = K.fx * points[:, 0] / safe + K.cx
    v = K.fy * points[:, 1] / safe + K.cy
    col = np.floor(u)
    row = np.floor(v)
    inside = front & (col >= 0) & (col < K.width) & (row >= 0) & (row < K.height)
    return u, v, np.where(inside, row, 0).astype(np.int64), np.where(inside, col, 0).astype(np.int64), inside


def fuse_depth(
    model: SurfelModel,
    depth: DepthMap,
    K: CameraIntrinsics,
    params: FusionParams = FusionParams(),
) -> SurfelModel:
    """Fuse one masked depth map into the model.

    Every existing surfel is projected into the map. A surfel is associated with
    the pixel it lands on when that pixel is valid and the depths agree within
    ``tau_z``; if several surfels compete for one pixel the closest in depth
    wins (lowest index on ties). Associated surfels take a confidence-weighted
    running average and gain one unit of confidence. Unclaimed valid pixels
    spawn new surfels with radius ``z / fx`` and confidence 1.
    """
    if depth.shape != K.shape:
        raise DimensionMismatch(f"depth map {depth.shape} does not match camera {K.shape}")
    frame = model.frame_count
    pos = model.positions.copy()
    conf = model.confidences.copy()
    seen = model.last_seen.copy()
    pix = model.pixel.copy()

    claimed = np.zeros(depth.shape, dtype=bool)
    if len(model):
        _, _, row, col, inside = _project_to_pixels(pos, K)
        z_pix = depth.z[row, col]
        dz = np.abs(pos[:, 2] - z_pix)
        cand = np.nonzero(inside & (z_pix > 0) & (dz <= params.tau_z))[0]
        if cand.size:
            flat = row[cand] * K.width + col[cand]
            order = np.lexsort((cand, dz[cand], flat))
            flat_sorted = flat[order]
            first = np.ones(order.size, dtype=bool)
            first[1:] = flat_sorted[1:] != flat_sorted[:-1]
            winners = cand[order[first]]
            r, c = row[winners], col[winners]
            z = depth.z[r, c]
            obs = np.stack([(c + 0.5 - K.cx) / K.fx * z, (r + 0.5 - K.cy) / K.fy * z, z], axis=1)
            w = conf[winners][:, None]
            pos[winners] = (w * pos[winners] + obs) / (w + 1.0)
            conf[winners] += 1.0
            seen[winners] = frame
            pix[winners] = np.stack([r, c], axis=1)
            claimed[r, c] = True

    fresh = DepthMap(np.where(claimed, 0.0, depth.z))
    new_pts, rows, cols = backproject(fresh, K)
    n_new = new_pts.shape[0]
    return SurfelModel(
        np.concatenate([pos, new_pts]),
        np.concatenate([model.radii, new_pts[:, 2] / K.fx]),
        np.concatenate([conf, np.ones(n_new)]),
        np.concatenate([seen, np.full(n_new, frame, dtype=np.int64)]),
        np.concatenate([pix, np.stack([rows, cols], axis=1)]),
        frame + 1,
    )


def reproject_model(model: SurfelModel, K: CameraIntrinsics) -> DepthMap:
    """Z-buffer render of the surfels as screen-space disks.

    A surfel covers the pixels whose centers lie strictly inside a disk of its
    projected radius ``fx * radius / z``, and always the pixel it projects into.
    Freshly created surfels therefore cover exactly their source pixel.
    """
    z_buf = np.full(K.shape, np.inf)
    if len(model):
        u, v, row, col, inside = _project_to_pixels(model.positions, K)
        idx = np.nonzero(inside)[0]
        z = model.positions[idx, 2]
        r_px = K.fx * model.radii[idx] / z
        row, col, u, v = row[idx], col[idx], u[idx], v[idx]
        np.minimum.at(z_buf, (row, col), z)
        reach = int(np.ceil(np.max(r_px))) if idx.size else 0
        for dr in range(-reach, reach + 1):
            for dc in range(-reach, reach + 1):
                if dr == 0 and dc == 0:
                    continue
                rr = row + dr
                cc = col + dc
                dist2 = (cc + 0.5 - u) ** 2 + (rr + 0.5 - v) ** 2
                # small margin keeps exact-neighbour distances out of the disk
                hit = (dist2 < (r_px - 1e-9) ** 2) & (rr >= 0) & (rr < K.height) & (cc >= 0) & (cc < K.width)
                if np.any(hit):
                    np.minimum.at(z_buf, (rr[hit], cc[hit]), z[hit])
    return DepthMap(np.where(np.isfinite(z_buf), z_buf, 0.0))


def prune(model: SurfelModel, params: FusionParams = FusionParams()) -> SurfelModel:
    """Drop surfels that are both low-confidence and stale."""
    stale = (model.frame_count - 1 - model.last_seen) >= params.t_stale
    drop = (model.confidences < params.c_min) & stale
    return model.select(~drop)


def total_confidence(model: SurfelModel) -> float:
    return float(np.sum(model.confidences))


def mask_audit(model: SurfelModel, frame: int, dilated: BinaryMask) -> int:
    """Number of surfels created or updated at ``frame`` from a pixel inside ``dilated``."""
    touched = model.last_seen == frame
    r, c = model.pixel[touched, 0], model.pixel[touched, 1]
    return int(np.count_nonzero(dilated.bits[r, c]))
