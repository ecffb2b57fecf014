"""Rigid-body math, kinematic chains and feature projection.

Pixel convention used throughout the package: pixel ``(col, row)`` covers the
continuous image area ``[col, col + 1) x [row, row + 1)``, so its center sits
at ``(col + 0.5, row + 0.5)``. :func:`project_point` returns continuous image
coordinates; ``floor`` of them gives the pixel index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidArgument, PointBehindCamera

EPSILON_DEPTH = 1e-6
_ORTHO_TOL = 1e-9


def _vec3(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise InvalidArgument(f"{name} must be a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} has non-finite components: {arr}")
    return arr


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rodrigues(omega) -> np.ndarray:
    """Rotation matrix for an axis-angle vector."""
    omega = np.asarray(omega, dtype=float)
    theta = float(np.linalg.norm(omega))
    if theta == 0.0:
        return np.eye(3)
    k = skew(omega / theta)
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def rodrigues_batch(omegas: np.ndarray) -> np.ndarray:
    """Vectorized :func:`rodrigues` for an ``(N, 3)`` array; returns ``(N, 3, 3)``."""
    omegas = np.asarray(omegas, dtype=float).reshape(-1, 3)
    theta = np.linalg.norm(omegas, axis=1)
    safe = np.where(theta > 0.0, theta, 1.0)
    k = omegas / safe[:, None]
    kx, ky, kz = k[:, 0], k[:, 1], k[:, 2]
    zero = np.zeros_like(kx)
    K = np.stack(
        [
            np.stack([zero, -kz, ky], axis=1),
            np.stack([kz, zero, -kx], axis=1),
            np.stack([-ky, kx, zero], axis=1),
        ],
        axis=1,
    )
    s = np.sin(theta)[:, None, None]
    c = (1.0 - np.cos(theta))[:, None, None]
    R = np.eye(3)[None] + s * K + c * (K @ K)
    R[theta == 0.0] = np.eye(3)
    return R


def rotation_log(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix, with norm in ``[0, pi]``."""
    R = np.asarray(R, dtype=float)
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos_theta))
    if theta < 1e-12:
        return np.zeros(3)
    if np.pi - theta < 1e-6:
        # near pi: sin(theta) vanishes, recover the axis from R + I
        B = (R + np.eye(3)) / 2.0
        i = int(np.argmax(np.diag(B)))
        axis = B[:, i] / np.sqrt(B[i, i])
        axis /= np.linalg.norm(axis)
        return axis * theta
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return w * (theta / (2.0 * np.sin(theta)))


def wrap_axis_angle(omega: np.ndarray) -> np.ndarray:
    """Re-wrap axis-angle vectors so that their norm lies in ``[0, pi]``.

    Works on a single 3-vector or an ``(N, 3)`` array. The represented rotation
    is unchanged.
    """
    omega = np.asarray(omega, dtype=float)
    flat = omega.reshape(-1, 3)
    theta = np.linalg.norm(flat, axis=1)
    out = flat.copy()
    big = theta > np.pi
    if np.any(big):
        axis = flat[big] / theta[big, None]
        t = np.mod(theta[big], 2.0 * np.pi)
        flip = t > np.pi
        t = np.where(flip, t - 2.0 * np.pi, t)
        out[big] = axis * t[:, None]
    return out.reshape(omega.shape)


@dataclass(frozen=True)
class Transform3D:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        t = _vec3(self.translation, "translation")
        if R.shape != (3, 3) or not np.all(np.isfinite(R)):
            raise InvalidArgument("rotation must be a finite 3x3 matrix")
        if np.linalg.norm(R.T @ R - np.eye(3)) >= _ORTHO_TOL:
            raise InvalidArgument("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
            raise InvalidArgument("rotation determinant is not +1")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Transform3D":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, M) -> "Transform3D":
        M = np.asarray(M, dtype=float)
        return cls(M[:3, :3], M[:3, 3])

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def apply(self, points) -> np.ndarray:
        """Transform a 3-vector or an ``(N, 3)`` array of points."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def inverse(self) -> "Transform3D":
        Rt = self.rotation.T
        return Transform3D(Rt, -Rt @ self.translation)

    def __matmul__(self, other: "Transform3D") -> "Transform3D":
        R = self.rotation @ other.rotation
        # re-orthonormalize so long products stay inside the tolerance
        u, _, vt = np.linalg.svd(R)
        R = u @ vt
        return Transform3D(R, self.rotation @ other.translation + self.translation)


def axis_angle_to_transform(omega, b_trans) -> Transform3D:
    """Rigid transform with Rodrigues rotation ``omega`` and translation ``b_trans``."""
    omega = _vec3(omega, "omega")
    b_trans = _vec3(b_trans, "b_trans")
    return Transform3D(rodrigues(omega), b_trans)


@dataclass(frozen=True)
class LumpedErrorState:
    """Single SE(3) correction applied between the robot base and the kinematic chain."""

    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b_trans: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        w = wrap_axis_angle(_vec3(self.omega, "omega"))
        b = _vec3(self.b_trans, "b_trans")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "omega", w)
        object.__setattr__(self, "b_trans", b)

    @classmethod
    def from_vector(cls, v) -> "LumpedErrorState":
        v = np.asarray(v, dtype=float).reshape(6)
        return cls(v[:3], v[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.omega, self.b_trans])

    def transform(self) -> Transform3D:
        return axis_angle_to_transform(self.omega, self.b_trans)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    baseline: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0 and self.baseline > 0):
            raise InvalidArgument("fx, fy and baseline must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidArgument("principal point must lie inside the image")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def scaled(self, sx: float, sy: float) -> "CameraIntrinsics":
        """Intrinsics after resizing the image by ``(sx, sy)``."""
        return CameraIntrinsics(
            self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy, self.baseline,
            int(round(self.width * sx)), int(round(self.height * sy)),
        )

    def pixel_rays(self) -> np.ndarray:
        """Un-normalized camera-frame rays ``(x/z, y/z, 1)`` through every pixel center, ``(H, W, 3)``."""
        u = np.arange(self.width) + 0.5
        v = np.arange(self.height) + 0.5
        uu, vv = np.meshgrid(u, v)
        return np.stack([(uu - self.cx) / self.fx, (vv - self.cy) / self.fy, np.ones_like(uu)], axis=-1)


@dataclass(frozen=True)
class Joint:
    kind: str
    pre: Transform3D
    axis: np.ndarray

    def __post_init__(self):
        if self.kind not in ("revolute", "prismatic"):
            raise InvalidArgument(f"unknown joint type {self.kind!r}")
        a = _vec3(self.axis, "axis")
        if abs(np.linalg.norm(a) - 1.0) > _ORTHO_TOL:
            raise InvalidArgument("joint axis must be a unit vector")
        a.setflags(write=False)
        object.__setattr__(self, "axis", a)

    def transform(self, value: float) -> Transform3D:
        """Pre-transform followed by the joint motion."""
        if self.kind == "revolute":
            motion = Transform3D(rodrigues(self.axis * value), np.zeros(3))
        else:
            motion = Transform3D(np.eye(3), self.axis * value)
        return self.pre @ motion


@dataclass(frozen=True)
class Feature:
    feature_id: str
    link_index: int
    point: np.ndarray

    def __post_init__(self):
        p = _vec3(self.point, "feature point")
        p.setflags(write=False)
        object.__setattr__(self, "point", p)


@dataclass(frozen=True)
class KinematicChain:
    joints: tuple[Joint, ...]
    hand_eye_prior: Transform3D
    features: tuple[Feature, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "features", tuple(self.features))
        n = len(self.joints)
        seen = set()
        for f in self.features:
            if not 0 <= f.link_index <= n:
                raise InvalidArgument(
                    f"feature {f.feature_id!r} attached to link {f.link_index}, chain has {n} joints"
                )
            if f.feature_id in seen:
                raise InvalidArgument(f"duplicate feature id {f.feature_id!r}")
            seen.add(f.feature_id)

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def feature_ids(self) -> list[str]:
        return [f.feature_id for f in self.features]

    def feature(self, feature_id: str) -> Feature:
        for f in self.features:
            if f.feature_id == feature_id:
                return f
        raise InvalidArgument(f"unknown feature id {feature_id!r}")


@dataclass(frozen=True)
class JointState:
    theta: np.ndarray

    def __post_init__(self):
        th = np.array(self.theta, dtype=float).reshape(-1)
        if not np.all(np.isfinite(th)):
            raise InvalidArgument("joint values must be finite")
        th.setflags(write=False)
        object.__setattr__(self, "theta", th)

    def check(self, chain: KinematicChain) -> None:
        if self.theta.shape[0] != chain.n_joints:
            raise InvalidArgument(
                f"joint state has {self.theta.shape[0]} values, chain has {chain.n_joints} joints"
            )


def forward_kinematics(chain: KinematicChain, joints: JointState, link_index: int) -> Transform3D:
    """Pose of link ``link_index`` in the robot base frame."""
    joints.check(chain)
    if not 0 <= link_index <= chain.n_joints:
        raise InvalidArgument(f"link index {link_index} out of range 0..{chain.n_joints}")
    T = Transform3D.identity()
    for joint, value in zip(chain.joints[:link_index], joints.theta[:link_index]):
        T = T @ joint.transform(value)
    return T


def link_transforms(chain: KinematicChain, joints: JointState) -> list[Transform3D]:
    """Poses of every link ``0..n_joints`` in the base frame (one pass over the chain)."""
    joints.check(chain)
    out = [Transform3D.identity()]
    for joint, value in zip(chain.joints, joints.theta):
        out.append(out[-1] @ joint.transform(value))
    return out


def features_in_base(chain: KinematicChain, joints: JointState, feature_ids: Sequence[str]) -> np.ndarray:
    """Feature points expressed in the robot base frame, ``(F, 3)``."""
    links = link_transforms(chain, joints)
    pts = []
    for fid in feature_ids:
        f = chain.feature(fid)
        pts.append(links[f.link_index].apply(f.point))
    return np.array(pts, dtype=float).reshape(-1, 3)


def project_point(K: CameraIntrinsics, p_cam, epsilon_depth: float = EPSILON_DEPTH) -> np.ndarray:
    p = _vec3(p_cam, "p_cam")
    if p[2] <= epsilon_depth:
        raise PointBehindCamera(f"point {p} has depth {p[2]} <= {epsilon_depth}")
    return np.array([K.fx * p[0] / p[2] + K.cx, K.fy * p[1] / p[2] + K.cy])


def project_points(K: CameraIntrinsics, p_cam: np.ndarray, epsilon_depth: float = EPSILON_DEPTH):
    """Vectorized projection of ``(..., 3)`` camera-frame points.

    Returns ``(uv, valid)``; entries behind the camera are NaN in ``uv`` and
    False in ``valid``.
    """
    p = np.asarray(p_cam, dtype=float)
    z = p[..., 2]
    valid = z > epsilon_depth
    safe = np.where(valid, z, 1.0)
    uv = np.stack([K.fx * p[..., 0] / safe + K.cx, K.fy * p[..., 1] / safe + K.cy], axis=-1)
    uv[~valid] = np.nan
    return uv, valid


def feature_to_camera(chain: KinematicChain, joints: JointState, lumped: LumpedErrorState, feature_id: str) -> np.ndarray:
    f = chain.feature(feature_id)
    p_base = forward_kinematics(chain, joints, f.link_index).apply(f.point)
    p_corr = lumped.transform().apply(p_base)
    return chain.hand_eye_prior.apply(p_corr)


def project_feature(
    K: CameraIntrinsics,
    chain: KinematicChain,
    joints: JointState,
    lumped: LumpedErrorState,
    feature_id: str,
    epsilon_depth: float = EPSILON_DEPTH,
) -> np.ndarray:
    """Pixel location of a chain feature: K * hand_eye * lumped * FK(theta) * p, then divide by depth."""
    return project_point(K, feature_to_camera(chain, joints, lumped, feature_id), epsilon_depth)


def project_features_batch(
    K: CameraIntrinsics,
    chain: KinematicChain,
    points_base: np.ndarray,
    omegas: np.ndarray,
    b_trans: np.ndarray,
    epsilon_depth: float = EPSILON_DEPTH,
):
    """Project base-frame feature points under many lumped-error hypotheses.

    ``points_base`` is ``(F, 3)``, ``omegas`` and ``b_trans`` are ``(N, 3)``.
    Returns ``(uv, valid)`` with shapes ``(N, F, 2)`` and ``(N, F)``.
    """
    R = rodrigues_batch(omegas)
    corrected = np.einsum("nij,fj->nfi", R, points_base) + b_trans[:, None, :]
    he = chain.hand_eye_prior
    cam = corrected @ he.rotation.T + he.translation
    return project_points(K, cam, epsilon_depth)
