"""Synthetic ground truth: articulated tool, injected lumped error, noisy detections,
a deforming tissue height field, and stereo pairs rendered from it.

Every draw is derived from ``(rng_seed, frame, stream)`` so any frame can be
regenerated on its own and in any order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .geometry import (
    CameraIntrinsics,
    JointState,
    KinematicChain,
    LumpedErrorState,
    features_in_base,
    project_points,
)
from .metrics import ToolGeometry, render_tool_mask
from .fusion import BinaryMask
from .stereo import DepthMap, ImageGray
from .tracker import FeatureDetection, FilterConfig

_STREAM_DETECT = 1
_STREAM_TEXTURE = 2
_STREAM_ENCODER = 3


@dataclass(frozen=True)
class JointTrajectory:
    """``theta_j(t) = mean_j + amplitude_j * sin(2 pi t / period_j + phase_j)``."""

    mean: np.ndarray
    amplitude: np.ndarray
    period: np.ndarray
    phase: np.ndarray

    def at(self, frame: int) -> JointState:
        return JointState(self.mean + self.amplitude * np.sin(2.0 * np.pi * frame / self.period + self.phase))


@dataclass(frozen=True)
class LumpedTrajectory:
    """Constant lumped error plus a linear per-frame drift."""

    omega: np.ndarray
    b_trans: np.ndarray
    omega_drift: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b_drift: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def at(self, frame: int) -> LumpedErrorState:
        return LumpedErrorState(self.omega + frame * self.omega_drift, self.b_trans + frame * self.b_drift)


@dataclass(frozen=True)
class DetectionModel:
    sigma_px: float = 1.0
    base_rho: float = 0.9
    rho_jitter: float = 0.08
    misdetection_prob: float = 0.0
    misdetection_offset_px: float = 25.0
    low_rho_max: float = 0.3

    def __post_init__(self):
        if self.sigma_px < 0:
            raise InvalidArgument("sigma_px must be >= 0")
        if not 0.0 <= self.misdetection_prob <= 1.0:
            raise InvalidArgument("misdetection_prob must lie in [0, 1]")
        if not 0.0 <= self.base_rho <= 1.0:
            raise InvalidArgument("base_rho must lie in [0, 1]")


@dataclass(frozen=True)
class TissueSurface:
    """Height field ``z(x, y, t) = z0 + sx x + sy y + A sin(2 pi t / T) cos(k x) cos(k y)``.

    ``x, y`` are camera-frame metric coordinates; the texture is a fixed sum of
    random plane waves in the same coordinates, so it moves with the surface.
    """

    z0: float = 0.13
    slope: tuple = (0.0, 0.0)
    amplitude: float = 0.0
    period: float = 50.0
    wavelength: float = 0.04
    texture_amplitude: float = 1.0
    texture_waves: int = 24
    texture_min_wavelength: float = 0.0008
    texture_max_wavelength: float = 0.004

    def height(self, x, y, frame: int) -> np.ndarray:
        k = 2.0 * np.pi / self.wavelength
        bump = np.cos(k * x) * np.cos(k * y)
        phase = np.sin(2.0 * np.pi * frame / self.period) if self.amplitude else 0.0
        return self.z0 + self.slope[0] * x + self.slope[1] * y + self.amplitude * phase * bump

    def height_and_gradient(self, x, y, frame: int):
        """``(z, dz/dx, dz/dy)``; ``z`` equals :meth:`height` bit for bit."""
        k = 2.0 * np.pi / self.wavelength
        phase = np.sin(2.0 * np.pi * frame / self.period) if self.amplitude else 0.0
        lin = self.z0 + self.slope[0] * x + self.slope[1] * y
        if not self.amplitude or phase == 0.0:
            return lin + 0.0 * x, np.full_like(x, self.slope[0]), np.full_like(x, self.slope[1])
        cx, cy = np.cos(k * x), np.cos(k * y)
        a = self.amplitude * phase
        z = lin + a * (cx * cy)
        gx = self.slope[0] - a * k * np.sin(k * x) * cy
        gy = self.slope[1] - a * k * cx * np.sin(k * y)
        return z, gx, gy


@dataclass(frozen=True)
class SimScenario:
    chain: KinematicChain
    geometry: ToolGeometry
    camera: CameraIntrinsics
    joints: JointTrajectory
    lumped: LumpedTrajectory
    detection: DetectionModel = DetectionModel()
    tissue: TissueSurface = TissueSurface()
    frames: int = 100
    rng_seed: int = 0
    encoder_noise: float = 0.0
    filter: FilterConfig = FilterConfig()
    stereo_stride: int = 10

    def __post_init__(self):
        if self.frames < 1:
            raise InvalidArgument("frames must be >= 1")

    def rng(self, frame: int, stream: int) -> np.random.Generator:
        return np.random.default_rng([self.rng_seed, stream, frame])


def _check_frame(scenario: SimScenario, frame: int) -> None:
    if not 0 <= frame < scenario.frames:
        raise InvalidArgument(f"frame {frame} outside 0..{scenario.frames - 1}")


def true_joints(scenario: SimScenario, frame: int) -> JointState:
    return scenario.joints.at(frame)


def true_lumped(scenario: SimScenario, frame: int) -> LumpedErrorState:
    return scenario.lumped.at(frame)


def encoder_reading(scenario: SimScenario, frame: int) -> JointState:
    theta = true_joints(scenario, frame).theta
    if scenario.encoder_noise > 0:
        rng = scenario.rng(frame, _STREAM_ENCODER)
        theta = theta + rng.normal(0.0, scenario.encoder_noise, theta.shape)
    return JointState(theta)


def true_projections(scenario: SimScenario, frame: int) -> dict[str, np.ndarray]:
    """Noise-free pixel location of every feature in front of the camera."""
    chain = scenario.chain
    ids = chain.feature_ids
    pts = features_in_base(chain, true_joints(scenario, frame), ids)
    cam = chain.hand_eye_prior.apply(true_lumped(scenario, frame).transform().apply(pts))
    uv, valid = project_points(scenario.camera, cam)
    return {fid: uv[i] for i, fid in enumerate(ids) if valid[i]}


def _shaft_normal(proj: dict[str, np.ndarray]) -> np.ndarray:
    shaft = [proj[k] for k in sorted(proj) if k.startswith("shaft")]
    if len(shaft) >= 2:
        axis = shaft[-1] - shaft[0]
        n = np.linalg.norm(axis)
        if n > 0:
            return np.array([-axis[1], axis[0]]) / n
    return np.array([1.0, 0.0])


def simulate_detections(scenario: SimScenario, frame: int) -> list[FeatureDetection]:
    """Emulated keypoint-network output for one frame.

    Correct detections get Gaussian pixel noise and a high confidence. A
    misdetection lands on the other side of the shaft: it is pushed by the
    configured offset along the normal of the projected shaft axis and gets a
    confidence below ``low_rho_max``.
    """
    _check_frame(scenario, frame)
    model = scenario.detection
    proj = true_projections(scenario, frame)
    rng = scenario.rng(frame, _STREAM_DETECT)
    normal = _shaft_normal(proj)
    out = []
    for fid in scenario.chain.feature_ids:
        # fixed number of draws per feature keeps streams aligned across settings
        noise = rng.standard_normal(2)
        u_mis, u_rho, u_side = rng.random(3)
        if fid not in proj:
            continue
        h = proj[fid] + model.sigma_px * noise
        if u_mis < model.misdetection_prob:
            side = 1.0 if u_side < 0.5 else -1.0
            h = h + side * model.misdetection_offset_px * normal
            rho = u_rho * model.low_rho_max
        else:
            lo = max(0.0, model.base_rho - model.rho_jitter)
            hi = min(1.0, model.base_rho + model.rho_jitter)
            rho = lo + u_rho * (hi - lo)
        out.append(FeatureDetection(fid, h, float(rho)))
    return out


def _solve_height_field(surface: TissueSurface, rays_x, rays_y, frame: int, offset_x: float = 0.0):
    """Depth along rays ``(rays_x, rays_y, 1)`` from a camera at ``(offset_x, 0, 0)``."""
    sx, sy = surface.slope
    # start on the tilted plane, then Newton on z - height(ray(z))
    z = (surface.z0 + sx * offset_x) / (1.0 - sx * rays_x - sy * rays_y)
    for _ in range(50):
        x, y = offset_x + rays_x * z, rays_y * z
        h, gx, gy = surface.height_and_gradient(x, y, frame)
        step = (z - h) / (1.0 - gx * rays_x - gy * rays_y)
        z = z - step
        if np.max(np.abs(step)) < 1e-15:
            break
    return z


def simulate_depth(scenario: SimScenario, frame: int) -> DepthMap:
    _check_frame(scenario, frame)
    rays = scenario.camera.pixel_rays()
    return DepthMap(_solve_height_field(scenario.tissue, rays[..., 0], rays[..., 1], frame))


def height_field_residual(scenario: SimScenario, frame: int, depth: DepthMap) -> np.ndarray:
    """``z - height(x(z), y(z))`` per pixel; zero when ``depth`` lies on the surface."""
    rays = scenario.camera.pixel_rays()
    z = depth.z
    return z - scenario.tissue.height(rays[..., 0] * z, rays[..., 1] * z, frame)


def _texture(scenario: SimScenario, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    surf = scenario.tissue
    if surf.texture_amplitude == 0 or surf.texture_waves == 0:
        return np.full(x.shape, 0.5)
    rng = scenario.rng(0, _STREAM_TEXTURE)
    n = surf.texture_waves
    lam = np.exp(rng.uniform(np.log(surf.texture_min_wavelength), np.log(surf.texture_max_wavelength), n))
    angle = rng.uniform(0.0, np.pi, n)
    phase = rng.uniform(0.0, 2.0 * np.pi, n)
    acc = np.zeros(x.shape)
    for i in range(n):
        k = 2.0 * np.pi / lam[i]
        acc += np.sin(k * (np.cos(angle[i]) * x + np.sin(angle[i]) * y) + phase[i])
    acc *= surf.texture_amplitude / np.sqrt(n / 2.0)
    return np.clip(0.5 + 0.18 * acc, 0.0, 1.0)


def render_stereo_pair(scenario: SimScenario, frame: int, K: CameraIntrinsics | None = None):
    """Left and right images of the textured surface.

    The right camera sits ``baseline`` to the right of the left one, so a point
    at depth ``z`` appears ``baseline * fx / z`` pixels further left in the
    right image. Both views are ray-cast against the same height field, which is
    that warp evaluated exactly.
    """
    _check_frame(scenario, frame)
    K = K or scenario.camera
    rays = K.pixel_rays()
    rx, ry = rays[..., 0], rays[..., 1]
    images = []
    for offset in (0.0, K.baseline):
        z = _solve_height_field(scenario.tissue, rx, ry, frame, offset)
        images.append(ImageGray(_texture(scenario, offset + rx * z, ry * z)))
    return images[0], images[1]


def render_true_mask(scenario: SimScenario, frame: int) -> BinaryMask:
    return render_tool_mask(
        scenario.geometry, scenario.chain, true_joints(scenario, frame), true_lumped(scenario, frame), scenario.camera
    )
