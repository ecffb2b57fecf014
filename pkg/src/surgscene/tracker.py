"""Bootstrap particle filter over the lumped error of a tool's kinematic chain.

The observation model sums confidence-weighted Gaussian kernels over the
detected features instead of multiplying per-feature likelihoods::

    L(state) = sum_i rho_i * exp(-gamma * ||h_i - m_i(state)||^2)

where ``m_i`` is the projection of feature ``i`` through the chain. The sum is
kept on purpose: a single bad detection can only add a bump, never veto a
hypothesis, which is what makes low-confidence misdetections harmless.

The point estimate is the weighted mean of the particles, with axis-angle
vectors averaged in the rotation-vector chart. That is a fair approximation
only while the particle cloud is tight (``||omega||`` far from pi), which the
initial covariance guarantees.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidArgument, PointBehindCamera
from .geometry import (
    CameraIntrinsics,
    JointState,
    KinematicChain,
    LumpedErrorState,
    features_in_base,
    project_feature,
    project_features_batch,
    wrap_axis_angle,
)

DEFAULT_SIGMA0 = (0.005, 0.005, 0.005, 0.025, 0.025, 0.025)

FLAG_DEGENERATE = "degenerate"
FLAG_NO_DETECTIONS = "no_detections"
FLAG_RESAMPLED = "resampled"


@dataclass(frozen=True)
class FeatureDetection:
    feature_id: str
    h: np.ndarray
    rho: float

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float).reshape(-1)
        if h.shape != (2,) or not np.all(np.isfinite(h)):
            raise InvalidArgument(f"detection {self.feature_id!r}: h must be a finite 2-vector")
        if not 0.0 <= self.rho <= 1.0:
            raise InvalidArgument(f"detection {self.feature_id!r}: rho={self.rho} outside [0, 1]")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)


@dataclass(frozen=True)
class FilterConfig:
    n_particles: int = 1000
    sigma0: tuple = DEFAULT_SIGMA0
    motion_scale: float = 0.1
    gamma: float = 0.1
    resample_threshold: float = 500
    rng_seed: int = 0

    def __post_init__(self):
        s = tuple(float(x) for x in self.sigma0)
        if len(s) != 6 or any(x < 0 for x in s):
            raise InvalidArgument("sigma0 must be six nonnegative variances")
        object.__setattr__(self, "sigma0", s)
        if self.n_particles < 1:
            raise InvalidArgument("n_particles must be >= 1")
        if self.motion_scale < 0 or self.gamma <= 0:
            raise InvalidArgument("motion_scale must be >= 0 and gamma > 0")
        if not 0 < self.resample_threshold <= self.n_particles:
            raise InvalidArgument("resample_threshold must lie in (0, n_particles]")

    @property
    def motion_cov(self) -> np.ndarray:
        return self.motion_scale * np.asarray(self.sigma0)


@dataclass(frozen=True)
class ParticleSet:
    """N weighted lumped-error hypotheses stored as an ``(N, 6)`` array ``[omega | b]``."""

    particles: np.ndarray
    weights: np.ndarray
    flags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        p = np.array(self.particles, dtype=float).reshape(-1, 6)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if p.shape[0] < 1 or w.shape[0] != p.shape[0]:
            raise InvalidArgument("particle and weight counts must match and be >= 1")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise InvalidArgument("weights must be nonnegative and sum to 1")
        p.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "particles", p)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "flags", frozenset(self.flags))

    def __len__(self) -> int:
        return self.particles.shape[0]

    @property
    def omega(self) -> np.ndarray:
        return self.particles[:, :3]

    @property
    def b_trans(self) -> np.ndarray:
        return self.particles[:, 3:]

    @property
    def states(self) -> list[LumpedErrorState]:
        return [LumpedErrorState.from_vector(row) for row in self.particles]

    @property
    def degenerate(self) -> bool:
        return FLAG_DEGENERATE in self.flags


def _canonical(particles: np.ndarray) -> np.ndarray:
    out = particles.copy()
    out[:, :3] = wrap_axis_angle(out[:, :3])
    return out


def init_particles(config: FilterConfig, rng: Optional[np.random.Generator] = None) -> ParticleSet:
    """Sample the initial cloud from N(0, diag(sigma0)) with uniform weights."""
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    n = config.n_particles
    std = np.sqrt(np.asarray(config.sigma0))
    particles = rng.standard_normal((n, 6)) * std
    return ParticleSet(_canonical(particles), np.full(n, 1.0 / n))


def predict(particles: ParticleSet, config: FilterConfig, rng: np.random.Generator) -> ParticleSet:
    """Random-walk motion model with covariance ``motion_scale * diag(sigma0)``."""
    std = np.sqrt(config.motion_cov)
    noise = rng.standard_normal(particles.particles.shape) * std
    moved = _canonical(particles.particles + noise)
    return ParticleSet(moved, particles.weights)


def _check_detections(detections: Sequence[FeatureDetection]) -> None:
    if len(detections) == 0:
        raise InvalidArgument("likelihood needs at least one detection")


def likelihood(
    state: LumpedErrorState,
    detections: Sequence[FeatureDetection],
    joints: JointState,
    chain: KinematicChain,
    K: CameraIntrinsics,
    config: FilterConfig,
) -> float:
    """Unnormalized observation likelihood of one hypothesis.

    Features that project behind the camera contribute nothing.
    """
    _check_detections(detections)
    total = 0.0
    for det in detections:
        try:
            m = project_feature(K, chain, joints, state, det.feature_id)
        except PointBehindCamera:
            continue
        d2 = float(np.sum((det.h - m) ** 2))
        total += det.rho * np.exp(-config.gamma * d2)
    return total


def log_likelihoods(
    particles: ParticleSet,
    detections: Sequence[FeatureDetection],
    joints: JointState,
    chain: KinematicChain,
    K: CameraIntrinsics,
    config: FilterConfig,
) -> np.ndarray:
    """``log`` of :func:`likelihood` for every particle at once.

    Evaluated with log-sum-exp so that hypotheses hundreds of pixels away keep
    a usable ranking instead of all underflowing to zero.
    """
    _check_detections(detections)
    ids = [d.feature_id for d in detections]
    h = np.array([d.h for d in detections])
    rho = np.array([d.rho for d in detections])
    pts = features_in_base(chain, joints, ids)
    uv, valid = project_features_batch(K, chain, pts, particles.omega, particles.b_trans)
    d2 = np.sum((uv - h[None]) ** 2, axis=-1)
    with np.errstate(divide="ignore"):
        log_rho = np.log(rho)
    terms = np.where(valid, log_rho[None, :] - config.gamma * np.where(valid, d2, 0.0), -np.inf)
    return logsumexp(terms, axis=1)


def reweight(weights: np.ndarray, log_lik: np.ndarray):
    """Multiply weights by likelihoods given in log form and renormalize.

    Returns ``(new_weights, degenerate)``; when every likelihood is zero the
    weights fall back to uniform.
    """
    with np.errstate(divide="ignore"):
        log_w = np.log(weights) + log_lik
    top = np.max(log_w)
    if not np.isfinite(top):
        n = weights.shape[0]
        return np.full(n, 1.0 / n), True
    w = np.exp(log_w - top)
    return w / np.sum(w), False


def update(
    particles: ParticleSet,
    detections: Sequence[FeatureDetection],
    joints: JointState,
    chain: KinematicChain,
    K: CameraIntrinsics,
    config: FilterConfig,
) -> ParticleSet:
    log_lik = log_likelihoods(particles, detections, joints, chain, K, config)
    w, degenerate = reweight(particles.weights, log_lik)
    flags = set(particles.flags)
    if degenerate:
        flags.add(FLAG_DEGENERATE)
    return ParticleSet(particles.particles, w, flags)


def effective_count(particles: ParticleSet) -> float:
    return 1.0 / float(np.sum(particles.weights**2))


def stratified_indices(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One uniform draw inside each stratum ``[k/N, (k+1)/N)``, inverted through the weight CDF."""
    n = weights.shape[0]
    positions = (np.arange(n) + rng.random(n)) / n
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, positions, side="right")
    return np.minimum(idx, n - 1)


def stratified_resample(particles: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    idx = stratified_indices(particles.weights, rng)
    n = len(particles)
    return ParticleSet(particles.particles[idx], np.full(n, 1.0 / n), particles.flags | {FLAG_RESAMPLED})


def estimate(particles: ParticleSet) -> LumpedErrorState:
    mean = particles.weights @ particles.particles
    return LumpedErrorState.from_vector(mean)


@dataclass(frozen=True)
class Frame:
    detections: tuple
    joints: JointState
    frame_id: int = 0


def track_step(
    particles: ParticleSet,
    frame: Frame,
    chain: KinematicChain,
    K: CameraIntrinsics,
    config: FilterConfig,
    rng: np.random.Generator,
):
    """One filter cycle: predict, update, resample when N_eff drops, estimate.

    Returns ``(particles, estimate)``. The returned set's ``flags`` record what
    happened during this frame (no detections, degeneracy, resampling).
    """
    frame.joints.check(chain)
    p = predict(replace(particles, flags=frozenset()), config, rng)
    if len(frame.detections) == 0:
        p = ParticleSet(p.particles, p.weights, {FLAG_NO_DETECTIONS})
    else:
        p = update(p, frame.detections, frame.joints, chain, K, config)
        if effective_count(p) < config.resample_threshold:
            p = stratified_resample(p, rng)
    return p, estimate(p)


class ToolTracker:
    """Stateful wrapper that owns one particle set and its random stream."""

    def __init__(self, chain: KinematicChain, K: CameraIntrinsics, config: FilterConfig = FilterConfig()):
        self.chain = chain
        self.K = K
        self.config = config
        self.rng = np.random.default_rng(config.rng_seed)
        self.particles = init_particles(config, self.rng)

    def step(self, frame: Frame) -> LumpedErrorState:
        self.particles, est = track_step(self.particles, frame, self.chain, self.K, self.config, self.rng)
        return est
