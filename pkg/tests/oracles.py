"""Independent reference implementations used as test oracles.

Nothing here imports package math: rotations come from scipy, chains are
composed as dense 4x4 matrices, and the metrics are plain Python loops.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial.transform import Rotation


def hom(rotvec, t) -> np.ndarray:
    M = np.eye(4)
    M[:3, :3] = Rotation.from_rotvec(np.asarray(rotvec, dtype=float)).as_matrix()
    M[:3, 3] = t
    return M


def joint_matrix(joint: dict, value: float) -> np.ndarray:
    """``joint``: kind, pre_rotvec, pre_t, axis."""
    pre = hom(joint["pre_rotvec"], joint["pre_t"])
    axis = np.asarray(joint["axis"], dtype=float)
    if joint["kind"] == "revolute":
        motion = hom(axis * value, np.zeros(3))
    else:
        motion = hom(np.zeros(3), axis * value)
    return pre @ motion


def chain_matrix(specs: list[dict], theta, link: int) -> np.ndarray:
    M = np.eye(4)
    for joint, value in list(zip(specs, theta))[:link]:
        M = M @ joint_matrix(joint, value)
    return M


def project_dense(fx, fy, cx, cy, hand_eye: np.ndarray, lumped: np.ndarray, fk: np.ndarray, p) -> np.ndarray:
    """(1/s) K [I|0] T_he T_lumped FK p_bar."""
    K = np.array([[fx, 0, cx, 0], [0, fy, cy, 0], [0, 0, 1, 0]], dtype=float)
    m = K @ hand_eye @ lumped @ fk @ np.append(np.asarray(p, dtype=float), 1.0)
    return m[:2] / m[2]


def likelihood_sum(predicted: list, detections: list[tuple], gamma: float) -> float:
    """sum_i rho_i exp(-gamma |h_i - m_i|^2); ``predicted[i]`` None means behind camera."""
    total = 0.0
    for m, (h, rho) in zip(predicted, detections):
        if m is None:
            continue
        d2 = (h[0] - m[0]) ** 2 + (h[1] - m[1]) ** 2
        total += rho * math.exp(-gamma * d2)
    return total


def soft_argmin_pixel(costs) -> float:
    """Expectation of d under softmax(-cost), one pixel, pure Python."""
    lo = min(costs)
    weights = [math.exp(-(c - lo)) for c in costs]
    z = math.fsum(weights)
    return math.fsum(w * d for d, w in enumerate(weights)) / z


def sad_cost(left, right, r, c, d, window) -> float:
    """Window mean of |left(r, c+k) - right(r, c-d+k)|; out-of-bounds samples cost 1."""
    h, w = len(left), len(left[0])
    half = window // 2
    acc = 0.0
    for dr in range(-half, half + 1):
        for dc in range(-half, half + 1):
            rr, cl, cr = r + dr, c + dc, c + dc - d
            if 0 <= rr < h and 0 <= cl < w and 0 <= cr < w:
                acc += abs(left[rr][cl] - right[rr][cr])
            else:
                acc += 1.0
    return acc / (window * window)


def iou_loop(a, b) -> float:
    inter = union = 0
    for ra, rb in zip(a.tolist(), b.tolist()):
        for x, y in zip(ra, rb):
            inter += x and y
            union += x or y
    return 1.0 if union == 0 else inter / union


def rmse_loop(est, gt) -> float:
    n = 0
    acc = []
    for re, rg in zip(est.tolist(), gt.tolist()):
        for e, g in zip(re, rg):
            if e > 0 and g > 0:
                acc.append((e - g) ** 2)
                n += 1
    return math.sqrt(math.fsum(acc) / n)


def valid_loop(est) -> float:
    count = total = 0
    for row in est.tolist():
        for e in row:
            total += 1
            count += e > 0
    return count / total


def feature_error_loop(pred: dict, gt: dict, fid: str) -> float:
    errs = []
    for frame in sorted(pred):
        if frame in gt and fid in pred[frame] and fid in gt[frame]:
            (u1, v1), (u2, v2) = pred[frame][fid], gt[frame][fid]
            errs.append(math.sqrt((u1 - u2) ** 2 + (v1 - v2) ** 2))
    return math.fsum(errs) / len(errs)


def random_chain_specs(rng, n: int) -> list[dict]:
    specs = []
    for _ in range(n):
        axis = rng.normal(size=3)
        specs.append(
            {
                "kind": "revolute" if rng.random() < 0.7 else "prismatic",
                "pre_rotvec": rng.normal(scale=0.5, size=3),
                "pre_t": rng.normal(scale=0.05, size=3),
                "axis": axis / np.linalg.norm(axis),
            }
        )
    return specs
