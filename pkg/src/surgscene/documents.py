"""JSON documents: chains, cameras, scenarios, detection and encoder streams.

Schemas live next to this module in ``schemas/`` and are enforced with
``jsonschema``; validation errors name the offending field path.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .errors import LoadError
from .geometry import (
    CameraIntrinsics,
    Feature,
    Joint,
    JointState,
    KinematicChain,
    LumpedErrorState,
    Transform3D,
    rodrigues,
)
from .metrics import Primitive, ToolGeometry
from .sim import DetectionModel, JointTrajectory, LumpedTrajectory, SimScenario, TissueSurface
from .tracker import FeatureDetection, FilterConfig


@lru_cache(maxsize=None)
def schema(name: str) -> dict:
    text = resources.files("surgscene").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def validate(doc: Any, name: str, source: str) -> None:
    try:
        jsonschema.validate(doc, schema(name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise LoadError(f"{source}: field '{where}': {exc.message}") from None


def load_json(path) -> Any:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise LoadError(f"{path}: cannot read ({exc.strerror or exc})") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise LoadError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None


def dump_json(path, doc: Any) -> None:
    """JSON with float repr round-tripping (Python's ``json`` writes shortest-repr floats)."""
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def parse_transform(doc: dict | None) -> Transform3D:
    if doc is None:
        return Transform3D.identity()
    t = doc.get("translation", [0.0, 0.0, 0.0])
    if "rotation" in doc:
        return Transform3D(np.array(doc["rotation"], dtype=float), t)
    return Transform3D(rodrigues(np.array(doc.get("axis_angle", [0.0, 0.0, 0.0]), dtype=float)), t)


def transform_doc(T: Transform3D) -> dict:
    return {"rotation": T.rotation.tolist(), "translation": T.translation.tolist()}


def parse_chain(doc: dict) -> KinematicChain:
    joints = [Joint(j["type"], parse_transform(j.get("pre")), np.array(j["axis"], dtype=float)) for j in doc["joints"]]
    feats = [Feature(f["id"], int(f["link"]), np.array(f["point"], dtype=float)) for f in doc.get("features", [])]
    return KinematicChain(tuple(joints), parse_transform(doc.get("hand_eye_prior")), tuple(feats))


def parse_geometry(items: list) -> ToolGeometry:
    prims = []
    for item in items:
        if "capsule" in item:
            a, b = item["capsule"]
            prims.append(Primitive(int(item["link"]), np.array(a, dtype=float), float(item["radius"]), np.array(b, dtype=float)))
        else:
            prims.append(Primitive(int(item["link"]), np.array(item["sphere"], dtype=float), float(item["radius"])))
    return ToolGeometry(tuple(prims))


def parse_camera(doc: dict) -> CameraIntrinsics:
    return CameraIntrinsics(
        float(doc["fx"]), float(doc["fy"]), float(doc["cx"]), float(doc["cy"]),
        float(doc["baseline"]), int(doc["width"]), int(doc["height"]),
    )


def camera_doc(K: CameraIntrinsics) -> dict:
    return {"fx": K.fx, "fy": K.fy, "cx": K.cx, "cy": K.cy, "baseline": K.baseline, "width": K.width, "height": K.height}


def parse_filter(doc: dict | None, seed: int | None = None) -> FilterConfig:
    doc = dict(doc or {})
    if seed is not None:
        doc["rng_seed"] = seed
    if "sigma0" in doc:
        doc["sigma0"] = tuple(doc["sigma0"])
    return FilterConfig(**doc)


def filter_doc(cfg: FilterConfig) -> dict:
    return {
        "n_particles": cfg.n_particles,
        "sigma0": list(cfg.sigma0),
        "motion_scale": cfg.motion_scale,
        "gamma": cfg.gamma,
        "resample_threshold": cfg.resample_threshold,
        "rng_seed": cfg.rng_seed,
    }


def load_chain_file(path) -> tuple[KinematicChain, ToolGeometry]:
    """Chain document (optionally with a ``geometry`` list)."""
    doc = load_json(path)
    validate(doc, "chain", str(path))
    return parse_chain(doc), parse_geometry(doc.get("geometry", []))


def load_camera_file(path) -> CameraIntrinsics:
    doc = load_json(path)
    validate(doc, "camera", str(path))
    return parse_camera(doc)


def parse_scenario(doc: dict, source: str = "<scenario>", seed: int | None = None) -> SimScenario:
    validate(doc, "scenario", source)
    chain_doc = dict(doc["chain"])
    chain = parse_chain(chain_doc)
    geometry = parse_geometry(doc.get("geometry", chain_doc.get("geometry", [])))
    n = chain.n_joints
    traj = doc["joint_trajectory"]
    arr = lambda key, default: np.array(traj.get(key, [default] * n), dtype=float)
    joints = JointTrajectory(arr("mean", 0.0), arr("amplitude", 0.0), arr("period", 1.0), arr("phase", 0.0))
    for name, v in zip(("mean", "amplitude", "period", "phase"), (joints.mean, joints.amplitude, joints.period, joints.phase)):
        if v.shape != (n,):
            raise LoadError(f"{source}: field 'joint_trajectory/{name}': expected {n} values, got {v.shape[0]}")
    lum = doc["true_lumped"]
    lumped = LumpedTrajectory(
        np.array(lum["omega"], dtype=float),
        np.array(lum["b_trans"], dtype=float),
        np.array(lum.get("omega_drift", [0.0, 0.0, 0.0]), dtype=float),
        np.array(lum.get("b_drift", [0.0, 0.0, 0.0]), dtype=float),
    )
    tissue = dict(doc.get("tissue", {}))
    if "slope" in tissue:
        tissue["slope"] = tuple(tissue["slope"])
    rng_seed = int(doc.get("rng_seed", 0) if seed is None else seed)
    filter_cfg = parse_filter(doc.get("filter"), rng_seed)
    return SimScenario(
        chain=chain,
        geometry=geometry,
        camera=parse_camera(doc["camera"]),
        joints=joints,
        lumped=lumped,
        detection=DetectionModel(**doc.get("detection", {})),
        tissue=TissueSurface(**tissue),
        frames=int(doc["frames"]),
        rng_seed=rng_seed,
        encoder_noise=float(doc.get("encoder_noise", 0.0)),
        filter=filter_cfg,
        stereo_stride=int(doc.get("stereo_stride", 10)),
    )


def default_scenario_doc() -> dict:
    text = resources.files("surgscene").joinpath("data", "default_scenario.json").read_text()
    return json.loads(text)


def load_scenario(path=None, seed: int | None = None) -> SimScenario:
    if path is None:
        return parse_scenario(default_scenario_doc(), "default_scenario.json", seed)
    return parse_scenario(load_json(path), str(path), seed)


# -- per-frame streams -------------------------------------------------------

def detection_doc(frame_id: int, detections, scale: float = 1.0) -> dict:
    return {
        "frame_id": frame_id,
        "detections": [
            {"feature_id": d.feature_id, "u": float(d.h[0]) / scale, "v": float(d.h[1]) / scale, "rho": float(d.rho)}
            for d in detections
        ],
    }


def load_detections(path, scale: float = 1.0) -> tuple[int, list[FeatureDetection]]:
    """One detection file; coordinates are multiplied by ``scale`` on ingestion."""
    doc = load_json(path)
    validate(doc, "detections", str(path))
    dets = [
        FeatureDetection(d["feature_id"], np.array([d["u"] * scale, d["v"] * scale]), float(d["rho"]))
        for d in doc["detections"]
    ]
    return int(doc["frame_id"]), dets


def encoder_doc(frame_id: int, joints: JointState) -> dict:
    return {"frame_id": frame_id, "theta": joints.theta.tolist()}


def load_encoder(path) -> tuple[int, JointState]:
    doc = load_json(path)
    validate(doc, "encoder", str(path))
    return int(doc["frame_id"]), JointState(np.array(doc["theta"], dtype=float))


def pose_doc(frame_id: int, joints: JointState, lumped: LumpedErrorState) -> dict:
    return {
        "frame_id": frame_id,
        "theta": joints.theta.tolist(),
        "omega": lumped.omega.tolist(),
        "b_trans": lumped.b_trans.tolist(),
    }
