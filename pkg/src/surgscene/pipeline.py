"""Batch orchestration: simulate a dataset, then track, depth, fuse and evaluate.

Every stage reads the file formats in ``docs/formats.md`` and writes its
results under ``<out>/<stage>/``. Reports are JSON records plus a CSV summary,
both stamped with the seed and a hash of the numeric configuration.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import documents as docs
from . import formats, plotting, sim
from .errors import DimensionMismatch, InvalidArgument, LoadError
from .fusion import (
    BinaryMask,
    FusionParams,
    SurfelModel,
    dilate_mask,
    fuse_depth,
    mask_audit,
    prune,
    reproject_model,
    subtract_mask,
)
from .geometry import CameraIntrinsics, JointState, LumpedErrorState, features_in_base, project_points
from .metrics import depth_rmse, feature_error, iou, render_tool_mask, valid_fraction
from .stereo import DepthMap, DisparityMap, ImageGray, StereoParams, compute_disparity, disparity_to_depth
from .tracker import FilterConfig, Frame, ToolTracker, effective_count

DEFAULT_DOWNSAMPLE = 2.0
DEFAULT_RESIZE = (640, 480)
_FRAME_RE = re.compile(r"(\d+)")


@dataclass(frozen=True)
class PipelineConfig:
    """Resolved pipeline configuration; ``paths`` are absolute."""

    paths: dict = field(default_factory=dict)
    filter: FilterConfig = FilterConfig()
    stereo: StereoParams = StereoParams()
    fusion: FusionParams = FusionParams()
    snapshot_every: int = 25
    downsample: float = DEFAULT_DOWNSAMPLE
    resize: tuple[int, int] = DEFAULT_RESIZE
    seed: int = 0
    figures: bool = True

    def path(self, key: str) -> Path | None:
        p = self.paths.get(key)
        return Path(p) if p is not None else None

    def require(self, key: str) -> Path:
        p = self.path(key)
        if p is None:
            raise LoadError(f"config: paths/{key} is required for this command")
        if not p.exists():
            raise LoadError(f"{p}: not found (paths/{key})")
        return p

    def numeric_doc(self) -> dict:
        """Everything except paths, in canonical JSON types."""
        st = asdict(self.stereo)
        st["ambiguity_threshold"] = str(st["ambiguity_threshold"])
        return {
            "filter": docs.filter_doc(self.filter),
            "stereo": st,
            "fusion": asdict(self.fusion),
            "snapshot_every": self.snapshot_every,
            "downsample": self.downsample,
            "resize": list(self.resize),
        }

    def config_hash(self) -> str:
        text = json.dumps(self.numeric_doc(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_config(path, seed: int | None = None, out: str | None = None) -> PipelineConfig:
    """Load and validate a pipeline JSON. Relative paths resolve against the file's directory."""
    path = Path(path)
    doc = docs.load_json(path)
    docs.validate(doc, "pipeline", str(path))
    base = path.parent
    paths = {k: str((base / v).resolve()) for k, v in doc.get("paths", {}).items()}
    if out is not None:
        paths["output"] = str(Path(out).resolve())
    paths.setdefault("output", str(base.resolve()))
    for key, p in paths.items():
        if key != "output" and not Path(p).exists():
            raise LoadError(f"{path}: paths/{key} does not exist: {p}")
    seed = int(doc.get("seed", 0) if seed is None else seed)
    fus = dict(doc.get("fusion", {}))
    snapshot = int(fus.pop("snapshot_every", 25))
    return PipelineConfig(
        paths=paths,
        filter=docs.parse_filter(doc.get("filter"), seed),
        stereo=StereoParams(**doc.get("stereo", {})),
        fusion=FusionParams(**fus),
        snapshot_every=snapshot,
        downsample=float(doc.get("downsample", DEFAULT_DOWNSAMPLE)),
        resize=tuple(doc.get("resize", DEFAULT_RESIZE)),
        seed=seed,
        figures=bool(doc.get("figures", True)),
    )


# -- helpers -------------------------------------------------------------------

def frame_name(frame: int, prefix: str = "frame_", ext: str = "") -> str:
    return f"{prefix}{frame:06d}{ext}"


def _indexed(directory: Path, prefix: str, ext: str) -> dict[int, Path]:
    """``{frame: path}`` for files named ``<prefix><digits><ext>``."""
    out = {}
    for p in sorted(directory.glob(f"{prefix}*{ext}")):
        m = _FRAME_RE.fullmatch(p.name[len(prefix): len(p.name) - len(ext)])
        if m:
            out[int(m.group(1))] = p
    return out


def _out_dir(config: PipelineConfig, stage: str) -> Path:
    d = Path(config.paths["output"]) / stage
    d.mkdir(parents=True, exist_ok=True)
    return d


def _camera(config: PipelineConfig) -> CameraIntrinsics:
    return docs.load_camera_file(config.require("calibration"))


def _working_camera(config: PipelineConfig) -> CameraIntrinsics:
    """Calibration rescaled to the resize target when it differs."""
    K = _camera(config)
    w, h = config.resize
    if (K.width, K.height) == (w, h):
        return K
    return K.scaled(w / K.width, h / K.height)


def _resize(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resample at pixel centers; identity when the shape already matches."""
    if img.shape == shape:
        return img
    from scipy.ndimage import map_coordinates

    h, w = shape
    rows = (np.arange(h) + 0.5) * img.shape[0] / h - 0.5
    cols = (np.arange(w) + 0.5) * img.shape[1] / w - 0.5
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return map_coordinates(img, [rr, cc], order=1, mode="nearest")


def write_report(directory: Path, name: str, config: PipelineConfig, records: list[dict]) -> dict:
    """``<name>.json`` with every record and ``<name>.csv`` with mean and std per metric."""
    by_metric: dict[str, list[float]] = {}
    for rec in records:
        by_metric.setdefault(rec["metric"], []).append(rec["value"])
    summary = {
        m: {"mean": float(np.mean(v)), "std": float(np.std(v)), "n": len(v)} for m, v in sorted(by_metric.items())
    }
    doc = {"config_hash": config.config_hash(), "seed": config.seed, "records": records, "summary": summary}
    docs.dump_json(directory / f"{name}.json", doc)
    with open(directory / f"{name}.csv", "w", newline="") as fh:
        fh.write(f"# config_hash={config.config_hash()} seed={config.seed}\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["metric", "mean", "std", "n"])
        for m, s in summary.items():
            wr.writerow([m, repr(s["mean"]), repr(s["std"]), s["n"]])
    return doc


def _series(records: list[dict], metric: str):
    pts = [(r["frame_id"], r["value"]) for r in records if r["metric"] == metric]
    return [p[0] for p in pts], [p[1] for p in pts]


# -- simulate ------------------------------------------------------------------

def run_sim(scenario_path=None, out=".", seed: int | None = None, downsample: float = DEFAULT_DOWNSAMPLE) -> Path:
    """Write a complete synthetic dataset plus a ``pipeline.json`` that points at it."""
    if scenario_path is None:
        doc = docs.default_scenario_doc()
        source = "default_scenario.json"
    else:
        doc = docs.load_json(scenario_path)
        source = str(scenario_path)
    if isinstance(doc, dict) and doc.get("frames") == 0:
        raise LoadError(f"{source}: field 'frames': must be at least 1")
    sc = docs.parse_scenario(doc, source, seed)
    out = Path(out)
    sub = {k: out / k for k in ("detections", "encoders", "stereo", "gt/depth", "gt/masks", "gt/poses", "gt/keypoints")}
    for d in sub.values():
        d.mkdir(parents=True, exist_ok=True)

    scen = dict(doc)
    scen["rng_seed"] = sc.rng_seed
    docs.dump_json(out / "scenario.json", scen)
    docs.dump_json(out / "calibration.json", docs.camera_doc(sc.camera))
    chain_doc = dict(doc["chain"])
    chain_doc["geometry"] = doc.get("geometry", chain_doc.get("geometry", []))
    docs.dump_json(out / "chain.json", chain_doc)

    for f in range(sc.frames):
        name = frame_name(f)
        docs.dump_json(sub["detections"] / f"{name}.json", docs.detection_doc(f, sim.simulate_detections(sc, f), downsample))
        docs.dump_json(sub["encoders"] / f"{name}.json", docs.encoder_doc(f, sim.encoder_reading(sc, f)))
        docs.dump_json(sub["gt/poses"] / f"{name}.json", docs.pose_doc(f, sim.true_joints(sc, f), sim.true_lumped(sc, f)))
        truth = sim.true_projections(sc, f)
        keypoints = {
            "frame_id": f,
            "detections": [
                {"feature_id": fid, "u": float(uv[0]), "v": float(uv[1]), "rho": 1.0} for fid, uv in truth.items()
            ],
        }
        docs.dump_json(sub["gt/keypoints"] / f"{name}.json", keypoints)
        formats.write_pfm(sub["gt/depth"] / f"{name}.pfm", sim.simulate_depth(sc, f).z)
        formats.write_pbm(sub["gt/masks"] / f"{name}.pbm", sim.render_true_mask(sc, f).bits)
        if f % sc.stereo_stride == 0:
            left, right = sim.render_stereo_pair(sc, f)
            formats.write_pgm(sub["stereo"] / frame_name(f, "left_", ".pgm"), left.values)
            formats.write_pgm(sub["stereo"] / frame_name(f, "right_", ".pgm"), right.values)

    pipeline = {
        "seed": sc.rng_seed,
        "paths": {
            "calibration": "calibration.json",
            "chain": "chain.json",
            "detections": "detections",
            "encoders": "encoders",
            "stereo": "stereo",
            "depth": "gt/depth",
            "masks": "gt/masks",
            "gt_masks": "gt/masks",
            "gt_depth": "gt/depth",
            "gt_detections": "gt/keypoints",
        },
        "filter": {k: v for k, v in docs.filter_doc(sc.filter).items() if k != "rng_seed"},
        "downsample": downsample,
        "resize": [sc.camera.width, sc.camera.height],
    }
    docs.dump_json(out / "pipeline.json", pipeline)
    return out


# -- track ---------------------------------------------------------------------

def _load_streams(config: PipelineConfig):
    det_files = _indexed(config.require("detections"), "frame_", ".json")
    enc_files = _indexed(config.require("encoders"), "frame_", ".json")
    if len(det_files) != len(enc_files):
        raise LoadError(f"frame count mismatch: {len(det_files)} detection files vs {len(enc_files)} encoder files")
    if set(det_files) != set(enc_files):
        missing = sorted(set(det_files) ^ set(enc_files))[:3]
        raise LoadError(f"detection and encoder frame ids differ (e.g. frame {missing[0]})")
    frames = []
    for fid in sorted(det_files):
        _, dets = docs.load_detections(det_files[fid], config.downsample)
        _, joints = docs.load_encoder(enc_files[fid])
        frames.append(Frame(tuple(dets), joints, fid))
    return frames


def run_track(config: PipelineConfig) -> dict:
    """Run the particle filter over every frame.

    Writes ``track/estimates.json`` (one record per frame), rendered masks, and
    a report with per-frame IoU when ground-truth masks are configured.
    """
    K = _camera(config)
    chain, geometry = docs.load_chain_file(config.require("chain"))
    frames = _load_streams(config)
    out = _out_dir(config, "track")
    (out / "masks").mkdir(exist_ok=True)
    gt_dir = config.path("gt_masks")
    gt_files = _indexed(gt_dir, "frame_", ".pbm") if gt_dir else {}

    tracker = ToolTracker(chain, K, config.filter)
    estimates, records = [], []
    ids = list(chain.feature_ids)
    for frame in frames:
        for det in frame.detections:
            chain.feature(det.feature_id)  # unknown ids fail loudly
        frame.joints.check(chain)
        est = tracker.step(frame)
        pts = features_in_base(chain, frame.joints, ids)
        uv, ok = project_points(K, chain.hand_eye_prior.apply(est.transform().apply(pts)))
        estimates.append(
            {
                "frame_id": frame.frame_id,
                "omega": est.omega.tolist(),
                "b_trans": est.b_trans.tolist(),
                "theta": frame.joints.theta.tolist(),
                "n_eff": float(effective_count(tracker.particles)),
                "flags": sorted(tracker.particles.flags),
                "projections": {fid: uv[i].tolist() for i, fid in enumerate(ids) if ok[i]},
            }
        )
        mask = render_tool_mask(geometry, chain, frame.joints, est, K)
        formats.write_pbm(out / "masks" / f"{frame_name(frame.frame_id)}.pbm", mask.bits)
        records.append({"frame_id": frame.frame_id, "metric": "n_eff", "value": float(effective_count(tracker.particles))})
        if frame.frame_id in gt_files:
            gt = BinaryMask(formats.read_mask(gt_files[frame.frame_id]))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                records.append({"frame_id": frame.frame_id, "metric": "iou", "value": iou(mask, gt)})
            if config.figures and frame is frames[-1]:
                plotting.plot_mask_overlay(out / "mask_last.png", mask.bits, gt.bits, f"frame {frame.frame_id}")

    docs.dump_json(
        out / "estimates.json",
        {"config_hash": config.config_hash(), "seed": config.seed, "frames": estimates},
    )
    report = write_report(out, "report", config, records)
    if config.figures and records:
        series = {"IoU": _series(records, "iou")[1]} if "iou" in report["summary"] else {}
        if series:
            plotting.plot_series(out / "iou.png", _series(records, "iou")[0], series, "IoU", "tool mask IoU", 0.9)
        fr, neff = _series(records, "n_eff")
        plotting.plot_series(out / "n_eff.png", fr, {"N_eff": neff}, "effective particles", "filter health")
    return report


def load_estimates(path) -> list[dict]:
    doc = docs.load_json(path)
    if not isinstance(doc, dict) or "frames" not in doc:
        raise LoadError(f"{path}: not an estimates file (missing 'frames')")
    return doc["frames"]


# -- depth ---------------------------------------------------------------------

def _stereo_inputs(config: PipelineConfig, K: CameraIntrinsics):
    """Yield ``(frame, DisparityMap)`` from stereo pairs or external disparity PFMs."""
    if config.path("disparity") is not None:
        for fid, p in sorted(_indexed(config.require("disparity"), "frame_", ".pfm").items()):
            disp = formats.read_pfm(p)
            if disp.shape != K.shape:
                raise DimensionMismatch(f"{p}: disparity {disp.shape} does not match camera {K.shape}")
            yield fid, DisparityMap.from_array(disp)
        return
    sdir = config.require("stereo")
    lefts = _indexed(sdir, "left_", ".pgm")
    rights = _indexed(sdir, "right_", ".pgm")
    if not lefts:
        raise LoadError(f"{sdir}: no left_*.pgm images")
    for fid in sorted(lefts):
        if fid not in rights:
            raise LoadError(f"{sdir / frame_name(fid, 'right_', '.pgm')}: missing right image for frame {fid}")
        left = formats.read_gray(lefts[fid])
        right = formats.read_gray(rights[fid])
        if left.shape != right.shape:
            raise DimensionMismatch(f"frame {fid}: left image {left.shape} and right image {right.shape} differ in size")
        left, right = _resize(left, K.shape), _resize(right, K.shape)
        yield fid, compute_disparity(ImageGray(left), ImageGray(right), config.stereo)


def _matchable(gt: DepthMap, K: CameraIntrinsics, window: int) -> np.ndarray:
    """Pixels whose true match, window included, lies inside the right image.

    Used only to score an interior region; the depth maps themselves are never filtered.
    """
    cols = np.arange(gt.shape[1]) + 0.5
    disp = np.where(gt.valid, K.baseline * K.fx / np.where(gt.valid, gt.z, 1.0), np.inf)
    half = window // 2
    return gt.valid & (cols[None, :] - disp - half >= 0) & (cols[None, :] + half <= gt.shape[1])


def run_depth(config: PipelineConfig) -> dict:
    """One depth PFM per frame, and an RMSE / valid-fraction report when ground truth exists.

    Disparity is rounded to float32 (the PFM precision) before triangulation so
    that internally computed and externally supplied disparities yield
    byte-identical depth files.
    """
    K = _working_camera(config)
    out = _out_dir(config, "depth")
    gt_dir = config.path("gt_depth")
    gt_files = _indexed(gt_dir, "frame_", ".pfm") if gt_dir else {}
    records = []
    last = None
    for fid, disp in _stereo_inputs(config, K):
        disp32 = DisparityMap.from_array(disp.disp.astype(np.float32).astype(np.float64))
        depth = disparity_to_depth(disp32, K, config.stereo.disp_min)
        formats.write_pfm(out / f"{frame_name(fid, 'disparity_')}.pfm", disp32.disp)
        formats.write_pfm(out / f"{frame_name(fid)}.pfm", depth.z)
        records.append({"frame_id": fid, "metric": "valid_fraction", "value": valid_fraction(depth)})
        gt = None
        if fid in gt_files:
            gt = DepthMap(_resize(formats.read_pfm(gt_files[fid]).astype(np.float64), K.shape))
            records.append({"frame_id": fid, "metric": "rmse", "value": depth_rmse(depth, gt)})
            inner = DepthMap(np.where(_matchable(gt, K, config.stereo.window), gt.z, 0.0))
            if np.any(inner.valid & depth.valid):
                both = inner.valid & depth.valid
                rel = np.abs(depth.z[both] - inner.z[both]) / inner.z[both]
                records.append({"frame_id": fid, "metric": "rmse_interior", "value": depth_rmse(depth, inner)})
                records.append({"frame_id": fid, "metric": "median_rel_error_interior", "value": float(np.median(rel))})
        last = (fid, depth, gt)
    if last is None:
        raise LoadError("depth: no input frames found")
    report = write_report(out, "report", config, records)
    if config.figures:
        fid, depth, gt = last
        plotting.plot_depth_pair(out / "depth_last.png", depth.z, None if gt is None else gt.z, f"frame {fid}")
        if "rmse" in report["summary"]:
            fr, v = _series(records, "rmse")
            plotting.plot_series(out / "rmse.png", fr, {"RMSE": v}, "RMSE (m)", "stereo depth error")
    return report


# -- fuse ----------------------------------------------------------------------

def _mask_source(config: PipelineConfig, K: CameraIntrinsics):
    """Per-frame tool masks from mask files, or rendered from a tracker estimates file."""
    if config.path("masks") is not None:
        files = _indexed(config.require("masks"), "frame_", ".pbm")
        return lambda fid: BinaryMask(formats.read_mask(files[fid])) if fid in files else None
    if config.path("poses") is not None:
        chain, geometry = docs.load_chain_file(config.require("chain"))
        est = {e["frame_id"]: e for e in load_estimates(config.require("poses"))}

        def render(fid):
            e = est.get(fid)
            if e is None:
                return None
            lumped = LumpedErrorState(np.array(e["omega"]), np.array(e["b_trans"]))
            return render_tool_mask(geometry, chain, JointState(np.array(e["theta"])), lumped, K)

        return render
    warnings.warn("fuse: no tool masks or poses configured; fusing unmasked depth", RuntimeWarning, stacklevel=3)
    return lambda fid: None


def run_fuse(config: PipelineConfig) -> dict:
    """Fuse masked depth maps frame by frame into a surfel model.

    Writes a PLY snapshot every ``snapshot_every`` frames plus ``model.ply`` at
    the end. The report holds the mask-safety audit count per frame and the
    reprojection RMSE at each snapshot, measured against ``gt_depth`` when
    configured and the input depth otherwise.
    """
    K = _working_camera(config)
    out = _out_dir(config, "fuse")
    depth_files = _indexed(config.require("depth"), "frame_", ".pfm")
    gt_dir = config.path("gt_depth")
    gt_files = _indexed(gt_dir, "frame_", ".pfm") if gt_dir else {}
    masks = _mask_source(config, K)
    model = SurfelModel()
    records = []
    if not depth_files:
        warnings.warn("fuse: zero depth frames; writing an empty model", RuntimeWarning, stacklevel=2)
    for i, (fid, path) in enumerate(sorted(depth_files.items())):
        z = formats.read_pfm(path).astype(np.float64)
        if z.shape != K.shape:
            raise DimensionMismatch(f"{path}: depth {z.shape} does not match camera {K.shape}")
        depth = DepthMap(z)
        mask = masks(fid)
        if mask is not None:
            if mask.shape != K.shape:
                raise DimensionMismatch(f"frame {fid}: mask {mask.shape} does not match camera {K.shape}")
            dilated = dilate_mask(mask, config.fusion.dilation_radius)
            depth = subtract_mask(depth, dilated, 0)
        model = prune(fuse_depth(model, depth, K, config.fusion), config.fusion)
        if mask is not None:
            records.append({"frame_id": fid, "metric": "mask_violations", "value": mask_audit(model, model.frame_count - 1, dilated)})
        records.append({"frame_id": fid, "metric": "surfels", "value": len(model)})
        snapshot = (i + 1) % config.snapshot_every == 0
        if snapshot or i == len(depth_files) - 1:
            # reprojection is the costly step, so it is scored at snapshots only
            rendered = reproject_model(model, K)
            ref = DepthMap(formats.read_pfm(gt_files[fid]).astype(np.float64)) if fid in gt_files else DepthMap(z)
            if mask is not None:
                ref = DepthMap(np.where(dilated.bits, 0.0, ref.z))
            if np.any(rendered.valid & ref.valid):
                records.append({"frame_id": fid, "metric": "rmse", "value": depth_rmse(rendered, ref)})
        if snapshot:
            formats.write_ply(out / f"{frame_name(fid, 'model_')}.ply", model.positions, model.confidences)
    formats.write_ply(out / "model.ply", model.positions, model.confidences)
    report = write_report(out, "report", config, records)
    if config.figures and "rmse" in report["summary"]:
        fr, v = _series(records, "rmse")
        plotting.plot_series(out / "rmse.png", fr, {"RMSE": v}, "RMSE (m)", "reprojection error")
    return report


# -- eval ----------------------------------------------------------------------

def run_eval(config: PipelineConfig) -> dict:
    """Score stage outputs found under the output directory against the configured ground truth."""
    root = Path(config.paths["output"])
    out = _out_dir(config, "eval")
    records: list[dict] = []
    scored = False

    mask_dir, gt_masks = root / "track" / "masks", config.path("gt_masks")
    if mask_dir.is_dir() and gt_masks is not None:
        gt = _indexed(gt_masks, "frame_", ".pbm")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            for fid, p in sorted(_indexed(mask_dir, "frame_", ".pbm").items()):
                if fid in gt:
                    a, b = BinaryMask(formats.read_mask(p)), BinaryMask(formats.read_mask(gt[fid]))
                    records.append({"frame_id": fid, "metric": "iou", "value": iou(a, b)})
        scored = True

    depth_dir, gt_depth = root / "depth", config.path("gt_depth")
    if depth_dir.is_dir() and gt_depth is not None:
        gt = _indexed(gt_depth, "frame_", ".pfm")
        for fid, p in sorted(_indexed(depth_dir, "frame_", ".pfm").items()):
            est = DepthMap(formats.read_pfm(p).astype(np.float64))
            records.append({"frame_id": fid, "metric": "valid_fraction", "value": valid_fraction(est)})
            if fid in gt:
                ref = DepthMap(_resize(formats.read_pfm(gt[fid]).astype(np.float64), est.shape))
                records.append({"frame_id": fid, "metric": "rmse", "value": depth_rmse(est, ref)})
        scored = True

    est_file, gt_kp = root / "track" / "estimates.json", config.path("gt_detections")
    if est_file.is_file() and gt_kp is not None:
        pred = {e["frame_id"]: e["projections"] for e in load_estimates(est_file)}
        truth = {}
        for fid, p in _indexed(gt_kp, "frame_", ".json").items():
            _, dets = docs.load_detections(p, 1.0)
            truth[fid] = {d.feature_id: d.h for d in dets}
        ids = sorted({k for v in truth.values() for k in v})
        for fid_name in ids:
            try:
                err = feature_error(pred, truth, fid_name)
            except InvalidArgument:
                continue
            records.append({"frame_id": -1, "metric": f"feature_error/{fid_name}", "value": err})
        for fid in sorted(set(pred) & set(truth)):
            common = [k for k in truth[fid] if k in pred[fid]]
            if common:
                d = [np.linalg.norm(np.asarray(pred[fid][k]) - truth[fid][k]) for k in common]
                records.append({"frame_id": fid, "metric": "reprojection_error", "value": float(np.mean(d))})
        scored = True

    if not scored:
        raise LoadError(f"{root}: nothing to evaluate (run track or depth first, and configure ground truth)")
    report = write_report(out, "report", config, records)
    if config.figures:
        series = {}
        for metric in ("iou", "reprojection_error"):
            fr, v = _series(records, metric)
            if v:
                series[metric] = (fr, v)
        if "iou" in series:
            plotting.plot_series(out / "iou.png", series["iou"][0], {"IoU": series["iou"][1]}, "IoU", "tool mask IoU", 0.9)
        if "reprojection_error" in series:
            fr, v = series["reprojection_error"]
            plotting.plot_series(out / "reprojection.png", fr, {"mean": v}, "pixels", "feature reprojection error", 2.0)
    return report


def with_seed(config: PipelineConfig, seed: int) -> PipelineConfig:
    return replace(config, seed=seed, filter=replace(config.filter, rng_seed=seed))
