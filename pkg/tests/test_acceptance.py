"""Acceptance gate. Each criterion records one pass/fail line, printed in the terminal summary."""

import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import chain_from_specs, record_acceptance
from oracles import (
    chain_matrix,
    feature_error_loop,
    hom,
    iou_loop,
    likelihood_sum,
    project_dense,
    random_chain_specs,
    rmse_loop,
    soft_argmin_pixel,
    valid_loop,
)
from surgscene import pipeline, sim
from surgscene.documents import load_scenario
from surgscene.fusion import BinaryMask, SurfelModel, fuse_depth, reproject_model
from surgscene.geometry import CameraIntrinsics, Feature, JointState, LumpedErrorState, Transform3D, project_feature, project_points, features_in_base, rodrigues
from surgscene.metrics import depth_rmse, feature_error, iou, render_tool_mask, valid_fraction
from surgscene.sim import DetectionModel, TissueSurface
from surgscene.stereo import CostVolume, DepthMap, DisparityMap, StereoParams, disparity_to_depth, estimate_depth, soft_argmin, winner_take_all
from surgscene.tracker import FeatureDetection, Frame, ParticleSet, ToolTracker, likelihood, log_likelihoods

N = 100
SEEDS = range(5)
K_EQ = CameraIntrinsics(520.0, 510.0, 320.0, 240.0, 0.005, 640, 480)


def rel(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))


def check(n, ok, detail):
    record_acceptance(n, ok, detail)
    assert ok, f"criterion {n}: {detail}"


# -- 1: formula fidelity -----------------------------------------------------

def _projection_instance(rng):
    while True:
        specs = random_chain_specs(rng, 4)
        he_w, he_t = rng.normal(scale=0.3, size=3), np.array([0.0, 0.0, 0.5]) + rng.normal(scale=0.02, size=3)
        pts = rng.normal(scale=0.02, size=(3, 3))
        chain = chain_from_specs(
            specs, Transform3D(rodrigues(he_w), he_t), [Feature(f"p{i}", 4, pts[i]) for i in range(3)]
        )
        theta = rng.normal(scale=0.4, size=4)
        w, b = rng.normal(scale=0.05, size=3), rng.normal(scale=0.01, size=3)
        M = hom(he_w, he_t) @ hom(w, b) @ chain_matrix(specs, theta, 4)
        if all((M @ np.append(p, 1.0))[2] > 0.05 for p in pts):
            dense = [
                project_dense(K_EQ.fx, K_EQ.fy, K_EQ.cx, K_EQ.cy, hom(he_w, he_t), hom(w, b), chain_matrix(specs, theta, 4), p)
                for p in pts
            ]
            return chain, JointState(theta), LumpedErrorState(w, b), dense


def test_criterion_1_formula_fidelity():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = {}

    # projection chain and the summed likelihood built on it
    e2 = e3 = 0.0
    from surgscene.tracker import FilterConfig

    cfg = FilterConfig(gamma=0.05)
    for _ in range(N):
        chain, joints, state, dense = _projection_instance(rng)
        uv = [project_feature(K_EQ, chain, joints, state, f"p{i}") for i in range(3)]
        e2 = max(e2, max(rel(u, d) for u, d in zip(uv, dense)))
        dets = [FeatureDetection(f"p{i}", dense[i] + rng.normal(scale=3, size=2), float(rng.uniform(0.05, 1))) for i in range(3)]
        oracle = likelihood_sum(dense, [(d.h, d.rho) for d in dets], cfg.gamma)
        e3 = max(e3, rel(likelihood(state, dets, joints, chain, K_EQ, cfg), oracle))
        ps = ParticleSet(np.concatenate([state.omega, state.b_trans])[None, :], np.ones(1))
        e3 = max(e3, rel(np.exp(log_likelihoods(ps, dets, joints, chain, K_EQ, cfg)[0]), oracle))
    worst["projection"], worst["likelihood"] = e2, e3

    # soft-argmin readout
    e4 = 0.0
    for _ in range(N):
        c = rng.random((2, 2, 17)) * rng.uniform(0.5, 20)
        d = soft_argmin(CostVolume(c)).disp
        e4 = max(e4, max(rel(d[r, k], soft_argmin_pixel(c[r, k].tolist())) for r in range(2) for k in range(2)))
    worst["soft_argmin"] = e4

    # triangulation, depth RMSE, feature error
    e5 = e6 = e7 = 0.0
    for _ in range(N):
        disp = rng.uniform(0.6, 192, size=(6, 7))
        z = disparity_to_depth(DisparityMap.from_array(disp), K_EQ).z
        e5 = max(e5, max(rel(z[r, k], K_EQ.baseline * K_EQ.fx / disp[r, k]) for r in range(6) for k in range(7)))
        a = np.where(rng.random((12, 13)) < 0.85, rng.uniform(0.05, 3, (12, 13)), 0.0)
        b = np.where(rng.random((12, 13)) < 0.85, rng.uniform(0.05, 3, (12, 13)), 0.0)
        e6 = max(e6, rel(depth_rmse(DepthMap(a), DepthMap(b)), rmse_loop(a, b)))
        gt = {f: {"x": tuple(rng.uniform(0, 640, 2))} for f in range(8)}
        pred = {f: {"x": tuple(np.add(gt[f]["x"], rng.normal(scale=4, size=2)))} for f in range(8)}
        e7 = max(e7, rel(feature_error(pred, gt, "x"), feature_error_loop(pred, gt, "x")))
    worst["triangulation"], worst["depth_rmse"], worst["feature_error"] = e5, e6, e7

    elapsed = time.perf_counter() - t0
    ok = max(e2, e3, e4) < 1e-9 and max(e5, e6, e7) < 1e-12 and elapsed < 10
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {elapsed:.1f} s"
    check(1, ok, detail)


# -- 2 and 3: filter convergence and misdetection robustness ------------------

def _track(sc, frames=50):
    tracker = ToolTracker(sc.chain, sc.camera, sc.filter)
    errs, ious = [], []
    for f in range(frames):
        enc = sim.encoder_reading(sc, f)
        est = tracker.step(Frame(tuple(sim.simulate_detections(sc, f)), enc, f))
        if f < frames - 10:
            continue
        truth = sim.true_projections(sc, f)
        pts = features_in_base(sc.chain, enc, list(truth))
        uv, _ = project_points(sc.camera, sc.chain.hand_eye_prior.apply(est.transform().apply(pts)))
        errs.append(np.mean(np.linalg.norm(uv - np.array(list(truth.values())), axis=1)))
        ious.append(iou(render_tool_mask(sc.geometry, sc.chain, enc, est, sc.camera), sim.render_true_mask(sc, f)))
    return float(np.mean(errs)), float(np.mean(ious))


@pytest.fixture(scope="module")
def clean_runs():
    t0 = time.perf_counter()
    runs = [_track(load_scenario(seed=s)) for s in SEEDS]
    return runs, time.perf_counter() - t0


def test_criterion_2_filter_convergence(clean_runs):
    runs, elapsed = clean_runs
    sc = load_scenario()
    assert abs(np.linalg.norm(sc.lumped.omega) - 0.05) < 1e-4 and abs(np.linalg.norm(sc.lumped.b_trans) - 0.02) < 1e-4
    assert len(sc.chain.feature_ids) == 7 and sc.detection.sigma_px == 1.0 and sc.filter.n_particles == 1000
    err = float(np.mean([r[0] for r in runs]))
    mean_iou = float(np.mean([r[1] for r in runs]))
    ok = err < 2.0 and mean_iou > 0.90 and elapsed < 120
    per_seed = " ".join(f"{e:.2f}" for e, _ in runs)
    check(2, ok, f"last-10 error {err:.3f} px (seeds {per_seed}), IoU {mean_iou:.3f}, {elapsed:.0f} s")


def test_criterion_3_misdetection_robustness(clean_runs):
    runs, _ = clean_runs
    clean = float(np.mean([r[0] for r in runs]))
    noisy = []
    for s in SEEDS:
        sc = load_scenario(seed=s)
        sc = replace(sc, detection=replace(sc.detection, misdetection_prob=0.2, low_rho_max=0.3))
        noisy.append(_track(sc)[0])
    degraded = float(np.mean(noisy))
    ratio = degraded / clean
    check(3, ratio < 1.5, f"error {clean:.3f} -> {degraded:.3f} px, ratio {ratio:.3f}")


# -- 4: stereo round trip -----------------------------------------------------

def test_criterion_4_stereo_round_trip():
    base = load_scenario()
    K = base.camera
    params = StereoParams()
    assert (K.width, K.height, params.d_max) == (640, 480, 192)
    medians, times = {}, []
    for name, tissue in [
        ("fronto-parallel", TissueSurface(z0=0.13)),
        ("sloped", TissueSurface(z0=0.13, slope=(0.15, -0.1))),
    ]:
        sc = replace(base, tissue=tissue)
        left, right = sim.render_stereo_pair(sc, 0)
        gt = sim.simulate_depth(sc, 0).z
        t0 = time.perf_counter()
        est = estimate_depth(left, right, K, params).z
        times.append(time.perf_counter() - t0)
        interior = pipeline._matchable(DepthMap(gt), K, params.window)
        interior[: params.window // 2] = interior[-(params.window // 2) :] = False
        ok = interior & (est > 0)
        medians[name] = float(np.median(np.abs(est[ok] - gt[ok]) / gt[ok]))

    one_hot = 0.0
    rng = np.random.default_rng(4)
    for _ in range(100):
        d_true = int(rng.integers(0, 193))
        c = np.full((1, 1, 193), float(rng.uniform(20, 100)))
        c[..., d_true] = float(rng.uniform(0, 1))
        vol = CostVolume(c)
        one_hot = max(one_hot, abs(float(soft_argmin(vol).disp[0, 0]) - float(winner_take_all(vol).disp[0, 0])))

    ok = max(medians.values()) < 0.02 and one_hot < 1e-3 and max(times) < 30
    detail = ", ".join(f"{k} {100 * v:.2f}%" for k, v in medians.items())
    check(4, ok, f"median error {detail}; one-hot gap {one_hot:.1e}; {max(times):.1f} s per pair")


# -- 5 and 7 share two full runs of the default scenario ----------------------

def _full_run(out):
    t0 = time.perf_counter()
    pipeline.run_sim(None, out)
    cfg = pipeline.load_config(out / "pipeline.json")
    reports = {"track": pipeline.run_track(cfg)}
    t_track = time.perf_counter() - t0
    t1 = time.perf_counter()
    reports["depth"] = pipeline.run_depth(cfg)
    t_depth = time.perf_counter() - t1
    t2 = time.perf_counter()
    reports["fuse"] = pipeline.run_fuse(cfg)
    reports["eval"] = pipeline.run_eval(cfg)
    reports["seconds_without_stereo"] = t_track + time.perf_counter() - t2
    reports["seconds_stereo"] = t_depth
    return reports


@pytest.fixture(scope="module")
def full_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("full")
    return root, _full_run(root / "a"), _full_run(root / "b")


def test_criterion_5_fusion_round_trip(full_runs):
    sc = load_scenario()
    z = sim.simulate_depth(sc, 0).z
    z[100:180, 200:330] = 0.0  # a hole, as left by a subtracted tool
    back = reproject_model(fuse_depth(SurfelModel(), DepthMap(z), sc.camera), sc.camera)
    valid = z > 0
    err = float(np.max(np.abs(back.z[valid] - z[valid])))
    same_support = bool(np.array_equal(back.valid, valid))

    _, run, _ = full_runs
    audit = [r["value"] for r in run["fuse"]["records"] if r["metric"] == "mask_violations"]
    ok = err < 1e-9 and same_support and len(audit) == 100 and sum(audit) == 0
    check(5, ok, f"round trip max error {err:.1e} m; {sum(audit)} violations over {len(audit)} frames")


def test_criterion_6_metric_cross_check():
    rng = np.random.default_rng(66)
    mismatches = {"iou": 0, "depth_rmse": 0, "valid_fraction": 0, "feature_error": 0}
    for _ in range(50):
        shape = tuple(rng.integers(5, 60, size=2))
        a, b = rng.random(shape) < rng.random(), rng.random(shape) < rng.random()
        if not (a.any() or b.any()):
            a[0, 0] = True
        mismatches["iou"] += iou(BinaryMask(a), BinaryMask(b)) != iou_loop(a, b)
        za = np.where(rng.random(shape) < 0.8, rng.uniform(0.01, 5, shape), 0.0)
        zb = np.where(rng.random(shape) < 0.8, rng.uniform(0.01, 5, shape), 0.0)
        zb[0, 0] = za[0, 0] = 1.0
        mismatches["depth_rmse"] += rel(depth_rmse(DepthMap(za), DepthMap(zb)), rmse_loop(za, zb)) >= 1e-12
        mismatches["valid_fraction"] += valid_fraction(DepthMap(za)) != valid_loop(za)
        gt = {f: {"k": tuple(rng.uniform(0, 640, 2))} for f in range(20)}
        pred = {f: {"k": tuple(rng.uniform(0, 640, 2))} for f in range(20) if f % 3}
        mismatches["feature_error"] += rel(feature_error(pred, gt, "k"), feature_error_loop(pred, gt, "k")) >= 1e-12
    ok = not any(mismatches.values())
    check(6, ok, ", ".join(f"{k} {v}/50 mismatches" for k, v in mismatches.items()))


def test_criterion_7_determinism(full_runs):
    root, _, _ = full_runs

    def tree(d):
        return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}

    a, b = tree(root / "a"), tree(root / "b")
    differing = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    ok = not differing and len(a) > 0
    check(7, ok, f"{len(a)} files compared, {len(differing)} differ" + (f" (first: {differing[0]})" if differing else ""))


def test_end_to_end_budget(full_runs):
    """simulate, track, mask-subtract, fuse, reproject and score the default scenario in under a minute."""
    _, run, _ = full_runs
    assert run["seconds_without_stereo"] < 60
