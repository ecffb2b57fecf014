import numpy as np
import pytest

from surgscene.geometry import CameraIntrinsics, Feature, Joint, KinematicChain, Transform3D, rodrigues


def chain_from_specs(specs, hand_eye=None, features=()):
    """Package chain built from the oracle's joint descriptions."""
    joints = [Joint(s["kind"], Transform3D(rodrigues(s["pre_rotvec"]), s["pre_t"]), s["axis"]) for s in specs]
    he = hand_eye if hand_eye is not None else Transform3D.identity()
    return KinematicChain(tuple(joints), he, tuple(features))


@pytest.fixture
def K500():
    return CameraIntrinsics(500.0, 500.0, 320.0, 240.0, 0.01, 640, 480)


@pytest.fixture
def single_point_chain():
    """No joints; one feature at (0, 0, 1) on link 0."""
    return KinematicChain((), Transform3D.identity(), (Feature("f", 0, np.array([0.0, 0.0, 1.0])),))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: dict[int, str] = {}


def record_acceptance(n: int, ok: bool, detail: str) -> None:
    _ACCEPTANCE[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(_ACCEPTANCE[n])


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
