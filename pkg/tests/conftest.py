import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from vemtau.decomposition import DiffusionTensor

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def random_convex_quads(rng, m, min_gap=0.35):
    """``m`` CCW convex quads: sorted angles on a circle, then a random affine map."""
    out = np.empty((m, 4, 2))
    k = 0
    while k < m:
        ang = np.sort(rng.uniform(0, 2 * np.pi, 4))
        gaps = np.diff(np.append(ang, ang[0] + 2 * np.pi))
        if gaps.min() < min_gap:
            continue
        p = np.column_stack([np.cos(ang), np.sin(ang)])
        M = rng.normal(size=(2, 2))
        if np.linalg.det(M) <= 0 or np.linalg.cond(M) > 8:
            continue
        out[k] = p @ M.T * rng.uniform(0.01, 10) + rng.uniform(-50, 50, 2)
        k += 1
    return out


def random_spd(rng, max_cond=1e3):
    """Random SPD 2x2 tensor with condition number in [1, max_cond]."""
    th = rng.uniform(0, np.pi)
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    lam = rng.uniform(0.1, 10.0)
    K = R @ np.diag([lam, lam * np.exp(rng.uniform(0, np.log(max_cond)))]) @ R.T
    return DiffusionTensor(K[0, 0], 0.5 * (K[0, 1] + K[1, 0]), K[1, 1])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@st.composite
def convex_quads(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_convex_quads(np.random.default_rng(seed), 1)[0]


@st.composite
def spd_tensors(draw, max_cond=1e3):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_spd(np.random.default_rng(seed), max_cond)


@st.composite
def simple_polygons(draw, nmin=3, nmax=8):
    """Star-shaped CCW polygons around the origin (possibly nonconvex)."""
    n = draw(st.integers(nmin, nmax))
    seed = draw(st.integers(0, 2**32 - 1))
    r = np.random.default_rng(seed)
    # gaps below pi keep the origin inside, so the polygon is star-shaped and CCW
    while True:
        ang = np.sort(r.uniform(0, 2 * np.pi, n))
        gaps = np.diff(np.append(ang, ang[0] + 2 * np.pi))
        if gaps.min() >= 0.2 and gaps.max() < 0.9 * np.pi:
            break
    rad = r.uniform(0.5, 1.5, n)
    return np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
