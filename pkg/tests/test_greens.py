import numpy as np
import pytest

from ptcontrol import fem
from ptcontrol.greens import ExactSolution
from ptcontrol.mesh import build_disc_mesh

from oracles import bisect_root


@pytest.fixture(scope="module")
def narrow():
    return ExactSolution(lower=-0.2, upper=0.2)


def test_greens_vanishes_on_boundary(narrow):
    assert narrow.greens_radial(0.5) == 0.0
    angles = np.linspace(0.0, 2 * np.pi, 17)
    rim = np.column_stack(
        [0.5 + 0.5 * np.cos(angles), 0.5 + 0.5 * np.sin(angles)]
    )
    assert np.max(np.abs(narrow.greens(rim))) <= 1e-15


def test_greens_closed_form_values(narrow):
    assert narrow.greens_radial(0.25) == pytest.approx(
        np.log(2.0) / (2 * np.pi), rel=1e-15
    )
    assert narrow.greens_radial(0.0) == np.inf
    three_d = ExactSolution(center=(0.5, 0.5, 0.5), lower=-0.2, upper=0.2, dim=3)
    assert three_d.greens_radial(0.25) == pytest.approx(
        1.0 / (2 * np.pi), rel=1e-15
    )


def test_greens_radial_monotone(narrow):
    r = np.linspace(1e-6, 0.5, 10_000)
    values = narrow.greens_radial(r)
    assert np.all(np.diff(values) < 0)
    assert np.all(values >= 0)


def test_state_and_target(narrow):
    assert narrow.state(np.array([0.5, 0.5])) == 1.0
    assert narrow.target() == 0.0
    # state vanishes on the boundary circle
    assert narrow.state(np.array([1.0, 0.5])) == pytest.approx(0.0, abs=1e-15)


def test_active_radius_matches_bisection(narrow):
    level = 0.2  # z equals -lower * alpha at the active-set boundary
    root = bisect_root(lambda r: narrow.greens_radial(r) - level, 1e-6, 0.4999)
    r_star = narrow.active_radius()
    assert r_star == pytest.approx(root, abs=1e-12)
    assert r_star == pytest.approx(0.142307, abs=5e-6)
    three_d = ExactSolution(center=(0.5, 0.5, 0.5), lower=-0.2, upper=0.2, dim=3)
    root3 = bisect_root(
        lambda r: three_d.greens_radial(r) - level, 1e-6, 0.4999
    )
    assert three_d.active_radius() == pytest.approx(root3, abs=1e-12)


def test_active_radius_wide_bounds():
    wide = ExactSolution(lower=-1.0, upper=1.0)
    root = bisect_root(lambda r: wide.greens_radial(r) - 1.0, 1e-12, 0.4999)
    assert wide.active_radius() == pytest.approx(root, rel=1e-10)
    assert wide.active_radius() < 1e-3
    unconstrained = ExactSolution(lower=-np.inf, upper=np.inf)
    assert unconstrained.active_radius() == 0.0


def test_control_saturates_inside_active_radius(narrow):
    r_star = narrow.active_radius()
    rng = np.random.default_rng(6)
    t = 2 * np.pi * rng.random(64)
    r = 0.5 * r_star * np.sqrt(rng.random(64))
    points = np.column_stack(
        [0.5 + r * np.cos(t), 0.5 + r * np.sin(t)]
    )
    assert np.all(narrow.control(points) == -0.2)


def test_control_sign_structure(narrow):
    rng = np.random.default_rng(8)
    t = 2 * np.pi * rng.random(256)
    r = 0.5 * np.sqrt(rng.random(256))
    points = np.column_stack([0.5 + r * np.cos(t), 0.5 + r * np.sin(t)])
    q = narrow.control(points)
    # adjoint is non-negative, so the control sits in [lower, 0]
    assert np.all(q <= 1e-12)
    assert np.all(q >= -0.2 - 1e-12)


def test_source_closed_form_values():
    wide = ExactSolution(lower=-1.0, upper=1.0)
    assert wide.source_radial(0.0) == pytest.approx(2 * np.pi**2 + 1.0, rel=1e-14)
    assert wide.source_radial(0.5) == pytest.approx(2 * np.pi, rel=1e-13)
    narrow = ExactSolution(lower=-0.2, upper=0.2)
    assert narrow.source_radial(0.0) == pytest.approx(2 * np.pi**2 + 0.2, rel=1e-14)


def test_source_series_seam_continuous(narrow):
    # the radial term switches to its series limit near zero; the two
    # branches agree where they meet
    left = narrow.source_radial(0.99e-8)
    right = narrow.source_radial(1.01e-8)
    assert left == pytest.approx(right, rel=1e-9)


def test_source_vectorized_matches_radial(narrow):
    rng = np.random.default_rng(12)
    t = 2 * np.pi * rng.random(32)
    r = 0.499 * np.sqrt(rng.random(32))
    points = np.column_stack([0.5 + r * np.cos(t), 0.5 + r * np.sin(t)])
    assert np.allclose(narrow.source(points), narrow.source_radial(r), rtol=1e-13)


def test_fem_self_check_reproduces_state(narrow):
    # solving the state equation with the exact control reproduces the
    # exact state at the tracking point
    mesh = build_disc_mesh(level=5)
    matrix = fem.assemble_stiffness(mesh)
    control_cells = fem.centroid_project(mesh, narrow.control)
    b = fem.load_smooth(mesh, narrow.source) + fem.load_cellwise(
        mesh, control_cells.values
    )
    u = matrix.field(fem.factorize(matrix).solve(b))
    assert fem.evaluate(u, (0.5, 0.5)) == pytest.approx(1.0, abs=1e-3)


def test_validation():
    with pytest.raises(ValueError):
        ExactSolution(alpha=0.0)
    with pytest.raises(ValueError):
        ExactSolution(lower=0.3, upper=0.2)
    with pytest.raises(ValueError):
        ExactSolution(dim=4)
    with pytest.raises(ValueError):
        ExactSolution(radius=-0.5)
