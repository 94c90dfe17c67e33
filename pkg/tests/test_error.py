import numpy as np
import pytest

from ptcontrol import fem
from ptcontrol.control import CELLWISE, VARIATIONAL, benchmark_problem, solve_discrete
from ptcontrol.error import (
    AT_BOUND,
    CUT,
    FREE,
    classify_cells,
    cut_area_ratio,
    eoc_least_squares,
    estimate_eoc,
    l1_error_fe,
    l2_error_control,
)
from ptcontrol.greens import ExactSolution
from ptcontrol.mesh import build_disc_mesh


@pytest.fixture(scope="module")
def narrow_exact():
    return ExactSolution(lower=-0.2, upper=0.2)


def constant_field(value):
    return lambda p: np.full(len(p), value)


def test_l2_identical_fields_give_zero():
    mesh = build_disc_mesh(level=2)
    assert l2_error_control(mesh, constant_field(0.7), constant_field(0.7)) \
        <= 1e-14
    values = np.linspace(-1, 1, mesh.n_vertices)
    fe = fem.FeFunction(mesh, values)
    assert l2_error_control(mesh, fe, fe) == 0.0


def test_l2_constant_difference_is_polygon_area():
    mesh = build_disc_mesh(level=3)
    value = l2_error_control(mesh, constant_field(1.0), constant_field(0.0))
    assert value == pytest.approx(np.sqrt(mesh.cell_areas().sum()), rel=1e-12)
    assert value == pytest.approx(np.sqrt(np.pi * 0.25), abs=4e-3)


def test_l2_halved_depth_stable(narrow_exact):
    mesh = build_disc_mesh(level=4)
    problem = benchmark_problem(narrow_exact)
    solution = solve_discrete(problem, mesh, VARIATIONAL)
    fine = l2_error_control(mesh, narrow_exact.control, solution.control, depth=2)
    coarse = l2_error_control(mesh, narrow_exact.control, solution.control,
                              depth=1)
    assert abs(fine - coarse) / fine < 1e-3


def test_l2_is_a_metric_on_sampled_fields():
    mesh = build_disc_mesh(level=1)
    rng = np.random.default_rng(17)
    fields = [
        fem.FeFunction(mesh, rng.standard_normal(mesh.n_vertices))
        for _ in range(3)
    ]
    a, b, c = fields
    assert l2_error_control(mesh, a, b) == l2_error_control(mesh, b, a)
    assert l2_error_control(mesh, a, c) <= (
        l2_error_control(mesh, a, b) + l2_error_control(mesh, b, c) + 1e-12
    )
    shifted = fem.FeFunction(mesh, a.values + 1e-3)
    assert l2_error_control(mesh, a, shifted) > 0


def test_l1_affine_interpolant_is_exact():
    mesh = build_disc_mesh(level=2)
    fe = fem.FeFunction(mesh, 0.3 * mesh.vertices[:, 0] - mesh.vertices[:, 1])
    exact = lambda p: 0.3 * p[:, 0] - p[:, 1]
    assert l1_error_fe(mesh, exact, fe) <= 1e-12


def test_l1_singular_refinement_stable(narrow_exact):
    mesh = build_disc_mesh(level=3)
    matrix = fem.assemble_stiffness(mesh)
    g = matrix.field(
        fem.factorize(matrix).solve(fem.load_point(mesh, (0.5, 0.5)))
    )
    base = l1_error_fe(mesh, narrow_exact.greens, g, singular_point=(0.5, 0.5))
    finer = l1_error_fe(mesh, narrow_exact.greens, g, singular_point=(0.5, 0.5),
                        extra_depth=5)
    assert abs(base - finer) / finer < 5e-3


def test_l1_requires_vertex_singularity():
    mesh = build_disc_mesh(level=1)
    fe = fem.FeFunction(mesh, np.zeros(mesh.n_vertices))
    with pytest.raises(ValueError):
        l1_error_fe(mesh, constant_field(0.0), fe, singular_point=(0.51, 0.5))


def test_classify_constant_control_all_at_bound():
    mesh = build_disc_mesh(level=2)
    tags = classify_cells(mesh, constant_field(-0.2), -0.2, 0.2)
    assert np.all(tags == AT_BOUND)
    tags = classify_cells(mesh, constant_field(0.0), -0.2, 0.2)
    assert np.all(tags == FREE)


def test_classify_benchmark_structure(narrow_exact):
    mesh = build_disc_mesh(level=3)
    tags = classify_cells(mesh, narrow_exact.control, -0.2, 0.2)
    assert set(np.unique(tags)) <= {AT_BOUND, FREE, CUT}
    # cells around the tracking point sit inside the active disc
    touching_center = np.any(mesh.cells == 0, axis=1)
    assert np.all(tags[touching_center] == AT_BOUND)
    # cells beyond the active radius with margin are strictly free
    radii = np.linalg.norm(
        mesh.vertices[mesh.cells] - [0.5, 0.5], axis=2
    ).min(axis=1)
    far = radii > 2.0 * narrow_exact.active_radius()
    assert np.all(tags[far] == FREE)
    assert np.any(tags == CUT)


def test_classification_stable_under_refinement(narrow_exact):
    coarse = build_disc_mesh(level=2)
    fine = build_disc_mesh(level=3)
    coarse_tags = classify_cells(coarse, narrow_exact.control, -0.2, 0.2)
    fine_tags = classify_cells(fine, narrow_exact.control, -0.2, 0.2)
    # children of cell k occupy rows 4k..4k+3; a saturated parent never
    # produces a strictly-free child
    for k in np.flatnonzero(coarse_tags == AT_BOUND):
        assert FREE not in fine_tags[4 * k : 4 * k + 4]


def test_cut_area_ratio_values(narrow_exact):
    mesh = build_disc_mesh(level=2)
    all_bound = np.full(mesh.n_cells, AT_BOUND)
    assert cut_area_ratio(all_bound, mesh) == 0.0
    single = np.full(mesh.n_cells, FREE)
    single[5] = CUT
    assert cut_area_ratio(single, mesh) == pytest.approx(
        mesh.cell_areas()[5] / mesh.h, rel=1e-14
    )


def test_cut_area_ratio_tracks_active_circle(narrow_exact):
    perimeter = 2 * np.pi * narrow_exact.active_radius()
    ratios = []
    for level in range(2, 6):
        mesh = build_disc_mesh(level=level)
        tags = classify_cells(mesh, narrow_exact.control, -0.2, 0.2)
        ratios.append(cut_area_ratio(tags, mesh))
    for ratio in ratios:
        assert perimeter / 2 <= ratio <= perimeter * 2
    assert max(ratios) / min(ratios) <= 2.0


def test_estimate_eoc_basic():
    assert estimate_eoc([(0.2, 0.1), (0.1, 0.05)]) == pytest.approx([1.0])
    assert estimate_eoc([(0.2, 0.1), (0.1, 0.025)]) == pytest.approx([2.0])
    assert estimate_eoc([(0.2, 0.3), (0.1, 0.3)]) == pytest.approx([0.0])


def test_estimate_eoc_edge_cases():
    orders = estimate_eoc([(0.2, 0.1), (0.1, 0.0), (0.05, 0.01)])
    assert np.isnan(orders[0]) and np.isnan(orders[1])
    with pytest.raises(ValueError):
        estimate_eoc([(0.2, 0.1)])
    with pytest.raises(ValueError):
        estimate_eoc([(0.1, 0.1), (0.2, 0.05)])


def test_eoc_least_squares_recovers_power_law():
    h = np.array([0.4, 0.2, 0.1, 0.05])
    records = list(zip(h, 3.0 * h**1.5))
    assert eoc_least_squares(records) == pytest.approx(1.5, abs=1e-12)
    assert eoc_least_squares(records, window=4) == pytest.approx(1.5, abs=1e-12)
    assert np.isnan(eoc_least_squares([(0.2, 0.1), (0.1, 0.0), (0.05, 0.1)]))


def test_l2_handles_cellwise_and_implicit_fields(narrow_exact):
    mesh = build_disc_mesh(level=2)
    problem = benchmark_problem(narrow_exact)
    solution = solve_discrete(problem, mesh, CELLWISE)
    value = l2_error_control(mesh, narrow_exact.control, solution.control)
    assert 0 < value < 0.1
    variational = solve_discrete(problem, mesh, VARIATIONAL)
    finer = l2_error_control(mesh, narrow_exact.control, variational.control)
    assert 0 < finer < value
