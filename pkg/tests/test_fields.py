import numpy as np
import pytest

from doppler_tomo.fields import (
    BAND,
    EXTERIOR,
    INTERIOR,
    CovectorField,
    Grid,
    Pair,
    ScalarField,
    SolenoidalProjector,
    divergence,
    gradient,
    poisson_dirichlet,
    random_smooth_covector,
    random_smooth_scalar,
    read_field_csv,
    solenoidal_decompose,
    write_field_csv,
)
from doppler_tomo.functions import CurlCovector, GradientCovector, PolynomialBump
from doppler_tomo.geometry import Domain

DOM = Domain()
BUMP = PolynomialBump(0.8, 3, center=(0.1, -0.05))


def _interior_edges(g, axis):
    inner = g.mask == INTERIOR
    return (inner[:-1] & inner[1:]) if axis == 0 else (inner[:, :-1] & inner[:, 1:])


def test_grid_covers_outer_square():
    g = Grid(20)
    assert g.spacing * g.n == pytest.approx(2 * DOM.radius_M1)
    assert np.allclose(g.points[0, 0], [-1.25, -1.25])


def test_mask_is_radially_consistent():
    g = Grid(32)
    r = np.linalg.norm(g.points, axis=-1)
    assert np.array_equal(g.mask == INTERIOR, r < 1.0 - 0.5 * g.spacing)
    assert np.all(g.mask[r > 1.0 + 0.5 * g.spacing] == EXTERIOR)
    assert np.all(g.mask[(g.mask != INTERIOR) & (r < 1.0 + 0.5 * g.spacing)] == BAND)


def test_scalar_field_zero_outside_interior():
    g = Grid(16)
    s = ScalarField.from_function(g, lambda x: np.ones(len(x)))
    assert np.all(s.values[g.mask != INTERIOR] == 0.0)


def test_divergence_of_harmonic_gradient_vanishes():
    g = Grid(24)
    f = CovectorField.from_function(g, lambda x: np.column_stack([x[:, 1], x[:, 0]]))
    assert np.max(np.abs(divergence(f).dofs())) < 1e-10


def test_divergence_of_position_is_two():
    g = Grid(24)
    f = CovectorField.from_function(g, lambda x: x.copy())
    assert np.max(np.abs(divergence(f).dofs() - 2.0)) < 1e-10


def test_divergence_of_shear_vanishes():
    g = Grid(24)
    f = CovectorField.from_function(g, lambda x: np.column_stack([np.sin(x[:, 1]), np.zeros(len(x))]))
    assert np.max(np.abs(divergence(f).dofs())) < 1e-10


def test_gradient_of_constant_is_zero():
    g = Grid(16)
    d = gradient(ScalarField.from_function(g, lambda x: np.full(len(x), 3.0), region=None))
    assert np.max(np.abs(d.e1)) == 0.0 and np.max(np.abs(d.e2)) == 0.0


def test_gradient_of_linear_function():
    g = Grid(16)
    d = gradient(ScalarField.from_function(g, lambda x: x[:, 0], region=None))
    assert np.max(np.abs(d.e1 - 1.0)) < 1e-12
    assert np.max(np.abs(d.e2)) < 1e-12


def test_gradient_of_bump_is_second_order():
    errs = []
    for n in (32, 64, 128):
        g = Grid(n)
        d = gradient(ScalarField.from_function(g, BUMP, region=None))
        exact = CovectorField.from_function(g, GradientCovector(BUMP), region=None)
        errs.append(max(np.max(np.abs(d.e1 - exact.e1)), np.max(np.abs(d.e2 - exact.e2))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.8)


def test_poisson_recovers_bump_at_second_order():
    errs = []
    for n in (32, 64, 128):
        g = Grid(n)
        rhs = ScalarField.from_function(g, BUMP.laplacian)
        phi = poisson_dirichlet(rhs, DOM)
        exact = ScalarField.from_function(g, BUMP).dofs()
        errs.append(np.linalg.norm(phi.dofs() - exact) / np.linalg.norm(exact))
    assert errs[-1] < 1e-3
    assert np.log2(errs[0] / errs[1]) > 1.5 and np.log2(errs[1] / errs[2]) > 1.5


def test_poisson_zero_data():
    g = Grid(16)
    assert np.all(poisson_dirichlet(ScalarField.zeros(g)).values == 0.0)


def test_poisson_point_source_sign_matches_dense_solve():
    g = Grid(8)
    rhs = ScalarField.zeros(g)
    k = g.dof_nodes[g.n_dof // 2]
    rhs.values.ravel()[k] = 1.0
    phi = poisson_dirichlet(rhs)
    dense = np.linalg.solve(g.laplacian5.toarray(), rhs.dofs())
    assert np.allclose(phi.dofs(), dense, atol=1e-9)
    assert phi.values.ravel()[k] < 0


def test_poisson_direct_and_cg_agree():
    g = Grid(24)
    rhs = random_smooth_scalar(g, 4)
    a = poisson_dirichlet(rhs, solver="cg").dofs()
    b = poisson_dirichlet(rhs, solver="direct").dofs()
    assert np.linalg.norm(a - b) <= 1e-8 * np.linalg.norm(b)


def test_decompose_pure_potential():
    g = Grid(64)
    f = CovectorField.from_function(g, GradientCovector(BUMP))
    fs, phi = solenoidal_decompose(f, DOM)
    exact = ScalarField.from_function(g, BUMP).dofs()
    assert fs.norm() / f.norm() < 1e-2
    assert np.linalg.norm(phi.dofs() - exact) / np.linalg.norm(exact) < 1e-2


def test_decompose_pure_solenoidal():
    g = Grid(64)
    f = CovectorField.from_function(g, CurlCovector(BUMP))
    fs, phi = solenoidal_decompose(f, DOM)
    assert phi.norm() / f.norm() < 1e-2
    assert np.linalg.norm(fs.dofs() - f.dofs()) / f.norm() < 1e-2


def test_decompose_is_idempotent():
    g = Grid(32)
    fs, _ = solenoidal_decompose(random_smooth_covector(g, 5))
    _, phi2 = solenoidal_decompose(fs)
    assert phi2.norm() <= 1e-6 * fs.norm()


def test_summation_by_parts():
    g = Grid(32)
    phi = random_smooth_scalar(g, 1)
    f = random_smooth_covector(g, 2)
    lhs = g.inner(gradient(phi).dofs(), f.dofs()) + g.inner(phi.dofs(), divergence(f).dofs())
    assert abs(lhs) <= 1e-12 * phi.norm() * f.norm()


def test_decomposition_orthogonality_and_pythagoras():
    g = Grid(64)
    f = random_smooth_covector(g, 7)
    fs, phi = solenoidal_decompose(f)
    rng = np.random.default_rng(0)
    for _ in range(5):
        psi = rng.standard_normal(g.n_dof)
        dpsi = g.grad_matrix @ psi
        assert abs(g.inner(fs.dofs(), dpsi)) <= 1e-6 * fs.norm() * g.norm(dpsi)
    dphi = g.grad_matrix @ phi.dofs()
    assert abs(f.norm() ** 2 - fs.norm() ** 2 - g.norm(dphi) ** 2) <= 1e-6 * f.norm() ** 2


def test_laplacian_is_divergence_of_gradient():
    g = Grid(16)
    diff = g.div_matrix @ g.grad_matrix - g.laplacian5
    assert abs(diff).max() < 1e-12


def test_projector_is_idempotent_and_symmetric():
    g = Grid(16)
    P = SolenoidalProjector(g)
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal(g.n_f), rng.standard_normal(g.n_f)
    pa = P.project(a)
    assert np.linalg.norm(P.project(pa) - pa) <= 1e-10 * np.linalg.norm(pa)
    assert P.project(a) @ b == pytest.approx(a @ P.project(b), rel=1e-10)


def test_decompose_on_outer_disk_mask():
    g = Grid(24, mask_radius=DOM.radius_M1)
    assert g.n_dof > Grid(24).n_dof
    fs, _ = solenoidal_decompose(random_smooth_covector(g, 0))
    assert np.max(np.abs(divergence(fs).dofs())) < 1e-8


def test_random_fields_are_seeded():
    g = Grid(16)
    a, b = random_smooth_covector(g, 11), random_smooth_covector(g, 11)
    assert np.array_equal(a.dofs(), b.dofs())
    assert not np.array_equal(a.dofs(), random_smooth_covector(g, 12).dofs())


def test_pair_vector_roundtrip():
    g = Grid(12)
    rng = np.random.default_rng(2)
    v = rng.standard_normal(g.n_pair)
    assert np.array_equal(Pair.from_vector(g, v).to_vector(), v)
    with pytest.raises(ValueError):
        Pair.from_vector(g, v[:-1])


def test_nodal_values_average_edges():
    g = Grid(12)
    f = CovectorField.from_function(g, lambda x: np.column_stack([x[:, 0] + 2 * x[:, 1], -x[:, 0]]), region=None)
    inner = g.mask == INTERIOR
    exact = np.stack([g.points[..., 0] + 2 * g.points[..., 1], -g.points[..., 0]], axis=-1)
    assert np.allclose(f.values[inner], exact[inner], atol=1e-12)


def test_interpolation_reproduces_linear_fields():
    g = Grid(16, mask_radius=DOM.radius_M1)
    fn = lambda x: np.column_stack([1 + x[:, 0] - x[:, 1], 2 * x[:, 1]])  # noqa: E731
    f = CovectorField.from_function(g, fn, region=None)
    x = np.random.default_rng(0).uniform(-0.9, 0.9, (40, 2))
    assert np.allclose(f(x), fn(x), atol=1e-12)


def test_field_csv_roundtrip(tmp_path):
    g = Grid(12)
    f = random_smooth_covector(g, 3)
    s = random_smooth_scalar(g, 3)
    write_field_csv(f, tmp_path / "f.csv")
    write_field_csv(s, tmp_path / "s.csv")
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == "i,j,x,y,f1,f2"
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "i,j,x,y,phi"
    f2 = read_field_csv(tmp_path / "f.csv")
    s2 = read_field_csv(tmp_path / "s.csv")
    assert np.array_equal(f2.e1, f.e1) and np.array_equal(f2.e2, f.e2)
    assert np.array_equal(s2.values, s.values)


def test_interior_edges_carry_unknowns():
    g = Grid(16)
    for axis in (0, 1):
        assert np.all(g.edge_dof_index(axis)[_interior_edges(g, axis)] >= 0)
