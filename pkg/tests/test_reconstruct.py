import numpy as np
import pytest

from doppler_tomo.exceptions import Degenerate, NoConvergence
from doppler_tomo.fields import CovectorField, Grid, Pair, ScalarField, SolenoidalProjector, random_smooth_covector
from doppler_tomo.functions import GradientCovector, LinearCovector, PolynomialBump
from doppler_tomo.geometry import Domain, magnetic, make_fan, straight_line
from doppler_tomo.reconstruct import (
    constructed_family,
    derivative_sup_norms,
    gauge_equivalent,
    gradient_family,
    overlap,
    perturbation_study,
    reconstruct,
    scalar_family,
    solenoidal_basis,
    spectral_analysis,
    stability_constant,
)
from doppler_tomo.transform import Sinogram, assemble_dense, pair_forward
from doppler_tomo.weights import Weight

DOM = Domain()
ATT = Weight.attenuated(1.0)
H = LinearCovector((0.6, -0.4), ((0.0, 0.3), (-0.2, 0.0)))


@pytest.fixture(scope="module")
def small():
    return Grid(12), make_fan(DOM, 64, 24)


def test_solenoidal_basis_is_orthonormal_and_divergence_free(small):
    g, _ = small
    Q = solenoidal_basis(g)
    assert np.allclose(Q.T @ Q, np.eye(Q.shape[1]), atol=1e-12)
    assert np.max(np.abs(g.div_matrix @ Q[: g.n_f])) < 1e-12
    # the gradient is injective, so divergence-free covectors number n_f - n_dof
    assert Q.shape[1] == (g.n_f - g.n_dof) + g.n_dof


def test_attenuated_system_is_injective(small):
    g, fan = small
    rep = spectral_analysis(assemble_dense(ATT, straight_line(), fan, g), g)
    assert rep.null_dim == 0
    assert np.all(np.diff(rep.singular_values) <= 0) and rep.singular_values[-1] > 0
    c = stability_constant(rep)
    assert np.isfinite(c) and c == pytest.approx(1.0 / rep.sigma_min_solenoidal)
    assert rep.to_dict()["C_discrete"] == c


def test_constant_weight_is_degenerate(small):
    g, fan = small
    rep = spectral_analysis(assemble_dense(Weight.constant(1.0), straight_line(), fan, g), g)
    with pytest.raises(Degenerate) as info:
        stability_constant(rep)
    assert info.value.sigma_min <= rep.rank_tol * info.value.sigma_max
    assert rep.null_dim >= g.n_dof
    assert rep.null_dim_raw >= g.n_dof
    assert np.min(overlap(rep.null_basis, gauge_equivalent(g, scalar_family(g)))) > 0.999
    assert rep.to_dict()["C_discrete"] is None


@pytest.mark.xfail(strict=True, reason="exact gradients are null only to quadrature accuracy; see the decision ledger")
def test_constant_weight_raw_null_space_contains_gradients(small):
    g, fan = small
    rep = spectral_analysis(assemble_dense(Weight.constant(1.0), straight_line(), fan, g), g)
    print(f"raw null dim {rep.null_dim_raw}, want >= {2 * g.n_dof}")
    assert rep.null_dim_raw >= 2 * g.n_dof


def test_gradients_are_nearly_null_for_unit_weight(small):
    g, fan = small
    D = assemble_dense(Weight.constant(1.0), straight_line(), fan, g)
    G = gradient_family(g)
    B = np.sqrt(D.mu)[:, None] * D.A
    gains = np.linalg.norm(B @ G, axis=0) / np.linalg.norm(G, axis=0)
    top = np.linalg.norm(B, 2)
    assert np.max(gains) < 0.1 * top


def test_constructed_family_is_nearly_null():
    g = Grid(16)
    fan = make_fan(DOM, 64, 24)
    rep = spectral_analysis(assemble_dense(Weight.from_covector(H), straight_line(), fan, g), g)
    fam = gauge_equivalent(g, constructed_family(g, H))
    assert overlap(rep.least_vectors[:, :1], fam)[0] >= 0.99


def test_overlap_of_members_is_one(small):
    g, _ = small
    fam = gradient_family(g)
    assert overlap(fam[:, :3] @ np.array([1.0, -2.0, 0.5]), fam)[0] == pytest.approx(1.0)
    assert overlap(scalar_family(g)[:, :2], fam) == pytest.approx([0.0, 0.0], abs=1e-12)


def test_zero_sinogram_reconstructs_zero(small):
    g, fan = small
    res = reconstruct(Sinogram(np.zeros(fan.n_entries), fan), ATT, straight_line(), fan, g)
    assert res.converged and res.iterations == 0
    assert np.all(res.pair.to_vector() == 0.0)


def test_pure_potential_lands_in_the_scalar():
    g = Grid(32)
    fan = make_fan(DOM, 128, 48)
    psi = PolynomialBump(0.8, 3, center=(0.1, -0.05))
    p = Pair(CovectorField.from_function(g, GradientCovector(psi)), ScalarField.zeros(g))
    s = pair_forward(p, ATT, straight_line(), fan)
    res = reconstruct(s, ATT, straight_line(), fan, g, tol=1e-4, max_iter=400)
    exact = ScalarField.from_function(g, psi).dofs()
    assert res.pair.f.norm() <= 5e-2 * p.f.norm()
    assert np.linalg.norm(res.pair.phi.dofs() - exact) <= 5e-2 * np.linalg.norm(exact)


def test_data_residual_is_monotone_and_iterates_stay_solenoidal(small):
    g, fan = small
    p = Pair(random_smooth_covector(g, 0), ScalarField.zeros(g))
    s = pair_forward(p, ATT, magnetic(0.5), fan)
    res = reconstruct(s, ATT, magnetic(0.5), fan, g, tol=1e-8, max_iter=200, truth=p, raise_on_fail=False)
    assert np.all(np.diff(res.data_residuals) <= 1e-12)
    x = res.pair.to_vector()
    P = SolenoidalProjector(g)
    assert np.linalg.norm(P.project_pair(x) - x) <= 1e-10 * np.linalg.norm(x)
    assert np.max(np.abs(g.div_matrix @ res.pair.f.dofs())) <= 1e-10 * np.max(np.abs(x))
    assert res.error_f is not None and res.error_f < 0.2


def test_iteration_cap_raises(small):
    g, fan = small
    p = Pair(random_smooth_covector(g, 1), ScalarField.zeros(g))
    s = pair_forward(p, ATT, straight_line(), fan)
    with pytest.raises(NoConvergence):
        reconstruct(s, ATT, straight_line(), fan, g, tol=1e-12, max_iter=2)


def test_non_elliptic_weight_warns(small):
    g, fan = small
    s = Sinogram(np.zeros(fan.n_entries), fan)
    with pytest.warns(UserWarning, match="elliptic"):
        reconstruct(s, Weight.constant(1.0), straight_line(), fan, g)


def test_zero_perturbation_changes_nothing():
    g = Grid(10)
    fan = make_fan(DOM, 24, 8)
    rep = perturbation_study(lambda d: (magnetic(0.5 + d), ATT), [0.0], g, fan, n_curves=8)
    assert rep.norms[0] <= 1e-12
    assert rep.endpoint_deviation[0] == 0.0


def test_perturbation_rejects_negative_sizes():
    with pytest.raises(ValueError):
        perturbation_study(lambda d: (magnetic(0.5), ATT), [-1e-3], Grid(8), make_fan(DOM, 8, 4))


def test_derivative_sup_norms_of_a_quadratic():
    R = DOM.radius_M1
    sup = derivative_sup_norms(lambda x: x[:, 0] ** 2, DOM)
    assert sup[0] == pytest.approx(R**2, rel=1e-3)
    assert sup[1] == pytest.approx(2 * R, rel=1e-2)
    assert sup[2] == pytest.approx(2.0, rel=1e-8)
    assert sup[3] < 1e-6


@pytest.mark.xfail(strict=True, reason="the constructed weight is not degenerate at the rank threshold; see the decision ledger")
def test_dichotomy_of_canonical_weights():
    g = Grid(16)
    fan = make_fan(DOM, 64, 24)
    verdicts = {}
    for name, w in (("attenuated", ATT), ("constant", Weight.constant(1.0)), ("from_covector", Weight.from_covector(H))):
        rep = spectral_analysis(assemble_dense(w, straight_line(), fan, g), g)
        try:
            stability_constant(rep)
            verdicts[name] = False
        except Degenerate:
            verdicts[name] = True
    print(verdicts)
    assert verdicts == {"attenuated": False, "constant": True, "from_covector": True}
