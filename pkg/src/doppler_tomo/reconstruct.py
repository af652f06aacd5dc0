"""Null-space analysis, discrete stability constants, reconstruction and perturbations.

The discrete unknowns are pairs ``[f, phi]`` on interior nodes.  The
solenoidal-pair subspace is ``{D f = 0}`` with ``phi`` free, where ``D`` is
the discrete divergence of :mod:`doppler_tomo.fields`.  Singular values are
those of the map ``p -> I p`` from the grid ``L^2`` inner product to the
fan-measure ``L^2`` inner product, so that their squares are the eigenvalues
of ``N``.  The stability constant ``1 / sigma_min`` is an ``L^2`` surrogate:
the natural continuous estimate bounds ``f^s`` and ``phi`` by ``N`` in a
Sobolev norm, which a grid-level SVD does not see.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl
import scipy.sparse as sp

from ._linalg import power_norm
from .exceptions import Degenerate, NoConvergence, TooLarge
from .fields import CovectorField, Pair, ScalarField, SolenoidalProjector
from .geometry import TraceConfig, _sunflower, trace_curves
from .transform import RayOperator, get_operator
from .weights import elliptic_margin

__all__ = [
    "SpectralReport",
    "spectral_analysis",
    "stability_constant",
    "solenoidal_basis",
    "gradient_family",
    "scalar_family",
    "constructed_family",
    "gauge_equivalent",
    "overlap",
    "ReconstructionResult",
    "solenoidal_truth",
    "reconstruct",
    "PerturbationReport",
    "perturbation_study",
    "derivative_sup_norms",
    "L2_SURROGATE_NOTE",
]

log = logging.getLogger(__name__)

L2_SURROGATE_NOTE = (
    "C_discrete = 1/sigma_min on solenoidal pairs in the grid L2 norm; "
    "this is a discrete L2 surrogate for the Sobolev-norm stability estimate"
)


# ---- subspaces and families ---------------------------------------------------


def solenoidal_basis(grid):
    """Orthonormal basis (columns) of ``{D f = 0} + R^m phi`` in pair coordinates."""
    D = grid.div_matrix.toarray()
    return sl.block_diag(sl.null_space(D), np.eye(grid.n_dof))


def gradient_family(grid):
    """Columns ``[d psi, 0]`` for unit ``psi`` at each interior node."""
    m = grid.n_dof
    return np.vstack([grid.grad_matrix.toarray(), np.zeros((m, m))])


def scalar_family(grid):
    """Columns ``[0, phi]``."""
    m = grid.n_dof
    return np.vstack([np.zeros((grid.n_f, m)), np.eye(m)])


def constructed_family(grid, h):
    """Columns ``[psi h + d psi, 0]`` for unit ``psi`` at each interior node."""
    m = grid.n_dof
    # psi h on each edge: end-node average of psi times h at the midpoint
    hv = np.concatenate([np.asarray(h(grid.edge_dof_points(a)), dtype=float)[:, a] for a in (0, 1)])
    H = (sp.diags(hv) @ grid.average_matrix).toarray()
    return np.vstack([H + grid.grad_matrix.toarray(), np.zeros((m, m))])


def gauge_equivalent(grid, family, projector=None):
    """Map raw pairs ``[f, phi]`` to the solenoidal pairs ``[f_s, phi + chi]``
    with ``f = f_s + d chi``; both have the same transform up to quadrature."""
    P = projector or SolenoidalProjector(grid)
    m2 = grid.n_f
    out = np.empty_like(family, dtype=float)
    for j in range(family.shape[1]):
        fs, chi = P.split(family[:m2, j])
        out[:m2, j] = fs
        out[m2:, j] = family[m2:, j] + chi
    return out


def overlap(vectors, family, rcond=1e-10):
    """``|P_F v| / |v|`` for every column ``v``, with ``P_F`` the orthogonal
    projector onto the column span of ``family``."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float).T).T
    if vectors.shape[1] == 0:
        return np.zeros(0)
    Qf = sl.orth(np.asarray(family, dtype=float), rcond=rcond)
    num = np.linalg.norm(Qf.T @ vectors, axis=0)
    return num / np.linalg.norm(vectors, axis=0)


# ---- spectra ------------------------------------------------------------------


@dataclass
class SpectralReport:
    """Singular values (descending) on solenoidal pairs and on raw pairs.

    ``null_basis`` holds solenoidal pair vectors (columns) whose singular
    value is at most ``rank_tol * sigma_max``; ``least_vectors`` holds the
    right singular vectors of the ``n_least`` smallest singular values
    regardless of threshold.
    """

    singular_values: np.ndarray
    singular_values_raw: np.ndarray
    null_dim: int
    null_dim_raw: int
    null_basis: np.ndarray
    null_basis_raw: np.ndarray
    least_vectors: np.ndarray
    rank_tol: float
    meta: dict = field(default_factory=dict)

    @property
    def sigma_max(self):
        return float(self.singular_values[0])

    @property
    def sigma_min_solenoidal(self):
        return float(self.singular_values[-1])

    @property
    def sigma_min_raw(self):
        return float(self.singular_values_raw[-1])

    def to_dict(self):
        try:
            c = stability_constant(self)
        except Degenerate:
            c = None
        return {
            "singular_values": self.singular_values.tolist(),
            "singular_values_raw": self.singular_values_raw.tolist(),
            "null_dim": self.null_dim,
            "null_dim_raw": self.null_dim_raw,
            "rank_tol": self.rank_tol,
            "sigma_max": self.sigma_max,
            "sigma_min_solenoidal": self.sigma_min_solenoidal,
            "sigma_min_raw": self.sigma_min_raw,
            "C_discrete": c,
            "note": L2_SURROGATE_NOTE,
            **self.meta,
        }


def spectral_analysis(op, grid=None, rank_tol=1e-8, n_least=8, dense_limit=4000):
    """SVD of the dense pair transform on raw and solenoidal pairs.

    ``op`` is a :class:`~doppler_tomo.transform.DiscreteOperator`.
    """
    grid = grid or op.grid
    m = grid.n_dof
    if grid.n_pair > dense_limit:
        raise TooLarge(f"{grid.n_pair} pair unknowns exceed dense_limit={dense_limit}")
    if op.A.shape[1] != grid.n_pair:
        raise ValueError("operator does not match the grid")
    B = np.sqrt(op.mu)[:, None] * op.A / grid.spacing
    _, s_raw, vt_raw = sl.svd(B, full_matrices=False)
    Q = solenoidal_basis(grid)
    _, s, vt = sl.svd(B @ Q, full_matrices=False)
    s_raw, s = np.maximum(s_raw, 0.0), np.maximum(s, 0.0)
    # fewer rows than unknowns leaves an exact null space the thin SVD omits
    vt_raw = _complete(vt_raw, B)
    vt = _complete(vt, B @ Q)
    s_raw = np.concatenate([s_raw, np.zeros(vt_raw.shape[0] - s_raw.size)])
    s = np.concatenate([s, np.zeros(vt.shape[0] - s.size)])
    cut, cut_raw = rank_tol * s[0], rank_tol * s_raw[0]
    null = s <= cut
    null_raw = s_raw <= cut_raw
    k = min(n_least, s.size)
    return SpectralReport(
        singular_values=s,
        singular_values_raw=s_raw,
        null_dim=int(null.sum()),
        null_dim_raw=int(null_raw.sum()),
        null_basis=Q @ vt[null].T,
        null_basis_raw=vt_raw[null_raw].T,
        least_vectors=Q @ vt[-k:][::-1].T,
        rank_tol=rank_tol,
        meta={"grid_n": grid.n, "n_dof": m, "n_entries": int(op.A.shape[0])},
    )


def _complete(vt, B):
    n = B.shape[1]
    if vt.shape[0] == n:
        return vt
    extra = sl.null_space(vt).T if vt.shape[0] else np.eye(n)
    return np.vstack([vt, extra[: n - vt.shape[0]]])


def stability_constant(report):
    """``1 / sigma_min`` on solenoidal pairs (grid ``L^2`` surrogate)."""
    smin, smax = report.sigma_min_solenoidal, report.sigma_max
    if smin <= report.rank_tol * smax:
        raise Degenerate(
            f"sigma_min={smin:.3e} <= {report.rank_tol:.0e} * sigma_max={smax:.3e}",
            sigma_min=smin,
            sigma_max=smax,
        )
    return 1.0 / smin


# ---- reconstruction -----------------------------------------------------------


@dataclass
class ReconstructionResult:
    pair: Pair
    iterations: int
    residual: float
    converged: bool
    residuals: list
    data_residuals: list
    error_f: float = None
    error_phi: float = None

    @property
    def f_s(self):
        return self.pair.f

    @property
    def phi(self):
        return self.pair.phi

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "final_residual": self.residual,
            "converged": self.converged,
            "errors": {"f_s": self.error_f, "phi": self.error_phi},
            "residuals": list(self.residuals),
            "data_residuals": list(self.data_residuals),
        }


def solenoidal_truth(p, projector=None):
    """The solenoidal pair gauge-equivalent to ``p``: ``[f_s, phi + chi]``."""
    g = p.grid
    P = projector or SolenoidalProjector(g)
    fs, chi = P.split(p.f.dofs())
    return Pair(CovectorField.from_dofs(g, fs), ScalarField.from_dofs(g, p.phi.dofs() + chi))


def _rel(a, b):
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / nb) if nb > 0 else float(np.linalg.norm(a))


def reconstruct(
    s,
    w,
    gen,
    fan,
    grid,
    tol=1e-6,
    max_iter=500,
    truth=None,
    cfg=None,
    check_elliptic=True,
    raise_on_fail=True,
):
    """Recover the solenoidal pair ``[f^s, phi]`` from a sinogram.

    Solves ``N p = I* s`` over solenoidal pairs with conjugate gradients in
    least-squares form: every search direction is projected onto
    ``{D f = 0}``, and the iteration stops when the projected normal residual
    drops below ``tol`` relative to its initial value.  ``truth`` may be a
    :class:`Pair`; errors are measured against its solenoidal gauge
    representative.
    """
    if check_elliptic:
        rep = elliptic_margin(w, gen, grid.domain)
        if not rep.passed:
            warnings.warn(f"weight fails the elliptic check ({rep.message}); reconstructing anyway", stacklevel=2)
    op = get_operator(gen, w, fan, grid, cfg)
    P = SolenoidalProjector(grid)
    area = grid.cell_area
    mu = fan.mu
    data = np.asarray(s.values if hasattr(s, "values") else s, dtype=float)

    def proj(v):
        return P.project_pair(v)

    x = np.zeros(grid.n_pair)
    r = data.copy()
    z = proj(op.adjoint(r))
    d = z.copy()
    gamma = area * (z @ z)
    z0 = np.sqrt(gamma)
    s_norm = np.sqrt(np.sum(mu * data**2))
    residuals = [1.0 if z0 > 0 else 0.0]
    data_res = [1.0 if s_norm > 0 else 0.0]
    converged = z0 == 0.0
    it = 0
    while not converged and it < max_iter:
        q = op.apply(d)
        qq = np.sum(mu * q * q)
        if qq <= 0.0:
            break
        a = gamma / qq
        x += a * d
        r -= a * q
        z = proj(op.adjoint(r))
        gamma_new = area * (z @ z)
        d = z + (gamma_new / gamma) * d
        gamma = gamma_new
        it += 1
        residuals.append(float(np.sqrt(gamma) / z0))
        data_res.append(float(np.sqrt(np.sum(mu * r * r)) / s_norm))
        converged = residuals[-1] <= tol
    if not converged and raise_on_fail:
        raise NoConvergence(f"projected CG reached {it} iterations at relative residual {residuals[-1]:.3e}")
    x = proj(x)
    pair = Pair.from_vector(grid, x)
    res = ReconstructionResult(
        pair=pair,
        iterations=it,
        residual=residuals[-1],
        converged=converged,
        residuals=residuals,
        data_residuals=data_res,
    )
    if truth is not None:
        t = solenoidal_truth(truth, P)
        res.error_f = _rel(pair.f.dofs(), t.f.dofs())
        res.error_phi = _rel(pair.phi.dofs(), t.phi.dofs())
    log.info("reconstruct: %d iterations, residual %.3e", it, res.residual)
    return res


# ---- perturbations ------------------------------------------------------------


def derivative_sup_norms(fn, dom, n=161):
    """Sup norms of ``fn`` and its first three derivative tensors over the
    outer disk, by finite differences on an ``n x n`` sampling."""
    R = dom.radius_M1
    xs = np.linspace(-R, R, n)
    hx = xs[1] - xs[0]
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()]) + np.asarray(dom.center, dtype=float)
    inside = (X**2 + Y**2 <= R**2)
    out = []
    level = [np.asarray(fn(pts), dtype=float).reshape(n, n)]
    for k in range(4):
        out.append(float(max(np.max(np.abs(u[inside])) for u in level)))
        if k < 3:
            level = [g for u in level for g in np.gradient(u, hx, edge_order=2)]
    return out


@dataclass
class PerturbationReport:
    kind: str
    deltas: list
    norms: list
    ratios: list
    endpoint_deviation: list
    endpoint_ratios: list
    direction_sup_norms: list

    def table(self):
        return [
            {"delta": d, "norm_diff": n, "ratio": r, "endpoint_deviation": e, "endpoint_ratio": er}
            for d, n, r, e, er in zip(self.deltas, self.norms, self.ratios, self.endpoint_deviation, self.endpoint_ratios)
        ]

    def to_dict(self):
        return {
            "kind": self.kind,
            "perturbation_table": self.table(),
            "direction_sup_norms_C0_to_C3": self.direction_sup_norms,
        }


def perturbation_study(
    make_system,
    deltas,
    grid,
    fan,
    direction=None,
    kind="custom",
    cfg=None,
    n_curves=64,
    n_iter=300,
    seed=0,
):
    """Estimate ``||N - N~||_2`` for systems perturbed by ``delta``.

    ``make_system(delta)`` returns ``(generator, weight)``; ``delta = 0`` is
    the base system.  The operator norm of the difference is found by power
    iteration on the (symmetric) difference of the two normal matrices.
    Curves through a sunflower sample of ``M`` are also traced with both
    generators and their exit points compared.
    """
    cfg = cfg or TraceConfig()
    deltas = [float(d) for d in deltas]
    if any(d < 0 for d in deltas):
        raise ValueError("perturbation sizes must be nonnegative")
    dom = grid.domain
    gen0, w0 = make_system(0.0)
    base = RayOperator(gen0, w0, fan, grid, cfg)
    N0 = base.normal_matrix()
    pts = _sunflower(n_curves, dom.radius_M) + np.asarray(dom.center, dtype=float)
    ang = np.pi * (np.sqrt(5.0) - 1.0) * np.arange(n_curves)
    th = np.column_stack([np.cos(ang), np.sin(ang)])
    ends0 = _endpoints(gen0, dom, pts, th, cfg)
    norms, ratios, dev, dev_ratios = [], [], [], []
    for d in deltas:
        gen, w = make_system(d)
        Nd = RayOperator(gen, w, fan, grid, cfg).normal_matrix()
        E = (N0 - Nd).tocsr()
        nrm = power_norm(lambda u: E @ u, E.shape[0], n_iter=n_iter, tol=1e-9, seed=seed) if E.nnz else 0.0
        e = float(np.max(np.linalg.norm(_endpoints(gen, dom, pts, th, cfg) - ends0, axis=1)))
        norms.append(nrm)
        ratios.append(nrm / d if d > 0 else None)
        dev.append(e)
        dev_ratios.append(e / d if d > 0 else None)
    sup = derivative_sup_norms(direction, dom) if direction is not None else None
    return PerturbationReport(kind, deltas, norms, ratios, dev, dev_ratios, sup)


def _endpoints(gen, dom, pts, th, cfg):
    b = trace_curves(gen, dom, pts, gen.initial_velocity(pts, th), cfg)
    return b.x[b.last_index()]
