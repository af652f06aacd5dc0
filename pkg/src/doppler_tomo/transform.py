"""The weighted Doppler transform of pairs, its adjoint and the normal operator.

For a pair ``[f, phi]`` and a curve ``gamma`` of the family, the transform is

    I[f, phi](gamma) = int ( w f_j gamma'^j + alpha phi ) dt,

with ``alpha = -G w`` unless a custom rule is attached to the weight.  The
discretization interpolates the fields bilinearly at RK4 states and applies
the composite trapezoid rule in ``t``.  The adjoint scatters with the same
stencil, weighted by the fan measure ``mu`` and divided by the cell area, so
that ``<I p, s>_mu = <p, I* s>_grid`` to rounding and ``N = I* I`` is
symmetric positive semidefinite.
"""

from __future__ import annotations

from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import NotMeasurePreserving, TooLarge
from .fields import CovectorField, Grid, Pair, ScalarField
from .geometry import CurveBundle, Fan, TraceConfig, _sunflower, rot90, trace_curves
from .weights import alpha_on_bundle, weight_at, weight_on_bundle

__all__ = [
    "Sinogram",
    "RayOperator",
    "get_operator",
    "trace_fan_parallel",
    "DiscreteOperator",
    "SymbolResult",
    "forward",
    "pair_forward",
    "adjoint",
    "normal",
    "assemble_dense",
    "principal_symbol",
    "SymbolSweep",
    "symbol_sweep",
    "write_sinogram_csv",
    "read_sinogram_csv",
]


@dataclass
class Sinogram:
    values: np.ndarray
    fan: Fan
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.fan.n_entries,):
            raise ValueError("sinogram length must equal the number of fan entries")

    def norm(self):
        """``L^2`` norm with respect to the fan measure."""
        return float(np.sqrt(np.sum(self.fan.mu * self.values**2)))


def _concat_bundles(parts):
    shift = 0
    out = {k: [] for k in ("t", "x", "v", "curve_id", "entry_x", "entry_v", "exit_time", "trapped", "on_boundary")}
    offsets = [np.array([0])]
    base = 0
    for b in parts:
        for k in ("t", "x", "v", "entry_x", "entry_v", "exit_time", "trapped", "on_boundary"):
            out[k].append(getattr(b, k))
        out["curve_id"].append(b.curve_id + shift)
        offsets.append(b.offsets[1:] + base)
        shift += b.n_curves
        base += b.t.size
    return CurveBundle(
        **{k: np.concatenate(v) for k, v in out.items()},
        offsets=np.concatenate(offsets),
    )


def trace_fan_parallel(gen, dom, fan, cfg=None, threads=1):
    """Trace every fan entry; chunks run in threads and merge in index order."""
    v0 = gen.initial_velocity(fan.points, fan.dirs)
    if threads <= 1:
        return trace_curves(gen, dom, fan.points, v0, cfg)
    chunks = np.array_split(np.arange(fan.n_entries), threads)
    with ThreadPoolExecutor(max_workers=threads) as ex:
        parts = list(ex.map(lambda c: trace_curves(gen, dom, fan.points[c], v0[c], cfg), chunks))
    return _concat_bundles(parts)


class RayOperator:
    """Discretized pair transform for one ``(generator, weight, fan, grid)``.

    Tracing, weights and interpolation stencils are computed once at
    construction.  :meth:`apply` evaluates the transform by interpolating the
    fields at curve states; :attr:`matrix` is the same map assembled as a
    sparse matrix by stencil accumulation.
    """

    def __init__(self, gen, weight, fan, grid, cfg=None, threads=1):
        self.gen, self.weight, self.fan, self.grid = gen, weight, fan, grid
        self.cfg = cfg or TraceConfig()
        dom = grid.domain
        h = self.cfg.step_for(dom)
        b = trace_fan_parallel(gen, dom, fan, self.cfg, threads)
        w = weight_on_bundle(weight, b, dom)
        alpha = alpha_on_bundle(weight, b, dom, weights=w)
        q = b.trapezoid_weights(min_length=2.0 * h)
        stencils = [grid.edge_dof_stencil(b.x, 0), grid.edge_dof_stencil(b.x, 1), grid.dof_stencil(b.x)]
        # states whose stencils touch no unknown contribute nothing
        touch = np.zeros(q.shape, dtype=bool)
        for d, _ in stencils:
            touch |= np.any(d >= 0, axis=1)
        keep = (q != 0.0) & touch
        self.bundle = b
        self.curve = b.curve_id[keep]
        self.q = q[keep]
        self.w = w[keep]
        self.alpha = alpha[keep]
        self.v = b.v[keep]
        self.stencils = [(d[keep], bw[keep]) for d, bw in stencils]
        m1, m2 = grid.n_edge_dofs
        self.sizes = (m1, m2, grid.n_dof)
        self.offsets = (0, m1, m1 + m2, m1 + m2 + grid.n_dof)
        self._matrix = None

    @property
    def shape(self):
        return (self.fan.n_entries, self.offsets[-1])

    def _coefs(self):
        return (self.w * self.v[:, 0], self.w * self.v[:, 1], self.alpha)

    def apply(self, pvec):
        """Pair vector ``[f1 edges, f2 edges, phi nodes]`` -> sinogram values."""
        pvec = np.asarray(pvec, dtype=float)
        integrand = np.zeros(self.q.shape)
        for k, ((d, bw), coef) in enumerate(zip(self.stencils, self._coefs())):
            u = pvec[self.offsets[k] : self.offsets[k + 1]]
            integrand += coef * np.sum(np.where(d >= 0, u[np.maximum(d, 0)], 0.0) * bw, axis=1)
        return np.bincount(self.curve, weights=self.q * integrand, minlength=self.fan.n_entries)

    def adjoint(self, s):
        """Measure-weighted transpose, divided by the cell area."""
        c = self.q * np.asarray(s, dtype=float)[self.curve] * self.fan.mu[self.curve] / self.grid.cell_area
        out = np.empty(self.offsets[-1])
        for k, ((d, bw), coef) in enumerate(zip(self.stencils, self._coefs())):
            valid = d >= 0
            contrib = ((c * coef)[:, None] * bw)[valid]
            out[self.offsets[k] : self.offsets[k + 1]] = np.bincount(d[valid], weights=contrib, minlength=self.sizes[k])
        return out

    def normal(self, pvec):
        return self.adjoint(self.apply(pvec))

    @property
    def matrix(self):
        """Sparse ``A`` with ``A @ p == apply(p)``, built by stencil accumulation."""
        if self._matrix is None:
            R, C, V = [], [], []
            for k, ((d, bw), coef) in enumerate(zip(self.stencils, self._coefs())):
                valid = d >= 0
                R.append(np.broadcast_to(self.curve[:, None], d.shape)[valid])
                C.append(d[valid] + self.offsets[k])
                V.append(((self.q * coef)[:, None] * bw)[valid])
            A = sp.csr_matrix((np.concatenate(V), (np.concatenate(R), np.concatenate(C))), shape=self.shape)
            A.eliminate_zeros()
            self._matrix = A
        return self._matrix

    def normal_matrix(self):
        """Sparse ``A^T M A / area``."""
        A = self.matrix
        return ((A.T @ sp.diags(self.fan.mu) @ A) / self.grid.cell_area).tocsr()


_CACHE: "OrderedDict" = OrderedDict()


def get_operator(gen, weight, fan, grid, cfg=None, threads=1):
    """Cached :class:`RayOperator` keyed by object identity of the inputs."""
    cfg = cfg or TraceConfig()
    key = (id(gen), id(weight), id(fan), grid, cfg)
    hit = _CACHE.get(key)
    if hit is not None and hit[0] is gen and hit[1] is weight and hit[2] is fan:
        _CACHE.move_to_end(key)
        return hit[3]
    op = RayOperator(gen, weight, fan, grid, cfg, threads)
    _CACHE[key] = (gen, weight, fan, op)
    while len(_CACHE) > 6:
        _CACHE.popitem(last=False)
    return op


def _provenance(op):
    return {
        "generator": op.gen.kind,
        "weight": op.weight.kind,
        "grid_n": op.grid.n,
        "fan": [op.fan.n_points, op.fan.n_dirs],
        "step": op.cfg.step_for(op.grid.domain),
    }


def forward(f, w, gen, fan, cfg=None):
    """``I_w f`` for a covector field on the grid."""
    op = get_operator(gen, w, fan, f.grid, cfg)
    vec = np.concatenate([f.dofs(), np.zeros(f.grid.n_dof)])
    return Sinogram(op.apply(vec), fan, _provenance(op))


def pair_forward(p, w, gen, fan, cfg=None):
    """``I[f, phi]`` including the ``alpha phi`` term."""
    op = get_operator(gen, w, fan, p.grid, cfg)
    return Sinogram(op.apply(p.to_vector()), fan, _provenance(op))


def adjoint(s, w, gen, fan, grid, cfg=None):
    if s.fan is not fan and s.values.shape[0] != fan.n_entries:
        raise ValueError("sinogram does not belong to this fan")
    op = get_operator(gen, w, fan, grid, cfg)
    return Pair.from_vector(grid, op.adjoint(s.values))


def normal(p, w, gen, fan, cfg=None):
    """``N p = I* I p`` (matrix-free)."""
    op = get_operator(gen, w, fan, p.grid, cfg)
    return Pair.from_vector(p.grid, op.normal(p.to_vector()))


@dataclass
class DiscreteOperator:
    """Dense matrix of the pair transform with the fan measure.

    Columns are ordered ``f1`` block (x-edges), ``f2`` block (y-edges) and
    ``phi`` block (interior nodes) of ``grid``.
    """

    A: np.ndarray
    mu: np.ndarray
    grid: Grid
    fan: Fan = None
    meta: dict = field(default_factory=dict)

    def apply(self, pvec):
        return self.A @ pvec

    def normal_matrix(self):
        return (self.A.T * self.mu) @ self.A / self.grid.cell_area

    def blocks(self):
        """``N11`` (covector block), ``N10``, ``N01``, ``N00`` of the normal matrix."""
        N = self.normal_matrix()
        m2 = self.grid.n_f
        return {"N11": N[:m2, :m2], "N10": N[:m2, m2:], "N01": N[m2:, :m2], "N00": N[m2:, m2:]}


def assemble_dense(w, gen, fan, grid, cfg=None, dense_limit=4000, method="stencil"):
    """Explicit matrix of the pair transform.

    ``method="stencil"`` densifies the accumulated sparse matrix;
    ``"probe"`` applies the interpolating forward map to unit vectors.
    """
    n = grid.n_pair
    if n > dense_limit:
        raise TooLarge(f"{n} pair unknowns exceed dense_limit={dense_limit}")
    op = get_operator(gen, w, fan, grid, cfg)
    if method == "stencil":
        A = op.matrix.toarray()
    elif method == "probe":
        A = np.empty(op.shape)
        e = np.zeros(n)
        for j in range(n):
            e[j] = 1.0
            A[:, j] = op.apply(e)
            e[j] = 0.0
    else:
        raise ValueError(f"unknown method {method!r}")
    return DiscreteOperator(A=A, mu=fan.mu.copy(), grid=grid, fan=fan, meta=_provenance(op))


@dataclass
class SymbolResult:
    matrix: np.ndarray
    restricted: np.ndarray
    min_restricted_eig: np.ndarray

    def to_dict(self):
        return {
            "min_restricted_eig": np.asarray(self.min_restricted_eig).tolist(),
            "matrix": np.asarray(self.matrix).tolist(),
        }


def principal_symbol(x, xi, w, gen, dom, cfg=None):
    """Quadratic form of the principal symbol of ``N`` at ``(x, xi)`` in 2D.

    Sums ``v v^T`` over the two unit directions orthogonal to ``xi`` with
    ``v = (lambda w theta^1, lambda w theta^2, alpha)`` evaluated at
    ``(x, lambda theta)``, and restricts to ``{f . xi = 0} + R phi``.
    Accepts single points or arrays of shape ``(k, 2)``.
    """
    if not gen.measure_preserving:
        raise NotMeasurePreserving("principal symbol needs a measure-preserving flow (unit Jacobian factor)")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    x, xi = np.broadcast_arrays(x, xi)
    nxi = np.linalg.norm(xi, axis=1)
    if np.any(nxi == 0):
        raise ValueError("xi must be nonzero")
    tp = rot90(xi) / nxi[:, None]
    S = np.zeros((x.shape[0], 3, 3))
    us = []
    for th in (tp, -tp):
        wv, glog = weight_at(w, gen, dom, x, th, cfg)
        lam = gen.lam(x, th)
        if w.alpha_rule is not None:
            alpha = np.asarray(w.alpha_rule(x, lam[:, None] * th), dtype=float)
        else:
            alpha = -wv * glog
        v = np.column_stack([lam * wv * th[:, 0], lam * wv * th[:, 1], alpha])
        S += v[:, :, None] * v[:, None, :]
        us.append(v)
    Q = np.zeros((x.shape[0], 3, 2))
    Q[:, :2, 0] = tp
    Q[:, 2, 1] = 1.0
    R = np.einsum("kai,kab,kbj->kij", Q, S, Q)
    ev = np.linalg.eigvalsh(R)[:, 0]
    return SymbolResult(matrix=S, restricted=R, min_restricted_eig=ev)


@dataclass
class SymbolSweep:
    """Outcome of :func:`symbol_sweep`; margins are relative to the largest symbol entry."""

    min_eig: float
    relative_margin: float
    argmin: dict
    verdict: str
    threshold: float

    @property
    def passed(self):
        return self.verdict == "pass"

    def to_dict(self):
        return {
            "min_restricted_eig": self.min_eig,
            "relative_margin": self.relative_margin,
            "argmin": self.argmin,
            "verdict": self.verdict,
            "threshold": self.threshold,
        }


def symbol_sweep(w, gen, dom, n_x=20, n_xi=20, radius=0.9, threshold=1e-8, cfg=None):
    """Evaluate :func:`principal_symbol` on an ``n_x`` by ``n_xi`` grid of samples.

    Points follow a sunflower pattern in the disk of relative ``radius``;
    covector directions are ``pi k / n_xi``.  The verdict is ``"pass"`` when
    the smallest restricted eigenvalue exceeds ``threshold`` times the largest
    symbol entry over the sweep.
    """
    xs = dom.c + _sunflower(n_x, radius * dom.radius_M)
    ang = np.pi * np.arange(n_xi) / n_xi
    X = np.repeat(xs, n_xi, axis=0)
    XI = np.tile(np.column_stack([np.cos(ang), np.sin(ang)]), (n_x, 1))
    res = principal_symbol(X, XI, w, gen, dom, cfg)
    ev = res.min_restricted_eig
    scale = float(np.max(np.abs(res.matrix)))
    i = int(np.argmin(ev))
    rel = float(ev[i] / scale) if scale > 0 else 0.0
    return SymbolSweep(
        min_eig=float(ev[i]),
        relative_margin=rel,
        argmin={"x": X[i].tolist(), "xi": XI[i].tolist()},
        verdict="pass" if rel > threshold else "fail",
        threshold=threshold,
    )


def write_sinogram_csv(s, path):
    fan = s.fan
    lines = ["entry_index,bx,by,thx,thy,mu,value"]
    for i in range(fan.n_entries):
        vals = (*fan.points[i], *fan.dirs[i], fan.mu[i], s.values[i])
        lines.append(",".join([str(i)] + [repr(float(z)) for z in vals]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_sinogram_csv(path, fan=None):
    """Read a sinogram; the fan is rebuilt from the file unless one is given."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    data = data[np.argsort(data[:, 0], kind="stable")]
    if fan is None:
        fan = Fan(points=data[:, 1:3].copy(), dirs=data[:, 3:5].copy(), mu=data[:, 5].copy(), n_points=-1, n_dirs=-1)
    elif fan.n_entries != data.shape[0]:
        raise ValueError("sinogram file does not match the fan")
    return Sinogram(data[:, 6].copy(), fan, {"source": str(path)})
