"""Domains, curve generators, RK4 curve tracing and the inflow fan.

Curves solve ``x'' = G(x, x')`` and start on the outer circle with velocity
``lambda(x, theta) * theta``.  Tracing is a fixed-step classical RK4 with a
bisection refinement of the exit point; all tracing routines are vectorized
over many starting states at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import NonTermination, StepFailure
from .functions import ConstantFunction

__all__ = [
    "Domain",
    "CurveGenerator",
    "straight_line",
    "magnetic",
    "conformal_geodesic",
    "TraceConfig",
    "Curve",
    "CurveBundle",
    "trace_curves",
    "trace_curve",
    "flow",
    "Fan",
    "make_fan",
    "trace_fan",
    "SimplicityReport",
    "simplicity_report",
    "inflow_preimage",
    "reversal_distance",
]


def rot90(v):
    """Rotate vectors of shape ``(..., 2)`` by +90 degrees."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


@dataclass(frozen=True)
class Domain:
    """Target disk ``M`` nested strictly inside the tracing disk ``M1``."""

    radius_M: float = 1.0
    radius_M1: float = 1.25
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not 0.0 < self.radius_M < self.radius_M1:
            raise ValueError(
                f"need 0 < radius_M < radius_M1, got {self.radius_M}, {self.radius_M1}"
            )

    @property
    def c(self):
        return np.asarray(self.center, dtype=float)

    @property
    def diameter(self):
        return 2.0 * self.radius_M1

    def radius_of(self, x):
        return np.linalg.norm(np.asarray(x, dtype=float) - self.c, axis=-1)

    def outer_normal(self, x):
        d = np.asarray(x, dtype=float) - self.c
        return d / np.linalg.norm(d, axis=-1, keepdims=True)


@dataclass(frozen=True)
class CurveGenerator:
    """Second-order generator ``G`` together with the speed rule ``lambda``.

    ``accel(x, v)`` returns ``G(x, v)`` for arrays of shape ``(k, 2)``;
    ``lam(x, theta)`` returns the positive speed for unit directions.
    """

    kind: str
    accel: Callable
    lam: Callable
    measure_preserving: bool = True
    params: dict = field(default_factory=dict, compare=False)

    def speed(self, x, theta):
        """``lambda`` extended to non-unit vectors by homogeneity of order -1."""
        theta = np.asarray(theta, dtype=float)
        n = np.linalg.norm(theta, axis=-1)
        return self.lam(x, theta / n[..., None]) / n

    def initial_velocity(self, x, theta):
        theta = np.asarray(theta, dtype=float)
        return self.speed(x, theta)[..., None] * theta

    def reversed(self):
        """Generator of the time-reversed curves ``s -> gamma(-s)``."""
        accel, lam = self.accel, self.lam
        return CurveGenerator(
            kind=self.kind,
            accel=lambda x, v: accel(x, -v),
            lam=lambda x, th: lam(x, -th),
            measure_preserving=self.measure_preserving,
            params=self.params,
        )


def _unit_speed(x, theta):
    return np.ones(np.shape(theta)[0])


def straight_line(lam=None):
    """``G = 0``; default constant unit speed."""
    return CurveGenerator(
        kind="straight",
        accel=lambda x, v: np.zeros_like(v),
        lam=lam or _unit_speed,
        params={},
    )


def magnetic(b=1.0, lam=None):
    """Magnetic flow ``G(x, v) = b(x) J v`` with ``J`` the +90 degree rotation."""
    bf = ConstantFunction(float(b)) if np.isscalar(b) else b

    def accel(x, v):
        return bf(x)[:, None] * rot90(v)

    return CurveGenerator(kind="magnetic", accel=accel, lam=lam or _unit_speed, params={"b": b})


def conformal_geodesic(q, eps=0.1):
    """Unit-speed geodesics of the metric ``c(x)^-2 |dx|^2`` with ``c = 1 + eps q``.

    ``q`` needs a ``grad`` method.  With the Euclidean reference metric the
    Euclidean speed of such a geodesic is ``c(x)``, so ``lambda = c``.
    """

    def c(x):
        return 1.0 + eps * q(x)

    def accel(x, v):
        cx = c(x)
        gc = eps * q.grad(x) / cx[:, None]
        vv = np.sum(v * v, axis=1)
        return 2.0 * np.sum(gc * v, axis=1)[:, None] * v - vv[:, None] * gc

    return CurveGenerator(
        kind="conformal",
        accel=accel,
        lam=lambda x, th: c(x),
        params={"q": q, "eps": eps},
    )


@dataclass(frozen=True)
class TraceConfig:
    """Numerical settings for tracing.  ``step=None`` means diameter/256."""

    step: Optional[float] = None
    boundary_tol: float = 1e-12
    max_length: float = 100.0
    tangent_tol: float = 1e-12
    reversal_tol: float = 1e-6

    def step_for(self, dom):
        return self.step if self.step is not None else dom.diameter / 256.0


@dataclass
class Curve:
    """One traced curve; states are ordered by time."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    entry: tuple
    exit_time: float
    trapped: bool = False

    @property
    def cumulative_length(self):
        seg = np.linalg.norm(np.diff(self.x, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def n_states(self):
        return self.t.shape[0]


@dataclass
class CurveBundle:
    """Many curves stored as concatenated states with ``offsets``."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    curve_id: np.ndarray
    offsets: np.ndarray
    entry_x: np.ndarray
    entry_v: np.ndarray
    exit_time: np.ndarray
    trapped: np.ndarray
    on_boundary: np.ndarray

    @property
    def n_curves(self):
        return self.offsets.shape[0] - 1

    def curve(self, i):
        s = slice(self.offsets[i], self.offsets[i + 1])
        v0 = self.entry_v[i]
        return Curve(
            t=self.t[s],
            x=self.x[s],
            v=self.v[s],
            entry=(self.entry_x[i], v0 / np.linalg.norm(v0)),
            exit_time=float(self.exit_time[i]),
            trapped=bool(self.trapped[i]),
        )

    def first_index(self):
        return self.offsets[:-1]

    def last_index(self):
        return self.offsets[1:] - 1

    def trapezoid_weights(self, min_length=0.0):
        """Composite trapezoid weights in ``t`` for every state.

        Curves whose parameter length is below ``min_length`` get zero weight.
        """
        dt = np.diff(self.t)
        same = self.curve_id[1:] == self.curve_id[:-1]
        dt = np.where(same, dt, 0.0)
        q = np.zeros_like(self.t)
        q[:-1] += 0.5 * dt
        q[1:] += 0.5 * dt
        if min_length > 0.0:
            dur = self.t[self.last_index()] - self.t[self.first_index()]
            q[np.abs(dur[self.curve_id]) < min_length] = 0.0
        return q

    def cumulative_trapezoid(self, values):
        """Per-curve cumulative trapezoid integral of ``values`` from the first state."""
        dt = np.diff(self.t)
        same = self.curve_id[1:] == self.curve_id[:-1]
        inc = np.where(same, 0.5 * (values[1:] + values[:-1]) * dt, 0.0)
        c = np.concatenate([[0.0], np.cumsum(inc)])
        return c - c[self.first_index()][self.curve_id]


def _rk4(accel, x, v, h):
    h = np.asarray(h, dtype=float)
    if h.ndim == 1:
        h = h[:, None]
    a1 = accel(x, v)
    x2, v2 = x + 0.5 * h * v, v + 0.5 * h * a1
    a2 = accel(x2, v2)
    x3, v3 = x + 0.5 * h * v2, v + 0.5 * h * a2
    a3 = accel(x3, v3)
    x4, v4 = x + h * v3, v + h * a3
    a4 = accel(x4, v4)
    xn = x + h / 6.0 * (v + 2.0 * v2 + 2.0 * v3 + v4)
    vn = v + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    if not (np.all(np.isfinite(xn)) and np.all(np.isfinite(vn))):
        raise StepFailure("non-finite state produced by the generator")
    return xn, vn


def _bisect_exit(accel, dom, x, v, h, lo, tol):
    """Find the step fraction at which each state crosses the outer circle."""
    c, R = dom.c, dom.radius_M1
    hi = np.full(x.shape[0], h)
    lo = lo.copy()
    best_s, best_x, best_v = hi.copy(), None, None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        xm, vm = _rk4(accel, x, v, mid)
        r = np.linalg.norm(xm - c, axis=1)
        outside = r > R
        hi = np.where(outside, mid, hi)
        lo = np.where(outside, lo, mid)
        done = np.abs(r - R) <= tol
        if best_x is None:
            best_x, best_v, best_err = xm.copy(), vm.copy(), np.abs(r - R)
            best_s = mid.copy()
        else:
            better = np.abs(r - R) < best_err
            best_x[better], best_v[better] = xm[better], vm[better]
            best_s[better], best_err[better] = mid[better], np.abs(r - R)[better]
        if np.all(done | (hi - lo <= 1e-18 * h)):
            break
    return best_s, best_x, best_v


def trace_curves(gen, dom, x0, v0, cfg=None, on_trap="raise"):
    """Trace curves with initial positions ``x0`` and velocities ``v0``.

    Each curve is integrated forward until it leaves the outer disk; the exit
    state is located by bisection on the last step.  A starting point on the
    outer circle whose velocity is not strictly inward gives a degenerate
    two-state curve with zero exit time.

    Parameters
    ----------
    gen : CurveGenerator
    dom : Domain
    x0, v0 : array_like, shape (k, 2)
    cfg : TraceConfig, optional
    on_trap : {"raise", "mark"}
        What to do when a curve exceeds ``cfg.max_length``.

    Returns
    -------
    CurveBundle
    """
    cfg = cfg or TraceConfig()
    h = cfg.step_for(dom)
    c, R = dom.c, dom.radius_M1
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    v0 = np.atleast_2d(np.asarray(v0, dtype=float))
    k = x0.shape[0]
    r0 = np.linalg.norm(x0 - c, axis=1)
    if np.any(r0 > R * (1.0 + 1e-9)):
        raise ValueError("starting points must lie in the closed outer disk")
    on_bnd = np.abs(r0 - R) <= 1e-9 * R
    nu = (x0 - c) / np.where(r0 > 0, r0, 1.0)[:, None]
    vhat = v0 / np.linalg.norm(v0, axis=1)[:, None]
    degenerate = on_bnd & (np.sum(nu * vhat, axis=1) >= -cfg.tangent_tol)

    rec_id, rec_t, rec_x, rec_v = [np.arange(k)], [np.zeros(k)], [x0], [v0]
    x, v = x0.copy(), v0.copy()
    t = np.zeros(k)
    length = np.zeros(k)
    exit_time = np.zeros(k)
    trapped = np.zeros(k, dtype=bool)
    active = ~degenerate
    nsteps = np.zeros(k, dtype=int)
    # degenerate curves get a duplicate end state so every curve has >= 2 states
    if degenerate.any():
        ids = np.flatnonzero(degenerate)
        rec_id.append(ids)
        rec_t.append(np.zeros(ids.size))
        rec_x.append(x0[ids])
        rec_v.append(v0[ids])

    while active.any():
        ids = np.flatnonzero(active)
        xi, vi = x[ids], v[ids]
        xn, vn = _rk4(gen.accel, xi, vi, h)
        rn = np.linalg.norm(xn - c, axis=1)
        out = rn > R
        inside = ~out
        if inside.any():
            j = ids[inside]
            length[j] += np.linalg.norm(xn[inside] - xi[inside], axis=1)
            x[j], v[j] = xn[inside], vn[inside]
            t[j] += h
            nsteps[j] += 1
            rec_id.append(j)
            rec_t.append(t[j].copy())
            rec_x.append(xn[inside])
            rec_v.append(vn[inside])
        if out.any():
            j = ids[out]
            lo = np.zeros(j.size)
            # first step from the boundary: need an interior lower bracket
            first = on_bnd[j] & (nsteps[j] == 0)
            if first.any():
                jf = np.flatnonzero(first)
                s = np.full(jf.size, 0.5 * h)
                found = np.zeros(jf.size, dtype=bool)
                for _ in range(60):
                    xs, _ = _rk4(gen.accel, x[j[jf]], v[j[jf]], s)
                    ok = np.linalg.norm(xs - c, axis=1) < R
                    lo[jf] = np.where(ok & ~found, s, lo[jf])
                    found |= ok
                    if found.all():
                        break
                    s = np.where(found, s, 0.5 * s)
            s, xe, ve = _bisect_exit(gen.accel, dom, x[j], v[j], h, lo, cfg.boundary_tol)
            exit_time[j] = t[j] + s
            rec_id.append(j)
            rec_t.append(exit_time[j].copy())
            rec_x.append(xe)
            rec_v.append(ve)
            active[j] = False
        over = active & (length > cfg.max_length)
        if over.any():
            if on_trap == "raise":
                i = int(np.flatnonzero(over)[0])
                raise NonTermination(
                    f"curve from {x0[i].tolist()} exceeded max_length={cfg.max_length}"
                )
            trapped |= over
            exit_time[over] = t[over]
            active &= ~over

    ids = np.concatenate(rec_id)
    order = np.argsort(ids, kind="stable")
    ids = ids[order]
    T = np.concatenate(rec_t)[order]
    Xs = np.concatenate(rec_x)[order]
    Vs = np.concatenate(rec_v)[order]
    # merge a sliver final step into the previous one
    counts = np.bincount(ids, minlength=k)
    last = np.cumsum(counts) - 1
    sliver = (counts >= 3) & ~trapped & (T[last] - T[np.maximum(last - 1, 0)] < 1e-2 * h)
    if sliver.any():
        keep = np.ones(T.size, dtype=bool)
        keep[last[sliver] - 1] = False
        ids, T, Xs, Vs = ids[keep], T[keep], Xs[keep], Vs[keep]
        counts = np.bincount(ids, minlength=k)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    return CurveBundle(
        t=T,
        x=Xs,
        v=Vs,
        curve_id=ids,
        offsets=offsets,
        entry_x=x0,
        entry_v=v0,
        exit_time=exit_time,
        trapped=trapped,
        on_boundary=on_bnd,
    )


def trace_curve(gen, dom, x, theta, cfg=None, direction="forward"):
    """Trace the curve through ``x`` with initial velocity ``lambda(x, theta) theta``.

    ``direction="backward"`` returns the part for negative times (traced with
    the time-reversed generator, reported in the original orientation) and
    ``"both"`` the maximal curve through ``x``.
    """
    x = np.asarray(x, dtype=float).reshape(1, 2)
    theta = np.asarray(theta, dtype=float).reshape(1, 2)
    theta = theta / np.linalg.norm(theta)
    v0 = gen.initial_velocity(x, theta)
    parts = []
    if direction in ("backward", "both"):
        b = trace_curves(gen.reversed(), dom, x, -v0, cfg).curve(0)
        parts.append(Curve(t=-b.t[::-1], x=b.x[::-1], v=-b.v[::-1], entry=None, exit_time=-b.exit_time))
    if direction in ("forward", "both"):
        parts.append(trace_curves(gen, dom, x, v0, cfg).curve(0))
    if direction not in ("forward", "backward", "both"):
        raise ValueError(f"unknown direction {direction!r}")
    if len(parts) == 1:
        cur = parts[0]
        if direction == "backward":
            cur.entry = (cur.x[0], cur.v[0] / np.linalg.norm(cur.v[0]))
        return cur
    b, f = parts
    cur = Curve(
        t=np.concatenate([b.t, f.t[1:]]),
        x=np.concatenate([b.x, f.x[1:]]),
        v=np.concatenate([b.v, f.v[1:]]),
        entry=(b.x[0], b.v[0] / np.linalg.norm(b.v[0])),
        exit_time=f.exit_time,
    )
    return cur


def flow(gen, x, v, t, step):
    """Integrate to the fixed times ``t`` (per sample) with at most ``step`` per step."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
    n = max(1, int(math.ceil(np.max(np.abs(t)) / step)))
    h = t / n
    for _ in range(n):
        x, v = _rk4(gen.accel, x, v, h)
    return x, v


@dataclass
class Fan:
    """Discretized inflow boundary with quadrature weights ``mu``."""

    points: np.ndarray
    dirs: np.ndarray
    mu: np.ndarray
    n_points: int
    n_dirs: int

    @property
    def n_entries(self):
        return self.points.shape[0]


def make_fan(dom, n_points, n_dirs):
    """Uniform boundary points times uniform open inflow half-circle of directions.

    The weight of an entry is ``<theta, -nu> * (2 pi R1 / n_points) * (pi / n_dirs)``.
    Entries are ordered point-major.
    """
    if n_points < 4 or n_dirs < 2:
        raise ValueError("make_fan needs n_points >= 4 and n_dirs >= 2")
    beta = 2.0 * np.pi * np.arange(n_points) / n_points
    nu = np.column_stack([np.cos(beta), np.sin(beta)])
    pts = dom.c + dom.radius_M1 * nu
    a = -0.5 * np.pi + (np.arange(n_dirs) + 0.5) * np.pi / n_dirs
    ca, sa = np.cos(a), np.sin(a)
    inward = -nu
    # rotate the inward normal by each offset angle
    dirs = np.stack(
        [
            inward[:, None, 0] * ca - inward[:, None, 1] * sa,
            inward[:, None, 0] * sa + inward[:, None, 1] * ca,
        ],
        axis=-1,
    ).reshape(-1, 2)
    P = np.repeat(pts, n_dirs, axis=0)
    ds = 2.0 * np.pi * dom.radius_M1 / n_points
    mu = np.tile(ca, n_points) * ds * (np.pi / n_dirs)
    return Fan(points=P, dirs=dirs, mu=mu, n_points=n_points, n_dirs=n_dirs)


def trace_fan(gen, dom, fan, cfg=None):
    v0 = gen.initial_velocity(fan.points, fan.dirs)
    return trace_curves(gen, dom, fan.points, v0, cfg)


@dataclass
class SimplicityReport:
    min_abs_scaled_det: float
    worst: dict
    n_samples: int
    n_trapped: int
    sign_change: bool
    threshold: float
    max_abs_scaled_det: float = float("nan")

    @property
    def simple(self):
        return self.n_trapped == 0 and not self.sign_change and self.min_abs_scaled_det > self.threshold

    def to_dict(self):
        return {
            "min_abs_scaled_det": self.min_abs_scaled_det,
            "max_abs_scaled_det": self.max_abs_scaled_det,
            "worst": self.worst,
            "n_samples": self.n_samples,
            "n_trapped": self.n_trapped,
            "sign_change": self.sign_change,
            "simple": self.simple,
            "threshold": self.threshold,
        }


def _sunflower(n, radius):
    k = np.arange(n) + 0.5
    r = radius * np.sqrt(k / n)
    phi = k * np.pi * (3.0 - np.sqrt(5.0))
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def simplicity_report(gen, dom, n_samples, cfg=None, n_dirs=16, n_times=8, threshold=1e-3):
    """Sweep the Jacobian of ``(t, angle) -> exp_x(t, theta(angle))`` over samples.

    Determinants come from central differences of traced positions and are
    divided by ``t`` to remove the polar degeneracy at the base point.  Trapped
    curves are reported (sampled up to twice the diameter), not raised.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    cfg = cfg or TraceConfig()
    h = cfg.step_for(dom)
    base = dom.c + _sunflower(n_samples, 0.9 * dom.radius_M1)
    ang = 2.0 * np.pi * np.arange(n_dirs) / n_dirs
    X = np.repeat(base, n_dirs, axis=0)
    A = np.tile(ang, n_samples)
    th = np.column_stack([np.cos(A), np.sin(A)])
    bundle = trace_curves(gen, dom, X, gen.initial_velocity(X, th), cfg, on_trap="mark")
    tau = np.where(bundle.trapped, 2.0 * dom.diameter, bundle.exit_time)
    frac = (np.arange(n_times) + 0.5) / n_times
    Xs = np.repeat(X, n_times, axis=0)
    As = np.repeat(A, n_times)
    Ts = (tau[:, None] * frac[None, :]).ravel()
    eps = 1e-4

    def pos(tt, aa):
        d = np.column_stack([np.cos(aa), np.sin(aa)])
        xe, _ = flow(gen, Xs, gen.initial_velocity(Xs, d), tt, h)
        return xe

    dt_ = (pos(Ts + eps, As) - pos(Ts - eps, As)) / (2 * eps)
    da_ = (pos(Ts, As + eps) - pos(Ts, As - eps)) / (2 * eps)
    det = (dt_[:, 0] * da_[:, 1] - dt_[:, 1] * da_[:, 0]) / Ts
    i = int(np.argmin(np.abs(det)))
    signs = np.sign(det)
    return SimplicityReport(
        min_abs_scaled_det=float(np.abs(det[i])),
        worst={"x": Xs[i].tolist(), "t": float(Ts[i]), "theta_angle": float(As[i])},
        n_samples=int(det.size),
        n_trapped=int(bundle.trapped.sum()),
        sign_change=bool(np.any(signs != signs[0])),
        threshold=threshold,
        max_abs_scaled_det=float(np.max(np.abs(det))),
    )


def inflow_preimage(gen, dom, y, omega, cfg=None):
    """Entry ``(x, theta)`` on the inflow boundary and time ``t`` reaching ``(y, omega)``.

    Traces backward from ``y`` with the time-reversed generator.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    omega = np.atleast_2d(np.asarray(omega, dtype=float))
    omega = omega / np.linalg.norm(omega, axis=1, keepdims=True)
    v = gen.initial_velocity(y, omega)
    b = trace_curves(gen.reversed(), dom, y, -v, cfg)
    last = b.last_index()
    ve = -b.v[last]
    return b.x[last], ve / np.linalg.norm(ve, axis=1, keepdims=True), b.exit_time


def _hermite_dist(p, q_x, q_v, q_t):
    """Distance from points ``p`` to the cubic Hermite curve through states ``q``."""
    d2 = np.sum((p[:, None, :] - q_x[None, :, :]) ** 2, axis=2)
    k = np.argmin(d2, axis=1)
    s = np.linspace(0.0, 1.0, 65)
    h00, h10 = 2 * s**3 - 3 * s**2 + 1, s**3 - 2 * s**2 + s
    h01, h11 = -2 * s**3 + 3 * s**2, s**3 - s**2
    best = np.sqrt(d2[np.arange(p.shape[0]), k])
    n = q_x.shape[0]
    for off in (-1, 0):
        a = np.clip(k + off, 0, n - 2)
        dt = (q_t[a + 1] - q_t[a])[:, None, None]
        seg = (
            h00[None, :, None] * q_x[a][:, None, :]
            + h10[None, :, None] * dt * q_v[a][:, None, :]
            + h01[None, :, None] * q_x[a + 1][:, None, :]
            + h11[None, :, None] * dt * q_v[a + 1][:, None, :]
        )
        a0, a1 = seg[:, :-1, :], seg[:, 1:, :]
        e = a1 - a0
        w = p[:, None, :] - a0
        lam = np.clip(np.sum(w * e, axis=2) / np.maximum(np.sum(e * e, axis=2), 1e-300), 0.0, 1.0)
        dist = np.min(np.linalg.norm(w - lam[..., None] * e, axis=2), axis=1)
        best = np.minimum(best, dist)
    return best


def reversal_distance(gen, dom, curve, cfg=None):
    """Hausdorff distance between a curve and its retrace from the exit point.

    The retrace uses the time-reversed generator started at the recorded exit
    state with negated velocity.
    """
    b = trace_curves(gen.reversed(), dom, curve.x[-1:], -curve.v[-1:], cfg).curve(0)
    bt, bx, bv = b.t, b.x, -b.v
    d1 = _hermite_dist(bx, curve.x, curve.v, curve.t)
    # retrace parameter runs backwards in the original time
    d2 = _hermite_dist(curve.x, bx[::-1], bv[::-1], -bt[::-1])
    return float(max(d1.max(), d2.max()))
