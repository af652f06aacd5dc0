"""Weights on the flow, their log-derivatives along curves, and the 2D elliptic check.

A weight is a function ``w(x, xi)`` on velocities of curves in the family.
Four kinds are supported:

* ``constant``: ``w = c``;
* ``attenuated``: ``w = chi * exp(-int_{entry}^{0} sigma)`` with the
  integral taken backward along the curve to the outer boundary, so that
  ``G log w = -sigma``;
* ``from_covector``: ``log w = log w0 + int_{entry}^{0} h_j xdot^j dt``, the
  solution of ``G log w = h_j xi^j``;
* ``tabulated``: a user rule ``(x, unit theta) -> w``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .exceptions import CurveNotMaximal, ZeroWeight
from .geometry import CurveBundle, TraceConfig, _sunflower, flow, trace_curves

__all__ = [
    "Weight",
    "EllipticCheckConfig",
    "EllipticReport",
    "weight_along",
    "flow_log_derivative",
    "alpha_of",
    "weight_on_bundle",
    "log_derivative_on_bundle",
    "alpha_on_bundle",
    "weight_at",
    "elliptic_margin",
]


def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@dataclass(frozen=True)
class Weight:
    kind: str
    value: float = 1.0
    sigma: Optional[Callable] = None
    directional: bool = False
    h: Optional[Callable] = None
    rule: Optional[Callable] = None
    log_derivative: Optional[Callable] = None
    alpha_rule: Optional[Callable] = None
    label: str = field(default="", compare=False)

    @classmethod
    def constant(cls, c=1.0):
        return cls(kind="constant", value=float(c), label=f"constant({c})")

    @classmethod
    def attenuated(cls, sigma, directional=False, scale=1.0):
        """``sigma`` is a number, a function of ``x`` or (``directional``) of ``(x, theta)``."""
        if np.isscalar(sigma):
            s0 = float(sigma)
            sigma, directional = (lambda x: np.full(np.shape(x)[0], s0)), False
        return cls(kind="attenuated", value=float(scale), sigma=sigma, directional=directional, label="attenuated")

    @classmethod
    def from_covector(cls, h, w0=1.0):
        if w0 <= 0:
            raise ValueError("w0 must be positive")
        return cls(kind="from_covector", value=float(w0), h=h, label="from_covector")

    @classmethod
    def tabulated(cls, rule, log_derivative=None):
        """``rule(x, theta)``; ``log_derivative(x, xi)`` optionally gives ``G log w`` exactly."""
        return cls(kind="tabulated", rule=rule, log_derivative=log_derivative, label="tabulated")

    def scaled(self, c):
        """The weight ``c * w`` for a constant ``c > 0``."""
        if c <= 0:
            raise ValueError("scale must be positive")
        if self.kind == "tabulated":
            rule = self.rule
            return replace(self, rule=lambda x, th: c * rule(x, th))
        return replace(self, value=self.value * c)

    def with_alpha(self, alpha_rule):
        """Replace ``alpha = -G w`` by an arbitrary rule ``alpha(x, xi)``."""
        return replace(self, alpha_rule=alpha_rule)

    def sigma_at(self, x, v):
        if self.directional:
            return np.asarray(self.sigma(x, _unit(v)), dtype=float)
        return np.asarray(self.sigma(x), dtype=float)


@dataclass(frozen=True)
class EllipticCheckConfig:
    n_x: int = 16
    n_theta: int = 16
    subset_U: Optional[tuple] = None
    threshold: float = 1e-6

    def __post_init__(self):
        if self.n_x < 8 or self.n_theta < 8:
            raise ValueError("elliptic check needs at least 8 spatial and 8 direction samples")


# ---- along traced curves -----------------------------------------------------


def _require_maximal(bundle, dom):
    if dom is None:
        return
    r0 = dom.radius_of(bundle.x[bundle.first_index()])
    if np.any(np.abs(r0 - dom.radius_M1) > 1e-8 * dom.radius_M1):
        raise CurveNotMaximal("curve does not start on the outer boundary")


def _log_weight_on_bundle(w, bundle, dom):
    if w.kind == "attenuated":
        _require_maximal(bundle, dom)
        return np.log(w.value) - bundle.cumulative_trapezoid(w.sigma_at(bundle.x, bundle.v))
    if w.kind == "from_covector":
        _require_maximal(bundle, dom)
        g = np.sum(np.asarray(w.h(bundle.x)) * bundle.v, axis=1)
        return np.log(w.value) + bundle.cumulative_trapezoid(g)
    return None


def weight_on_bundle(w, bundle, dom=None):
    """Weight values at every state of every curve in ``bundle``."""
    if w.kind == "constant":
        return np.full(bundle.t.shape, w.value)
    if w.kind == "tabulated":
        return np.asarray(w.rule(bundle.x, _unit(bundle.v)), dtype=float)
    return np.exp(_log_weight_on_bundle(w, bundle, dom))


def _ragged_derivative(bundle, f):
    """Second-order d/dt on non-uniform per-curve samples, one-sided at the ends."""
    t = bundle.t
    n = t.size
    out = np.zeros(n)
    first, last = bundle.first_index(), bundle.last_index()
    length = last - first + 1
    is_first = np.zeros(n, dtype=bool)
    is_last = np.zeros(n, dtype=bool)
    is_first[first] = True
    is_last[last] = True
    mid = ~is_first & ~is_last
    k = np.flatnonzero(mid)
    h1, h2 = t[k] - t[k - 1], t[k + 1] - t[k]
    out[k] = (
        -h2 / (h1 * (h1 + h2)) * f[k - 1]
        + (h2 - h1) / (h1 * h2) * f[k]
        + h1 / (h2 * (h1 + h2)) * f[k + 1]
    )
    three = length >= 3
    for ends, sgn in ((first, 1), (last, -1)):
        e = ends[three]
        a, b = e + sgn, e + 2 * sgn
        d1, d2 = t[a] - t[e], t[b] - t[e]
        # quadratic through three points, derivative at the end point
        out[e] = (
            -(d1 + d2) / (d1 * d2) * f[e]
            + d2 / (d1 * (d2 - d1)) * f[a]
            - d1 / (d2 * (d2 - d1)) * f[b]
        )
        e2 = ends[length == 2]
        dt = t[e2 + sgn] - t[e2]
        out[e2] = np.where(dt != 0, (f[e2 + sgn] - f[e2]) / np.where(dt != 0, dt, 1.0), 0.0)
    return out


def log_derivative_on_bundle(w, bundle, dom=None):
    """``G log w`` at every state: analytic for constant/attenuated, differences otherwise."""
    if w.kind == "constant":
        return np.zeros(bundle.t.shape)
    if w.kind == "attenuated":
        return -w.sigma_at(bundle.x, bundle.v)
    if w.kind == "tabulated" and w.log_derivative is not None:
        return np.asarray(w.log_derivative(bundle.x, bundle.v), dtype=float)
    wv = weight_on_bundle(w, bundle, dom)
    if np.any(np.abs(wv) < 1e-14):
        raise ZeroWeight("weight vanishes on a traced curve; log w is undefined")
    lw = _log_weight_on_bundle(w, bundle, dom)
    if lw is None:
        lw = np.log(np.abs(wv))
    return _ragged_derivative(bundle, lw)


def alpha_on_bundle(w, bundle, dom=None, weights=None):
    """``alpha = -G w = -w G log w`` (or the user ``alpha_rule``) at every state."""
    if w.alpha_rule is not None:
        return np.asarray(w.alpha_rule(bundle.x, bundle.v), dtype=float)
    wv = weight_on_bundle(w, bundle, dom) if weights is None else weights
    if w.kind == "constant":
        return np.zeros_like(wv)
    return -wv * log_derivative_on_bundle(w, bundle, dom)


def _as_bundle(curve):
    n = curve.t.size
    x0 = curve.x[0:1]
    return CurveBundle(
        t=np.asarray(curve.t, dtype=float),
        x=np.asarray(curve.x, dtype=float),
        v=np.asarray(curve.v, dtype=float),
        curve_id=np.zeros(n, dtype=np.int64),
        offsets=np.array([0, n]),
        entry_x=x0,
        entry_v=curve.v[0:1],
        exit_time=np.array([curve.exit_time]),
        trapped=np.array([curve.trapped]),
        on_boundary=np.array([True]),
    )


def weight_along(w, curve, dom=None):
    """Weight values ``w(gamma(t), gamma'(t))`` at each state of a traced curve.

    Attenuated and covector-built weights integrate from the first state, which
    must be the entry point on the outer boundary (checked when ``dom`` is given).
    """
    return weight_on_bundle(w, _as_bundle(curve), dom)


def flow_log_derivative(w, curve, dom=None):
    return log_derivative_on_bundle(w, _as_bundle(curve), dom)


def alpha_of(w, curve, dom=None):
    return alpha_on_bundle(w, _as_bundle(curve), dom)


# ---- pointwise --------------------------------------------------------------


def weight_at(w, gen, dom, x, theta, cfg=None):
    """``(w, G log w)`` at ``(x, lambda(x, theta) theta)`` for arrays of samples.

    Attenuated and covector-built weights are evaluated by tracing backward to
    the outer boundary.  Flow derivatives of non-analytic kinds come from a
    short two-sided trace through each sample.
    """
    cfg = cfg or TraceConfig()
    x = np.atleast_2d(np.asarray(x, dtype=float))
    theta = _unit(np.atleast_2d(np.asarray(theta, dtype=float)))
    v = gen.initial_velocity(x, theta)
    k = x.shape[0]
    h = cfg.step_for(dom)
    if w.kind == "constant":
        return np.full(k, w.value), np.zeros(k)
    if w.kind == "tabulated":
        wv = np.asarray(w.rule(x, theta), dtype=float)
        if w.log_derivative is not None:
            return wv, np.asarray(w.log_derivative(x, v), dtype=float)
        if np.any(np.abs(wv) < 1e-14):
            raise ZeroWeight("weight vanishes at a sample point")
        xp, vp = flow(gen, x, v, h, h)
        xm, vm = flow(gen, x, v, -h, h)
        lp = np.log(np.abs(w.rule(xp, _unit(vp))))
        lm = np.log(np.abs(w.rule(xm, _unit(vm))))
        return wv, (lp - lm) / (2.0 * h)

    back = trace_curves(gen.reversed(), dom, x, -v, cfg)
    bv = -back.v  # velocities in the original orientation
    if w.kind == "attenuated":
        dens = w.sigma_at(back.x, bv)
        sign = -1.0
    else:
        dens = np.sum(np.asarray(w.h(back.x)) * bv, axis=1)
        sign = 1.0
    # integral from the entry point (last backward state) up to x
    total = back.cumulative_trapezoid(dens)[back.last_index()]
    logw = np.log(w.value) + sign * total
    wv = np.exp(logw)
    if w.kind == "attenuated":
        return wv, -w.sigma_at(x, v)
    # two-sided difference: one step forward, one backward state
    xp, vp = flow(gen, x, v, h, h)
    gp = np.sum(np.asarray(w.h(xp)) * vp, axis=1)
    g0 = dens[back.first_index()]
    has_prev = back.last_index() > back.first_index()
    j = np.where(has_prev, back.first_index() + 1, back.first_index())
    hm = back.t[j] - back.t[back.first_index()]
    gm = dens[j]
    up = 0.5 * h * (g0 + gp)
    down = 0.5 * hm * (gm + g0)
    glog = (up + down) / (h + hm)
    if np.any(wv < 1e-14):
        raise ZeroWeight("weight vanishes at a sample point")
    return wv, glog


@dataclass
class EllipticReport:
    min_margin: float
    argmin: dict
    verdict: str
    message: str = ""
    margins: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def passed(self):
        return self.verdict == "pass"

    def to_dict(self):
        return {
            "min_margin": self.min_margin,
            "argmin": self.argmin,
            "verdict": self.verdict,
            "message": self.message,
        }


def elliptic_margin(w, gen, dom, cfg=None, trace_cfg=None):
    """Sampled margin of the 2D elliptic condition.

    At each sample ``(x, theta)`` the margin is
    ``|Glog w(x, l(x,t) t) + l(x,t)/l(x,-t) * Glog w(x, -l(x,-t) t)|``; the
    condition fails where it vanishes (the log-derivative is odd in the
    direction).  ``verdict`` is ``"pass"`` iff the minimum exceeds
    ``cfg.threshold``.
    """
    cfg = cfg or EllipticCheckConfig()
    if cfg.subset_U is not None:
        _, half_width = cfg.subset_U
        if half_width < np.pi:
            return EllipticReport(
                min_margin=0.0,
                argmin={},
                verdict="fail",
                message="in two dimensions the elliptic condition requires U to be the whole "
                "curve family; a proper direction cone always admits a solution h",
            )
    xs = dom.c + _sunflower(cfg.n_x, 0.95 * dom.radius_M)
    ang = 2.0 * np.pi * np.arange(cfg.n_theta) / cfg.n_theta
    X = np.repeat(xs, cfg.n_theta, axis=0)
    A = np.tile(ang, cfg.n_x)
    th = np.column_stack([np.cos(A), np.sin(A)])
    try:
        wp, gp = weight_at(w, gen, dom, X, th, trace_cfg)
        wm, gm = weight_at(w, gen, dom, X, -th, trace_cfg)
    except ZeroWeight as exc:
        return EllipticReport(0.0, {}, "fail", message=f"zero weight: {exc}")
    if np.any(np.abs(wp) < 1e-14) or np.any(np.abs(wm) < 1e-14):
        return EllipticReport(0.0, {}, "fail", message="zero weight on the sampled set")
    lp = gen.lam(X, th)
    lm = gen.lam(X, -th)
    margin = np.abs(gp + (lp / lm) * gm)
    i = int(np.argmin(margin))
    mm = float(margin[i])
    return EllipticReport(
        min_margin=mm,
        argmin={"x": X[i].tolist(), "theta": th[i].tolist()},
        verdict="pass" if mm > cfg.threshold else "fail",
        message="" if mm > cfg.threshold else "log-derivative of w is (numerically) odd in the direction",
        margins=margin,
    )
