"""Small Krylov helpers shared by the Poisson solver and the reconstruction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import NoConvergence


@dataclass
class CGInfo:
    iterations: int = 0
    converged: bool = False
    residuals: list = field(default_factory=list)


def cg(apply_A, b, x0=None, tol=1e-10, max_iter=1000, raise_on_fail=True):
    """Conjugate gradients for a symmetric positive (semi)definite operator.

    Stops when ``||b - A x|| <= tol * ||b||``.  Returns ``(x, CGInfo)``.
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - apply_A(x) if x0 is not None else b.copy()
    bnorm = np.linalg.norm(b)
    info = CGInfo()
    if bnorm == 0.0:
        info.converged = True
        info.residuals.append(0.0)
        return np.zeros_like(b), info
    p = r.copy()
    rr = r @ r
    info.residuals.append(np.sqrt(rr) / bnorm)
    for k in range(max_iter):
        if np.sqrt(rr) <= tol * bnorm:
            info.converged = True
            break
        Ap = apply_A(p)
        pAp = p @ Ap
        if pAp <= 0.0:
            break
        a = rr / pAp
        x += a * p
        r -= a * Ap
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
        info.iterations = k + 1
        info.residuals.append(np.sqrt(rr) / bnorm)
    else:
        info.converged = np.sqrt(rr) <= tol * bnorm
    if not info.converged and np.sqrt(rr) <= tol * bnorm:
        info.converged = True
    if not info.converged and raise_on_fail:
        raise NoConvergence(
            f"CG stopped after {info.iterations} iterations at relative residual "
            f"{info.residuals[-1]:.3e} (tol {tol:.1e})"
        )
    return x, info


def power_norm(apply_S, n, n_iter=200, tol=1e-10, seed=0):
    """Spectral norm of a symmetric operator by power iteration."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(n_iter):
        y = apply_S(x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        lam_new = ny
        x = y / ny
        if abs(lam_new - lam) <= tol * lam_new:
            lam = lam_new
            break
        lam = lam_new
    return float(lam)
