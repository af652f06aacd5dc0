"""Estimator-style wrappers around the transform, the solenoidal split and reconstruction.

Each class stores its constructor arguments unchanged, does its expensive
setup in ``fit`` (attributes ending in ``_``) and works on 2D arrays whose
rows are vectors of unknowns, so the objects compose with scikit-learn
tooling such as ``clone`` and ``Pipeline``.

Row layouts:

* pair vectors: ``[f1 on x-edges, f2 on y-edges, phi on interior nodes]``,
  length ``grid.n_pair``;
* covector vectors: the first ``grid.n_f`` entries of a pair vector;
* sinograms: one value per fan entry.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_fan, check_grid, check_positive, check_positive_int, check_vectors
from .fields import Pair, SolenoidalProjector
from .geometry import TraceConfig
from .reconstruct import reconstruct, solenoidal_truth
from .transform import Sinogram, get_operator

__all__ = ["DopplerTransform", "SolenoidalDecomposition", "PairReconstructor"]


class DopplerTransform(TransformerMixin, BaseEstimator):
    """Maps pair vectors to sinograms.

    ``transform`` applies the discrete transform row by row and ``adjoint``
    applies its measure-weighted transpose.
    """

    def __init__(self, weight=None, generator=None, fan=None, grid=None, trace_config=None, threads=1):
        self.weight = weight
        self.generator = generator
        self.fan = fan
        self.grid = grid
        self.trace_config = trace_config
        self.threads = threads

    def fit(self, X=None, y=None):
        check_grid(self.grid)
        check_fan(self.fan)
        check_positive_int(self.threads, "threads")
        if self.weight is None or self.generator is None:
            raise ValueError("weight and generator are required")
        self.operator_ = get_operator(
            self.generator, self.weight, self.fan, self.grid, self.trace_config or TraceConfig(), self.threads
        )
        self.n_features_in_ = self.grid.n_pair
        return self

    def transform(self, X):
        check_is_fitted(self, "operator_")
        X = check_vectors(X, self.grid.n_pair)
        return np.vstack([self.operator_.apply(x) for x in X])

    def adjoint(self, S):
        check_is_fitted(self, "operator_")
        S = check_vectors(S, self.fan.n_entries, "S")
        return np.vstack([self.operator_.adjoint(s) for s in S])


class SolenoidalDecomposition(TransformerMixin, BaseEstimator):
    """Splits covector vectors ``f = f^s + d phi`` and returns the ``f^s`` part.

    After ``transform``, :meth:`potential` gives the matching ``phi`` rows.
    """

    def __init__(self, grid=None):
        self.grid = grid

    def fit(self, X=None, y=None):
        check_grid(self.grid)
        self.projector_ = SolenoidalProjector(self.grid)
        self.n_features_in_ = self.grid.n_f
        return self

    def transform(self, X):
        check_is_fitted(self, "projector_")
        X = check_vectors(X, self.grid.n_f)
        return np.vstack([self.projector_.project(x) for x in X])

    def potential(self, X):
        check_is_fitted(self, "projector_")
        X = check_vectors(X, self.grid.n_f)
        return np.vstack([self.projector_.potential(x) for x in X])


class PairReconstructor(BaseEstimator):
    """Recovers solenoidal pairs ``[f^s, phi]`` from sinogram rows.

    ``fit`` checks the setup and builds the operator; ``predict`` runs the
    projected conjugate-gradient solve for each row and keeps the per-row
    results in ``results_``.  ``score`` is minus the mean relative error of
    the recovered pair against the solenoidal part of the given truth.
    """

    def __init__(
        self,
        weight=None,
        generator=None,
        fan=None,
        grid=None,
        tol=1e-6,
        max_iter=500,
        trace_config=None,
        check_elliptic=True,
    ):
        self.weight = weight
        self.generator = generator
        self.fan = fan
        self.grid = grid
        self.tol = tol
        self.max_iter = max_iter
        self.trace_config = trace_config
        self.check_elliptic = check_elliptic

    def fit(self, X=None, y=None):
        check_grid(self.grid)
        check_fan(self.fan)
        check_positive(self.tol, "tol")
        check_positive_int(self.max_iter, "max_iter")
        if self.weight is None or self.generator is None:
            raise ValueError("weight and generator are required")
        self.cfg_ = self.trace_config or TraceConfig()
        self.operator_ = get_operator(self.generator, self.weight, self.fan, self.grid, self.cfg_)
        self.n_features_in_ = self.fan.n_entries
        return self

    def predict(self, S):
        check_is_fitted(self, "operator_")
        S = check_vectors(S, self.fan.n_entries, "S")
        self.results_ = [
            reconstruct(
                Sinogram(s, self.fan),
                self.weight,
                self.generator,
                self.fan,
                self.grid,
                tol=self.tol,
                max_iter=self.max_iter,
                cfg=self.cfg_,
                check_elliptic=self.check_elliptic,
            )
            for s in S
        ]
        return np.vstack([r.pair.to_vector() for r in self.results_])

    def score(self, S, y):
        """``y`` holds raw pair vectors whose transforms are the rows of ``S``."""
        P = self.predict(S)
        Y = check_vectors(y, self.grid.n_pair, "y")
        proj = SolenoidalProjector(self.grid)
        errs = []
        for p, t in zip(P, Y):
            ref = solenoidal_truth(Pair.from_vector(self.grid, t), proj).to_vector()
            errs.append(np.linalg.norm(p - ref) / max(np.linalg.norm(ref), 1e-300))
        return -float(np.mean(errs))
