"""scikit-learn style wrappers around the step and the recursion.

``fit`` runs the construction, ``transform`` maps planar points to L^3 and
``predict`` returns the shell level r_star of the image.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import RetriesExhausted
from .lemma import LemmaInput, run_lemma
from .shells import r_star
from .theorem import RecursionParams, run_theorem
from .validation import check_domain, check_field, check_points, check_polygon, check_positive


class LemmaEstimator(TransformerMixin, BaseEstimator):
    """Boundary-pushing step as an estimator: fit(X, P, O) -> Y_, Q_."""

    def __init__(self, r1=0.75, r2=2.2, b1=0.05, b2=1 / 9, eps0=0.1, max_retries=12, spacing=None,
                 degree_cap=64):
        self.r1 = r1
        self.r2 = r2
        self.b1 = b1
        self.b2 = b2
        self.eps0 = eps0
        self.max_retries = max_retries
        self.spacing = spacing
        self.degree_cap = degree_cap

    def fit(self, X, P=None, O=None):
        field_ = check_field(X)
        if P is None or O is None:
            raise TypeError("fit needs the polygon P and the domain O")
        check_positive("eps0", self.eps0)
        inp = LemmaInput(field_, check_polygon(P), check_domain(O), float(self.r1), float(self.r2),
                         check_positive("b1", self.b1), check_positive("b2", self.b2))
        try:
            res = run_lemma(inp, eps0=self.eps0, max_retries=self.max_retries, spacing=self.spacing,
                            degree_cap=self.degree_cap)
        except RetriesExhausted as err:
            self.history_, self.trace_ = err.history, err.trace
            raise
        self.result_ = res
        self.Y_, self.Q_, self.omega_ = res.Y, res.Q, res.omega
        self.certificate_ = res.certificate
        self.eps0_ = res.eps0
        self.history_, self.trace_ = res.history, res.trace
        self.input_ = inp
        return self

    def transform(self, z):
        check_is_fitted(self, ["Y_", "omega_"])
        z = check_points(z)
        h = self.spacing or self.omega_.diameter / 60
        return self.Y_.immerse_cloud(z, self.omega_, h)

    def predict(self, z):
        return r_star(self.transform(z))


class TheoremEstimator(TransformerMixin, BaseEstimator):
    """The recursion psi_1, ..., psi_N as an estimator; X is ignored."""

    def __init__(self, s1=1.2, n_stages=3, eps0=0.1, D_radius=4.0, m_cap=20, max_retries=12, spacing=None,
                 degree_cap=64):
        self.s1 = s1
        self.n_stages = n_stages
        self.eps0 = eps0
        self.D_radius = D_radius
        self.m_cap = m_cap
        self.max_retries = max_retries
        self.spacing = spacing
        self.degree_cap = degree_cap

    def params(self) -> RecursionParams:
        return RecursionParams(s1=float(self.s1), N=int(self.n_stages), eps0=check_positive("eps0", self.eps0),
                               D_radius=check_positive("D_radius", self.D_radius), m_cap=int(self.m_cap),
                               max_retries=int(self.max_retries), spacing=self.spacing,
                               degree_cap=int(self.degree_cap))

    def fit(self, X=None, y=None):
        run = run_theorem(self.params())
        self.run_ = run
        self.stages_ = run.stages
        self.report_ = run.report
        self.failure_ = run.failure
        self.psi_ = run.stages[-1].psi
        self.P_ = run.stages[-1].P
        self.U_ = run.stages[-1].U
        return self

    def transform(self, z):
        check_is_fitted(self, ["psi_", "U_"])
        z = check_points(z)
        h = self.spacing or self.U_.diameter / 60
        return self.psi_.immerse_cloud(z, self.U_, h)

    def predict(self, z):
        return r_star(np.asarray(self.transform(z)))
