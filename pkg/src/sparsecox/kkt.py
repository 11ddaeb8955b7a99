"""Local-maximizer certificate for penalized Cox fits.

Three conditions are checked in their nonstrict (necessary) form, each scaled
by the sample size:

* stationarity on the active set: ``score_1 - n p'(|b_1|) sgn(b_1) = 0``;
* the inactive scores stay below the threshold ``n p'(0+)``;
* the smallest eigenvalue of the summed risk-set covariance over the active
  block dominates ``n lam kappa(rho, b_1)``.

``second_order_margin`` is a diagnostic outside the pass/fail decision: the
smallest eigenvalue of the negated penalized Hessian on the active block,
with the penalty curvature taken coordinatewise rather than through the
single worst-case ``kappa``.  It can be positive when the curvature check
fails, since ``kappa`` bounds every coordinate by the most concave one.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .likelihood import information, score
from .penalties import Penalty, local_concavity
from .survival import Dataset


@dataclass(frozen=True)
class KKTReport:
    stationarity_residual: float
    inactive_margin: float
    curvature_margin: float
    tol: float
    passed: bool
    n_active: int = 0
    min_eigenvalue: float = math.inf
    kappa: float = 0.0
    second_order_margin: float = math.inf

    def as_dict(self) -> dict:
        return asdict(self)

    def to_text(self) -> str:
        return "\n".join(f"{k} = {v!r}" for k, v in self.as_dict().items())


def check_local_max(data: Dataset, beta, pen: Penalty, tol: float | None = None) -> KKTReport:
    """Certify ``beta`` against the nonstrict local-maximizer conditions.

    ``tol`` defaults to ``1e-6 * n``.
    """
    beta = np.asarray(beta, dtype=float).ravel()
    if not np.all(np.isfinite(beta)):
        raise ValueError("beta must be finite")
    n = data.n
    if tol is None:
        tol = 1e-6 * n
    if not tol > 0:
        raise ValueError("tol must be positive")

    z = score(data, beta)
    active = np.flatnonzero(beta != 0)
    inactive = np.flatnonzero(beta == 0)
    lam = pen.lam

    if active.size:
        b1 = beta[active]
        resid = z[active] - n * pen.deriv(np.abs(b1)) * np.sign(b1)
        stationarity = float(np.max(np.abs(resid)))
    else:
        stationarity = 0.0

    thr = n * float(pen.deriv(0.0))
    zmax = float(np.max(np.abs(z[inactive]))) if inactive.size else 0.0
    inactive_margin = thr - zmax

    if active.size:
        H = n * information(data, beta, active)
        eig = float(np.linalg.eigvalsh(H)[0])
        kappa = local_concavity(pen, beta[active])
        curvature_margin = eig - n * lam * kappa
        D = np.diag(n * lam * np.atleast_1d(pen.neg_rho_curvature(beta[active])))
        second_order = float(np.linalg.eigvalsh(H - D)[0])
    else:
        eig, kappa, curvature_margin, second_order = math.inf, 0.0, math.inf, math.inf

    passed = stationarity <= tol and inactive_margin >= -tol and curvature_margin >= -tol
    return KKTReport(stationarity, inactive_margin, curvature_margin, float(tol), bool(passed),
                     int(active.size), eig, float(kappa), second_order)
