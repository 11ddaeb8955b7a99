"""Iterative coordinate ascent (ICA) for penalized Cox regression.

Each visit to coordinate ``j`` builds the second-order expansion of the
partial likelihood along ``j`` at the current iterate, maximizes it plus the
penalty in closed form, and accepts the move only if the exact penalized
objective goes up (halving the step otherwise).  Coordinates enter a sweep
when they are active or when their score exceeds ``n p'(0+)``.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .likelihood import information, log_partial_likelihood, score
from .penalties import Penalty
from .survival import Dataset

log = logging.getLogger(__name__)

H_FLOOR = 1e-12


@dataclass(frozen=True)
class FitConfig:
    penalty: Penalty
    tol: float = 1e-8
    max_sweeps: int = 1000
    inner_newton_steps: int = 1
    init: np.ndarray | None = None
    standardize: bool = False
    max_halvings: int = 20
    step_tol: float | None = None  # defaults to 1e-7 * n

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.inner_newton_steps < 1:
            raise ValueError("inner_newton_steps must be >= 1")


@dataclass
class FitResult:
    beta: np.ndarray
    objective: float
    sweeps: int
    converged: bool
    objective_trace: np.ndarray
    penalty: Penalty
    n_accepted: int = 0
    min_increase: float = np.inf

    @property
    def active_set(self) -> np.ndarray:
        return np.flatnonzero(self.beta != 0)

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.beta))


@dataclass
class RegularizationPath:
    lambdas: np.ndarray
    fits: list[FitResult]
    warm_started: bool = True
    n: int = 0

    @property
    def sparsity(self) -> np.ndarray:
        return np.array([f.nnz for f in self.fits])

    @property
    def saturated(self) -> np.ndarray:
        """Grid points whose fitted model has at least ``n`` nonzeros."""
        return self.sparsity >= self.n


def penalized_objective(data: Dataset, beta, pen: Penalty) -> float:
    beta = np.asarray(beta, dtype=float)
    return log_partial_likelihood(data, beta) - data.n * float(np.sum(pen.value(np.abs(beta))))


def partial_quadratic(data: Dataset, beta, j: int) -> tuple[float, float]:
    """Slope and (positive) curvature of ``Q_n`` along coordinate ``j``."""
    if not 0 <= j < data.p:
        raise IndexError(f"coordinate {j} out of range")
    g = float(score(data, beta)[j])
    h = float(data.n * information(data, beta, [j])[0, 0])
    return g, max(h, H_FLOOR)


def lambda_max(data: Dataset, kind: str | Penalty = "lasso") -> float:
    """Smallest ``lam`` at which the zero vector passes the screening rule.

    Defined for penalties with ``p'(0+) = lam`` (LASSO, SCAD, MCP).
    """
    kind = kind.kind if isinstance(kind, Penalty) else str(kind).lower()
    if kind == "sica":
        raise ValueError("lambda_max is undefined for SICa; supply an explicit grid")
    if data.N == 0:
        return 1.0
    z = _kernels.score_all(data.Xs, np.zeros(data.n), data.ds, data.rs_end)
    zmax = float(np.max(np.abs(z)))
    lam = zmax / data.n
    while data.n * lam < zmax:
        lam = np.nextafter(lam, np.inf)
    return lam if lam > 0 else np.finfo(float).tiny


def default_grid(data: Dataset, kind: str | Penalty = "lasso", n_lambdas: int = 100,
                 ratio: float = 0.01) -> np.ndarray:
    kind = kind.kind if isinstance(kind, Penalty) else str(kind).lower()
    if kind == "sica":
        # p'(0+) = 1 + 1/lam decreases in lam, so sparsity grows with small lam
        return np.logspace(2, -2, n_lambdas)
    lmax = lambda_max(data, kind)
    grid = np.geomspace(lmax, lmax * ratio, n_lambdas)
    grid[0] = lmax
    return grid


def _standardized(data: Dataset):
    mu = data.X.mean(axis=0)
    sd = data.X.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return data.with_covariates((data.X - mu) / sd), sd


def fit_ica(data: Dataset, cfg: FitConfig) -> FitResult:
    """Maximize ``Q_n(beta) - n sum_j p_lam(|beta_j|)`` by coordinate ascent.

    Non-convergence within ``cfg.max_sweeps`` is reported through
    ``FitResult.converged`` rather than raised.
    """
    pen = cfg.penalty
    if cfg.standardize:
        sdata, sd = _standardized(data)
        init = None if cfg.init is None else np.asarray(cfg.init, dtype=float) * sd
        res = fit_ica(sdata, dataclasses.replace(cfg, standardize=False, init=init))
        res.beta = res.beta / sd
        return res

    beta0 = np.zeros(data.p) if cfg.init is None else np.array(cfg.init, dtype=float).ravel()
    if beta0.shape[0] != data.p:
        raise ValueError(f"init has length {beta0.shape[0]}, expected {data.p}")
    if data.N == 0:
        return FitResult(np.zeros(data.p), 0.0, 1, True, np.array([0.0]), pen)

    step_tol = 1e-7 * data.n if cfg.step_tol is None else cfg.step_tol
    beta, sweeps, converged, trace, n_acc, min_inc = _kernels.ica(
        data.Xs, data.ds, data.rs_end, beta0, pen.code, pen.lam, pen.a,
        cfg.tol, step_tol, cfg.max_sweeps, cfg.max_halvings, H_FLOOR, cfg.inner_newton_steps,
    )
    if n_acc and not min_inc > 0:
        raise AssertionError("coordinate update accepted without increasing the objective")
    if np.any(np.diff(trace) < 0):
        raise AssertionError("objective trace decreased")
    if not np.all(np.isfinite(beta)):
        raise FloatingPointError("coordinate ascent produced non-finite coefficients")
    obj = penalized_objective(data, beta, pen)
    if not converged:
        log.info("ICA did not converge in %d sweeps (lam=%g)", sweeps, pen.lam)
    return FitResult(beta, obj, int(sweeps), bool(converged), trace, pen, int(n_acc), float(min_inc))


def _as_penalty(kind, lam: float) -> Penalty:
    if isinstance(kind, Penalty):
        return kind.with_lambda(lam)
    return Penalty(str(kind), lam)


def fit_path(data: Dataset, penalty_kind, lambdas=None, cfg: FitConfig | None = None,
             n_lambdas: int = 100) -> RegularizationPath:
    """Fit a warm-started path over a strictly descending ``lambdas`` grid.

    The default grid runs from ``lambda_max`` down to ``0.01 * lambda_max`` in
    ``n_lambdas`` log-spaced steps.  Points whose fit has ``>= n`` nonzeros are
    kept and flagged through :attr:`RegularizationPath.saturated`.
    """
    if lambdas is None:
        lambdas = default_grid(data, penalty_kind, n_lambdas)
    lambdas = np.asarray(lambdas, dtype=float).ravel()
    if lambdas.size == 0:
        raise ValueError("lambda grid is empty")
    if np.any(np.diff(lambdas) >= 0):
        raise ValueError("lambda grid must be strictly descending")
    if cfg is None:
        cfg = FitConfig(_as_penalty(penalty_kind, lambdas[0]))
    fits = []
    init = cfg.init
    for lam in lambdas:
        step = dataclasses.replace(cfg, penalty=_as_penalty(penalty_kind, lam), init=init)
        res = fit_ica(data, step)
        fits.append(res)
        init = res.beta
    return RegularizationPath(lambdas, fits, True, data.n)


def fit_oracle(data: Dataset, support, cfg: FitConfig) -> FitResult:
    """Penalized fit restricted to the columns in ``support``; zeros elsewhere."""
    support = np.unique(np.asarray(support, dtype=np.int64))
    if support.size == 0:
        raise ValueError("support must be nonempty")
    if support.min() < 0 or support.max() >= data.p:
        raise IndexError("support index out of range")
    sub = data.with_covariates(data.X[:, support])
    init = None if cfg.init is None else np.asarray(cfg.init, dtype=float)[support]
    res = fit_ica(sub, dataclasses.replace(cfg, init=init))
    beta = np.zeros(data.p)
    beta[support] = res.beta
    res.beta = beta
    return res
