"""Synthetic Toeplitz-design experiments for penalized Cox regression.

Each replication draws its own random streams from
``SeedSequence(seed, spawn_key=(rep,))``, so a replication's output depends
only on the master seed and its index.  Replications can therefore run in any
order or in separate processes without changing the report.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .kkt import check_local_max
from .optimizer import FitConfig, _as_penalty, default_grid, fit_ica, fit_oracle, lambda_max
from .penalties import KIND_CODES
from .selection import make_folds, select_lambda
from .survival import Dataset

log = logging.getLogger(__name__)

SELECTIONS = ("sgcv", "cv", "lambda_max", "fixed")
MATCH_TOL = 1e-4


@dataclass(frozen=True)
class SimConfig:
    n: int = 100
    p: int = 100
    s: int = 4
    rho: float = 0.25
    replications: int = 100
    penalties: tuple = ("scad", "lasso")
    baseline: str = "unit_exponential"
    seed: int = 20240501
    censor_scheme: str = "exponential"
    folds: int = 5
    selection: str = "sgcv"
    n_lambdas: int = 30
    lambda_ratio: float = 0.05
    n_eval: int = 1000
    max_sweeps: int = 1000
    lambda_value: float | None = None  # used by selection = "fixed"

    def __post_init__(self):
        object.__setattr__(self, "penalties", tuple(str(k).lower() for k in self.penalties))
        if min(self.n, self.p, self.replications, self.n_eval) < 1:
            raise ValueError("n, p, replications and n_eval must be positive")
        if not 0 <= self.s <= self.p:
            raise ValueError(f"need 0 <= s <= p, got s={self.s}, p={self.p}")
        if not 0 <= self.rho < 1:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if not self.penalties:
            raise ValueError("at least one penalty is required")
        for k in self.penalties:
            if k not in KIND_CODES:
                raise ValueError(f"unknown penalty {k!r}")
        if self.baseline != "unit_exponential":
            raise ValueError(f"unsupported baseline {self.baseline!r}")
        if self.censor_scheme not in ("exponential", "none"):
            raise ValueError(f"unsupported censor_scheme {self.censor_scheme!r}")
        if self.selection not in SELECTIONS:
            raise ValueError(f"selection must be one of {SELECTIONS}")
        if self.selection == "fixed" and not (self.lambda_value is not None and self.lambda_value > 0):
            raise ValueError("selection 'fixed' needs a positive lambda_value")
        if not 0 < self.lambda_ratio < 1:
            raise ValueError("lambda_ratio must lie in (0, 1)")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "SimConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(mapping) - names
        if unknown:
            raise ValueError(f"unknown SimConfig keys: {sorted(unknown)}")
        return cls(**mapping)


def gen_design(n: int, p: int, rho: float, seed=None) -> np.ndarray:
    """Gaussian rows with ``corr(X_i, X_j) = rho^|i-j|`` via the AR(1) recursion."""
    if not 0 <= rho < 1:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, p))
    X = np.empty((n, p))
    if p:
        X[:, 0] = Z[:, 0]
    c = math.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        X[:, j] = rho * X[:, j - 1] + c * Z[:, j]
    return X


def gen_truth(p: int, s: int, seed=None) -> np.ndarray:
    """``s`` entries of ``+-1`` at uniformly chosen positions, zeros elsewhere."""
    if not 0 <= s <= p:
        raise ValueError(f"need 0 <= s <= p, got s={s}, p={p}")
    rng = np.random.default_rng(seed)
    beta = np.zeros(p)
    pos = rng.choice(p, size=s, replace=False)
    beta[pos] = rng.choice([-1.0, 1.0], size=s)
    return beta


def gen_outcomes(X, beta_true, seed=None, censor: bool = True, U: float | None = None):
    """Survival times under unit baseline hazard plus exponential censoring.

    ``T_i ~ Exp(rate exp(eta_i))`` and ``C_i`` is exponential with mean
    ``U exp(eta_i)``, ``U ~ Uniform[1, 3]`` drawn once per call unless given.
    ``censor=False`` sets every ``C_i = inf``.
    """
    X = np.asarray(X, dtype=float)
    beta_true = np.asarray(beta_true, dtype=float).ravel()
    if X.ndim != 2 or X.shape[1] != beta_true.shape[0]:
        raise ValueError("X columns must match beta_true")
    rng = np.random.default_rng(seed)
    eta = X @ beta_true
    if U is None:
        U = rng.uniform(1.0, 3.0)
    T = rng.exponential(size=eta.shape) * np.exp(-eta)
    if censor:
        C = rng.exponential(size=eta.shape) * (U * np.exp(eta))
    else:
        C = np.full(eta.shape, np.inf)
    status = (T <= C).astype(np.int8)
    return np.minimum(T, C), status


def prediction_error(beta_true, beta_hat, X_eval) -> float:
    """Mean over rows of ``(exp(-beta_true'x) - exp(-beta_hat'x))^2``."""
    X_eval = np.asarray(X_eval, dtype=float)
    d = np.exp(-(X_eval @ np.asarray(beta_true, dtype=float))) - np.exp(-(X_eval @ np.asarray(beta_hat, dtype=float)))
    return float(np.mean(d * d))


def tp_fp(beta_hat, true_support) -> tuple[int, int]:
    nz = np.asarray(beta_hat) != 0
    truth = np.zeros(nz.shape[0], dtype=bool)
    truth[np.asarray(true_support, dtype=np.int64)] = True
    return int(np.sum(nz & truth)), int(np.sum(nz & ~truth))


def oracle_match(beta_hat, beta_oracle, true_support, tol: float = MATCH_TOL) -> bool:
    """Strong-oracle event: the fit equals a support-recovering biased oracle.

    Requires identical active sets, sup-norm distance below ``tol`` and an
    oracle whose active set is the true support.
    """
    a = np.flatnonzero(np.asarray(beta_hat) != 0)
    b = np.flatnonzero(np.asarray(beta_oracle) != 0)
    if not np.array_equal(a, b) or not np.array_equal(b, np.sort(np.asarray(true_support))):
        return False
    return bool(np.max(np.abs(np.asarray(beta_hat) - np.asarray(beta_oracle)), initial=0.0) < tol)


ROW_FIELDS = ("replication", "penalty", "lambda", "pe", "tp", "fp", "nnz", "converged",
              "kkt_passed", "oracle_match", "censoring_rate", "error")


@dataclass
class SimulationReport:
    config: SimConfig
    rows: list[dict] = field(default_factory=list)

    def _rows(self, penalty: str) -> list[dict]:
        return [r for r in self.rows if r["penalty"] == penalty]

    @property
    def penalties(self) -> list[str]:
        return list(self.config.penalties) + ["oracle"]

    @property
    def failures(self) -> list[dict]:
        return [r for r in self.rows if r["error"]]

    def column(self, penalty: str, name: str) -> np.ndarray:
        return np.array([r[name] for r in self._rows(penalty)], dtype=float)

    def censoring_rate(self) -> float:
        rates = {r["replication"]: r["censoring_rate"] for r in self.rows}
        return float(np.nanmean(list(rates.values())))

    def oracle_rate(self, penalty: str) -> float:
        return float(np.mean(self.column(penalty, "oracle_match") == 1))

    def _median(self, penalty: str, name: str) -> float:
        x = self.column(penalty, name)
        x = x[np.isfinite(x)]
        return float(np.median(x)) if x.size else math.nan

    def summary(self) -> list[dict]:
        out = []
        for pen in self.penalties:
            pe = self.column(pen, "pe")
            out.append({
                "penalty": pen,
                "median_pe": self._median(pen, "pe"),
                "sd_pe_x100": float(np.nanstd(pe, ddof=1) * 100) if np.sum(np.isfinite(pe)) > 1 else math.nan,
                "median_tp": self._median(pen, "tp"),
                "median_fp": self._median(pen, "fp"),
                "oracle_rate": self.oracle_rate(pen) if pen != "oracle" else math.nan,
                "replications": len(pe),
                "failed": int(np.sum(~np.isfinite(pe))),
            })
        return out

    @staticmethod
    def _csv(rows: list[dict], fields) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([repr(r[k]) if isinstance(r[k], float) else r[k] for k in fields])
        return buf.getvalue()

    def to_csv(self) -> str:
        return self._csv(self.rows, ROW_FIELDS)

    def summary_csv(self) -> str:
        s = self.summary()
        return self._csv(s, list(s[0]))

    def summary_text(self) -> str:
        lines = [f"{'method':<8} {'MPE':>12} {'SDx100':>10} {'TP':>5} {'FP':>5} {'oracle':>7}"]
        for r in self.summary():
            lines.append(f"{r['penalty']:<8} {r['median_pe']:>12.5g} {r['sd_pe_x100']:>10.4g} "
                         f"{r['median_tp']:>5g} {r['median_fp']:>5g} {r['oracle_rate']:>7.3g}")
        lines.append(f"censoring rate {self.censoring_rate():.4f}; failed replications {len({r['replication'] for r in self.failures})}")
        return "\n".join(lines)


def _streams(seed: int, rep: int):
    ss = np.random.SeedSequence(seed, spawn_key=(rep,))
    return ss.spawn(5)


def simulate_dataset(cfg: SimConfig, rep: int):
    """Data for replication ``rep``: (Dataset, beta_true, X_eval, fold seed)."""
    s_design, s_truth, s_out, s_eval, s_fold = _streams(cfg.seed, rep)
    X = gen_design(cfg.n, cfg.p, cfg.rho, s_design)
    beta = gen_truth(cfg.p, cfg.s, s_truth)
    time, status = gen_outcomes(X, beta, s_out, censor=cfg.censor_scheme != "none")
    X_eval = gen_design(cfg.n_eval, cfg.p, cfg.rho, s_eval)
    fold_seed = int(s_fold.generate_state(1)[0])
    return Dataset(time, status, X), beta, X_eval, fold_seed


def _select(cfg: SimConfig, data: Dataset, kind: str, fold_seed: int) -> tuple[float, FitConfig]:
    base = FitConfig(_as_penalty(kind, 1.0), max_sweeps=cfg.max_sweeps)
    if cfg.selection in ("lambda_max", "fixed"):
        lam = lambda_max(data, kind) if cfg.selection == "lambda_max" else float(cfg.lambda_value)
        return lam, dataclasses.replace(base, penalty=_as_penalty(kind, lam))
    grid = default_grid(data, kind, cfg.n_lambdas, cfg.lambda_ratio)
    plan = make_folds(data, cfg.folds, fold_seed)
    sel = select_lambda(data, plan, kind, grid, cfg.selection, base)
    # replay the warm-start chain down to the selected point on the full data
    init = None
    for lam in grid[: sel.index + 1]:
        fit = fit_ica(data, dataclasses.replace(base, penalty=_as_penalty(kind, lam), init=init))
        init = fit.beta
    return sel.lambda_hat, dataclasses.replace(base, penalty=_as_penalty(kind, sel.lambda_hat), init=init)


def run_replication(cfg: SimConfig, rep: int) -> list[dict]:
    """Rows for one replication: one per penalty plus the oracle row."""
    names = list(cfg.penalties) + ["oracle"]
    try:
        data, beta, X_eval, fold_seed = simulate_dataset(cfg, rep)
    except Exception as exc:  # recorded, not fatal
        return [_failed(rep, k, math.nan, exc) for k in names]
    cens = float(1.0 - data.status.mean())
    support = np.flatnonzero(beta)
    rows = []
    first_lam = None
    for kind in cfg.penalties:
        try:
            lam, fcfg = _select(cfg, data, kind, fold_seed)
            fit = fit_ica(data, fcfg)
            if first_lam is None:
                first_lam = lam
            if support.size:
                orc = fit_oracle(data, support, dataclasses.replace(fcfg, init=None)).beta
                match = oracle_match(fit.beta, orc, support)
            else:
                match = fit.nnz == 0
            tp, fp = tp_fp(fit.beta, support)
            kkt = check_local_max(data, fit.beta, fcfg.penalty)
            rows.append(dict(replication=rep, penalty=kind, **{"lambda": float(lam)},
                             pe=prediction_error(beta, fit.beta, X_eval), tp=tp, fp=fp, nnz=fit.nnz,
                             converged=int(fit.converged), kkt_passed=int(kkt.passed),
                             oracle_match=int(match), censoring_rate=cens, error=""))
        except Exception as exc:
            log.warning("replication %d, penalty %s failed: %s", rep, kind, exc)
            rows.append(_failed(rep, kind, cens, exc))
    try:
        if first_lam is None:
            raise RuntimeError("no penalty produced a selected lambda")
        if not support.size:
            raise ValueError("oracle undefined for an empty true support")
        fcfg = FitConfig(_as_penalty(cfg.penalties[0], first_lam), max_sweeps=cfg.max_sweeps)
        orc = fit_oracle(data, support, fcfg)
        tp, fp = tp_fp(orc.beta, support)
        # the oracle solves the problem restricted to the true support
        sub = data.with_covariates(data.X[:, support])
        kkt = check_local_max(sub, orc.beta[support], fcfg.penalty)
        rows.append(dict(replication=rep, penalty="oracle", **{"lambda": float(first_lam)},
                         pe=prediction_error(beta, orc.beta, X_eval), tp=tp, fp=fp, nnz=orc.nnz,
                         converged=int(orc.converged), kkt_passed=int(kkt.passed),
                         oracle_match=1, censoring_rate=cens, error=""))
    except Exception as exc:
        rows.append(_failed(rep, "oracle", cens, exc))
    return rows


def _failed(rep, kind, cens, exc) -> dict:
    return dict(replication=rep, penalty=kind, **{"lambda": math.nan}, pe=math.nan, tp=math.nan, fp=math.nan, nnz=math.nan,
                converged=0, kkt_passed=0, oracle_match=0, censoring_rate=cens,
                error=f"{type(exc).__name__}: {exc}")


def _run_one(args):
    return run_replication(*args)


def run_experiment(cfg: SimConfig, threads: int = 1) -> SimulationReport:
    """Run all replications; rows are ordered by replication index."""
    jobs = [(cfg, r) for r in range(cfg.replications)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    else:
        results = [_run_one(j) for j in jobs]
    report = SimulationReport(cfg)
    for rows in results:
        report.rows.extend(rows)
    return report


def strong_oracle_rate(cfg: SimConfig, n_values, penalty: str | None = None, threads: int = 1) -> dict:
    """Fraction of replications with the strong-oracle event, per sample size."""
    n_values = list(n_values)
    if any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise ValueError("n_values must be strictly ascending")
    penalty = penalty or cfg.penalties[0]
    out = {}
    for n in n_values:
        rep = run_experiment(dataclasses.replace(cfg, n=int(n), penalties=(penalty,)), threads)
        out[int(n)] = rep.oracle_rate(penalty)
    return out
