"""K-fold cross-validation (CV) and sparse generalized CV (SGCV) for lambda.

Both criteria are returned with a minimize-the-score convention: the raw
fold sums of held-out partial likelihood are negated, so smaller is better.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .likelihood import log_partial_likelihood
from .optimizer import FitConfig, RegularizationPath, _as_penalty, default_grid, fit_ica, fit_path
from .survival import Dataset

CRITERIA = ("cv", "sgcv")


@dataclass(frozen=True)
class FoldPlan:
    num_folds: int
    assignments: np.ndarray
    seed: int | None
    stratified: bool

    def train_index(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != k)

    def fold_sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.num_folds)


@dataclass
class SelectionResult:
    lambda_hat: float
    index: int
    lambdas: np.ndarray
    cv: np.ndarray
    sgcv: np.ndarray
    sparsity: np.ndarray
    criterion: str
    fold_sparsity: np.ndarray = field(repr=False)

    @property
    def scores(self) -> np.ndarray:
        return self.sgcv if self.criterion == "sgcv" else self.cv

    @property
    def s_hat(self) -> float:
        return float(self.sparsity[self.index])


def make_folds(data: Dataset, L: int = 5, seed: int | None = 0, stratified: bool = True) -> FoldPlan:
    """Assign subjects to ``L`` folds.

    With ``stratified=True`` events and censored subjects are shuffled
    separately and dealt round-robin, events first, so every fold gets the
    global censoring rate up to one subject.
    """
    n = data.n
    if not 2 <= L <= n:
        raise ValueError(f"number of folds must satisfy 2 <= L <= n={n}, got {L}")
    rng = np.random.default_rng(seed)
    assign = np.empty(n, dtype=np.int64)
    if stratified:
        ev = rng.permutation(np.flatnonzero(data.status == 1))
        ce = rng.permutation(np.flatnonzero(data.status == 0))
        deal = np.concatenate([ev, ce])
    else:
        deal = rng.permutation(n)
    assign[deal] = np.arange(n) % L
    return FoldPlan(L, assign, seed, stratified)


def _train(data: Dataset, plan: FoldPlan, k: int) -> Dataset:
    train = data.subset(plan.train_index(k))
    if train.N == 0:
        raise ValueError(f"fold {k}: held-in data contain no events")
    return train


def _fold_terms(data: Dataset, train: Dataset, beta) -> tuple[float, float, int]:
    return log_partial_likelihood(data, beta), log_partial_likelihood(train, beta), int(np.count_nonzero(beta))


def _cv_from_terms(terms) -> float:
    return -float(sum(full - held for full, held, _ in terms))


def _sgcv_from_terms(terms, n: int, n_train) -> float:
    total = 0.0
    for (full, held, s), nk in zip(terms, n_train):
        if s >= nk:
            return np.inf
        total += full / (n * (1 - s / n) ** 2) - held / (nk * (1 - s / nk) ** 2)
    return -total


def _fold_fits(data, plan, penalty_kind, lam, cfg):
    cfg = cfg or FitConfig(_as_penalty(penalty_kind, lam))
    cfg = dataclasses.replace(cfg, penalty=_as_penalty(penalty_kind, lam))
    terms, sizes = [], []
    for k in range(plan.num_folds):
        train = _train(data, plan, k)
        fit = fit_ica(train, cfg)
        terms.append(_fold_terms(data, train, fit.beta))
        sizes.append(train.n)
    return terms, sizes


def cv_score(data: Dataset, plan: FoldPlan, penalty_kind, lam: float, cfg: FitConfig | None = None) -> float:
    """``-sum_k {l(b_k) - l^(-k)(b_k)}`` with ``b_k`` fitted without fold ``k``."""
    terms, _ = _fold_fits(data, plan, penalty_kind, lam, cfg)
    return _cv_from_terms(terms)


def sgcv_score(data: Dataset, plan: FoldPlan, penalty_kind, lam: float, cfg: FitConfig | None = None) -> float:
    """Negated SGCV; ``+inf`` when some fold fit has at least ``n^(-k)`` nonzeros."""
    terms, sizes = _fold_fits(data, plan, penalty_kind, lam, cfg)
    return _sgcv_from_terms(terms, data.n, sizes)


def fold_paths(data: Dataset, plan: FoldPlan, penalty_kind, grid, cfg: FitConfig | None = None,
               truncate: bool = True) -> list[tuple[Dataset, RegularizationPath]]:
    """Warm-started path per fold.

    With ``truncate`` a fold path stops after its first non-converged fit;
    the remaining grid points are left unfitted.
    """
    out = []
    for k in range(plan.num_folds):
        train = _train(data, plan, k)
        if not truncate:
            out.append((train, fit_path(train, penalty_kind, grid, cfg)))
            continue
        fits = []
        init = None if cfg is None else cfg.init
        base = cfg or FitConfig(_as_penalty(penalty_kind, grid[0]))
        for lam in grid:
            res = fit_ica(train, dataclasses.replace(base, penalty=_as_penalty(penalty_kind, lam), init=init))
            fits.append(res)
            init = res.beta
            if not res.converged:
                break
        out.append((train, RegularizationPath(np.asarray(grid[:len(fits)]), fits, True, train.n)))
    return out


def select_lambda(data: Dataset, plan: FoldPlan, penalty_kind, grid=None, criterion: str = "sgcv",
                  cfg: FitConfig | None = None, truncate: bool = True) -> SelectionResult:
    """Pick ``lambda`` minimizing the criterion over ``{lambda : s_lambda < n}``.

    ``s_lambda`` is the median number of nonzeros across the fold fits.  Ties
    go to the larger ``lambda``.  Grid points that some fold could not fit
    (see :func:`fold_paths`) are excluded.
    """
    criterion = criterion.lower()
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be one of {CRITERIA}")
    if grid is None:
        grid = default_grid(data, penalty_kind)
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise ValueError("lambda grid is empty")
    if np.any(np.diff(grid) >= 0):
        raise ValueError("lambda grid must be strictly descending")
    paths = fold_paths(data, plan, penalty_kind, grid, cfg, truncate)
    m, L = grid.size, plan.num_folds
    cv = np.full(m, np.inf)
    sg = np.full(m, np.inf)
    fold_s = np.full((L, m), -1, dtype=np.int64)
    sizes = [train.n for train, _ in paths]
    for i in range(m):
        if any(i >= len(path.fits) or not path.fits[i].converged for _, path in paths):
            for k, (_, path) in enumerate(paths):
                if i < len(path.fits):
                    fold_s[k, i] = path.fits[i].nnz
            continue
        terms = [_fold_terms(data, train, path.fits[i].beta) for train, path in paths]
        fold_s[:, i] = [t[2] for t in terms]
        cv[i] = _cv_from_terms(terms)
        sg[i] = _sgcv_from_terms(terms, data.n, sizes)
    sparsity = np.array([np.median(fold_s[:, i]) if np.all(fold_s[:, i] >= 0) else np.inf
                         for i in range(m)])
    scores = sg if criterion == "sgcv" else cv
    best = -1
    for i in range(m):
        if not sparsity[i] < data.n or not np.isfinite(scores[i]):
            continue
        if best < 0 or scores[i] < scores[best]:
            best = i
    if best < 0:
        raise ValueError("no grid point satisfies s_lambda < n; extend the grid to larger lambda values")
    return SelectionResult(float(grid[best]), best, grid, cv, sg, sparsity, criterion, fold_s)
