"""Folded-concave penalty family and the univariate penalized-quadratic solver.

Each penalty is parametrized by a regularization level ``lam`` and, for SCAD
and MCP, a shape parameter ``a``.  The scalar kernels below are compiled with
numba so the coordinate ascent loop can call them without leaving nopython
mode; :class:`Penalty` is the public, validated wrapper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

LASSO = 0
SCAD = 1
MCP = 2
SICA = 3

KIND_CODES = {"lasso": LASSO, "scad": SCAD, "mcp": MCP, "sica": SICA}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}

DEFAULT_SHAPE = {"scad": 3.7, "mcp": 3.0}


@njit(cache=True)
def pen_value(kind, lam, a, t):
    if t <= 0.0:
        return 0.0
    if kind == LASSO:
        return lam * t
    if kind == SCAD:
        if t <= lam:
            return lam * t
        if t <= a * lam:
            return (2.0 * a * lam * t - t * t - lam * lam) / (2.0 * (a - 1.0))
        return (a + 1.0) * lam * lam / 2.0
    if kind == MCP:
        if t <= a * lam:
            return lam * t - t * t / (2.0 * a)
        return a * lam * lam / 2.0
    # SICA
    return (lam + 1.0) * t / (lam + t)


@njit(cache=True)
def pen_deriv(kind, lam, a, t):
    # right derivative; t == 0 gives p'(0+)
    if kind == LASSO:
        return lam
    if kind == SCAD:
        if t <= lam:
            return lam
        d = a * lam - t
        return d / (a - 1.0) if d > 0.0 else 0.0
    if kind == MCP:
        d = lam - t / a
        return d if d > 0.0 else 0.0
    return lam * (lam + 1.0) / ((lam + t) * (lam + t))


@njit(cache=True)
def _objective(kind, lam, a, z, h, c, u):
    return z * u - 0.5 * h * u * u - c * pen_value(kind, lam, a, u)


@njit(cache=True)
def _sica_root(lam, z, h, c):
    """Largest positive stationary point of the SICa problem, or -1 if none."""
    k = c * lam * (lam + 1.0)
    um = (2.0 * k / h) ** (1.0 / 3.0) - lam
    lo = um if um > 0.0 else 0.0
    hi = z / h
    if hi <= lo:
        return -1.0
    phi_lo = z - h * lo - k / ((lam + lo) * (lam + lo))
    if phi_lo <= 0.0:
        return -1.0
    # phi is decreasing on [lo, hi] with phi(lo) > 0 > phi(hi)
    u = 0.5 * (lo + hi)
    for _ in range(200):
        q = lam + u
        phi = z - h * u - k / (q * q)
        if phi > 0.0:
            lo = u
        else:
            hi = u
        dphi = -h + 2.0 * k / (q * q * q)
        step_ok = False
        if dphi < 0.0:
            un = u - phi / dphi
            if lo < un < hi:
                u = un
                step_ok = True
        if not step_ok:
            u = 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * (1.0 + hi):
            break
    return u


@njit(cache=True)
def solve_scalar(kind, lam, a, g, h, c):
    """argmax_u  g*u - h/2*u^2 - c*p(|u|), ties broken toward smaller |u|."""
    if g == 0.0:
        return 0.0
    s = 1.0 if g > 0.0 else -1.0
    z = abs(g)
    cands = np.empty(6)
    m = 0
    if kind == LASSO:
        u = (z - c * lam) / h
        if u > 0.0:
            cands[m] = u
            m += 1
    elif kind == SCAD:
        u = (z - c * lam) / h
        if u > 0.0:
            cands[m] = min(u, lam)
            m += 1
        cands[m] = lam
        m += 1
        den = h - c / (a - 1.0)
        if den > 0.0:
            u = (z - c * a * lam / (a - 1.0)) / den
            if lam < u < a * lam:
                cands[m] = u
                m += 1
        cands[m] = a * lam
        m += 1
        u = z / h
        if u > a * lam:
            cands[m] = u
            m += 1
    elif kind == MCP:
        den = h - c / a
        if den > 0.0:
            u = (z - c * lam) / den
            if 0.0 < u < a * lam:
                cands[m] = u
                m += 1
        cands[m] = a * lam
        m += 1
        u = z / h
        if u > a * lam:
            cands[m] = u
            m += 1
    else:
        u = _sica_root(lam, z, h, c)
        if u > 0.0:
            cands[m] = u
            m += 1
    best_u = 0.0
    best_f = 0.0
    order = np.argsort(cands[:m])
    for i in range(m):
        u = cands[order[i]]
        f = _objective(kind, lam, a, z, h, c, u)
        if f > best_f:
            best_f = f
            best_u = u
    return s * best_u


@dataclass(frozen=True)
class Penalty:
    """A penalty ``p_lam(t)`` from the LASSO/SCAD/MCP/SICa family.

    Parameters
    ----------
    kind : {'lasso', 'scad', 'mcp', 'sica'}
    lam : float
        Regularization level, must be positive.
    a : float, optional
        Shape parameter. Defaults to 3.7 for SCAD and 3 for MCP; ignored for
        LASSO and SICa.
    """

    kind: str
    lam: float
    a: float | None = None

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in KIND_CODES:
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        lam = float(self.lam)
        if not (lam > 0 and math.isfinite(lam)):
            raise ValueError(f"lambda must be positive and finite, got {self.lam!r}")
        object.__setattr__(self, "lam", lam)
        a = self.a
        if a is None:
            a = DEFAULT_SHAPE.get(kind, 0.0)
        a = float(a)
        if kind == "scad" and not a > 2:
            raise ValueError(f"SCAD requires a > 2, got {a}")
        if kind == "mcp" and not a >= 1:
            raise ValueError(f"MCP requires a >= 1, got {a}")
        object.__setattr__(self, "a", a)

    @property
    def code(self) -> int:
        return KIND_CODES[self.kind]

    def with_lambda(self, lam: float) -> "Penalty":
        return Penalty(self.kind, lam, self.a)

    def value(self, t):
        """``p_lam(t)`` for ``t >= 0`` (scalar or array)."""
        return _vectorize(pen_value, self, t)

    def deriv(self, t):
        """Right derivative ``p'_lam(t)``; ``deriv(0)`` is ``p'(0+)``."""
        return _vectorize(pen_deriv, self, t)

    def rho(self, t):
        return self.value(t) / self.lam

    def rho_deriv0(self) -> float:
        """``rho'(0+) = p'(0+) / lam``."""
        return pen_deriv(self.code, self.lam, self.a, 0.0) / self.lam

    def neg_rho_curvature(self, t):
        """``-rho''(t)`` on the open pieces; zero on the linear/flat parts."""
        t = np.abs(np.asarray(t, dtype=float))
        lam, a = self.lam, self.a
        if self.kind == "lasso":
            out = np.zeros_like(t)
        elif self.kind == "scad":
            out = np.where((t > lam) & (t < a * lam), 1.0 / ((a - 1.0) * lam), 0.0)
        elif self.kind == "mcp":
            out = np.where(t < a * lam, 1.0 / (a * lam), 0.0)
        else:
            out = 2.0 * (lam + 1.0) / (lam + t) ** 3
        return out if out.ndim else float(out)


def _vectorize(fn, pen, t):
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise ValueError("penalty argument must be nonnegative")
    if arr.ndim == 0:
        return fn(pen.code, pen.lam, pen.a, float(arr))
    flat = arr.ravel()
    out = np.empty_like(flat)
    for i, v in enumerate(flat):
        out[i] = fn(pen.code, pen.lam, pen.a, v)
    return out.reshape(arr.shape)


def penalty_value(pen: Penalty, t):
    return pen.value(t)


def penalty_deriv(pen: Penalty, t):
    return pen.deriv(t)


def local_concavity(pen: Penalty, v) -> float:
    """Local concavity ``kappa(rho, v)`` of the rescaled penalty at ``v``.

    This is the largest negative curvature of ``rho = p / lam`` in
    arbitrarily small neighbourhoods of the ``|v_j|``.  Breakpoints count as
    belonging to the curved piece, so for SCAD the closed interval
    ``[lam, a*lam]`` yields ``1 / ((a - 1) lam)``.
    """
    v = np.abs(np.atleast_1d(np.asarray(v, dtype=float)))
    if v.size == 0:
        return 0.0
    if np.any(v == 0):
        raise ValueError("local concavity is defined for nonzero coefficients only")
    lam, a = pen.lam, pen.a
    if pen.kind == "lasso":
        return 0.0
    if pen.kind == "scad":
        hit = np.any((v >= lam) & (v <= a * lam))
        return 1.0 / ((a - 1.0) * lam) if hit else 0.0
    if pen.kind == "mcp":
        return 1.0 / (a * lam) if np.any(v <= a * lam) else 0.0
    return float(np.max(2.0 * (lam + 1.0) / (lam + v) ** 3))


def solve_univariate(pen: Penalty, g: float, h: float, n: float) -> float:
    """Global maximizer of ``g*u - h/2*u**2 - n*p_lam(|u|)``.

    LASSO uses soft thresholding; SCAD and MCP compare the closed-form
    stationary points of each piece together with the breakpoints; SICa
    brackets the single local maximum on ``u > 0`` and refines it with a
    safeguarded Newton iteration.  Ties go to the smaller ``|u|``.
    """
    g, h, n = float(g), float(h), float(n)
    if not (math.isfinite(g) and math.isfinite(h) and math.isfinite(n)):
        raise ValueError("solve_univariate received non-finite input")
    if h <= 0:
        raise ValueError("curvature h must be positive")
    return solve_scalar(pen.code, pen.lam, pen.a, g, h, n)
