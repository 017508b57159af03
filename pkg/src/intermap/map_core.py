"""Two-parameter interval map family with a neutral fixed point and a critical point.

The map acts on [0,1] with two full monotone branches,

    T(x) = x * (1 + 2**alpha * x**alpha)   on [0, 1/2),
    T(x) = 2**beta * (x - 1/2)**beta       on [1/2, 1].

The left branch has derivative 1 at the origin (neutral fixed point); for
beta > 1 the right branch has derivative 0 at x = 1/2 (non-flat critical
point).  This module provides exact branch evaluation, branch inverses,
the parameter-derivative fields used by the response formulas, and the
preimage ladders that control the intermittency scales.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DomainError",
    "SingularityError",
    "ParamPoint",
    "ParamBox",
    "PreimageLadder",
    "map_eval",
    "map_deriv",
    "map_second_deriv",
    "map_third_deriv",
    "branch_eval",
    "branch_deriv",
    "inverse_branch",
    "inverse_branch_deriv",
    "inverse_branch_third_deriv",
    "X_field",
    "X_field_derivs",
    "X_param_deriv",
    "X_param_deriv_prime",
    "preimage_ladder",
    "ladder_envelopes",
]

# Round-off slack for membership of x in [0,1].
_EDGE_TOL = 1e-12

# Residual target for the left-branch inverse solve.
_NEWTON_TOL = 1e-14


class DomainError(ValueError):
    """Input outside the valid spatial or parameter domain."""


class SingularityError(ValueError):
    """Evaluation requested exactly at a non-removable singularity."""


@dataclass(frozen=True)
class ParamPoint:
    """Admissible parameter pair (alpha, beta): 0 < alpha < 1 <= beta, alpha*beta < 1."""

    alpha: float
    beta: float

    def __post_init__(self):
        a, b = self.alpha, self.beta
        if not (0.0 < a < 1.0):
            raise DomainError(f"alpha must lie in (0, 1), got {a}")
        if not (b >= 1.0):
            raise DomainError(f"beta must be >= 1, got {b}")
        if not (a * b < 1.0):
            raise DomainError(f"alpha * beta must be < 1, got {a * b}")

    def as_tuple(self):
        return (self.alpha, self.beta)

    def __le__(self, other: "ParamPoint") -> bool:
        # Componentwise partial order.
        return self.alpha <= other.alpha and self.beta <= other.beta


@dataclass(frozen=True)
class ParamBox:
    """Compact parameter box [alpha_lo, alpha_hi] x [1, beta_hi] inside the domain."""

    alpha_lo: float
    alpha_hi: float
    beta_hi: float

    def __post_init__(self):
        if not (0.0 < self.alpha_lo <= self.alpha_hi < 1.0):
            raise DomainError("need 0 < alpha_lo <= alpha_hi < 1")
        if not (self.beta_hi >= 1.0):
            raise DomainError("need beta_hi >= 1")
        if not (self.alpha_hi * self.beta_hi < 1.0):
            raise DomainError("need alpha_hi * beta_hi < 1")

    @property
    def beta_lo(self) -> float:
        return 1.0

    @property
    def upper(self) -> ParamPoint:
        """The top corner of the box in the componentwise order."""
        return ParamPoint(self.alpha_hi, self.beta_hi)

    def contains(self, p: ParamPoint) -> bool:
        return (self.alpha_lo <= p.alpha <= self.alpha_hi
                and 1.0 <= p.beta <= self.beta_hi)


def _validate_unit_interval(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < -_EDGE_TOL) or np.any(x > 1.0 + _EDGE_TOL):
        raise DomainError("x outside [0, 1] beyond tolerance")
    return np.clip(x, 0.0, 1.0)


def map_eval(p: ParamPoint, x):
    """Evaluate the map; clamps results to [0,1] only against round-off."""
    x = _validate_unit_interval(x)
    a, b = p.alpha, p.beta
    left = x < 0.5
    out = np.where(
        left,
        x * (1.0 + 2.0 ** a * np.power(x, a, where=x > 0, out=np.zeros_like(x))),
        2.0 ** b * np.power(np.maximum(x - 0.5, 0.0), b),
    )
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def branch_eval(p: ParamPoint, i: int, y):
    """Evaluate branch i on its own domain (1: [0,1/2], 2: [1/2,1])."""
    y = np.asarray(y, dtype=float)
    if i == 1:
        out = y * (1.0 + 2.0 ** p.alpha * np.power(y, p.alpha,
                                                   where=y > 0, out=np.zeros_like(y)))
    elif i == 2:
        out = 2.0 ** p.beta * np.power(np.maximum(y - 0.5, 0.0), p.beta)
    else:
        raise ValueError("branch index must be 1 or 2")
    return out if out.ndim else float(out)


def branch_deriv(p: ParamPoint, i: int, y, order: int = 1):
    """Spatial derivative of branch i of the given order (1, 2 or 3)."""
    y = np.asarray(y, dtype=float)
    a, b = p.alpha, p.beta
    if i == 1:
        c = 2.0 ** a
        if order == 1:
            out = 1.0 + c * (1.0 + a) * _pow0(y, a)
        elif order == 2:
            out = c * a * (1.0 + a) * _pow0(y, a - 1.0)
        elif order == 3:
            out = c * a * (1.0 + a) * (a - 1.0) * _pow0(y, a - 2.0)
        else:
            raise ValueError("order must be 1, 2 or 3")
    elif i == 2:
        t = np.maximum(np.asarray(y, dtype=float) - 0.5, 0.0)
        c = 2.0 ** b
        if order == 1:
            out = b * c * _pow0(t, b - 1.0)
        elif order == 2:
            out = b * (b - 1.0) * c * _pow0(t, b - 2.0) if b != 1.0 else np.zeros_like(t)
        elif order == 3:
            out = (b * (b - 1.0) * (b - 2.0) * c * _pow0(t, b - 3.0)
                   if b not in (1.0, 2.0) else np.zeros_like(t))
        else:
            raise ValueError("order must be 1, 2 or 3")
    else:
        raise ValueError("branch index must be 1 or 2")
    return out if out.ndim else float(out)


def _pow0(y, e):
    """y**e with the conventions y**0 = 1 and 0**e = 0 for e > 0, inf for e < 0."""
    y = np.asarray(y, dtype=float)
    if e == 0.0:
        return np.ones_like(y)
    with np.errstate(divide="ignore"):
        out = np.power(y, e, where=y > 0, out=np.zeros_like(y))
        if e < 0.0:
            out = np.where(y > 0, out, np.inf)
    return out


def map_deriv(p: ParamPoint, x):
    """T'(x).  At x = 1/2 this is the right-branch derivative (0 for beta > 1)."""
    x = _validate_unit_interval(x)
    left = x < 0.5
    out = np.where(left, branch_deriv(p, 1, x, 1), branch_deriv(p, 2, x, 1))
    return out if out.ndim else float(out)


def map_second_deriv(p: ParamPoint, x):
    """T''(x).  Raises at x = 1/2 when 1 < beta < 2 (formula is singular there)."""
    x = _validate_unit_interval(x)
    if 1.0 < p.beta < 2.0 and np.any(np.asarray(x) == 0.5):
        raise SingularityError("second derivative singular at the critical point for beta < 2")
    left = x < 0.5
    out = np.where(left, branch_deriv(p, 1, x, 2), branch_deriv(p, 2, x, 2))
    return out if out.ndim else float(out)


def map_third_deriv(p: ParamPoint, x):
    x = _validate_unit_interval(x)
    left = x < 0.5
    out = np.where(left, branch_deriv(p, 1, x, 3), branch_deriv(p, 2, x, 3))
    return out if out.ndim else float(out)


def inverse_branch(p: ParamPoint, i: int, x):
    """Branch inverse g_i(x) on [0,1].

    The right inverse is closed form, (x**(1/beta) + 1)/2.  The left inverse
    solves y*(1 + 2**alpha * y**alpha) = x by safeguarded Newton inside the
    guaranteed bracket [x/2, x], with bisection fallback, to relative
    residual 1e-14 (absolute tolerances are useless for x near 0).
    """
    x = _validate_unit_interval(x)
    if i == 2:
        out = 0.5 * (np.power(x, 1.0 / p.beta) + 1.0)
        return out if out.ndim else float(out)
    if i != 1:
        raise ValueError("branch index must be 1 or 2")

    a = p.alpha
    c = 2.0 ** a
    xs = np.atleast_1d(x)
    lo = 0.5 * xs
    hi = xs.copy()
    y = np.clip(xs * (1.0 - c * _pow0(xs, a)), lo, hi)
    res_tol = _NEWTON_TOL * np.maximum(xs, 1e-300)  # relative: x spans many decades
    for _ in range(200):
        fy = y * (1.0 + c * _pow0(y, a)) - xs
        lo = np.where(fy < 0.0, y, lo)
        hi = np.where(fy > 0.0, y, hi)
        if np.all(np.abs(fy) <= res_tol):
            break
        dfy = 1.0 + c * (1.0 + a) * _pow0(y, a)
        step = fy / dfy
        ynew = y - step
        outside = (ynew < lo) | (ynew > hi)
        ynew = np.where(outside, 0.5 * (lo + hi), ynew)
        if np.all(ynew == y):
            break
        y = ynew
    out = y.reshape(np.shape(x))
    return out if out.ndim else float(out)


def inverse_branch_deriv(p: ParamPoint, i: int, x):
    """(g_i'(x), g_i''(x)).

    For i = 2, beta > 1 the first derivative diverges as x -> 0+; the value
    returned at x = 0 is +inf, which callers treat as the integrable
    singularity marker rather than an error.
    """
    g = inverse_branch(p, i, x)
    fp = branch_deriv(p, i, g, 1)
    fpp = branch_deriv(p, i, g, 2)
    with np.errstate(divide="ignore"):
        gp = np.where(np.asarray(fp) > 0, 1.0 / np.asarray(fp), np.inf)
        gpp = -np.asarray(fpp) * gp ** 3
    if np.ndim(x) == 0:
        return float(gp), float(gpp)
    return gp, gpp


def inverse_branch_third_deriv(p: ParamPoint, i: int, x):
    """g_i'''(x) = (3 f''(g)**2 - f'(g) f'''(g)) / f'(g)**5."""
    g = inverse_branch(p, i, x)
    fp = np.asarray(branch_deriv(p, i, g, 1), dtype=float)
    fpp = np.asarray(branch_deriv(p, i, g, 2), dtype=float)
    fppp = np.asarray(branch_deriv(p, i, g, 3), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (3.0 * fpp ** 2 - fp * fppp) / fp ** 5
    return out if np.ndim(x) else float(out)


def _v1(p: ParamPoint, y):
    """Parameter-velocity of the left branch at branch coordinate y."""
    y = np.asarray(y, dtype=float)
    w = _log2y(y)
    return 2.0 ** p.alpha * _pow0(y, 1.0 + p.alpha) * w


def _log2y(y):
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(y > 0, np.log(2.0 * np.maximum(y, 1e-300)), -np.inf)


def _v1_prime(p: ParamPoint, y):
    y = np.asarray(y, dtype=float)
    w = _log2y(y)
    return 2.0 ** p.alpha * _pow0(y, p.alpha) * ((1.0 + p.alpha) * w + 1.0)


def _v1_second(p: ParamPoint, y):
    y = np.asarray(y, dtype=float)
    a = p.alpha
    w = _log2y(y)
    return 2.0 ** a * _pow0(y, a - 1.0) * (a * (1.0 + a) * w + 2.0 * a + 1.0)


def X_field(p: ParamPoint, i: int, x):
    """X_i(x): parameter-velocity transported to map coordinates.

    X_2(x) = x * log(x) / beta exactly; X_1 goes through the left inverse.
    Both vanish at x = 0 and x = 1 (removable limits at the endpoints).
    """
    x = _validate_unit_interval(x)
    if i == 2:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(x > 0, x * np.log(np.maximum(x, 1e-300)), 0.0) / p.beta
        return out if out.ndim else float(out)
    if i != 1:
        raise ValueError("branch index must be 1 or 2")
    y = inverse_branch(p, 1, x)
    out = np.where(np.asarray(y) > 0, _v1(p, y), 0.0)
    return out if out.ndim else float(out)


def X_field_derivs(p: ParamPoint, i: int, x):
    """(X_i'(x), X_i''(x)) by the closed-form chain rule."""
    x = _validate_unit_interval(x)
    if i == 2:
        b = p.beta
        with np.errstate(divide="ignore"):
            lg = np.where(np.asarray(x) > 0, np.log(np.maximum(np.asarray(x), 1e-300)), -np.inf)
            xp = (lg + 1.0) / b
            xpp = np.where(np.asarray(x) > 0, 1.0 / (b * np.maximum(np.asarray(x), 1e-300)), np.inf)
        if np.ndim(x) == 0:
            return float(xp), float(xpp)
        return xp, xpp
    y = inverse_branch(p, 1, x)
    gp, gpp = inverse_branch_deriv(p, 1, x)
    xp = _v1_prime(p, y) * np.asarray(gp)
    xpp = _v1_second(p, y) * np.asarray(gp) ** 2 + _v1_prime(p, y) * np.asarray(gpp)
    if np.ndim(x) == 0:
        return float(xp), float(xpp)
    return xp, xpp


def X_param_deriv(p: ParamPoint, i: int, x):
    """Partial derivative of X_i(x) in its own parameter (alpha for i=1, beta for i=2)."""
    x = _validate_unit_interval(x)
    if i == 2:
        out = -np.asarray(X_field(p, 2, x)) / p.beta
        return out if out.ndim else float(out)
    y = inverse_branch(p, 1, x)
    w = _log2y(y)
    X1 = np.asarray(X_field(p, 1, x))
    fp = np.asarray(branch_deriv(p, 1, y, 1))
    out = np.where(np.asarray(y) > 0, X1 * (w - _v1_prime(p, y) / fp), 0.0)
    return out if out.ndim else float(out)


def X_param_deriv_prime(p: ParamPoint, i: int, x):
    """Spatial derivative of X_param_deriv; needed by the second-order formulas."""
    x = _validate_unit_interval(x)
    if i == 2:
        b = p.beta
        with np.errstate(divide="ignore"):
            lg = np.where(np.asarray(x) > 0, np.log(np.maximum(np.asarray(x), 1e-300)), -np.inf)
        out = -(lg + 1.0) / b ** 2
        return out if np.ndim(x) else float(out)
    y = np.asarray(inverse_branch(p, 1, x))
    gp, _ = inverse_branch_deriv(p, 1, x)
    gp = np.asarray(gp)
    w = _log2y(y)
    X1 = np.asarray(X_field(p, 1, x))
    X1p = np.asarray(X_field_derivs(p, 1, x)[0])
    fp = np.asarray(branch_deriv(p, 1, y, 1))
    fpp = np.asarray(branch_deriv(p, 1, y, 2))
    A = w - _v1_prime(p, y) / fp
    Aprime = gp * (np.where(y > 0, 1.0 / np.maximum(y, 1e-300), np.inf)
                   - (_v1_second(p, y) * fp - _v1_prime(p, y) * fpp) / fp ** 2)
    out = X1p * A + X1 * Aprime
    return out if np.ndim(x) else float(out)


@dataclass
class PreimageLadder:
    """Left-branch preimages of 1/2 (b_n) and the matched right-branch ladder (bhat_n).

    The right ladder is stored as the defect bhat_n - 1/2: for large n the
    defect drops below the spacing of floats near 1/2, so bhat itself carries
    no relative precision while the defect stays exact.
    """

    params: ParamPoint
    b: np.ndarray
    bhat_defect: np.ndarray
    envelope_violations: list = field(default_factory=list)

    @property
    def bhat(self) -> np.ndarray:
        return 0.5 + self.bhat_defect

    @property
    def ok(self) -> bool:
        return not self.envelope_violations

    def to_csv(self, path):
        lo, hi, _, _ = ladder_envelopes(self.params, len(self.b) - 1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "b_n", "bhat_n", "lower_env", "upper_env"])
            bhat = self.bhat
            for n in range(len(self.b)):
                w.writerow([n, repr(float(self.b[n])), repr(float(bhat[n])),
                            repr(float(lo[n])), repr(float(hi[n]))])


def ladder_envelopes(p: ParamPoint, N: int):
    """Two-sided envelopes for b_n and bhat_{n+1} - 1/2, n = 1..N.

    Entries for n = 0 are set to the exact values (the bounds apply for n >= 1).
    Returns (b_lo, b_hi, bhat_lo, bhat_hi) arrays of length N + 1 where the
    bhat arrays bound bhat_{n+1} - 1/2 in terms of n.
    """
    a, b = p.alpha, p.beta
    n = np.arange(N + 1, dtype=float)
    # per-step increments of b_n**(-alpha): at most alpha*2**alpha (concavity
    # of t -> 1-(1+t)**(-alpha)), at least alpha*(1-alpha)*2**(alpha-1)
    base_lo = 2.0 ** a + n * a * 2.0 ** a
    base_hi = 2.0 ** a + n * a * (1.0 - a) * 2.0 ** (a - 1.0)
    b_lo = base_lo ** (-1.0 / a)
    b_hi = base_hi ** (-1.0 / a)
    bhat_lo = 0.5 * base_lo ** (-1.0 / (a * b))
    bhat_hi = 0.5 * base_hi ** (-1.0 / (a * b))
    b_lo[0] = b_hi[0] = 0.5
    return b_lo, b_hi, bhat_lo, bhat_hi


def preimage_ladder(p: ParamPoint, N: int) -> PreimageLadder:
    """Compute b_0..b_N and bhat_0..bhat_N and record envelope violations."""
    if N < 1:
        raise ValueError("N must be >= 1")
    b = np.empty(N + 1)
    b[0] = 0.5
    for n in range(N):
        b[n + 1] = inverse_branch(p, 1, b[n])
    defect = np.empty(N + 1)
    defect[0] = 0.5
    defect[1:] = 0.5 * b[:-1] ** (1.0 / p.beta)

    violations = []
    b_lo, b_hi, bh_lo, bh_hi = ladder_envelopes(p, N)
    for n in range(1, N + 1):
        if not (b_lo[n] <= b[n] <= b_hi[n]):
            violations.append(("b", n, float(b[n]), float(b_lo[n]), float(b_hi[n])))
    for n in range(1, N):
        d = defect[n + 1]
        if not (bh_lo[n] <= d <= bh_hi[n]):
            violations.append(("bhat", n + 1, float(d), float(bh_lo[n]), float(bh_hi[n])))
    return PreimageLadder(params=p, b=b, bhat_defect=defect,
                          envelope_violations=violations)
