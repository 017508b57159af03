"""Machine-checkable convex cones of candidate densities.

The first-order cone consists of nonnegative decreasing functions f with
x**(alpha+1) * f increasing and a tail-integral bound
int_0^x f <= a * x**(1/beta - alpha) * m(f).  The invariant density lives in
this cone once the aperture a clears the threshold a0(gamma), and the
transfer operator maps the cone into itself.  A second cone constrains the
first three log-derivative ratios.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .map_core import ParamPoint
from .mesh import GridFunction
from .transfer import UlamOperator, push_density

__all__ = [
    "ConeParams",
    "C3Params",
    "ConeReport",
    "a0",
    "check_Ca",
    "check_C3",
    "lambda_shift",
    "random_cone_mixture",
    "verify_cone_invariance",
]


def a0(gamma: ParamPoint) -> float:
    """Cone-aperture threshold 2**(beta+1) * (1+2**alpha)**(1+alpha-1/beta) / (1/beta-alpha)."""
    a, b = gamma.alpha, gamma.beta
    return 2.0 ** (b + 1.0) * (1.0 + 2.0 ** a) ** (1.0 + a - 1.0 / b) / (1.0 / b - a)


@dataclass(frozen=True)
class ConeParams:
    a: float
    gamma: ParamPoint

    def __post_init__(self):
        if self.a < 1.0:
            raise ValueError("cone aperture must be >= 1")

    @property
    def invariance_certified(self) -> bool:
        """Whether the aperture clears the invariance threshold a0(gamma)."""
        return self.a >= a0(self.gamma)


@dataclass(frozen=True)
class C3Params:
    b1: float
    b2: float
    b3: float

    def validate(self, alpha_hi: float):
        # sufficient constants for invariance of the higher-order cone
        if self.b1 < alpha_hi + 1.0:
            raise ValueError("b1 must be >= alpha_hi + 1")
        if self.b2 < 12.0 * self.b1:
            raise ValueError("b2 must be >= 12 * b1")
        if self.b3 < 103.0 * self.b2:
            raise ValueError("b3 must be >= 103 * b2")
        return self


@dataclass
class ConeReport:
    passed: bool
    first_violation: tuple | None = None  # (condition, x, margin)
    margins: dict = field(default_factory=dict)

    def to_json(self, path=None):
        doc = {
            "passed": self.passed,
            "first_violation": (None if self.first_violation is None else {
                "condition": self.first_violation[0],
                "x": self.first_violation[1],
                "margin": self.first_violation[2],
            }),
            "margins": self.margins,
        }
        if path is not None:
            with open(path, "w") as fh:
                json.dump(doc, fh, indent=2)
        return doc


_REL_TOL = 1e-9


def check_Ca(f: GridFunction, cp: ConeParams, slack: float = 0.0) -> ConeReport:
    """Verify the four first-order cone conditions at every grid location.

    Violations are findings, not errors.  `slack` is a relative allowance
    for functions that went through a discretization step (cell averaging
    perturbs each condition at O(h)).
    """
    alpha, beta = cp.gamma.alpha, cp.gamma.beta
    g = f
    if g.kind == "cell":
        xs = g.mesh.midpoints
        vals = g.values
        cum_x = g.mesh.nodes[1:]
        cum = np.cumsum(vals * g.mesh.widths)
        total = cum[-1]
    else:
        xs = g.mesh.nodes
        vals = g.values
        dx = np.diff(xs)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (vals[:-1] + vals[1:]) * dx)])
        cum_x = xs
        total = cum[-1]
    if total <= 0:
        raise ValueError("cone membership requires positive total mass")

    scale = float(np.max(np.abs(vals)))
    tol = (_REL_TOL + slack) * scale
    margins = {}
    first = None

    def record(name, margin_arr, locs):
        nonlocal first
        m = float(np.min(margin_arr)) if len(margin_arr) else 0.0
        margins[name] = m
        if m < -tol and first is None:
            k = int(np.argmin(margin_arr))
            first = (name, float(locs[k]), m)

    record("nonnegative", vals, xs)
    record("decreasing", vals[:-1] - vals[1:], xs[1:])
    wv = xs ** (alpha + 1.0) * vals
    record("weighted_increasing", wv[1:] - wv[:-1], xs[1:])
    bound = cp.a * cum_x ** (1.0 / beta - alpha) * total
    # relative margin so that a single tolerance works across scales
    denom = np.maximum(bound, 1e-300)
    rel = (bound - cum) / denom
    margins["tail_integral"] = float(np.min(rel))
    if margins["tail_integral"] < -(_REL_TOL + slack) and first is None:
        k = int(np.argmin(rel))
        first = ("tail_integral", float(cum_x[k]), margins["tail_integral"])

    passed = first is None
    return ConeReport(passed=passed, first_violation=first, margins=margins)


def check_C3(f, c3: C3Params, sample_count: int = 200, derivs=None,
             x_min: float = 1e-6) -> ConeReport:
    """Check the three derivative-ratio conditions on log-spaced samples.

    `f` must be positive on the samples.  Pass `derivs=(f1, f2, f3)` for
    closed-form derivatives; otherwise central differences with a relative
    step are used.
    """
    xs = np.logspace(np.log10(x_min), 0.0, sample_count)
    fv = np.asarray(f(xs), dtype=float)
    if np.any(fv <= 0):
        raise ValueError("check_C3 requires f > 0 on the sample set")
    if derivs is not None:
        d1, d2, d3 = (np.asarray(d(xs), dtype=float) for d in derivs)
    else:
        h = 1e-4 * xs
        d1 = (f(xs + h) - f(xs - h)) / (2 * h)
        d2 = (f(xs + h) - 2 * fv + f(xs - h)) / h ** 2
        d3 = (f(xs + 2 * h) - 2 * f(xs + h) + 2 * f(xs - h) - f(xs - 2 * h)) / (2 * h ** 3)

    margins = {}
    first = None
    for name, dv, bb, k in (("ratio1", d1, c3.b1, 1),
                            ("ratio2", d2, c3.b2, 2),
                            ("ratio3", d3, c3.b3, 3)):
        lhs = np.abs(dv) * xs ** k
        rhs = bb * fv
        rel = (rhs - lhs) / np.maximum(rhs, 1e-300)
        margins[name] = float(np.min(rel))
        if margins[name] < -1e-6 and first is None:
            j = int(np.argmin(rel))
            first = (name, float(xs[j]), margins[name])
    return ConeReport(passed=first is None, first_violation=first, margins=margins)


def lambda_shift(C0: float, C1: float, delta: float, cp: ConeParams) -> float:
    """Shift size making a zero-mean perturbation cone-decomposable.

    Adding lambda * x**(1/beta - alpha - 1) to a zero-mean F with
    |F| <= C0*a*x**(-delta) and |F'| <= C1*a*x**(-delta-1) lands in the cone
    when a >= 2 and lambda matches the returned value.
    """
    alpha, beta = cp.gamma.alpha, cp.gamma.beta
    if cp.a < 2.0:
        raise ValueError("the shift lemma requires aperture a >= 2")
    if not (0.0 < delta < 1.0 + alpha - 1.0 / beta):
        raise ValueError("delta outside (0, 1 + alpha - 1/beta)")
    m = max(1.0 / (1.0 + alpha - 1.0 / beta),
            4.0,
            2.0 * (1.0 / beta - alpha) / (1.0 - delta))
    return cp.a * (C0 + C1) * m


def _power_cell_averages(mesh, delta):
    """Exact cell averages of x**(-delta) for 0 < delta < 1."""
    e = 1.0 - delta
    anti = mesh.nodes ** e / e
    return np.diff(anti) / mesh.widths


def random_cone_mixture(mesh, gamma_u: ParamPoint, rng, n_terms: int = 4) -> GridFunction:
    """Nonnegative mixture of x**(-delta_k), delta_k < 1 + alpha_u - 1/beta_u.

    Each pure power lies in the first-order cone for the box corner, and the
    cone is convex, so mixtures are guaranteed members with exact cell
    averages.
    """
    dmax = 1.0 + gamma_u.alpha - 1.0 / gamma_u.beta
    deltas = rng.uniform(0.05, 0.95 * dmax, size=n_terms)
    coeffs = rng.uniform(0.1, 1.0, size=n_terms)
    vals = np.zeros(mesh.cell_count)
    for c, d in zip(coeffs, deltas):
        vals += c * _power_cell_averages(mesh, d)
    return GridFunction(mesh, vals, "cell")


def verify_cone_invariance(cp: ConeParams, U: UlamOperator, trials: int = 100,
                           seed: int = 0, slack: float = 1e-3) -> dict:
    """Push random cone elements once through the Ulam operator and re-check.

    cp.gamma is read as the box corner gamma_u; U may be assembled at any
    parameter point dominated by it.
    """
    if not cp.invariance_certified:
        raise ValueError("aperture below a0(gamma_u); invariance not guaranteed")
    if not (U.params.alpha <= cp.gamma.alpha and U.params.beta <= cp.gamma.beta):
        raise ValueError("operator parameters must be dominated by the cone corner")
    rng = np.random.Generator(np.random.Philox(seed))
    passes = 0
    failures = []
    for t in range(trials):
        f = random_cone_mixture(U.mesh, cp.gamma, rng)
        out = push_density(U, f)
        rep = check_Ca(out, cp, slack=slack)
        if rep.passed:
            passes += 1
        else:
            failures.append({"trial": t, "violation": rep.first_violation})
    return {
        "trials": trials,
        "passes": passes,
        "failures": failures,
        "gamma": U.params.as_tuple(),
        "gamma_u": cp.gamma.as_tuple(),
        "a": cp.a,
        "slack": slack,
    }
