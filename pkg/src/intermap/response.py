"""Parameter derivatives of the transfer operator and the response series.

The derivative of the operator in its own parameter has the closed form
-(X_i * N_i(phi))', where N_i(phi) = g_i' * (phi o g_i) is the single-branch
transfer term.  Summing pushes of that kernel against an observable yields
the derivative of the invariant average; an independent finite-difference
of fully re-converged densities validates the series.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .map_core import (
    ParamBox,
    ParamPoint,
    X_field,
    X_field_derivs,
    X_param_deriv,
    X_param_deriv_prime,
    inverse_branch,
    inverse_branch_deriv,
    inverse_branch_third_deriv,
)
from .mesh import GradedMesh, GridFunction
from .transfer import UlamOperator, assemble_ulam, invariant_density, push_density

__all__ = [
    "Observable",
    "ResponseEstimate",
    "xn_kernel",
    "partial_L_pointwise",
    "second_partial_L",
    "partial_L",
    "response_series",
    "response_fd",
    "directional_derivative",
    "lq_admissible",
]


@dataclass(frozen=True)
class Observable:
    """Observable to average against the invariant measure.

    kinds:
      polynomial  params["coeffs"] = [c0, c1, ...]
      power       params["s"] = s, meaning x**(-s) with s > 0
      indicator   params["interval"] = (a, b)
      table       params["grid"] = GridFunction
    """

    kind: str
    params: dict
    q_exponent: float | None = None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "polynomial":
            out = np.polynomial.polynomial.polyval(x, self.params["coeffs"])
        elif self.kind == "power":
            s = self.params["s"]
            out = np.power(np.maximum(x, 1e-300), -s)
        elif self.kind == "indicator":
            a, b = self.params["interval"]
            out = ((x >= a) & (x <= b)).astype(float)
        elif self.kind == "table":
            out = np.asarray(self.params["grid"].evaluate(x), dtype=float)
        else:
            raise ValueError(f"unknown observable kind {self.kind!r}")
        return out if out.ndim else float(out)

    @property
    def bounded(self) -> bool:
        return self.kind in ("polynomial", "indicator", "table")


def lq_admissible(phi: Observable, q: float, box: ParamBox) -> bool:
    """Whether the observable is admissible for the response theorem at exponent q.

    Requires q above the box threshold 1/(1 - alpha_hi*beta_hi) and a finite
    weighted q-th moment against x**(1/beta_hi - alpha_hi - 1).
    """
    if q <= 1.0:
        raise ValueError("q must exceed 1")
    q0 = 1.0 / (1.0 - box.alpha_hi * box.beta_hi)
    if q <= q0:
        return False
    w = 1.0 / box.beta_hi - box.alpha_hi
    if phi.bounded:
        return True
    if phi.kind == "power":
        return phi.params["s"] * q < w
    raise ValueError(f"admissibility undecidable for kind {phi.kind!r}")


# ---------------------------------------------------------------------------
# pointwise closed-form kernels


def _branch_data(p: ParamPoint, i: int, x):
    g = np.asarray(inverse_branch(p, i, x), dtype=float)
    gp, gpp = inverse_branch_deriv(p, i, x)
    gppp = inverse_branch_third_deriv(p, i, x)
    return g, np.asarray(gp, dtype=float), np.asarray(gpp, dtype=float), np.asarray(gppp, dtype=float)


def xn_kernel(p: ParamPoint, i: int, phi, dphi, x, d2phi=None):
    """(X_i * N_i(phi))(x) and its first (and optionally second) derivative.

    phi, dphi (and d2phi when given) are callables on the branch coordinate.
    Returns (value, first) or (value, first, second).
    """
    g, gp, gpp, gppp = _branch_data(p, i, x)
    X = np.asarray(X_field(p, i, x), dtype=float)
    Xp, Xpp = (np.asarray(v, dtype=float) for v in X_field_derivs(p, i, x))
    f0 = np.asarray(phi(g), dtype=float)
    f1 = np.asarray(dphi(g), dtype=float)
    N = gp * f0
    Np = gpp * f0 + gp ** 2 * f1
    val = X * N
    first = Xp * N + X * Np
    if d2phi is None:
        return val, first
    f2 = np.asarray(d2phi(g), dtype=float)
    Npp = gppp * f0 + 3.0 * gp * gpp * f1 + gp ** 3 * f2
    second = Xpp * N + 2.0 * Xp * Np + X * Npp
    return val, first, second


def partial_L_pointwise(p: ParamPoint, i: int, phi, dphi, x):
    """Derivative of (L phi)(x) in parameter i: the closed form -(X_i N_i(phi))'."""
    _, first = xn_kernel(p, i, phi, dphi, x)
    return first * (-1.0) if np.ndim(x) else -float(first)


def second_partial_L(p: ParamPoint, i: int, phi, dphi, d2phi, x):
    """Second parameter derivative of (L phi)(x).

    Differentiating -(X_i N_i phi)' once more in the parameter gives
    -(dX_i N_i phi)' + X_i' (X_i N_i phi)' + X_i (X_i N_i phi)'', with the
    parameter derivative dX_i of the field in closed form.  The sign of the
    first term is pinned by second central differences of the operator.
    """
    g, gp, gpp, _ = _branch_data(p, i, x)
    f0 = np.asarray(phi(g), dtype=float)
    f1 = np.asarray(dphi(g), dtype=float)
    N = gp * f0
    Np = gpp * f0 + gp ** 2 * f1
    dX = np.asarray(X_param_deriv(p, i, x), dtype=float)
    dXp = np.asarray(X_param_deriv_prime(p, i, x), dtype=float)
    X = np.asarray(X_field(p, i, x), dtype=float)
    Xp, _ = (np.asarray(v, dtype=float) for v in X_field_derivs(p, i, x))
    _, xn1, xn2 = xn_kernel(p, i, phi, dphi, x, d2phi=d2phi)
    out = -(dXp * N + dX * Np) + Xp * xn1 + X * xn2
    return out if np.ndim(x) else float(out)


# ---------------------------------------------------------------------------
# grid versions


@dataclass
class PartialLResult:
    grid: GridFunction          # mean-forced -(X_i N_i f)' on the nodes
    raw_mean: float             # quadrature mean before forcing (diagnostic)
    kernel: GridFunction        # un-negated, un-forced (X_i N_i f)'


def partial_L(p: ParamPoint, i: int, f: GridFunction) -> PartialLResult:
    """Grid form of the operator's parameter derivative for a nodal function.

    Only f' comes from grid differentiation; every other factor is closed
    form.  The result is mean-forced (the analytic mean is exactly zero) and
    the raw quadrature mean is kept as a diagnostic.
    """
    if f.kind != "nodal":
        f = f.to_nodal()
    fp = f.differentiate()
    mesh = f.mesh
    u = _xn_prime_from_grid(p, i, f, fp, mesh)
    kernel = GridFunction(mesh, u, "nodal")
    raw_mean = kernel.integrate()
    forced = GridFunction(mesh, -(u - raw_mean), "nodal")
    return PartialLResult(grid=forced, raw_mean=raw_mean, kernel=kernel)


def _xn_prime_from_grid(p, i, f, fp, mesh):
    """(X_i N_i f)' at the mesh nodes with endpoint limits."""
    x = mesh.nodes
    inner = x[1:]  # x = 0 handled by the vanishing X field below
    g, gp, gpp, _ = _branch_data(p, i, inner)
    X = np.asarray(X_field(p, i, inner), dtype=float)
    Xp, _ = (np.asarray(v, dtype=float) for v in X_field_derivs(p, i, inner))
    f0 = np.asarray(f.evaluate(g), dtype=float)
    f1 = np.asarray(fp.evaluate(g), dtype=float)
    N = gp * f0
    Np = gpp * f0 + gp ** 2 * f1
    u = np.empty_like(x)
    u[1:] = Xp * N + X * Np
    # u is integrable-singular at 0; extend by the neighbor value, the first
    # cell is vanishingly small on graded meshes
    u[0] = u[1]
    return u


# ---------------------------------------------------------------------------
# response series and validation


@dataclass
class ResponseEstimate:
    gamma: ParamPoint
    observable: Observable
    D1: float
    D2: float
    terms: dict                      # {1: [...], 2: [...]}
    K: int
    tail_bound: float
    raw_means: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    fd_cross_check: dict | None = None

    def to_json(self, path=None):
        doc = {
            "gamma": list(self.gamma.as_tuple()),
            "observable": {"kind": self.observable.kind,
                           "params": _jsonable(self.observable.params)},
            "D1": self.D1,
            "D2": self.D2,
            "K": self.K,
            "terms": {str(k): list(v) for k, v in self.terms.items()},
            "tail_bound": self.tail_bound,
            "raw_means": {str(k): v for k, v in self.raw_means.items()},
            "warnings": self.warnings,
        }
        if self.fd_cross_check is not None:
            doc["fd_cross_check"] = self.fd_cross_check
        if path is not None:
            with open(path, "w") as fh:
                json.dump(doc, fh, indent=2)
        return doc


def _jsonable(params):
    out = {}
    for k, v in params.items():
        if isinstance(v, GridFunction):
            out[k] = "<table>"
        elif isinstance(v, (tuple, list, np.ndarray)):
            out[k] = [float(t) for t in v]
        else:
            out[k] = v
    return out


def response_series(p: ParamPoint, phi: Observable, mesh: GradedMesh,
                    K_max: int = 2000, tol: float = 1e-10,
                    operator: UlamOperator | None = None,
                    density: GridFunction | None = None,
                    density_tol: float = 1e-9,
                    density_max_iter: int = 50_000) -> ResponseEstimate:
    """Truncated response series for both parameter directions.

    D_i = -sum_k int phi * L^k[(X_i N_i h)'] dm, truncated once five
    consecutive terms fall under `tol` (or at K_max), with a power-law tail
    extrapolation reported separately and never folded into D_i.
    """
    U = operator if operator is not None else assemble_ulam(p, mesh)
    if density is None:
        density = invariant_density(p, mesh, operator=U, tol=density_tol,
                                    max_iter=density_max_iter).density
    h_nodal = density.to_nodal()

    warnings = []
    terms = {1: [], 2: []}
    raw_means = {}
    states = {}
    for i in (1, 2):
        res = partial_L(p, i, h_nodal)
        raw_means[i] = res.raw_mean
        u = res.kernel.to_cell()
        # mean-force on the cell representation actually pushed
        mean = u.integrate()
        u = GridFunction(mesh, u.values - mean, "cell")
        states[i] = u

    quiet = {1: 0, 2: 0}
    K = 0
    for k in range(K_max + 1):
        done = True
        for i in (1, 2):
            t = states[i].integrate_against(phi)
            terms[i].append(t)
            quiet[i] = quiet[i] + 1 if abs(t) < tol else 0
            if quiet[i] < 5:
                done = False
        K = k
        if done:
            break
        for i in (1, 2):
            states[i] = push_density(U, states[i])

    D = {}
    tails = []
    for i in (1, 2):
        D[i] = -float(np.sum(terms[i]))
        tails.append(_tail_bound(terms[i], warnings, i))
    return ResponseEstimate(gamma=p, observable=phi, D1=D[1], D2=D[2],
                            terms=terms, K=K, tail_bound=float(max(tails)),
                            raw_means=raw_means, warnings=warnings)


def _tail_bound(ts, warnings, i):
    """Extrapolate |t_k| ~ A k^e beyond the truncation point."""
    mags = np.abs(np.asarray(ts[1:], dtype=float))
    ks = np.arange(1, len(mags) + 1, dtype=float)
    pos = mags > 0
    if pos.sum() < 4:
        return 0.0
    lo = max(1, int(0.5 * pos.sum()))
    kk, mm = ks[pos][lo:], mags[pos][lo:]
    if len(kk) < 3:
        kk, mm = ks[pos], mags[pos]
    e, loga = np.polyfit(np.log(kk), np.log(mm), 1)
    if e >= -1.0:
        warnings.append(f"term decay exponent {e:.3f} >= -1 for i={i}; "
                        "series summability not visible at this truncation")
        return float("inf")
    K = len(ts)
    return float(np.exp(loga) * K ** (e + 1.0) / (-e - 1.0))


def response_fd(p: ParamPoint, phi: Observable, delta: float, mesh: GradedMesh,
                components=(1, 2), density_tol: float = 1e-9,
                density_max_iter: int = 50_000):
    """Central finite differences of the invariant average, with densities
    re-converged independently at each perturbed parameter point."""

    def R(pt):
        d = invariant_density(pt, mesh, tol=density_tol,
                              max_iter=density_max_iter).density
        return d.integrate_against(phi)

    out = {}
    for i in components:
        if i == 1:
            pp = ParamPoint(p.alpha + delta, p.beta)
            pm = ParamPoint(p.alpha - delta, p.beta)
        else:
            pp = ParamPoint(p.alpha, p.beta + delta)
            pm = ParamPoint(p.alpha, p.beta - delta)
        out[i] = (R(pp) - R(pm)) / (2.0 * delta)
    return tuple(out[i] for i in components)


def directional_derivative(est: ResponseEstimate, v) -> float:
    """Derivative of the invariant average in direction +v: v1*D1 + v2*D2."""
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    return float(v[0] * est.D1 + v[1] * est.D2)
