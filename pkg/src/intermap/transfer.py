"""Transfer operator of the map family: pointwise form, sparse Ulam
discretization, invariant-density solver, and the weighted conjugated
operator used for unbounded observables.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .map_core import ParamBox, ParamPoint, inverse_branch, inverse_branch_deriv
from .mesh import GradedMesh, GridFunction

__all__ = [
    "UlamOperator",
    "WeightedOperatorContext",
    "InvariantDensityResult",
    "apply_pointwise",
    "assemble_ulam",
    "push_density",
    "invariant_density",
    "weighted_apply",
]

_ROW_SUM_TOL = 1e-10


@dataclass
class UlamOperator:
    """Row-stochastic discretization: row i spreads cell i's Lebesgue mass
    over its image cells.  Entries are exact overlap fractions computed from
    branch-inverse images of the cell endpoints."""

    mesh: GradedMesh
    rows: sp.csr_matrix
    params: ParamPoint

    def save(self, path):
        """Binary triplet file: little-endian, versioned 'ULAM1' header."""
        m = self.rows
        with open(path, "wb") as fh:
            fh.write(b"ULAM1")
            fh.write(struct.pack("<qq", m.shape[0], m.nnz))
            fh.write(np.asarray(m.indptr, dtype="<i8").tobytes())
            fh.write(np.asarray(m.indices, dtype="<i8").tobytes())
            fh.write(np.asarray(m.data, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path, mesh: GradedMesh, params: ParamPoint):
        with open(path, "rb") as fh:
            if fh.read(5) != b"ULAM1":
                raise ValueError("not an ULAM1 file")
            n, nnz = struct.unpack("<qq", fh.read(16))
            indptr = np.frombuffer(fh.read(8 * (n + 1)), dtype="<i8")
            indices = np.frombuffer(fh.read(8 * nnz), dtype="<i8")
            data = np.frombuffer(fh.read(8 * nnz), dtype="<f8")
        rows = sp.csr_matrix((data, indices, indptr), shape=(n, n))
        return cls(mesh=mesh, rows=rows, params=params)

    def summary(self) -> dict:
        rs = np.asarray(self.rows.sum(axis=1)).ravel()
        return {
            "size": self.rows.shape[0],
            "nnz": int(self.rows.nnz),
            "row_sum_max_deviation": float(np.max(np.abs(rs - 1.0))),
            "alpha": self.params.alpha,
            "beta": self.params.beta,
        }

    def summary_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def apply_pointwise(p: ParamPoint, phi, x):
    """(L phi)(x) = sum over branches of g'(x) * phi(g(x))."""
    total = 0.0
    for i in (1, 2):
        g = inverse_branch(p, i, x)
        gp, _ = inverse_branch_deriv(p, i, x)
        total = total + np.asarray(gp) * phi(np.asarray(g))
    return total if np.ndim(x) else float(total)


def assemble_ulam(p: ParamPoint, mesh: GradedMesh) -> UlamOperator:
    """Exact Ulam matrix via branch-inverse images of cell endpoints.

    Per branch, the preimages of all mesh nodes tile the branch domain, so
    the overlap of cell i with T^{-1}(cell j) is a difference of consecutive
    breakpoints in the merged partition.
    """
    nodes = mesh.nodes
    half = mesh.half_index
    rows_acc, cols_acc, vals_acc = [], [], []
    for i, (lo_idx, hi_idx) in ((1, (0, half)), (2, (half, mesh.cell_count))):
        q = np.asarray(inverse_branch(p, i, nodes))  # preimages of all nodes
        q[0] = nodes[lo_idx]   # exact branch endpoints
        q[-1] = nodes[hi_idx]
        branch_nodes = nodes[lo_idx:hi_idx + 1]
        pts = np.unique(np.concatenate([branch_nodes, q]))
        seg_lo, seg_hi = pts[:-1], pts[1:]
        mid = 0.5 * (seg_lo + seg_hi)
        keep = seg_hi > seg_lo
        seg_lo, seg_hi, mid = seg_lo[keep], seg_hi[keep], mid[keep]
        row = np.searchsorted(nodes, mid, side="right") - 1
        col = np.searchsorted(q, mid, side="right") - 1
        col = np.clip(col, 0, mesh.cell_count - 1)
        rows_acc.append(row)
        cols_acc.append(col)
        vals_acc.append((seg_hi - seg_lo) / mesh.widths[row])
    row = np.concatenate(rows_acc)
    col = np.concatenate(cols_acc)
    val = np.concatenate(vals_acc)
    m = sp.coo_matrix((val, (row, col)),
                      shape=(mesh.cell_count, mesh.cell_count)).tocsr()
    rs = np.asarray(m.sum(axis=1)).ravel()
    dev = np.max(np.abs(rs - 1.0))
    if dev > _ROW_SUM_TOL:
        raise AssertionError(f"Ulam row sums deviate by {dev:.3e} (> {_ROW_SUM_TOL})")
    # scrub residual round-off so long iterations conserve mass exactly
    m = sp.diags(1.0 / rs) @ m
    return UlamOperator(mesh=mesh, rows=m.tocsr(), params=p)


def push_density(U: UlamOperator, d: GridFunction) -> GridFunction:
    """One discrete transfer-operator step on a cell-average density."""
    if d.kind != "cell":
        raise ValueError("push_density requires a cell-average GridFunction")
    if d.mesh is not U.mesh and not np.array_equal(d.mesh.nodes, U.mesh.nodes):
        raise ValueError("mesh mismatch between operator and density")
    w = U.mesh.widths
    masses = d.values * w
    pushed = U.rows.T @ masses
    return GridFunction(U.mesh, pushed / w, "cell")


@dataclass
class InvariantDensityResult:
    density: GridFunction
    converged: bool
    iterations: int
    final_increment: float
    report: dict = field(default_factory=dict)


def invariant_density(p: ParamPoint, mesh: GradedMesh, max_iter: int = 50_000,
                      tol: float = 1e-8, operator: UlamOperator | None = None,
                      ) -> InvariantDensityResult:
    """Power iteration from the flat density with trailing Cesaro averaging.

    The neutral fixed point rules out a spectral gap, so convergence is
    polynomial; the returned density averages the last quarter of the
    iterates to damp the slow mode.  Non-convergence is reported, not fatal.
    """
    U = operator if operator is not None else assemble_ulam(p, mesh)
    w = mesh.widths
    d = np.ones(mesh.cell_count)
    phase1_cap = max(1, int(0.75 * max_iter))
    inc = np.inf
    it = 0
    while it < phase1_cap:
        masses = d * w
        new = (U.rows.T @ masses) / w
        new /= np.dot(new, w)
        inc = float(np.dot(np.abs(new - d), w))
        d = new
        it += 1
        if inc < tol:
            break
    converged = inc < tol
    # Cesaro tail: one third again as many steps, averaged (last 25% of total)
    extra = max(1, it // 3)
    acc = np.zeros_like(d)
    for _ in range(extra):
        masses = d * w
        d = (U.rows.T @ masses) / w
        d /= np.dot(d, w)
        acc += d
    avg = acc / extra
    avg /= np.dot(avg, w)
    density = GridFunction(mesh, avg, "cell")
    report = {
        "converged": converged,
        "iterations": it + extra,
        "final_increment": inc,
        "tolerance": tol,
    }
    return InvariantDensityResult(density=density, converged=converged,
                                  iterations=it + extra,
                                  final_increment=inc, report=report)


@dataclass
class WeightedOperatorContext:
    """Conjugation of the transfer operator by the weight x**(1/beta_u - alpha_u - 1).

    The weight turns the worst-case singular densities over the box into
    bounded objects; repeated application of the conjugated operator keeps
    bounded functions bounded by a fixed multiple of their sup.
    """

    box: ParamBox
    mesh: GradedMesh
    _weight_avgs: np.ndarray = field(default=None, repr=False)
    _ops: dict = field(default_factory=dict, repr=False)

    @property
    def weight_exponent(self) -> float:
        e = 1.0 / self.box.beta_hi - self.box.alpha_hi - 1.0
        if not (-1.0 < e < 0.0):
            raise ValueError("weight exponent must lie in (-1, 0)")
        return e

    @property
    def weight_cell_averages(self) -> np.ndarray:
        if self._weight_avgs is None:
            e = self.weight_exponent
            nodes = self.mesh.nodes
            anti = nodes ** (e + 1.0) / (e + 1.0)  # integrable at 0 since e > -1
            self._weight_avgs = np.diff(anti) / self.mesh.widths
        return self._weight_avgs

    def operator(self, p: ParamPoint) -> UlamOperator:
        key = (p.alpha, p.beta)
        if key not in self._ops:
            if not self.box.contains(p):
                raise ValueError("parameter point outside the context box")
            self._ops[key] = assemble_ulam(p, self.mesh)
        return self._ops[key]


def weighted_apply(ctx: WeightedOperatorContext, p: ParamPoint,
                   phi: GridFunction) -> GridFunction:
    """One step of the weighted operator: weight, push, unweight.

    Cell averages of the weight are exact (closed-form antiderivative), so
    the endpoint cell needs no special casing.
    """
    U = ctx.operator(p)
    f = phi.to_cell()
    g = ctx.weight_cell_averages
    weighted = GridFunction(ctx.mesh, f.values * g, "cell")
    pushed = push_density(U, weighted)
    return GridFunction(ctx.mesh, pushed.values / g, "cell")
