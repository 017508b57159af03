"""Graded partitions of [0,1] and grid-based function representations.

Invariant densities of the map family blow up like a negative power of x at
the origin, so meshes are graded there: node i sits at (i/N)**p.  The branch
boundary 1/2 is always snapped onto a node so that transfer-operator rows
never straddle a branch.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

__all__ = ["GradedMesh", "GridFunction", "build_mesh"]


@dataclass(frozen=True)
class GradedMesh:
    nodes: np.ndarray
    grading_exponent: float

    def __post_init__(self):
        n = self.nodes
        if n[0] != 0.0 or n[-1] != 1.0:
            raise ValueError("mesh must span [0, 1]")
        if np.any(np.diff(n) <= 0):
            raise ValueError("mesh nodes must be strictly increasing")
        if 0.5 not in n:
            raise ValueError("mesh must contain the branch boundary 1/2")

    @property
    def cell_count(self) -> int:
        return len(self.nodes) - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    @property
    def half_index(self) -> int:
        """Index of the node that equals 1/2."""
        return int(np.searchsorted(self.nodes, 0.5))

    def cell_of(self, x):
        """Index of the cell containing x (right-closed at 1)."""
        idx = np.searchsorted(self.nodes, x, side="right") - 1
        return np.clip(idx, 0, self.cell_count - 1)


def build_mesh(cells: int, grading: float) -> GradedMesh:
    """Graded mesh with nodes (i/N)**p and 1/2 inserted as an exact node."""
    if cells < 16:
        raise ValueError("need at least 16 cells")
    if grading < 1.0:
        raise ValueError("grading exponent must be >= 1")
    nodes = (np.arange(cells + 1) / cells) ** float(grading)
    nodes[0] = 0.0
    nodes[-1] = 1.0
    if 0.5 not in nodes:
        k = int(np.argmin(np.abs(nodes - 0.5)))
        k = min(max(k, 1), cells - 1)  # never displace an endpoint
        nodes[k] = 0.5
    return GradedMesh(nodes=nodes, grading_exponent=float(grading))


@dataclass
class GridFunction:
    """Function on a mesh, stored as cell averages or nodal values."""

    mesh: GradedMesh
    values: np.ndarray
    kind: str  # "cell" or "nodal"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n = self.mesh.cell_count
        if self.kind == "cell":
            if len(self.values) != n:
                raise ValueError("cell-average values must have length cell_count")
        elif self.kind == "nodal":
            if len(self.values) != n + 1:
                raise ValueError("nodal values must have length cell_count + 1")
        else:
            raise ValueError("kind must be 'cell' or 'nodal'")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_callable(cls, mesh: GradedMesh, f, kind="nodal", limit0=None, limit1=None):
        """Sample f; endpoint values may be overridden by analytic limits."""
        if kind == "nodal":
            xs = mesh.nodes.copy()
            vals = np.empty_like(xs)
            lo = 1 if limit0 is not None else 0
            hi = len(xs) - 1 if limit1 is not None else len(xs)
            vals[lo:hi] = f(xs[lo:hi])
            if limit0 is not None:
                vals[0] = limit0
            if limit1 is not None:
                vals[-1] = limit1
            return cls(mesh, vals, "nodal")
        vals = f(mesh.midpoints)
        return cls(mesh, np.asarray(vals, dtype=float), "cell")

    @classmethod
    def constant(cls, mesh: GradedMesh, c, kind="cell"):
        n = mesh.cell_count
        size = n if kind == "cell" else n + 1
        return cls(mesh, np.full(size, float(c)), kind)

    # -- core operations -------------------------------------------------------

    def integrate(self) -> float:
        if self.kind == "cell":
            return float(np.dot(self.values, self.mesh.widths))
        return float(np.trapezoid(self.values, self.mesh.nodes))

    def integrate_against(self, phi) -> float:
        """Integral of self * phi for a callable phi."""
        if self.kind == "cell":
            return float(np.dot(self.values * phi(self.mesh.midpoints), self.mesh.widths))
        prod = self.values * phi(self.mesh.nodes)
        return float(np.trapezoid(prod, self.mesh.nodes))

    def differentiate(self) -> "GridFunction":
        """Three-point finite differences on the nonuniform nodes (nodal only)."""
        if self.kind != "nodal":
            raise ValueError("differentiate requires nodal values")
        x = self.mesh.nodes
        v = self.values
        d = np.empty_like(v)
        h1 = x[1:-1] - x[:-2]
        h2 = x[2:] - x[1:-1]
        d[1:-1] = (-h2 / (h1 * (h1 + h2)) * v[:-2]
                   + (h2 - h1) / (h1 * h2) * v[1:-1]
                   + h1 / (h2 * (h1 + h2)) * v[2:])
        # one-sided second-order stencils at the endpoints
        h1, h2 = x[1] - x[0], x[2] - x[1]
        d[0] = (-(2 * h1 + h2) / (h1 * (h1 + h2)) * v[0]
                + (h1 + h2) / (h1 * h2) * v[1]
                - h1 / (h2 * (h1 + h2)) * v[2])
        h1, h2 = x[-2] - x[-3], x[-1] - x[-2]
        d[-1] = (h2 / (h1 * (h1 + h2)) * v[-3]
                 - (h1 + h2) / (h1 * h2) * v[-2]
                 + (h1 + 2 * h2) / (h2 * (h1 + h2)) * v[-1])
        return GridFunction(self.mesh, d, "nodal")

    def evaluate(self, x):
        """Piecewise-linear interpolation (nodal) or cell lookup (cell averages)."""
        if self.kind == "nodal":
            out = np.interp(x, self.mesh.nodes, self.values)
            return out if np.ndim(x) else float(out)
        idx = self.mesh.cell_of(x)
        out = self.values[idx]
        return out if np.ndim(x) else float(out)

    def evaluate_extrapolated(self, x):
        """Cell lookup, but inside the first cell use a local power-law fit.

        Intended for integrable-singular densities whose first-cell average
        underestimates the pointwise blow-up near 0.
        """
        if self.kind != "cell":
            raise ValueError("extrapolated evaluation applies to cell averages")
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.asarray(self.evaluate(xs), dtype=float).copy()
        first = xs < self.mesh.nodes[1]
        if np.any(first):
            m = self.mesh.midpoints
            v = self.values
            if v[1] > 0 and v[2] > 0:
                s = (np.log(v[2]) - np.log(v[1])) / (np.log(m[2]) - np.log(m[1]))
                amp = v[1] / m[1] ** s
                out[first] = amp * np.maximum(xs[first], 1e-300) ** s
        return out if np.ndim(x) else float(out[0])

    # -- representation changes -------------------------------------------------

    def to_cell(self) -> "GridFunction":
        if self.kind == "cell":
            return self
        v = self.values
        avg = 0.5 * (v[:-1] + v[1:])  # trapezoid within each cell
        return GridFunction(self.mesh, avg, "cell")

    def to_nodal(self) -> "GridFunction":
        if self.kind == "nodal":
            return self
        m = self.mesh.midpoints
        nodes = self.mesh.nodes
        inner = np.interp(nodes[1:-1], m, self.values)
        first = self.values[0]
        last = self.values[-1]
        vals = np.concatenate([[first], inner, [last]])
        return GridFunction(self.mesh, vals, "nodal")

    # -- serialization -----------------------------------------------------------

    def to_csv(self, path):
        xs = self.mesh.nodes if self.kind == "nodal" else self.mesh.midpoints
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "value"])
            for x, v in zip(xs, self.values):
                w.writerow([repr(float(x)), repr(float(v))])

    def to_json(self, path=None):
        doc = {
            "kind": self.kind,
            "grading_exponent": self.mesh.grading_exponent,
            "nodes": [float(x) for x in self.mesh.nodes],
            "values": [float(v) for v in self.values],
        }
        if path is not None:
            with open(path, "w") as fh:
                json.dump(doc, fh)
        return doc

    @classmethod
    def from_json(cls, doc_or_path):
        if isinstance(doc_or_path, (str,)):
            with open(doc_or_path) as fh:
                doc = json.load(fh)
        else:
            doc = doc_or_path
        mesh = GradedMesh(nodes=np.asarray(doc["nodes"], dtype=float),
                          grading_exponent=doc["grading_exponent"])
        return cls(mesh, np.asarray(doc["values"], dtype=float), doc["kind"])
