"""Discrete Sobolev p-energy of piecewise-affine sphere-valued fields."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from dataclasses import field as dc_field

import numpy as np

from .errors import ParameterError, UnsupportedError


@dataclass(frozen=True)
class EnergyReport:
    total: float
    per_triangle: np.ndarray
    p: float
    mesh: object = dc_field(default=None, repr=False, compare=False)

    def to_json(self) -> str:
        return json.dumps({"p": self.p, "total": self.total,
                           "per_triangle": self.per_triangle.tolist()})


def _differences(mesh, values):
    t = mesh.triangles
    f0 = values[t[:, 0]]
    return values[t[:, 1]] - f0, values[t[:, 2]] - f0


def frobenius_sq(mesh, values) -> np.ndarray:
    """Per-triangle |L|_F^2 of the affine interpolant, L = D G^-1 in edge coordinates."""
    d1, d2 = _differences(mesh, values)
    g = mesh.inv_gram
    return (g[:, 0, 0] * np.einsum("ij,ij->i", d1, d1)
            + 2.0 * g[:, 0, 1] * np.einsum("ij,ij->i", d1, d2)
            + g[:, 1, 1] * np.einsum("ij,ij->i", d2, d2))


def area_jacobian(mesh, values) -> np.ndarray:
    """Per-triangle area factor sqrt(det(L^T L)) of the affine interpolant."""
    d1, d2 = _differences(mesh, values)
    cross = np.linalg.norm(np.cross(d1, d2), axis=1)
    return cross / (2.0 * mesh.areas)


def p_energy(field, p: float = 2.0) -> EnergyReport:
    """Sum over triangles of area * |L|_F^p."""
    if p < 1:
        raise ParameterError("p must be >= 1")
    mesh = field.mesh
    sq = frobenius_sq(mesh, field.values)
    sq = np.maximum(sq, 0.0)
    density = sq if p == 2 else sq ** (p / 2.0)
    per = mesh.areas * density
    return EnergyReport(math.fsum(per), per, float(p), mesh)


def energy_gradient(field, p: float = 2.0) -> np.ndarray:
    """Tangential gradient of the Dirichlet energy with respect to vertex values."""
    if p != 2:
        raise UnsupportedError("energy gradient is implemented for p = 2 only")
    mesh = field.mesh
    v = field.values
    d1, d2 = _differences(mesh, v)
    g = mesh.inv_gram
    w = 2.0 * mesh.areas
    g1 = w[:, None] * (g[:, 0, 0, None] * d1 + g[:, 0, 1, None] * d2)
    g2 = w[:, None] * (g[:, 0, 1, None] * d1 + g[:, 1, 1, None] * d2)
    t = mesh.triangles
    n = mesh.n_vertices
    grad = np.empty_like(v)
    for k in range(3):
        grad[:, k] = (np.bincount(t[:, 1], g1[:, k], minlength=n)
                      + np.bincount(t[:, 2], g2[:, k], minlength=n)
                      - np.bincount(t[:, 0], g1[:, k] + g2[:, k], minlength=n))
    return project_tangent(v, grad)


def project_tangent(values, vectors) -> np.ndarray:
    return vectors - np.einsum("ij,ij->i", values, vectors)[:, None] * values


def ball_energy(report: EnergyReport, chart, r: float) -> float:
    """Energy of triangles whose barycenter lies in the geodesic ball B_r(chart.center).

    This is the discrete mass mu(B_r).  ``r`` may exceed the chart radius; only
    the chart center is used.
    """
    mesh = report.mesh
    inside = mesh.surface_distance(mesh.barycenters(), chart.center) < r
    return math.fsum(report.per_triangle[inside])


def region_energy(report: EnergyReport, mask) -> float:
    return math.fsum(report.per_triangle[np.asarray(mask, dtype=bool)])
