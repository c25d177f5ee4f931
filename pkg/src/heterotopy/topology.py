"""Brouwer degree through the Kronecker integral, map area, and the AM-GM bound."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .energy import area_jacobian, frobenius_sq
from .errors import ParameterError

FOUR_PI = 4.0 * math.pi
ENERGY_QUANTUM = 8.0 * math.pi
DEFAULT_SNAP_TOL = 0.05
# Gap threshold below which a class is declared trivial; not a sharp constant.
DEFAULT_GAP_ETA = 1.0
# Relative P1 energy deficit ~ RESOLUTION_CONSTANT * <image edge^2> (energy weighted);
# calibrated on icosphere identities and stereographic bubbles, slightly conservative.
RESOLUTION_CONSTANT = 0.22
DEFAULT_RESOLUTION_TOL = 0.01
_DEGENERATE_EPS = 1e-14


@dataclass(frozen=True)
class DegreeReport:
    raw: float
    snapped: int
    residual: float
    tolerance: float = DEFAULT_SNAP_TOL
    degenerate: int = 0
    resolution: float = 0.0
    resolution_tol: float = DEFAULT_RESOLUTION_TOL

    @property
    def reliable(self) -> bool:
        """Snaps cleanly and the field is resolved well enough to carry its degree's energy.

        The solid-angle sum of a closed mesh is always an integer multiple of 4 pi,
        so under-resolution shows up through ``resolution`` (the estimated relative
        energy deficit of the interpolant) rather than through the residual.
        """
        return self.residual < self.tolerance and self.resolution <= self.resolution_tol

    def to_dict(self) -> dict:
        return {"raw": self.raw, "snapped": self.snapped, "residual": self.residual,
                "resolution": self.resolution, "reliable": self.reliable}


@dataclass(frozen=True)
class HomotopyClassZ:
    """Element of pi_2(S^2) = Z, identified with its degree."""

    degree: int

    @classmethod
    def from_report(cls, report: DegreeReport) -> "HomotopyClassZ":
        if not report.reliable:
            raise ParameterError(
                f"degree report unreliable (raw={report.raw:.4f}, residual={report.residual:.3g})")
        return cls(report.snapped)

    def __add__(self, other):
        return HomotopyClassZ(self.degree + other.degree)

    def __neg__(self):
        return HomotopyClassZ(-self.degree)

    def __mul__(self, k: int):
        return HomotopyClassZ(k * self.degree)

    __rmul__ = __mul__


def oriented_solid_angles(a, b, c):
    """Signed solid angles of spherical triangles (a, b, c) of unit vectors.

    Van Oosterom-Strackee: tan(omega/2) = a.(b x c) / (1 + a.b + b.c + c.a).
    Returns (omega, degenerate_mask); degenerate triangles (coplanar with the
    origin, spanning at least a half great circle) get omega = 0.
    """
    num = np.einsum("ij,ij->i", a, np.cross(b, c))
    den = (1.0 + np.einsum("ij,ij->i", a, b) + np.einsum("ij,ij->i", b, c)
           + np.einsum("ij,ij->i", c, a))
    degenerate = (np.abs(num) <= _DEGENERATE_EPS) & (den <= _DEGENERATE_EPS)
    omega = 2.0 * np.arctan2(num, den)
    omega[degenerate] = 0.0
    return omega, degenerate


def triangle_solid_angles(field):
    v = field.values
    t = field.mesh.triangles
    return oriented_solid_angles(v[t[:, 0]], v[t[:, 1]], v[t[:, 2]])


def resolution_deficit(field, mask=None) -> float:
    """Estimated relative energy deficit of the piecewise-affine interpolant.

    RESOLUTION_CONSTANT times the energy-weighted mean of squared image edge lengths.
    """
    mesh, v = field.mesh, field.values
    t = mesh.triangles
    sq = frobenius_sq(mesh, v)
    edge2 = (np.sum((v[t[:, 1]] - v[t[:, 0]]) ** 2, axis=1)
             + np.sum((v[t[:, 2]] - v[t[:, 1]]) ** 2, axis=1)
             + np.sum((v[t[:, 0]] - v[t[:, 2]]) ** 2, axis=1)) / 3.0
    weight = mesh.areas * sq
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        weight, edge2 = weight[mask], edge2[mask]
    total = math.fsum(weight)
    if total <= 0:
        return 0.0
    return RESOLUTION_CONSTANT * math.fsum(weight * edge2) / total


def brouwer_degree(field, tol: float = DEFAULT_SNAP_TOL,
                   resolution_tol: float = DEFAULT_RESOLUTION_TOL) -> DegreeReport:
    omega, degenerate = triangle_solid_angles(field)
    raw = math.fsum(omega) / FOUR_PI
    snapped = int(round(raw))
    return DegreeReport(raw, snapped, abs(raw - snapped), tol, int(degenerate.sum()),
                        resolution_deficit(field), resolution_tol)


def local_degree(field, mask, tol: float = DEFAULT_SNAP_TOL) -> DegreeReport:
    """Degree contribution of the triangles in ``mask``, normalized by 4 pi."""
    omega, degenerate = triangle_solid_angles(field)
    mask = np.asarray(mask, dtype=bool)
    raw = math.fsum(omega[mask]) / FOUR_PI
    snapped = int(round(raw))
    return DegreeReport(raw, snapped, abs(raw - snapped), tol, int(degenerate[mask].sum()),
                        resolution_deficit(field, mask))


def jacobian_integrals(field) -> tuple[float, float]:
    """(signed, unsigned) integrals of the Jacobian: sums of image solid angles."""
    omega, _ = triangle_solid_angles(field)
    return math.fsum(omega), math.fsum(np.abs(omega))


@dataclass(frozen=True)
class AmgmCheck:
    ok: bool
    min_slack: float
    slack: np.ndarray
    affine_area: float

    def __bool__(self):
        return self.ok


def check_amgm_bound(field, atol: float = 1e-9) -> AmgmCheck:
    """Verify 2|J_T| <= |L_T|^2 on every triangle for the affine interpolant.

    ``slack`` is |L_T|^2 - 2 J_T per triangle; ``affine_area`` is the sum of
    areas of the chordal image triangles, so 2 * affine_area <= energy.
    """
    mesh = field.mesh
    sq = frobenius_sq(mesh, field.values)
    jac = area_jacobian(mesh, field.values)
    slack = sq - 2.0 * jac
    scale = np.maximum(sq, 1.0)
    ok = bool(np.all(slack >= -atol * scale))
    return AmgmCheck(ok, float(slack.min()) if len(slack) else 0.0, slack,
                     math.fsum(mesh.areas * jac))


def etop_sphere(cls) -> float:
    """Topological energy of a class in pi_2(S^2): 2^(2/2) |S^2| |deg| = 8 pi |deg|."""
    degree = cls.degree if isinstance(cls, HomotopyClassZ) else int(cls)
    return ENERGY_QUANTUM * abs(degree)


def is_trivial_by_gap(energy: float, eta: float = DEFAULT_GAP_ETA) -> bool:
    """Energies below the gap threshold can only carry the trivial class."""
    return energy < eta
