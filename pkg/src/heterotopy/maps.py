"""Maps into S^2: closed-form descriptions, disk maps, and sampled vertex fields.

Complex stereographic conventions: a unit vector y corresponds to
z = (y1 + i y2) / (1 + y3), so the north pole is z = 0, and the inverse
projection w -> (2 Re w, 2 Im w, 1 - |w|^2) / (1 + |w|^2) preserves
orientation.  Points with |z| > 1 are carried as 1/z to avoid overflow.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CompositionError, ParameterError
from .mesh import MeshKind, TriMesh

NORTH = np.array([0.0, 0.0, 1.0])
SOUTH = np.array([0.0, 0.0, -1.0])


def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def rotation_taking(src, dst) -> np.ndarray:
    """Proper rotation R with R @ src = dst (unit vectors)."""
    a, b = normalize(src), normalize(dst)
    v = np.cross(a, b)
    c = float(a @ b)
    if c < -1 + 1e-12:
        helper = np.array([1.0, 0, 0]) if abs(a[0]) < 0.9 else np.array([0, 1.0, 0])
        axis = normalize(np.cross(a, helper))
        return 2.0 * np.outer(axis, axis) - np.eye(3)
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx / (1.0 + c)


def _to_plane(y):
    """Unit vectors -> (q, inverted): q = z if not inverted else 1/z, |q| <= 1."""
    north = y[:, 2] >= 0
    safe_n = np.where(north, 1.0 + y[:, 2], 1.0)
    safe_s = np.where(north, 1.0, 1.0 - y[:, 2])
    q = np.where(north, (y[:, 0] + 1j * y[:, 1]) / safe_n,
                 (y[:, 0] - 1j * y[:, 1]) / safe_s)
    return q, ~north


def _from_plane(q, inverted):
    """Inverse of the stereographic projection from the pair (q, inverted)."""
    q = np.asarray(q, dtype=complex)
    inverted = np.asarray(inverted, dtype=bool)
    big = np.abs(q) > 1
    q = np.where(big, 1.0 / np.where(big, q, 1.0), q)
    inverted = inverted ^ big
    r2 = (q * q.conj()).real
    denom = 1.0 + r2
    out = np.empty(q.shape + (3,))
    out[..., 0] = 2.0 * q.real / denom
    out[..., 1] = np.where(inverted, -2.0 * q.imag, 2.0 * q.imag) / denom
    out[..., 2] = np.where(inverted, r2 - 1.0, 1.0 - r2) / denom
    return out


def _power(q, inverted, d: int, lam: float):
    """Apply z -> (z/lam)^d for d > 0, (conj z / lam)^|d| for d < 0."""
    k = abs(d)
    if d < 0:
        q = q.conj()
    # z -> (z/lam)^k ; if q carries 1/z then 1/w = (lam * q)^k
    return np.where(inverted, (lam * q) ** k, (q / lam) ** k), inverted


# ---------------------------------------------------------------------------
# base maps


@dataclass(frozen=True)
class Constant:
    value: tuple

    def __post_init__(self):
        v = normalize(np.asarray(self.value, dtype=float))
        object.__setattr__(self, "value", tuple(float(c) for c in v))

    domains = (MeshKind.SPHERE, MeshKind.FLAT_TORUS)

    def evaluate(self, points):
        n = len(np.atleast_2d(points))
        return np.tile(np.array(self.value), (n, 1))

    def to_dict(self):
        return {"type": "Constant", "value": list(self.value)}


@dataclass(frozen=True)
class IdentitySphere:
    domains = (MeshKind.SPHERE,)

    def evaluate(self, points):
        return normalize(np.atleast_2d(points))

    def to_dict(self):
        return {"type": "IdentitySphere"}


@dataclass(frozen=True)
class StereographicPower:
    """z -> (z / lam)^d in stereographic coordinates centered at rotation @ north.

    Negative degrees use the antiholomorphic power (conj z / lam)^|d|.
    """

    d: int
    lam: float = 1.0
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    domains = (MeshKind.SPHERE,)

    def __post_init__(self):
        if int(self.d) == 0:
            raise ParameterError("degree 0: use Constant instead")
        if not self.lam > 0:
            raise ParameterError("scale lam must be positive")
        rot = np.array(self.rotation, dtype=float)
        if rot.shape != (3, 3) or not np.allclose(rot @ rot.T, np.eye(3), atol=1e-10):
            raise ParameterError("rotation must be orthogonal 3x3")
        rot.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "d", int(self.d))

    def evaluate(self, points):
        y = normalize(np.atleast_2d(points)) @ self.rotation
        q, inv = _to_plane(y)
        w, inv = _power(q, inv, self.d, self.lam)
        return _from_plane(w, inv) @ self.rotation.T

    def to_dict(self):
        return {"type": "StereographicPower", "d": self.d, "lam": self.lam,
                "rotation": self.rotation.tolist()}


def _latitude(alpha, angle):
    sa, ca = np.sin(alpha), np.cos(alpha)
    return np.stack([sa * np.cos(angle), sa * np.sin(angle),
                     np.broadcast_to(ca, np.shape(angle))], axis=1)


@dataclass(frozen=True)
class ChartWinding:
    """Angular map: the chart angle winds once around the latitude circle at polar angle alpha.

    It has no radial derivative in the chart's conformal coordinate, so its
    energy density is sin(alpha)^2 / |x|^2 (singular only at the chart center).
    """

    chart: object
    alpha: float

    domains = (MeshKind.SPHERE, MeshKind.FLAT_TORUS)

    def evaluate(self, points):
        x = self.chart.to_disk(np.atleast_2d(points))
        return _latitude(self.alpha, np.arctan2(x[:, 1], x[:, 0]))

    def to_dict(self):
        return {"type": "ChartWinding", "chart": self.chart.to_dict(), "alpha": self.alpha}


def stereographic_power_map(d: int, lam: float = 1.0, center=NORTH) -> "AnalyticMap":
    rot = rotation_taking(NORTH, center)
    return AnalyticMap(StereographicPower(d, lam, rot))


def constant_map(value, domain=MeshKind.SPHERE) -> "AnalyticMap":
    return AnalyticMap(Constant(tuple(value)), domain=MeshKind(domain))


def identity_map() -> "AnalyticMap":
    return AnalyticMap(IdentitySphere())


# ---------------------------------------------------------------------------
# disk maps: B^2 -> S^2, evaluated on (N, 2) points of the closed unit disk


@dataclass(frozen=True)
class DiskConstant:
    value: tuple

    def __post_init__(self):
        v = normalize(np.asarray(self.value, dtype=float))
        object.__setattr__(self, "value", tuple(float(c) for c in v))

    def evaluate(self, xs):
        return np.tile(np.array(self.value), (len(np.atleast_2d(xs)), 1))

    def boundary_constant(self):
        return np.array(self.value)

    def to_dict(self):
        return {"type": "DiskConstant", "value": list(self.value)}


@dataclass(frozen=True)
class DiskBubble:
    """Degree-d disk map equal to ``boundary`` on and outside the unit circle.

    In the stereographic coordinate w centered at the antipode of ``boundary``,
    w = (x / lam)^k / (1 - |x|^(2k)) with k = |d| (x replaced by its conjugate
    when d < 0).  Near the center it is the rescaled holomorphic power; the
    factor 1/(1 - |x|^(2k)) is the harmonic truncation sending the unit circle
    to ``boundary``.  Its energy exceeds 8 pi |d| by roughly 16 pi |d| lam^(2|d|).
    """

    d: int
    lam: float
    boundary: tuple = (0.0, 0.0, -1.0)

    def __post_init__(self):
        if int(self.d) == 0:
            raise ParameterError("degree 0 bubble: use DiskConstant")
        if not 0 < self.lam:
            raise ParameterError("lam must be positive")
        b = normalize(np.asarray(self.boundary, dtype=float))
        object.__setattr__(self, "boundary", tuple(float(c) for c in b))
        object.__setattr__(self, "d", int(self.d))

    @property
    def _rotation(self):
        return rotation_taking(SOUTH, np.array(self.boundary))

    def evaluate(self, xs):
        x = np.atleast_2d(np.asarray(xs, dtype=float))
        k = abs(self.d)
        z = x[:, 0] + 1j * x[:, 1]
        if self.d < 0:
            z = z.conj()
        s = np.abs(z) ** (2 * k)
        inside = s < 1
        # 1/w = lam^k (1 - |x|^2k) / x^k, bounded near the boundary
        num = (self.lam ** k) * np.where(inside, 1.0 - s, 0.0)
        zk = z ** k
        small = np.abs(zk) <= num
        w = np.where(small, zk / np.where(small, num, 1.0),
                     num / np.where(small, 1.0, zk))
        vals = _from_plane(w, ~small)
        return vals @ self._rotation.T

    def boundary_constant(self):
        return np.array(self.boundary)

    def core_radius(self) -> float:
        """Disk radius inside which half of the bubble energy lies."""
        return float(self.lam)

    def to_dict(self):
        return {"type": "DiskBubble", "d": self.d, "lam": self.lam,
                "boundary": list(self.boundary)}


@dataclass(frozen=True)
class DiskRestriction:
    """Restriction of a surface map to a chart, read in normalized disk coordinates."""

    source: "AnalyticMap"
    chart: object

    def evaluate(self, xs):
        x = np.atleast_2d(np.asarray(xs, dtype=float))
        return self.source.evaluate(self.chart.from_disk(x))

    def boundary_constant(self):
        return None

    def to_dict(self):
        return {"type": "DiskRestriction", "source": self.source.to_dict(),
                "chart": self.chart.to_dict()}


@dataclass(frozen=True)
class DiskCap:
    """Disk map filling the latitude circle at polar angle alpha.

    Polar angle alpha * r (3 - r^2) / 2: smooth at the origin, trace equal to
    ChartWinding(alpha) and vanishing radial derivative on the unit circle.
    """

    alpha: float

    def evaluate(self, xs):
        x = np.atleast_2d(np.asarray(xs, dtype=float))
        r = np.minimum(np.hypot(x[:, 0], x[:, 1]), 1.0)
        return _latitude(self.alpha * r * (3.0 - r * r) / 2.0, np.arctan2(x[:, 1], x[:, 0]))

    def boundary_constant(self):
        return None

    def to_dict(self):
        return {"type": "DiskCap", "alpha": self.alpha}


def disk_trace(disk_map, n: int = 256) -> np.ndarray:
    theta = 2.0 * np.pi * np.arange(n) / n
    return disk_map.evaluate(np.stack([np.cos(theta), np.sin(theta)], axis=1))


# ---------------------------------------------------------------------------
# surface maps


@dataclass(frozen=True)
class AnalyticMap:
    """Base map followed by an ordered stack of surgeries (applied last-in outermost)."""

    base: object
    surgeries: tuple = ()
    domain: MeshKind = None

    def __post_init__(self):
        dom = self.domain
        if dom is None:
            dom = self.base.domains[0]
        dom = MeshKind(dom)
        if dom not in self.base.domains:
            raise CompositionError(f"{type(self.base).__name__} is not defined on {dom.value}")
        object.__setattr__(self, "domain", dom)
        object.__setattr__(self, "surgeries", tuple(self.surgeries))

    def with_surgery(self, record) -> "AnalyticMap":
        if record.chart.kind is not self.domain:
            raise CompositionError("surgery chart lives on a different surface type")
        return AnalyticMap(self.base, self.surgeries + (record,), self.domain)

    def without_last(self) -> "AnalyticMap":
        return AnalyticMap(self.base, self.surgeries[:-1], self.domain)

    def evaluate(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if not self.surgeries:
            return self.base.evaluate(pts)
        return self.surgeries[-1].apply(self.without_last(), pts)

    def __call__(self, points):
        return self.evaluate(points)

    def to_dict(self) -> dict:
        return {"domain": self.domain.value, "base": self.base.to_dict(),
                "surgeries": [s.to_dict() for s in self.surgeries]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "AnalyticMap":
        return map_from_dict(json.loads(text))


def map_from_dict(data: dict):
    """Rebuild an AnalyticMap or a disk map from its tagged-union dict."""
    from . import surgery
    from .mesh import Chart

    if "base" in data:
        base = map_from_dict(data["base"])
        surgeries = tuple(map_from_dict(s) for s in data.get("surgeries", ()))
        return AnalyticMap(base, surgeries, MeshKind(data.get("domain", "Sphere")))
    kind = data.get("type")
    if kind == "Constant":
        return Constant(tuple(data["value"]))
    if kind == "IdentitySphere":
        return IdentitySphere()
    if kind == "StereographicPower":
        return StereographicPower(data["d"], data["lam"], np.array(data["rotation"]))
    if kind == "ChartWinding":
        return ChartWinding(Chart.from_dict(data["chart"]), data["alpha"])
    if kind == "DiskCap":
        return DiskCap(data["alpha"])
    if kind == "DiskConstant":
        return DiskConstant(tuple(data["value"]))
    if kind == "DiskBubble":
        return DiskBubble(data["d"], data["lam"], tuple(data["boundary"]))
    if kind == "DiskRestriction":
        return DiskRestriction(map_from_dict(data["source"]), Chart.from_dict(data["chart"]))
    if kind in surgery.RECORD_TYPES:
        return surgery.RECORD_TYPES[kind].from_dict(data)
    raise ParameterError(f"unknown map type {kind!r}")


# ---------------------------------------------------------------------------
# sampled fields


@dataclass(frozen=True, eq=False)
class VertexField:
    mesh: TriMesh
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.mesh.n_vertices, 3):
            raise ParameterError("values must have shape (n_vertices, 3)")
        err = np.abs(np.linalg.norm(v, axis=1) - 1.0)
        if not np.all(err <= 1e-9):
            raise ParameterError(f"vertex values not unit (max error {err.max():.2e})")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def rotated(self, rotation) -> "VertexField":
        return VertexField(self.mesh, self.values @ np.asarray(rotation).T)

    def to_json(self) -> str:
        return json.dumps({"mesh_hash": self.mesh.content_hash(),
                           "values": self.values.tolist()})

    @classmethod
    def from_json(cls, text: str, mesh: TriMesh) -> "VertexField":
        data = json.loads(text)
        if data.get("mesh_hash") != mesh.content_hash():
            raise ParameterError("vertex field was sampled on a different mesh")
        return cls(mesh, np.array(data["values"], dtype=float))


def sample(amap: AnalyticMap, mesh: TriMesh) -> VertexField:
    if amap.domain is not mesh.kind:
        raise CompositionError(f"map on {amap.domain.value} sampled on {mesh.kind.value} mesh")
    for rec in amap.surgeries:
        if rec.chart.kind is not mesh.kind:
            raise CompositionError("surgery chart does not live on the mesh surface")
    vals = amap.evaluate(mesh.vertices)
    return VertexField(mesh, normalize(vals))


def l_m_distance(a: VertexField, b: VertexField, p: float = 2.0) -> float:
    """(sum_T area(T) * mean_{vertices of T} |a - b|^p)^(1/p) with chordal distance."""
    if a.mesh is not b.mesh:
        raise ParameterError("fields live on different meshes")
    if p < 1:
        raise ParameterError("p must be >= 1")
    dist = np.linalg.norm(a.values - b.values, axis=1) ** p
    per = a.mesh.areas * dist[a.mesh.triangles].mean(axis=1)
    return math.fsum(per) ** (1.0 / p)


def fields_from(maps: Sequence[AnalyticMap], mesh: TriMesh) -> list:
    return [sample(m, mesh) for m in maps]


def field_digest(f: VertexField) -> str:
    return hashlib.sha256(f.values.tobytes()).hexdigest()
