"""Closed oriented triangle meshes (unit icosphere, flat torus) and polar charts.

Triangles are treated as flat Euclidean triangles whose edge vectors come from
the embedding (sphere) or from the minimal-image periodic difference (torus).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ChartError, ParameterError, ResourceError

MAX_SUBDIVISIONS = 8
SPHERE_CHART_LIMIT = 1.0
TORUS_CHART_LIMIT = 0.25


class MeshKind(str, Enum):
    SPHERE = "Sphere"
    FLAT_TORUS = "FlatTorus"


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Oriented closed surface.

    ``vertices`` has shape (V, 3) for the sphere and (V, 2) for the torus, where
    torus coordinates are canonical representatives in [0, 1)^2.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    kind: MeshKind
    edge1: np.ndarray = field(init=False, repr=False)
    edge2: np.ndarray = field(init=False, repr=False)
    areas: np.ndarray = field(init=False, repr=False)
    inv_gram: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "kind", MeshKind(self.kind))
        e1 = self.difference(v[t[:, 1]], v[t[:, 0]])
        e2 = self.difference(v[t[:, 2]], v[t[:, 0]])
        g11 = np.einsum("ij,ij->i", e1, e1)
        g12 = np.einsum("ij,ij->i", e1, e2)
        g22 = np.einsum("ij,ij->i", e2, e2)
        det = g11 * g22 - g12 * g12
        if np.any(det <= 0):
            raise ParameterError("degenerate triangle in mesh")
        inv = np.empty((len(t), 2, 2))
        inv[:, 0, 0] = g22 / det
        inv[:, 0, 1] = inv[:, 1, 0] = -g12 / det
        inv[:, 1, 1] = g11 / det
        for name, arr in (("edge1", e1), ("edge2", e2), ("areas", 0.5 * np.sqrt(det)),
                          ("inv_gram", inv)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def difference(self, a, b):
        """Edge vector a - b (minimal image on the torus)."""
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        if self.kind is MeshKind.FLAT_TORUS:
            d = d - np.round(d)
        return d

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted index pairs."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def euler_characteristic(self) -> int:
        # closed surface: every edge carries two half-edges (parallel edges allowed)
        return self.n_vertices - 3 * self.n_triangles // 2 + self.n_triangles

    @property
    def total_area(self) -> float:
        return float(np.sum(self.areas))

    def mean_edge_length(self) -> float:
        e = self.edges()
        d = self.difference(self.vertices[e[:, 0]], self.vertices[e[:, 1]])
        return float(np.mean(np.linalg.norm(d, axis=1)))

    def barycenters(self) -> np.ndarray:
        """Triangle barycenters as surface points (projected / wrapped)."""
        v, t = self.vertices, self.triangles
        if self.kind is MeshKind.SPHERE:
            c = v[t].mean(axis=1)
            return c / np.linalg.norm(c, axis=1, keepdims=True)
        base = v[t[:, 0]]
        c = base + (self.edge1 + self.edge2) / 3.0
        return np.mod(c, 1.0)

    def surface_distance(self, points, center) -> np.ndarray:
        """Geodesic distance from ``center`` to each point."""
        points = np.atleast_2d(points)
        if self.kind is MeshKind.SPHERE:
            c = np.asarray(center, dtype=float)
            cross = np.linalg.norm(np.cross(points, c), axis=1)
            return np.arctan2(cross, points @ c)
        return np.linalg.norm(self.difference(points, center), axis=1)

    def check(self) -> None:
        """Assert the closed-oriented-surface invariants; raises AssertionError."""
        t = self.triangles
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        key = directed[:, 0] * self.n_vertices + directed[:, 1]
        rev = directed[:, 1] * self.n_vertices + directed[:, 0]
        if self.kind is MeshKind.SPHERE:
            assert len(np.unique(key)) == len(key), "directed edge used twice (orientation)"
        assert np.array_equal(np.sort(key), np.sort(rev)), "half-edges do not pair up"
        assert np.all(self.areas > 0)
        expected = 2 if self.kind is MeshKind.SPHERE else 0
        assert self.euler_characteristic() == expected
        if self.kind is MeshKind.SPHERE:
            v = self.vertices
            normal = np.cross(self.edge1, self.edge2)
            assert np.all(np.einsum("ij,ij->i", normal, v[t].mean(axis=1)) > 0), \
                "sphere triangles must be outward oriented"

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.kind.value.encode())
        h.update(self.vertices.tobytes())
        h.update(self.triangles.tobytes())
        return h.hexdigest()

    def to_json(self) -> str:
        return json.dumps({
            "kind": self.kind.value,
            "vertices": self.vertices.tolist(),
            "triangles": self.triangles.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "TriMesh":
        data = json.loads(text)
        try:
            return cls(np.array(data["vertices"], dtype=float),
                       np.array(data["triangles"], dtype=np.int64),
                       MeshKind(data["kind"]))
        except (KeyError, ValueError) as exc:
            raise ParameterError(f"malformed mesh JSON: {exc}") from exc


def _icosahedron():
    p = (1.0 + 5 ** 0.5) / 2.0
    v = np.array([
        [-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
        [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
        [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1],
    ], dtype=float)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def build_icosphere(subdivisions: int) -> TriMesh:
    """Unit icosphere: 20 * 4**s outward-oriented triangles."""
    if subdivisions < 0:
        raise ParameterError("subdivisions must be non-negative")
    if subdivisions > MAX_SUBDIVISIONS:
        raise ResourceError(f"subdivisions > {MAX_SUBDIVISIONS} exceeds the memory guard")
    v, f = _icosahedron()
    for _ in range(subdivisions):
        nv = len(v)
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e.sort(axis=1)
        uniq, inverse = np.unique(e[:, 0] * nv + e[:, 1], return_inverse=True)
        a, b = uniq // nv, uniq % nv
        mid = v[a] + v[b]
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        idx = nv + inverse.reshape(3, -1)
        m01, m12, m20 = idx
        v = np.vstack([v, mid])
        f = np.concatenate([
            np.stack([f[:, 0], m01, m20], axis=1),
            np.stack([m01, f[:, 1], m12], axis=1),
            np.stack([m20, m12, f[:, 2]], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ])
    return TriMesh(v, f, MeshKind.SPHERE)


def build_flat_torus(n: int) -> TriMesh:
    """n x n periodic grid on [0, 1)^2, two counter-clockwise triangles per cell."""
    if not 2 <= n <= 512:
        raise ParameterError("torus resolution must satisfy 2 <= n <= 512")
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i, j = i.ravel(), j.ravel()
    verts = np.stack([i / n, j / n], axis=1)

    def vid(a, b):
        return (a % n) * n + (b % n)

    v00, v10, v11, v01 = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
    tris = np.concatenate([np.stack([v00, v10, v11], axis=1),
                           np.stack([v00, v11, v01], axis=1)])
    return TriMesh(verts, tris, MeshKind.FLAT_TORUS)


def _tangent_frame(a):
    helper = np.array([0.0, 0.0, 1.0]) if abs(a[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    e1 = np.cross(helper, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(a, e1)
    return e1, e2


@dataclass(frozen=True, eq=False)
class Chart:
    """Polar chart of the geodesic ball B_rho(center).

    ``forward``/``inverse`` are geodesic polar coordinates (exponential map on
    the sphere, translation on the torus).  ``to_disk``/``from_disk`` give the
    normalized coordinate on the unit disk used by all surgeries; on the sphere
    it is the rescaled stereographic coordinate, so the ball is identified with
    the unit disk conformally.
    """

    kind: MeshKind
    center: np.ndarray
    radius: float
    frame: tuple = field(default=None, repr=False)

    def __post_init__(self):
        c = np.array(self.center, dtype=float)
        if self.kind is MeshKind.SPHERE:
            n = np.linalg.norm(c)
            if abs(n - 1.0) > 1e-15:
                # skip when already unit so serialized charts round-trip bitwise
                c = c / n
            if self.frame is None:
                object.__setattr__(self, "frame", _tangent_frame(c))
        else:
            c = np.mod(c, 1.0)
        c.setflags(write=False)
        object.__setattr__(self, "center", c)

    @property
    def _tan_half(self):
        return np.tan(self.radius / 2.0)

    def forward(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind is MeshKind.FLAT_TORUS:
            d = p - self.center
            return d - np.round(d)
        a = self.center
        e1, e2 = self.frame
        cosd = p @ a
        tang = p - cosd[:, None] * a
        sind = np.linalg.norm(tang, axis=1)
        dist = np.arctan2(sind, cosd)
        scale = np.where(sind > 0, dist / np.where(sind > 0, sind, 1.0), 1.0)
        out = np.stack([tang @ e1, tang @ e2], axis=1) * scale[:, None]
        # the antipode has no direction; put it at distance pi along e1
        out[(sind == 0) & (cosd < 0)] = (np.pi, 0.0)
        return out

    def inverse(self, coords) -> np.ndarray:
        y = np.atleast_2d(np.asarray(coords, dtype=float))
        if self.kind is MeshKind.FLAT_TORUS:
            return np.mod(y + self.center, 1.0)
        e1, e2 = self.frame
        d = np.linalg.norm(y, axis=1)
        sinc = np.where(d > 0, np.sin(d) / np.where(d > 0, d, 1.0), 1.0)
        return (np.cos(d)[:, None] * self.center
                + sinc[:, None] * (y[:, :1] * e1 + y[:, 1:] * e2))

    def to_disk(self, points) -> np.ndarray:
        y = self.forward(points)
        if self.kind is MeshKind.FLAT_TORUS:
            return y / self.radius
        d = np.linalg.norm(y, axis=1)
        factor = np.where(d > 0, np.tan(d / 2.0) / np.where(d > 0, d, 1.0), 0.5)
        return y * (factor / self._tan_half)[:, None]

    def from_disk(self, xs) -> np.ndarray:
        x = np.atleast_2d(np.asarray(xs, dtype=float))
        if self.kind is MeshKind.FLAT_TORUS:
            return self.inverse(x * self.radius)
        s = np.linalg.norm(x, axis=1)
        d = 2.0 * np.arctan(s * self._tan_half)
        factor = np.where(s > 0, d / np.where(s > 0, s, 1.0), 2.0 * self._tan_half)
        return self.inverse(x * factor[:, None])

    def contains(self, points) -> np.ndarray:
        return np.linalg.norm(self.forward(points), axis=1) < self.radius

    def subchart(self, fraction: float) -> "Chart":
        """Concentric chart whose normalized disk is the disk of radius ``fraction``."""
        if not 0 < fraction <= 1:
            raise ParameterError("subchart fraction must lie in (0, 1]")
        if self.kind is MeshKind.FLAT_TORUS:
            r = self.radius * fraction
        else:
            r = 2.0 * np.arctan(fraction * self._tan_half)
        return Chart(self.kind, self.center, float(r), self.frame)

    def disjoint_from(self, other: "Chart") -> bool:
        if self.kind is MeshKind.SPHERE:
            dist = float(np.arctan2(np.linalg.norm(np.cross(self.center, other.center)),
                                    self.center @ other.center))
        else:
            d = self.center - other.center
            dist = float(np.linalg.norm(d - np.round(d)))
        return dist >= self.radius + other.radius

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "center": self.center.tolist(), "radius": self.radius}

    @classmethod
    def from_dict(cls, data: dict) -> "Chart":
        return make_chart(MeshKind(data["kind"]), data["center"], data["radius"])


def make_chart(domain, center, radius: float) -> Chart:
    """Chart of geodesic radius ``radius`` at ``center``.

    ``domain`` is a TriMesh or a MeshKind.
    """
    kind = domain.kind if isinstance(domain, TriMesh) else MeshKind(domain)
    if not radius > 0:
        raise ChartError("chart radius must be positive")
    limit = SPHERE_CHART_LIMIT if kind is MeshKind.SPHERE else TORUS_CHART_LIMIT
    if radius >= limit:
        raise ChartError(f"chart radius {radius} exceeds the injectivity bound {limit}")
    center = np.asarray(center, dtype=float)
    if kind is MeshKind.SPHERE and (center.shape != (3,) or np.linalg.norm(center) == 0):
        raise ChartError("sphere chart center must be a non-zero 3-vector")
    if kind is MeshKind.FLAT_TORUS and center.shape != (2,):
        raise ChartError("torus chart center must be a 2-vector")
    return Chart(kind, center, float(radius))
