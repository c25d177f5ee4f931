"""Closed-form map surgeries localized in charts.

All radii and parameters are fractions of the chart radius: a chart is read
through its normalized coordinate ``chart.to_disk``, which identifies the ball
with the unit disk conformally, so the conformal identities of the constructions
(inversion in a circle, rescaling) hold exactly on the surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, SurgeryError
from .maps import (AnalyticMap, Constant, DiskConstant, DiskBubble, DiskRestriction,
                   disk_trace, map_from_dict, normalize)
from .mesh import Chart, MeshKind

TRACE_TOL = 1e-6
TRACE_SAMPLES = 256


def _check_traces(a, b, what: str):
    gap = float(np.max(np.linalg.norm(a - b, axis=1)))
    if gap > TRACE_TOL:
        raise SurgeryError(f"{what}: boundary traces differ by {gap:.3e}")


def _chart_trace(amap: AnalyticMap, chart: Chart, radius: float = 1.0, n: int = TRACE_SAMPLES):
    theta = 2.0 * np.pi * np.arange(n) / n
    xs = radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return amap.evaluate(chart.from_disk(xs))


def _split(chart: Chart, pts):
    x = chart.to_disk(pts)
    s = np.linalg.norm(x, axis=1)
    return x, s, s < 1.0


# ---------------------------------------------------------------------------
# surgery records on surface maps


@dataclass(frozen=True)
class Opening:
    """Radial opening: constant prev(center) on |x| <= r, x -> (|x|-r)/(1-r) x/|x| outside."""

    chart: Chart
    r: float

    def apply(self, prev: AnalyticMap, pts):
        out = prev.evaluate(pts)
        x, s, inside = _split(self.chart, pts)
        if not inside.any():
            return out
        core = inside & (s <= self.r)
        ring = inside & ~core
        if core.any():
            out[core] = prev.evaluate(self.chart.center[None, :])[0]
        if ring.any():
            xr, sr = x[ring], s[ring]
            y = xr * ((sr - self.r) / ((1.0 - self.r) * sr))[:, None]
            out[ring] = prev.evaluate(self.chart.from_disk(y))
        return out

    def to_dict(self):
        return {"type": "Opening", "chart": self.chart.to_dict(), "r": self.r}

    @classmethod
    def from_dict(cls, d):
        return cls(Chart.from_dict(d["chart"]), float(d["r"]))


@dataclass(frozen=True)
class BubbleInsertion:
    """U(t,x) = u0(x) for |x| >= t, u0(t^2 x/|x|^2) for t^2 <= |x| <= t, u1(x/t^2) inside."""

    chart: Chart
    inner: object
    t: float

    def apply(self, prev: AnalyticMap, pts):
        out = prev.evaluate(pts)
        x, s, _ = _split(self.chart, pts)
        t = self.t
        t2 = t * t
        ring = (s < t) & (s >= t2)
        core = s < t2
        if ring.any():
            xr, sr = x[ring], s[ring]
            y = xr * (t2 / sr ** 2)[:, None]
            out[ring] = prev.evaluate(self.chart.from_disk(y))
        if core.any():
            out[core] = self.inner.evaluate(x[core] / t2)
        return out

    def to_dict(self):
        return {"type": "BubbleInsertion", "chart": self.chart.to_dict(),
                "inner": self.inner.to_dict(), "t": self.t}

    @classmethod
    def from_dict(cls, d):
        return cls(Chart.from_dict(d["chart"]), map_from_dict(d["inner"]), float(d["t"]))


@dataclass(frozen=True)
class Implant:
    """Replace the map on the chart ball by a disk map read in normalized coordinates."""

    chart: Chart
    inner: object

    def apply(self, prev: AnalyticMap, pts):
        out = prev.evaluate(pts)
        x, _, inside = _split(self.chart, pts)
        if inside.any():
            out[inside] = self.inner.evaluate(x[inside])
        return out

    def to_dict(self):
        return {"type": "Implant", "chart": self.chart.to_dict(), "inner": self.inner.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(Chart.from_dict(d["chart"]), map_from_dict(d["inner"]))


# ---------------------------------------------------------------------------
# disk-map constructions


@dataclass(frozen=True)
class ReflectGlue:
    """w(x) = v(x/rho) for |x| <= rho and u(rho x/|x|^2) for |x| >= rho.

    With u constant on B_rho the boundary value is that constant, and since the
    inversion is conformal the energy of w is E(u) + E(v).
    """

    u: object
    v: object
    rho: float

    def evaluate(self, xs):
        x = np.atleast_2d(np.asarray(xs, dtype=float))
        s = np.linalg.norm(x, axis=1)
        out = np.empty((len(x), 3))
        inner = s <= self.rho
        if inner.any():
            out[inner] = self.v.evaluate(x[inner] / self.rho)
        outer = ~inner
        if outer.any():
            out[outer] = self.u.evaluate(x[outer] * (self.rho / s[outer] ** 2)[:, None])
        return out

    def boundary_constant(self):
        return self.u.evaluate(np.zeros((1, 2)))[0]

    def to_dict(self):
        return {"type": "ReflectGlue", "u": self.u.to_dict(), "v": self.v.to_dict(),
                "rho": self.rho}

    @classmethod
    def from_dict(cls, d):
        return cls(map_from_dict(d["u"]), map_from_dict(d["v"]), float(d["rho"]))


@dataclass(frozen=True)
class RotatingTrace:
    """Boundary family U(s, e) = Rot(axis, (1 - s) angle) v(e); U(1, .) is the trace of v."""

    v: object
    axis: tuple = (0.0, 0.0, 1.0)
    angle: float = 0.0

    def evaluate(self, s, directions):
        s = np.broadcast_to(np.asarray(s, dtype=float), (len(directions),))
        vals = self.v.evaluate(directions)
        k = normalize(np.asarray(self.axis, dtype=float))
        phi = (1.0 - s) * self.angle
        c, sn = np.cos(phi)[:, None], np.sin(phi)[:, None]
        kv = vals @ k
        return (vals * c + np.cross(k, vals) * sn + np.outer(kv, k) * (1.0 - c))

    def to_dict(self):
        return {"type": "RotatingTrace", "v": self.v.to_dict(), "axis": list(self.axis),
                "angle": self.angle}

    @classmethod
    def from_dict(cls, d):
        return cls(map_from_dict(d["v"]), tuple(d["axis"]), float(d["angle"]))


@dataclass(frozen=True)
class CylinderHomotopy:
    """W(s,x) = v(2x/(1+s)) for 2|x| <= 1+s, U((1+s)/|x| - 1, x/|x|) otherwise."""

    family: object
    v: object
    s: float

    def evaluate(self, xs):
        x = np.atleast_2d(np.asarray(xs, dtype=float))
        r = np.linalg.norm(x, axis=1)
        out = np.empty((len(x), 3))
        inner = 2.0 * r <= 1.0 + self.s
        if inner.any():
            out[inner] = self.v.evaluate(2.0 * x[inner] / (1.0 + self.s))
        outer = ~inner
        if outer.any():
            ro = r[outer]
            param = np.clip((1.0 + self.s) / ro - 1.0, 0.0, 1.0)
            out[outer] = self.family.evaluate(param, x[outer] / ro[:, None])
        return out

    def boundary_constant(self):
        return None

    def to_dict(self):
        return {"type": "CylinderHomotopy", "family": self.family.to_dict(),
                "v": self.v.to_dict(), "s": self.s}

    @classmethod
    def from_dict(cls, d):
        return cls(map_from_dict(d["family"]), map_from_dict(d["v"]), float(d["s"]))


RECORD_TYPES = {c.__name__: c for c in (Opening, BubbleInsertion, Implant, ReflectGlue,
                                         RotatingTrace, CylinderHomotopy)}


# ---------------------------------------------------------------------------
# operators


def open_map(base: AnalyticMap, chart: Chart, r: float) -> AnalyticMap:
    """Make ``base`` constant on the normalized disk of radius r, unchanged off the chart."""
    if not 0 < r < 1:
        raise ParameterError("opening radius must satisfy 0 < r < 1 (chart units)")
    return base.with_surgery(Opening(chart, float(r)))


def insert_bubble(base: AnalyticMap, chart: Chart, inner, t: float) -> AnalyticMap:
    """Graft ``inner`` into the chart by the conformal-inversion insertion at scale t.

    The traces of ``inner`` and of ``base`` on the chart boundary must agree.
    """
    if not 0 < t < 1:
        raise ParameterError("insertion parameter must satisfy 0 < t < 1")
    _check_traces(_chart_trace(base, chart), disk_trace(inner, TRACE_SAMPLES),
                  "insert_bubble")
    return base.with_surgery(BubbleInsertion(chart, inner, float(t)))


def with_boundary(bubble, value):
    """Copy of a disk bubble/constant whose boundary value is ``value``."""
    value = tuple(float(c) for c in normalize(np.asarray(value, dtype=float)))
    if isinstance(bubble, DiskBubble):
        return DiskBubble(bubble.d, bubble.lam, value)
    if isinstance(bubble, DiskConstant):
        return DiskConstant(value)
    raise SurgeryError(f"cannot retarget boundary of {type(bubble).__name__}")


def open_and_insert(base: AnalyticMap, chart: Chart, inner, t: float,
                    tau: float = 0.9) -> AnalyticMap:
    """Open ``base`` at radius t, then insert ``inner`` into the constant disk B_t.

    ``inner`` is retargeted to the value base(center).  Inside the constant disk
    the insertion at parameter tau places inner(x / (t tau^2)); the annular copy
    of the base is constant there, so no energy is duplicated.
    """
    opened = open_map(base, chart, t)
    b = base.evaluate(chart.center[None, :])[0]
    return insert_bubble(opened, chart.subchart(t), with_boundary(inner, b), tau)


def implant(background: AnalyticMap, chart: Chart, inner) -> AnalyticMap:
    _check_traces(_chart_trace(background, chart), disk_trace(inner, TRACE_SAMPLES),
                  "implant")
    return background.with_surgery(Implant(chart, inner))


def reflect_glue(u: AnalyticMap, v: AnalyticMap, chart: Chart, rho_inner: float) -> ReflectGlue:
    """Realize the disparity of u and v on the chart ball as a single disk bubble."""
    if not 0 < rho_inner < 1:
        raise ParameterError("rho_inner must satisfy 0 < rho_inner < 1")
    du, dv = DiskRestriction(u, chart), DiskRestriction(v, chart)
    _check_traces(disk_trace(du), disk_trace(dv), "reflect_glue")
    theta = 2.0 * np.pi * np.arange(64) / 64
    probe = np.concatenate([np.zeros((1, 2))] + [
        frac * rho_inner * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        for frac in (0.5, 1.0)])
    vals = du.evaluate(probe)
    if np.max(np.linalg.norm(vals - vals[0], axis=1)) > TRACE_TOL:
        raise SurgeryError("reflect_glue: u must be constant on the inner disk (open it first)")
    return ReflectGlue(du, dv, float(rho_inner))


def concatenate(f, g, charts, background=None) -> AnalyticMap:
    """Place disk bubbles f and g in two disjoint charts over a constant background."""
    c1, c2 = charts
    if c1.kind is not c2.kind:
        raise ParameterError("charts live on different surfaces")
    if not c1.disjoint_from(c2):
        raise ParameterError("concatenate needs disjoint charts")
    bf, bg = f.boundary_constant(), g.boundary_constant()
    if bf is None or bg is None:
        raise SurgeryError("concatenate needs bubbles with constant boundary value")
    if np.linalg.norm(bf - bg) > TRACE_TOL:
        raise SurgeryError("bubbles have different boundary values")
    if background is None:
        background = AnalyticMap(Constant(tuple(bf)), domain=c1.kind)
    return implant(implant(background, c1, f), c2, g)


def cylinder_homotopy(family, v, s: float) -> CylinderHomotopy:
    if not 0 <= s <= 1:
        raise ParameterError("s must lie in [0, 1]")
    theta = 2.0 * np.pi * np.arange(TRACE_SAMPLES) / TRACE_SAMPLES
    e = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    _check_traces(family.evaluate(1.0, e), v.evaluate(e), "cylinder_homotopy")
    return CylinderHomotopy(family, v, float(s))


def bubble_map(inner, chart: Chart) -> AnalyticMap:
    """A constant-boundary disk map placed in ``chart`` over its own boundary value."""
    b = inner.boundary_constant()
    if b is None:
        raise SurgeryError("disk map has no constant boundary value")
    return AnalyticMap(Constant(tuple(b)), (Implant(chart, inner),), chart.kind)


def chart_mask(mesh, chart: Chart, radius: float = 1.0) -> np.ndarray:
    """Triangles whose barycenter lies in the normalized disk of the given radius."""
    x = chart.to_disk(mesh.barycenters())
    return np.linalg.norm(x, axis=1) < radius


__all__ = ["Opening", "BubbleInsertion", "Implant", "ReflectGlue", "RotatingTrace",
           "CylinderHomotopy", "open_map", "insert_bubble", "open_and_insert", "implant",
           "reflect_glue", "concatenate", "cylinder_homotopy", "bubble_map", "with_boundary",
           "chart_mask", "MeshKind"]
