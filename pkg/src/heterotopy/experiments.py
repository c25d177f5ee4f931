"""Desk-scale experiments: energy descent, E_top estimation, heterotopic
competitor sequences and bubbling detection for maps into S^2."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .energy import EnergyReport, energy_gradient, p_energy, project_tangent, region_energy
from .errors import NumericError, ParameterError
from .maps import (AnalyticMap, DiskBubble, VertexField, identity_map, l_m_distance,
                   normalize, sample)
from .mesh import MeshKind, TriMesh, build_icosphere, make_chart
from .surgery import bubble_map, chart_mask, implant, insert_bubble, open_and_insert, open_map
from .topology import (ENERGY_QUANTUM, FOUR_PI, brouwer_degree, check_amgm_bound,
                       etop_sphere, jacobian_integrals, oriented_solid_angles)

log = logging.getLogger(__name__)

DEFAULT_SEED = 0x5EED_2B0B_B1E5
DEFAULT_ETA = 1.0


# ---------------------------------------------------------------------------
# descent


@dataclass(frozen=True)
class MinimizeConfig:
    max_iters: int = 200
    step: float = 1e-3
    armijo_c: float = 1e-4
    grad_tol: float = 1e-7
    degree_guard: bool = True
    metric: str = "mass"
    max_step_growth: float = 2.0

    def __post_init__(self):
        if not self.step > 0:
            raise ParameterError("step must be positive")
        if not 0 < self.armijo_c < 1:
            raise ParameterError("armijo_c must lie in (0, 1)")
        if self.metric not in ("euclidean", "mass", "h1"):
            raise ParameterError(f"unknown metric {self.metric!r}")


@dataclass
class StepRecord:
    iter: int
    energy: float
    degree_raw: float
    degree: int
    step: float


@dataclass
class ExperimentTrace:
    records: list = field(default_factory=list)
    status: str = "MaxIters"
    drop_step_loss: float = 0.0
    energy_loss: float = 0.0
    seed: int = DEFAULT_SEED

    @property
    def energies(self):
        return [r.energy for r in self.records]

    def to_dict(self):
        return {"status": self.status, "seed": self.seed,
                "drop_step_loss": self.drop_step_loss, "energy_loss": self.energy_loss,
                "records": [asdict(r) for r in self.records]}


def stiffness_matrix(mesh: TriMesh) -> sp.csr_matrix:
    """K with Dirichlet energy = sum_k f_k^T K f_k (cotangent stiffness)."""
    t = mesh.triangles
    b = np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
    loc = mesh.areas[:, None, None] * np.einsum("ai,tab,bj->tij", b, mesh.inv_gram, b)
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.csr_matrix((loc.ravel(), (rows, cols)), shape=(n, n))


def lumped_mass(mesh: TriMesh) -> np.ndarray:
    return np.bincount(mesh.triangles.ravel(), np.repeat(mesh.areas / 3.0, 3),
                       minlength=mesh.n_vertices)


def _direction_solver(mesh, metric):
    if metric == "euclidean":
        return lambda g: g
    mass = lumped_mass(mesh)
    if metric == "mass":
        return lambda g: g / mass[:, None]
    solve = spla.factorized((2.0 * stiffness_matrix(mesh) + sp.diags(mass)).tocsc())
    return lambda g: np.stack([solve(g[:, k]) for k in range(3)], axis=1)


def _retract(x, d, alpha):
    y = x - alpha * d
    return y / np.linalg.norm(y, axis=1, keepdims=True)


def minimize_energy(fld: VertexField, cfg: MinimizeConfig = MinimizeConfig()):
    """Projected gradient descent with Armijo backtracking; values renormalized to S^2.

    Returns (field, trace).  Energies of accepted steps are strictly decreasing.
    With ``degree_guard`` the run stops with status "DegreeDropped" as soon as
    the snapped degree changes.
    """
    mesh = fld.mesh
    direction = _direction_solver(mesh, cfg.metric)
    x = np.array(fld.values)
    energy = p_energy(fld).total
    if not math.isfinite(energy):
        raise NumericError("non-finite initial energy")
    start_energy = energy
    deg = brouwer_degree(fld)
    trace = ExperimentTrace()
    trace.records.append(StepRecord(0, energy, deg.raw, deg.snapped, 0.0))
    alpha = cfg.step
    for it in range(1, cfg.max_iters + 1):
        g = energy_gradient(VertexField(mesh, x))
        d = project_tangent(x, direction(g))
        slope = float(np.sum(g * d))
        if slope <= 0 or math.sqrt(slope) <= cfg.grad_tol * max(energy, 1.0):
            trace.status = "Converged"
            break
        while True:
            cand = _retract(x, d, alpha)
            new_energy = math.fsum(p_energy(VertexField(mesh, cand)).per_triangle)
            if not math.isfinite(new_energy):
                raise NumericError("non-finite energy during line search")
            if new_energy <= energy - cfg.armijo_c * alpha * slope and new_energy < energy:
                break
            alpha *= 0.5
            if alpha < 1e-16:
                break
        if alpha < 1e-16:
            trace.status = "Converged"
            break
        step_loss = energy - new_energy
        x, energy = cand, new_energy
        report = brouwer_degree(VertexField(mesh, x))
        trace.records.append(StepRecord(it, energy, report.raw, report.snapped, alpha))
        if cfg.degree_guard and report.snapped != deg.snapped:
            trace.status = "DegreeDropped"
            trace.drop_step_loss = step_loss
            break
        alpha *= cfg.max_step_growth
    trace.energy_loss = start_energy - energy
    return VertexField(mesh, x), trace


# ---------------------------------------------------------------------------
# E_top


def _spread_centers(k: int) -> np.ndarray:
    """k well separated unit vectors (k <= 4)."""
    table = {
        1: [[0, 0, 1]],
        2: [[0, 0, 1], [0, 0, -1]],
        3: [[1, 0, 0], [-0.5, 3 ** 0.5 / 2, 0], [-0.5, -(3 ** 0.5) / 2, 0]],
        4: [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]],
    }
    return normalize(np.array(table[k], dtype=float))


def degree_d_bubbles(d: int, lam: float = 0.1, radius: float = 0.9,
                     boundary=(0.0, 0.0, -1.0)) -> AnalyticMap:
    """|d| unit bubbles of sign(d) placed in disjoint charts over a constant background."""
    k = abs(d)
    if k > 4:
        raise ParameterError("|d| <= 4 supported")
    centers = _spread_centers(k)
    charts = [make_chart(MeshKind.SPHERE, c, radius) for c in centers]
    unit = DiskBubble(int(np.sign(d)), lam, boundary)
    amap = bubble_map(unit, charts[0])
    for ch in charts[1:]:
        amap = implant(amap, ch, unit)
    return amap


@dataclass
class EtopEstimate:
    degree: int
    energy: float
    target: float
    status: str
    attempts: int
    traces: list = field(default_factory=list)

    @property
    def ok(self):
        return self.status != "Failed"


def estimate_etop(d: int, resolution: int = 6, cfg: MinimizeConfig | None = None,
                  lam: float = 0.1, mesh: TriMesh | None = None) -> EtopEstimate:
    """Upper construction (|d| concatenated unit bubbles) polished by guarded descent."""
    if abs(d) > 4:
        raise ParameterError("|d| <= 4")
    if resolution > 7:
        raise ParameterError("resolution <= 7")
    if d == 0:
        return EtopEstimate(0, 0.0, 0.0, "Converged", 0)
    cfg = cfg or MinimizeConfig(max_iters=60)
    mesh = mesh or build_icosphere(resolution)
    traces = []
    for attempt, scale in enumerate((lam, 2.0 * lam), start=1):
        fld = sample(degree_d_bubbles(d, scale), mesh)
        out, trace = minimize_energy(fld, cfg)
        traces.append(trace)
        if trace.status != "DegreeDropped":
            return EtopEstimate(d, p_energy(out).total, etop_sphere(d), trace.status,
                                attempt, traces)
        log.warning("degree dropped while polishing (scale %.3g); retrying", scale)
    return EtopEstimate(d, float("nan"), etop_sphere(d), "Failed", 2, traces)


# ---------------------------------------------------------------------------
# heterotopic competitor sequences


@dataclass
class HetRecord:
    t: float
    energy: float
    degree: int
    degree_raw: float
    distance: float
    flagged: bool
    unsigned_jacobian: float
    affine_area: float
    bubble_scale: float
    resolution: float = 0.0


@dataclass
class HetReport:
    records: list
    base_energy: float
    base_degree: int
    target_degree: int
    target_constant: float
    fitted_limit: float
    resolution_h: float

    def summary(self) -> dict:
        return {"base_energy": self.base_energy, "base_degree": self.base_degree,
                "target_degree": self.target_degree, "target_constant": self.target_constant,
                "fitted_limit": self.fitted_limit,
                "relative_error": abs(self.fitted_limit - self.target_constant)
                / max(self.target_constant, 1e-300),
                "mesh_edge": self.resolution_h}

    def to_dict(self) -> dict:
        return {"records": [{"t": r.t, "energy": r.energy, "degree": r.degree,
                             "distance": r.distance, "flagged": r.flagged}
                            for r in self.records],
                "summary": self.summary()}


def opening_excess_profile(t):
    """Shape t^2 log(1/t) / (1-t)^2 of the opening energy excess for smooth maps."""
    t = np.asarray(t, dtype=float)
    return t ** 2 * np.log(1.0 / t) / (1.0 - t) ** 2


def fit_limit(ts, energies) -> float:
    """Least-squares intercept of E(t) = E_inf + a * opening_excess_profile(t)."""
    ts = np.asarray(ts, dtype=float)
    energies = np.asarray(energies, dtype=float)
    if len(ts) == 0:
        return float("nan")
    if len(ts) == 1:
        return float(energies[0])
    a = np.stack([np.ones_like(ts), opening_excess_profile(ts)], axis=1)
    coef, *_ = np.linalg.lstsq(a, energies, rcond=None)
    return float(coef[0])


def _default_centers(kind, count):
    if kind is MeshKind.SPHERE:
        return _spread_centers(count) if count > 1 else np.array([[0.0, 0.0, 1.0]])
    grid = [[0.25, 0.25], [0.75, 0.75], [0.25, 0.75], [0.75, 0.25]]
    return np.array(grid[:count])


def _competitor_charts(mesh, centers, chart_radius):
    if centers is None:
        centers = _default_centers(mesh.kind, 1)
    if chart_radius is None:
        chart_radius = 0.95 if mesh.kind is MeshKind.SPHERE else 0.24
    charts = [make_chart(mesh, c, chart_radius)
              for c in np.atleast_2d(np.asarray(centers, dtype=float))]
    for i, a in enumerate(charts):
        for b in charts[i + 1:]:
            if not a.disjoint_from(b):
                raise ParameterError("bubble charts must be disjoint")
    return charts


def _competitor(u, charts, shares, t, lam, tau):
    """v_t and the geodesic core radius of its smallest bubble (inf if none)."""
    v = u
    scale = np.inf
    for ch, k in zip(charts, shares):
        if k == 0:
            v = open_map(v, ch, t)
            continue
        lk = default_bubble_scale(k) if lam is None else lam
        v = open_and_insert(v, ch, DiskBubble(k, lk), t, tau)
        scale = min(scale, _core_scale(ch, t * tau * tau * lk))
    return v, scale


def _check_schedule(t_schedule):
    ts = [float(t) for t in t_schedule]
    if not ts or any(not 0 < t < 1 for t in ts) or any(b >= a for a, b in zip(ts, ts[1:])):
        raise ParameterError("t_schedule must be strictly decreasing in (0, 1)")
    return ts


def heterotopic_sequence(u: AnalyticMap, target_deg: int, t_schedule: Sequence[float],
                         mesh: TriMesh, centers=None, chart_radius=None,
                         lam: float | None = None, tau: float = 0.95,
                         min_edges: float = 3.0) -> HetReport:
    """Competitors v_t: open u at radius t in each chart and insert bubbles there.

    The degree difference target_deg - deg(u) is carried by one bubble per
    center (split as evenly as possible).  Records whose bubble core is
    narrower than ``min_edges`` mesh edges are flagged and excluded from the
    fitted limit.
    """
    ts = _check_schedule(t_schedule)
    base = sample(u, mesh)
    base_deg = brouwer_degree(base)
    if not base_deg.reliable:
        raise ParameterError("base map has no well-defined degree on this mesh")
    gap = target_deg - base_deg.snapped
    charts = _competitor_charts(mesh, centers, chart_radius)
    shares = _split_degree(gap, len(charts))
    h = mesh.mean_edge_length()
    base_energy = p_energy(base).total
    records = []
    for t in ts:
        v, scale = _competitor(u, charts, shares, t, lam, tau)
        fld = sample(v, mesh)
        energy = p_energy(fld).total
        deg = brouwer_degree(fld)
        _, unsigned = jacobian_integrals(fld)
        amgm = check_amgm_bound(fld)
        records.append(HetRecord(
            t=t, energy=energy, degree=deg.snapped, degree_raw=deg.raw,
            distance=l_m_distance(fld, base, 2.0),
            flagged=bool(scale < min_edges * h or deg.residual >= deg.tolerance),
            unsigned_jacobian=unsigned, affine_area=amgm.affine_area,
            bubble_scale=float(scale), resolution=deg.resolution))
    good = [r for r in records if not r.flagged]
    limit = fit_limit([r.t for r in good], [r.energy for r in good])
    return HetReport(records, base_energy, base_deg.snapped, target_deg,
                     base_energy + ENERGY_QUANTUM * abs(gap), limit, h)


def default_bubble_scale(k: int) -> float:
    """Core scale whose truncation excess (about 2 lam^(2|k|)) stays near 2%."""
    return 0.1 if abs(k) == 1 else 0.3


def _split_degree(total: int, parts: int):
    sign = 1 if total >= 0 else -1
    q, r = divmod(abs(total), parts)
    return [sign * (q + (1 if i < r else 0)) for i in range(parts)]


def _core_scale(chart, disk_radius):
    """Geodesic radius of the normalized disk of the given radius."""
    return chart.subchart(min(disk_radius, 1.0)).radius


def heterotopic_family(u: AnalyticMap, target_deg: int, t_schedule, mesh, centers=None,
                       chart_radius=None, lam: float | None = None,
                       tau: float = 0.95) -> list:
    """The sampled competitor fields (same construction as heterotopic_sequence)."""
    ts = _check_schedule(t_schedule)
    charts = _competitor_charts(mesh, centers, chart_radius)
    shares = _split_degree(target_deg - brouwer_degree(sample(u, mesh)).snapped, len(charts))
    return [sample(_competitor(u, charts, shares, t, lam, tau)[0], mesh) for t in ts]


# ---------------------------------------------------------------------------
# bubbling


@dataclass
class ConcentrationAtom:
    location: np.ndarray
    mass: float
    degree_defect: int
    radius_used: float
    masses: list = field(default_factory=list)
    consistent: bool = True

    def to_dict(self):
        return {"location": np.asarray(self.location).tolist(), "mass": self.mass,
                "degree_defect": self.degree_defect, "radius_used": self.radius_used,
                "masses": list(self.masses), "consistent": self.consistent}


def _ball_mask(mesh, bary, center, r):
    return mesh.surface_distance(bary, center) < r


def _refine_center(mesh, bary, per, center, r, iters=3):
    for _ in range(iters):
        mask = _ball_mask(mesh, bary, center, r)
        w = per[mask]
        if w.sum() <= 0:
            break
        if mesh.kind is MeshKind.SPHERE:
            c = (w[:, None] * bary[mask]).sum(axis=0)
            center = c / np.linalg.norm(c)
        else:
            d = mesh.difference(bary[mask], center)
            center = np.mod(center + (w[:, None] * d).sum(axis=0) / w.sum(), 1.0)
    return center


def ball_degree_defect(fld: VertexField, mask) -> tuple[int, float]:
    """Integer degree carried by the triangles in ``mask``.

    The selected patch is closed up by a fan of image triangles from the mean
    boundary value (replacing the patch by a constant cone), so the solid-angle
    sum over patch plus fan is an integer multiple of 4 pi.
    """
    mesh, vals = fld.mesh, fld.values
    tri = mesh.triangles[np.asarray(mask, dtype=bool)]
    if len(tri) == 0:
        return 0, 0.0
    omega, _ = oriented_solid_angles(vals[tri[:, 0]], vals[tri[:, 1]], vals[tri[:, 2]])
    n = mesh.n_vertices
    directed = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    key = directed[:, 0] * n + directed[:, 1]
    rev = directed[:, 1] * n + directed[:, 0]
    boundary = directed[~np.isin(rev, key)]
    total = math.fsum(omega)
    if len(boundary):
        c = vals[np.unique(boundary)].mean(axis=0)
        c = c / np.linalg.norm(c)
        cc = np.tile(c, (len(boundary), 1))
        fan, _ = oriented_solid_angles(vals[boundary[:, 1]], vals[boundary[:, 0]], cc)
        total += math.fsum(fan)
    raw = total / FOUR_PI
    return int(round(raw)), raw


def detect_bubbling(family: Sequence[VertexField], eta: float = DEFAULT_ETA,
                    radii: Sequence[float] = (0.4, 0.3, 0.2),
                    max_candidates: int = 64) -> list:
    """Concentration atoms of the energy measure of the last family member.

    Candidates are taken greedily from the highest energy densities; an atom is
    kept when the ball energy at the smallest radius reaches ``eta``, and its
    neighborhood of twice that radius is then suppressed.  When that wider
    ball carries a different degree defect, a second atom sits within it and
    the pair is reported as one merged atom with a warning.
    """
    if not family:
        return []
    mesh = family[0].mesh
    if any(f.mesh is not mesh for f in family):
        raise ParameterError("family members must share one mesh")
    radii = sorted((float(r) for r in radii), reverse=True)
    r_min = radii[-1]
    last = family[-1]
    report = p_energy(last)
    per = report.per_triangle
    bary = mesh.barycenters()
    density = per / mesh.areas
    order = np.argsort(-density, kind="stable")
    suppressed = np.zeros(mesh.n_triangles, dtype=bool)
    atoms = []
    misses = 0
    for idx in order[:max(max_candidates * 64, 1)]:
        if suppressed[idx]:
            continue
        center = _refine_center(mesh, bary, per, bary[idx], r_min)
        mask = _ball_mask(mesh, bary, center, r_min)
        mass = math.fsum(per[mask])
        suppressed |= mask
        suppressed[idx] = True
        if any(mesh.surface_distance(center[None, :], a.location)[0] < 2.0 * r_min
               for a in atoms):
            continue
        if mass < eta:
            misses += 1
            if misses >= max_candidates:
                break
            continue
        defect, _ = ball_degree_defect(last, mask)
        wide = _ball_mask(mesh, bary, center, 2.0 * r_min)
        wide_defect, _ = ball_degree_defect(last, wide)
        if wide_defect != defect:
            # another topological atom within 2 r_min: report the pair as one
            log.warning("atoms closer than %.3g merged", 2.0 * r_min)
            mass, defect = math.fsum(per[wide]), wide_defect
        masses = [math.fsum(per[_ball_mask(mesh, bary, center, r)]) for r in radii]
        consistent = mass >= 0.95 * etop_sphere(defect)
        if not consistent:
            log.warning("atom mass %.4g below 0.95 E_top(%d)", mass, defect)
        atoms.append(ConcentrationAtom(center, mass, defect, r_min, masses, consistent))
        suppressed |= wide
    return atoms


def lower_bound_chain(fld: VertexField, tol: float = 0.01) -> dict:
    """8 pi |deg| <= 2 * (image area) and 2 * (chordal image area) <= E, per field."""
    energy = p_energy(fld).total
    deg = brouwer_degree(fld)
    _, unsigned = jacobian_integrals(fld)
    amgm = check_amgm_bound(fld)
    return {
        "energy": energy, "degree": deg.snapped, "reliable": deg.reliable,
        "amgm_ok": amgm.ok, "min_slack": amgm.min_slack,
        "kronecker_ok": (not deg.reliable) or ENERGY_QUANTUM * abs(deg.snapped)
        <= 2.0 * unsigned * (1 + tol),
        "energy_bound_ok": 2.0 * amgm.affine_area <= energy * (1 + 1e-12) + 1e-12,
        "quantum_ok": (not deg.reliable) or ENERGY_QUANTUM * abs(deg.snapped)
        <= energy * (1 + tol),
    }


# ---------------------------------------------------------------------------
# insertion energy identity


@dataclass(frozen=True)
class InsertionCheck:
    t: float
    lhs: float
    rhs: float
    annulus: float
    inner: float

    @property
    def rel_error(self) -> float:
        return abs(self.lhs - self.rhs) / abs(self.rhs)

    def to_dict(self) -> dict:
        return asdict(self) | {"rel_error": self.rel_error}


def insertion_identity(base: AnalyticMap, chart, inner, t: float, mesh: TriMesh) -> InsertionCheck:
    """Compare E(U_t) on the chart ball with 2 E(base on t < |x| < 1) + E(inner).

    Every term is a discrete energy on ``mesh``: the inner energy is that of
    ``inner`` implanted into the whole chart ball, which equals its disk energy
    by conformal invariance.
    """
    ball = chart_mask(mesh, chart)
    lhs = region_energy(p_energy(sample(insert_bubble(base, chart, inner, t), mesh)), ball)
    ann = region_energy(p_energy(sample(base, mesh)), ball & ~chart_mask(mesh, chart, t))
    e1 = region_energy(p_energy(sample(implant(base, chart, inner), mesh)), ball)
    return InsertionCheck(float(t), lhs, 2.0 * ann + e1, ann, e1)
