"""Invariant suite behind the ``selftest`` subcommand.

Every group runs on small meshes and counts its assertions; the report is a
plain dict so that it serializes byte-identically for a fixed seed.
"""

from __future__ import annotations

import math

import numpy as np

from .energy import energy_gradient, p_energy, project_tangent
from .experiments import MinimizeConfig, minimize_energy
from .maps import (AnalyticMap, Constant, DiskBubble, VertexField, constant_map,
                   identity_map, normalize, sample, stereographic_power_map)
from .mesh import MeshKind, build_flat_torus, build_icosphere, make_chart
from .surgery import concatenate, implant, insert_bubble, open_and_insert, open_map
from .topology import ENERGY_QUANTUM, brouwer_degree, check_amgm_bound


class _Group:
    def __init__(self, name):
        self.name = name
        self.count = 0
        self.failures = []

    def check(self, cond, what):
        self.count += 1
        if not cond:
            self.failures.append(what)

    def result(self):
        return {"group": self.name, "assertions": self.count,
                "passed": not self.failures, "failures": self.failures}


def _noisy(field, rng, amp):
    noise = project_tangent(field.values, rng.normal(size=field.values.shape))
    return VertexField(field.mesh, normalize(field.values + amp * noise))


def _mesh_group(rng):
    g = _Group("mesh")
    for s in range(1, 4):
        m = build_icosphere(s)
        g.check(m.euler_characteristic() == 2, f"icosphere({s}) Euler characteristic")
        g.check(abs(m.total_area - 4 * math.pi) < 4 * math.pi * 0.2, "icosphere area")
    for n in (2, 5, 16):
        t = build_flat_torus(n)
        g.check(t.euler_characteristic() == 0, f"torus({n}) Euler characteristic")
        g.check(abs(t.total_area - 1.0) < 1e-12, "torus area")
    return g


def _chart_group(rng):
    g = _Group("charts")
    for _ in range(5):
        c = normalize(rng.normal(size=3))
        ch = make_chart(MeshKind.SPHERE, c, rng.uniform(0.1, 0.99))
        r = ch.radius * np.sqrt(rng.uniform(size=200))
        th = rng.uniform(0, 2 * np.pi, size=200)
        xy = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
        g.check(np.max(np.abs(ch.forward(ch.inverse(xy)) - xy)) < 1e-12, "sphere chart round trip")
        zs = xy / ch.radius
        g.check(np.max(np.abs(ch.to_disk(ch.from_disk(zs)) - zs)) < 1e-12, "normalized chart")
    ch = make_chart(MeshKind.FLAT_TORUS, rng.uniform(size=2), 0.2)
    xy = rng.uniform(-0.14, 0.14, size=(200, 2))
    g.check(np.max(np.abs(ch.forward(ch.inverse(xy)) - xy)) < 1e-12, "torus chart round trip")
    return g


def _energy_group(rng):
    g = _Group("energy")
    m = build_icosphere(3)
    const = sample(constant_map((0, 0, 1)), m)
    g.check(p_energy(const).total == 0.0, "constant has zero energy")
    g.check(np.all(energy_gradient(const) == 0.0), "constant has zero gradient")
    ident = p_energy(sample(identity_map(), m)).total
    g.check(0.97 * ENERGY_QUANTUM <= ident <= ENERGY_QUANTUM, "identity energy below 8 pi")
    rot = normalize(rng.normal(size=(3, 3)))
    q, _ = np.linalg.qr(rot)
    f = _noisy(sample(identity_map(), m), rng, 0.1)
    e0 = p_energy(f).total
    e1 = p_energy(VertexField(m, f.values @ q.T)).total
    g.check(abs(e0 - e1) <= 1e-10 * e0, "target isometry invariance")
    for _ in range(3):
        d = project_tangent(f.values, rng.normal(size=f.values.shape))
        h = 1e-6
        plus = _raw_energy(m, f.values + h * d)
        minus = _raw_energy(m, f.values - h * d)
        fd = (plus - minus) / (2 * h)
        an = float(np.sum(energy_gradient(f) * d))
        g.check(abs(fd - an) <= 1e-5 * max(abs(an), 1.0), "gradient vs finite differences")
    return g


def _raw_energy(mesh, values):
    from .energy import frobenius_sq
    return math.fsum(mesh.areas * frobenius_sq(mesh, values))


def _degree_group(rng):
    g = _Group("degree")
    m = build_icosphere(4)
    for d in (-2, -1, 1, 2, 3):
        rep = brouwer_degree(sample(stereographic_power_map(d, 1.0), m))
        g.check(rep.reliable and rep.snapped == d, f"degree of power map {d}")
    g.check(brouwer_degree(sample(constant_map((1, 0, 0)), m)).snapped == 0, "constant degree")
    t = build_flat_torus(16)
    g.check(brouwer_degree(sample(constant_map((0, 0, 1), MeshKind.FLAT_TORUS), t)).snapped == 0,
            "torus constant degree")
    f = _noisy(sample(identity_map(), m), rng, 0.05)
    g.check(brouwer_degree(f).snapped == 1, "degree stable under small noise")
    return g


def _chain_group(rng):
    g = _Group("lower_bound_chain")
    m = build_icosphere(4)
    fields = [sample(stereographic_power_map(d, lam), m) for d, lam in ((1, 1.0), (2, 0.5))]
    fields.append(_noisy(fields[0], rng, 0.3))
    for f in fields:
        chk = check_amgm_bound(f)
        g.check(chk.ok, "per-triangle AM-GM")
        e = p_energy(f).total
        g.check(2.0 * chk.affine_area <= e * (1 + 1e-12), "2 area <= E")
        rep = brouwer_degree(f)
        if rep.reliable:
            g.check(ENERGY_QUANTUM * abs(rep.snapped) <= e * 1.01, "8 pi |deg| <= E")
    return g


def _surgery_group(rng):
    g = _Group("surgery")
    m = build_icosphere(5)
    north = make_chart(MeshKind.SPHERE, (0, 0, 1), 0.9)
    east = make_chart(MeshKind.SPHERE, (1, 0, 0), 0.6)
    ident = identity_map()
    base_e = p_energy(sample(ident, m)).total
    gaps = [abs(p_energy(sample(open_map(ident, north, r), m)).total - base_e)
            for r in (0.3, 0.15, 0.075)]
    g.check(gaps[0] > gaps[1] > gaps[2], "opening gap decreasing")
    v = open_and_insert(ident, north, DiskBubble(2, 0.3), 0.3)
    g.check(brouwer_degree(sample(v, m)).snapped == 3, "insertion adds degrees")
    two = concatenate(DiskBubble(1, 0.3), DiskBubble(-1, 0.3), (north, east))
    g.check(brouwer_degree(sample(two, m)).snapped == 0, "concatenation adds degrees")
    bub = implant(AnalyticMap(Constant((0.0, 0.0, -1.0))), east, DiskBubble(1, 0.3))
    g.check(brouwer_degree(sample(bub, m)).snapped == 1, "implant degree")
    const = AnalyticMap(Constant((0.0, 0.0, -1.0)))
    ins = insert_bubble(const, north, DiskBubble(1, 0.3), 0.5)
    g.check(brouwer_degree(sample(ins, m)).snapped == 1, "insert into constant")
    return g


def _descent_group(rng):
    g = _Group("descent")
    m = build_icosphere(3)
    f = _noisy(sample(identity_map(), m), rng, 0.1)
    out, trace = minimize_energy(f, MinimizeConfig(max_iters=30))
    e = trace.energies
    g.check(all(b < a for a, b in zip(e, e[1:])), "energy strictly decreasing")
    g.check(all(r.degree == 1 for r in trace.records) or trace.status == "DegreeDropped",
            "degree conserved until a drop")
    g.check(np.allclose(np.linalg.norm(out.values, axis=1), 1.0, atol=1e-12), "unit values")
    return g


GROUPS = (_mesh_group, _chart_group, _energy_group, _degree_group, _chain_group,
          _surgery_group, _descent_group)


def run_selftest(seed: int) -> dict:
    rng = np.random.default_rng(seed)
    results = [grp(rng).result() for grp in GROUPS]
    return {"seed": seed, "groups": results,
            "assertions": sum(r["assertions"] for r in results),
            "passed": all(r["passed"] for r in results)}
