"""Command-line front end: ``heterotopy <subcommand> [flags]``.

Reports are JSON (sorted keys, fixed separators) written to ``--out`` or
stdout; tables additionally get a CSV mirror when ``--csv`` is given.  A JSON
config file (``--config``) supplies defaults for any flag of the subcommand,
keyed by the flag's long name with dashes replaced by underscores.

Exit status: 0 success, 2 completed but flagged, 1 error (error JSON on stderr).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import HeterotopyError, ParameterError
from .experiments import DEFAULT_SEED, MinimizeConfig

EXIT_OK, EXIT_ERROR, EXIT_FLAGGED = 0, 1, 2
SUBCOMMANDS = ("mesh", "sample", "energy", "degree", "surgery", "minimize", "het",
               "bubbling", "selftest")


class ConfigError(HeterotopyError, ValueError):
    pass


# ---------------------------------------------------------------------------
# specs


def parse_mesh_spec(spec: str):
    from .mesh import build_flat_torus, build_icosphere, TriMesh

    kind, _, arg = spec.partition(":")
    if kind == "icosphere" and arg.isdigit():
        return build_icosphere(int(arg))
    if kind == "torus" and arg.isdigit():
        return build_flat_torus(int(arg))
    path = Path(spec)
    if path.is_file():
        return TriMesh.from_json(path.read_text())
    raise ConfigError(f"bad mesh spec {spec!r} (icosphere:S, torus:N or a mesh JSON file)")


def _floats(text):
    """Comma-separated numbers; config files may also give a JSON list or a number."""
    items = text if isinstance(text, (list, tuple)) else str(text).split(",")
    try:
        return [float(x) for x in items if str(x).strip()]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def parse_map_spec(spec: str, kind):
    """identity | constant:x,y,z | power:d[,lam] | path/to/map.json"""
    from .maps import AnalyticMap, constant_map, identity_map, stereographic_power_map

    name, _, arg = spec.partition(":")
    if name == "identity":
        return identity_map()
    if name == "constant":
        vals = _floats(arg) if arg else [0.0, 0.0, 1.0]
        if len(vals) != 3:
            raise ConfigError("constant map needs three coordinates")
        return constant_map(vals, kind)
    if name == "power":
        vals = _floats(arg)
        if not vals or len(vals) > 2 or vals[0] != int(vals[0]):
            raise ConfigError("power map spec is power:d[,lam]")
        return stereographic_power_map(int(vals[0]), vals[1] if len(vals) > 1 else 1.0)
    path = Path(spec)
    if path.is_file():
        return AnalyticMap.from_json(path.read_text())
    raise ConfigError(f"bad map spec {spec!r}")


def parse_center(text: str, kind):
    from .mesh import MeshKind

    vals = _floats(text)
    want = 3 if kind is MeshKind.SPHERE else 2
    if len(vals) != want:
        raise ConfigError(f"center needs {want} coordinates")
    return np.array(vals)


@dataclass
class RunConfig:
    """Resolved settings of one invocation (flags over config file over defaults)."""

    command: str
    options: dict = field(default_factory=dict)
    seed: int = DEFAULT_SEED
    threads: int | None = None

    def get(self, key, default=None):
        val = self.options.get(key)
        return default if val is None else val


# ---------------------------------------------------------------------------
# output


def _clean(obj):
    """Recursively convert numpy scalars/arrays; non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        val = float(obj)
        return val if math.isfinite(val) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _emit(cfg: RunConfig, report: dict, table=None):
    text = dumps(report)
    out = cfg.get("out")
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    csv_path = cfg.get("csv")
    if csv_path and table:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(table[0].keys()), lineterminator="\n")
        writer.writeheader()
        for row in table:
            writer.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v)
                             for k, v in _clean(row).items()})
        Path(csv_path).write_text(buf.getvalue())


# ---------------------------------------------------------------------------
# subcommands


def _mesh_and_map(cfg):
    mesh = parse_mesh_spec(cfg.get("mesh", "icosphere:5"))
    amap = parse_map_spec(cfg.get("map", "identity"), mesh.kind)
    return mesh, amap


def _field(cfg):
    from .maps import VertexField, sample

    mesh, amap = _mesh_and_map(cfg)
    if cfg.get("field"):
        return mesh, VertexField.from_json(Path(cfg.get("field")).read_text(), mesh)
    return mesh, sample(amap, mesh)


def cmd_mesh(cfg):
    mesh = parse_mesh_spec(cfg.get("mesh", "icosphere:5"))
    if cfg.get("save"):
        Path(cfg.get("save")).write_text(mesh.to_json())
    _emit(cfg, {"kind": mesh.kind.value, "vertices": mesh.n_vertices,
                "triangles": mesh.n_triangles, "euler_characteristic": mesh.euler_characteristic(),
                "total_area": mesh.total_area, "mean_edge_length": mesh.mean_edge_length(),
                "hash": mesh.content_hash()})
    return EXIT_OK


def cmd_sample(cfg):
    from .maps import field_digest

    mesh, fld = _field(cfg)
    if cfg.get("save"):
        Path(cfg.get("save")).write_text(fld.to_json())
    _emit(cfg, {"mesh_hash": mesh.content_hash(), "vertices": mesh.n_vertices,
                "digest": field_digest(fld)})
    return EXIT_OK


def cmd_energy(cfg):
    from .energy import p_energy

    _, fld = _field(cfg)
    rep = p_energy(fld, float(cfg.get("p", 2.0)))
    table = [{"triangle": i, "energy": float(e)} for i, e in enumerate(rep.per_triangle)]
    _emit(cfg, {"p": rep.p, "total": rep.total, "quantum_ratio": rep.total / (8 * math.pi)},
          table)
    return EXIT_OK


def cmd_degree(cfg):
    from .topology import brouwer_degree

    _, fld = _field(cfg)
    rep = brouwer_degree(fld)
    _emit(cfg, rep.to_dict())
    return EXIT_OK if rep.reliable else EXIT_FLAGGED


def cmd_surgery(cfg):
    from .energy import p_energy
    from .maps import DiskBubble, sample
    from .mesh import make_chart
    from .surgery import implant, insert_bubble, open_and_insert, open_map, with_boundary
    from .topology import brouwer_degree

    mesh, amap = _mesh_and_map(cfg)
    op = cfg.get("op", "open")
    center = parse_center(cfg.get("center", "0,0,1" if mesh.kind.value == "Sphere"
                                  else "0.5,0.5"), mesh.kind)
    chart = make_chart(mesh, center, float(cfg.get("radius", 0.9)))
    t = float(cfg.get("t", 0.3))
    bubble = DiskBubble(int(cfg.get("bubble_degree", 1)), float(cfg.get("lam", 0.3)))
    if op == "open":
        out = open_map(amap, chart, t)
    elif op == "insert":
        trace_value = amap.evaluate(chart.from_disk(np.array([[1.0, 0.0]])))[0]
        out = insert_bubble(amap, chart, with_boundary(bubble, trace_value), t)
    elif op == "open-insert":
        out = open_and_insert(amap, chart, bubble, t, float(cfg.get("tau", 0.95)))
    elif op == "implant":
        trace_value = amap.evaluate(chart.from_disk(np.array([[1.0, 0.0]])))[0]
        out = implant(amap, chart, with_boundary(bubble, trace_value))
    else:
        raise ConfigError(f"unknown surgery op {op!r} (open, insert, open-insert, implant)")
    if cfg.get("save"):
        Path(cfg.get("save")).write_text(out.to_json())
    fld = sample(out, mesh)
    deg = brouwer_degree(fld)
    _emit(cfg, {"op": op, "energy": p_energy(fld).total, "degree": deg.to_dict(),
                "base_energy": p_energy(sample(amap, mesh)).total})
    return EXIT_OK if deg.reliable else EXIT_FLAGGED


def _minimize_config(cfg):
    return MinimizeConfig(max_iters=int(cfg.get("max_iters", 200)),
                          step=float(cfg.get("step", 1e-3)),
                          armijo_c=float(cfg.get("armijo_c", 1e-4)),
                          grad_tol=float(cfg.get("grad_tol", 1e-7)),
                          degree_guard=not cfg.get("no_degree_guard", False),
                          metric=cfg.get("metric", "mass"))


def cmd_minimize(cfg):
    from .experiments import minimize_energy
    from .maps import VertexField, normalize
    from .energy import project_tangent

    _, fld = _field(cfg)
    noise = float(cfg.get("noise", 0.0))
    if noise > 0:
        rng = np.random.default_rng(cfg.seed)
        kick = project_tangent(fld.values, rng.normal(size=fld.values.shape))
        fld = VertexField(fld.mesh, normalize(fld.values + noise * kick))
    out, trace = minimize_energy(fld, _minimize_config(cfg))
    if cfg.get("save"):
        Path(cfg.get("save")).write_text(out.to_json())
    trace.seed = cfg.seed
    report = trace.to_dict()
    _emit(cfg, report, report["records"])
    return EXIT_FLAGGED if trace.status == "DegreeDropped" else EXIT_OK


def _het_inputs(cfg):
    mesh, _ = _mesh_and_map(cfg)
    source = parse_map_spec(cfg.get("from", "identity"), mesh.kind)
    ts = _floats(cfg.get("t", "0.3,0.2,0.12"))
    centers = None
    if cfg.get("centers"):
        raw = cfg.get("centers")
        items = raw if isinstance(raw, list) else str(raw).split(";")
        centers = [parse_center(c, mesh.kind) for c in items]
    kw = {"centers": centers, "tau": float(cfg.get("tau", 0.95))}
    if cfg.get("chart_radius") is not None:
        kw["chart_radius"] = float(cfg.get("chart_radius"))
    if cfg.get("lam") is not None:
        kw["lam"] = float(cfg.get("lam"))
    return mesh, source, int(cfg.get("to_degree", 1)), ts, kw


def cmd_het(cfg):
    from .experiments import heterotopic_sequence

    mesh, source, target, ts, kw = _het_inputs(cfg)
    rep = heterotopic_sequence(source, target, ts, mesh, **kw)
    report = rep.to_dict()
    report["summary"]["seed"] = cfg.seed
    _emit(cfg, report, report["records"])
    flagged = any(r.flagged for r in rep.records) or not math.isfinite(rep.fitted_limit)
    return EXIT_FLAGGED if flagged else EXIT_OK


def cmd_bubbling(cfg):
    from .experiments import detect_bubbling, heterotopic_family

    mesh, source, target, ts, kw = _het_inputs(cfg)
    family = heterotopic_family(source, target, ts, mesh, **kw)
    radii = _floats(cfg.get("radii", "0.4,0.3,0.2"))
    atoms = detect_bubbling(family, float(cfg.get("eta", 1.0)), radii)
    report = {"atoms": [a.to_dict() for a in atoms], "count": len(atoms),
              "total_mass": math.fsum(a.mass for a in atoms), "seed": cfg.seed}
    _emit(cfg, report, [{"x": list(a.location), "mass": a.mass, "degree_defect": a.degree_defect}
                        for a in atoms] or None)
    return EXIT_OK if all(a.consistent for a in atoms) else EXIT_FLAGGED


def cmd_selftest(cfg):
    from .selftest import run_selftest

    report = run_selftest(cfg.seed)
    lines = [f"{'group':<20} {'assertions':>10}  result"]
    for g in report["groups"]:
        lines.append(f"{g['group']:<20} {g['assertions']:>10}  {'PASS' if g['passed'] else 'FAIL'}")
    lines.append(f"{'total':<20} {report['assertions']:>10}  "
                 f"{'PASS' if report['passed'] else 'FAIL'}")
    if cfg.get("out"):
        _emit(cfg, report)
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK if report["passed"] else EXIT_ERROR


COMMANDS = {"mesh": cmd_mesh, "sample": cmd_sample, "energy": cmd_energy,
            "degree": cmd_degree, "surgery": cmd_surgery, "minimize": cmd_minimize,
            "het": cmd_het, "bubbling": cmd_bubbling, "selftest": cmd_selftest}


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heterotopy", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file with defaults for any flag")
        p.add_argument("--threads", type=int, help="bound on BLAS/OpenMP threads")
        p.add_argument("--seed", type=int, help="RNG seed")
        p.add_argument("--out", help="write the JSON report here instead of stdout")
        p.add_argument("--csv", help="CSV mirror of the report table")
        p.add_argument("-v", "--verbose", action="store_true")

    def field_args(p):
        p.add_argument("--mesh", help="icosphere:S | torus:N | mesh JSON")
        p.add_argument("--map", help="identity | constant:x,y,z | power:d[,lam] | map JSON")
        p.add_argument("--field", help="vertex field JSON (overrides --map)")

    def het_args(p):
        p.add_argument("--mesh")
        p.add_argument("--from", dest="from", help="base map spec")
        p.add_argument("--to-degree", type=int)
        p.add_argument("--t", help="comma-separated decreasing schedule")
        p.add_argument("--centers", help="semicolon-separated chart centers")
        p.add_argument("--chart-radius", type=float)
        p.add_argument("--lam", type=float, help="bubble core scale")
        p.add_argument("--tau", type=float, help="inner insertion parameter")

    p = sub.add_parser("mesh", help="build a mesh and print its summary")
    common(p)
    p.add_argument("--mesh")
    p.add_argument("--save", help="write the mesh JSON")

    p = sub.add_parser("sample", help="sample a map on a mesh")
    common(p)
    field_args(p)
    p.add_argument("--save", help="write the vertex field JSON")

    p = sub.add_parser("energy", help="discrete p-energy")
    common(p)
    field_args(p)
    p.add_argument("--p", type=float)

    p = sub.add_parser("degree", help="Brouwer degree")
    common(p)
    field_args(p)

    p = sub.add_parser("surgery", help="apply one surgery and report energy/degree")
    common(p)
    field_args(p)
    p.add_argument("--op", choices=["open", "insert", "open-insert", "implant"])
    p.add_argument("--center")
    p.add_argument("--radius", type=float)
    p.add_argument("--t", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--bubble-degree", type=int)
    p.add_argument("--lam", type=float)
    p.add_argument("--save", help="write the resulting map JSON")

    p = sub.add_parser("minimize", help="guarded projected gradient descent")
    common(p)
    field_args(p)
    p.add_argument("--noise", type=float, help="tangent noise amplitude added first")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--step", type=float)
    p.add_argument("--armijo-c", type=float)
    p.add_argument("--grad-tol", type=float)
    p.add_argument("--metric", choices=["euclidean", "mass", "h1"])
    p.add_argument("--no-degree-guard", action="store_true", default=None)
    p.add_argument("--save", help="write the final vertex field JSON")

    p = sub.add_parser("het", help="heterotopic competitor sequence")
    common(p)
    het_args(p)

    p = sub.add_parser("bubbling", help="concentration atoms of a competitor family")
    common(p)
    het_args(p)
    p.add_argument("--eta", type=float)
    p.add_argument("--radii", help="comma-separated, decreasing")

    p = sub.add_parser("selftest", help="run the invariant suite")
    common(p)
    return parser


def resolve(argv) -> RunConfig:
    parser = build_parser()
    args = parser.parse_args(argv)
    opts = {k: v for k, v in vars(args).items() if v is not None}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        known = set(vars(args))
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        opts = {**data, **opts}
    threads = opts.pop("threads", None)
    if threads is None and os.environ.get("HETEROTOPY_THREADS"):
        try:
            threads = int(os.environ["HETEROTOPY_THREADS"])
        except ValueError as exc:
            raise ConfigError("HETEROTOPY_THREADS must be an integer") from exc
    if threads is not None and threads < 1:
        raise ConfigError("--threads must be >= 1")
    seed = int(opts.pop("seed", DEFAULT_SEED))
    command = opts.pop("command")
    opts.pop("config", None)
    return RunConfig(command, opts, seed, threads)


def _error(exc) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)},
                                sort_keys=True) + "\n")
    return EXIT_ERROR


def main(argv=None) -> int:
    try:
        cfg = resolve(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return EXIT_OK
        return _error(ConfigError("malformed command line"))
    except (HeterotopyError, ValueError) as exc:
        return _error(exc)
    logging.basicConfig(level=logging.INFO if cfg.get("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with threadpool_limits(limits=cfg.threads):
            return COMMANDS[cfg.command](cfg)
    except (HeterotopyError, ValueError, ArithmeticError, NotImplementedError,
            OSError, KeyError) as exc:
        return _error(exc)


if __name__ == "__main__":
    sys.exit(main())
