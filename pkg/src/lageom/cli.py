"""Command-line front end: ``lageom COMMAND --spec FILE [flags]``.

Reports are JSON (or plain text) with every float printed to 17
significant digits.  Exit codes: 0 all checks pass, 1 a check failed or
produced NaN, 2 the spec file or flags are invalid, 3 a numeric domain error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from importlib import resources
from typing import Optional

import jsonschema
import numpy as np

from . import __version__
from . import clifford as cl
from . import curvature as cv
from . import fields as fl
from . import namap as nm
from .bundle import (
    Geometry,
    GeometryError,
    GeometrySpec,
    SingularMetricError,
    compatibility_residual,
    frame_structure,
    riemannian_lift,
)
from .dconnection import build_connection, metricity_residuals
from .expr import DomainError, ExprError

COMMANDS = ("validate", "geometry", "connection", "curvature", "check", "clifford", "spinor", "namap", "fields", "tables")
CONN_FLAGS = ("berwald", "canonical", "christoffel", "custom")
DEFAULT_TOL = {
    "compatibility": 1e-10,
    "metricity": 1e-10,
    "torsion_cross_check": 1e-12,
    "curvature_cross_check": 1e-9,
    "scalar_commutator": 1e-7,
    "vector_commutator": 1e-7,
    "first_bianchi": 1e-6,
    "second_bianchi": 1e-6,
    "nonholonomy_antisymmetry": 1e-14,
    "anticommutation": 1e-12,
    "trace_identity": 1e-12,
    "spinor_scalar": 1e-8,
    "spinor_trace": 1e-10,
    "namap_invariants": 1e-8,
    "namap_class": 1e-8,
    "namap_basic": 1e-9,
    "field_equation": 1e-9,
    "proca": 1e-9,
}
DEFAULT_POINTS = {"count": 3, "box": [-0.5, 0.5]}


class SpecError(ValueError):
    pass


class ExitCode:
    OK, CHECK_FAILED, SPEC_ERROR, DOMAIN_ERROR = 0, 1, 2, 3


# ---------------------------------------------------------------- serialization
def _num(x) -> str:
    x = float(x)
    if math.isnan(x):
        return '"NaN"'
    if math.isinf(x):
        return '"Infinity"' if x > 0 else '"-Infinity"'
    s = format(x, ".17g")
    if s in ("0", "-0"):
        return "0.0"
    if "e" not in s and "." not in s and "inf" not in s:
        s += ".0"
    return s


def dumps(obj, indent: int = 1, level: int = 0) -> str:
    """Deterministic JSON with 17 significant digits for every float."""
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent, level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return dumps({"re": float(obj.real), "im": float(obj.imag)}, indent, level)
    return json.dumps(str(obj))


def tensor(arr, labels) -> dict:
    a = np.asarray(arr)
    out = {"labels": list(labels), "shape": list(a.shape)}
    if np.iscomplexobj(a):
        out["re"] = a.real.tolist()
        out["im"] = a.imag.tolist()
    else:
        out["data"] = a.astype(float).tolist()
    return out


# ---------------------------------------------------------------- report
class Report:
    def __init__(self, command: str, seed: int):
        self.command = command
        self.seed = seed
        self.points = []
        self.quantities = {}
        self._res = {}
        self.info = {}

    def residual(self, name: str, value, point, tol: float):
        value = float(value)
        r = self._res.get(name)
        if r is None:
            r = self._res[name] = {"name": name, "max": value, "argmax_point": list(map(float, point)), "tol": tol, "nan": False}
        if math.isnan(value):
            r["nan"] = True
        elif math.isnan(r["max"]) or value > r["max"]:
            r["max"] = value
            r["argmax_point"] = list(map(float, point))

    @property
    def residuals(self) -> list:
        out = []
        for r in self._res.values():
            ok = (not r["nan"]) and math.isfinite(r["max"]) and r["max"] <= r["tol"]
            out.append({"name": r["name"], "max": r["max"], "argmax_point": r["argmax_point"], "tol": r["tol"], "passed": ok})
        return out

    @property
    def passed(self) -> bool:
        return all(r["passed"] for r in self.residuals)

    def as_dict(self) -> dict:
        return {
            "tool": "lageom",
            "version": __version__,
            "schema_version": 1,
            "command": self.command,
            "seed": self.seed,
            "points": [list(map(float, p)) for p in self.points],
            "info": self.info,
            "quantities": self.quantities,
            "residuals": self.residuals,
            "passed": self.passed,
        }

    def text(self) -> str:
        lines = [f"lageom {__version__} {self.command} seed={self.seed}"]
        for k, v in self.info.items():
            if not isinstance(v, (dict, list)):
                lines.append(f"{k}: {dumps(v)}")
        for r in self.residuals:
            flag = "PASS" if r["passed"] else "FAIL"
            pt = ", ".join(f"{x:.6g}" for x in r["argmax_point"])
            lines.append(f"{flag} {r['name']}: max={r['max']:.3e} tol={r['tol']:.1e} at ({pt})")
        lines.append(f"passed: {'true' if self.passed else 'false'}")
        return "\n".join(lines)


# ---------------------------------------------------------------- spec loading
def load_schema() -> dict:
    return json.loads(resources.files("lageom").joinpath("spec_schema.json").read_text(encoding="utf-8"))


def load_spec(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            spec = json.load(fh)
    except OSError as e:
        raise SpecError(f"cannot read spec: {e}") from e
    except json.JSONDecodeError as e:
        raise SpecError(f"spec is not valid JSON: {e}") from e
    try:
        jsonschema.validate(spec, load_schema())
    except jsonschema.ValidationError as e:
        loc = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise SpecError(f"schema violation at {loc}: {e.message}") from e
    return spec


def geometry_from(section: dict) -> Geometry:
    kw = {}
    if "probe_box" in section:
        kw["probe_box"] = tuple(section["probe_box"])
    if "probe_seed" in section:
        kw["probe_seed"] = section["probe_seed"]
    n, m = section["n"], section["m"]
    if "riemannian_lift" in section:
        if n != m:
            raise SpecError("riemannian_lift needs n == m")
        others = [k for k in ("g", "h", "N", "G", "lagrangian") if k in section]
        if others:
            raise SpecError("riemannian_lift excludes " + ", ".join(others))
        return Geometry(riemannian_lift(section["riemannian_lift"], n, **kw))
    gs = GeometrySpec(n, m, g=section.get("g"), h=section.get("h"), N=section.get("N"),
                      lagrangian=section.get("lagrangian"), G=section.get("G"), **kw)
    return Geometry(gs)


def connection_from(geom: Geometry, section: Optional[dict], override: Optional[str]):
    section = dict(section or {"kind": "canonical"})
    kind = override or section.get("kind", "canonical")
    if kind == "christoffel":
        kind = "christoffel_d"
    custom = None
    if kind == "custom":
        missing = [k for k in ("Lh", "Lv", "Ch", "Cv") if k not in section]
        if missing:
            raise SpecError("custom connection needs " + ", ".join(missing))
        custom = {k: section[k] for k in ("Lh", "Lv", "Ch", "Cv")}
    return build_connection(geom, kind, custom)


def parse_at(text: str, geom: Geometry) -> np.ndarray:
    names = [f"x{i + 1}" for i in range(geom.n)] + [f"y{a + 1}" for a in range(geom.m)]
    vals = {}
    for part in text.split(","):
        if not part.strip():
            continue
        if "=" not in part:
            raise SpecError(f"--at entries look like x1=0.5, got {part!r}")
        k, v = (s.strip() for s in part.split("=", 1))
        if k not in names:
            raise SpecError(f"--at names unknown coordinate {k!r}")
        try:
            vals[k] = float(v)
        except ValueError as e:
            raise SpecError(f"--at value {v!r} is not a number") from e
    missing = [k for k in names if k not in vals]
    if missing:
        raise SpecError("--at misses " + ", ".join(missing))
    return np.array([vals[k] for k in names])


def run_points(spec: dict, geom: Geometry, seed: int, at: Optional[str]) -> list:
    if at is not None:
        return [parse_at(at, geom)]
    pts = spec.get("run", {}).get("points", DEFAULT_POINTS)
    if isinstance(pts, dict):
        lo, hi = pts.get("box", DEFAULT_POINTS["box"])
        rng = np.random.default_rng(seed)
        return [rng.uniform(lo, hi, geom.dim) for _ in range(pts["count"])]
    out = []
    for p in pts:
        if len(p) != geom.dim:
            raise SpecError(f"point {p} has {len(p)} coordinates, expected {geom.dim}")
        out.append(np.array(p, dtype=float))
    return out


def tolerances(spec: dict, flag: Optional[float]) -> dict:
    tol = dict(DEFAULT_TOL)
    given = spec.get("run", {}).get("tol")
    if isinstance(given, dict):
        unknown = [k for k in given if k not in tol]
        if unknown:
            raise SpecError("unknown tolerance names: " + ", ".join(sorted(unknown)))
        tol.update(given)
    elif given is not None:
        tol = dict.fromkeys(tol, float(given))
    if flag is not None:
        tol = dict.fromkeys(tol, float(flag))
    return tol


# ---------------------------------------------------------------- commands
def _labels(geom: Geometry):
    return [f"x{i + 1}" for i in range(geom.n)] + [f"y{a + 1}" for a in range(geom.m)]


def cmd_validate(ctx):
    geom = ctx.geom
    ctx.report.info.update({"n": geom.n, "m": geom.m, "form": geom.form, "connection": ctx.conn.kind,
                            "probe_points": len(geom.probe_points)})


def cmd_geometry(ctx):
    geom, rep = ctx.geom, ctx.report
    out = []
    for u in ctx.points:
        g, h, N = geom.metric_values(u)
        fs = frame_structure(geom, u)
        out.append({
            "g": tensor(g, ["i", "j"]), "h": tensor(h, ["a", "b"]), "N": tensor(N, ["i", "a"]),
            "full_metric": tensor(geom.full_metric(u), ["mu", "nu"]),
            "w": tensor(fs.w, ["gamma", "alpha", "beta"]), "Omega": tensor(fs.omega, ["a", "i", "j"]),
        })
        rep.residual("nonholonomy_antisymmetry", np.max(np.abs(fs.w + fs.w.transpose(0, 2, 1))), u, ctx.tol["nonholonomy_antisymmetry"])
        if geom.form == "C":
            rep.residual("compatibility", compatibility_residual(geom, geom._G, u), u, ctx.tol["compatibility"])
    rep.quantities["per_point"] = out


def cmd_connection(ctx):
    geom, conn, rep = ctx.geom, ctx.conn, ctx.report
    out = []
    for u in ctx.points:
        b = conn.blocks(u)
        t = cv.torsion(conn, geom, u)
        out.append({
            "L_h": tensor(b["Lh"], ["i", "j", "k"]), "L_v": tensor(b["Lv"], ["a", "b", "k"]),
            "C_h": tensor(b["Ch"], ["i", "j", "c"]), "C_v": tensor(b["Cv"], ["a", "b", "c"]),
            "torsion": {k: tensor(v, ["up", "lo1", "lo2"]) for k, v in t.as_dict().items()},
        })
        m = metricity_residuals(conn, geom, [u])
        for k, v in m.items():
            if conn.kind == "canonical":
                rep.residual(f"metricity_{k}", v, u, ctx.tol["metricity"])
        rep.info.setdefault("metricity", {})
        for k, v in m.items():
            rep.info["metricity"][k] = max(rep.info["metricity"].get(k, 0.0), v)
    rep.quantities["per_point"] = out


def cmd_curvature(ctx):
    geom, conn, rep = ctx.geom, ctx.conn, ctx.report
    out = []
    for u in ctx.points:
        blk = cv.curvature_tensor(conn, geom, u)
        s = cv.curvature_summary(conn, geom, u, with_weyl=False)
        lab = {"R_h": ["i", "h", "j", "k"], "R_v": ["a", "b", "j", "k"], "P_h": ["i", "j", "k", "c"],
               "P_v": ["a", "b", "k", "c"], "S_h": ["i", "j", "b", "c"], "S_v": ["a", "b", "c", "d"]}
        out.append({
            "blocks": {k: tensor(v, lab[k]) for k, v in blk.as_dict().items()},
            "ricci": tensor(s.ricci, ["alpha", "beta"]),
            "scalar": s.scalar, "scalar_h": s.scalar_h, "scalar_v": s.scalar_v,
            "einstein": tensor(s.einstein, ["alpha", "beta"]),
        })
    rep.quantities["per_point"] = out


def cmd_check(ctx):
    geom, conn, rep, tol = ctx.geom, ctx.conn, ctx.report, ctx.tol
    for k, u in enumerate(ctx.points):
        if geom.form == "C":
            rep.residual("compatibility", compatibility_residual(geom, geom._G, u), u, tol["compatibility"])
        if conn.kind == "canonical":
            rep.residual("metricity", max(metricity_residuals(conn, geom, [u]).values()), u, tol["metricity"])
        pd = cv.point_data(conn, u, 0)
        tc = cv.torsion_closed_form(conn, u).full
        rep.residual("torsion_cross_check", np.max(np.abs(tc - pd.T.value)), u, tol["torsion_cross_check"])
        bf = cv.curvature_blocks_formula(conn, u).full
        rep.residual("curvature_cross_check", np.max(np.abs(bf - pd.R.value)), u, tol["curvature_cross_check"])
        ids = cv.identity_residuals_at(conn, u, ctx.seed + 7 * k)
        for name, v in ids.items():
            rep.residual(name, v, u, tol[name])
    rep.info["connection"] = conn.kind


def _signature_from(ctx) -> cl.Signature:
    sec = ctx.spec.get("clifford", {})
    if "h" in sec or "v" in sec:
        if not sec.get("h") or not sec.get("v"):
            raise SpecError("clifford section needs both h and v signatures")
        return cl.Signature(tuple(sec["h"]), tuple(sec["v"]))
    _, sig = cl.geometry_frame(ctx.geom, ctx.points[0], 0)
    return sig


def cmd_clifford(ctx):
    rep = ctx.report
    sig = _signature_from(ctx)
    p, q, a, b = sig.counts
    r = cl.build_sigma(sig)
    u0 = ctx.points[0] if ctx.points else np.zeros(0)
    rep.residual("anticommutation", cl.anticommutation_residual(r), u0, ctx.tol["anticommutation"])
    rep.residual("trace_identity", cl.trace_identity_check(r), u0, ctx.tol["trace_identity"])
    eps = {}
    for name, blk in (("h", r.block("h")), ("v", r.block("v"))):
        eps[name] = cl.epsilon_objects(blk).as_record()
    rep.quantities.update({
        "signature": {"h": list(sig.h), "v": list(sig.v)},
        "spinor_dims": list(r.split),
        "algebras": {
            "h": cl.classify_clifford(p, q).as_dict(),
            "v": cl.classify_clifford(a, b).as_dict(),
            "total": cl.classify_clifford(p + a, q + b).as_dict(),
        },
        "epsilon": eps,
    })


def cmd_spinor(ctx):
    geom, conn, rep = ctx.geom, ctx.conn, ctx.report
    out = []
    for u in ctx.points:
        sc = cl.spinor_connection(conn, u)
        cs = cl.assemble_curvature_spinors(conn, u)
        rep.residual("spinor_scalar", cs.scalar_residual, u, ctx.tol["spinor_scalar"])
        if conn.kind == "canonical":
            rep.residual("spinor_trace", sc.trace_residual, u, ctx.tol["spinor_trace"])
        out.append({
            "spinor_connection": tensor(sc.gamma, ["c", "mu", "nu"]),
            "scalar_spinor": cs.scalar, "scalar_tensor": cs.tensor_scalar,
            "trace": tensor(sc.trace, ["c"]),
        })
    rep.quantities["per_point"] = out


def _namap_data(ctx, geom: Geometry) -> nm.NaMapData:
    sec = ctx.spec.get("namap", {})
    D, dims = geom.dim, (geom.n, geom.m)
    shapes = {"P": (D, D, D), "Q": (D, D, D), "psi": (D,), "a": (D, D), "b": (D,), "sigma": (D,), "F": (D, D),
              "phi": (D,), "nu": (), "mu": (D,), "sigma2": (D, D), "q": (D,), "K": (D, D, D)}
    kw = {k: nm.grid_field(sec[k], dims, shp) for k, shp in shapes.items() if k in sec}
    if "eps" in sec:
        kw["eps"] = float(sec["eps"])
    return nm.NaMapData(**kw)


def cmd_namap(ctx):
    geom, connA, rep, tol = ctx.geom, ctx.conn, ctx.report, ctx.tol
    sec = ctx.spec.get("namap", {})
    cls = int(sec.get("class", 0))
    data = _namap_data(ctx, geom)
    if "omega" in sec:
        data = nm.concircular_case(geom, sec["omega"])
        cls = 3
        connB = nm.deform(connA, data.P)
    elif "geometry_underlined" in ctx.spec:
        gB = geometry_from(ctx.spec["geometry_underlined"])
        connB = connection_from(gB, ctx.spec.get("connection_underlined", ctx.spec.get("connection")), ctx.args.conn)
    elif data.P is not None:
        connB = nm.deform(connA, data.P)
    else:
        raise SpecError("namap needs geometry_underlined, a deformation P or omega")
    full = nm.NaMapData.from_connections(connA, connB)
    if data.P is None:
        data.P = full.P
    if data.Q is None:
        data.Q = full.Q
    rep.info["class"] = cls
    out = []
    for u in ctx.points:
        s = nm.split_deformation(connA, connB, u)
        entry = {"P": tensor(s.P, ["alpha", "beta", "gamma"]), "Q": tensor(s.Q, ["alpha", "beta", "gamma"])}
        if cls == 0:
            entry["psi"] = tensor(nm.recover_psi(connA, connB, u), ["alpha"])
        inv = nm.invariants(cls, connA, connB, u, data, gauge_fix=bool(sec.get("gauge_fix", False)), tol=tol["namap_invariants"])
        rep.residual("invariants" if cls != 1 else "na1_criterion", inv.max_mismatch, u, tol["namap_invariants"])
        entry["invariant_mismatch"] = inv.mismatch
        if cls in (1, 2, 3):
            cr = nm.na_class_residual(cls, data, connA, u)
            rep.residual(f"na{cls}_equations", cr.max_residual, u, tol["namap_class"])
            entry["class_params"] = {k: np.asarray(v).tolist() for k, v in cr.params.items()}
            entry["class_mode"] = cr.mode
        if "v" in sec:
            br = nm.na_basic_residual(data, connA, np.array(sec["v"], dtype=float), u)
            rep.residual("basic_equation", br.max_residual, u, tol["namap_basic"])
            entry["basic"] = {"a": br.a, "b": br.b, "mode": br.mode}
        out.append(entry)
    rep.quantities["per_point"] = out


def cmd_fields(ctx):
    geom, conn, rep, tol = ctx.geom, ctx.conn, ctx.report, ctx.tol
    specs = ctx.spec.get("fields", [])
    if not specs:
        raise SpecError("fields command needs a fields section")
    out = {}
    for k, f in enumerate(specs):
        name = f.get("name", f"field{k}")
        mf = fl.MatterField(f["kind"], f["components"], float(f.get("mass", 0.0)))
        require = f.get("require", ["equation"] if f["kind"] == "scalar" else [])
        rows = []
        for u in ctx.points:
            if mf.kind == "scalar":
                r = fl.scalar_field_ops(geom, conn, mf, u)
                if "equation" in require:
                    rep.residual(f"{name}.equation", r.max_residual, u, tol["field_equation"])
                rows.append({"box": tensor(r.box, ["component", "re_im"]), "residual": r.max_residual,
                             "lagrangian": r.lagrangian, "E_canonical": tensor(r.E_canonical, ["alpha", "beta"]),
                             "E_metric": tensor(r.E_metric, ["alpha", "beta"])})
            else:
                r = fl.proca_ops(geom, conn, mf, u)
                mx = r.max_residuals
                for key in ("first_order", "constraint", "second_order"):
                    if key in require:
                        rep.residual(f"{name}.{key}", mx[key], u, tol["proca"])
                if "gauge" in require:
                    rep.residual(f"{name}.gauge", np.max(np.abs(r.f)), u, tol["proca"])
                rows.append({"f": tensor(r.f, ["alpha", "beta"]), **mx})
        out[name] = rows
    rep.quantities["fields"] = out


def cmd_tables(ctx):
    n_max = ctx.spec.get("clifford", {}).get("n_max", 16) if ctx.spec else 16
    rows = cl.printed_table_comparison()
    ctx.report.quantities["classification"] = [
        {**r, "row": f"C^{{{r['p']},{r['q']}}} = {r['computed']}"} for r in rows
    ]
    ctx.report.quantities["epsilon"] = [e.as_record() for e in cl.epsilon_table(n_max)]
    ctx.report.quantities["sigma_groups"] = [
        {"n": n, "q": q, **_plain(cl.group_symmetry_report(n, q))} for n in range(1, 9) for q in range(0, 4) if q <= n
    ]
    ctx.report.info["classification_rows"] = len(rows)
    ctx.report.info["rows_differing_from_listed"] = " ".join(f"C^{{{r['p']},{r['q']}}}" for r in rows if not r["agree"]) or "none"


def _plain(d):
    if isinstance(d, dict):
        return {str(k): _plain(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_plain(v) for v in d]
    if isinstance(d, np.ndarray):
        return d.tolist()
    return d


HANDLERS = {
    "validate": cmd_validate, "geometry": cmd_geometry, "connection": cmd_connection, "curvature": cmd_curvature,
    "check": cmd_check, "clifford": cmd_clifford, "spinor": cmd_spinor, "namap": cmd_namap, "fields": cmd_fields,
    "tables": cmd_tables,
}


class Context:
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lageom", description="Geometry, curvature, spinor and na-map computations on anisotropic bundles.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--spec", help="JSON spec file (required except for tables)")
    p.add_argument("--at", help='evaluation point, e.g. "x1=0.1,x2=0.2,y1=0.3,y2=0.4"')
    p.add_argument("--conn", choices=CONN_FLAGS, help="override the connection kind")
    p.add_argument("--tol", type=float, help="override every tolerance")
    p.add_argument("--seed", type=int, help="seed for random points and test fields")
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("--out", help="write the report here instead of stdout")
    return p


def run(argv=None):
    """Returns (exit code, report or None, error message or None)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return (ExitCode.OK if e.code == 0 else ExitCode.SPEC_ERROR), None, None
    ctx = Context()
    ctx.args = args
    try:
        if args.spec is None and args.command != "tables":
            raise SpecError(f"{args.command} needs --spec")
        ctx.spec = load_spec(args.spec) if args.spec else {}
        ctx.seed = args.seed if args.seed is not None else int(ctx.spec.get("run", {}).get("seed", 0))
        ctx.tol = tolerances(ctx.spec, args.tol)
        ctx.report = Report(args.command, ctx.seed)
        if args.command == "tables" and "geometry" not in ctx.spec:
            ctx.geom = ctx.conn = None
            ctx.points = []
        else:
            if "geometry" not in ctx.spec:
                raise SpecError("spec needs a geometry section")
            ctx.geom = geometry_from(ctx.spec["geometry"])
            ctx.conn = connection_from(ctx.geom, ctx.spec.get("connection"), args.conn)
            ctx.points = run_points(ctx.spec, ctx.geom, ctx.seed, args.at)
            ctx.report.points = ctx.points
            ctx.report.info["coordinates"] = _labels(ctx.geom)
        HANDLERS[args.command](ctx)
    except (SingularMetricError, DomainError, np.linalg.LinAlgError, nm.ConformalFactorError,
            nm.NormalizationError, nm.TangentError, ArithmeticError) as e:
        return ExitCode.DOMAIN_ERROR, None, f"{type(e).__name__}: {e}"
    except (SpecError, GeometryError, ExprError, nm.NaMapError, fl.FieldSpecError, cl.CliffordError) as e:
        return ExitCode.SPEC_ERROR, None, str(e)
    except ValueError as e:
        return ExitCode.SPEC_ERROR, None, f"{type(e).__name__}: {e}"
    code = ExitCode.OK if ctx.report.passed else ExitCode.CHECK_FAILED
    return code, ctx.report, None


def main(argv=None) -> int:
    code, report, err = run(argv)
    if err is not None:
        print(f"lageom: error: {err}", file=sys.stderr)
    if report is not None:
        args = build_parser().parse_args(argv)
        text = report.text() if args.format == "text" else dumps(report.as_dict())
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        else:
            sys.stdout.write(text + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
