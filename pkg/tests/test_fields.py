import numpy as np
import pytest
from scipy.optimize import brentq

from lageom import fields as fl
from lageom.bundle import Geometry, GeometrySpec
from lageom.curvature import field_equation_residuals
from lageom.dconnection import build_connection
from lageom.expr import evaluate, parse

from conftest import NH22, fd_grad

U = np.array([0.3, 0.1, -0.2, 0.4])
K = np.array([0.7, -0.3, 0.5, 0.2])
# product metric g(x) + h(y) with N = 0: christoffel_d is the Levi-Civita connection of G
PRODUCT = dict(g=[["1 + 0.3*x1*x1", "0.1*x2"], ["0.1*x2", "2 + sin(x1)"]],
               h=[["1 + 0.2*y1*y1", "0.1*y2"], ["0.1*y2", "1.5"]], N=[[0, 0], [0, 0]])


def plane(k, fn="sin"):
    k = [float(c) for c in k]
    return f"{fn}({k[0]!r}*x1 + {k[1]!r}*x2 + {k[2]!r}*y1 + {k[3]!r}*y2)"


def test_plane_wave_scalar(flat22):
    conn = build_connection(flat22, "canonical")
    r = fl.scalar_field_ops(flat22, conn, fl.MatterField("scalar", [plane(K)], float(np.linalg.norm(K))), U)
    assert r.max_residual < 1e-9
    wrong = fl.scalar_field_ops(flat22, conn, fl.MatterField("scalar", [plane(K)], 0.1), U)
    assert wrong.max_residual > 1e-2


def test_box_is_laplace_beltrami_on_product_metric():
    geom = Geometry(GeometrySpec(2, 2, **PRODUCT))
    conn = build_connection(geom, "christoffel_d")
    src = "x1*y1 + sin(x2)*y2*y2"
    e = parse(src, (2, 2))
    r = fl.scalar_field_ops(geom, conn, fl.MatterField("scalar", [src], 0.0), U)
    Gm = lambda p: geom.dmetric(p, 0).value
    flux = lambda p: np.sqrt(np.linalg.det(Gm(p))) * np.linalg.inv(Gm(p)) @ fd_grad(lambda q: evaluate(e, q), p, 1e-4)
    lb = np.trace(fd_grad(flux, U, 1e-4)) / np.sqrt(np.linalg.det(Gm(U)))
    assert abs(r.box[0, 0] - lb) < 1e-6
    assert r.box[0, 1] == 0.0


def test_constant_scalar_in_flat_space(flat22):
    conn = build_connection(flat22, "canonical")
    r = fl.scalar_field_ops(flat22, conn, fl.MatterField("scalar", [["1.5", "0.5"]], 0.0), U)
    assert r.max_residual == 0.0 and r.lagrangian == 0.0
    assert not np.any(r.E_canonical)


def test_metric_energy_momentum_symmetric_and_usable(nh22):
    conn = build_connection(nh22, "canonical")
    phi = fl.MatterField("scalar", [["x1*y2+sin(y1)", "x2*x2-y1*x1"], "exp(0.3*y2)"], 0.4)
    r = fl.scalar_field_ops(nh22, conn, phi, U)
    assert np.max(np.abs(r.E_metric - r.E_metric.T)) < 1e-14
    fe = field_equation_residuals(conn, nh22, r.E_metric, None, 0.0, 1.0, U)
    assert np.isfinite(list(fe.as_dict().values())).all()


def test_proca_plane_wave_family(flat22):
    """e(t) = e_perp + t k with |k| = mu: the divergence constraint fixes t = 0."""
    conn = build_connection(flat22, "canonical")
    mu = float(np.linalg.norm(K))
    e_perp = np.array([0.3, 0.7, 0.0, 0.0])
    e_perp = e_perp - (e_perp @ K) / (K @ K) * K

    def ops(t):
        e = e_perp + t * K
        comps = [f"{float(c)!r}*{plane(K)}" for c in e]
        return fl.proca_ops(flat22, conn, fl.MatterField("covector", comps, mu), U)

    t_star = brentq(lambda t: ops(t).constraint, -1.0, 1.0, xtol=1e-14)
    assert abs(t_star) < 1e-7
    res = ops(t_star).max_residuals
    assert res["constraint"] < 1e-7 and res["first_order"] < 1e-7 and res["second_order"] < 1e-7
    assert ops(0.5).max_residuals["first_order"] > 1e-2


def test_proca_field_strength_matches_fd_on_torsion_free_geometry():
    geom = Geometry(GeometrySpec(2, 2, **PRODUCT))
    conn = build_connection(geom, "christoffel_d")
    comps = ["x1*y1", "sin(x2)", "y2*x1", "cos(y1)"]
    es = [parse(c, (2, 2)) for c in comps]
    r = fl.proca_ops(geom, conn, fl.MatterField("covector", comps, 0.3), U)
    d = fd_grad(lambda p: np.array([evaluate(e, p) for e in es]), U)  # [b, a] = d_a phi_b
    assert np.max(np.abs(r.f - (d.T - d))) < 1e-8


def test_pure_gauge_maxwell_has_no_field_strength():
    hol = Geometry(GeometrySpec(2, 2, g=[["1+0.3*x1*x1", "0.1*x2"], ["0.1*x2", "2+sin(x1)"]],
                                h=[["1+0.2*y1*y1", "0"], ["0", "1.5+0.1*y1*y2"]], N=[[0, 0], [0, 0]]))
    conn = build_connection(hol, "canonical")
    p = fl.proca_ops(hol, conn, fl.pure_gauge(hol, "x1*x2*y1+sin(y2*x1)"), U)
    assert np.max(np.abs(p.f)) == 0.0


def test_constant_proca_first_order_is_mass_term(flat22):
    conn = build_connection(flat22, "canonical")
    p = fl.proca_ops(flat22, conn, fl.MatterField("covector", ["1", "2", "0", "0"], 0.5), U)
    assert np.allclose(p.first_order, 0.25 * np.array([1, 2, 0, 0]))


def test_field_spec_errors(flat22):
    with pytest.raises(fl.FieldSpecError):
        fl.MatterField("spinor", ["1"])
    with pytest.raises(fl.FieldSpecError):
        fl.MatterField("scalar", ["1"], -1.0)
    conn = build_connection(flat22, "canonical")
    with pytest.raises(fl.FieldSpecError):
        fl.proca_ops(flat22, conn, fl.MatterField("covector", ["1", "2"], 0.5), U)
    with pytest.raises(fl.FieldSpecError):
        fl.scalar_field_ops(flat22, conn, fl.MatterField("covector", ["1"] * 4), U)
