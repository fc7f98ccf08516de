import json
from pathlib import Path

import numpy as np
import pytest

from lageom.bundle import Geometry, GeometrySpec, riemannian_lift
from lageom.curvature import (
    MUTATIONS,
    WeylUndefinedError,
    conservation_U,
    conservation_U_loops,
    curvature_blocks_formula,
    curvature_summary,
    curvature_tensor,
    field_equation_residuals,
    identity_residuals,
    identity_residuals_at,
    point_data,
    torsion_closed_form,
)
from lageom.dconnection import build_connection

from conftest import FLAT22, NH22, random_geometry

U = np.array([0.2, -0.1, 0.3, 0.15])
GOLDEN = json.loads((Path(__file__).parent / "data" / "golden_lift.json").read_text())


@pytest.mark.parametrize("kind", ["canonical", "berwald", "christoffel_d"])
def test_flat_space_everything_vanishes(flat22, kind):
    conn = build_connection(flat22, kind)
    for u in flat22.probe_points[:3]:
        pd = point_data(conn, u, 0)
        assert np.max(np.abs(pd.T.value)) < 1e-12 and np.max(np.abs(pd.R.value)) < 1e-12
        s = curvature_summary(conn, flat22, u)
        assert np.max(np.abs(s.ricci)) < 1e-12 and abs(s.scalar) < 1e-12 and np.max(np.abs(s.einstein)) < 1e-12


@pytest.mark.parametrize("kind", ["canonical", "berwald", "christoffel_d"])
def test_block_formulas_agree_with_packed_curvature(nh22, kind):
    conn = build_connection(nh22, kind)
    for u in nh22.probe_points[:3]:
        A = curvature_blocks_formula(conn, u).as_dict()
        B = curvature_tensor(conn, nh22, u).as_dict()
        for k in A:
            assert np.max(np.abs(A[k] - B[k])) < 1e-9, k


@pytest.mark.parametrize("kind", ["canonical", "berwald", "christoffel_d"])
def test_torsion_closed_form_agrees_with_packed(nh22, kind):
    conn = build_connection(nh22, kind)
    pd = point_data(conn, U, 0)
    assert np.max(np.abs(torsion_closed_form(conn, U).full - pd.T.value)) < 1e-12


def test_christoffel_d_torsion_pattern(nh22):
    t = torsion_closed_form(build_connection(nh22, "christoffel_d"), U)
    assert np.max(np.abs(t.Th)) < 1e-14 and np.max(np.abs(t.Sv)) < 1e-14
    assert np.max(np.abs(t.Ph)) == 0.0


@pytest.mark.parametrize("case", GOLDEN, ids=lambda c: c["name"])
def test_riemannian_lift_golden(case):
    """Frozen exact values: Christoffel symbols and Riemann tensor of g(x)."""
    n = len(case["g"])
    geom = Geometry(riemannian_lift(case["g"], n))
    conn = build_connection(geom, "canonical")
    u = np.array(case["point"])
    assert np.max(np.abs(conn.blocks(u)["Lh"] - np.array(case["christoffel"]))) < 1e-12
    assert np.max(np.abs(curvature_tensor(conn, geom, u).Rh - np.array(case["riemann"]))) < 1e-12


@pytest.mark.parametrize("kind", ["canonical", "berwald"])
def test_commutator_and_bianchi_identities(kind):
    geom = random_geometry(2, 2, 11)
    rep = identity_residuals(build_connection(geom, kind), geom, geom.probe_points[:2], seed=3)
    assert rep.scalar_commutator < 1e-7 and rep.vector_commutator < 1e-7
    assert rep.first_bianchi < 1e-6 and rep.second_bianchi < 1e-6


@pytest.mark.parametrize("kind", ["canonical", "berwald"])
@pytest.mark.parametrize("mutation", [m for m in MUTATIONS if m != "none"])
def test_mutations_are_detected(kind, mutation):
    geom = random_geometry(2, 2, 1)
    conn = build_connection(geom, kind)
    u = np.random.default_rng(1).uniform(-0.3, 0.3, 4)
    block = mutation[5:]
    blocks = curvature_tensor(conn, geom, u).as_dict()
    if block in blocks and np.max(np.abs(blocks[block])) == 0.0:
        pytest.skip(f"{block} vanishes identically for {kind}")
    r = identity_residuals_at(conn, u, seed=2, mutation=mutation)
    assert max(r.values()) > 1e-2


def test_summary_identities(nh22_canonical, nh22):
    s = curvature_summary(nh22_canonical, nh22, U)
    Gm = nh22.dmetric(U, 0).value
    Gi = np.linalg.inv(Gm)
    assert abs(s.scalar - np.einsum("ab,ab->", Gi, s.ricci)) < 1e-10
    assert abs(s.scalar - s.scalar_h - s.scalar_v) < 1e-14
    D = 4
    assert abs(np.einsum("ab,ab->", Gi, s.einstein) - (1 - D / 2) * s.scalar) < 1e-9
    # Weyl tensor is trace free on its first and third slots
    assert np.max(np.abs(np.einsum("gdgb->db", s.weyl_mixed()))) < 1e-10


def test_weyl_unchanged_by_constant_metric_scaling():
    c = 2.5
    scaled = dict(NH22)
    scaled["g"] = [[f"{c}*({e})" for e in row] for row in NH22["g"]]
    scaled["h"] = [[f"{c}*({e})" for e in row] for row in NH22["h"]]
    a, b = Geometry(GeometrySpec(2, 2, **NH22)), Geometry(GeometrySpec(2, 2, **scaled))
    wa = curvature_summary(build_connection(a, "canonical"), a, U).weyl_mixed()
    wb = curvature_summary(build_connection(b, "canonical"), b, U).weyl_mixed()
    assert np.max(np.abs(wa - wb)) < 1e-8


def test_weyl_needs_three_dimensions():
    g = Geometry(GeometrySpec(1, 1, g=[["1+y1*y1"]], h=[[1]], N=[["y1"]]))
    with pytest.raises(WeylUndefinedError):
        curvature_summary(build_connection(g, "canonical"), g, [0.1, 0.2])


def test_conservation_vector():
    hol = Geometry(GeometrySpec(2, 2, g=[["1+x1*x1", "0"], ["0", "2+sin(x2)"]], h=[["1+x2*x2", "0"], ["0", "1"]], N=[[0, 0], [0, 0]]))
    free = build_connection(hol, "christoffel_d")
    assert np.max(np.abs(point_data(free, U, 0).T.value)) < 1e-12
    assert np.max(np.abs(conservation_U(free, hol, U))) < 1e-9
    nh = Geometry(GeometrySpec(2, 2, **NH22))
    bw = build_connection(nh, "berwald")
    Ua, Ub = conservation_U(bw, nh, U), conservation_U_loops(bw, nh, U)
    assert np.max(np.abs(Ua)) > 1e-6
    assert np.max(np.abs(Ua - Ub)) < 1e-10


def test_field_equation_residuals_vanish_for_geometric_sources(nh22_canonical, nh22):
    s = curvature_summary(nh22_canonical, nh22, U, with_weyl=False)
    T = point_data(nh22_canonical, U, 0).T.value
    D = 4
    Ttr = np.einsum("dbd->b", T)
    I = np.eye(D)
    S = T + np.einsum("ga,b->gab", I, Ttr) - np.einsum("gb,a->gab", I, Ttr)
    fe = field_equation_residuals(nh22_canonical, nh22, s.einstein, S, 0.0, 1.0, U)
    assert fe.einstein < 1e-12 and fe.phi_form < 1e-12 and fe.torsion_spin < 1e-12
