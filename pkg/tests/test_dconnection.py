import numpy as np
import pytest

from lageom.bundle import Geometry, GeometrySpec
from lageom.curvature import random_polynomial_field
from lageom.dconnection import (
    DTensorField,
    RankOverflowError,
    build_connection,
    cov_deriv,
    covariant_derivative_full,
    deformation,
    metricity_residuals,
)
from lageom.jets import Jet, adapted_derivative, einsum

from conftest import fd_grad, random_geometry

U = np.array([0.2, -0.1, 0.3, 0.15])


def adapted_fd(geom, f, u):
    """delta_alpha f by central differences: d_i - N_i^a d_a, then d_a."""
    d = fd_grad(f, u)
    n = geom.n
    _, _, N = geom.metric_values(u)
    h = d[..., :n] - np.einsum("...a,ia->...i", d[..., n:], N)
    return np.concatenate([h, d[..., n:]], axis=-1)


@pytest.mark.parametrize("seed", [0, 1])
def test_canonical_is_metric(seed):
    geom = random_geometry(2, 2, seed)
    conn = build_connection(geom, "canonical")
    res = metricity_residuals(conn, geom, geom.probe_points[:3])
    assert max(res.values()) < 1e-12


def test_other_kinds_are_not_metric_in_general(nh22):
    res = metricity_residuals(build_connection(nh22, "berwald"), nh22, [U])
    assert max(res.values()) > 1e-3


def test_block_zero_patterns(nh22):
    b = build_connection(nh22, "christoffel_d").blocks(U)
    assert not np.any(b["Lv"]) and not np.any(b["Ch"])
    bw = build_connection(nh22, "berwald").blocks(U)
    assert not np.any(bw["Ch"])
    # Berwald L^a_bk = d N_k^a / d y^b
    dN = fd_grad(lambda p: nh22.metric_values(p)[2], U)  # [k, a, beta]
    assert np.max(np.abs(bw["Lv"] - np.einsum("kab->abk", dN[:, :, 2:]))) < 1e-9
    gam = build_connection(nh22, "canonical").gamma(U, 0).value
    assert not np.any(gam[:2, 2:, :]) and not np.any(gam[2:, :2, :])


def test_canonical_blocks_match_fd_formulas(nh22):
    b = build_connection(nh22, "canonical").blocks(U)
    g, h, _ = nh22.metric_values(U)
    dg = adapted_fd(nh22, lambda p: nh22.metric_values(p)[0], U)  # [j, k, alpha]
    dh = adapted_fd(nh22, lambda p: nh22.metric_values(p)[1], U)
    gi, hi = np.linalg.inv(g), np.linalg.inv(h)
    x = dg[:, :, :2]
    L = 0.5 * np.einsum("ir,jrk->ijk", gi, np.einsum("rkj->jrk", x) + x - np.einsum("jkr->jrk", x))
    y = dh[:, :, 2:]
    C = 0.5 * np.einsum("ad,bdc->abc", hi, np.einsum("dcb->bdc", y) + np.einsum("dbc->bdc", y) - np.einsum("bcd->bdc", y))
    Ch = 0.5 * np.einsum("ik,jkc->ijc", gi, dg[:, :, 2:])
    assert np.max(np.abs(b["Lh"] - L)) < 1e-8
    assert np.max(np.abs(b["Cv"] - C)) < 1e-8
    assert np.max(np.abs(b["Ch"] - Ch)) < 1e-8


def test_covariant_derivative_of_vector_matches_fd(nh22):
    conn = build_connection(nh22, "canonical")
    V = random_polynomial_field(4, (4,), 3)
    N = nh22.jets(U, 2).N
    got = covariant_derivative_full(V(U, 1), [True], conn.gamma(U, 0), N, 2).value
    gam = conn.gamma(U, 0).value
    expect = adapted_fd(nh22, lambda p: V(p, 0).value, U) + np.einsum("gba,b->ga", gam, V(U, 0).value)
    assert np.max(np.abs(got - expect)) < 1e-8


def test_leibniz_rule_on_contraction(nh22):
    conn = build_connection(nh22, "berwald")
    V = random_polynomial_field(4, (4,), 5)(U, 1)
    W = random_polynomial_field(4, (4,), 6)(U, 1)
    N = nh22.jets(U, 2).N
    gam = conn.gamma(U, 0)
    dV = covariant_derivative_full(V, [True], gam, N, 2).value
    dW = covariant_derivative_full(W, [False], gam, N, 2).value
    lhs = adapted_derivative(einsum("a,a->", V, W), N, 2).value
    rhs = np.einsum("ab,a->b", dV, W.value) + np.einsum("a,ab->b", V.value, dW)
    assert np.max(np.abs(lhs - rhs)) < 1e-13


def test_cov_deriv_splits_h_and_v(nh22):
    conn = build_connection(nh22, "canonical")
    T = DTensorField([("h", "up"), ("v", "down")], [["x1*y1", "x2"], ["1", "y2*y2"]])
    d = cov_deriv(conn, T, U)
    assert d.h_part.shape == (2, 2, 2) and d.v_part.shape == (2, 2, 2)
    assert np.allclose(d.full[:2, 2:, :2], d.h_part)
    with pytest.raises(RankOverflowError):
        DTensorField([("h", "up")] * 6, None)


def test_custom_connection_and_deformation(nh22):
    z3 = np.zeros((2, 2, 2)).tolist()
    Lh = [[["x1", 0], [0, 0]], [[0, 0], [0, "y1"]]]
    conn = build_connection(nh22, "custom", {"Lh": Lh, "Lv": z3, "Ch": z3, "Cv": z3})
    b = conn.blocks(U)
    assert b["Lh"][0, 0, 0] == pytest.approx(U[0]) and b["Lh"][1, 1, 1] == pytest.approx(U[2])
    P = deformation(build_connection(nh22, "berwald"), build_connection(nh22, "christoffel_d"), U)
    mask = np.zeros((4, 4, 4), bool)
    mask[2:, 2:, :2] = True  # L^a_bk
    mask[:2, :2, 2:] = True  # C^i_jc
    assert not np.any(P[~mask])


def test_unknown_kind(nh22):
    with pytest.raises(ValueError):
        build_connection(nh22, "levi")
