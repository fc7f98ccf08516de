import itertools

import numpy as np
import pytest

from lageom import clifford as cl
from lageom.bundle import Geometry, GeometrySpec, riemannian_lift
from lageom.dconnection import build_connection


# ---------------------------------------------------------------- brute-force classification oracle
def blade_trace_form(p, q):
    """Signature of B(x, y) = Tr(L_xy) on the blade basis and the centre dimension.

    Generators 0..p-1 square to -1, the remaining q to +1.  Blades e_I are
    orthogonal for B, with B(e_I, e_I) proportional to the scalar e_I^2.
    """
    k = p + q
    pos = neg = 0
    for r in range(k + 1):
        for I in itertools.combinations(range(k), r):
            minus = sum(1 for i in I if i < p)
            sq = (-1) ** (r * (r - 1) // 2) * (-1) ** minus
            pos, neg = (pos + 1, neg) if sq > 0 else (pos, neg + 1)
    centre = 1 if k % 2 == 0 else 2
    return (pos, neg), centre


def candidate_invariants(ring, summands, s):
    sig = {"R": (s * (s + 1) // 2, s * (s - 1) // 2), "C": (s * s, s * s), "H": (2 * s * s - s, 2 * s * s + s)}[ring]
    centre = {"R": 1, "C": 2, "H": 1}[ring]
    return (sig[0] * summands, sig[1] * summands), centre * summands


def brute_force_label(p, q):
    dim = 2 ** (p + q)
    target = blade_trace_form(p, q)
    found = []
    for ring, rd in (("R", 1), ("C", 2), ("H", 4)):
        for summands in (1, 2):
            for s in range(1, 17):
                if summands * rd * s * s == dim and candidate_invariants(ring, summands, s) == target:
                    one = ring if s == 1 else f"M{s}({ring})"
                    found.append(one if summands == 1 else f"{one}+{one}")
    assert len(found) == 1, (p, q, found)
    return found[0]


@pytest.mark.parametrize("p,q", [(p, q) for p in range(9) for q in range(9) if p + q <= 8])
def test_classification_matches_brute_force(p, q):
    d = cl.classify_clifford(p, q)
    assert d.label == brute_force_label(p, q)
    assert d.real_dim == 2 ** (p + q)


def test_printed_list_disagrees_only_at_c03():
    rows = cl.printed_table_comparison()
    assert len(rows) == 17
    bad = [(r["p"], r["q"]) for r in rows if not r["agree"]]
    assert bad == [(0, 3)]
    assert brute_force_label(0, 3) == "M2(C)"


# ---------------------------------------------------------------- generators
def signatures(max_total=6):
    for n in range(1, 5):
        for m in range(1, 5):
            for p in range(n + 1):
                for a in range(m + 1):
                    yield cl.Signature.from_counts(p, n - p, a, m - a)


@pytest.mark.parametrize("sig", list(signatures()), ids=str)
def test_anticommutation_brute_force(sig):
    rep = cl.build_sigma(sig)
    D, G = sig.n + sig.m, sig.G
    for a in range(D):
        for b in range(D):
            ac = rep.sigma[a] @ rep.sigma[b] + rep.sigma[b] @ rep.sigma[a]
            if rep.block_of(a) == rep.block_of(b):
                ac = ac + G[a, b] * rep.block_identity(rep.block_of(a))
            assert np.max(np.abs(ac)) < 1e-12
    assert cl.trace_identity_check(rep) < 1e-12


def test_spinor_dimensions():
    assert [cl.spinor_dim(k) for k in range(1, 9)] == [1, 2, 2, 4, 4, 8, 8, 16]


# ---------------------------------------------------------------- epsilon objects and sigma groups
EXPECTED_CLASS = {1: "symmetric", 2: "block-off-diagonal", 3: "antisymmetric", 4: "antisymmetric",
                  5: "antisymmetric", 6: "block-off-diagonal", 7: "symmetric", 0: "symmetric"}


def test_epsilon_periodicity():
    for e in cl.epsilon_table(16):
        rec = e.as_record()
        assert rec["measured_class"] == EXPECTED_CLASS[rec["n"] % 8]
        assert rec["class_matches"]
        assert max(rec["rank_plus"], rec["rank_minus"]) == 1
        assert e.factor_residual < 1e-12


def test_epsilon_is_invariant_metric():
    """(sigma_a)^T eps = s eps sigma_a for one sign s: the defining property checked directly."""
    for n in (2, 3, 4, 5):
        blk = cl.BlockRep(cl.block_generators([1] * n), np.ones(n))
        e = cl.epsilon_objects(blk, n).metric_low()
        signs = set()
        for a in range(n):
            lhs, rhs = blk.sigma[a].T @ e, e @ blk.sigma[a]
            if np.allclose(lhs, rhs, atol=1e-12):
                signs.add(1)
            elif np.allclose(lhs, -rhs, atol=1e-12):
                signs.add(-1)
            else:
                signs.add(0)
        assert len(signs) == 1 and 0 not in signs


@pytest.mark.parametrize("n,q", [(n, q) for n in range(1, 9) for q in range(0, 4) if q <= n])
def test_sigma_group_symmetry(n, q):
    assert cl.group_symmetry_report(n, q)["agree"]


# ---------------------------------------------------------------- geometry, spinor connection, twistors
LIFT = [["1 + x1*x1", "0.2*x1*x2"], ["0.2*x1*x2", "2 + sin(x2)"]]
U = np.array([0.3, -0.2, 0.5, 0.7])


def test_geometry_rep_and_round_trip():
    geom = Geometry(riemannian_lift(LIFT, 2))
    rep = cl.geometry_rep(geom, U)
    assert cl.anticommutation_residual(rep) < 1e-12
    rng = np.random.default_rng(0)
    V = rng.normal(size=4)
    assert np.max(np.abs(cl.despinorize(cl.spinorize(V, [True], rep), [True], rep) - V)) < 1e-12
    T = rng.normal(size=(4, 4))
    assert np.max(np.abs(cl.despinorize(cl.spinorize(T, [True, False], rep), [True, False], rep) - T)) < 1e-12


def test_spinor_scalar_equals_tensor_scalar():
    geom = Geometry(riemannian_lift(LIFT, 2))
    conn = build_connection(geom, "canonical")
    cs = cl.assemble_curvature_spinors(conn, U)
    assert abs(cs.tensor_scalar) > 1e-3
    assert cs.scalar_residual < 1e-8
    assert cl.spinor_connection(conn, U).trace_residual < 1e-12


def test_flat_spinor_objects_vanish(flat22):
    conn = build_connection(flat22, "canonical")
    cs = cl.assemble_curvature_spinors(conn, U)
    assert np.max(np.abs(cs.X)) == 0.0
    assert np.max(np.abs(cl.spinor_connection(conn, U).gamma)) == 0.0


def test_twistor_general_solution():
    rep = cl.build_sigma(cl.Signature.from_counts(2, 0, 2, 0))
    rng = np.random.default_rng(0)
    for _ in range(3):
        Om = rng.normal(size=4) + 1j * rng.normal(size=4)
        Pi = rng.normal(size=4) + 1j * rng.normal(size=4)
        _, r = cl.twistor_ops(rep, Om, Pi, rng.normal(size=(5, 4)))
        assert r < 1e-10
        _, r_printed = cl.twistor_ops(rep, Om, Pi, rng.normal(size=(5, 4)), "printed")
        assert r_printed > 1e-2
    bad = cl.TwistorField(Om, rng.normal(size=(4, 4)) + 0j, rng.normal(size=(4, 4, 4)) + 0j)
    assert cl.twistor_residual(rep, bad, rng.normal(size=4)) > 1e-2


def test_bad_signature_rejected():
    with pytest.raises(ValueError):
        cl.Signature((1, 2), (1,))
    with pytest.raises(ValueError):
        cl.build_sigma(cl.Signature((1,), ()))
