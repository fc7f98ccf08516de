"""Acceptance criteria 1-13.  Each test prints one PASS/FAIL line with its measurements."""

import json
import subprocess
import sys
import time

import numpy as np
import pytest

from lageom import clifford as cl
from lageom import fields as fl
from lageom import namap as nm
from lageom.bundle import Geometry, GeometrySpec, frame_structure, random_polynomial_geometry, riemannian_lift
from lageom.curvature import (
    conservation_U,
    conservation_U_loops,
    curvature_summary,
    curvature_tensor,
    identity_residuals_at,
    point_data,
    random_polynomial_field,
    torsion_closed_form,
)
from lageom.dconnection import build_connection
from lageom.expr import evaluate, parse

from conftest import FLAT22, NH22


def report(capsys, number, title, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {number:02d} {'PASS' if ok else 'FAIL'} {title}: {detail}")
    assert ok, f"criterion {number} ({title}) failed: {detail}"


# ---------------------------------------------------------------- 1
def test_01_flat_space_zero_suite(capsys):
    t0 = time.perf_counter()
    geom = Geometry(GeometrySpec(2, 2, **FLAT22))
    worst = 0.0
    for kind in ("canonical", "berwald", "christoffel_d"):
        conn = build_connection(geom, kind)
        for u in geom.probe_points[:3]:
            t = torsion_closed_form(conn, u)
            blocks = curvature_tensor(conn, geom, u).as_dict()
            s = curvature_summary(conn, geom, u)
            fs = frame_structure(geom, u)
            vals = list(t.as_dict().values()) + list(blocks.values()) + [s.ricci, s.scalar, s.einstein, fs.omega, fs.w]
            worst = max(worst, max(float(np.max(np.abs(v))) for v in vals))
    dt = time.perf_counter() - t0
    report(capsys, 1, "flat-space zero suite", worst < 1e-12 and dt < 1.0, f"max |component| = {worst:.2e}, runtime {dt:.2f} s")


# ---------------------------------------------------------------- 2
def _metric_fn(g_src, n):
    es = [[parse(s, (n, n)) for s in row] for row in g_src]
    return lambda x: np.array([[evaluate(e, np.concatenate([x, np.zeros(n)])) for e in row] for row in es])


def _d4(f, x, h=1e-3):
    """Fourth-order central first derivatives, derivative axis last."""
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        cols.append((-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * h))
    return np.stack(cols, axis=-1)


def _oracle(gf, x):
    """Christoffel symbols and Riemann tensor of g(x) from finite differences of g only."""
    g = gf(x)
    gi = np.linalg.inv(g)
    dg = _d4(gf, x)  # [i, j, k] = d_k g_ij
    ddg = _d4(lambda p: _d4(gf, p), x)  # [i, j, k, l] = d_l d_k g_ij
    c = np.einsum("eib->ebi", dg) + dg - np.einsum("ibe->ebi", dg)  # [e, b, i]: d_i g_eb + d_b g_ei - d_e g_bi
    gam = 0.5 * np.einsum("ae,ebi->abi", gi, c)
    dgi = -np.einsum("ar,rsl,se->ael", gi, dg, gi)
    dc = np.einsum("eibl->ebil", ddg) + ddg - np.einsum("ibel->ebil", ddg)
    dgam = 0.5 * (np.einsum("ael,ebi->abil", dgi, c) + np.einsum("ae,ebil->abil", gi, dc))  # [i, h, j, k] = d_k Gamma^i_hj
    # R^i_{hjk} = d_k Gamma^i_hj - d_j Gamma^i_hk + Gamma^m_hj Gamma^i_mk - Gamma^m_hk Gamma^i_mj
    R = (dgam - np.einsum("ihkj->ihjk", dgam) + np.einsum("mhj,imk->ihjk", gam, gam) - np.einsum("mhk,imj->ihjk", gam, gam))
    return gam, R


def _random_metric(n, seed):
    rng = np.random.default_rng(seed)
    names = [f"x{i + 1}" for i in range(n)]
    M = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            terms = [f"{rng.uniform(-0.3, 0.3)!r}*{a}*{b}" for a in names for b in names] + [f"{rng.uniform(-0.2, 0.2)!r}*sin({names[j]})"]
            body = " + ".join(terms)
            M[i][j] = M[j][i] = f"{1.5 + i} + {body}" if i == j else body
    return M


def test_02_riemannian_lift_equivalence(capsys):
    t0 = time.perf_counter()
    worst_l, worst_r = 0.0, 0.0
    for n in (2, 3):
        g_src = _random_metric(n, 100 + n)
        geom = Geometry(riemannian_lift(g_src, n))
        conn = build_connection(geom, "canonical")
        gf = _metric_fn(g_src, n)
        rng = np.random.default_rng(n)
        for _ in range(20):
            u = rng.uniform(-0.4, 0.4, 2 * n)
            gam, R = _oracle(gf, u[:n])
            worst_l = max(worst_l, float(np.max(np.abs(conn.blocks(u)["Lh"] - gam))))
            Rh = curvature_tensor(conn, geom, u).Rh
            worst_r = max(worst_r, float(np.max(np.abs(Rh - R)) / np.max(np.abs(R))))
    dt = time.perf_counter() - t0
    ok = worst_l < 1e-7 and worst_r < 1e-6 and dt < 30
    report(capsys, 2, "Riemannian-lift equivalence", ok,
           f"max |L - Christoffel| = {worst_l:.2e}, max relative |R_h - Riemann| = {worst_r:.2e}, runtime {dt:.1f} s")


# ---------------------------------------------------------------- 3, 4
_SWEEP = {}


def _identity_sweep():
    if _SWEEP:
        return _SWEEP
    worst = dict.fromkeys(["scalar_commutator", "vector_commutator", "first_bianchi", "second_bianchi"], 0.0)
    weakest_mutation = (np.inf, None)
    blocks = ("R_h", "R_v", "P_h", "P_v", "S_h", "S_v")
    for n, m in ((2, 2), (3, 2)):
        for seed in range(3):
            geom = Geometry(random_polynomial_geometry(n, m, seed))
            rng = np.random.default_rng(1000 * n + seed)
            points = rng.uniform(-0.3, 0.3, (20, n + m))
            for kind in ("canonical", "berwald"):
                conn = build_connection(geom, kind)
                mutated = dict.fromkeys(blocks, 0.0)
                present = dict.fromkeys(blocks, False)
                for k, u in enumerate(points):
                    r = identity_residuals_at(conn, u, seed=seed * 100 + k)
                    for key in worst:
                        worst[key] = max(worst[key], r[key])
                    bl = curvature_tensor(conn, geom, u).as_dict()
                    for b in blocks:
                        if np.max(np.abs(bl[b])) > 0.0:
                            present[b] = True
                            rm = identity_residuals_at(conn, u, seed=seed * 100 + k, mutation=f"flip_{b}")
                            mutated[b] = max(mutated[b], rm["vector_commutator"])
                for b in blocks:
                    if present[b] and mutated[b] < weakest_mutation[0]:
                        weakest_mutation = (mutated[b], f"{b} ({kind}, n={n}, m={m}, seed={seed})")
    _SWEEP.update(worst=worst, weakest=weakest_mutation)
    return _SWEEP


def test_03_commutator_oracle(capsys):
    t0 = time.perf_counter()
    s = _identity_sweep()
    w = s["worst"]
    res = max(w["scalar_commutator"], w["vector_commutator"])
    weak, where = s["weakest"]
    dt = time.perf_counter() - t0
    report(capsys, 3, "commutator oracle", res < 1e-7 and weak > 1e-2,
           f"max residual {res:.2e} over 240 point evaluations; weakest block mutation residual {weak:.2e} at {where}; {dt:.1f} s")


def test_04_bianchi_identities(capsys):
    w = _identity_sweep()["worst"]
    ok = w["first_bianchi"] < 1e-6 and w["second_bianchi"] < 1e-6
    report(capsys, 4, "Bianchi identities", ok, f"first {w['first_bianchi']:.2e}, second {w['second_bianchi']:.2e}")


# ---------------------------------------------------------------- 5
def test_05_clifford_golden_tables(capsys):
    rows = cl.printed_table_comparison()
    bad = [f"C^{{{r['p']},{r['q']}}}: listed {r['printed']}, computed {r['computed']}" for r in rows if not r["agree"]]
    worst = 0.0
    for p in range(7):
        for q in range(7 - p):
            n = p + q
            if n == 0:
                continue
            for split in range(1, n):
                # split the p + q generators over the two blocks in every way
                for ph in range(min(p, split) + 1):
                    qh = split - ph
                    if qh > q:
                        continue
                    sig = cl.Signature.from_counts(ph, qh, p - ph, q - qh)
                    worst = max(worst, cl.anticommutation_residual(cl.build_sigma(sig)))
    for n in range(1, 5):
        for m in range(1, 5):
            worst = max(worst, cl.anticommutation_residual(cl.build_sigma(cl.Signature.from_counts(n // 2, n - n // 2, m - m // 2, m // 2))))
    ok = not bad and worst < 1e-12
    report(capsys, 5, "Clifford golden tables", ok,
           f"{len(rows) - len(bad)}/{len(rows)} listed entries reproduced; mismatches: {bad or 'none'}; max anticommutation residual {worst:.1e}")


# ---------------------------------------------------------------- 6
def test_06_epsilon_periodicity(capsys):
    t0 = time.perf_counter()
    recs = [e.as_record() for e in cl.epsilon_table(16)]
    cls_ok = all(r["class_matches"] for r in recs)
    rank_ok = all(max(r["rank_plus"], r["rank_minus"]) == 1 and min(r["rank_plus"], r["rank_minus"]) in (0, 1) for r in recs)
    notes = sorted({d for r in recs for d in r["discrepancies"]})
    dt = time.perf_counter() - t0
    report(capsys, 6, "epsilon-object periodicity", cls_ok and rank_ok and dt < 60,
           f"classes match for n=1..16: {cls_ok}; nonvanishing ranks are 1: {rank_ok}; {dt:.1f} s; notes: {notes or 'none'}")


# ---------------------------------------------------------------- 7
def test_07_sigma_symmetry_predicates(capsys):
    reps = [cl.group_symmetry_report(n, q) for n in range(1, 9) for q in range(0, 4) if q <= n]
    bad = [(r["n"], r["q"]) for r in reps if not r["agree"]]
    report(capsys, 7, "sigma symmetry predicates", not bad, f"{len(reps) - len(bad)}/{len(reps)} (n, q) pairs agree")


# ---------------------------------------------------------------- 8
def test_08_spinor_tensor_scalar(capsys):
    geom = Geometry(riemannian_lift([["1 + x1*x1", "0.2*x1*x2"], ["0.2*x1*x2", "2 + sin(x2)"]], 2))
    conn = build_connection(geom, "canonical")
    worst, scale = 0.0, 0.0
    for u in np.random.default_rng(8).uniform(-0.5, 0.5, (5, 4)):
        cs = cl.assemble_curvature_spinors(conn, u)
        worst = max(worst, cs.scalar_residual)
        scale = max(scale, abs(cs.tensor_scalar))
    report(capsys, 8, "spinor/tensor scalar curvature", worst < 1e-8 and scale > 1e-3,
           f"max |R_spinor - R_tensor| = {worst:.2e} (|R| up to {scale:.2f})")


# ---------------------------------------------------------------- 9
def test_09_twistor_substitution(capsys):
    rep = cl.build_sigma(cl.Signature.from_counts(2, 0, 2, 0))
    rng = np.random.default_rng(9)
    worst = printed = 0.0
    for _ in range(10):
        Om = rng.normal(size=4) + 1j * rng.normal(size=4)
        Pi = rng.normal(size=4) + 1j * rng.normal(size=4)
        pts = rng.normal(size=(5, 4))
        worst = max(worst, cl.twistor_ops(rep, Om, Pi, pts)[1])
        printed = max(printed, cl.twistor_ops(rep, Om, Pi, pts, "printed")[1])
    bad = cl.TwistorField(Om, rng.normal(size=(4, 4)) + 0j, rng.normal(size=(4, 4, 4)) + 0j)
    nonsol = cl.twistor_residual(rep, bad, rng.normal(size=4))
    report(capsys, 9, "twistor substitution", worst < 1e-10 and nonsol > 1e-2,
           f"general solution {worst:.2e} (block normalization), non-solution {nonsol:.2e}; "
           f"with the uniform 1/(n+m) normalization the general solution leaves {printed:.2e}")


# ---------------------------------------------------------------- 10
def test_10_na0_round_trip(capsys):
    geom = Geometry(GeometrySpec(2, 2, **NH22))
    A = build_connection(geom, "canonical")
    D = geom.dim
    psi = random_polynomial_field(D, (D,), 1, 0.3)
    B = nm.deform(A, nm.projective_deformation(psi))
    rec = pack = 0.0
    for u in np.random.default_rng(10).uniform(-0.4, 0.4, (5, D)):
        rec = max(rec, float(np.max(np.abs(nm.recover_psi(A, B, u) - psi(u, 0).value))))
        pack = max(pack, nm.invariants(0, A, B, u).max_mismatch)
    Pr = random_polynomial_field(D, (D, D, D), 5, 0.3)
    witness = nm.deform(A, lambda u, o: (Pr(u, o) + Pr(u, o).transpose(0, 2, 1)) * 0.5)
    wmis = nm.invariants(0, A, witness, np.array([0.2, -0.1, 0.3, 0.15])).mismatch["W"]
    ok = rec < 1e-12 and pack < 1e-8 and wmis > 1e-4
    report(capsys, 10, "na(0) round trip", ok, f"psi recovery {rec:.1e}, T/W pack mismatch {pack:.1e}, witness W mismatch {wmis:.2e}")


# ---------------------------------------------------------------- 11
def test_11_conservation_vector(capsys):
    hol = Geometry(GeometrySpec(2, 2, g=[["1+x1*x1", "0.1*x2"], ["0.1*x2", "2+sin(x1)"]], h=[["1+y1*y1", "0"], ["0", "1+0.2*y2*y1"]], N=[[0, 0], [0, 0]]))
    free = build_connection(hol, "christoffel_d")
    nh = Geometry(GeometrySpec(2, 2, **NH22))
    bw = build_connection(nh, "berwald")
    zero = torsion = gen = agree = 0.0
    for u in np.random.default_rng(11).uniform(-0.4, 0.4, (5, 4)):
        torsion = max(torsion, float(np.max(np.abs(point_data(free, u, 0).T.value))))
        zero = max(zero, float(np.max(np.abs(conservation_U(free, hol, u)))))
        a, b = conservation_U(bw, nh, u), conservation_U_loops(bw, nh, u)
        gen = max(gen, float(np.max(np.abs(a))))
        agree = max(agree, float(np.max(np.abs(a - b))))
    ok = torsion < 1e-12 and zero < 1e-9 and gen > 1e-6 and agree < 1e-10
    report(capsys, 11, "conservation vector", ok, f"torsion-free |U| = {zero:.1e}, generic Berwald |U| = {gen:.3e}, implementations agree to {agree:.1e}")


# ---------------------------------------------------------------- 12
def test_12_fields(capsys):
    flat = Geometry(GeometrySpec(2, 2, **FLAT22))
    conn = build_connection(flat, "canonical")
    k = np.array([0.7, -0.3, 0.5, 0.2])
    wave = f"sin({k[0]}*x1 + {k[1]}*x2 + {k[2]}*y1 + {k[3]}*y2)"
    plane = max(fl.scalar_field_ops(flat, conn, fl.MatterField("scalar", [wave], float(np.linalg.norm(k))), u).max_residual
                for u in np.random.default_rng(12).uniform(-1, 1, (5, 4)))
    hol = Geometry(GeometrySpec(2, 2, g=[["1+0.3*x1*x1", "0.1*x2"], ["0.1*x2", "2+sin(x1)"]],
                                h=[["1+0.2*y1*y1", "0"], ["0", "1.5+0.1*y1*y2"]], N=[[0, 0], [0, 0]]))
    hc = build_connection(hol, "canonical")
    gauge = fl.pure_gauge(hol, "x1*x2*y1 + sin(y2*x1)")
    fmax = max(float(np.max(np.abs(fl.proca_ops(hol, hc, gauge, u).f))) for u in np.random.default_rng(13).uniform(-0.5, 0.5, (5, 4)))
    report(capsys, 12, "fields", plane < 1e-9 and fmax == 0.0, f"plane-wave residual {plane:.1e}, pure-gauge max |f| = {fmax!r}")


# ---------------------------------------------------------------- 13
def test_13_determinism(capsys, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"geometry": {"n": 2, "m": 2, **NH22}, "run": {"seed": 13, "points": {"count": 4}}}))
    outs = []
    for k in range(2):
        proc = subprocess.run([sys.executable, "-m", "lageom.cli", "check", "--spec", str(spec)], capture_output=True)
        outs.append(proc.stdout)
    same = outs[0] == outs[1] and proc.returncode == 0 and len(outs[0]) > 0
    report(capsys, 13, "determinism", same, f"two check runs, {len(outs[0])} bytes each, identical: {outs[0] == outs[1]}")
