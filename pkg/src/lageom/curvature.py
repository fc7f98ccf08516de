"""Torsion, curvature, their contractions and identity checks.

Index conventions (full adapted index range, ``D = n + m``)::

    T[g, a, b] = T^g_{ab},  Delta_ab f = T^g_ab nabla_g f
    R[d, g, a, b] = R^d_{g ab} = (R(delta_a, delta_b) delta_g)^d

so that ``(Delta_ab - T^g_ab nabla_g) V^d = R^d_{g ab} V^g`` with
``Delta_ab = nabla_a nabla_b - nabla_b nabla_a``.  The named blocks
(``Rh``, ``Rv``, ``Ph``, ``Pv``, ``Sh``, ``Sv``) follow the frame-pair
ordering ``R(delta_k, delta_j)``, i.e. the full tensor with its last two
indices swapped.  Ricci is ``Ric_ab = R^t_{a t b}`` which is the usual sign
(positive on round spheres).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bundle import Geometry, nonholonomy_jet
from .dconnection import DConnection, covariant_derivative_full
from .jets import Jet, adapted_derivative, einsum


class WeylUndefinedError(ValueError):
    pass


# ---------------------------------------------------------------- core tensors
def torsion_full_jet(gamma: Jet, w: Jet) -> Jet:
    p = min(gamma.order, w.order)
    G, W = gamma.truncate(p), w.truncate(p)
    return W - G.transpose(0, 2, 1) + G


def curvature_full_jet(gamma: Jet, w: Jet, N: Jet, n: int, flip_nonholonomy: bool = False) -> Jet:
    """R^d_{g ab} = d_a G^d_gb - d_b G^d_ga + G^d_ea G^e_gb - G^d_eb G^e_ga - w^e_ab G^d_ge."""
    dG = adapted_derivative(gamma, N, n)  # dG[d, g, b, a] = delta_a Gamma^d_gb
    p = dG.order
    G = gamma.truncate(p)
    W = w.truncate(p)
    out = dG.transpose(0, 1, 3, 2) - dG
    t = einsum("dea,egb->dgab", G, G)
    out = out + t - t.transpose(0, 1, 3, 2)
    wt = einsum("eab,dge->dgab", W, G)
    return out + wt if flip_nonholonomy else out - wt


@dataclass
class PointData:
    """Everything needed at one point, as jets of decreasing order."""

    n: int
    m: int
    gamma: Jet
    w: Jet
    N: Jet
    T: Jet
    R: Jet
    metric: Jet


def point_data(conn: DConnection, u, order: int = 0, flip_nonholonomy: bool = False) -> PointData:
    """Jets of Gamma, w, T (order+1) and R (order) at ``u``; ``order`` is 0 or 1."""
    geom = conn.geom
    n = geom.n
    gam = conn.gamma(u, order + 1)
    gj = geom.jets(u, order + 2)
    w = nonholonomy_jet(gj.N, n)
    T = torsion_full_jet(gam, w)
    R = curvature_full_jet(gam, w, gj.N, n, flip_nonholonomy)
    return PointData(n, geom.m, gam, w, gj.N, T, R, geom.dmetric(u, order + 1))


# ---------------------------------------------------------------- torsion
@dataclass
class TorsionBlocks:
    Th: np.ndarray  # T^i_jk
    Tv: np.ndarray  # T^a_jk = delta_k N_j^a - delta_j N_k^a
    Ph: np.ndarray  # P^i_jb = C^i_jb
    Pv: np.ndarray  # P^a_bi = d_b N_i^a - L^a_bi
    Sv: np.ndarray  # S^a_bc
    full: np.ndarray

    def as_dict(self):
        return {"T_h": self.Th, "T_v": self.Tv, "P_h": self.Ph, "P_v": self.Pv, "S_v": self.Sv}


def torsion_closed_form(conn: DConnection, u) -> TorsionBlocks:
    """Torsion blocks from the explicit component formulas."""
    geom = conn.geom
    n, m, D = geom.n, geom.m, geom.dim
    b = conn.blocks(u)
    N = geom.jets(u, 1).N
    dN = adapted_derivative(N, N, n).value  # dN[i, a, beta] = delta_beta N_i^a
    Th = b["Lh"] - b["Lh"].transpose(0, 2, 1)
    Tv = np.einsum("jak->ajk", dN[:, :, :n]) - np.einsum("kaj->ajk", dN[:, :, :n])
    Ph = b["Ch"].copy()
    Pv = np.einsum("iab->abi", dN[:, :, n:]) - b["Lv"]
    Sv = b["Cv"] - b["Cv"].transpose(0, 2, 1)
    full = np.zeros((D, D, D))
    full[:n, :n, :n] = Th
    full[:n, :n, n:] = Ph
    full[:n, n:, :n] = -Ph.transpose(0, 2, 1)
    full[n:, :n, :n] = Tv
    full[n:, :n, n:] = Pv.transpose(0, 2, 1)
    full[n:, n:, :n] = -Pv
    full[n:, n:, n:] = Sv
    return TorsionBlocks(Th, Tv, Ph, Pv, Sv, full)


def torsion(conn: DConnection, geom: Geometry, u) -> TorsionBlocks:
    return torsion_closed_form(conn, u)


# ---------------------------------------------------------------- curvature
BLOCK_NAMES = ("R_h", "R_v", "P_h", "P_v", "S_h", "S_v")


@dataclass
class CurvatureBlocks:
    Rh: np.ndarray  # R^i_{h jk}
    Rv: np.ndarray  # R^a_{b jk}
    Ph: np.ndarray  # P^i_{j kc}
    Pv: np.ndarray  # P^a_{b kc}
    Sh: np.ndarray  # S^i_{j bc}
    Sv: np.ndarray  # S^a_{b cd}
    full: np.ndarray  # R^d_{g ab} in the commutator convention

    def as_dict(self):
        return dict(zip(BLOCK_NAMES, (self.Rh, self.Rv, self.Ph, self.Pv, self.Sh, self.Sv)))


def blocks_from_full(R: np.ndarray, n: int) -> CurvatureBlocks:
    h, v = slice(0, n), slice(n, None)
    sw = R.transpose(0, 1, 3, 2)  # frame-pair ordering
    return CurvatureBlocks(
        sw[h, h, h, h].copy(),
        sw[v, v, h, h].copy(),
        sw[h, h, h, v].copy(),
        sw[v, v, h, v].copy(),
        sw[h, h, v, v].copy(),
        sw[v, v, v, v].copy(),
        R,
    )


def curvature_tensor(conn: DConnection, geom: Geometry, u) -> CurvatureBlocks:
    pd = point_data(conn, u, 0)
    return blocks_from_full(pd.R.value, geom.n)


def curvature_blocks_formula(conn: DConnection, u) -> CurvatureBlocks:
    """The six blocks from per-block formulas written in terms of L, C and N.

    Independent of the packed full-index computation; used as a cross-check.
    """
    geom = conn.geom
    n = geom.n
    bj = conn.block_jets(u, 1)
    N = geom.jets(u, 2).N
    Lh, Lv, Ch, Cv = (bj[k] for k in ("Lh", "Lv", "Ch", "Cv"))
    dLh = adapted_derivative(Lh, N, n).value  # [i, j, k, beta]
    dLv = adapted_derivative(Lv, N, n).value
    dCh = adapted_derivative(Ch, N, n).value
    dCv = adapted_derivative(Cv, N, n).value
    Lh, Lv, Ch, Cv = (x.value for x in (Lh, Lv, Ch, Cv))
    dN = adapted_derivative(N, N, n).value  # [i, a, beta]
    om = np.einsum("jak->ajk", dN[:, :, :n]) - np.einsum("kaj->ajk", dN[:, :, :n])  # w^a_jk
    Nt = np.einsum("iab->abi", dN[:, :, n:])  # d_b N_i^a -> [a, b, i]

    # R^i_{h jk} = delta_k L^i_hj - delta_j L^i_hk + L^m_hj L^i_mk - L^m_hk L^i_mj + C^i_ha w^a_jk
    Rh = (
        dLh[:, :, :, :n]
        - dLh[:, :, :, :n].transpose(0, 1, 3, 2)
        + np.einsum("mhj,imk->ihjk", Lh, Lh)
        - np.einsum("mhk,imj->ihjk", Lh, Lh)
        + np.einsum("iha,ajk->ihjk", Ch, om)
    )
    Rv = (
        dLv[:, :, :, :n]
        - dLv[:, :, :, :n].transpose(0, 1, 3, 2)
        + np.einsum("cbj,ack->abjk", Lv, Lv)
        - np.einsum("cbk,acj->abjk", Lv, Lv)
        + np.einsum("abc,cjk->abjk", Cv, om)
    )
    # P^i_{j kc} = d_c L^i_jk - (delta_k C^i_jc + L^i_lk C^l_jc - L^l_jk C^i_lc - L^d_ck C^i_jd) + C^i_jd P^d_kc
    # with P^d_kc = d_c N_k^d - L^d_ck
    Pt = Nt.transpose(0, 2, 1) - Lv.transpose(0, 2, 1)  # [d, k, c]
    Ph = (
        dLh[:, :, :, n:]
        - (
            dCh[:, :, :, :n].transpose(0, 1, 3, 2)
            + np.einsum("ilk,ljc->ijkc", Lh, Ch)
            - np.einsum("ljk,ilc->ijkc", Lh, Ch)
            - np.einsum("dck,ijd->ijkc", Lv, Ch)
        )
        + np.einsum("ijd,dkc->ijkc", Ch, Pt)
    )
    Pv = (
        dLv[:, :, :, n:]
        - (
            dCv[:, :, :, :n].transpose(0, 1, 3, 2)
            + np.einsum("aek,ebc->abkc", Lv, Cv)
            - np.einsum("ebk,aec->abkc", Lv, Cv)
            - np.einsum("dck,abd->abkc", Lv, Cv)
        )
        + np.einsum("abd,dkc->abkc", Cv, Pt)
    )
    Sh = (
        dCh[:, :, :, n:]
        - dCh[:, :, :, n:].transpose(0, 1, 3, 2)
        + np.einsum("hjb,ihc->ijbc", Ch, Ch)
        - np.einsum("hjc,ihb->ijbc", Ch, Ch)
    )
    Sv = (
        dCv[:, :, :, n:]
        - dCv[:, :, :, n:].transpose(0, 1, 3, 2)
        + np.einsum("ebc,aed->abcd", Cv, Cv)
        - np.einsum("ebd,aec->abcd", Cv, Cv)
    )
    D = geom.dim
    sw = np.zeros((D, D, D, D))
    h, v = slice(0, n), slice(n, None)
    sw[h, h, h, h] = Rh
    sw[v, v, h, h] = Rv
    sw[h, h, h, v] = Ph
    sw[h, h, v, h] = -Ph.transpose(0, 1, 3, 2)
    sw[v, v, h, v] = Pv
    sw[v, v, v, h] = -Pv.transpose(0, 1, 3, 2)
    sw[h, h, v, v] = Sh
    sw[v, v, v, v] = Sv
    return CurvatureBlocks(Rh, Rv, Ph, Pv, Sh, Sv, sw.transpose(0, 1, 3, 2))


# ---------------------------------------------------------------- contractions
def ricci(R: np.ndarray) -> np.ndarray:
    return np.einsum("tatb->ab", R)


@dataclass
class CurvatureSummary:
    ricci: np.ndarray
    ricci_blocks: dict
    scalar: float
    scalar_h: float
    scalar_v: float
    einstein: np.ndarray
    phi: np.ndarray
    weyl: Optional[np.ndarray]
    metric: np.ndarray = field(repr=False)

    def weyl_mixed(self) -> np.ndarray:
        """C^g_{d ab} = G_{de} C^{ge}_{ab}; unchanged by constant rescaling of the metric."""
        return np.einsum("de,geab->gdab", self.metric, self.weyl)


def weyl_tensor(R: np.ndarray, Ric: np.ndarray, Ginv: np.ndarray, scalar: float) -> np.ndarray:
    D = R.shape[0]
    if D < 3:
        raise WeylUndefinedError("the Weyl tensor needs n + m >= 3")
    Rupup = np.einsum("de,geab->gdab", Ginv, R)  # R^{g d}_{ab}
    Rmix = Ginv @ Ric  # R^g_a
    I = np.eye(D)
    # X^{gd}_{ab} = R^{[g}_{[a} delta^{d]}_{b]}
    X = 0.25 * (
        np.einsum("ga,db->gdab", Rmix, I)
        - np.einsum("da,gb->gdab", Rmix, I)
        - np.einsum("gb,da->gdab", Rmix, I)
        + np.einsum("db,ga->gdab", Rmix, I)
    )
    Y = 0.25 * (
        np.einsum("ga,db->gdab", I, I)
        - np.einsum("da,gb->gdab", I, I)
        - np.einsum("gb,da->gdab", I, I)
        + np.einsum("db,ga->gdab", I, I)
    )
    return Rupup - 4.0 / (D - 2) * X + 2.0 / ((D - 1) * (D - 2)) * scalar * Y


def summarize(R: np.ndarray, Gm: np.ndarray, n: int, with_weyl: bool = True) -> CurvatureSummary:
    D = R.shape[0]
    Ginv = np.linalg.inv(Gm)
    Ric = ricci(R)
    h, v = slice(0, n), slice(n, None)
    sh = float(np.einsum("ij,ij->", Ginv[h, h], Ric[h, h]))
    sv = float(np.einsum("ab,ab->", Ginv[v, v], Ric[v, v]))
    scalar = sh + sv
    ein = Ric - 0.5 * scalar * Gm
    phi = -0.5 * (Ric - scalar * Gm / D)
    blocks = {"R_ij": Ric[h, h], "P2_ia": -Ric[h, v], "P1_ai": Ric[v, h], "S_ab": Ric[v, v]}
    weyl = weyl_tensor(R, Ric, Ginv, scalar) if (with_weyl and D >= 3) else None
    return CurvatureSummary(Ric, blocks, scalar, sh, sv, ein, phi, weyl, Gm)


def curvature_summary(conn: DConnection, geom: Geometry, u, with_weyl: bool = True) -> CurvatureSummary:
    if with_weyl and geom.dim < 3:
        raise WeylUndefinedError("the Weyl tensor needs n + m >= 3")
    pd = point_data(conn, u, 0)
    return summarize(pd.R.value, pd.metric.value, geom.n, with_weyl)


# ---------------------------------------------------------------- test fields
def random_polynomial_field(dim: int, shape, seed: int, scale: float = 1.0):
    """Seeded random cubic polynomial field; returns ``(u, order) -> Jet``."""
    rng = np.random.default_rng(seed)
    shape = tuple(shape)
    c0 = rng.normal(size=shape) * scale
    c1 = rng.normal(size=shape + (dim,)) * scale
    c2 = rng.normal(size=shape + (dim,) * 2) * scale
    c3 = rng.normal(size=shape + (dim,) * 3) * scale
    r = len(shape)
    ax = tuple(range(r))
    c2 = 0.5 * (c2 + np.transpose(c2, ax + (r + 1, r)))
    acc = np.zeros_like(c3)
    for perm in itertools.permutations(range(3)):
        acc = acc + np.transpose(c3, ax + tuple(r + q for q in perm))
    c3 = acc / 6.0

    def field_at(u, order):
        u = np.asarray(u, dtype=float)
        t3u = np.einsum("...abc,c->...ab", c3, u)
        t3uu = np.einsum("...ab,b->...a", t3u, u)
        hess = c2 + t3u
        grad = c1 + np.einsum("...ab,b->...a", c2, u) + 0.5 * t3uu
        val = c0 + np.einsum("...a,a->...", c1, u) + 0.5 * np.einsum("...ab,a,b->...", c2, u, u) + np.einsum("...a,a->...", t3uu, u) / 6.0
        return Jet([val, grad, hess, c3][: order + 1], dim)

    return field_at


# ---------------------------------------------------------------- identities
def _antisym3(A: np.ndarray, axes) -> np.ndarray:
    """Full antisymmetrization over three of A's axes."""
    out = np.zeros_like(A)
    base = list(range(A.ndim))
    for perm in itertools.permutations(range(3)):
        sign = _perm_sign(perm)
        ax = base.copy()
        for k in range(3):
            ax[axes[k]] = axes[perm[k]]
        out = out + sign * np.transpose(A, ax)
    return out / 6.0


def _perm_sign(perm) -> int:
    s = 1
    p = list(perm)
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if p[i] > p[j]:
                s = -s
    return s


_BLOCK_SLOTS = {
    "R_h": ("hh", "hh"),
    "R_v": ("vv", "hh"),
    "P_h": ("hh", "hv", "vh"),
    "P_v": ("vv", "hv", "vh"),
    "S_h": ("hh", "vv"),
    "S_v": ("vv", "vv"),
}
MUTATIONS = ("none",) + tuple(f"flip_{b}" for b in BLOCK_NAMES) + ("flip_nonholonomy", "flip_torsion")


def _block_regions(name: str, n: int):
    """Index regions of R^d_{g ab} (leading four axes) holding one curvature block."""
    sl = {"h": slice(0, n), "v": slice(n, None)}
    up, *pairs = _BLOCK_SLOTS[name]
    return [(sl[up[0]], sl[up[1]], sl[p[0]], sl[p[1]]) for p in pairs]


@dataclass
class IdentityReport:
    scalar_commutator: float  # Delta f - T nabla f
    vector_commutator: float  # (Delta - T nabla) V - R V
    first_bianchi: float
    second_bianchi: float
    seed: int
    points: int

    def as_dict(self):
        return {
            "scalar_commutator": self.scalar_commutator,
            "vector_commutator": self.vector_commutator,
            "first_bianchi": self.first_bianchi,
            "second_bianchi": self.second_bianchi,
            "seed": self.seed,
            "points": self.points,
        }


def _mutate(R: np.ndarray, T: np.ndarray, n: int, mutation: str):
    R, T = R.copy(), T.copy()
    block = mutation[5:]
    if block in _BLOCK_SLOTS:
        for reg in _block_regions(block, n):
            R[reg] *= -1
    elif mutation == "flip_torsion":
        T = -T
    return R, T


def identity_residuals_at(conn: DConnection, u, seed: int = 0, mutation: str = "none") -> dict:
    """Residuals of the scalar and vector commutator identities and both Bianchi identities."""
    if mutation not in MUTATIONS:
        raise ValueError(f"unknown mutation {mutation!r}")
    geom = conn.geom
    n, D = geom.n, geom.dim
    pd = point_data(conn, u, 1, flip_nonholonomy=(mutation == "flip_nonholonomy"))
    N = geom.jets(u, 3).N
    gam = pd.gamma
    R0, T0 = _mutate(pd.R.value, pd.T.value, n, mutation)

    f = random_polynomial_field(D, (), seed)(u, 2)
    df = adapted_derivative(f, N, n)  # [b] = nabla_b f
    ddf = covariant_derivative_full(df, [False], gam, N, n).value  # [b, a] = nabla_a nabla_b f
    delta_f = ddf.T - ddf  # [a, b]
    r_scalar = float(np.max(np.abs(delta_f - np.einsum("gab,g->ab", T0, df.value))))

    V = random_polynomial_field(D, (D,), seed + 1)(u, 2)
    dV = covariant_derivative_full(V, [True], gam, N, n)  # [d, b] = nabla_b V^d
    ddV = covariant_derivative_full(dV, [True, False], gam, N, n).value  # [d, b, a]
    delta_V = ddV.transpose(0, 2, 1) - ddV  # [d, a, b]
    lhs = delta_V - np.einsum("gab,dg->dab", T0, dV.value)
    rhs = np.einsum("dgab,g->dab", R0, V.value[: D])
    r_vector = float(np.max(np.abs(lhs - rhs)))

    T1 = pd.T.truncate(1)
    if mutation == "flip_torsion":
        T1 = -T1
    DT = covariant_derivative_full(T1, [True, False, False], gam, N, n).value  # [d, b, g, a]
    A = R0 + np.einsum("dbga->dgab", DT) + np.einsum("vab,dgv->dgab", T0, T0)
    r_b1 = float(np.max(np.abs(_antisym3(A, (1, 2, 3)))))

    R1 = pd.R
    DR = covariant_derivative_full(R1, [True, False, False, False], gam, N, n).value  # [s, v, b, g, a]
    if mutation[5:] in _BLOCK_SLOTS:
        for reg in _block_regions(mutation[5:], n):
            DR[reg] *= -1
    B = np.einsum("svbga->svabg", DR) + np.einsum("dab,svgd->svabg", T0, R0)
    r_b2 = float(np.max(np.abs(_antisym3(B, (2, 3, 4)))))
    return {
        "scalar_commutator": r_scalar,
        "vector_commutator": r_vector,
        "first_bianchi": r_b1,
        "second_bianchi": r_b2,
    }


def identity_residuals(conn: DConnection, geom: Geometry, points, seed: int = 0, mutation: str = "none") -> IdentityReport:
    pts = np.atleast_2d(points)
    worst = dict.fromkeys(("scalar_commutator", "vector_commutator", "first_bianchi", "second_bianchi"), 0.0)
    for k, u in enumerate(pts):
        r = identity_residuals_at(conn, u, seed + 7 * k, mutation)
        for key in worst:
            worst[key] = max(worst[key], r[key])
    return IdentityReport(seed=seed, points=len(pts), **worst)


# ---------------------------------------------------------------- field equations
@dataclass
class FieldEquationResiduals:
    einstein: float
    phi_form: float
    torsion_spin: float
    spin_conservation: float

    def as_dict(self):
        return {
            "einstein": self.einstein,
            "phi_form": self.phi_form,
            "torsion_spin": self.torsion_spin,
            "spin_conservation": self.spin_conservation,
        }


def _field_jet(fieldspec, u, order, shape, dim):
    if fieldspec is None:
        return Jet.constant(np.zeros(shape), dim, order)
    if callable(fieldspec):
        return fieldspec(u, order)
    arr = np.asarray(fieldspec)
    if arr.dtype != object:
        return Jet.constant(arr.astype(float), dim, order)
    from .expr import eval_grid

    return eval_grid(arr, u, order)


def field_equation_residuals(conn: DConnection, geom: Geometry, E_field, S_field, lam: float, kappa: float, u) -> FieldEquationResiduals:
    """Residuals of the Einstein, Phi-form, torsion-spin and spin-conservation equations.

    ``E_field`` is ``E_{ab}`` and ``S_field`` is ``S^g_{ab}`` over the full
    index range: arrays, expression grids, callables ``(u, order) -> Jet`` or None.
    """
    D, n = geom.dim, geom.n
    pd = point_data(conn, u, 0)
    R, T, Gm = pd.R.value, pd.T.value, pd.metric.value
    s = summarize(R, Gm, n, with_weyl=False)
    Ginv = np.linalg.inv(Gm)
    E = _field_jet(E_field, u, 0, (D, D), D).value
    Sj = _field_jet(S_field, u, 1, (D, D, D), D)
    S = Sj.value
    ein = float(np.max(np.abs(s.einstein + lam * Gm - kappa * E)))
    Etr = float(np.einsum("ab,ab->", Ginv, E))
    phi = float(np.max(np.abs(s.phi + 0.5 * kappa * (E - Etr * Gm / D))))
    Ttr = np.einsum("dbd->b", T)  # T^d_{b d}
    I = np.eye(D)
    ts = T + np.einsum("ga,b->gab", I, Ttr) - np.einsum("gb,a->gab", I, Ttr) - kappa * S
    tsr = float(np.max(np.abs(ts)))
    N = geom.jets(u, 2).N
    if Sj.order >= 1:
        DS = covariant_derivative_full(Sj, [True, False, False], pd.gamma, N, n).value  # [g, a, b, e]
        div = np.einsum("gabg->ab", DS)
    else:
        div = np.zeros((D, D))
    trT = np.einsum("ddg->g", T)
    sc = div - np.einsum("g,gab->ab", trT, S) - (E.T - E)
    return FieldEquationResiduals(ein, phi, tsr, float(np.max(np.abs(sc))))


# ---------------------------------------------------------------- conservation vector
def _u_inputs(conn: DConnection, u):
    pd = point_data(conn, u, 0)
    Gm = pd.metric.value
    Ginv = np.linalg.inv(Gm)
    return pd.R.value, pd.T.value, Gm, Ginv


def conservation_U(conn: DConnection, geom: Geometry, u) -> np.ndarray:
    """U_a = 1/2 (G^{bd} R_d^g_{fb} T^f_{ag} - G^{bd} R_d^g_{fa} T^f_{bg} + R^b_f T^f_{ba})."""
    R, T, Gm, Ginv = _u_inputs(conn, u)
    Rl = np.einsum("de,gk,ekfb->dgfb", Gm, Ginv, R)  # R_d^g_{fb}
    Ric = ricci(R)
    Rmix = Ginv @ Ric  # R^b_f
    t1 = np.einsum("bd,dgfb,fag->a", Ginv, Rl, T)
    t2 = np.einsum("bd,dgfa,fbg->a", Ginv, Rl, T)
    t3 = np.einsum("bf,fba->a", Rmix, T)
    return 0.5 * (t1 - t2 + t3)


def conservation_U_loops(conn: DConnection, geom: Geometry, u) -> np.ndarray:
    """Same contraction as ``conservation_U`` with explicit loops in a different order."""
    R, T, Gm, Ginv = _u_inputs(conn, u)
    D = R.shape[0]
    # G^{bd} G_{de} = delta^b_e is used analytically, so only G^{gk} R^b_{k f .} appears
    U = np.zeros(D)
    for a in range(D):
        s1 = s2 = s3 = 0.0
        for b in range(D):
            for g in range(D):
                for f in range(D):
                    for k in range(D):
                        # G^{bd} G_{de} G^{gk} R^e_{k f b} = G^{gk} R^b_{k f b}
                        s1 += Ginv[g, k] * R[b, k, f, b] * T[f, a, g]
                        s2 += Ginv[g, k] * R[b, k, f, a] * T[f, b, g]
        for b in range(D):
            for f in range(D):
                rmix = 0.0
                for e in range(D):
                    for t in range(D):
                        rmix += Ginv[b, e] * R[t, e, t, f]
                s3 += rmix * T[f, b, a]
        U[a] = 0.5 * (s1 - s2 + s3)
    return U
