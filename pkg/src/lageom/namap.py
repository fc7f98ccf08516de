"""Nearly autoparallel (na) maps between two geometries sharing an N-connection.

Connections are compared in the common adapted frame using the packed
layout ``X[alpha, beta, gamma]`` with ``gamma`` the direction slot (see
``dconnection``).  Each connection splits into a symmetric part ``gs`` and
an antisymmetric part ``ga``; the deformations are ``P = gs_B - gs_A`` and
``Q = ga_B - ga_A``.

The na-map displays write ``Q^a_{bc}`` with the first lower index as the
direction slot.  That reading makes the metricity relation an identity, and
it is used for every printed equation here: display ``Q^a_{bc}`` is
``Q[a, c, b]`` in the packed layout.

Symmetrizations written ``X_(a Y_b)`` are sums without a 1/2, so the
projective deformation is ``P^a_{bc} = psi_b delta^a_c + psi_c delta^a_b``
and its trace is ``(D + 1) psi_b`` with ``D = n + m``.

Fields are callables ``(u, order) -> Jet``; ``grid_field`` wraps expression
grids.  Deformed connections need not preserve the h/v split, so all
objects here live on the full index range.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .bundle import Geometry, _grid, coframe_jet, nonholonomy_jet
from .curvature import curvature_full_jet
from .dconnection import covariant_derivative_full
from .expr import Expression, eval_grid, eval_jet, parse
from .jets import Jet, adapted_derivative, contract, einsum

N_MATCH_TOL = 1e-10
NORMALIZATION_TOL = 1e-9
FD_STEP = 1e-4
FD_TOL = 1e-6

Field = Callable[..., Jet]


class NaMapError(ValueError):
    pass


class NConnectionMismatchError(NaMapError):
    pass


class MissingParameterError(NaMapError):
    pass


class NormalizationError(NaMapError):
    pass


class TangentError(NaMapError):
    pass


class ConformalFactorError(NaMapError):
    pass


# ---------------------------------------------------------------- fields
def grid_field(grid, dims, shape) -> Field:
    """Field from a nested grid of expression strings."""
    g = _grid(grid, dims, tuple(shape), "field")

    def at(u, order):
        return eval_grid(g, np.asarray(u, dtype=float), order)

    return at


def constant_field(value, dim: int) -> Field:
    v = np.asarray(value, dtype=float)
    return lambda u, order: Jet.constant(v, dim, order)


def zero_field(shape, dim: int) -> Field:
    return constant_field(np.zeros(tuple(shape)), dim)


def _delta(D: int, like: Jet) -> Jet:
    return Jet.constant(np.eye(D), like.dim, like.order)


def projective_term(psi: Jet) -> Jet:
    """psi_(b delta^a_c) = psi_b delta^a_c + psi_c delta^a_b as X[a, b, c]."""
    D = psi.shape[0]
    t = einsum("b,ac->abc", psi, _delta(D, psi))
    return t + t.transpose(0, 2, 1)


def na2_term(sigma: Jet, F: Jet) -> Jet:
    """sigma_(b F^a_c) as X[a, b, c]."""
    t = einsum("b,ac->abc", sigma, F)
    return t + t.transpose(0, 2, 1)


def na3_term(sigma2: Jet, phi: Jet) -> Jet:
    """sigma_bc phi^a as X[a, b, c]."""
    return einsum("a,bc->abc", phi, sigma2)


def projective_deformation(psi: Field) -> Field:
    return lambda u, order: projective_term(psi(u, order))


def na2_deformation(psi: Field, sigma: Field, F: Field) -> Field:
    return lambda u, order: projective_term(psi(u, order)) + na2_term(sigma(u, order), F(u, order))


def na3_deformation(psi: Field, sigma2: Field, phi: Field) -> Field:
    return lambda u, order: projective_term(psi(u, order)) + na3_term(sigma2(u, order), phi(u, order))


class DeformedConnection:
    """``base + P`` for a field ``P[a, b, c]`` over the full index range."""

    kind = "deformed"

    def __init__(self, base, P: Field):
        self.base = base
        self.P = P
        self.geom = base.geom
        self.n, self.m, self.dim = base.n, base.m, base.dim

    def gamma(self, u, order: int = 2) -> Jet:
        u = np.asarray(u, dtype=float)
        return self.base.gamma(u, order) + self.P(u, order)


def deform(conn, P: Field) -> DeformedConnection:
    return DeformedConnection(conn, P)


# ---------------------------------------------------------------- splitting
def symmetric_part(G: Jet) -> Jet:
    return (G + G.transpose(0, 2, 1)) * 0.5


def antisymmetric_part(G: Jet) -> Jet:
    return (G - G.transpose(0, 2, 1)) * 0.5


def display_order(X):
    """Packed layout to display order (direction slot first among the lower pair)."""
    return X.transpose(0, 2, 1)


def check_common_n(connA, connB, u) -> float:
    NA = connA.geom.jets(u, 1).N
    NB = connB.geom.jets(u, 1).N
    if NA.shape != NB.shape:
        raise NConnectionMismatchError(f"N shapes differ: {NA.shape} vs {NB.shape}")
    err = max(float(np.max(np.abs(a - b))) for a, b in zip(NA.c, NB.c))
    if err > N_MATCH_TOL:
        raise NConnectionMismatchError(f"N-connections differ by {err:.3e} at {np.asarray(u).tolist()}")
    return err


@dataclass
class DeformationSplit:
    gamma_a: np.ndarray  # symmetric part of A
    torsion_a: np.ndarray  # antisymmetric part of A
    gamma_b: np.ndarray
    torsion_b: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    reassembly: float  # max |gs + ga - Gamma| over both connections


def split_jets(connA, connB, u, order: int = 1):
    GA, GB = connA.gamma(u, order), connB.gamma(u, order)
    return symmetric_part(GA), antisymmetric_part(GA), symmetric_part(GB), antisymmetric_part(GB)


def split_deformation(connA, connB, u) -> DeformationSplit:
    u = np.asarray(u, dtype=float)
    check_common_n(connA, connB, u)
    GA, GB = connA.gamma(u, 0).value, connB.gamma(u, 0).value
    sa, aa = 0.5 * (GA + GA.transpose(0, 2, 1)), 0.5 * (GA - GA.transpose(0, 2, 1))
    sb, ab = 0.5 * (GB + GB.transpose(0, 2, 1)), 0.5 * (GB - GB.transpose(0, 2, 1))
    re = max(float(np.max(np.abs(sa + aa - GA))), float(np.max(np.abs(sb + ab - GB))))
    return DeformationSplit(sa, aa, sb, ab, sb - sa, ab - aa, re)


def recover_psi(connA, connB, u) -> np.ndarray:
    """psi_a = (gs_B^b_{ab} - gs_A^b_{ab}) / (D + 1)."""
    s = split_deformation(connA, connB, u)
    D = s.P.shape[0]
    return np.einsum("bab->a", s.P) / (D + 1)


# ---------------------------------------------------------------- data
@dataclass
class NaMapData:
    """Deformation fields and the optional per-class parameter fields.

    Shapes over the full range D: P, Q (D, D, D); psi, b, sigma, mu, q (D,);
    a, sigma2 (D, D) symmetric; F (D, D) as F[a, b] = F^a_b; phi (D,) upper;
    nu scalar; K (D, D, D) as K[a, b, c] = K_abc.  ``eps`` is the sign in
    F F = eps I (na(2)) or q.phi = eps (na(3)).
    """

    P: Optional[Field] = None
    Q: Optional[Field] = None
    psi: Optional[Field] = None
    a: Optional[Field] = None
    b: Optional[Field] = None
    sigma: Optional[Field] = None
    F: Optional[Field] = None
    phi: Optional[Field] = None
    nu: Optional[Field] = None
    mu: Optional[Field] = None
    sigma2: Optional[Field] = None
    q: Optional[Field] = None
    K: Optional[Field] = None
    eps: Optional[float] = None

    @classmethod
    def from_connections(cls, connA, connB, **params) -> "NaMapData":
        def P(u, order):
            sa, _, sb, _ = split_jets(connA, connB, u, order)
            return sb - sa

        def Q(u, order):
            _, aa, _, ab = split_jets(connA, connB, u, order)
            return ab - aa

        return cls(P=P, Q=Q, **params)

    def need(self, *names):
        missing = [k for k in names if getattr(self, k) is None]
        if missing:
            raise MissingParameterError(f"na-map data lacks {', '.join(missing)}")

    def field_jet(self, name, u, order, shape, dim):
        f = getattr(self, name)
        if f is None:
            return Jet.constant(np.zeros(shape), dim, order)
        J = f(np.asarray(u, dtype=float), order)
        if J.shape != tuple(shape):
            raise NaMapError(f"{name} has shape {J.shape}, expected {tuple(shape)}")
        return J


def _cov(T: Jet, ups, gamma: Jet, geom: Geometry, u) -> Jet:
    N = geom.jets(u, T.order).N
    return covariant_derivative_full(T, ups, gamma, N, geom.n)


# ---------------------------------------------------------------- least squares
def _solve(base: np.ndarray, terms: dict):
    """Minimize |base - sum x_k term_k|; returns (residual array, params)."""
    names, cols, shapes = [], [], {}
    for name, basis in terms.items():
        shapes[name] = len(basis)
        for B in basis:
            cols.append(B.reshape(-1))
        names.append(name)
    if not cols:
        return base, {}
    A = np.stack(cols, axis=1)
    x, *_ = np.linalg.lstsq(A, base.reshape(-1), rcond=None)
    res = base - (A @ x).reshape(base.shape)
    out, k = {}, 0
    for name in names:
        out[name] = x[k : k + shapes[name]]
        k += shapes[name]
    return res, out


def _unit(D, i):
    e = np.zeros(D)
    e[i] = 1.0
    return e


def _sym_unit(D, i, j):
    e = np.zeros((D, D))
    e[i, j] = e[j, i] = 1.0
    return e


def _sym3(X: np.ndarray) -> np.ndarray:
    """Mean over permutations of axes 1, 2, 3."""
    acc = np.zeros_like(X)
    for p in itertools.permutations((1, 2, 3)):
        acc = acc + X.transpose((0,) + p)
    return acc / 6.0


# ---------------------------------------------------------------- a-parallels
@dataclass
class CurveSamples:
    eta: np.ndarray
    u: np.ndarray
    v: np.ndarray
    acc: np.ndarray
    tangent_error: float


def sample_curve(curve, etas, step: float = FD_STEP, tol: float = FD_TOL) -> CurveSamples:
    """Evaluate ``curve(eta) -> (u, v, dv/deta)`` and check v and dv/deta by central differences."""
    us, vs, accs, worst = [], [], [], 0.0
    for e in np.asarray(etas, dtype=float):
        u, v, a = (np.asarray(x, dtype=float) for x in curve(e))
        up, vp, _ = (np.asarray(x, dtype=float) for x in curve(e + step))
        um, vm, _ = (np.asarray(x, dtype=float) for x in curve(e - step))
        ev = np.max(np.abs((up - um) / (2 * step) - v)) / (1.0 + np.max(np.abs(v)))
        ea = np.max(np.abs((vp - vm) / (2 * step) - a)) / (1.0 + np.max(np.abs(a)))
        worst = max(worst, float(ev), float(ea))
        us.append(u)
        vs.append(v)
        accs.append(a)
    if worst > tol:
        raise TangentError(f"tangent data disagrees with finite differences by {worst:.3e}")
    return CurveSamples(np.asarray(etas, dtype=float), np.array(us), np.array(vs), np.array(accs), worst)


@dataclass
class ParallelReport:
    residuals: np.ndarray  # per sample, max component
    rho: np.ndarray
    rho_mode: str
    max_residual: float


def aparallel_residual(conn, samples: CurveSamples, rho=None) -> ParallelReport:
    """Residual of v^b D_b v^a - rho v^a in the adapted frame, D from the symmetric part.

    ``rho`` is a callable of eta, an array, or None (then solved by least squares).
    """
    geom = conn.geom
    n = geom.n
    res, rhos = [], []
    for k, e in enumerate(samples.eta):
        u, v, acc = samples.u[k], samples.v[k], samples.acc[k]
        N = geom.jets(u, 1).N
        Th = coframe_jet(N, n)
        vh = Th.value @ v
        dvh = Th.value @ acc + np.einsum("amu,m,u->a", Th.c[1], v, v)
        gs = symmetric_part(conn.gamma(u, 0)).value
        X = dvh + np.einsum("abc,b,c->a", gs, vh, vh)
        if rho is None:
            r = float(vh @ X / (vh @ vh))
        elif callable(rho):
            r = float(rho(e))
        else:
            r = float(np.asarray(rho, dtype=float)[k])
        rhos.append(r)
        res.append(float(np.max(np.abs(X - r * vh))))
    res = np.array(res)
    mode = "solved" if rho is None else "supplied"
    return ParallelReport(res, np.array(rhos), mode, float(res.max()) if res.size else 0.0)


# ---------------------------------------------------------------- basic equations
@dataclass
class BasicReport:
    curve_residual: np.ndarray  # residual vector of the cubic-in-v equation
    metric_residual: Optional[np.ndarray]  # residual of the nonmetricity relation
    a: float
    b: float
    mode: str
    max_residual: float


def na_basic_residual(data: NaMapData, connA, v, u, a=None, b=None, connB=None) -> BasicReport:
    """Residuals of the na-map equation along direction ``v`` (adapted components) and of the
    metricity relation ``D_a G_bc - P^d_a(b G_c)d - K_abc = Q^d_a(b G_c)d``.

    The cubic equation is
    ``v^b v^c v^d (D_b P^a_cd + P^a_bt P^t_cd + Q^a_bt P^t_cd) = b v^c v^d P^a_cd + a v^a``.
    Missing ``a``/``b`` are solved by least squares.  ``K`` is taken from the data or,
    when ``connB`` is given, computed as ``D_B G_B``.
    """
    geom = connA.geom
    D = geom.dim
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    P = data.field_jet("P", u, 1, (D, D, D), D)
    Q = data.field_jet("Q", u, 0, (D, D, D), D).value
    gam = connA.gamma(u, 1)
    DP = _cov(P, [True, False, False], gam, geom, u).value  # DP[a, c, d, b] = D_b P^a_cd
    Pv = P.value
    Pvv = np.einsum("tcd,c,d->t", Pv, v, v)
    lhs = np.einsum("acdb,b,c,d->a", DP, v, v, v)
    lhs = lhs + np.einsum("abt,b,t->a", Pv, v, Pvv)
    lhs = lhs + np.einsum("atb,b,t->a", Q, v, Pvv)  # display Q^a_bt is packed Q[a, t, b]
    terms = {}
    if b is None:
        terms["b"] = [Pvv]
    else:
        lhs = lhs - float(b) * Pvv
    if a is None:
        terms["a"] = [v]
    else:
        lhs = lhs - float(a) * v
    res, sol = _solve(lhs, terms)
    a_val = float(sol["a"][0]) if "a" in sol else float(a)
    b_val = float(sol["b"][0]) if "b" in sol else float(b)
    mode = "solved" if terms else "supplied"

    metric_res = None
    if data.K is not None or connB is not None:
        Gm = geom.dmetric(u, 1)
        N = geom.jets(u, 1).N
        DG = covariant_derivative_full(Gm, [False, False], gam, N, geom.n).value  # [b, c, a]
        DG = DG.transpose(2, 0, 1)  # [a, b, c] = D_a G_bc
        if data.K is not None:
            K = data.field_jet("K", u, 0, (D, D, D), D).value
        else:
            GB = connB.geom.dmetric(u, 1)
            NB = connB.geom.jets(u, 1).N
            K = covariant_derivative_full(GB, [False, False], connB.gamma(u, 0), NB, geom.n).value.transpose(2, 0, 1)
        Gv = Gm.value
        PG = np.einsum("dab,cd->abc", Pv, Gv)
        QG = np.einsum("dba,cd->abc", Q, Gv)  # display Q^d_ab is packed Q[d, b, a]
        metric_res = DG - (PG + PG.transpose(0, 2, 1)) - K - (QG + QG.transpose(0, 2, 1))
    mx = float(np.max(np.abs(res)))
    if metric_res is not None:
        mx = max(mx, float(np.max(np.abs(metric_res))))
    return BasicReport(res, metric_res, a_val, b_val, mode, mx)


# ---------------------------------------------------------------- class systems
@dataclass
class ClassReport:
    cls: int
    residual: np.ndarray
    params: dict
    mode: str
    max_residual: float


def _param_or_basis(data, name, u, shape, D, basis, terms):
    """Evaluated supplied parameter, or register its least-squares basis."""
    if getattr(data, name) is not None:
        return data.field_jet(name, u, 0, shape, D).value
    terms[name] = basis
    return None


def na_class_residual(cls: int, data: NaMapData, connA, u) -> ClassReport:
    """Pointwise residual of the na(1), na(2) or na(3) equation system.

    na(1): ``D_(a P^d_bc) + P^t_(ab P^d_c)t - P^t_(ab Q^d_c)t = b_(a P^d_bc) + a_(ab delta^d_c)``
    with the symmetrization taken as the mean over permutations.
    na(2): ``D_(c F^a_b) + F^a_d F^d_(c sigma_b) - Q^a_t(b F^t_c) = mu_(b F^a_c) + nu_(b delta^a_c)``.
    na(3): ``D_b phi^a = nu delta^a_b + mu_b phi^a + phi^c Q^a_cb``.
    D is the full connection of A; unknown parameters are solved by least squares.
    """
    geom = connA.geom
    D = geom.dim
    u = np.asarray(u, dtype=float)
    gam = connA.gamma(u, 1)
    Q = data.field_jet("Q", u, 0, (D, D, D), D).value
    I = np.eye(D)
    terms = {}
    if cls == 1:
        data.need("P")
        P = data.field_jet("P", u, 1, (D, D, D), D)
        Pv = P.value
        DP = _cov(P, [True, False, False], gam, geom, u).value  # [d, b, c, a] = D_a P^d_bc
        base = DP.transpose(0, 3, 1, 2)  # [d, a, b, c]
        base = base + np.einsum("tab,dct->dabc", Pv, Pv)
        base = base - np.einsum("tab,dtc->dabc", Pv, Q)  # display Q^d_ct is packed Q[d, t, c]
        base = _sym3(base)
        bvec = _param_or_basis(
            data, "b", u, (D,), D, [_sym3(np.einsum("a,dbc->dabc", _unit(D, i), Pv)) for i in range(D)], terms
        )
        if bvec is not None:
            base = base - _sym3(np.einsum("a,dbc->dabc", bvec, Pv))
        amat = _param_or_basis(
            data,
            "a",
            u,
            (D, D),
            D,
            [_sym3(np.einsum("ab,dc->dabc", _sym_unit(D, i, j), I)) for i in range(D) for j in range(i, D)],
            terms,
        )
        if amat is not None:
            base = base - _sym3(np.einsum("ab,dc->dabc", amat, I))
    elif cls == 2:
        data.need("F", "sigma")
        F = data.field_jet("F", u, 1, (D, D), D)
        Fv = F.value
        sig = data.field_jet("sigma", u, 0, (D,), D).value
        DF = _cov(F, [True, False], gam, geom, u).value  # [a, b, c] = D_c F^a_b
        base = DF.transpose(0, 2, 1)  # [a, c, b]
        base = base + np.einsum("ad,dc,b->acb", Fv, Fv, sig)
        base = base - np.einsum("abt,tc->acb", Q, Fv)  # display Q^a_tb is packed Q[a, b, t]
        base = base + base.transpose(0, 2, 1)

        def mu_term(x):
            t = np.einsum("b,ac->acb", x, Fv)
            return t + t.transpose(0, 2, 1)

        def nu_term(x):
            t = np.einsum("b,ac->acb", x, I)
            return t + t.transpose(0, 2, 1)

        mu = _param_or_basis(data, "mu", u, (D,), D, [mu_term(_unit(D, i)) for i in range(D)], terms)
        if mu is not None:
            base = base - mu_term(mu)
        nu = _param_or_basis(data, "nu", u, (D,), D, [nu_term(_unit(D, i)) for i in range(D)], terms)
        if nu is not None:
            base = base - nu_term(nu)
    elif cls == 3:
        data.need("phi")
        phi = data.field_jet("phi", u, 1, (D,), D)
        pv = phi.value
        base = _cov(phi, [True], gam, geom, u).value  # [a, b] = D_b phi^a
        base = base - np.einsum("c,abc->ab", pv, Q)  # display Q^a_cb is packed Q[a, b, c]
        nu = _param_or_basis(data, "nu", u, (), D, [I], terms)
        if nu is not None:
            base = base - float(nu) * I
        mu = _param_or_basis(data, "mu", u, (D,), D, [np.outer(pv, _unit(D, i)) for i in range(D)], terms)
        if mu is not None:
            base = base - np.outer(pv, mu)
    else:
        raise NaMapError(f"class must be 1, 2 or 3, got {cls}")
    res, sol = _solve(base, terms)
    mode = "solved" if terms else "supplied"
    return ClassReport(cls, res, sol, mode, float(np.max(np.abs(res))))


# ---------------------------------------------------------------- invariants
@dataclass
class InvariantPack:
    T: np.ndarray  # trace-adjusted symmetric connection T[m, a, b]
    W: np.ndarray  # Weyl-type tensor W[d, g, a, b]
    r: np.ndarray  # curvature of the auxiliary symmetric connection
    trace_residual: float  # max |W^a_{g a b}|

    def as_dict(self):
        return {"T": self.T, "W": self.W, "r": self.r, "trace_residual": self.trace_residual}


def _trace_free(gs: Jet) -> Jet:
    """gs - (delta^m_a c_b + delta^m_b c_a) / (D + 1) with c_b = gs^d_{bd}."""
    D = gs.shape[0]
    c = contract("dbd->b", gs)
    return gs - projective_term(c) * (1.0 / (D + 1))


def projective_weyl(gs: Jet, w: np.ndarray, N: Jet, n: int) -> tuple:
    """Weyl-type tensor of a symmetric connection, unchanged under gs -> gs + psi_(b delta^a_c).

    With ``c_g = gs^e_{ge}`` and ``R`` the curvature of ``gs``::

        R'^d_gab = R^d_gab + c_g w^d_ab / (D + 1)
        A_gb     = Ric'_gb - Ric'_bg - (D - 1)/(D + 1) c_e w^e_gb
        B_gb     = (A_gb / (D + 1) - Ric'_gb) / (D - 1)
        W^d_gab  = R'^d_gab - delta^d_b B_ga + delta^d_a B_gb - delta^d_g A_ab / (D + 1)

    Returns ``(W, R)``.  ``W`` is traceless on ``d = a``.
    """
    D = gs.shape[0]
    wj = Jet.constant(w, gs.dim, gs.order)
    R = curvature_full_jet(gs, wj, N, n).value
    c = np.einsum("ede->d", gs.value)
    I = np.eye(D)
    Rp = R + np.einsum("g,dab->dgab", c, w) / (D + 1)
    Ric = np.einsum("agab->gb", Rp)
    A = Ric - Ric.T - (D - 1) / (D + 1) * np.einsum("e,egb->gb", c, w)
    B = (A / (D + 1) - Ric) / (D - 1)
    W = Rp - np.einsum("db,ga->dgab", I, B) + np.einsum("da,gb->dgab", I, B) - np.einsum("dg,ab->dgab", I, A) / (D + 1)
    return W, R


def _pack(gs: Jet, geom: Geometry, u, gauge_fix: bool) -> InvariantPack:
    n = geom.n
    N = geom.jets(u, 2).N
    w = nonholonomy_jet(N, n).value
    T0 = _trace_free(gs)
    W, R = projective_weyl(T0 if gauge_fix else gs, w, N, n)
    return InvariantPack(T0.value, W, R, float(np.max(np.abs(np.einsum("agab->gb", W)))))


def projective_pack(conn, u, gauge_fix: bool = False) -> InvariantPack:
    """T and W invariants of the symmetric part of ``conn``."""
    u = np.asarray(u, dtype=float)
    return _pack(symmetric_part(conn.gamma(u, 1)), conn.geom, u, gauge_fix)


def star_connection(gs: Jet, F: Jet, eps: float, geom: Geometry, u) -> Jet:
    """gs + eps F^a_t D_(b F^t_c) with D the derivative of gs."""
    DF = _cov(F, [True, False], gs, geom, u)  # [t, c, b] = D_b F^t_c
    sym = DF + DF.transpose(0, 2, 1)
    return gs + einsum("at,tcb->abc", F, sym) * eps


def na3_connection(gs: Jet, phi: Jet, q: Jet, eps: float, geom: Geometry, u, printed: bool = False) -> Jet:
    """Connection that absorbs an na(3) deformation.

    ``g' = gs + eps phi^d D_(a q_b)/2``; with ``Pi^d_a = delta^d_a - eps phi^d q_a``,
    ``c_a = g'^b_{ab}`` and ``K_a = (c_a + eps q_a phi.c / (D - 1)) / D`` the result is
    ``g' - Pi^d_b K_a - Pi^d_a K_b``.  ``printed`` uses the sign pattern
    ``g' + Pi^d_a K_b - Pi^d_b K_a`` instead, which is not invariant.
    """
    D = gs.shape[0]
    Dq = _cov(q, [False], gs, geom, u)  # [a, b] = D_b q_a
    Dq = (Dq + Dq.transpose(1, 0)) * 0.5
    gp = gs + einsum("d,ab->dab", phi, Dq) * eps
    Pi = _delta(D, phi) - einsum("d,a->da", phi, q) * eps
    c = contract("bab->a", gp)
    pc = einsum("t,t->", phi, c)
    K = (c + einsum(",a->a", pc, q) * (eps / (D - 1))) * (1.0 / D)
    PK = einsum("da,b->dab", Pi, K)  # Pi^d_a K_b
    if printed:
        return gp + PK - PK.transpose(0, 2, 1)
    return gp - PK - PK.transpose(0, 2, 1)


@dataclass
class InvariantReport:
    cls: int
    pack_a: Optional[InvariantPack]
    pack_b: Optional[InvariantPack]
    mismatch: dict
    max_mismatch: float
    tol: float
    passed: bool
    notes: dict = field(default_factory=dict)


def _eps_from(data: NaMapData, sample: float) -> float:
    eps = data.eps if data.eps is not None else sample
    if abs(abs(eps) - 1.0) > NORMALIZATION_TOL:
        raise NormalizationError(f"normalization eps = {eps!r} is not +-1")
    return float(np.sign(eps))


def invariants(cls: int, connA, connB, u, data: Optional[NaMapData] = None, gauge_fix: bool = False, tol: float = 1e-8, printed: bool = False) -> InvariantReport:
    """Invariant packs of both spaces and their componentwise mismatch.

    class 0: T and W of the symmetric parts.  class 2: packs of the star connection
    of A and of the star connection of ``gs_B - psi_(b delta_c)``.  class 3: packs of the
    na(3)-absorbing connections of both sides.  class 1 reports the residual of the
    na(1) curvature criterion instead of a pack pair.
    """
    u = np.asarray(u, dtype=float)
    check_common_n(connA, connB, u)
    geom = connA.geom
    D = geom.dim
    gA = symmetric_part(connA.gamma(u, 1))
    gB = symmetric_part(connB.gamma(u, 1))
    notes = {}
    if cls == 1:
        r = na1_curvature_residual(connA, connB, u, data)
        return InvariantReport(1, None, None, {"criterion": r.max_residual}, r.max_residual, tol, r.max_residual <= tol, {"params": r.params})
    if cls == 0:
        pa, pb = _pack(gA, geom, u, gauge_fix), _pack(gB, connB.geom, u, gauge_fix)
    elif cls == 2:
        if data is None:
            raise MissingParameterError("na(2) invariants need F")
        data.need("F")
        F = data.field_jet("F", u, 2, (D, D), D)
        FF = F.value @ F.value
        eps = _eps_from(data, float(np.trace(FF)) / D)
        notes["F_square_residual"] = float(np.max(np.abs(FF - eps * np.eye(D))))
        psi = data.field_jet("psi", u, 1, (D,), D)
        tilde = gB - projective_term(psi)
        sA = star_connection(gA, F.truncate(2), eps, geom, u)
        sB = star_connection(tilde, F.truncate(2), eps, connB.geom, u)
        pa, pb = _pack(sA, geom, u, gauge_fix), _pack(sB, connB.geom, u, gauge_fix)
    elif cls == 3:
        if data is None:
            raise MissingParameterError("na(3) invariants need phi and q")
        data.need("phi", "q")
        phi = data.field_jet("phi", u, 1, (D,), D)
        q = data.field_jet("q", u, 2, (D,), D)
        eps = _eps_from(data, float(phi.value @ q.value))
        qp = float(phi.value @ q.value)
        if abs(qp - eps) > NORMALIZATION_TOL:
            raise NormalizationError(f"q.phi = {qp!r}, expected {eps:+.0f}")
        cA = na3_connection(gA, phi, q, eps, geom, u, printed)
        cB = na3_connection(gB, phi, q, eps, connB.geom, u, printed)
        pa, pb = _pack(cA, geom, u, gauge_fix), _pack(cB, connB.geom, u, gauge_fix)
        # the absorbing connection is itself the T-type invariant
        pa.T, pb.T = cA.value, cB.value
    else:
        raise NaMapError(f"class must be 0, 1, 2 or 3, got {cls}")
    mm = {k: float(np.max(np.abs(getattr(pa, k) - getattr(pb, k)))) for k in ("T", "W")}
    worst = max(mm.values())
    return InvariantReport(cls, pa, pb, mm, worst, tol, bool(worst <= tol), notes)


def na1_curvature_residual(connA, connB, u, data: Optional[NaMapData] = None) -> ClassReport:
    """Residual of the na(1) curvature criterion

    ``3(D_l P^d_ab + P^d_tl P^t_ab) = r^d_(a b)l - rB^d_(a b)l
    + [T^d_t(a P^t_bl) + Q^d_t(a P^t_bl) + b_(a P^d_bl) + delta^d_(a a_bl)]``

    with D the derivative of the symmetric part of A, r the curvatures of the symmetric
    parts, three-index symmetrizations summed over the three placements and ``a``, ``b``
    solved by least squares when absent from ``data``.
    """
    u = np.asarray(u, dtype=float)
    geom = connA.geom
    D, n = geom.dim, geom.n
    gA, tA, gB, tB = split_jets(connA, connB, u, 1)
    P = gB - gA
    Pv = P.value
    Q = (tB - tA).value
    TA = tA.value
    N = geom.jets(u, 2).N
    w = nonholonomy_jet(N, n)
    rA = curvature_full_jet(gA, w, N, n).value
    rB = curvature_full_jet(gB, w, N, n).value
    DP = _cov(P, [True, False, False], gA, geom, u).value  # [d, a, b, l]
    lhs = 3.0 * (DP + np.einsum("dtl,tab->dabl", Pv, Pv))
    rr = rA - rB
    rhs = rr + rr.transpose(0, 2, 1, 3)

    def cyc(X):  # X[d, a, b, l] symmetric in (b, l): sum of the three placements of a
        return X + X.transpose(0, 2, 1, 3) + X.transpose(0, 3, 2, 1)

    tq = display_order(TA + Q)
    rhs = rhs + cyc(np.einsum("dta,tbl->dabl", tq, Pv))
    base = lhs - rhs
    I = np.eye(D)
    data = data or NaMapData()
    terms = {}
    bvec = _param_or_basis(data, "b", u, (D,), D, [-cyc(np.einsum("a,dbl->dabl", _unit(D, i), Pv)) for i in range(D)], terms)
    if bvec is not None:
        base = base - cyc(np.einsum("a,dbl->dabl", bvec, Pv))
    amat = _param_or_basis(
        data, "a", u, (D, D), D, [-cyc(np.einsum("da,bl->dabl", I, _sym_unit(D, i, j))) for i in range(D) for j in range(i, D)], terms
    )
    if amat is not None:
        base = base - cyc(np.einsum("da,bl->dabl", I, amat))
    res, sol = _solve(base, terms)
    sol = {k: -v for k, v in sol.items()}
    return ClassReport(1, res, sol, "solved" if terms else "supplied", float(np.max(np.abs(res))))


# ---------------------------------------------------------------- concircular
def _log_jet(J: Jet) -> Jet:
    v = J.value
    return J.compose([np.log(v), 1.0 / v, -1.0 / v**2, 2.0 / v**3])


def concircular_case(geom: Geometry, Omega) -> NaMapData:
    """na(3) data with psi = 0, phi_a = delta_a ln Omega, sigma_ab = G_ab and P = sigma_bc phi^a.

    ``phi`` is raised with the d-metric and ``q_a = phi_a / (phi_b phi^b)`` so that
    ``q.phi = 1`` wherever phi is non-null.  ``Omega`` is an expression string, a parsed
    expression or a field callable returning a scalar jet.
    """
    dims = (geom.n, geom.m)
    D, n = geom.dim, geom.n
    if callable(Omega) and not isinstance(Omega, Expression):
        om = Omega
    else:
        e = Omega if isinstance(Omega, Expression) else parse(str(Omega), dims)
        om = lambda u, order: eval_jet(e, np.asarray(u, dtype=float), order)

    def check(u):
        val = float(om(u, 0).value)
        if not val > 0.0:
            raise ConformalFactorError(f"Omega = {val!r} is not positive at {np.asarray(u).tolist()}")

    for p in geom.probe_points:
        check(p)

    def phi_low(u, order):
        check(u)
        lj = _log_jet(om(u, order + 1))
        N = geom.jets(u, order + 1).N
        return adapted_derivative(lj, N, n)

    def phi(u, order):
        G = geom.dmetric(u, order)
        return einsum("ab,b->a", G.inv(), phi_low(u, order))

    def sigma2(u, order):
        return geom.dmetric(u, order)

    def q(u, order):
        pl = phi_low(u, order)
        nrm = einsum("a,a->", pl, phi(u, order))
        return einsum(",a->a", nrm.reciprocal(), pl)

    zero = zero_field((D,), D)
    return NaMapData(
        P=na3_deformation(zero, sigma2, phi),
        Q=zero_field((D, D, D), D),
        psi=zero,
        sigma2=sigma2,
        phi=phi,
        q=q,
        eps=1.0,
    )
