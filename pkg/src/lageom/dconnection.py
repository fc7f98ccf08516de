"""Distinguished connections and h-/v-covariant derivatives.

All four coefficient blocks are packed into one adapted-frame array
``Gamma[gamma, beta, alpha]`` with ``D_{delta_alpha} delta_beta = Gamma^gamma_{beta alpha} delta_gamma``::

    Gamma[i, j, k] = L^i_jk     Gamma[a, b, k] = L^a_bk
    Gamma[i, j, c] = C^i_jc     Gamma[a, b, c] = C^a_bc

Mixed entries (h index paired with v index) vanish for every d-connection.
The covariant derivative of any d-tensor is then one formula over the
full index range; h- and v-parts are slices of the appended slot.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .bundle import Geometry, _grid, block_diag_jet
from .expr import eval_grid
from .jets import Jet, adapted_derivative, einsum

KINDS = ("berwald", "canonical", "christoffel_d", "custom")
MAX_RANK = 5
_LETTERS = "pqrstuvwxyz"


class RankOverflowError(ValueError):
    pass


# ---------------------------------------------------------------- blocks
def _canonical_pieces(gj, n: int, with_mixed: bool):
    g, h, N = gj.g, gj.h, gj.N
    ginv, hinv = g.inv(), h.inv()
    dg = adapted_derivative(g, N, n)  # dg[j, k, alpha] = delta_alpha g_jk
    dh = adapted_derivative(h, N, n)
    p = dg.order
    ginv, hinv, gt, ht = ginv.truncate(p), hinv.truncate(p), g.truncate(p), h.truncate(p)
    dgx = dg[:, :, :n]
    # christ[j, r, k] = delta_j g_rk + delta_k g_jr - delta_r g_jk
    christ = _perm(dgx, "rkj->jrk") + _perm(dgx, "jrk->jrk") - _perm(dgx, "jkr->jrk")
    L = einsum("ir,jrk->ijk", ginv, christ) * 0.5
    dhy = dh[:, :, n:]
    cv = _perm(dhy, "dcb->bdc") + _perm(dhy, "dbc->bdc") - _perm(dhy, "bcd->bdc")
    C = einsum("ad,bdc->abc", hinv, cv) * 0.5
    dN = N.derivative()
    Nt = dN[:, :, n:].transpose(1, 2, 0)  # Ntil[a, b, i] = d_b N_i^a
    out = {"Lh": L, "Cv": C, "Ntil": Nt}
    if with_mixed:
        dhx = dh[:, :, :n]  # [b, c, i] = delta_i h_bc
        t1 = einsum("dbi,dc->bci", Nt, ht)  # Ntil^d_bi h_dc
        t2 = t1.transpose(1, 0, 2)  # Ntil^d_ci h_db
        Lv = Nt + einsum("ac,bci->abi", hinv, dhx - t1 - t2) * 0.5
        dgy = dg[:, :, n:]  # [j, k, c] = d_c g_jk
        Ch = einsum("ik,jkc->ijc", ginv, dgy) * 0.5
        out["Lv"] = Lv
        out["Ch"] = Ch
    return out


def _perm(J: Jet, spec: str) -> Jet:
    src, dst = spec.split("->")
    return J.transpose(tuple(src.index(ch) for ch in dst))


def assemble_gamma(Lh: Jet, Lv: Jet, Ch: Jet, Cv: Jet) -> Jet:
    n, m = Lh.shape[0], Cv.shape[0]
    D = n + m
    order = min(x.order for x in (Lh, Lv, Ch, Cv))
    coeffs = []
    for k in range(order + 1):
        tail = (Lh.dim,) * k
        G = np.zeros((D, D, D) + tail)
        G[:n, :n, :n] = Lh.c[k]
        G[n:, n:, :n] = Lv.c[k]
        G[:n, :n, n:] = Ch.c[k]
        G[n:, n:, n:] = Cv.c[k]
        coeffs.append(G)
    return Jet(coeffs, Lh.dim)


def _zeros(shape, like: Jet) -> Jet:
    return Jet.constant(np.zeros(shape), like.dim, like.order)


class DConnection:
    """A distinguished connection on a geometry.

    ``kind`` is one of berwald, canonical, christoffel_d or custom.  A custom
    connection takes expression grids ``Lh[i][j][k]``, ``Lv[a][b][k]``,
    ``Ch[i][j][c]``, ``Cv[a][b][c]``.
    """

    def __init__(self, geom: Geometry, kind: str, custom: Optional[dict] = None):
        if kind not in KINDS:
            raise ValueError(f"unknown connection kind {kind!r}; expected one of {KINDS}")
        self.geom = geom
        self.kind = kind
        self.n, self.m, self.dim = geom.n, geom.m, geom.dim
        self._custom = None
        if kind == "custom":
            if custom is None:
                raise ValueError("custom connection needs coefficient grids")
            dims = (self.n, self.m)
            n, m = self.n, self.m
            self._custom = {
                "Lh": _grid(custom["Lh"], dims, (n, n, n), "Lh"),
                "Lv": _grid(custom["Lv"], dims, (m, m, n), "Lv"),
                "Ch": _grid(custom["Ch"], dims, (n, n, m), "Ch"),
                "Cv": _grid(custom["Cv"], dims, (m, m, m), "Cv"),
            }
        self._cache = {}

    def block_jets(self, u, order: int = 2) -> dict:
        """The four blocks as jets of the requested order (at most 2)."""
        u = np.asarray(u, dtype=float).reshape(-1)
        key = (u.tobytes(), order)
        if key in self._cache:
            return self._cache[key]
        n = self.n
        if self.kind == "custom":
            out = {k: eval_grid(v, u, order) for k, v in self._custom.items()}
        else:
            gj = self.geom.jets(u, order + 1)
            pieces = _canonical_pieces(gj, n, self.kind == "canonical")
            L, C = pieces["Lh"], pieces["Cv"]
            if self.kind == "canonical":
                out = {"Lh": L, "Lv": pieces["Lv"], "Ch": pieces["Ch"], "Cv": C}
            elif self.kind == "berwald":
                Nt = pieces["Ntil"]
                out = {"Lh": L, "Lv": Nt, "Ch": _zeros((n, n, self.m), L), "Cv": C}
            else:
                out = {"Lh": L, "Lv": _zeros((self.m, self.m, n), L), "Ch": _zeros((n, n, self.m), L), "Cv": C}
        if len(self._cache) > 128:
            self._cache.clear()
        self._cache[key] = out
        return out

    def gamma(self, u, order: int = 2) -> Jet:
        b = self.block_jets(u, order)
        return assemble_gamma(b["Lh"], b["Lv"], b["Ch"], b["Cv"])

    def blocks(self, u) -> dict:
        return {k: v.value for k, v in self.block_jets(u, 0).items()}


def build_connection(geom: Geometry, kind: str, custom: Optional[dict] = None) -> DConnection:
    return DConnection(geom, kind, custom)


# ---------------------------------------------------------------- tensors
@dataclass
class DTensorField:
    """A d-tensor field.

    ``signature`` lists slots as pairs like ``("h", "up")`` or ``("v", "down")``.
    ``components`` is either a nested expression grid of the block shape or
    a callable ``(u, order) -> Jet``.
    """

    signature: Sequence
    components: object

    def __post_init__(self):
        self.signature = [tuple(s) for s in self.signature]
        for kind, pos in self.signature:
            if kind not in ("h", "v") or pos not in ("up", "down"):
                raise ValueError(f"bad slot {(kind, pos)!r}")
        if len(self.signature) > MAX_RANK:
            raise RankOverflowError(f"rank {len(self.signature)} exceeds {MAX_RANK}")

    def block_shape(self, n: int, m: int):
        return tuple(n if k == "h" else m for k, _ in self.signature)

    def jet(self, geom: Geometry, u, order: int) -> Jet:
        if callable(self.components):
            J = self.components(u, order)
        else:
            J = eval_grid(_grid(self.components, (geom.n, geom.m), self.block_shape(geom.n, geom.m), "tensor"), u, order)
        if J.shape != self.block_shape(geom.n, geom.m):
            raise ValueError(f"component shape {J.shape} does not match signature")
        return J


@dataclass
class DTensor:
    signature: list
    full: np.ndarray  # embedded in the full index range, derivative slot last
    h_part: np.ndarray  # block components, derivative along delta_k
    v_part: np.ndarray  # block components, derivative along d/dy^c


def embed(J: Jet, signature, n: int, m: int) -> Jet:
    """Place block components into arrays over the full index range."""
    D = n + m
    sl = tuple(slice(0, n) if k == "h" else slice(n, D) for k, _ in signature)
    coeffs = []
    for k, c in enumerate(J.c):
        full = np.zeros((D,) * len(signature) + (J.dim,) * k)
        full[sl] = c
        coeffs.append(full)
    return Jet(coeffs, J.dim)


def extract(full: np.ndarray, signature, n: int, m: int, extra: int = 0) -> np.ndarray:
    D = n + m
    sl = tuple(slice(0, n) if k == "h" else slice(n, D) for k, _ in signature)
    return full[sl + (slice(None),) * extra]


def covariant_derivative_full(T: Jet, ups: Sequence[bool], gamma: Jet, N: Jet, n: int) -> Jet:
    """nabla_alpha T over the full index range; the alpha slot is appended last.

    Each upper slot gets ``+ Gamma^s_{b alpha} T^{..b..}`` and each lower slot
    ``- Gamma^b_{s alpha} T_{..b..}``.  The derivative part uses the adapted frame.
    """
    r = len(ups)
    if r > MAX_RANK:
        raise RankOverflowError(f"rank {r} exceeds {MAX_RANK}")
    out = adapted_derivative(T, N, n)
    p = out.order
    Tt, Gt = T.truncate(p), gamma.truncate(min(p, gamma.order))
    if Gt.order < p:
        out, Tt = out.truncate(Gt.order), Tt.truncate(Gt.order)
    slots = _LETTERS[:r]
    al = "o"
    for s, up in enumerate(ups):
        b = "n"
        t_sub = slots[:s] + b + slots[s + 1 :]
        res = slots + al
        if up:
            term = einsum(f"{slots[s]}{b}{al},{t_sub}->{res}", Gt, Tt)
            out = out + term
        else:
            term = einsum(f"{b}{slots[s]}{al},{t_sub}->{res}", Gt, Tt)
            out = out - term
    return out


def cov_deriv(conn: DConnection, T: DTensorField, u, order: int = 0) -> DTensor:
    """h- and v-covariant derivative of a d-tensor field at ``u``."""
    geom = conn.geom
    n, m = geom.n, geom.m
    J = T.jet(geom, u, order + 1)
    full = embed(J, T.signature, n, m)
    ups = [pos == "up" for _, pos in T.signature]
    gam = conn.gamma(u, min(order, 2))
    N = geom.jets(u, order + 1).N
    d = covariant_derivative_full(full, ups, gam, N, n)
    val = d.value
    blk = extract(val, T.signature, n, m, extra=1)
    return DTensor(T.signature, val, blk[..., :n], blk[..., n:])


def deformation(conn_a: DConnection, conn_b: DConnection, u) -> np.ndarray:
    """P[gamma, beta, alpha] with D^a = D^b + P, in the packed Gamma layout."""
    if conn_a.geom is not conn_b.geom:
        raise ValueError("connections live on different geometries")
    return conn_a.gamma(u, 0).value - conn_b.gamma(u, 0).value


METRICITY_BLOCKS = ("Dk_g", "Dc_g", "Dk_h", "Dc_h")


def metricity_residuals(conn: DConnection, geom: Geometry, points) -> dict:
    """Max |D g| and |D h| split by derivative direction, over the points."""
    n = geom.n
    res = dict.fromkeys(METRICITY_BLOCKS, 0.0)
    for u in np.atleast_2d(points):
        Gm = geom.dmetric(u, 1)
        N = geom.jets(u, 1).N
        d = covariant_derivative_full(Gm, [False, False], conn.gamma(u, 0), N, n).value
        res["Dk_g"] = max(res["Dk_g"], float(np.max(np.abs(d[:n, :n, :n]))))
        res["Dc_g"] = max(res["Dc_g"], float(np.max(np.abs(d[:n, :n, n:]))))
        res["Dk_h"] = max(res["Dk_h"], float(np.max(np.abs(d[n:, n:, :n]))))
        res["Dc_h"] = max(res["Dc_h"], float(np.max(np.abs(d[n:, n:, n:]))))
    return res


def metricity_residual(conn: DConnection, geom: Geometry, points) -> float:
    return max(metricity_residuals(conn, geom, points).values())
