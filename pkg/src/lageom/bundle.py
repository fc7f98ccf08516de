"""Geometry on a vector bundle with a nonlinear connection.

Coordinates are ``u = (x^1..x^n, y^1..y^m)``.  A geometry supplies the
horizontal metric ``g_ij``, the vertical metric ``h_ab`` and the nonlinear
connection ``N_i^a`` as fields that can be evaluated with derivative jets.

Adapted frame (rows are vectors in the coordinate basis)::

    delta_i = d_i - N_i^a d_a,      delta_a = d_a

Dual coframe::

    theta^i = dx^i,                 theta^a = dy^a + N_i^a dx^i

Nonholonomy is defined by ``[delta_alpha, delta_beta] = w^gamma_{alpha beta} delta_gamma``
and is stored as ``w[gamma, alpha, beta]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .expr import DomainError, Expression, differentiate, eval_grid, parse
from .jets import Jet, einsum

PROBE_COUNT = 8
SYMMETRY_TOL = 1e-12
CONDITION_LIMIT = 1e14


class GeometryError(ValueError):
    pass


class NonSymmetricError(GeometryError):
    pass


class SingularMetricError(GeometryError):
    pass


class DimensionMismatchError(GeometryError):
    pass


def _grid(src, dims, shape, name):
    arr = np.asarray(src, dtype=object)
    if arr.shape != tuple(shape):
        raise DimensionMismatchError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    out = np.empty(shape, dtype=object)
    for idx in np.ndindex(*shape):
        e = arr[idx]
        out[idx] = e if isinstance(e, Expression) else parse(str(e) if isinstance(e, str) else e, dims)
    return out


def constant_grid(values, dims):
    """Expression grid holding constant entries."""
    arr = np.asarray(values, dtype=float)
    out = np.empty(arr.shape, dtype=object)
    for idx in np.ndindex(*arr.shape):
        out[idx] = parse(repr(float(arr[idx])), dims)
    return out


@dataclass
class GeometrySpec:
    """Declarative geometry: exactly one of the three forms.

    (A) ``g``, ``h``, ``N`` grids.  (B) ``lagrangian`` plus ``N`` with
    ``g = h = 1/2 d^2 L / dy dy`` (needs ``n == m``).  (C) full metric ``G``
    in the coordinate basis, with ``N`` recovered from its mixed block.
    Grid entries may be strings, numbers or parsed expressions.
    """

    n: int
    m: int
    g: Optional[list] = None
    h: Optional[list] = None
    N: Optional[list] = None
    lagrangian: Optional[str] = None
    G: Optional[list] = None
    probe_box: tuple = (-1.0, 1.0)
    probe_seed: int = 0

    @property
    def form(self) -> str:
        has_a = self.g is not None or self.h is not None
        forms = []
        if has_a:
            forms.append("A")
        if self.lagrangian is not None:
            forms.append("B")
        if self.G is not None:
            forms.append("C")
        if len(forms) != 1:
            raise GeometryError("geometry needs exactly one of (g, h, N), (lagrangian, N) or G")
        return forms[0]


@dataclass
class GeometryJets:
    g: Jet
    h: Jet
    N: Jet


@dataclass
class FrameStructure:
    frame: np.ndarray  # rows: delta_alpha in coordinate components
    coframe: np.ndarray  # rows: theta^alpha as covectors
    w: np.ndarray  # w[gamma, alpha, beta]
    omega: np.ndarray  # omega[a, i, j]


class Geometry:
    """Compiled geometry; evaluation is pure and cached per point."""

    def __init__(self, spec: GeometrySpec):
        self.spec = spec
        self.n, self.m = int(spec.n), int(spec.m)
        if self.n < 1 or self.m < 1:
            raise DimensionMismatchError("n and m must be positive")
        self.dim = self.n + self.m
        dims = (self.n, self.m)
        self.form = spec.form
        self._G = None
        if self.form == "A":
            if spec.g is None or spec.h is None or spec.N is None:
                raise GeometryError("form A needs g, h and N")
            self._g = _grid(spec.g, dims, (self.n, self.n), "g")
            self._h = _grid(spec.h, dims, (self.m, self.m), "h")
            self._N = _grid(spec.N, dims, (self.n, self.m), "N")
        elif self.form == "B":
            if self.n != self.m:
                raise DimensionMismatchError("a Lagrangian geometry needs n == m")
            if spec.N is None:
                raise GeometryError("form B needs N")
            L = parse(spec.lagrangian, dims)
            hess = np.empty((self.m, self.m), dtype=object)
            for a in range(self.m):
                La = differentiate(L, "y", a + 1)
                for b in range(a, self.m):
                    e = differentiate(La, "y", b + 1)
                    e = Expression(parse(f"0.5 * ({e})", dims).root, dims)
                    hess[a, b] = hess[b, a] = e
            self.lagrangian = L
            self._g = hess
            self._h = hess
            self._N = _grid(spec.N, dims, (self.n, self.m), "N")
        else:
            self._G = _grid(spec.G, dims, (self.dim, self.dim), "G")
            self._g = self._h = self._N = None
        self._cache = {}
        self.probe_points = self._validate()

    # ------------------------------------------------------------ evaluation
    def jets(self, u, order: int = 3) -> GeometryJets:
        u = np.asarray(u, dtype=float).reshape(-1)
        if u.shape[0] != self.dim:
            raise DimensionMismatchError(f"point has {u.shape[0]} coordinates, expected {self.dim}")
        key = (u.tobytes(), order)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if self._G is None:
            out = GeometryJets(eval_grid(self._g, u, order), eval_grid(self._h, u, order), eval_grid(self._N, u, order))
        else:
            out = _split_full_metric(eval_grid(self._G, u, order), self.n)
        if len(self._cache) > 256:
            self._cache.clear()
        self._cache[key] = out
        return out

    def metric_values(self, u):
        j = self.jets(u, 0)
        return j.g.value, j.h.value, j.N.value

    def dmetric(self, u, order: int = 3) -> Jet:
        """Block-diagonal d-metric diag(g, h) in the adapted frame, as a jet."""
        j = self.jets(u, order)
        return block_diag_jet(j.g, j.h)

    def full_metric(self, u) -> np.ndarray:
        """Coordinate-basis metric G_{alpha beta} reassembled from g, h, N."""
        g, h, N = self.metric_values(u)
        n = self.n
        G = np.zeros((self.dim, self.dim))
        G[:n, :n] = g + N @ h @ N.T
        G[:n, n:] = N @ h
        G[n:, :n] = (N @ h).T
        G[n:, n:] = h
        return G

    # ------------------------------------------------------------ probes
    def _validate(self):
        lo, hi = self.spec.probe_box
        rng = np.random.default_rng(self.spec.probe_seed)
        points = []
        tries = 0
        while len(points) < PROBE_COUNT:
            tries += 1
            if tries > 64 * PROBE_COUNT:
                raise SingularMetricError("no probe point in the box avoids the singular locus")
            u = rng.uniform(lo, hi, self.dim)
            try:
                g, h, _ = self.metric_values(u)
            except DomainError:
                continue
            for name, A in (("g", g), ("h", h)):
                if np.max(np.abs(A - A.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(A))):
                    raise NonSymmetricError(f"{name} is not symmetric at probe point {u.tolist()}")
                if not np.all(np.isfinite(A)) or np.linalg.cond(A) > CONDITION_LIMIT:
                    raise SingularMetricError(f"{name} is singular at probe point {u.tolist()}")
            if self._G is not None:
                G = eval_grid(self._G, u, 0).value
                if np.max(np.abs(G - G.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(G))):
                    raise NonSymmetricError(f"G is not symmetric at probe point {u.tolist()}")
            points.append(u)
        return np.array(points)


def block_diag_jet(a: Jet, b: Jet) -> Jet:
    n, m = a.shape[0], b.shape[0]
    order = min(a.order, b.order)
    coeffs = []
    for k in range(order + 1):
        tail = (a.dim,) * k
        M = np.zeros((n + m, n + m) + tail)
        M[:n, :n] = a.c[k]
        M[n:, n:] = b.c[k]
        coeffs.append(M)
    return Jet(coeffs, a.dim)


def _split_full_metric(G: Jet, n: int) -> GeometryJets:
    h = G[n:, n:]
    Gia = G[:n, n:]
    N = einsum("ia,ab->ib", Gia, h.inv())
    g = G[:n, :n] - einsum("ia,ja->ij", N, Gia)
    return GeometryJets((g + g.transpose(1, 0)) * 0.5, h, N)


def load_geometry(spec: GeometrySpec) -> Geometry:
    return Geometry(spec)


def n_from_block_metric(G, u=None, n: Optional[int] = None) -> np.ndarray:
    """N_i^b = h^{ab} G_ia from a full metric given as an array or an expression grid."""
    if isinstance(G, np.ndarray) and G.dtype != object:
        Gv = G
    else:
        Gv = eval_grid(G, u, 0).value
    if n is None:
        raise ValueError("n is required")
    h = Gv[n:, n:]
    if np.linalg.cond(h) > CONDITION_LIMIT:
        raise SingularMetricError("vertical block of G is singular")
    return np.linalg.solve(h, Gv[:n, n:].T).T


def compatibility_residual(geom: Geometry, G, u) -> float:
    """max |G_ia - N_i^b h_ab| with h taken from G's vertical block."""
    n = geom.n
    Gv = G if (isinstance(G, np.ndarray) and G.dtype != object) else eval_grid(G, u, 0).value
    _, _, N = geom.metric_values(u)
    return float(np.max(np.abs(Gv[:n, n:] - N @ Gv[n:, n:])))


# ---------------------------------------------------------------- frames
def frame_jet(N: Jet, n: int) -> Jet:
    """Jet of the adapted frame matrix E[alpha, mu]."""
    m = N.shape[1]
    dim = n + m
    coeffs = []
    for k in range(N.order + 1):
        E = np.zeros((dim, dim) + (N.dim,) * k)
        if k == 0:
            E[:, :] = np.eye(dim)
        E[:n, n:] = -N.c[k]
        coeffs.append(E)
    return Jet(coeffs, N.dim)


def coframe_jet(N: Jet, n: int) -> Jet:
    m = N.shape[1]
    dim = n + m
    coeffs = []
    for k in range(N.order + 1):
        C = np.zeros((dim, dim) + (N.dim,) * k)
        if k == 0:
            C[:, :] = np.eye(dim)
        C[n:, :n] = np.moveaxis(N.c[k], 0, 1)
        coeffs.append(C)
    return Jet(coeffs, N.dim)


def nonholonomy_jet(N: Jet, n: int) -> Jet:
    """w[gamma, alpha, beta] from Lie brackets of the adapted frame fields."""
    E = frame_jet(N, n)
    dE = E.derivative()  # dE[beta, mu, nu] = d_nu E_beta^mu
    Et = E.truncate(dE.order)
    # [X_a, X_b]^mu = X_a^nu d_nu X_b^mu - X_b^nu d_nu X_a^mu
    t = einsum("an,bmn->abm", Et, dE)
    br = t - t.transpose(1, 0, 2)
    return einsum("gm,abm->gab", coframe_jet(N, n).truncate(br.order), br)


def omega_closed_form(N: Jet, n: int) -> Jet:
    """N-connection curvature Omega^a_ij from the explicit formula."""
    dN = N.derivative()  # dN[i, a, mu]
    Nt = N.truncate(dN.order)
    dx = dN[:, :, :n]  # d_j N_i^a -> [i, a, j]
    dy = dN[:, :, n:]  # d_b N_i^a -> [i, a, b]
    first = dx.transpose(1, 0, 2) - dx.transpose(1, 2, 0)  # [a, i, j]
    t = einsum("ib,jab->aij", Nt, dy)  # N_i^b d_b N_j^a
    return first + t - t.transpose(0, 2, 1)


def frame_structure(geom: Geometry, u) -> FrameStructure:
    N = geom.jets(u, 3).N.truncate(1)
    n = geom.n
    E = frame_jet(N, n).value
    Th = coframe_jet(N, n).value
    w = nonholonomy_jet(N, n).value
    om = omega_closed_form(N, n).value
    return FrameStructure(E, Th, w, om)


# ---------------------------------------------------------------- standard geometries
def _det_str(M) -> str:
    k = len(M)
    if k == 1:
        return f"({M[0][0]})"
    terms = []
    for j in range(k):
        minor = [row[:j] + row[j + 1 :] for row in M[1:]]
        sign = "+" if j % 2 == 0 else "-"
        terms.append(f"{sign} ({M[0][j]}) * {_det_str(minor)}")
    return "(" + " ".join(terms).lstrip("+ ") + ")"


def riemannian_lift(g, n: int, **kw) -> GeometrySpec:
    """g = h = g(x) with N_i^a = Gamma^a_{bi}(x) y^b from the Levi-Civita connection of g."""
    dims = (n, n)
    G = [[str(parse(str(g[i][j]), dims)) for j in range(n)] for i in range(n)]
    det = _det_str(G)
    inv = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [row[:i] + row[i + 1 :] for r, row in enumerate(G) if r != j]
            cof = _det_str(minor) if minor else "1"
            sign = "" if (i + j) % 2 == 0 else "-"
            inv[i][j] = f"{sign}{cof} / {det}"
    d = [[[str(differentiate(parse(G[i][j], dims), "x", k + 1)) for k in range(n)] for j in range(n)] for i in range(n)]
    N = [[None] * n for _ in range(n)]
    for i in range(n):
        for a in range(n):
            terms = []
            for b in range(n):
                chris = " + ".join(
                    f"({inv[a][e]}) * (({d[e][i][b]}) + ({d[e][b][i]}) - ({d[b][i][e]}))" for e in range(n)
                )
                terms.append(f"0.5 * ({chris}) * y{b + 1}")
            N[i][a] = str(parse(" + ".join(terms), dims))
    return GeometrySpec(n, n, g=G, h=[row[:] for row in G], N=N, **kw)


def _random_poly(rng, names, scale: float, degree: int = 2) -> str:
    terms = []
    for a in names:
        terms.append(f"{rng.uniform(-scale, scale)!r}*{a}")
    if degree >= 2:
        for i, a in enumerate(names):
            for b in names[i:]:
                terms.append(f"{rng.uniform(-scale, scale)!r}*{a}*{b}")
    return " + ".join(terms)


def random_polynomial_geometry(n: int, m: int, seed: int, scale: float = 0.3, **kw) -> GeometrySpec:
    """Seeded form-A geometry with quadratic entries in all coordinates.

    ``g`` and ``h`` are the identity plus symmetric polynomial perturbations, so they
    stay positive definite on a box of half-width about 1 / (2 scale (n + m)).
    """
    rng = np.random.default_rng(seed)
    names = [f"x{i + 1}" for i in range(n)] + [f"y{a + 1}" for a in range(m)]

    def sym(k):
        M = [[None] * k for _ in range(k)]
        for i in range(k):
            for j in range(i, k):
                p = _random_poly(rng, names, scale)
                M[i][j] = M[j][i] = (f"1 + {p}" if i == j else p)
        return M

    g, h = sym(n), sym(m)
    N = [[_random_poly(rng, names, scale) for _ in range(m)] for _ in range(n)]
    kw.setdefault("probe_box", (-0.5, 0.5))
    return GeometrySpec(n, m, g=g, h=h, N=N, **kw)
