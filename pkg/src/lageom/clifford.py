"""Clifford d-algebras, spinor metrics and spinor forms of connection and curvature.

Generators follow ``sigma_a sigma_b + sigma_b sigma_a = -G_ab I`` inside their own
spin block: h-generators act on the first ``N(n)`` spinor components and
v-generators on the last ``N(m)``.  A diagonal entry ``G = +1`` gives a complex
generator squaring to ``-1/2``; ``G = -1`` gives a real one squaring to ``+1/2``.
Spinor-index matrices are read ``M[row, col]`` with the row index first, so
``(sigma_a)_k^i`` is ``sigma[a][k, i]``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dconnection import DConnection
from .jets import Jet, adapted_derivative, einsum

ANTICOMMUTATION_TOL = 1e-12
FRAME_TOL = 1e-10
_RNG_SEED = 20240

_PX = np.array([[0, 1], [1, 0]], dtype=complex)
_PY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_PZ = np.array([[1, 0], [0, -1]], dtype=complex)
_I2 = np.eye(2, dtype=complex)


class CliffordError(ValueError):
    pass


class FactorizationError(CliffordError):
    """The epsilon sum did not factor into a rank-one product."""


class FrameError(CliffordError):
    """A frame does not reproduce the metric it is supposed to decompose."""


# ---------------------------------------------------------------- dimensions
def spinor_dim(k: int) -> int:
    if k < 0:
        raise ValueError("dimension must be non-negative")
    return 2 ** (k // 2)


def spinor_dims(n: int, m: int):
    """(N(n), N(m)): 2^((k-1)/2) for odd k, 2^(k/2) for even k."""
    if n < 1 or m < 1:
        raise ValueError("n and m must be positive")
    return spinor_dim(n), spinor_dim(m)


# ---------------------------------------------------------------- classification
_RING_DIM = {"R": 1, "C": 2, "H": 4}
# (p - q) mod 8 -> (ring, number of summands); p generators square to -1
_PERIOD = {0: ("R", 1), 1: ("C", 1), 2: ("H", 1), 3: ("H", 2), 4: ("H", 1), 5: ("C", 1), 6: ("R", 1), 7: ("R", 2)}

# the isomorphism list as printed, C^{p,q} keyed by (p, q)
PRINTED_CLIFFORD_TABLE = {
    (0, 0): "R",
    (1, 0): "C",
    (0, 1): "R+R",
    (2, 0): "H",
    (0, 2): "M2(R)",
    (3, 0): "H+H",
    (0, 3): "M2(R)",
    (4, 0): "M2(H)",
    (0, 4): "M2(H)",
    (5, 0): "M4(C)",
    (0, 5): "M2(H)+M2(H)",
    (6, 0): "M8(R)",
    (0, 6): "M4(H)",
    (7, 0): "M8(R)+M8(R)",
    (0, 7): "M8(C)",
    (8, 0): "M16(R)",
    (0, 8): "M16(R)",
}


@dataclass(frozen=True)
class AlgebraDescriptor:
    ring: str  # R, C or H
    summands: int  # 1 or 2
    size: int  # matrix order s of each summand
    p: int
    q: int

    @property
    def real_dim(self) -> int:
        return self.summands * _RING_DIM[self.ring] * self.size**2

    @property
    def label(self) -> str:
        one = self.ring if self.size == 1 else f"M{self.size}({self.ring})"
        return one if self.summands == 1 else f"{one}+{one}"

    def as_dict(self) -> dict:
        return {"p": self.p, "q": self.q, "ring": self.ring, "summands": self.summands,
                "size": self.size, "label": self.label, "real_dim": self.real_dim}


def classify_clifford(p: int, q: int) -> AlgebraDescriptor:
    """Real Clifford algebra with p generators squaring to -1 and q to +1.

    The ring comes from (p - q) mod 8; ``C^{p+1,q+1} = C^{p,q} (x) M2(R)``
    keeps the ring and fixes the matrix size through the real dimension 2^(p+q).
    """
    if p < 0 or q < 0:
        raise ValueError("p and q must be non-negative")
    ring, summands = _PERIOD[(p - q) % 8]
    s2 = 2 ** (p + q) // (summands * _RING_DIM[ring])
    size = math.isqrt(s2)
    if size * size != s2:
        raise CliffordError(f"no square matrix size for C^{p},{q}")
    return AlgebraDescriptor(ring, summands, size, p, q)


def printed_table_comparison() -> list:
    """Rows (p, q, printed, computed, agree) for the printed isomorphism list."""
    rows = []
    for (p, q), printed in PRINTED_CLIFFORD_TABLE.items():
        got = classify_clifford(p, q).label
        rows.append({"p": p, "q": q, "printed": printed, "computed": got, "agree": printed == got})
    return rows


# ---------------------------------------------------------------- signatures and reps
@dataclass(frozen=True)
class Signature:
    """Diagonal entries (+1 or -1) of the constant h- and v-metrics."""

    h: tuple
    v: tuple

    def __post_init__(self):
        for d in self.h + self.v:
            if d not in (1, -1):
                raise ValueError("signature entries must be +1 or -1")

    @classmethod
    def from_counts(cls, p: int, q: int, a: int = 0, b: int = 0) -> "Signature":
        if min(p, q, a, b) < 0:
            raise ValueError("signature counts must be non-negative")
        return cls((1,) * p + (-1,) * q, (1,) * a + (-1,) * b)

    @property
    def n(self) -> int:
        return len(self.h)

    @property
    def m(self) -> int:
        return len(self.v)

    @property
    def counts(self):
        return (self.h.count(1), self.h.count(-1), self.v.count(1), self.v.count(-1))

    @property
    def G(self) -> np.ndarray:
        return np.diag(np.array(self.h + self.v, dtype=float))


def _kron(*ms) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for x in ms:
        out = np.kron(out, x)
    return out


def hermitian_generators(k: int) -> list:
    """k mutually anticommuting Hermitian matrices squaring to I, of order 2^(k//2)."""
    K = k // 2
    gens = []
    for j in range(1, K + 1):
        for P in (_PX, _PZ):
            gens.append(_kron(*([_PY] * (j - 1) + [P] + [_I2] * (K - j))))
    if k % 2:
        gens.append(_kron(*([_PY] * K)))
    return gens


def block_generators(diag: Sequence[int]) -> np.ndarray:
    """sigma_i with sigma_i sigma_j + sigma_j sigma_i = -diag_i delta_ij I."""
    k = len(diag)
    if k == 0:
        return np.zeros((0, 1, 1), dtype=complex)
    gens = hermitian_generators(k)
    s = 1.0 / math.sqrt(2.0)
    return np.array([(1j * s if d > 0 else s) * g for d, g in zip(diag, gens)])


@dataclass
class CliffordRep:
    """Generators on the d-spinor space of dimension N(n) + N(m)."""

    sigma: np.ndarray  # (n+m, N, N) complex
    G: np.ndarray  # (n+m, n+m) metric the generators realize
    n: int
    m: int
    split: tuple  # (N(n), N(m))

    @property
    def N(self) -> int:
        return self.split[0] + self.split[1]

    def block_of(self, alpha: int) -> int:
        return 0 if alpha < self.n else 1

    def block_slice(self, which: int) -> slice:
        return slice(0, self.split[0]) if which == 0 else slice(self.split[0], self.N)

    def block_identity(self, which: int) -> np.ndarray:
        P = np.zeros((self.N, self.N))
        sl = self.block_slice(which)
        P[sl, sl] = np.eye(sl.stop - sl.start)
        return P

    def block(self, which: str) -> "BlockRep":
        """The h ("h") or v ("v") factor as a stand-alone single-block rep."""
        idx = 0 if which == "h" else 1
        sl = self.block_slice(idx)
        rng = range(0, self.n) if idx == 0 else range(self.n, self.n + self.m)
        sig = np.array([self.sigma[a][sl, sl] for a in rng])
        return BlockRep(sig, np.array([self.G[a, a] for a in rng]))

    def dual(self) -> np.ndarray:
        """sigma~^a with sum_{mu nu} sigma_b[mu, nu] sigma~^a[mu, nu] = delta^a_b."""
        Ginv = np.linalg.inv(self.G)
        nb = np.array([self.split[self.block_of(a)] for a in range(self.n + self.m)], dtype=float)
        up = np.einsum("ab,bkl->akl", Ginv, self.sigma)
        return -(2.0 / nb)[:, None, None] * np.transpose(up, (0, 2, 1))

    def raised(self) -> np.ndarray:
        return np.einsum("ab,bkl->akl", np.linalg.inv(self.G), self.sigma)


@dataclass
class BlockRep:
    sigma: np.ndarray  # (k, N, N)
    diag: np.ndarray  # (k,)

    @property
    def k(self) -> int:
        return self.sigma.shape[0]

    @property
    def N(self) -> int:
        return self.sigma.shape[1]


def build_sigma(sig: Signature) -> CliffordRep:
    """Block-diagonal generators: h ones on the N(n) block, v ones on the N(m) block."""
    n, m = sig.n, sig.m
    if n < 1 or m < 1:
        raise ValueError("both blocks need at least one generator")
    Nn, Nm = spinor_dims(n, m)
    N = Nn + Nm
    out = np.zeros((n + m, N, N), dtype=complex)
    out[:n, :Nn, :Nn] = block_generators(sig.h)
    out[n:, Nn:, Nn:] = block_generators(sig.v)
    return CliffordRep(out, sig.G, n, m, (Nn, Nm))


def anticommutation_residual(rep: CliffordRep, G: Optional[np.ndarray] = None) -> float:
    """max over pairs of |sigma_a sigma_b + sigma_b sigma_a + G_ab I_block|.

    Pairs from different blocks must anticommute to zero.
    """
    G = rep.G if G is None else G
    D = rep.n + rep.m
    worst = 0.0
    for a in range(D):
        for b in range(a, D):
            ac = rep.sigma[a] @ rep.sigma[b] + rep.sigma[b] @ rep.sigma[a]
            if rep.block_of(a) == rep.block_of(b):
                ac = ac + G[a, b] * rep.block_identity(rep.block_of(a))
            worst = max(worst, float(np.max(np.abs(ac))))
    return worst


def trace_identity_check(rep: CliffordRep, G: Optional[np.ndarray] = None) -> float:
    """max |2 tr(sigma_a sigma_b) + G_ab N_block| over pairs in the same block."""
    G = rep.G if G is None else G
    D = rep.n + rep.m
    worst = 0.0
    for a in range(D):
        for b in range(a, D):
            if rep.block_of(a) != rep.block_of(b):
                continue
            r = 2.0 * np.trace(rep.sigma[a] @ rep.sigma[b]) + G[a, b] * rep.split[rep.block_of(a)]
            worst = max(worst, float(abs(r)))
    return worst


# ---------------------------------------------------------------- epsilon objects
def _e_map(blk: BlockRep, sign: int, X: np.ndarray) -> np.ndarray:
    """Y_km = sum_I sign^|I| 2^|I| (sigma_I X sigma^I^T)_km, sigma_I the ordered product.

    The sum over index subsets factors into one (Id + phi_i) per generator.
    """
    out = X
    for i in reversed(range(blk.k)):
        s = blk.sigma[i]
        out = out + sign * 2.0 * (s @ out @ (s / blk.diag[i]).T)
    return out


def _e_map_adjoint(blk: BlockRep, sign: int, Y: np.ndarray) -> np.ndarray:
    out = Y
    for i in range(blk.k):
        s = blk.sigma[i]
        out = out + sign * 2.0 * (s.T @ out @ (s / blk.diag[i]))
    return out


def e_tensor(blk: BlockRep, sign: int) -> np.ndarray:
    """Explicit E[k, m, i, j] (sum over antisymmetrized sigma products); small N only."""
    N = blk.N
    if N > 16:
        raise CliffordError("explicit E is limited to N <= 16; use the factored map")
    E = np.zeros((N, N, N, N), dtype=complex)
    for q in range(blk.k + 1):
        for I in itertools.combinations(range(blk.k), q):
            A = np.eye(N, dtype=complex)
            B = np.eye(N, dtype=complex)
            for i in I:
                A = A @ blk.sigma[i]
                B = B @ (blk.sigma[i] / blk.diag[i])
            # q! orderings of the antisymmetrized product each give the same term
            E += (sign * 2.0) ** q * np.einsum("ki,mj->kmij", A, B)
    return E


def _first_nonzero(M: np.ndarray, tol: float):
    flat = M.reshape(-1)
    big = np.abs(flat) > tol * np.max(np.abs(flat))
    return flat[int(np.argmax(big))]


def _sym_class(M: np.ndarray, tol: float = 1e-9) -> str:
    scale = float(np.max(np.abs(M))) if M.size else 0.0
    if scale < tol:
        return "zero"
    if np.max(np.abs(M - M.T)) <= tol * scale:
        return "symmetric"
    if np.max(np.abs(M + M.T)) <= tol * scale:
        return "antisymmetric"
    return "mixed"


def chirality(blk: BlockRep) -> np.ndarray:
    """Involution built from the product of all generators of an even block."""
    if blk.k % 2:
        raise CliffordError("chirality needs an even number of generators")
    P = np.eye(blk.N, dtype=complex)
    for i in range(blk.k):
        P = P @ (math.sqrt(2.0) * blk.sigma[i])
    if np.allclose(P @ P, -np.eye(blk.N)):
        P = 1j * P
    return P


def chiral_basis(blk: BlockRep) -> np.ndarray:
    """Columns: eigenvectors of the chirality, the +1 space (unprimed) first."""
    Gm = chirality(blk)
    w, V = np.linalg.eig(Gm)
    order = np.argsort(-w.real, kind="stable")
    return V[:, order]


def _blocks_upper(M: np.ndarray, P: np.ndarray):
    """Upper-index spinor matrix in the chiral basis, split into (LL, LL', L'L, L'L')."""
    Pi = np.linalg.inv(P)
    Mp = Pi @ M @ Pi.T
    h = M.shape[0] // 2
    return {"LL": Mp[:h, :h], "LL'": Mp[:h, h:], "L'L": Mp[h:, :h], "L'L'": Mp[h:, h:]}


# rows of the eight-fold symmetry table for the epsilon objects, as printed
EPSILON_TABLE = {
    0: {"text": "eps = diag(eps^LM = eps^ML, 0), eps~ = diag(0, eps~^LM = eps~^ML)",
        "class": "symmetric", "eps_support": ["LL"], "tilde_support": ["L'L'"]},
    1: {"text": "eps = -1/2 (-)eps = eps^T, (+)eps = 0, eps~ = -1/2 (-)eps = eps~^T",
        "class": "symmetric", "vanishing": "+"},
    2: {"text": "eps = offdiag(eps^L'M), eps~ = offdiag(eps~^LM' = -eps^M'L)",
        "class": "block-off-diagonal", "eps_support": ["L'L"], "tilde_support": ["LL'"], "tilde_sign": -1},
    3: {"text": "eps = -1/2 (+)eps = -eps^T, (-)eps = 0, eps~ = 1/2 (+)eps = -eps~^T",
        "class": "antisymmetric", "vanishing": "-"},
    4: {"text": "eps = diag(eps^LM = -eps^ML, 0), eps~ = diag(0, eps~^LM = -eps~^ML)",
        "class": "antisymmetric", "eps_support": ["LL"], "tilde_support": ["L'L'"]},
    5: {"text": "eps = -1/2 (-)eps = -eps^T, (+)eps = 0, eps~ = -1/2 (-)eps = -eps~^T",
        "class": "antisymmetric", "vanishing": "+"},
    6: {"text": "eps = offdiag(eps^L'M), eps~ = offdiag(eps~^LM' = eps^M'L)",
        "class": "block-off-diagonal", "eps_support": ["L'L"], "tilde_support": ["LL'"], "tilde_sign": 1},
    7: {"text": "eps = 1/2 (-)eps = eps^T, (+)eps = 0, eps~ = -1/2 (-)eps = eps~^T",
        "class": "symmetric", "vanishing": "+"},
}


@dataclass
class EpsilonObject:
    n: int
    residue: int
    ranks: dict  # sign -> rank of the E map (0 means E vanishes)
    factor_residual: float  # max relative error of E(X) = c eps_low (eps_up : X)
    eps_up: dict  # sign -> upper-index epsilon (None if E vanishes)
    eps_low: dict
    eps: np.ndarray  # the epsilon of the table (upper indices)
    eps_tilde: Optional[np.ndarray]
    symmetry_class: str  # measured
    supports: dict = field(default_factory=dict)  # measured nonzero chiral blocks
    tilde_sign: Optional[int] = None  # measured s in eps~^LM' = s eps^M'L
    chirality_phase: Optional[complex] = None  # (-)eps = phase * (+)eps Gamma^T before fixing
    table_row: dict = field(default_factory=dict)
    discrepancies: list = field(default_factory=list)

    @property
    def class_matches(self) -> bool:
        return self.symmetry_class == self.table_row["class"]

    @property
    def vanishing(self) -> Optional[str]:
        z = [("+" if s > 0 else "-") for s, r in self.ranks.items() if r == 0]
        return z[0] if z else None

    def metric_low(self) -> np.ndarray:
        """Invertible spinor metric with lower indices used to lower spinor indices."""
        return self.eps_low[1] if self.eps_low.get(1) is not None else self.eps_low[-1]

    def as_record(self) -> dict:
        return {
            "n": self.n,
            "residue": self.residue,
            "rank_plus": self.ranks[1],
            "rank_minus": self.ranks[-1],
            "vanishing": self.vanishing,
            "measured_class": self.symmetry_class,
            "table_class": self.table_row["class"],
            "class_matches": self.class_matches,
            "supports": self.supports,
            "tilde_sign": self.tilde_sign,
            "table_text": self.table_row["text"],
            "discrepancies": list(self.discrepancies),
        }


def epsilon_objects(blk: BlockRep, n: Optional[int] = None, seed: int = _RNG_SEED, probes: int = 4) -> EpsilonObject:
    """Factor the epsilon sums into eps_low (x) eps_up and classify the result."""
    n = blk.k if n is None else n
    if n != blk.k:
        raise CliffordError("block generator count does not match n")
    N = blk.N
    c = float(N) if n % 2 == 0 else 2.0 * N
    rng = np.random.default_rng(seed)
    ranks, ups, lows = {}, {}, {}
    worst = 0.0
    for sign in (1, -1):
        Xs = [rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N)) for _ in range(probes)]
        outs = np.array([_e_map(blk, sign, X).reshape(-1) for X in Xs])
        sv = np.linalg.svd(outs, compute_uv=False)
        if sv[0] < 1e-9 * N:
            ranks[sign], ups[sign], lows[sign] = 0, None, None
            continue
        rank = int(np.sum(sv > 1e-9 * sv[0]))
        ranks[sign] = rank
        if rank != 1:
            raise FactorizationError(f"E({'+' if sign > 0 else '-'}) has rank {rank} for n={n}")
        up = _e_map_adjoint(blk, sign, rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N)))
        up = up / _first_nonzero(up, 1e-9)
        X0 = np.conj(up) / np.sum(np.abs(up) ** 2)
        low = _e_map(blk, sign, X0) / c
        for X, Y in zip(Xs, outs):
            pred = c * low * np.sum(up * X)
            worst = max(worst, float(np.max(np.abs(pred.reshape(-1) - Y)) / np.max(np.abs(Y))))
        ups[sign], lows[sign] = up, low
    res = n % 8
    row = EPSILON_TABLE[res]
    obj = EpsilonObject(n, res, ranks, worst, ups, lows, None, None, "zero", table_row=row)
    if n % 2:
        live = [s for s in (1, -1) if ranks[s] == 1]
        if len(live) != 1:
            raise FactorizationError(f"odd n={n} should leave exactly one nonzero E, found {len(live)}")
        obj.eps = ups[live[0]]
        obj.symmetry_class = _sym_class(obj.eps)
        measured_zero = "+" if ranks[1] == 0 else "-"
        if measured_zero != row["vanishing"]:
            obj.discrepancies.append(
                f"table row n={res} (mod 8) prints ({row['vanishing']})eps = 0, measured ({measured_zero})E = 0"
            )
        return obj
    if ranks[1] != 1 or ranks[-1] != 1:
        raise FactorizationError(f"even n={n} needs both E nonzero")
    Gm = chirality(blk)
    ref = ups[1] @ Gm.T
    phase = np.sum(np.conj(ref) * ups[-1]) / np.sum(np.abs(ref) ** 2)
    if np.max(np.abs(ups[-1] - phase * ref)) > 1e-9 * np.max(np.abs(ups[-1])):
        raise CliffordError("(-)eps is not the chirality transform of (+)eps")
    # fix the relative phase so eps and eps~ are the chiral projections
    ups[-1] = ups[-1] / phase
    lows[-1] = lows[-1] * phase
    obj.chirality_phase = complex(phase)
    obj.eps = 0.5 * (ups[1] + ups[-1])
    obj.eps_tilde = 0.5 * (ups[1] - ups[-1])
    P = chiral_basis(blk)
    scale = float(np.max(np.abs(obj.eps)))
    be, bt = _blocks_upper(obj.eps, P), _blocks_upper(obj.eps_tilde, P)
    sup_e = [k for k, v in be.items() if np.max(np.abs(v)) > 1e-9 * scale]
    sup_t = [k for k, v in bt.items() if np.max(np.abs(v)) > 1e-9 * scale]
    obj.supports = {"eps": sup_e, "eps_tilde": sup_t}
    if len(sup_e) == 1 and sup_e[0] in ("LL", "L'L'"):
        obj.symmetry_class = _sym_class(be[sup_e[0]])
    elif len(sup_e) == 1:
        obj.symmetry_class = "block-off-diagonal"
        # eps~^{L M'} against eps^{M' L}
        e_off, t_off = be["L'L"], bt["LL'"]
        for s in (1, -1):
            if np.max(np.abs(t_off - s * e_off.T)) <= 1e-9 * scale:
                obj.tilde_sign = s
    else:
        obj.symmetry_class = "mixed"
    if sup_e != row["eps_support"] or sup_t != row["tilde_support"]:
        obj.discrepancies.append(f"chiral supports eps={sup_e} eps~={sup_t}, table eps={row['eps_support']} eps~={row['tilde_support']}")
    if "tilde_sign" in row and obj.tilde_sign != row["tilde_sign"]:
        obj.discrepancies.append(f"eps~^LM' = {obj.tilde_sign} eps^M'L measured, table sign {row['tilde_sign']}")
    return obj


def epsilon_table(n_max: int = 16, diag_sign: int = 1) -> list:
    """Measured epsilon records for n = 1..n_max with a definite block metric."""
    out = []
    for n in range(1, n_max + 1):
        blk = BlockRep(block_generators([diag_sign] * n), np.full(n, float(diag_sign)))
        out.append(epsilon_objects(blk, n))
    return out


def d_spinor_metric(rep: CliffordRep) -> np.ndarray:
    """Block-diagonal invertible lower-index spinor metric from both blocks."""
    eps = np.zeros((rep.N, rep.N), dtype=complex)
    for idx, name in enumerate(("h", "v")):
        sl = rep.block_slice(idx)
        eps[sl, sl] = epsilon_objects(rep.block(name)).metric_low()
    return eps


def metric_from_epsilon(rep: CliffordRep, eps_low: np.ndarray) -> np.ndarray:
    """Optional convention check: -1/N sigma_(a^{a1 b1} sigma_b)^{b2 a2} eps_{a1 a2} eps_{b1 b2}."""
    t = np.einsum("apq,brs,ps,qr->ab", rep.sigma, rep.sigma, eps_low, eps_low)
    return -0.5 * (t + t.T) / rep.N


# ---------------------------------------------------------------- antisymmetric groups
def ordered_product(blk: BlockRep, I: Sequence[int], raised: bool = False) -> np.ndarray:
    A = np.eye(blk.N, dtype=complex)
    for i in I:
        A = A @ (blk.sigma[i] / blk.diag[i] if raised else blk.sigma[i])
    return A


def predicted_group_symmetry(n: int, q: int) -> dict:
    """What the eight-fold rules predict for sigma_{i..j}^{kl} with q indices."""
    if n % 2:
        r = (n - 2 * q) % 8
        return {"kind": "full", "class": "symmetric" if r in (1, 7) else "antisymmetric"}
    r = (n - 2 * q) % 8
    if r in (0, 4):
        return {"kind": "diagonal", "class": "symmetric" if r == 0 else "antisymmetric"}
    s = (n + 2 * q) % 8
    return {"kind": "off-diagonal", "sign": 1 if s == 6 else -1}


def measure_group_symmetry(blk: BlockRep, q: int, eps_up: Optional[np.ndarray] = None) -> dict:
    """Measured symmetry of (sigma_I eps)^{kl} over all index sets I of size q.

    Odd n uses the surviving epsilon; even n the full spinor metric (+)eps,
    with the chiral blocks inspected separately.
    """
    n = blk.k
    if q > n:
        raise ValueError("q exceeds the number of generators")
    if eps_up is None:
        eo = epsilon_objects(blk)
        eps_up = eo.eps if n % 2 else eo.eps_up[1]
    P = chiral_basis(blk) if n % 2 == 0 else None
    classes, signs, diag_zero, off_zero = set(), set(), True, True
    for I in itertools.combinations(range(n), q):
        S = ordered_product(blk, I) @ eps_up
        if n % 2:
            classes.add(_sym_class(S))
            continue
        b = _blocks_upper(S, P)
        scale = float(np.max(np.abs(S)))
        dz = max(np.max(np.abs(b["LL"])), np.max(np.abs(b["L'L'"]))) <= 1e-9 * scale
        oz = max(np.max(np.abs(b["LL'"])), np.max(np.abs(b["L'L"]))) <= 1e-9 * scale
        diag_zero &= bool(dz)
        off_zero &= bool(oz)
        if not dz:
            classes.add(_sym_class(b["LL"]) if np.max(np.abs(b["LL"])) > 1e-9 * scale else "zero")
            classes.add(_sym_class(b["L'L'"]) if np.max(np.abs(b["L'L'"])) > 1e-9 * scale else "zero")
        if not oz:
            for s in (1, -1):
                if np.max(np.abs(b["LL'"] - s * b["L'L"].T)) <= 1e-9 * scale:
                    signs.add(s)
                    break
            else:
                signs.add(0)
    if n % 2:
        return {"kind": "full", "class": classes.pop() if len(classes) == 1 else "mixed"}
    classes.discard("zero")
    if off_zero and not diag_zero:
        return {"kind": "diagonal", "class": classes.pop() if len(classes) == 1 else "mixed"}
    if diag_zero and not off_zero:
        return {"kind": "off-diagonal", "sign": signs.pop() if len(signs) == 1 else 0}
    return {"kind": "mixed"}


def group_symmetry_report(n: int, q: int) -> dict:
    blk = BlockRep(block_generators([1] * n), np.ones(n))
    pred = predicted_group_symmetry(n, q)
    got = measure_group_symmetry(blk, q)
    return {"n": n, "q": q, "predicted": pred, "measured": got, "agree": pred == got}


# ---------------------------------------------------------------- tensor <-> spinor
def spinorize(T: np.ndarray, ups: Sequence[bool], rep: CliffordRep, slots: Optional[Sequence[int]] = None) -> np.ndarray:
    """Replace selected vector slots by spinor pairs.

    An upper slot becomes ``V^{mu nu} = sigma_a[mu, nu] V^a``, a lower slot
    ``W_{mu nu} = sigma~^a[mu, nu] W_a``.  Each selected slot is replaced in place
    by two spinor axes.
    """
    T = np.asarray(T)
    r = len(ups)
    if T.ndim != r:
        raise CliffordError("slot list does not match the tensor rank")
    D = rep.n + rep.m
    if any(s != D for s in T.shape):
        raise CliffordError(f"every slot must have dimension {D}")
    slots = list(range(r)) if slots is None else list(slots)
    dual = rep.dual()
    out = T.astype(complex)
    for s in sorted(slots, reverse=True):
        M = rep.sigma if ups[s] else dual
        out = np.tensordot(out, M, axes=([s], [0]))
        out = np.moveaxis(out, [-2, -1], [s, s + 1])
    return out


def despinorize(S: np.ndarray, ups: Sequence[bool], rep: CliffordRep) -> np.ndarray:
    """Inverse of :func:`spinorize` applied to every slot."""
    dual = rep.dual()
    out = np.asarray(S)
    for s in range(len(ups)):
        # slots before s are already vectors, so the pair for slot s sits at (s, s+1)
        M = dual if ups[s] else rep.sigma
        out = np.tensordot(out, M, axes=([s, s + 1], [1, 2]))
        out = np.moveaxis(out, -1, s)
    return out


def spinorize_group(A: np.ndarray, blk: BlockRep, eps_up: Optional[np.ndarray] = None) -> dict:
    """Contract a totally antisymmetric q-index array with (sigma_{i..j} eps)^{kl}."""
    A = np.asarray(A)
    q = A.ndim
    n = blk.k
    if any(s != n for s in A.shape):
        raise CliffordError("group slots must run over the block indices")
    if eps_up is None:
        eo = epsilon_objects(blk)
        eps_up = eo.eps if n % 2 else eo.eps_up[1]
    S = np.zeros((blk.N, blk.N), dtype=complex)
    for I in itertools.combinations(range(n), q):
        # sum over all orderings of I equals q! times the sorted term
        S += math.factorial(q) * A[I] * (ordered_product(blk, I) @ eps_up)
    pred = predicted_group_symmetry(n, q)
    meas = {"kind": "full", "class": _sym_class(S)} if n % 2 else measure_group_symmetry(blk, q, eps_up)
    return {"spinor": S, "predicted": pred, "measured": meas}


# ---------------------------------------------------------------- fundamental spinors
@dataclass
class FundamentalVerdict:
    n: int
    values: dict  # q -> max |xi xi sigma_I| over index sets (per chirality for even n)
    admissible: list
    special: list
    fundamental: bool
    degenerate: bool

    def as_dict(self) -> dict:
        return {"n": self.n, "admissible": self.admissible, "special": self.special,
                "values": {str(k): v for k, v in self.values.items()},
                "fundamental": self.fundamental, "degenerate": self.degenerate}


FUNDAMENTAL_MAX_N = 12


def fundamental_spinor_check(xi, blk: BlockRep, n: Optional[int] = None, tol: float = 1e-10) -> FundamentalVerdict:
    n = blk.k if n is None else n
    if n > FUNDAMENTAL_MAX_N:
        raise CliffordError(f"fundamental check enumerates 2^n index sets; n <= {FUNDAMENTAL_MAX_N}")
    xi = np.asarray(xi, dtype=complex).reshape(-1)
    if xi.shape[0] != blk.N:
        raise CliffordError(f"spinor has {xi.shape[0]} components, expected {blk.N}")
    eo = epsilon_objects(blk)
    eps = eo.metric_low()
    admissible = [q for q in range(n + 1) if (n - 2 * q) % 8 in (0, 1, 7)]
    special = [q for q in ((n - 1) // 2, (n + 1) // 2) if n % 2] if n % 2 else [n // 2]
    if n % 2:
        parts = [xi]
    else:
        Gm = chirality(blk)
        parts = [0.5 * (xi + Gm @ xi), 0.5 * (xi - Gm @ xi)]
    values = {}
    for q in admissible:
        v = 0.0
        for I in itertools.combinations(range(n), q):
            M = ordered_product(blk, I, raised=True) @ eps
            for x in parts:
                v = max(v, float(abs(x @ M @ x)))
        values[q] = v
    scale = max(1.0, float(np.max(np.abs(xi))) ** 2)
    degenerate = bool(np.max(np.abs(xi)) < tol) if xi.size else True
    fundamental = all(values[q] <= tol * scale for q in admissible if q not in special)
    return FundamentalVerdict(n, values, admissible, special, fundamental and not degenerate, degenerate)


# ---------------------------------------------------------------- frames on a geometry
def jet_cholesky(A: Jet):
    """A = L S L^T with L lower triangular and S = diag(+-1), all as jets."""
    k = A.shape[0]
    dim, order = A.dim, A.order
    L = [[Jet.constant(0.0, dim, order) for _ in range(k)] for _ in range(k)]
    signs = []
    for j in range(k):
        d = A[j, j]
        for t in range(j):
            d = d - L[j][t] * L[j][t] * signs[t]
        v = float(d.value)
        if abs(v) < 1e-300:
            raise FrameError("metric block has a vanishing pivot")
        s = 1 if v > 0 else -1
        signs.append(s)
        a = s * v
        r = math.sqrt(a)
        L[j][j] = (d * s).compose([r, 0.5 / r, -0.25 / (r * a), 0.375 / (r * a * a)])
        inv = (L[j][j] * s).reciprocal()
        for i in range(j + 1, k):
            e = A[i, j]
            for t in range(j):
                e = e - L[i][t] * L[j][t] * signs[t]
            L[i][j] = e * inv
    flat = [L[i][j] for i in range(k) for j in range(k)]
    return Jet.stack(flat, (k, k)), tuple(signs)


def geometry_frame(geom, u, order: int = 2):
    """Jet of l_alpha^hat(alpha) (block diagonal) and the signature it realizes."""
    j = geom.jets(u, order)
    lg, sh = jet_cholesky(j.g)
    lh, sv = jet_cholesky(j.h)
    n, m = geom.n, geom.m
    D = n + m
    coeffs = []
    for k in range(lg.order + 1):
        c = np.zeros((D, D) + (geom.dim,) * k)
        c[:n, :n] = lg.c[k]
        c[n:, n:] = lh.c[k]
        coeffs.append(c)
    return Jet(coeffs, geom.dim), Signature(sh, sv)


def sigma_frame_lift(rep: CliffordRep, frame, G: Optional[np.ndarray] = None, tol: float = FRAME_TOL) -> CliffordRep:
    """sigma_alpha = l_alpha^hat(alpha) sigma_hat(alpha); checked against G when given."""
    l = np.asarray(frame, dtype=float)
    D = rep.n + rep.m
    if l.shape != (D, D):
        raise FrameError(f"frame must be {D}x{D}")
    Gl = l @ rep.G @ l.T
    if G is not None:
        G = np.asarray(G, dtype=float)
        if np.max(np.abs(Gl - G)) > tol * max(1.0, float(np.max(np.abs(G)))):
            raise FrameError("frame does not decompose the given metric")
    if np.max(np.abs(l[: rep.n, rep.n :])) > 0 or np.max(np.abs(l[rep.n :, : rep.n])) > 0:
        raise FrameError("frame mixes h and v directions")
    lifted = np.einsum("ab,bkl->akl", l, rep.sigma)
    return CliffordRep(lifted, Gl if G is None else G, rep.n, rep.m, rep.split)


def geometry_rep(geom, u) -> CliffordRep:
    """Generators lifted to the adapted frame of ``geom`` at ``u``."""
    l, sig = geometry_frame(geom, u, 0)
    base = build_sigma(sig)
    return sigma_frame_lift(base, l.value, geom.dmetric(u, 0).value)


# ---------------------------------------------------------------- spinor connection
@dataclass
class SpinorConnection:
    gamma: np.ndarray  # gamma[c] = (gamma_c)^mu_alpha, one N x N matrix per frame direction
    transfer: np.ndarray  # sigma-transferred Gamma, same layout
    sigma_term: np.ndarray  # (sigma~) nabla sigma term, same layout
    trace: np.ndarray  # tr gamma_c
    rep: CliffordRep
    K: Jet = field(repr=False)  # gamma_c = sum K[c, A, B] sigma_A sigma_B (hat generators)

    @property
    def trace_residual(self) -> float:
        return float(np.max(np.abs(self.trace)))


def _hat_pair_products(base: CliffordRep) -> np.ndarray:
    return np.einsum("akl,blm->abkm", base.sigma, base.sigma)


def spinor_connection(conn: DConnection, u, order: int = 0) -> SpinorConnection:
    """gamma_c = (Gamma-transfer_c - sigma~^b d_c sigma_b) / (N(n) + N(m)).

    Gamma-transfer_c = Gamma^a_{bc} sigma_a sigma~^b^T, with ``sigma_a(u)`` the
    generators lifted by the Cholesky frame of the d-metric.  Derivatives are
    along the adapted frame.  ``order`` (0 or 1) is the jet order kept in ``K``.
    """
    geom = conn.geom
    n = geom.n
    u = np.asarray(u, dtype=float).reshape(-1)
    l, sig = geometry_frame(geom, u, order + 1)
    base = build_sigma(sig)
    Ntot = base.N
    G = geom.dmetric(u, order + 1)
    Ginv = G.inv()
    N = geom.jets(u, order + 1).N
    gam = conn.gamma(u, order)
    dl = adapted_derivative(l, N, n)  # dl[b, A, c] = delta_c l_b^A
    p = order
    lt, Gi = l.truncate(p), Ginv.truncate(p)
    # sigma~^b^T = -(2/N_blk) G^{bd} l_d^B sigma_B
    nb = np.array([base.split[0]] * n + [base.split[1]] * geom.m, dtype=float)
    W = einsum("bd,de->be", Gi, lt) * np.tile(-2.0 / nb, (nb.size, 1))  # W[b, B]; N_blk of the hat slot
    la = einsum("ae,abc->ebc", lt, gam.truncate(p))  # l_a^A Gamma^a_{bc}
    K1 = einsum("ebc,bf->cef", la, W)
    K2 = einsum("bec,bf->cef", dl.truncate(p), W)
    K = (K1 - K2) * (1.0 / Ntot)
    prods = _hat_pair_products(base)
    transfer = np.einsum("cab,abkm->ckm", K1.value, prods)
    sterm = np.einsum("cab,abkm->ckm", K2.value, prods)
    gamma = (transfer - sterm) / Ntot
    lifted = sigma_frame_lift(base, l.value, G.value)
    tr = np.einsum("ckk->c", gamma)
    return SpinorConnection(gamma, transfer, sterm, tr, lifted, K)


# ---------------------------------------------------------------- curvature spinors
@dataclass
class CurvatureSpinors:
    X: np.ndarray  # X[g, d, mu, nu]: spinor curvature, (g, d) spinor matrix, (mu, nu) the 2-form pair
    psi: np.ndarray  # X with g lowered, symmetrized over (g, mu, nu)
    torsion: np.ndarray  # T[g1, g2, mu, nu]
    riemann_pairs: Optional[np.ndarray]
    ricci: np.ndarray  # R_{P Q} over flattened spinor pairs
    scalar: complex
    tensor_scalar: float
    einstein: np.ndarray
    phi: np.ndarray

    @property
    def scalar_residual(self) -> float:
        return float(abs(self.scalar - self.tensor_scalar))


def symmetrize_psi(X_low: np.ndarray) -> np.ndarray:
    """Average over permutations of axes (0, 2, 3), axis 1 held fixed."""
    perms = list(itertools.permutations((0, 2, 3)))
    out = np.zeros_like(X_low)
    for p in perms:
        axes = [p[0], 1, p[1], p[2]]
        out = out + np.transpose(X_low, axes)
    return out / len(perms)


def _two_form_pairs(rep: CliffordRep, eps_low: np.ndarray) -> np.ndarray:
    """(sigma^a sigma^b eps)[mu, nu] for every frame pair (a, b)."""
    up = rep.raised()
    return np.einsum("akl,blm,mn->abkn", up, up, eps_low)


def assemble_curvature_spinors(conn: DConnection, u, keep_full: bool = False) -> CurvatureSpinors:
    """Spinor curvature, torsion, Ricci, scalar, Einstein and Phi spinors at ``u``.

    The spinor curvature X is the curvature of the spinor connection; the
    Ricci and scalar parts come from the tensor curvature moved to spinor
    pairs and contracted there, so the scalar can be compared with the tensor one.
    """
    from .bundle import nonholonomy_jet
    from .curvature import point_data, summarize

    geom = conn.geom
    n = geom.n
    u = np.asarray(u, dtype=float).reshape(-1)
    sc = spinor_connection(conn, u, order=1)
    rep = sc.rep
    base = build_sigma(geometry_frame(geom, u, 0)[1])
    prods = _hat_pair_products(base)
    N_ = geom.jets(u, 2).N
    w = nonholonomy_jet(N_, n).value
    dK = adapted_derivative(sc.K, N_, n).value  # dK[c, A, B, a] = delta_a K[c, A, B]
    Kv = sc.K.value
    lin = np.transpose(dK, (3, 0, 1, 2)) - np.transpose(dK, (0, 3, 1, 2))  # [a, b] = d_a K_b - d_b K_a
    lin = lin - np.einsum("eab,eAB->abAB", w, Kv)
    Xab = np.einsum("abAB,ABkm->abkm", lin, prods)
    g = sc.gamma
    Xab = Xab + np.einsum("akl,blm->abkm", g, g) - np.einsum("bkl,alm->abkm", g, g)
    eps = d_spinor_metric(base)
    pairs = _two_form_pairs(rep, eps)
    X = np.einsum("abgd,abmn->gdmn", Xab, pairs)
    psi = symmetrize_psi(np.einsum("rg,gdmn->rdmn", eps, X))
    pd = point_data(conn, u, 0)
    T = pd.T.value
    torsion = np.einsum("gab,gkl,abmn->klmn", T, rep.sigma, pairs)
    R = pd.R.value
    Gm = pd.metric.value
    summ = summarize(R, Gm, n, with_weyl=False)
    D = geom.dim
    Ns = rep.N
    sg = rep.sigma.reshape(D, Ns * Ns)
    du = rep.dual().reshape(D, Ns * Ns)
    riem = None
    if keep_full:
        riem = np.einsum("dgab,dP,gQ,aR,bS->PQRS", R, sg, du, du, du, optimize=True)
        ric = np.einsum("PQPS->QS", riem)
    else:
        # contract the upper pair of the first slot with the first 2-form pair
        ric = np.einsum("dgab,dP,gQ,aP,bS->QS", R, sg, du, du, du, optimize=True)
    Ginv_sp = np.einsum("ab,aP,bQ->PQ", np.linalg.inv(Gm), sg, sg, optimize=True)
    scalar = complex(np.einsum("PQ,PQ->", Ginv_sp, ric))
    ein = np.einsum("ab,aP,bQ->PQ", summ.einstein, du, du, optimize=True)
    phi = np.einsum("ab,aP,bQ->PQ", summ.phi, du, du, optimize=True)
    return CurvatureSpinors(X, psi, torsion, riem, ric, scalar, float(summ.scalar), ein, phi)


# ---------------------------------------------------------------- twistor equation
@dataclass
class TwistorField:
    """omega(u) = c0 + c1[a] u^a + 1/2 c2[a, b] u^a u^b with spinor-valued coefficients."""

    c0: np.ndarray  # (N,)
    c1: np.ndarray  # (D, N)
    c2: Optional[np.ndarray] = None  # (D, D, N), symmetric in the first two axes

    def value(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = self.c0 + u @ self.c1
        if self.c2 is not None:
            out = out + 0.5 * np.einsum("a,b,abk->k", u, u, self.c2)
        return out

    def jacobian(self, u) -> np.ndarray:
        """J[a, k] = d omega^k / d u^a."""
        u = np.asarray(u, dtype=float)
        J = np.array(self.c1, dtype=complex)
        if self.c2 is not None:
            J = J + np.einsum("abk,b->ak", self.c2, u)
        return J


def twistor_solution(rep: CliffordRep, Omega, Pi) -> TwistorField:
    """omega^b = Omega^b + u^a (sigma_a)_e^b Pi^e."""
    Omega = np.asarray(Omega, dtype=complex).reshape(-1)
    Pi = np.asarray(Pi, dtype=complex).reshape(-1)
    if Omega.shape[0] != rep.N or Pi.shape[0] != rep.N:
        raise CliffordError(f"constant spinors need {rep.N} components")
    c1 = np.einsum("aeb,e->ab", rep.sigma, Pi)
    return TwistorField(Omega, c1)


def twistor_residual(rep: CliffordRep, omega: TwistorField, u, normalization: str = "block") -> float:
    """max | sigma_(a|b|^g d_b) omega^b - k G_ab sigma^e_b^g d_e omega^b |.

    ``normalization="block"`` uses k = 1/n for h-directions and 1/m for
    v-directions, which is what the trace identity fixes for block-diagonal
    d-spinors; ``"printed"`` uses k = 1/(n+m) for every direction.
    """
    J = omega.jacobian(u)  # J[a, b]
    G = rep.G
    D = rep.n + rep.m
    s = rep.sigma
    t = np.einsum("abg,cb->acg", s, J)  # sigma_a[b, g] d_c omega^b
    lhs = 0.5 * (t + np.transpose(t, (1, 0, 2)))
    up = rep.raised()
    rhs = np.zeros_like(lhs)
    for a in range(D):
        blk = rep.block_of(a)
        if normalization == "block":
            k = 1.0 / (rep.n if blk == 0 else rep.m)
            idx = range(0, rep.n) if blk == 0 else range(rep.n, D)
        elif normalization == "printed":
            k = 1.0 / D
            idx = range(D)
        else:
            raise ValueError("normalization is 'block' or 'printed'")
        trace = sum(np.einsum("bg,b->g", up[e], J[e]) for e in idx)
        for b in range(D):
            rhs[a, b] = k * G[a, b] * trace
    return float(np.max(np.abs(lhs - rhs)))


def twistor_ops(rep: CliffordRep, Omega, Pi, points, normalization: str = "block"):
    """(solution field, max residual of the twistor equation over ``points``)."""
    field_ = twistor_solution(rep, Omega, Pi)
    res = max(twistor_residual(rep, field_, p, normalization) for p in np.atleast_2d(points))
    return field_, res
