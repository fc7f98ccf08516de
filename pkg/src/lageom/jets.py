"""Truncated multivariate Taylor jets of array-valued fields.

A jet stores the value of a field at a base point together with every
partial derivative up to a fixed order (at most 3).  Coefficient ``c[k]``
has shape ``shape + (dim,) * k``; the trailing ``k`` axes are derivative
indices and are kept exactly symmetric.

Arithmetic follows the Leibniz rule and Faa di Bruno's formula, so the
derivatives of products, quotients and compositions come out exact up to
floating point rounding.  Jets of arrays support einsum contractions and
matrix inversion, which is what the geometry code needs to push metric
jets through Christoffel-type formulas and still keep derivative
information.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

MAX_ORDER = 3
_DLETTERS = "ABCDEF"


@lru_cache(maxsize=None)
def _sorted_index(dim: int, k: int):
    """Index arrays mapping every multi-index onto its sorted representative."""
    grids = np.indices((dim,) * k).reshape(k, -1)
    srt = np.sort(grids, axis=0)
    return tuple(s.reshape((dim,) * k) for s in srt)


def symmetrize_exact(arr: np.ndarray, k: int) -> np.ndarray:
    """Copy each entry from its sorted multi-index so symmetry holds bit for bit."""
    if k < 2:
        return arr
    dim = arr.shape[-1]
    idx = _sorted_index(dim, k)
    lead = arr.shape[: arr.ndim - k]
    flat = arr.reshape((-1,) + (dim,) * k)
    out = flat[(slice(None),) + idx]
    return out.reshape(lead + (dim,) * k)


def _sym_sum(t: np.ndarray, k: int, factor: float) -> np.ndarray:
    """factor * sum over all permutations of the last k axes."""
    if k < 2:
        return t if factor == 1.0 else factor * t
    base = t.ndim - k
    acc = np.zeros_like(t)
    for perm in itertools.permutations(range(k)):
        axes = tuple(range(base)) + tuple(base + p for p in perm)
        acc = acc + np.transpose(t, axes)
    return factor * acc


class Jet:
    """Array-valued Taylor jet of order ``order`` in ``dim`` variables."""

    __slots__ = ("c", "order", "dim")
    __array_priority__ = 100

    def __init__(self, coeffs, dim: int):
        self.c = tuple(np.asarray(a, dtype=float) for a in coeffs)
        self.order = len(self.c) - 1
        self.dim = int(dim)
        if self.order > MAX_ORDER:
            raise ValueError(f"jet order {self.order} exceeds {MAX_ORDER}")

    # construction -------------------------------------------------------
    @classmethod
    def constant(cls, value, dim: int, order: int) -> "Jet":
        v = np.asarray(value, dtype=float)
        return cls([v] + [np.zeros(v.shape + (dim,) * k) for k in range(1, order + 1)], dim)

    @classmethod
    def variable(cls, u, index: int, order: int) -> "Jet":
        u = np.asarray(u, dtype=float)
        dim = u.shape[0]
        coeffs = [np.array(u[index])]
        if order >= 1:
            g = np.zeros(dim)
            g[index] = 1.0
            coeffs.append(g)
        for k in range(2, order + 1):
            coeffs.append(np.zeros((dim,) * k))
        return cls(coeffs, dim)

    @classmethod
    def coordinates(cls, u, order: int) -> "Jet":
        """Vector jet of the coordinate functions themselves."""
        u = np.asarray(u, dtype=float)
        dim = u.shape[0]
        coeffs = [u.copy()]
        if order >= 1:
            coeffs.append(np.eye(dim))
        for k in range(2, order + 1):
            coeffs.append(np.zeros((dim,) * (k + 1)))
        return cls(coeffs, dim)

    @classmethod
    def stack(cls, jets, shape=None) -> "Jet":
        jets = list(jets)
        order = min(j.order for j in jets)
        dim = jets[0].dim
        coeffs = []
        for k in range(order + 1):
            arr = np.stack([j.c[k] for j in jets])
            if shape is not None:
                arr = arr.reshape(tuple(shape) + jets[0].c[k].shape)
            coeffs.append(arr)
        return cls(coeffs, dim)

    # basic views ----------------------------------------------------------
    @property
    def value(self) -> np.ndarray:
        return self.c[0]

    @property
    def shape(self):
        return self.c[0].shape

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError("cannot raise jet order")
        return Jet(self.c[: order + 1], self.dim)

    def derivative(self) -> "Jet":
        """Jet of the gradient; the new derivative axis is appended to the shape."""
        if self.order == 0:
            raise ValueError("order-0 jet carries no derivative information")
        return Jet(self.c[1:], self.dim)

    def partial(self, index: int) -> "Jet":
        d = self.derivative()
        return Jet([np.take(a, index, axis=len(self.shape)) for a in d.c], self.dim)

    def __getitem__(self, key) -> "Jet":
        if not isinstance(key, tuple):
            key = (key,)
        return Jet([a[key] for a in self.c], self.dim)

    def transpose(self, *axes) -> "Jet":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        r = len(self.shape)
        out = []
        for k, a in enumerate(self.c):
            out.append(np.transpose(a, tuple(axes) + tuple(range(r, r + k))))
        return Jet(out, self.dim)

    def reshape(self, *shape) -> "Jet":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Jet([a.reshape(tuple(shape) + (self.dim,) * k) for k, a in enumerate(self.c)], self.dim)

    def symmetrized(self) -> "Jet":
        return Jet([symmetrize_exact(a, k) for k, a in enumerate(self.c)], self.dim)

    def __repr__(self) -> str:
        return f"Jet(shape={self.shape}, order={self.order}, dim={self.dim})"

    # arithmetic -----------------------------------------------------------
    def _coerce(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        return Jet.constant(other, self.dim, self.order)

    def __add__(self, other):
        other = self._coerce(other)
        p = min(self.order, other.order)
        out = []
        for k in range(p + 1):
            out.append(self.c[k] + other.c[k])
        return Jet(out, self.dim)

    __radd__ = __add__

    def __neg__(self):
        return Jet([-a for a in self.c], self.dim)

    def __sub__(self, other):
        other = self._coerce(other)
        p = min(self.order, other.order)
        return Jet([self.c[k] - other.c[k] for k in range(p + 1)], self.dim)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            o = np.asarray(other, dtype=float)
            if o.ndim == 0:
                return Jet([a * o for a in self.c], self.dim)
            other = Jet.constant(o, self.dim, self.order)
        return einsum("...,...->...", self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            o = np.asarray(other, dtype=float)
            if o.ndim == 0:
                return Jet([a / o for a in self.c], self.dim)
            other = Jet.constant(o, self.dim, self.order)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self._coerce(other) * self.reciprocal()

    def __pow__(self, k: int):
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise ValueError("jet powers take non-negative integer exponents")
        result = Jet.constant(np.ones(self.shape), self.dim, self.order)
        base = self
        k = int(k)
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    # univariate functions ---------------------------------------------------
    def compose(self, derivs) -> "Jet":
        """Apply an elementwise function given its derivatives f, f', f'', f''' at the value."""
        p = self.order
        g = self.c
        f = [np.asarray(d, dtype=float) for d in derivs]
        r = len(self.shape)
        out = [f[0] * np.ones(self.shape)]
        if p >= 1:
            out.append(_ex(f[1], 1) * g[1])
        if p >= 2:
            g1g1 = g[1][..., :, None] * g[1][..., None, :]
            out.append(_ex(f[2], 2) * g1g1 + _ex(f[1], 2) * g[2])
        if p >= 3:
            g111 = g[1][..., :, None, None] * g[1][..., None, :, None] * g[1][..., None, None, :]
            t = g[2][..., :, :, None] * g[1][..., None, None, :]
            s21 = t + np.swapaxes(t, r + 1, r + 2) + np.moveaxis(t, r + 2, r)
            out.append(_ex(f[3], 3) * g111 + _ex(f[2], 3) * s21 + _ex(f[1], 3) * g[3])
        return Jet(out, self.dim).symmetrized()

    def reciprocal(self) -> "Jet":
        v = self.c[0]
        return self.compose([1.0 / v, -1.0 / v**2, 2.0 / v**3, -6.0 / v**4][: self.order + 1] + [0.0] * (3 - self.order))

    def inv(self) -> "Jet":
        """Matrix inverse over the last two shape axes."""
        x0 = np.linalg.inv(self.c[0])
        X = Jet([x0] + [np.zeros(x0.shape + (self.dim,) * k) for k in range(1, self.order + 1)], self.dim)
        for p in range(1, self.order + 1):
            prod = einsum("...ij,...jk->...ik", self.truncate(p), X.truncate(p))
            top = prod.c[p]
            xp = -np.einsum("...ij,...jk" + _DLETTERS[:p] + "->...ik" + _DLETTERS[:p], x0, top)
            coeffs = list(X.c)
            coeffs[p] = symmetrize_exact(xp, p)
            X = Jet(coeffs, self.dim)
        return X


def _ex(f, k):
    return np.asarray(f)[(...,) + (None,) * k]


def _einsum_terms(sub_a, sub_b, sub_out, a, b, ka, kb):
    la = _DLETTERS[:ka]
    lb = _DLETTERS[ka : ka + kb]
    spec = f"{sub_a}{la},{sub_b}{lb}->{sub_out}{la}{lb}"
    return np.einsum(spec, a, b)


def einsum(subscripts: str, a: Jet, b: Jet) -> Jet:
    """Bilinear einsum of two jets with the product rule applied to derivative axes.

    Subscripts must use lowercase letters or ``...`` and name exactly two operands.
    """
    if not isinstance(a, Jet):
        a = Jet.constant(a, b.dim, b.order)
    if not isinstance(b, Jet):
        b = Jet.constant(b, a.dim, a.order)
    lhs, sub_out = subscripts.replace(" ", "").split("->")
    sub_a, sub_b = lhs.split(",")
    p = min(a.order, b.order)
    out = []
    for k in range(p + 1):
        acc = None
        for ka in range(k + 1):
            kb = k - ka
            t = _einsum_terms(sub_a, sub_b, sub_out, a.c[ka], b.c[kb], ka, kb)
            if 0 < ka < k:
                t = _sym_sum(t, k, 1.0 / (math.factorial(ka) * math.factorial(kb)))
            acc = t if acc is None else acc + t
        out.append(symmetrize_exact(acc, k))
    return Jet(out, a.dim)


def contract(subscripts: str, *operands) -> Jet:
    """Chain of pairwise jet einsums, left to right.  No ``...`` allowed."""
    lhs, out = subscripts.replace(" ", "").split("->")
    subs = lhs.split(",")
    if len(subs) != len(operands):
        raise ValueError("operand count mismatch")
    if len(subs) == 1:
        x = operands[0]
        return Jet([np.einsum(f"{subs[0]}{_DLETTERS[:k]}->{out}{_DLETTERS[:k]}", c) for k, c in enumerate(x.c)], x.dim)
    cur, cur_sub = operands[0], subs[0]
    for i in range(1, len(subs)):
        rest = set("".join(subs[i + 1 :]) + out)
        nxt = "".join(ch for ch in dict.fromkeys(cur_sub + subs[i]) if ch in rest)
        if i == len(subs) - 1:
            nxt = out
        cur = einsum(f"{cur_sub},{subs[i]}->{nxt}", cur, operands[i])
        cur_sub = nxt
    return cur


def adapted_derivative(F: Jet, N: Jet, n: int) -> Jet:
    """Derivative along the adapted frame: (d_i - N_i^a d_a) for i < n, d_a otherwise.

    ``N`` is a jet of shape (n, m).  The frame index is appended to F's shape.
    """
    dF = F.derivative()
    r = len(F.shape)
    dx = dF[(slice(None),) * r + (slice(0, n),)]
    dy = dF[(slice(None),) * r + (slice(n, None),)]
    corr = einsum("...a,ia->...i", dy, N.truncate(dy.order) if N.order > dy.order else N)
    h = dx.truncate(corr.order) - corr
    v = dy.truncate(h.order)
    return concat([h, v], axis=r)


def concat(jets, axis: int) -> Jet:
    order = min(j.order for j in jets)
    return Jet([np.concatenate([j.c[k] for j in jets], axis=axis) for k in range(order + 1)], jets[0].dim)
