"""Scalar and Proca matter fields on a geometry with a d-connection.

Field components live in the adapted frame over the full index range
(h components first).  A complex scalar with ``k`` components is stored as
a real array of shape ``(k, 2)`` holding real and imaginary parts.  The
Proca field is a real covector ``phi_a``.  Indices are raised with the
d-metric; symmetrizations ``X_(ab)`` here are means.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .bundle import Geometry, _grid
from .curvature import point_data, summarize
from .dconnection import covariant_derivative_full
from .expr import eval_grid
from .jets import Jet, adapted_derivative, einsum

KINDS = ("scalar", "covector")


class FieldSpecError(ValueError):
    pass


@dataclass
class MatterField:
    """``kind`` is scalar or covector; ``components`` is a list of expressions.

    Scalar entries are an expression (real) or a pair ``[re, im]``.  Covector
    entries are one expression per adapted index.  ``components`` may also be
    a callable ``(u, order) -> Jet`` of the stored shape.
    """

    kind: str
    components: object
    mass: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FieldSpecError(f"unknown field kind {self.kind!r}; expected one of {KINDS}")
        if not float(self.mass) >= 0.0:
            raise FieldSpecError("mass must be real and non-negative")
        self._grid = None

    def shape(self, D: int):
        if self.kind == "covector":
            return (D,)
        if callable(self.components):
            return None
        return (len(self.components), 2)

    def jet(self, geom: Geometry, u, order: int) -> Jet:
        D = geom.dim
        if callable(self.components):
            J = self.components(np.asarray(u, dtype=float), order)
        else:
            if self._grid is None:
                dims = (geom.n, geom.m)
                if self.kind == "covector":
                    if len(self.components) != D:
                        raise FieldSpecError(f"covector needs {D} components, got {len(self.components)}")
                    rows = list(self.components)
                else:
                    rows = [list(c) if isinstance(c, (list, tuple)) else [c, "0"] for c in self.components]
                    if any(len(r) != 2 for r in rows):
                        raise FieldSpecError("complex scalar components are pairs [re, im]")
                self._grid = _grid(rows, dims, np.asarray(rows, dtype=object).shape, "field")
            J = eval_grid(self._grid, np.asarray(u, dtype=float), order)
        want = self.shape(D)
        if want is not None and J.shape != want:
            raise FieldSpecError(f"field has shape {J.shape}, expected {want}")
        if self.kind == "scalar" and (len(J.shape) != 2 or J.shape[1] != 2):
            raise FieldSpecError("scalar fields have shape (k, 2)")
        return J


def _coupling(D: int) -> float:
    return (D - 2) / (4.0 * (D - 1))


def _second_derivative(f: Jet, gamma: Jet, geom: Geometry, u) -> tuple:
    """(delta_a f, D_a D_b f) for a scalar jet; second array is [b, a]."""
    n = geom.n
    N = geom.jets(u, f.order).N
    df = adapted_derivative(f, N, n)
    dd = covariant_derivative_full(df, [False], gamma, N, n)
    return df.value, dd.value


@dataclass
class ScalarReport:
    box: np.ndarray  # (k, 2)
    residual: np.ndarray  # (k, 2)
    lagrangian: float
    E_canonical: np.ndarray
    E_metric: np.ndarray
    scalar_curvature: float

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residual)))


def scalar_field_ops(geom: Geometry, conn, phi: MatterField, u) -> ScalarReport:
    """Box, field-equation residual, Lagrangian density and energy-momentum d-tensors.

    ``(box + xi R + mu^2) phi = 0`` with ``box = G^{ab} D_a D_b`` and
    ``xi = (D - 2) / (4 (D - 1))``.  The Lagrangian density carries the same
    ``xi R`` term.
    """
    if phi.kind != "scalar":
        raise FieldSpecError("scalar_field_ops needs a scalar field")
    u = np.asarray(u, dtype=float)
    D = geom.dim
    pd = point_data(conn, u, 0)
    Gm = pd.metric.value
    Ginv = np.linalg.inv(Gm)
    s = summarize(pd.R.value, Gm, geom.n, with_weyl=False)
    R = s.scalar
    xi = _coupling(D)
    mu2 = float(phi.mass) ** 2
    gam = conn.gamma(u, 1)
    J = phi.jet(geom, u, 2)
    k = J.shape[0]
    box = np.zeros((k, 2))
    grads = np.zeros((k, 2, D))
    for c in range(k):
        for p in range(2):
            df, dd = _second_derivative(J[c, p], gam, geom, u)
            grads[c, p] = df
            box[c, p] = np.einsum("ab,ba->", Ginv, dd)
    val = J.value
    residual = box + (xi * R + mu2) * val
    mod2 = float(np.sum(val**2))
    kin = float(np.einsum("ab,cpa,cpb->", Ginv, grads, grads))
    sqrtg = float(np.sqrt(abs(np.linalg.det(Gm))))
    L0 = sqrtg * (kin - (mu2 + xi * R) * mod2)
    Ecan = 2.0 * np.einsum("cpa,cpb->ab", grads, grads) - Gm * L0 / sqrtg
    # second covariant derivative of |phi|^2 through the jet product
    rho = einsum("cp,cp->", J, J)
    _, ddr = _second_derivative(rho, gam, geom, u)
    box_rho = float(np.einsum("ab,ba->", Ginv, ddr))
    Ric = s.ricci
    bracket = 0.5 * (Ric + Ric.T) * mod2 + 0.5 * (ddr + ddr.T) - Gm * box_rho
    Emet = 0.5 * (Ecan + Ecan.T) - (D - 2) / (2.0 * (D - 1)) * bracket
    return ScalarReport(box, residual, L0, Ecan, Emet, R)


@dataclass
class ProcaReport:
    f: np.ndarray  # f[a, b] = D_a phi_b - D_b phi_a
    first_order: np.ndarray  # D_a f^{ab} + mu^2 phi^b
    constraint: float  # D_a phi^a
    second_order: np.ndarray  # box phi_a + R_ab phi^b + mu^2 phi_a

    @property
    def max_residuals(self) -> dict:
        return {
            "first_order": float(np.max(np.abs(self.first_order))),
            "constraint": abs(self.constraint),
            "second_order": float(np.max(np.abs(self.second_order))),
        }


def proca_ops(geom: Geometry, conn, phi: MatterField, u) -> ProcaReport:
    """Field strength and the residuals of the Proca system, the divergence constraint
    and the second order equations.  ``mu = 0`` is the Maxwell limit.
    """
    if phi.kind != "covector":
        raise FieldSpecError("proca_ops needs a covector field")
    u = np.asarray(u, dtype=float)
    n = geom.n
    mu2 = float(phi.mass) ** 2
    pd = point_data(conn, u, 0)
    Gm = pd.metric.value
    s = summarize(pd.R.value, Gm, n, with_weyl=False)
    gam = conn.gamma(u, 1)
    N = geom.jets(u, 2).N
    J = phi.jet(geom, u, 2)
    Gj = geom.dmetric(u, 2)
    Ginv = Gj.inv()
    Dphi = covariant_derivative_full(J, [False], gam, N, n)  # [b, a] = D_a phi_b
    f = Dphi.transpose(1, 0) - Dphi  # f[a, b]
    fup = einsum("ad,db->ab", einsum("ac,cd->ad", Ginv.truncate(1), f), Ginv.truncate(1))
    Dfup = covariant_derivative_full(fup, [True, True], gam, N, n).value  # [a, b, e]
    phi_up = einsum("ab,b->a", Ginv, J)
    first = np.einsum("aba->b", Dfup) + mu2 * phi_up.value
    Dphi_up = covariant_derivative_full(phi_up.truncate(1), [True], gam, N, n).value  # [a, e]
    constraint = float(np.trace(Dphi_up))
    DD = covariant_derivative_full(Dphi, [False, False], gam, N, n).value  # [a, g, b] = D_b D_g phi_a
    box = np.einsum("bg,agb->a", Ginv.value, DD)
    second = box + s.ricci @ phi_up.value + mu2 * J.value
    return ProcaReport(f.value, first, constraint, second)


def pure_gauge(geom: Geometry, Lam) -> MatterField:
    """Covector ``phi_a = delta_a Lambda`` for a scalar expression or field ``Lambda``."""
    n = geom.n
    if callable(Lam):
        lam = Lam
    else:
        from .expr import eval_jet, parse

        e = parse(str(Lam), (geom.n, geom.m))
        lam = lambda u, order: eval_jet(e, u, order)

    def comp(u, order):
        N = geom.jets(u, order + 1).N
        return adapted_derivative(lam(u, order + 1), N, n)

    return MatterField("covector", comp, 0.0)
