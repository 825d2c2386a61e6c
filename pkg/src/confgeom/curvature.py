"""Ambient curvature stack from metric jets.

Conventions (fixed once, used everywhere):

    x^a y^b R_ab{}^c{}_d z^d = x^a y^b (nabla_a nabla_b - nabla_b nabla_a) z^c
    R_ab{}^c{}_d = d_a Gamma^c_bd - d_b Gamma^c_ad
                   + Gamma^c_ae Gamma^e_bd - Gamma^c_be Gamma^e_ad
    Ric_ab = R_ca{}^c{}_b,   Sc = Ric_a{}^a
    P_ab = (Ric_ab - Sc g_ab / (2(d-1))) / (d-2),   J = P^a_a = Sc / (2(d-1))
    C_abc = nabla_a P_bc - nabla_b P_ac
    B_ab  = nabla^c C_cab + P^cd W_acbd
          = Lap P_ab - nabla^c nabla_a P_bc + P^cd W_acbd
    Lap   = g^ab nabla_a nabla_b  (no sign flip)

J is not part of the source conventions for the Schouten trace; the standard
J = Sc/(2(d-1)) is adopted and exercised by the trace identity test.

Each produced tensor is a jet field at the maximal order the metric jets
allow (Gamma: K-1, Riemann/Weyl: K-2, Cotton: K-3, Bach: K-4); derivative
requests beyond that raise ``OrderExceeded`` instead of silently truncating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .jets import Jet, OrderExceeded, jet_einsum, jet_space
from .tensor import TensorValue

__all__ = [
    "CurvatureBundle",
    "CurvatureError",
    "curvature_stack",
    "curvature_stack_from_jets",
    "invert_metric_jets",
    "christoffel",
    "covariant_derivative",
    "partials",
    "laplacian_scalar",
]

_LETTERS = "abcdfghijk"  # 'e' and 'z' reserved for contractions below


class CurvatureError(ValueError):
    pass


def invert_metric_jets(g: Jet) -> Jet:
    """Jet inverse of a symmetric matrix field by Newton iteration.

    X <- X (2I - g X) doubles the truncation order of correctness each
    sweep, starting from the pointwise numeric inverse.
    """
    d = g.shape[-1]
    g0 = g.value
    x0 = np.linalg.inv(g0)
    eye = np.zeros_like(g.coeffs)
    eye[..., 0] = np.eye(d)
    eye = Jet(g.space, eye)
    coeffs = np.zeros_like(g.coeffs)
    coeffs[..., 0] = x0
    x = Jet(g.space, coeffs)
    sweeps = max(1, math.ceil(math.log2(g.order + 1))) if g.order > 0 else 0
    for _ in range(sweeps):
        gx = jet_einsum("ab,bc->ac", g, x)
        x = jet_einsum("ab,bc->ac", x, eye * 2.0 - gx)
    return x


def partials(t: Jet, rank: int) -> Jet:
    """Coordinate derivatives with a new leading component axis."""
    parts = [t.deriv(a).coeffs for a in range(t.dim)]
    return Jet(jet_space(t.dim, t.order - 1), np.stack(parts, axis=-(rank + 2)))


def christoffel(g: Jet, g_inv: Jet) -> Jet:
    """Gamma^a_bc as a jet field of order K-1."""
    dg = partials(g, 2)  # dg[c,a,b] = d_c g_ab
    # Gamma^a_bd = 1/2 g^{ac} (d_b g_cd + d_d g_cb - d_c g_bd)
    inner = jet_einsum("bcd->cbd", dg) + jet_einsum("dcb->cbd", dg) - jet_einsum("cbd->cbd", dg)
    return jet_einsum("ac,cbd->abd", g_inv.truncate(inner.order), inner) * 0.5


def covariant_derivative(t: Jet, variance: str, gamma: Jet) -> Jet:
    """Levi-Civita covariant derivative; new derivative axis leads.

    ``variance`` is a string of 'u'/'d' per component axis of ``t``.
    Raises ``OrderExceeded`` when the jets cannot support one more
    derivative.
    """
    rank = len(variance)
    if t.order == 0:
        raise OrderExceeded("covariant derivative: component jets exhausted")
    out = partials(t, rank)
    gam = gamma.truncate(out.order)
    tt = t.truncate(out.order)
    idx = _LETTERS[:rank]
    for slot, var in enumerate(variance):
        ell = idx[slot]
        src = idx[:slot] + "e" + idx[slot + 1 :]
        if var == "d":
            out = out - jet_einsum(f"ez{ell},{src}->z{idx}", gam, tt)
        elif var == "u":
            out = out + jet_einsum(f"{ell}ze,{src}->z{idx}", gam, tt)
        else:
            raise CurvatureError(f"variance must be 'u'/'d', got {var!r}")
    return out


def laplacian_scalar(f: Jet, g_inv: Jet, gamma: Jet) -> Jet:
    """Lap f = g^{ab} (d_a d_b f - Gamma^e_ab d_e f)."""
    df = partials(f, 0)
    ddf = partials(df, 1)
    gam = gamma.truncate(ddf.order)
    hess = ddf - jet_einsum("eab,e->ab", gam, df.truncate(ddf.order))
    return jet_einsum("ab,ab->", g_inv.truncate(hess.order), hess)


_LEVELS = {"gamma": 1, "riemann": 2, "weyl": 2, "cotton": 3, "bach": 4}


@dataclass
class CurvatureBundle:
    """All ambient curvature tensors at a point (as jet fields)."""

    dim: int
    g: Jet
    g_inv: Jet
    gamma: Jet
    riem_mixed: Jet | None = None  # R_ab{}^c{}_d, layout [a,b,c,d]
    riem: Jet | None = None  # down-down-down-down
    ricci: Jet | None = None
    scalar: Jet | None = None
    schouten: Jet | None = None
    schouten_trace: Jet | None = None  # J
    schouten_tf: Jet | None = None
    weyl: Jet | None = None  # down x 4
    cotton: Jet | None = None
    bach: Jet | None = None
    point: np.ndarray | None = None

    _WEIGHTS = {
        "g": ("dd", 2),
        "g_inv": ("uu", -2),
        "riem": ("dddd", 2),
        "ricci": ("dd", 0),
        "schouten": ("dd", 0),
        "schouten_tf": ("dd", 0),
        "weyl": ("dddd", 2),
        "cotton": ("ddd", 0),
        "bach": ("dd", -2),
    }

    def value(self, name: str) -> TensorValue:
        jet = getattr(self, name)
        if jet is None:
            raise CurvatureError(f"{name} was not computed for this bundle")
        if name in ("scalar", "schouten_trace"):
            return TensorValue(self.dim, (), -2, jet.value)
        variance, weight = self._WEIGHTS[name]
        return TensorValue(self.dim, tuple(variance), weight, jet.value)


def curvature_stack_from_jets(g: Jet, need: str = "bach", point=None) -> CurvatureBundle:
    """Build the curvature stack from metric component jets."""
    if need not in _LEVELS:
        raise CurvatureError(f"unknown need level {need!r}")
    d = g.shape[-1]
    if g.order < _LEVELS[need]:
        raise OrderExceeded(
            f"metric jets of order {g.order} cannot produce {need} "
            f"(needs order >= {_LEVELS[need]})"
        )
    g_inv = invert_metric_jets(g)
    gamma = christoffel(g, g_inv)
    bundle = CurvatureBundle(dim=d, g=g, g_inv=g_inv, gamma=gamma, point=point)
    if _LEVELS[need] < 2:
        return bundle

    dgam = partials(gamma, 3)  # dgam[z,a,b,c] = d_z Gamma^a_bc
    gam2 = gamma.truncate(dgam.order)
    # R_ab{}^c{}_d
    gg = jet_einsum("cae,ebd->abcd", gam2, gam2)
    rmix = (
        jet_einsum("acbd->abcd", dgam)
        - jet_einsum("bcad->abcd", dgam)
        + gg
        - jet_einsum("abcd->bacd", gg)
    )
    bundle.riem_mixed = rmix
    g_r = g.truncate(rmix.order)
    gi_r = g_inv.truncate(rmix.order)
    bundle.riem = jet_einsum("ce,abed->abcd", g_r, rmix)
    bundle.ricci = jet_einsum("cacb->ab", rmix)
    bundle.scalar = jet_einsum("ab,ab->", gi_r, bundle.ricci)
    bundle.schouten_trace = bundle.scalar * (1.0 / (2 * (d - 1)))
    bundle.schouten = (bundle.ricci - jet_einsum("ab,->ab", g_r, bundle.schouten_trace)) * (
        1.0 / (d - 2)
    )
    bundle.schouten_tf = bundle.schouten - jet_einsum("ab,->ab", g_r, bundle.schouten_trace) * (
        1.0 / d
    )
    p = bundle.schouten
    gp = jet_einsum("ac,bd->abcd", g_r, p)  # gp[a,b,c,d] = g_ac P_bd
    bundle.weyl = (
        bundle.riem
        - gp  # g_ac P_bd
        + jet_einsum("bacd->abcd", gp)  # g_bc P_ad
        + jet_einsum("abdc->abcd", gp)  # g_ad P_bc
        - jet_einsum("badc->abcd", gp)  # g_bd P_ac
    )
    if _LEVELS[need] < 3:
        return bundle

    dp = covariant_derivative(p, "dd", gamma)  # dp[a,b,c] = nabla_a P_bc
    bundle.cotton = dp - jet_einsum("bac->abc", dp)
    if _LEVELS[need] < 4:
        return bundle

    dc = covariant_derivative(bundle.cotton, "ddd", gamma)  # dc[e,c,a,b]
    gi_b = g_inv.truncate(dc.order)
    div_c = jet_einsum("ec,ecab->ab", gi_b, dc)
    p_up = jet_einsum("ce,df->cdef", gi_b, gi_b)
    p_up = jet_einsum("cdef,ef->cd", p_up, p.truncate(dc.order))
    pw = jet_einsum("cd,acbd->ab", p_up, bundle.weyl.truncate(dc.order))
    bundle.bach = div_c + pw
    return bundle


def curvature_stack(metric, point, need: str = "bach", order: int | None = None) -> CurvatureBundle:
    """Curvature stack for a closed-form metric at a point.

    ``order`` defaults to the minimum the requested level needs; pass more
    to keep derivative headroom for downstream covariant derivatives.
    """
    point = np.asarray(point, dtype=float)
    if order is None:
        order = _LEVELS[need]
    g = metric.eval_jets(point, order)
    return curvature_stack_from_jets(g, need=need, point=point)


def bach_two_routes(bundle: CurvatureBundle) -> tuple[np.ndarray, np.ndarray]:
    """Bach tensor via the divergence-of-Cotton route and the
    Laplacian-of-Schouten route; both include the P.W coupling."""
    if bundle.cotton is None:
        raise CurvatureError("need cotton for the Bach routes")
    p = bundle.schouten
    dp = covariant_derivative(p, "dd", bundle.gamma)
    ddp = covariant_derivative(dp, "ddd", bundle.gamma)  # ddp[e,a,b,c] = nab_e nab_a P_bc
    gi = bundle.g_inv.truncate(ddp.order)
    lap_p = jet_einsum("ce,ceab->ab", gi, ddp)
    second = jet_einsum("ce,eabc->ab", gi, ddp)  # nabla^c nabla_a P_bc
    p_up = jet_einsum("ce,df->cdef", gi, gi)
    p_up = jet_einsum("cdef,ef->cd", p_up, p.truncate(ddp.order))
    pw = jet_einsum("cd,acbd->ab", p_up, bundle.weyl.truncate(ddp.order))
    route_schouten = lap_p - second + pw
    dc = covariant_derivative(bundle.cotton, "ddd", bundle.gamma)
    gi2 = bundle.g_inv.truncate(dc.order)
    route_cotton = jet_einsum("ec,ecab->ab", gi2, dc) + pw.truncate(dc.order)
    return route_cotton.value, route_schouten.truncate(dc.order).value
