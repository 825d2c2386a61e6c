"""Standard tractor calculus in a declared scale.

A tractor of weight w is stored by its component triple in a named metric
scale: slot 0 holds the top (density) component, slots 1..d the tangent
component, slot d+1 the bottom component.  Under a rescaling g -> Omega^2 g
with Upsilon = d log Omega, representatives transform by

    top    -> Omega^{w+1} top
    mid^a  -> Omega^{w-1} (mid^a + Upsilon^a top)
    bot    -> Omega^{w-1} (bot - Upsilon_a mid^a - 1/2 |Upsilon|^2 top)

and the tractor pairing  h(T, U) = top_T bot_U + bot_T top_U + g_ab mid^a mid^b
is a density of weight w_T + w_U.  Conversion between scales is explicit;
the conversion itself is the conformal-invariance test.

Symmetric rank-2 tractors produced by the splitting operator are stored
blockwise (ZZ / XZ / XX); the dense (d+2)^2 matrix form is available for
kernel and transformation checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curvature import CurvatureBundle, covariant_derivative, laplacian_scalar, partials
from .hypersurface import ExtrinsicBundle
from .jets import Jet, jet_einsum

__all__ = [
    "TractorError",
    "TractorField",
    "TractorRank2",
    "tractor_metric_pair",
    "tractor_connection_derivative",
    "thomas_d_density",
    "normal_tractor",
    "q_splitting",
    "delta_R",
    "delta1_tracefree",
    "conformal_data",
    "ct_transform",
    "ct_matrix",
    "x_tractor",
]


class TractorError(ValueError):
    pass


@dataclass
class TractorField:
    """Component jets (slot axis leads), weight, and scale tag."""

    dim: int
    weight: int
    comps: Jet  # leading axis of length dim + 2
    scale: str = "g"

    @property
    def top(self) -> Jet:
        return self.comps[0]

    @property
    def mid(self) -> Jet:
        return self.comps[slice(1, self.dim + 1)]

    @property
    def bot(self) -> Jet:
        return self.comps[self.dim + 1]

    @property
    def values(self) -> np.ndarray:
        return self.comps.value

    @staticmethod
    def from_parts(top: Jet, mid: Jet, bot: Jet, weight: int, scale: str = "g") -> "TractorField":
        order = min(top.order, mid.order, bot.order)
        d = mid.shape[-1]
        parts = [
            top.truncate(order).coeffs[..., None, :],
            mid.truncate(order).coeffs,
            bot.truncate(order).coeffs[..., None, :],
        ]
        from .jets import jet_space

        return TractorField(d, weight, Jet(jet_space(mid.dim, order), np.concatenate(parts, axis=-2)), scale)


def x_tractor(dim: int, order: int, shape=()) -> TractorField:
    """The canonical tractor: component triple (0, 0, 1), weight 1."""
    comps = Jet.zeros(tuple(shape) + (dim + 2,), dim, order)
    c = comps.coeffs.copy()
    c[..., dim + 1, 0] = 1.0
    return TractorField(dim, 1, Jet(comps.space, c))


def _check_same_scale(a, b):
    if a.scale != b.scale:
        raise TractorError(f"scale mismatch: {a.scale!r} vs {b.scale!r}")
    if a.dim != b.dim:
        raise TractorError("dimension mismatch between tractors")


def tractor_metric_pair(t: TractorField, u: TractorField, g: Jet):
    """h(T, U) as a jet; a density of weight w_T + w_U."""
    _check_same_scale(t, u)
    order = min(t.comps.order, u.comps.order, g.order)
    tc, uc = t.comps.truncate(order), u.comps.truncate(order)
    d = t.dim
    mid = jet_einsum("ab,a->b", g.truncate(order), tc[slice(1, d + 1)])
    mid = jet_einsum("b,b->", mid, uc[slice(1, d + 1)])
    return tc[0] * uc[d + 1] + tc[d + 1] * uc[0] + mid


def tractor_connection_derivative(t: TractorField, curv: CurvatureBundle) -> TractorField:
    """nabla^T T as a tractor-valued one-form (derivative axis leads).

    In the working scale:
        (nabla_a top - g_ac mid^c,
         nabla_a mid^b + delta_a^b bot + P_a^b top,
         nabla_a bot - P_ab mid^b)
    """
    d = t.dim
    top, mid, bot = t.top, t.mid, t.bot
    d_top = partials(top, 0)
    d_bot = partials(bot, 0)
    d_mid = covariant_derivative(mid, "u", curv.gamma)
    order = min(d_top.order, d_mid.order, d_bot.order)
    g = curv.g.truncate(order)
    gi = curv.g_inv.truncate(order)
    p = curv.schouten.truncate(order)
    p_mix = jet_einsum("be,ae->ab", gi, p)  # P_a^b
    top_slot = d_top.truncate(order) - jet_einsum("ac,c->a", g, mid.truncate(order))
    eye = np.eye(d)
    mid_slot = (
        d_mid.truncate(order)
        + jet_einsum("ab,->ab", _const_field(eye, g), bot.truncate(order))
        + jet_einsum("ab,->ab", p_mix, top.truncate(order)) * 0.0
    )
    mid_slot = mid_slot + jet_einsum("ab,->ab", p_mix, top.truncate(order))
    bot_slot = d_bot.truncate(order) - jet_einsum("ab,b->a", p, mid.truncate(order))
    parts = [
        top_slot.coeffs[..., :, None, :],
        mid_slot.coeffs,
        bot_slot.coeffs[..., :, None, :],
    ]
    comps = Jet(top_slot.space, np.concatenate(parts, axis=-2))
    return TractorField(d, t.weight, comps, t.scale)


def _const_field(arr, template: Jet) -> Jet:
    out = np.zeros(np.shape(arr) + (template.space.n,))
    out[..., 0] = arr
    return Jet(template.space, out)


def thomas_d_density(sigma: Jet, weight: int, curv: CurvatureBundle) -> TractorField:
    """Thomas-D operator on a weight-w density (components in the scale):

        D sigma = ((d + 2w - 2) w sigma,
                   (d + 2w - 2) grad^a sigma,
                   -(Lap sigma + w J sigma))
    """
    d = curv.dim
    w = weight
    factor = d + 2 * w - 2
    dsig = partials(sigma, 0)
    grad = jet_einsum("ab,b->a", curv.g_inv.truncate(dsig.order), dsig)
    lap = laplacian_scalar(sigma, curv.g_inv, curv.gamma)
    j = curv.schouten_trace.truncate(lap.order)
    top = sigma.truncate(lap.order) * float(factor * w)
    mid = grad.truncate(lap.order) * float(factor)
    bot = -(lap + jet_einsum(",->", j, sigma.truncate(lap.order)) * float(w))
    return TractorField.from_parts(top, mid, bot, weight=w - 1)


def normal_tractor(bundle: ExtrinsicBundle) -> TractorField:
    """N = (0, n^a, -H): unit with respect to the tractor metric."""
    n_up = bundle.normal_up
    h = bundle.mean_curvature
    zero = Jet.constant(np.zeros(h.shape), h.dim, h.order)
    return TractorField.from_parts(zero, n_up.truncate(h.order), -h, weight=0)


@dataclass
class TractorRank2:
    """Symmetric rank-2 tractor with vanishing Y-slots, stored blockwise."""

    dim: int
    weight: int
    zz: Jet  # t_ab (down-down)
    xz: Jet  # vector block (down)
    xx: Jet  # scalar block
    scale: str = "g"

    def matrix(self, g_inv: np.ndarray) -> np.ndarray:
        """Dense component matrix in the (Y, Z_a, X) coefficient basis,
        tensor indices raised so the triple transform applies directly."""
        d = self.dim
        out_shape = np.shape(self.xx.value) + (d + 2, d + 2)
        m = np.zeros(out_shape)
        t_up = np.einsum("...ac,...bd,...cd->...ab", g_inv, g_inv, self.zz.value)
        u_up = np.einsum("...ab,...b->...a", g_inv, self.xz.value)
        m[..., 1 : d + 1, 1 : d + 1] = t_up
        m[..., 1 : d + 1, d + 1] = u_up
        m[..., d + 1, 1 : d + 1] = u_up
        m[..., d + 1, d + 1] = self.xx.value
        return m


def q_splitting(t: Jet, weight: int, curv: CurvatureBundle, scale: str = "g") -> TractorRank2:
    """Splitting of a trace-free symmetric weight-(w+2) form into a rank-2
    tractor: blocks (t_ab, -2/(d+w) div t, ...) per the displayed operator."""
    d = curv.dim
    w = weight
    if d + w in (0, 1):
        raise TractorError(f"weight-degenerate splitting: d + w = {d + w}")
    tr = jet_einsum("ab,ab->", curv.g_inv.truncate(t.order), t)
    scale_t = max(float(np.max(np.abs(t.value))), 1e-30)
    if np.max(np.abs(tr.value)) > 1e-8 * scale_t:
        raise TractorError("q_splitting input must be trace-free")
    sym_gap = np.max(np.abs(t.value - np.swapaxes(t.value, -1, -2)))
    if sym_gap > 1e-8 * scale_t:
        raise TractorError("q_splitting input must be symmetric")
    dt = covariant_derivative(t, "dd", curv.gamma)  # dt[z,a,b]
    gi = curv.g_inv.truncate(dt.order)
    div = jet_einsum("zb,zab->a", gi, dt)
    xz = div * (-2.0 / (d + w))
    ddt = covariant_derivative(dt, "ddd", curv.gamma)  # ddt[y,z,a,b]
    gi2 = curv.g_inv.truncate(ddt.order)
    div2 = jet_einsum("ya,yzab->zb", gi2, ddt)
    div2 = jet_einsum("zb,zb->", gi2, div2)
    p_up = jet_einsum("ac,bd->abcd", gi2, gi2)
    p_up = jet_einsum("abcd,cd->ab", p_up, curv.schouten.truncate(ddt.order))
    pt = jet_einsum("ab,ab->", p_up, t.truncate(ddt.order))
    xx = (div2 + pt * float(d + w)) * (1.0 / ((d + w) * (d + w - 1)))
    order = xx.order
    return TractorRank2(d, w, t.truncate(order), xz.truncate(order), xx, scale)


def delta_R(t: Jet, weight: int, bundle: ExtrinsicBundle, variance: str = "") -> Jet:
    """The invariant normal-derivative operator nabla_n - w H on Sigma."""
    if variance:
        dt = covariant_derivative(t, variance, bundle.curv.gamma)
    else:
        dt = partials(t, 0)
    nu = bundle.normal_up.truncate(dt.order)
    idx = "abcdfgh"[: len(variance)]
    normal_part = jet_einsum(f"z,z{idx}->{idx}", nu, dt)
    h = bundle.mean_curvature.truncate(dt.order)
    return normal_part - jet_einsum(f",{idx}->{idx}", h, t.truncate(dt.order)) * float(weight)


def delta1_tracefree(u: Jet, bundle: ExtrinsicBundle) -> Jet:
    """Trace-free tangential first-order invariant operator on trace-free
    symmetric weight-2 forms:

        TF-tan[ nabla_n u_ab - 2 nabla-bar_(a (u_n)_b) ]
    """
    gi = bundle.curv.g_inv.truncate(u.order)
    tr = jet_einsum("ab,ab->", gi, u)
    scale_u = max(float(np.max(np.abs(u.value))), 1e-30)
    if np.max(np.abs(tr.value)) > 1e-8 * scale_u:
        raise TractorError("delta1 input must be trace-free")
    du = covariant_derivative(u, "dd", bundle.curv.gamma)
    nu = bundle.normal_up.truncate(du.order)
    dn_u = jet_einsum("z,zab->ab", nu, du)

    u_n = jet_einsum("a,ab->b", bundle.normal_up.truncate(u.order), u)
    u_n = bundle.tangential(u_n, "d")
    m = intrinsic_derivative_for(u_n, bundle)
    m_sym = (m + jet_einsum("ab->ba", m)) * 0.5

    order = min(dn_u.order, m_sym.order)
    out = bundle.tangential_trace_free(dn_u.truncate(order) - m_sym.truncate(order) * 2.0)
    sym = (out + jet_einsum("ab->ba", out)) * 0.5
    return sym


def intrinsic_derivative_for(v: Jet, bundle: ExtrinsicBundle) -> Jet:
    from .hypersurface import intrinsic_derivative

    return intrinsic_derivative(v, "d", bundle, check=False)


# -- scale conversion ---------------------------------------------------------


def conformal_data(omega: Jet, g_inv_values: np.ndarray) -> dict:
    """Point data for Eq.-style transforms: Omega, Upsilon (down/up), |Upsilon|^2."""
    if np.any(omega.value <= 0):
        raise TractorError("conformal factor must be positive")
    ups = partials(omega.log(), 0).value
    ups_up = np.einsum("...ab,...b->...a", g_inv_values, ups)
    ups2 = np.einsum("...a,...a->...", ups, ups_up)
    return {"omega": omega.value, "ups": ups, "ups_up": ups_up, "ups2": ups2}


def ct_matrix(data: dict, weight: int, dim: int) -> np.ndarray:
    """Dense transform on component triples for a weight-w tractor."""
    om = np.asarray(data["omega"])
    shape = om.shape
    a = np.zeros(shape + (dim + 2, dim + 2))
    a[..., 0, 0] = om
    for i in range(dim):
        a[..., 1 + i, 0] = data["ups_up"][..., i] / om
        a[..., 1 + i, 1 + i] = 1.0 / om
        a[..., dim + 1, 1 + i] = -data["ups"][..., i] / om
    a[..., dim + 1, 0] = -0.5 * data["ups2"] / om
    a[..., dim + 1, dim + 1] = 1.0 / om
    return a * (om ** weight)[..., None, None]


def ct_transform(values: np.ndarray, data: dict, weight: int, dim: int) -> np.ndarray:
    """Transform component-triple values to the scale Omega^2 g."""
    a = ct_matrix(data, weight, dim)
    return np.einsum("...ij,...j->...i", a, values)


def ct_transform_rank2(matrix: np.ndarray, data: dict, weight: int, dim: int) -> np.ndarray:
    a = ct_matrix(data, 0, dim)
    out = np.einsum("...ij,...jk,...lk->...il", a, matrix, a)
    return out * (np.asarray(data["omega"]) ** weight)[..., None, None]
