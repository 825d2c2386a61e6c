"""Extrinsic invariants of a hypersurface Sigma = s^{-1}(0).

The unit normal is extended off Sigma as n = grad s / |grad s| (pointing
into {s > 0}), every extrinsic quantity is computed as a jet field of that
extension, and intrinsic derivatives are full tangential projections of the
ambient derivative of projected fields.  On Sigma the results agree with
the induced Levi-Civita connection, and are independent of the choice of
defining function with the same zero set.

Intrinsic curvature (for the Fialkow tensor and the Gauss-equation checks)
is computed on an honest chart: the surface is solved as a graph over the
remaining coordinates with jet-Newton, the pulled-back metric is fed to the
ambient curvature stack in dimension d-1, and the result is pushed back to
ambient tangential components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .curvature import (
    CurvatureBundle,
    covariant_derivative,
    curvature_stack_from_jets,
    partials,
)
from .expr import default_names, eval_jet, parse
from .jets import Jet, compose_multivariate, jet_einsum, jet_space
from .tensor import TensorValue

__all__ = [
    "HypersurfaceSpec",
    "ExtrinsicBundle",
    "HypersurfaceError",
    "extrinsic_stack",
    "extrinsic_stack_from_jets",
    "intrinsic_derivative",
    "fourth_form",
    "divergence_fourth_form",
    "pairing_integral",
    "solve_graph_jet",
]

ON_SURFACE_TOL = 1e-10
GRADIENT_TOL = 1e-8


class HypersurfaceError(ValueError):
    pass


class HypersurfaceSpec:
    """Defining-function data; n = +grad s / |grad s| points into {s > 0}."""

    def __init__(self, s, dim: int, names=None, orientation: int = 1):
        self.dim = dim
        self.names = names or default_names(dim)
        node = parse(s, dim, self.names) if isinstance(s, str) else s
        self.s = node
        if orientation not in (1, -1):
            raise HypersurfaceError("orientation must be +1 or -1")
        self.orientation = orientation

    def eval_jets(self, point, order: int) -> Jet:
        jet = eval_jet(self.s, np.asarray(point, dtype=float), order, self.dim)
        return jet * float(self.orientation)


@dataclass
class ExtrinsicBundle:
    """Hypersurface data at a point, all fields as jets of the extension."""

    dim: int
    point: np.ndarray
    curv: CurvatureBundle
    s: Jet
    normal_down: Jet
    normal_up: Jet
    projector: Jet  # gbar_a^b, layout [a, b]
    induced_down: Jet  # gbar_ab
    induced_up: Jet  # gbar^ab
    ff: Jet  # II_ab
    mean_curvature: Jet  # H
    ff_tf: Jet  # trace-free second fundamental form
    weyl_nn: Jet | None = None  # W(n, a, b, n)
    weyl_tan_n: Jet | None = None  # full projection of W_abcd n^d on remaining slots
    cotton_n_sym: Jet | None = None  # projected, symmetrized C(n, a, b)
    fourth_form: Jet | None = None  # d = 4 only
    fialkow_tf: np.ndarray | None = None  # values at the point
    schouten_tan_tf: np.ndarray | None = None
    intrinsic_schouten: np.ndarray | None = None  # ambient tangential components
    intrinsic_riemann: np.ndarray | None = None
    chart: dict | None = None

    WEIGHTS = {
        "normal_down": 1,
        "induced_down": 2,
        "ff": 1,
        "ff_tf": 1,
        "fialkow_tf": 0,
        "fourth_form": -1,  # 3 - d in d = 4
        "mean_curvature": -1,
    }

    def value(self, name: str) -> TensorValue:
        obj = getattr(self, name)
        if obj is None:
            raise HypersurfaceError(f"{name} was not computed for this bundle")
        vals = obj.value if isinstance(obj, Jet) else obj
        weight = self.WEIGHTS.get(name, 0)
        rank = np.asarray(vals).ndim
        variance = ("d",) * rank if name != "normal_up" else ("u",)
        return TensorValue(self.dim, variance, weight, vals)

    # -- helpers used by the variational checks ----------------------------

    def tangential(self, t: Jet, variance: str) -> Jet:
        """Project every slot of a jet field with gbar."""
        proj = self.projector.truncate(t.order)
        out = t
        idx = "abcdfgh"[: len(variance)]
        for slot, var in enumerate(variance):
            ell = idx[slot]
            src = idx[:slot] + "e" + idx[slot + 1 :]
            spec = f"{ell}e,{src}->{idx}" if var == "d" else f"e{ell},{src}->{idx}"
            out = jet_einsum(spec, proj.truncate(out.order), out)
        return out

    def tangential_trace_free(self, t: Jet) -> Jet:
        """Trace-free tangential part of a symmetric rank-2 down field."""
        proj = self.tangential(t, "dd")
        gup = self.induced_up.truncate(proj.order)
        tr = jet_einsum("ab,ab->", gup, proj)
        gdown = self.induced_down.truncate(proj.order)
        return proj - jet_einsum("ab,->ab", gdown, tr) * (1.0 / (self.dim - 1))

    def normal_component(self, t: Jet, slot: int, rank: int) -> Jet:
        idx = "abcdfgh"[:rank]
        src = idx[:slot] + "e" + idx[slot + 1 :]
        out_idx = idx[:slot] + idx[slot + 1 :]
        return jet_einsum(f"e,{src}->{out_idx}", self.normal_up.truncate(t.order), t)


def _norm_field(g_inv: Jet, ds: Jet) -> tuple[Jet, Jet]:
    grad = jet_einsum("ab,b->a", g_inv.truncate(ds.order), ds)
    norm2 = jet_einsum("a,a->", ds, grad)
    return grad, norm2


def extrinsic_stack(metric, hyp: HypersurfaceSpec, point, order: int = 4, need: str = "fourth"):
    point = np.asarray(point, dtype=float)
    g = metric.eval_jets(point, order)
    s = hyp.eval_jets(point, order)
    return extrinsic_stack_from_jets(g, s, point=point, need=need)


def extrinsic_stack_from_jets(g: Jet, s: Jet, point=None, need: str = "fourth") -> ExtrinsicBundle:
    """Assemble the extrinsic bundle from metric and defining-function jets.

    ``need``: 'ff' (II, H), 'weyl' (+ Weyl projections), 'fialkow'
    (+ chart curvature and the trace-free Fialkow tensor), 'fourth'
    (+ fourth fundamental form, d = 4).
    """
    d = g.shape[-1]
    scale = max(float(np.max(np.abs(s.coeffs))), 1.0)
    if np.any(np.abs(s.value) > ON_SURFACE_TOL * scale):
        raise HypersurfaceError(
            f"point is not on the hypersurface: |s| = {np.max(np.abs(s.value)):.3e}"
        )
    curv_need = {"ff": "riemann", "weyl": "weyl", "fialkow": "weyl", "fourth": "cotton"}[need]
    curv = curvature_stack_from_jets(g, need=curv_need, point=point)

    ds = partials(s, 0)
    grad, norm2 = _norm_field(curv.g_inv, ds)
    if np.any(norm2.value < GRADIENT_TOL**2):
        raise HypersurfaceError("defining function has degenerate gradient on Sigma")
    inv_norm = norm2.sqrt().reciprocal()
    n_down = jet_einsum("a,->a", ds, inv_norm)
    n_up = jet_einsum("a,->a", grad, inv_norm)

    eye = Jet.constant(np.zeros(n_down.shape[:-1] + (d, d)), g.dim, n_down.order)
    coeffs = eye.coeffs.copy()
    coeffs[..., 0] = np.eye(d)
    eye = Jet(eye.space, coeffs)
    projector = eye - jet_einsum("a,b->ab", n_down, n_up)  # gbar_a^b
    induced_down = g.truncate(n_down.order) - jet_einsum("a,b->ab", n_down, n_down)
    induced_up = curv.g_inv.truncate(n_down.order) - jet_einsum("a,b->ab", n_up, n_up)

    dn = covariant_derivative(n_down, "d", curv.gamma)  # dn[a,b] = nabla_a n_b
    proj = projector.truncate(dn.order)
    ff = jet_einsum("ac,cb->ab", proj, dn)
    ff = jet_einsum("bd,ad->ab", proj, ff)
    h = jet_einsum("ab,ab->", curv.g_inv.truncate(ff.order), ff) * (1.0 / (d - 1))
    ff_tf = ff - jet_einsum("ab,->ab", induced_down.truncate(ff.order), h)

    bundle = ExtrinsicBundle(
        dim=d,
        point=np.asarray(point, dtype=float) if point is not None else None,
        curv=curv,
        s=s,
        normal_down=n_down,
        normal_up=n_up,
        projector=projector,
        induced_down=induced_down,
        induced_up=induced_up,
        ff=ff,
        mean_curvature=h,
        ff_tf=ff_tf,
    )
    if need == "ff":
        return bundle

    w = curv.weyl
    nu = n_up.truncate(w.order)
    w_n = jet_einsum("abcd,d->abc", w, nu)  # W_abcn
    w_nn = jet_einsum("cabd,c->abd", w, nu)
    w_nn = jet_einsum("abd,d->ab", w_nn, nu)  # W_nabn
    bundle.weyl_nn = bundle.tangential(w_nn, "dd")
    bundle.weyl_tan_n = bundle.tangential(w_n, "ddd")
    if need == "weyl":
        return bundle

    # chart route for intrinsic curvature
    chart = _chart_intrinsic(g, s, bundle)
    bundle.chart = chart
    bundle.intrinsic_riemann = chart.get("riemann_ambient")
    bundle.intrinsic_schouten = chart["schouten_ambient"]
    p_tan = bundle.tangential(curv.schouten.truncate(ff.order), "dd")
    p_tan_tf = _value_trace_free(p_tan.value, bundle)
    bundle.schouten_tan_tf = p_tan_tf
    pbar_tf = _value_trace_free(chart["schouten_ambient"], bundle)
    bundle.fialkow_tf = (
        p_tan_tf - pbar_tf + h.value[..., None, None] * ff_tf.value
    )
    if need == "fialkow":
        return bundle

    if d != 4:
        raise HypersurfaceError("fourth fundamental form requires dimension 4")
    bundle.fourth_form = _fourth_form_field(bundle)
    return bundle


def _value_trace_free(vals: np.ndarray, bundle: ExtrinsicBundle) -> np.ndarray:
    gup = bundle.induced_up.value
    gdown = bundle.induced_down.value
    tr = np.einsum("...ab,...ab->...", gup, vals)
    return vals - gdown * tr[..., None, None] / (bundle.dim - 1)


def _fourth_form_field(bundle: ExtrinsicBundle) -> Jet:
    """IVo_ab = C_n(ab)^T + H W_nabn - nabla-bar^c W_c(ab)n^T  (d = 4)."""
    curv = bundle.curv
    c = curv.cotton
    nu = bundle.normal_up.truncate(c.order)
    c_n = jet_einsum("cab,c->ab", c, nu)
    c_n = bundle.tangential(c_n, "dd")
    c_n_sym = (c_n + jet_einsum("ab->ba", c_n)) * 0.5
    bundle.cotton_n_sym = c_n_sym

    h_w = jet_einsum(",ab->ab", bundle.mean_curvature.truncate(bundle.weyl_nn.order), bundle.weyl_nn)

    w_n_tan = bundle.weyl_tan_n  # fully projected W_cabn
    div = intrinsic_derivative(w_n_tan, "ddd", bundle)  # div[z,c,a,b]
    gup = bundle.induced_up.truncate(div.order)
    div = jet_einsum("zc,zcab->ab", gup, div)
    div_sym = (div + jet_einsum("ab->ba", div)) * 0.5

    order = min(c_n_sym.order, h_w.order, div_sym.order)
    return c_n_sym.truncate(order) + h_w.truncate(order) - div_sym.truncate(order)


def intrinsic_derivative(t: Jet, variance: str, bundle: ExtrinsicBundle, check: bool = True) -> Jet:
    """Induced-connection derivative of a tangential field.

    Computed as the full tangential projection of the ambient covariant
    derivative of the fully projected extension; the derivative index leads.
    """
    if check:
        for slot in range(len(variance)):
            contraction = bundle.normal_component(t, slot, len(variance))
            scale = max(float(np.max(np.abs(t.value))), 1.0)
            if np.max(np.abs(contraction.value)) > 1e-9 * scale:
                raise HypersurfaceError(
                    f"intrinsic derivative of a non-tangential field (slot {slot})"
                )
    projected = bundle.tangential(t, variance)
    ambient = covariant_derivative(projected, variance, bundle.curv.gamma)
    return bundle.tangential(ambient, "d" + variance)


def fourth_form(metric, hyp: HypersurfaceSpec, point, order: int = 4) -> TensorValue:
    if metric.dim != 4:
        raise HypersurfaceError("fourth fundamental form requires dimension 4")
    bundle = extrinsic_stack(metric, hyp, point, order=order, need="fourth")
    return bundle.value("fourth_form")


def divergence_fourth_form(metric, hyp: HypersurfaceSpec, point, order: int = 5) -> TensorValue:
    """nabla-bar^a IVo_ab on Sigma: a tangential one-form of weight 1-d."""
    if metric.dim != 4:
        raise HypersurfaceError("fourth fundamental form requires dimension 4")
    if order < 5:
        raise HypersurfaceError("divergence of the fourth form needs jets of order >= 5")
    bundle = extrinsic_stack(metric, hyp, point, order=order, need="fourth")
    iv = bundle.fourth_form
    div = intrinsic_derivative(iv, "dd", bundle)
    gup = bundle.induced_up.truncate(div.order)
    vals = jet_einsum("za,zab->b", gup, div).value
    return TensorValue(4, ("d",), 1 - 4, vals)  # down rep of T*Sigma[1-d]


# -- chart machinery ----------------------------------------------------------


def solve_graph_jet(s: Jet, axis: int, extra_axis: bool = False) -> Jet:
    """Solve s(x', psi(x')) = 0 (or = t) for the graph height as a jet.

    ``axis`` is the solved coordinate.  With ``extra_axis`` the last target
    variable is the level t, i.e. psi solves s(x', psi(x', t)) = t, which
    yields surface-adapted coordinates.  Newton iteration in the jet ring;
    the scalar starting value comes from the on-surface base point (s(p)=0),
    root-finding accuracy is that of the jets themselves.
    """
    d = s.dim
    m = d - 1 + (1 if extra_axis else 0)
    order = s.order
    target = jet_space(m, order)
    # offsets for the unsolved coordinates
    offsets = []
    pos = 0
    for a in range(d):
        if a == axis:
            offsets.append(None)
        else:
            offsets.append(Jet.variable(pos, np.zeros(s.shape), m, order) * 1.0)
            pos += 1
    t_var = Jet.variable(m - 1, np.zeros(s.shape), m, order) if extra_axis else None

    ds_axis = s.deriv(axis)
    psi = Jet.constant(np.zeros(s.shape), m, order)  # offset from base height
    sweeps = max(1, math.ceil(math.log2(order + 1)) + 1)
    for _ in range(sweeps):
        subs = [psi if a == axis else offsets[a] for a in range(d)]
        f_val = compose_multivariate(s, subs)
        if extra_axis:
            f_val = f_val - t_var
        f_prime = compose_multivariate(ds_axis.extend(order), subs)
        update = f_val / f_prime
        coeffs = psi.coeffs - update.coeffs
        coeffs[..., 0] = 0.0  # the base point stays the root
        psi = Jet(target, coeffs)
    return psi


def _chart_intrinsic(g: Jet, s: Jet, bundle: ExtrinsicBundle) -> dict:
    """Intrinsic curvature of (Sigma, gbar) via a local graph chart."""
    d = g.shape[-1]
    ds_val = partials(s, 0).value
    flat = ds_val.reshape(-1, d)
    axis = int(np.argmax(np.abs(flat[0])))
    if np.any(np.abs(flat[:, axis]) < GRADIENT_TOL):
        raise HypersurfaceError("chart axis degenerates across the point batch")
    psi = solve_graph_jet(s, axis)
    order = psi.order

    # embedding pushforward E_i^a
    m = d - 1
    dpsi = partials(psi, 0)  # (m,) jet in chart space
    rows = []
    pos = 0
    eorder = order - 1
    for a in range(d):
        if a == axis:
            rows.append(dpsi.truncate(eorder).coeffs)
        else:
            basis = np.zeros(dpsi.shape + (jet_space(m, eorder).n,))
            basis[..., pos, 0] = 1.0
            rows.append(basis)
            pos += 1
    e_push = Jet(jet_space(m, eorder), np.stack(rows, axis=-3))  # [a, i]

    # pull back the metric: gbar_ij = (g o e)_ab E_i^a E_j^b
    subs = []
    pos = 0
    for a in range(d):
        if a == axis:
            subs.append(psi)
        else:
            subs.append(Jet.variable(pos, np.zeros(s.shape), m, order) * 1.0)
            pos += 1
    g_chart = compose_multivariate(g, subs)
    g_pull = jet_einsum("ab,ai->ib", g_chart.truncate(eorder), e_push)
    g_pull = jet_einsum("ib,bj->ij", g_pull, e_push)

    curv_bar = curvature_stack_from_jets(g_pull, need="weyl" if m >= 3 else "riemann")

    # push chart tensors to ambient tangential components:
    # theta^i_a = gbar^{ij} E_j^b g_ba  (values at the point)
    e_val = e_push.value
    gbar_inv = curv_bar.g_inv.value
    theta = np.einsum("...ij,...jb,...ba->...ia", gbar_inv, np.swapaxes(e_val, -1, -2), g.value)
    p_bar = curv_bar.schouten.value
    p_amb = np.einsum("...ij,...ia,...jb->...ab", p_bar, theta, theta)
    out = {
        "axis": axis,
        "psi": psi,
        "push": e_val,
        "theta": theta,
        "metric_chart": g_pull,
        "curv_chart": curv_bar,
        "schouten_ambient": p_amb,
    }
    r_bar = curv_bar.riem.value
    out["riemann_ambient"] = np.einsum(
        "...ijkl,...ia,...jb,...kc,...ld->...abcd", r_bar, theta, theta, theta, theta
    )
    return out


# -- pairing integral -----------------------------------------------------------


def pairing_integral(metric, hyp: HypersurfaceSpec, patch_box, nodes: int = 8, height_guess: float = 0.0):
    """Conformally invariant boundary pairing of the trace-free second
    fundamental form against the trace-free Fialkow tensor (d = 4 instance).

    ``patch_box`` gives (lo, hi) per chart coordinate; the surface is the
    graph of the solved coordinate over that box.
    """
    from .action import gauss_legendre_nodes

    d = metric.dim
    if len(patch_box) != d - 1:
        raise HypersurfaceError("patch box must have d-1 coordinate intervals")
    pts_1d = [gauss_legendre_nodes(lo, hi, nodes) for (lo, hi) in patch_box]
    grids = np.meshgrid(*[p[0] for p in pts_1d], indexing="ij")
    weights = pts_1d[0][1]
    for k in range(1, d - 1):
        weights = np.multiply.outer(weights, pts_1d[k][1])
    chart_pts = np.stack([g.ravel() for g in grids], axis=-1)
    w_flat = weights.ravel()

    # locate the solved axis from the patch centre
    centre = np.array([0.5 * (lo + hi) for lo, hi in patch_box])
    probe = _ambient_point(centre, None, hyp, metric.dim, height_guess)
    axis = probe["axis"]
    heights = _newton_heights(hyp, chart_pts, axis, probe["height"])
    points = _insert_axis(chart_pts, axis, heights)

    g = metric.eval_jets(points, 3)
    s = hyp.eval_jets(points, 3)
    bundle = extrinsic_stack_from_jets(g, s, point=points, need="fialkow")
    iio = bundle.ff_tf.value
    fo = bundle.fialkow_tf
    gup = bundle.induced_up.value
    integrand = np.einsum("...ac,...bd,...cd,...ab->...", gup, gup, iio, fo)
    gchart = bundle.chart["metric_chart"].value
    dv = np.sqrt(np.linalg.det(gchart))
    if bundle.chart["axis"] != axis:
        raise HypersurfaceError("chart axis changed across the patch")
    return float(np.sum(integrand * dv * w_flat))


def _ambient_point(chart_pt, axis, hyp, dim, guess):
    """1-D Newton for the surface height over a chart point."""
    # determine a robust axis from the gradient at the guess
    x = np.zeros(dim)
    remaining = [a for a in range(dim)]
    if axis is None:
        # probe gradient at guess with all coords from chart_pt stuffed in order
        for trial_axis in range(dim - 1, -1, -1):
            pt = _insert_axis(np.asarray(chart_pt)[None, :], trial_axis, np.array([guess]))[0]
            sj = hyp.eval_jets(pt, 1)
            grad = partials(sj, 0).value
            if abs(grad[trial_axis]) > GRADIENT_TOL:
                axis = trial_axis
                break
        else:
            raise HypersurfaceError("could not find a transverse chart axis")
    height = guess
    for _ in range(60):
        pt = _insert_axis(np.asarray(chart_pt)[None, :], axis, np.array([height]))[0]
        sj = hyp.eval_jets(pt, 1)
        val = float(sj.value)
        grad = float(partials(sj, 0).value[axis])
        if abs(grad) < GRADIENT_TOL:
            raise HypersurfaceError("degenerate gradient during surface solve")
        step = val / grad
        height -= step
        if abs(step) < 1e-14:
            break
    if abs(step) > 1e-12:
        raise HypersurfaceError("surface height solve did not converge to 1e-12")
    return {"axis": axis, "height": height}


def _newton_heights(hyp, chart_pts, axis, height0):
    heights = np.full(chart_pts.shape[0], height0, dtype=float)
    for _ in range(60):
        points = _insert_axis(chart_pts, axis, heights)
        sj = hyp.eval_jets(points, 1)
        vals = sj.value
        grads = partials(sj, 0).value[..., axis]
        if np.any(np.abs(grads) < GRADIENT_TOL):
            raise HypersurfaceError("degenerate gradient during surface solve")
        step = vals / grads
        heights = heights - step
        if np.max(np.abs(step)) < 1e-14:
            break
    if np.max(np.abs(step)) > 1e-12:
        raise HypersurfaceError("surface height solve did not converge to 1e-12")
    return heights


def _insert_axis(chart_pts, axis, values):
    chart_pts = np.asarray(chart_pts, dtype=float)
    out = np.zeros(chart_pts.shape[:-1] + (chart_pts.shape[-1] + 1,))
    cols = [a for a in range(chart_pts.shape[-1] + 1) if a != axis]
    out[..., cols] = chart_pts
    out[..., axis] = values
    return out
