"""Pointwise tensor values with index-variance and conformal-weight tags.

A :class:`TensorValue` is a dense array of components in a coordinate basis
together with the ordered variance of its slots ('u'/'d') and an integer
conformal density weight w: under g -> Omega^2 g the stored representative
of the abstract weighted tensor rescales by Omega^w (index gymnastics is
done separately with the rescaled metric).

The symmetrize / trace-free / raise / lower algebra here operates on plain
arrays or on jet fields alike; the generic helpers dispatch on the operand
type so curvature pipelines can reuse them on jets.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np

from .jets import Jet, jet_einsum

__all__ = [
    "TensorValue",
    "MetricAtPoint",
    "TensorError",
    "anyeinsum",
    "symmetrize",
    "antisymmetrize",
    "trace_free_part",
    "rescale",
]


class TensorError(ValueError):
    pass


def anyeinsum(spec: str, a, b=None):
    """np.einsum for arrays, jet_einsum for jets (leading batch axes ok)."""
    if isinstance(a, Jet) or isinstance(b, Jet):
        if b is None:
            return jet_einsum(spec, a)
        if not isinstance(a, Jet):
            a = _const_like(a, b)
        if not isinstance(b, Jet):
            b = _const_like(b, a)
        return jet_einsum(spec, a, b)
    lhs, rhs = spec.split("->")
    if b is None:
        return np.einsum(f"...{lhs}->...{rhs}", a)
    s1, s2 = lhs.split(",")
    return np.einsum(f"...{s1},...{s2}->...{rhs}", a, b)


def _const_like(arr, template: Jet) -> Jet:
    arr = np.asarray(arr, dtype=float)
    out = np.zeros(arr.shape + (template.space.n,))
    out[..., 0] = arr
    return Jet(template.space, out)


@dataclass(frozen=True)
class TensorValue:
    """Dense tensor components at a point."""

    dim: int
    variance: tuple  # tuple of 'u' / 'd'
    weight: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        rank = len(self.variance)
        if rank and values.shape[-rank:] != (self.dim,) * rank:
            raise TensorError(
                f"entries shape {values.shape} incompatible with rank {rank}, dim {self.dim}"
            )

    @property
    def rank(self) -> int:
        return len(self.variance)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.values**2)))

    def __sub__(self, other: "TensorValue") -> "TensorValue":
        return replace(self, values=self.values - other.values)

    def __add__(self, other: "TensorValue") -> "TensorValue":
        return replace(self, values=self.values + other.values)

    def __mul__(self, scalar) -> "TensorValue":
        return replace(self, values=self.values * scalar)

    __rmul__ = __mul__


class MetricAtPoint:
    """Metric data at a point: values, inverse, and the underlying jets."""

    def __init__(self, g_jet: Jet, g_inv_jet: Jet | None = None):
        from .curvature import invert_metric_jets

        self.dim = g_jet.space.dim
        self.g_jet = g_jet
        self.g_inv_jet = g_inv_jet if g_inv_jet is not None else invert_metric_jets(g_jet)
        self.g = TensorValue(self.dim, ("d", "d"), 2, g_jet.value)
        self.g_inv = TensorValue(self.dim, ("u", "u"), -2, self.g_inv_jet.value)
        # positive definiteness check (raises LinAlgError if not PD)
        np.linalg.cholesky(np.asarray(g_jet.value))

    def raise_index(self, t: TensorValue, slot: int) -> TensorValue:
        return _move_index(t, slot, "d", "u", self.g_inv.values)

    def lower_index(self, t: TensorValue, slot: int) -> TensorValue:
        return _move_index(t, slot, "u", "d", self.g.values)


def _move_index(t: TensorValue, slot: int, from_var: str, to_var: str, metric: np.ndarray):
    if t.variance[slot] != from_var:
        raise TensorError(f"slot {slot} has variance {t.variance[slot]}, expected {from_var}")
    vals = np.tensordot(metric, np.moveaxis(t.values, slot, 0), axes=(1, 0))
    vals = np.moveaxis(vals, 0, slot)
    variance = list(t.variance)
    variance[slot] = to_var
    return TensorValue(t.dim, tuple(variance), t.weight, vals)


# -- index algebra, polymorphic over ndarray | Jet ---------------------------


def _values(x):
    return x.values if isinstance(x, TensorValue) else x


def _rebuild(template, values):
    if isinstance(template, TensorValue):
        return replace(template, values=values)
    return values


def symmetrize(t, slots=None):
    """Average over permutations of the given slots (unit normalization)."""
    values = _values(t)
    is_jet = isinstance(values, Jet)
    rank = _rank_of(t, values)
    slots = tuple(range(rank)) if slots is None else tuple(slots)
    if isinstance(t, TensorValue):
        kinds = {t.variance[s] for s in slots}
        if len(kinds) > 1:
            raise TensorError(f"cannot symmetrize slots of mixed variance {kinds}")
    letters = "abcdefgh"[:rank]
    acc = None
    for perm in itertools.permutations(range(len(slots))):
        target = list(letters)
        for k, s in enumerate(slots):
            target[s] = letters[slots[perm[k]]]
        spec = f"{''.join(target)}->{letters}"
        term = anyeinsum(spec, values)
        acc = term if acc is None else acc + term
    acc = acc * (1.0 / math.factorial(len(slots)))
    return _rebuild(t, acc)


def antisymmetrize(t, slots=None):
    values = _values(t)
    rank = _rank_of(t, values)
    slots = tuple(range(rank)) if slots is None else tuple(slots)
    letters = "abcdefgh"[:rank]
    acc = None
    for perm in itertools.permutations(range(len(slots))):
        sign = _perm_sign(perm)
        target = list(letters)
        for k, s in enumerate(slots):
            target[s] = letters[slots[perm[k]]]
        term = anyeinsum(f"{''.join(target)}->{letters}", values)
        term = term * float(sign)
        acc = term if acc is None else acc + term
    acc = acc * (1.0 / math.factorial(len(slots)))
    return _rebuild(t, acc)


def _perm_sign(perm):
    sign = 1
    seen = [False] * len(perm)
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def _rank_of(t, values):
    if isinstance(t, TensorValue):
        return t.rank
    if isinstance(values, Jet):
        return len(values.shape)
    return np.asarray(values).ndim


def trace_free_part(t, metric, metric_inv, projector_dim: int, projector=None):
    """t_(ab)0 = t_ab - (1/D) g_ab g^cd t_cd for symmetric rank-2 down t.

    ``projector_dim`` is the effective dimension D (ambient d, or d-1 for
    tangential tensors traced with the induced metric); ``projector`` (when
    given) replaces g_ab in the trace term, as for the first fundamental
    form.
    """
    values = _values(t)
    if isinstance(t, TensorValue):
        if t.variance != ("d", "d"):
            raise TensorError("trace_free_part expects a down-down tensor")
        sym_gap = np.max(np.abs(t.values - np.swapaxes(t.values, -1, -2)))
        scale = max(np.max(np.abs(t.values)), 1e-30)
        if sym_gap > 1e-8 * scale:
            raise TensorError("trace_free_part expects a symmetric tensor")
    tr = anyeinsum("ab,ab->", metric_inv, values)
    g_used = projector if projector is not None else metric
    if isinstance(values, Jet) or isinstance(g_used, Jet) or isinstance(tr, Jet):
        correction = anyeinsum("ab,->ab", _as_jetlike(g_used, values), _as_jetlike(tr, values))
        out = values - correction * (1.0 / projector_dim)
    else:
        out = values - np.asarray(g_used) * np.asarray(tr)[..., None, None] / projector_dim
    return _rebuild(t, out)


def _as_jetlike(x, template):
    if isinstance(template, Jet) and not isinstance(x, Jet):
        return _const_like(x, template)
    return x


def rescale(t: TensorValue, omega, mode: str = "covariant-representative") -> TensorValue:
    """Representative of a weight-w tensor in the scale Omega^2 g.

    Implements only the density scaling (entries times Omega^w); objects
    transforming non-trivially beyond their weight are recomputed by
    re-running their pipeline on the rescaled metric.
    """
    if mode != "covariant-representative":
        raise TensorError(f"unknown rescale mode {mode!r}")
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise TensorError("conformal factor must be positive")
    return replace(t, values=t.values * omega**t.weight)


def rel_error(a, b, floor: float = 1e-10) -> float:
    """Relative discrepancy with an absolute floor on the scale."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), floor)
    return float(np.max(np.abs(a - b)) / scale)
