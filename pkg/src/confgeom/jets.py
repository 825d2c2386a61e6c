"""Truncated multivariate Taylor arithmetic (jets).

A jet of order K in ``dim`` variables stores the coefficients c_alpha of

    f(p + v) = sum_{|alpha| <= K} c_alpha * v^alpha + O(|v|^{K+1}),

so every partial derivative used anywhere in this package is a jet
coefficient: (d^alpha f)(p) = alpha! * c_alpha.

Coefficients live in the trailing axis of a dense array; any leading axes
are free "batch" axes, used both for tensor component indices and for
batches of evaluation points.  All operations are pure and jets are
immutable, so evaluation across points can proceed in parallel or in
vectorized batches without shared state.

Multi-indices are laid out in graded-lexicographic order.  Because the
layout is graded, the order-(K-1) coefficient block is a prefix of the
order-K block, which makes truncation a slice and keeps the convolution
tables dense and cache friendly.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

__all__ = [
    "Jet",
    "JetError",
    "IncompatibleJets",
    "OrderExceeded",
    "SingularComposition",
    "jet_space",
    "jet_einsum",
    "compose_multivariate",
    "restrict_to_line",
]


class JetError(Exception):
    """Base error for jet arithmetic."""


class IncompatibleJets(JetError):
    """Operands do not share dimension and truncation order."""


class OrderExceeded(JetError):
    """A derivative or coefficient beyond the stored order was requested."""


class SingularComposition(JetError):
    """Series composition at a point where the outer function is singular."""


SINGULAR_TOL = 1e-12


def _monomials(dim: int, order: int) -> np.ndarray:
    """All exponent vectors with |alpha| <= order, graded-lex sorted."""
    rows = []
    for deg in range(order + 1):
        def rec(prefix, remaining, slots):
            if slots == 1:
                rows.append(prefix + [remaining])
                return
            for e in range(remaining, -1, -1):
                rec(prefix + [e], remaining - e, slots - 1)
        rec([], deg, dim)
    return np.array(rows, dtype=np.int64)


class JetSpace:
    """Shared immutable layout data for jets of a fixed (dim, order)."""

    def __init__(self, dim: int, order: int):
        if dim < 1:
            raise JetError(f"jet dimension must be >= 1, got {dim}")
        if order < 0:
            raise JetError(f"jet order must be >= 0, got {order}")
        self.dim = dim
        self.order = order
        self.monomials = _monomials(dim, order)
        self.n = len(self.monomials)
        self.degrees = self.monomials.sum(axis=1)
        self._pos = {tuple(m): i for i, m in enumerate(self.monomials)}
        # number of coefficients at each truncation order (prefix lengths)
        self.n_at_order = np.searchsorted(self.degrees, np.arange(order + 2))
        self._mul_table = None
        self._diff_tables = {}
        self._factorials = np.array(
            [math.prod(math.factorial(int(e)) for e in m) for m in self.monomials],
            dtype=float,
        )

    def position(self, alpha) -> int:
        key = tuple(int(a) for a in alpha)
        if len(key) != self.dim:
            raise IncompatibleJets(f"multi-index length {len(key)} != dim {self.dim}")
        pos = self._pos.get(key)
        if pos is None:
            raise OrderExceeded(f"multi-index {key} exceeds order {self.order}")
        return pos

    @property
    def mul_table(self):
        """(i, j, group_starts) with output position sorted groups.

        Pairs (i, j) run over all coefficient pairs whose degrees sum to at
        most ``order``; the pair list is sorted by output position so the
        product reduces with one ``add.reduceat`` per multiply.
        """
        if self._mul_table is None:
            deg = self.degrees
            pairs_i, pairs_j, out = [], [], []
            for i in range(self.n):
                di = deg[i]
                # monomials are graded: truncate j range by remaining degree
                jmax = self.n_at_order[self.order - di + 1]
                mi = self.monomials[i]
                for j in range(jmax):
                    pairs_i.append(i)
                    pairs_j.append(j)
                    out.append(self._pos[tuple(mi + self.monomials[j])])
            pairs_i = np.array(pairs_i, dtype=np.intp)
            pairs_j = np.array(pairs_j, dtype=np.intp)
            out = np.array(out, dtype=np.intp)
            order_ix = np.argsort(out, kind="stable")
            pairs_i, pairs_j, out = pairs_i[order_ix], pairs_j[order_ix], out[order_ix]
            starts = np.searchsorted(out, np.arange(self.n))
            self._mul_table = (pairs_i, pairs_j, starts)
            # flat pair index into an (n, n) outer product, used by jet_einsum
            self._mul_flat = pairs_i * self.n + pairs_j
        return self._mul_table

    @property
    def mul_flat(self):
        self.mul_table
        return self._mul_flat

    def diff_table(self, axis: int):
        """(src, dst, scale) mapping order-K coeffs to order-(K-1) derivative."""
        if axis not in self._diff_tables:
            lower = jet_space(self.dim, self.order - 1) if self.order > 0 else None
            src, dst, scale = [], [], []
            if lower is not None:
                for i, m in enumerate(self.monomials):
                    if m[axis] >= 1:
                        tgt = m.copy()
                        tgt[axis] -= 1
                        src.append(i)
                        dst.append(lower._pos[tuple(tgt)])
                        scale.append(float(m[axis]))
            self._diff_tables[axis] = (
                np.array(src, dtype=np.intp),
                np.array(dst, dtype=np.intp),
                np.array(scale, dtype=float),
            )
        return self._diff_tables[axis]


@lru_cache(maxsize=None)
def jet_space(dim: int, order: int) -> JetSpace:
    return JetSpace(dim, order)


def _coeffs_of(x, space, batch_shape=()):
    """Coerce a scalar/array into a coefficient array for ``space``."""
    arr = np.asarray(x, dtype=float)
    out = np.zeros(arr.shape + (space.n,), dtype=float)
    out[..., 0] = arr
    return out


class Jet:
    """Dense truncated Taylor polynomial with numpy-style leading axes."""

    __slots__ = ("space", "coeffs")

    def __init__(self, space: JetSpace, coeffs: np.ndarray, copy: bool = False):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1] != space.n:
            raise IncompatibleJets(
                f"coefficient length {coeffs.shape[-1]} != {space.n} for "
                f"(dim={space.dim}, order={space.order})"
            )
        if copy:
            coeffs = coeffs.copy()
        self.space = space
        self.coeffs = coeffs

    # -- constructors ------------------------------------------------------

    @staticmethod
    def constant(value, dim: int, order: int) -> "Jet":
        sp = jet_space(dim, order)
        return Jet(sp, _coeffs_of(value, sp))

    @staticmethod
    def variable(axis: int, value, dim: int, order: int) -> "Jet":
        """The coordinate function x_axis expanded at x_axis = value."""
        sp = jet_space(dim, order)
        c = _coeffs_of(value, sp)
        if order >= 1:
            e = np.zeros(dim, dtype=np.int64)
            e[axis] = 1
            c[..., sp.position(e)] = 1.0
        return Jet(sp, c)

    @staticmethod
    def zeros(shape, dim: int, order: int) -> "Jet":
        sp = jet_space(dim, order)
        return Jet(sp, np.zeros(tuple(shape) + (sp.n,)))

    # -- basic queries -----------------------------------------------------

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def order(self) -> int:
        return self.space.order

    @property
    def shape(self):
        return self.coeffs.shape[:-1]

    @property
    def value(self):
        """Constant term: the represented function's value at the base point."""
        return self.coeffs[..., 0]

    def coefficient(self, alpha):
        """c_alpha, so that (d^alpha f)(p) = alpha! * c_alpha."""
        return self.coeffs[..., self.space.position(alpha)]

    def derivative_value(self, alpha):
        """(d^alpha f)(p) = alpha! * c_alpha."""
        pos = self.space.position(alpha)
        return self.coeffs[..., pos] * self.space._factorials[pos]

    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.space, self.coeffs[idx + (slice(None),)])

    def __repr__(self):
        return f"Jet(dim={self.dim}, order={self.order}, shape={self.shape})"

    # -- structural ops ----------------------------------------------------

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise OrderExceeded(f"cannot raise order {self.order} -> {order}")
        if order == self.order:
            return self
        sp = jet_space(self.dim, order)
        return Jet(sp, self.coeffs[..., : sp.n])

    def extend(self, order: int) -> "Jet":
        """Zero-pad to a higher order (the new coefficients are not Taylor
        data of the original function; callers own that judgement)."""
        if order < self.order:
            return self.truncate(order)
        sp = jet_space(self.dim, order)
        pad = np.zeros(self.shape + (sp.n - self.space.n,))
        return Jet(sp, np.concatenate([self.coeffs, pad], axis=-1))

    def deriv(self, axis: int) -> "Jet":
        """Partial derivative: an order-(K-1) jet."""
        if self.order == 0:
            raise OrderExceeded("derivative of an order-0 jet: order exhausted")
        src, dst, scale = self.space.diff_table(axis)
        lower = jet_space(self.dim, self.order - 1)
        out = np.zeros(self.shape + (lower.n,))
        out[..., dst] = self.coeffs[..., src] * scale
        return Jet(lower, out)

    def grad(self) -> "Jet":
        """Stack of partial derivatives along a new leading axis."""
        parts = [self.deriv(a).coeffs for a in range(self.dim)]
        return Jet(jet_space(self.dim, self.order - 1), np.stack(parts, axis=0))

    # -- ring ops ----------------------------------------------------------

    def _check_compatible(self, other: "Jet"):
        if self.space is not other.space:
            if self.dim != other.dim or self.order != other.order:
                raise IncompatibleJets(
                    f"(dim={self.dim}, K={self.order}) vs "
                    f"(dim={other.dim}, K={other.order})"
                )

    def __add__(self, other):
        if isinstance(other, Jet):
            self._check_compatible(other)
            return Jet(self.space, self.coeffs + other.coeffs)
        out = self.coeffs.copy()
        arr = np.asarray(other, dtype=float)
        out2 = np.broadcast_to(out, np.broadcast_shapes(out.shape, arr.shape + (1,))).copy()
        out2[..., 0] += arr
        return Jet(self.space, out2)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.space, -self.coeffs)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Jet) else -np.asarray(other, dtype=float))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            self._check_compatible(other)
            pi, pj, starts = self.space.mul_table
            prod = self.coeffs[..., pi] * other.coeffs[..., pj]
            return Jet(self.space, np.add.reduceat(prod, starts, axis=-1))
        arr = np.asarray(other, dtype=float)
        return Jet(self.space, self.coeffs * arr[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, k):
        if not isinstance(k, (int, np.integer)):
            raise JetError("jet powers must have integer exponents")
        if k < 0:
            return self.reciprocal() ** (-k)
        result = Jet.constant(np.ones(self.shape), self.dim, self.order)
        base = self
        k = int(k)
        while k:  # repeated squaring keeps non-positive bases valid
            if k & 1:
                result = result * base
            base = base * base if k > 1 else base
            k >>= 1
        return result

    # -- series composition ------------------------------------------------

    def compose_series(self, series: np.ndarray) -> "Jet":
        """Substitute self into a univariate series around self's value.

        ``series`` has shape broadcastable to self.shape + (K+1,), holding the
        Taylor coefficients t_k of the outer function at the constant term:
        result = sum_k t_k * (self - value)^k, truncated.  Evaluated by Horner
        in the jet ring: K multiplications, no special cases.
        """
        series = np.asarray(series, dtype=float)
        k_top = self.order
        z = Jet(self.space, self.coeffs.copy())
        z.coeffs[..., 0] = 0.0
        result = Jet.constant(
            np.broadcast_to(series[..., k_top], self.shape).copy(), self.dim, self.order
        )
        for k in range(k_top - 1, -1, -1):
            result = result * z + series[..., k]
        return result

    def _series(self, kind: str) -> np.ndarray:
        c0 = self.value
        K = self.order
        out = np.zeros(np.shape(c0) + (K + 1,))
        if kind == "exp":
            e = np.exp(c0)
            for k in range(K + 1):
                out[..., k] = e / math.factorial(k)
        elif kind == "log":
            if np.any(c0 <= SINGULAR_TOL):
                raise SingularComposition("log of non-positive constant term")
            out[..., 0] = np.log(c0)
            for k in range(1, K + 1):
                out[..., k] = ((-1.0) ** (k - 1)) / (k * c0**k)
        elif kind == "sqrt":
            if np.any(c0 <= SINGULAR_TOL):
                raise SingularComposition("sqrt of non-positive constant term")
            out[..., 0] = np.sqrt(c0)
            for k in range(1, K + 1):
                # t_k = t_{k-1} * (1/2 - (k-1)) / (k * c0)
                out[..., k] = out[..., k - 1] * (0.5 - (k - 1)) / (k * c0)
        elif kind == "recip":
            if np.any(np.abs(c0) < SINGULAR_TOL):
                raise SingularComposition("reciprocal at ~zero constant term")
            out[..., 0] = 1.0 / c0
            for k in range(1, K + 1):
                out[..., k] = -out[..., k - 1] / c0
        elif kind == "sin":
            for k in range(K + 1):
                out[..., k] = np.sin(c0 + k * np.pi / 2) / math.factorial(k)
        elif kind == "cos":
            for k in range(K + 1):
                out[..., k] = np.cos(c0 + k * np.pi / 2) / math.factorial(k)
        elif kind == "tanh":
            # u' = 1 - u^2 coefficient recurrence
            out[..., 0] = np.tanh(c0)
            for k in range(K):
                conv = np.zeros(np.shape(c0))
                for i in range(k + 1):
                    conv = conv + out[..., i] * out[..., k - i]
                out[..., k + 1] = ((1.0 if k == 0 else 0.0) - conv) / (k + 1)
        else:
            raise JetError(f"unknown series kind {kind!r}")
        return out

    def exp(self):
        return self.compose_series(self._series("exp"))

    def log(self):
        return self.compose_series(self._series("log"))

    def sqrt(self):
        return self.compose_series(self._series("sqrt"))

    def sin(self):
        return self.compose_series(self._series("sin"))

    def cos(self):
        return self.compose_series(self._series("cos"))

    def tanh(self):
        return self.compose_series(self._series("tanh"))

    def reciprocal(self):
        return self.compose_series(self._series("recip"))

    # -- evaluation --------------------------------------------------------

    def eval_offsets(self, deltas) -> np.ndarray:
        """Evaluate the polynomial at displacements from the base point."""
        deltas = np.asarray(deltas, dtype=float)
        mono = self.space.monomials  # (n, dim)
        vals = np.prod(deltas[..., None, :] ** mono[None, :, :], axis=-1)
        return np.einsum("...n,...n->...", self.coeffs, vals)


# -- einsum over tensor component axes --------------------------------------


def jet_einsum(subscripts: str, a: Jet, b: Jet | None = None) -> Jet:
    """Einstein summation over leading (component) axes of jets.

    ``subscripts`` uses letters for component axes only; leading batch axes
    broadcast as with ``np.einsum('...ab,...bc->...ac')``.  The coefficient
    axes are contracted through the truncated-product table.
    """
    if b is None:
        lhs, rhs = subscripts.split("->")
        return Jet(a.space, np.einsum(f"...{lhs}X->...{rhs}X", a.coeffs))
    a._check_compatible(b)
    ins, rhs = subscripts.split("->")
    s1, s2 = ins.split(",")
    sp = a.space
    tmp = np.einsum(f"...{s1}X,...{s2}Y->...{rhs}XY", a.coeffs, b.coeffs)
    tmp = tmp.reshape(tmp.shape[:-2] + (sp.n * sp.n,))
    _, _, starts = sp.mul_table
    gathered = tmp[..., sp.mul_flat]
    return Jet(sp, np.add.reduceat(gathered, starts, axis=-1))


# -- multivariate composition ------------------------------------------------


def compose_multivariate(f: Jet, offsets: list[Jet]) -> Jet:
    """Compose a jet with substitution jets, one per variable of ``f``.

    Each offset is the jet of (x_i - p_i) in the target space; its constant
    term must vanish, otherwise the result is not a Taylor expansion of the
    composite.
    """
    if len(offsets) != f.dim:
        raise IncompatibleJets(f"need {f.dim} substitution jets, got {len(offsets)}")
    target = offsets[0].space
    for off in offsets:
        if off.space is not target:
            raise IncompatibleJets("substitution jets must share one space")
        if np.any(np.abs(off.value) > 1e-9):
            raise SingularComposition("substitution jet has non-zero constant term")
    # powers of each offset up to the maximum exponent appearing in f
    max_exp = f.space.monomials.max(axis=0)
    powers = []
    for i, off in enumerate(offsets):
        pows = [Jet.constant(np.ones(off.shape), target.dim, target.order)]
        for _ in range(int(max_exp[i])):
            pows.append(pows[-1] * off)
        powers.append(pows)
    batch = np.broadcast_shapes(*(o.shape for o in offsets), f.shape)
    acc = np.zeros(batch + (target.n,))
    for pos, mono in enumerate(f.space.monomials):
        # offsets have valuation >= 1, so source degrees beyond the target
        # order are annihilated by truncation
        if f.space.degrees[pos] > target.order:
            continue
        term = None
        for i, e in enumerate(mono):
            if e:
                p = powers[i][int(e)]
                term = p if term is None else term * p
        coeff = f.coeffs[..., pos]
        if term is None:
            acc[..., 0] += coeff
        else:
            acc = acc + coeff[..., None] * term.coeffs
    return Jet(target, acc)


def restrict_to_line(f: Jet, direction) -> Jet:
    """Univariate jet of t -> f(p + t * direction)."""
    direction = np.asarray(direction, dtype=float)
    t = Jet.variable(0, 0.0, 1, f.order)
    offsets = [t * direction[i] for i in range(f.dim)]
    return compose_multivariate(f, offsets)
