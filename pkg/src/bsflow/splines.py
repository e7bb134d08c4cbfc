"""Non-uniform B-spline bases, monotone spline transforms, and inversion.

Index conventions.  A transform of order ``k`` on bins ``r..s-1`` stores
knots ``t_j`` for ``j = r-k+1 .. s+k-1`` and coefficients ``alpha_j`` for
``j = r-k+1 .. s-1``.  Arrays are 0-based with offset ``r-k+1``; bin ``b``
(0-based) corresponds to knot interval ``[t_{r+b}, t_{r+b+1})``.  Parameter
generation normalizes the domain so ``t_r = 0`` and ``t_s = 1``.

The local evaluation helpers (``basis_window`` and friends) are written in
plain arithmetic with no data-dependent branching, so they accept floats,
numpy arrays, tape variables, and duals interchangeably.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    ArgumentError,
    InversionError,
    SplineDomainError,
    SplineIndexError,
    UnsupportedOrderError,
)

__all__ = [
    "KnotVector",
    "SplineParams",
    "CubicSegment",
    "DerivedCoeffs",
    "InversionInfo",
    "eval_basis",
    "eval_spline",
    "transform_value",
    "solve_monotone_cubic_batch",
    "derivative_coeffs",
    "eval_derivative",
    "eval_derivative_in_bin",
    "find_bin",
    "to_power_basis",
    "solve_monotone_cubic",
    "invert_spline",
    "invert_spline_detailed",
    "basis_window",
    "window_derivative_coeffs",
    "spline_window_value",
    "spline_window_derivative",
]


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass
class KnotVector:
    """Strictly increasing knots ``t_{r-k+1} .. t_{s+k-1}``."""

    values: np.ndarray
    r: int
    s: int
    k: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    @property
    def n_bins(self) -> int:
        return self.s - self.r

    def index_of(self, j: int) -> int:
        i = j - (self.r - self.k + 1)
        if i < 0 or i >= len(self.values):
            raise SplineIndexError(f"knot index {j} outside stored range")
        return i

    def knot(self, j: int) -> float:
        return float(self.values[self.index_of(j)])

    def validate(self) -> None:
        expected = self.s - self.r + 2 * self.k - 1
        if len(self.values) != expected:
            raise ArgumentError(
                f"knot vector has {len(self.values)} entries, expected {expected}")
        if self.k < 3:
            raise ArgumentError("order must be at least 3")
        if not np.all(np.diff(self.values) > 0.0):
            raise ArgumentError("knots must be strictly increasing")

    @property
    def interior(self) -> np.ndarray:
        """Knots ``t_r .. t_s`` delimiting the transform bins."""
        return self.values[self.k - 1: self.k + self.n_bins]


class SplineParams:
    """Full parameterization of one monotone spline transform."""

    def __init__(self, knots: KnotVector, alpha: np.ndarray,
                 f_at_knots: np.ndarray | None = None, validate: bool = True):
        self.knots = knots
        self.alpha = np.asarray(alpha, dtype=np.float64)
        self._f_at_knots = None if f_at_knots is None else np.asarray(f_at_knots)
        if validate:
            self.validate()

    @property
    def k(self) -> int:
        return self.knots.k

    @property
    def r(self) -> int:
        return self.knots.r

    @property
    def s(self) -> int:
        return self.knots.s

    @property
    def n_bins(self) -> int:
        return self.knots.n_bins

    def validate(self) -> None:
        self.knots.validate()
        expected = self.s - self.r + self.k - 1
        if len(self.alpha) != expected:
            raise ArgumentError(
                f"alpha has {len(self.alpha)} entries, expected {expected}")
        if not np.all(np.diff(self.alpha) > 0.0):
            raise ArgumentError("alpha must be strictly increasing")

    def alpha_window(self, b: int) -> np.ndarray:
        """Coefficients alpha_{j-k+1..j} active on bin b (j = r + b)."""
        return self.alpha[b: b + self.k]

    def knot_window(self, b: int) -> np.ndarray:
        """Knots t_{j-k+2..j+k-1} entering the local triangle on bin b."""
        return self.knots.values[b + 1: b + 2 * self.k - 1]

    @property
    def f_at_knots(self) -> np.ndarray:
        """Transform values at ``t_r .. t_s``; sorted, used for bin search."""
        if self._f_at_knots is None:
            nb = self.n_bins
            vals = np.empty(nb + 1)
            for i, t in enumerate(self.knots.interior):
                b = min(i, nb - 1)
                vals[i] = spline_window_value(
                    self.alpha_window(b).tolist(),
                    self.knot_window(b).tolist(), self.k, float(t))
            self._f_at_knots = vals
        return self._f_at_knots


@dataclass
class CubicSegment:
    """Power-basis restriction of a cubic transform to one bin.

    ``f(x) = sum_m c_m (x - x0)^m`` on ``[t_j, t_{j+1})`` with ``x0 = t_j``.
    """

    j: int
    c0: float
    c1: float
    c2: float
    c3: float
    x0: float

    def value(self, x: float) -> float:
        h = x - self.x0
        return ((self.c3 * h + self.c2) * h + self.c1) * h + self.c0

    def slope(self, x: float) -> float:
        h = x - self.x0
        return (3.0 * self.c3 * h + 2.0 * self.c2) * h + self.c1


@dataclass
class DerivedCoeffs:
    """Coefficients of the m-th derivative in the order ``k - m`` basis."""

    order: int
    first_index: int
    coeffs: np.ndarray


@dataclass
class InversionInfo:
    method: str
    bin_index: int
    iterations: int = 0


# ---------------------------------------------------------------------------
# local, branch-free evaluation (generic over numeric types)
# ---------------------------------------------------------------------------


def basis_window(tw: Sequence, k: int, x, with_lower: bool = False):
    """All ``k`` basis values that are nonzero on the bin of ``x``.

    ``tw`` holds the knots ``t_{j-k+2} .. t_{j+k-1}`` around bin ``j`` and
    ``x`` must lie in ``[t_j, t_{j+1}]``.  Returns ``[B_{j-k+1,k}(x), ...,
    B_{j,k}(x)]``; with ``with_lower`` also the order ``k - 1`` values,
    which come for free from the triangular recurrence.  The recurrence
    divides only by spans of distinct knots, so no zero-division guard is
    needed.
    """
    n = [1.0]
    left = [None] * k   # left[i]  = x - t_{j+1-i}
    right = [None] * k  # right[i] = t_{j+i} - x
    lower = None
    for d in range(1, k):
        if with_lower and d == k - 1:
            lower = list(n)
        left[d] = x - tw[k - 1 - d]
        right[d] = tw[k - 2 + d] - x
        saved = 0.0
        for i in range(d):
            tmp = n[i] / (right[i + 1] + left[d - i])
            n[i] = saved + right[i + 1] * tmp
            saved = left[d - i] * tmp
        n.append(saved)
    if with_lower:
        return n, lower
    return n


def window_derivative_coeffs(aw: Sequence, tw: Sequence, k: int, m: int):
    """Divided-difference coefficients of the m-th derivative on one bin.

    ``aw`` holds ``alpha_{j-k+1..j}`` and ``tw`` the same knots as in
    :func:`basis_window`; the result has ``k - m`` entries aligned with the
    order ``k - m`` basis on the bin.
    """
    cur = list(aw)
    for d in range(1, m + 1):
        nxt = []
        for i in range(k - d):
            span = tw[k - 1 + i] - tw[d + i - 1]
            nxt.append((k - d) * (cur[i + 1] - cur[i]) / span)
        cur = nxt
    return cur


def spline_window_value(aw: Sequence, tw: Sequence, k: int, x):
    basis = basis_window(tw, k, x)
    total = aw[0] * basis[0]
    for i in range(1, k):
        total = total + aw[i] * basis[i]
    return total


def spline_window_value_and_slope(aw: Sequence, tw: Sequence, k: int, x):
    """Transform value and first derivative from one triangle pass."""
    basis, lower = basis_window(tw, k, x, with_lower=True)
    total = aw[0] * basis[0]
    for i in range(1, k):
        total = total + aw[i] * basis[i]
    coeffs = window_derivative_coeffs(aw, tw, k, 1)
    slope = coeffs[0] * lower[0]
    for i in range(1, k - 1):
        slope = slope + coeffs[i] * lower[i]
    return total, slope


def spline_window_derivative(aw: Sequence, tw: Sequence, k: int, x, m: int):
    if m == 0:
        return spline_window_value(aw, tw, k, x)
    coeffs = window_derivative_coeffs(aw, tw, k, m)
    if m == k - 1:
        return coeffs[0]
    kk = k - m
    basis = basis_window(tw[m: 2 * k - 2 - m], kk, x)
    total = coeffs[0] * basis[0]
    for i in range(1, kk):
        total = total + coeffs[i] * basis[i]
    return total


# ---------------------------------------------------------------------------
# reference recursion
# ---------------------------------------------------------------------------


def eval_basis(j: int, k: int, t: KnotVector, x: float) -> float:
    """Basis value ``B_{j,k,t}(x)`` by the textbook two-term recursion.

    Right-continuous at every knot; identically zero outside the support
    ``[t_j, t_{j+k})``.
    """
    if k < 1:
        raise ArgumentError("order must be at least 1")
    t.index_of(j)
    t.index_of(j + k)  # raises when the support is not fully stored
    return _basis_recursive(j, k, t, float(x))


def _basis_recursive(j: int, k: int, t: KnotVector, x: float) -> float:
    tj = t.knot(j)
    tjk = t.knot(j + k)
    if not (tj <= x < tjk):
        return 0.0
    if k == 1:
        return 1.0
    w1 = (x - tj) / (t.knot(j + k - 1) - tj)
    w2 = (x - t.knot(j + 1)) / (tjk - t.knot(j + 1))
    return w1 * _basis_recursive(j, k - 1, t, x) + \
        (1.0 - w2) * _basis_recursive(j + 1, k - 1, t, x)


# ---------------------------------------------------------------------------
# transform evaluation
# ---------------------------------------------------------------------------


def _bin_of(p: SplineParams, x: float) -> int:
    interior = p.knots.interior
    b = int(np.searchsorted(interior, x, side="right")) - 1
    return min(max(b, 0), p.n_bins - 1)


def _check_domain(p: SplineParams, x: float) -> None:
    lo, hi = p.knots.interior[0], p.knots.interior[-1]
    if not (lo <= x <= hi):
        raise SplineDomainError(f"x = {x!r} outside transform domain [{lo}, {hi}]")


def eval_spline(p: SplineParams, x: float) -> float:
    """Transform value ``sum_j alpha_j B_{j,k}(x)`` on the closed domain.

    The right endpoint is evaluated as a left limit so the closed interval
    maps onto the closed interval.
    """
    x = float(x)
    _check_domain(p, x)
    b = _bin_of(p, x)
    return float(spline_window_value(p.alpha_window(b).tolist(),
                                     p.knot_window(b).tolist(), p.k, x))


def transform_value(p: SplineParams, x: float) -> float:
    """Transform on the whole line: the spline inside its domain, the
    identity outside it."""
    x = float(x)
    lo, hi = p.knots.interior[0], p.knots.interior[-1]
    if not (lo <= x <= hi):
        return x
    return eval_spline(p, x)


def derivative_coeffs(p: SplineParams, m: int) -> DerivedCoeffs:
    """Coefficients of ``D^m f`` in the order ``k - m`` basis."""
    if not 0 <= m <= p.k - 2:
        raise ArgumentError(f"derivative order {m} outside 0..{p.k - 2}")
    j0 = p.r - p.k + 1
    cur = p.alpha.copy()
    values = p.knots.values
    for d in range(1, m + 1):
        j0 += 1
        i0 = j0 - (p.r - p.k + 1)
        n = len(cur) - 1
        spans = values[i0 + p.k - d: i0 + p.k - d + n] - values[i0: i0 + n]
        cur = (p.k - d) * np.diff(cur) / spans
    return DerivedCoeffs(order=m, first_index=j0, coeffs=cur)


def eval_derivative(p: SplineParams, x: float, m: int) -> float:
    """m-th derivative of the transform; right limits at interior knots."""
    x = float(x)
    _check_domain(p, x)
    if not 0 <= m <= p.k - 1:
        raise ArgumentError(f"derivative order {m} outside 0..{p.k - 1}")
    return eval_derivative_in_bin(p, x, m, _bin_of(p, x))


def eval_derivative_in_bin(p: SplineParams, x: float, m: int, b: int) -> float:
    """One-sided derivative using the polynomial piece of bin ``b``.

    Evaluating at a knot with the neighboring bin gives the other one-sided
    limit, which is how smoothness across knots is probed.
    """
    if not 0 <= b < p.n_bins:
        raise SplineIndexError(f"bin {b} outside 0..{p.n_bins - 1}")
    return float(spline_window_derivative(
        p.alpha_window(b).tolist(), p.knot_window(b).tolist(), p.k, float(x), m))


def find_bin(p: SplineParams, y: float) -> int:
    """Bin index ``j`` with ``f(t_j) <= y < f(t_{j+1})`` by binary search.

    ``y = 1`` maps to the last bin (closed right endpoint).
    """
    y = float(y)
    if not 0.0 <= y <= 1.0:
        raise SplineDomainError(f"y = {y!r} outside [0, 1]")
    b = int(np.searchsorted(p.f_at_knots, y, side="right")) - 1
    b = min(max(b, 0), p.n_bins - 1)
    return p.r + b


# ---------------------------------------------------------------------------
# analytic inversion
# ---------------------------------------------------------------------------

_FACTORIALS = (1.0, 1.0, 2.0, 6.0)


def to_power_basis(p: SplineParams, j: int) -> CubicSegment:
    """Exact local cubic ``sum_m c_m (x - t_j)^m`` of the transform on bin j."""
    if p.k != 4:
        raise UnsupportedOrderError(f"power basis requires order 4, got {p.k}")
    b = j - p.r
    if not 0 <= b < p.n_bins:
        raise SplineIndexError(f"bin {j} outside {p.r}..{p.s - 1}")
    aw = p.alpha_window(b).tolist()
    tw = p.knot_window(b).tolist()
    x0 = tw[p.k - 2]  # t_j
    c = [spline_window_derivative(aw, tw, p.k, x0, m) / _FACTORIALS[m]
         for m in range(4)]
    return CubicSegment(j=j, c0=c[0], c1=c[1], c2=c[2], c3=c[3], x0=x0)


def _cbrt(v: float) -> float:
    return math.copysign(abs(v) ** (1.0 / 3.0), v)


def _cubic_candidates(c3: float, c2: float, c1: float, c0: float) -> list[float]:
    """Real roots of ``c3 u^3 + c2 u^2 + c1 u + c0`` (c3 normalized away)."""
    b = c2 / c3
    c = c1 / c3
    d = c0 / c3
    p = c - b * b / 3.0
    q = 2.0 * b ** 3 / 27.0 - b * c / 3.0 + d
    shift = -b / 3.0
    disc = 0.25 * q * q + p ** 3 / 27.0
    if disc > 0.0:
        # single real root; pick the large-magnitude cube first to avoid
        # cancellation, recover the partner from the product identity
        root = math.sqrt(disc)
        big = -0.5 * q - math.copysign(root, q)
        s = _cbrt(big)
        if s == 0.0:
            return [shift]
        return [s - p / (3.0 * s) + shift]
    amp = 2.0 * math.sqrt(max(-p / 3.0, 0.0))
    if amp == 0.0:
        return [_cbrt(-q) + shift]
    arg = 3.0 * q / (p * amp)
    theta = math.acos(min(1.0, max(-1.0, arg))) / 3.0
    return [amp * math.cos(theta - 2.0 * math.pi * i / 3.0) + shift
            for i in range(3)]


def solve_monotone_cubic(seg: CubicSegment, y: float, lo: float, hi: float) -> float:
    """Unique preimage of ``y`` under a segment increasing on ``[lo, hi]``.

    Closed-form with stable branch selection, degree fallbacks for vanishing
    leading coefficients, and a single clamped polish step.
    """
    ulo, uhi = lo - seg.x0, hi - seg.x0
    c0 = seg.c0 - y
    scale = max(abs(seg.c0), abs(seg.c1), abs(seg.c2), abs(seg.c3), abs(y))
    tiny = 1e-14 * max(scale, 1.0)
    if abs(seg.c3) <= tiny:
        if abs(seg.c2) <= tiny:
            if seg.c1 == 0.0:
                raise InversionError(seg.j, y, "segment is flat")
            candidates = [-c0 / seg.c1]
        else:
            disc = seg.c1 * seg.c1 - 4.0 * seg.c2 * c0
            disc = max(disc, 0.0)
            root = math.sqrt(disc)
            qq = -0.5 * (seg.c1 + math.copysign(root, seg.c1))
            candidates = []
            if seg.c2 != 0.0:
                candidates.append(qq / seg.c2)
            if qq != 0.0:
                candidates.append(c0 / qq)
            if not candidates:
                candidates = [0.0]
    else:
        candidates = _cubic_candidates(seg.c3, seg.c2, seg.c1, c0)

    def poly(u: float) -> float:
        return ((seg.c3 * u + seg.c2) * u + seg.c1) * u + c0

    def slope(u: float) -> float:
        return (3.0 * seg.c3 * u + 2.0 * seg.c2) * u + seg.c1

    span = uhi - ulo
    pad = 1e-9 * max(1.0, abs(span))
    inside = [u for u in candidates if ulo - pad <= u <= uhi + pad]
    pool = inside if inside else candidates
    u = min(pool, key=lambda v: abs(poly(v)))
    u = min(max(u, ulo), uhi)
    d = slope(u)
    if d > 0.0:
        u = min(max(u - poly(u) / d, ulo), uhi)
    resid = poly(u)
    d = max(slope(u), 1e-300)
    if abs(resid) / d > 1e-6 * max(1.0, abs(span)):
        raise InversionError(seg.j, y, f"residual {resid:.3e} after clamping")
    return u + seg.x0


def invert_spline(p: SplineParams, y: float) -> float:
    """Preimage ``x`` with ``f(x) = y``; analytic for orders 3 and 4."""
    return invert_spline_detailed(p, y)[0]


def invert_spline_detailed(p: SplineParams, y: float) -> tuple[float, InversionInfo]:
    """As :func:`invert_spline`, plus how the root was obtained.

    Orders 3 and 4 use closed-form quadratic/cubic formulas; higher orders
    fall back to safeguarded Newton bisection and say so in the metadata.
    """
    y = float(y)
    j = find_bin(p, y)
    b = j - p.r
    interior = p.knots.interior
    lo, hi = float(interior[b]), float(interior[b + 1])
    if p.k == 4:
        seg = to_power_basis(p, j)
        return solve_monotone_cubic(seg, y, lo, hi), InversionInfo("analytic-cubic", j)
    if p.k == 3:
        aw = p.alpha_window(b).tolist()
        tw = p.knot_window(b).tolist()
        c = [spline_window_derivative(aw, tw, 3, lo, m) / _FACTORIALS[m]
             for m in range(3)]
        seg = CubicSegment(j=j, c0=c[0], c1=c[1], c2=c[2], c3=0.0, x0=lo)
        return solve_monotone_cubic(seg, y, lo, hi), \
            InversionInfo("analytic-quadratic", j)
    x, iters = _newton_bisect(p, b, y, lo, hi)
    return x, InversionInfo("newton-bisection", j, iters)


def solve_monotone_cubic_batch(c0: np.ndarray, c1: np.ndarray, c2: np.ndarray,
                               c3: np.ndarray, y: np.ndarray,
                               hmax: np.ndarray) -> np.ndarray:
    """Vectorized form of :func:`solve_monotone_cubic` in shifted coordinates.

    Solves ``c3 h^3 + c2 h^2 + c1 h + c0 = y`` for the unique ``h`` in
    ``[0, hmax]`` per row, assuming each row is increasing there.  Rows whose
    polished closed-form root still misses are finished with bisection.
    """
    d0 = c0 - y
    scale = np.maximum.reduce([np.abs(c0), np.abs(c1), np.abs(c2), np.abs(c3),
                               np.abs(y), np.ones_like(y)])
    tiny = 1e-14 * scale

    with np.errstate(divide="ignore", invalid="ignore"):
        # linear branch
        h_lin = np.where(c1 != 0.0, -d0 / np.where(c1 != 0.0, c1, 1.0), 0.0)
        # stable quadratic branch
        disc2 = np.maximum(c1 * c1 - 4.0 * c2 * d0, 0.0)
        qq = -0.5 * (c1 + np.copysign(np.sqrt(disc2), c1))
        r1 = np.where(c2 != 0.0, qq / np.where(c2 != 0.0, c2, 1.0), np.inf)
        r2 = np.where(qq != 0.0, d0 / np.where(qq != 0.0, qq, 1.0), np.inf)
        h_quad = _pick_in_range(np.stack([r1, r2], axis=-1), hmax)
        # cubic: depressed form with large-magnitude cube-root branch
        safe_c3 = np.where(np.abs(c3) > tiny, c3, 1.0)
        b = c2 / safe_c3
        c = c1 / safe_c3
        d = d0 / safe_c3
        p = c - b * b / 3.0
        q = 2.0 * b ** 3 / 27.0 - b * c / 3.0 + d
        shift = -b / 3.0
        disc = 0.25 * q * q + p ** 3 / 27.0
        big = -0.5 * q - np.copysign(np.sqrt(np.maximum(disc, 0.0)), q)
        sroot = np.cbrt(big)
        single = np.where(sroot != 0.0,
                          sroot - p / np.where(sroot != 0.0, 3.0 * sroot, 1.0),
                          0.0) + shift
        amp = 2.0 * np.sqrt(np.maximum(-p / 3.0, 0.0))
        denom = np.where(p * amp != 0.0, p * amp, 1.0)
        theta = np.arccos(np.clip(3.0 * q / denom, -1.0, 1.0)) / 3.0
        trig = np.stack([amp * np.cos(theta - 2.0 * np.pi * i / 3.0) + shift
                         for i in range(3)], axis=-1)
        h_trig = _pick_in_range(trig, hmax)
        h_cubic = np.where(disc > 0.0, single,
                           np.where(amp == 0.0, np.cbrt(-q) + shift, h_trig))

    h = np.where(np.abs(c3) > tiny, h_cubic,
                 np.where(np.abs(c2) > tiny, h_quad, h_lin))
    h = np.clip(h, 0.0, hmax)

    def poly(hh):
        return ((c3 * hh + c2) * hh + c1) * hh + d0

    def slope(hh):
        return (3.0 * c3 * hh + 2.0 * c2) * hh + c1

    for _ in range(2):
        dd = slope(h)
        step = np.where(dd > 0.0, poly(h) / np.where(dd > 0.0, dd, 1.0), 0.0)
        h = np.clip(h - step, 0.0, hmax)

    bad = np.abs(poly(h)) > 1e-9 * scale
    if np.any(bad):
        lo = np.zeros(np.count_nonzero(bad))
        hi = np.asarray(np.broadcast_to(hmax, h.shape)[bad], dtype=np.float64).copy()
        cb0, cb1, cb2, cb3 = d0[bad], c1[bad], c2[bad], c3[bad]
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            val = ((cb3 * mid + cb2) * mid + cb1) * mid + cb0
            hi = np.where(val >= 0.0, mid, hi)
            lo = np.where(val < 0.0, mid, lo)
        h[bad] = 0.5 * (lo + hi)
    return h


def _pick_in_range(roots: np.ndarray, hmax: np.ndarray) -> np.ndarray:
    """Per row, the candidate root closest to the interval [0, hmax]."""
    hm = np.broadcast_to(np.asarray(hmax)[..., None], roots.shape)
    mid = 0.5 * hm
    dist = np.where(np.isfinite(roots),
                    np.maximum(np.maximum(-roots, roots - hm), 0.0)
                    + 1e-12 * np.abs(roots - mid), np.inf)
    idx = np.argmin(dist, axis=-1)
    return np.take_along_axis(roots, idx[..., None], axis=-1)[..., 0]


def _newton_bisect(p: SplineParams, b: int, y: float, lo: float, hi: float,
                   tol: float = 1e-13, max_iter: int = 100) -> tuple[float, int]:
    aw = p.alpha_window(b).tolist()
    tw = p.knot_window(b).tolist()
    x = 0.5 * (lo + hi)
    for it in range(max_iter):
        f = spline_window_value(aw, tw, p.k, x) - y
        if f > 0.0:
            hi = x
        else:
            lo = x
        d = spline_window_derivative(aw, tw, p.k, x, 1)
        step = f / d if d > 0.0 else float("inf")
        nxt = x - step
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - x) <= tol * max(1.0, abs(x)):
            return nxt, it + 1
        x = nxt
    return x, max_iter
