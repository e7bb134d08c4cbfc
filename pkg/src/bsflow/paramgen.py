"""Map unconstrained conditioner outputs to valid monotone spline parameters.

Two constructions share one code path: the plain unit-interval transform
(softmax spacings with a positive floor, cumulative sums anchored so the
domain is exactly [0, 1], and an affine rescale making the transform
surjective) and the unit-circle transform, which additionally ties the
trailing spacings and coefficients to the leading ones so that the stored
arrays satisfy ``t_{s+j} = 1 + t_{r+j}`` and ``alpha_{s-i} = 1 + alpha_{r-i}``
bit-exactly.  Those equalities make all derivatives up to order k-2 agree at
the two ends of the interval, which is what a smooth circle map needs.

Everything here is written against the generic math front-end, so logits may
be plain arrays (any batch shape), tape variables, or duals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ArgumentError
from .splines import KnotVector, SplineParams, spline_window_value

__all__ = [
    "RawLogits",
    "ParamGenConfig",
    "BoundsReport",
    "generate_interval",
    "generate_circle",
    "build_interval",
    "build_circle",
    "check_sufficient_condition",
    "implied_bounds",
]


@dataclass
class RawLogits:
    """Unconstrained knot-spacing and coefficient-increment logits."""

    dt_logits: np.ndarray
    da_logits: np.ndarray

    def __post_init__(self):
        self.dt_logits = np.asarray(self.dt_logits, dtype=np.float64)
        self.da_logits = np.asarray(self.da_logits, dtype=np.float64)
        if not (np.all(np.isfinite(self.dt_logits))
                and np.all(np.isfinite(self.da_logits))):
            raise ArgumentError("logits must be finite")


@dataclass(frozen=True)
class ParamGenConfig:
    """Shape of one transform: order, bin range, floors, and domain kind."""

    k: int = 4
    r: int = 0
    s: int = 32
    eps_t: float = 1e-4
    eps_alpha: float = 1e-4
    domain: str = "interval"

    def __post_init__(self):
        if self.domain not in ("interval", "circle"):
            raise ArgumentError(f"unknown domain {self.domain!r}")
        if self.k < 3:
            raise ArgumentError("order must be at least 3")
        if self.s < self.r + self.k:
            raise ArgumentError("need at least k bins (s >= r + k)")
        nb = self.s - self.r
        if self.domain == "circle" and nb < 2 * self.k - 4:
            raise ArgumentError("circle domain needs at least 2k - 4 bins")
        if not 0.0 < self.eps_t * (nb + 2 * self.k - 4) < 1.0:
            raise ArgumentError("eps_t too large for the spacing floor")
        if not 0.0 < self.eps_alpha * (nb + self.k - 2) < 1.0:
            raise ArgumentError("eps_alpha too large for the increment floor")

    @property
    def n_bins(self) -> int:
        return self.s - self.r

    @property
    def n_dt_logits(self) -> int:
        if self.domain == "circle":
            return self.n_bins
        return self.n_bins + 2 * self.k - 4

    @property
    def n_da_logits(self) -> int:
        if self.domain == "circle":
            return self.n_bins
        return self.n_bins + self.k - 2

    @property
    def n_logits(self) -> int:
        return self.n_dt_logits + self.n_da_logits


@dataclass(frozen=True)
class BoundsReport:
    """Outcome of the derivative-bound certificate check."""

    passed: bool
    violations: tuple[int, ...]


def _window_cols(mat, start: int, count: int):
    return [ad.take(mat, (Ellipsis, slice(start + i, start + i + 1)))
            for i in range(count)]


def _knots_from_spacings(dt, cfg: ParamGenConfig):
    """Anchored cumulative sums: returns t_{r-k+2} .. t_{s+k-2} with
    t_r = 0 and t_s = 1 exactly."""
    k, nb = cfg.k, cfg.n_bins
    partial = ad.cumsum(dt)
    sums = ad.concat_last([0.0, partial])
    origin = ad.take(sums, (Ellipsis, slice(k - 2, k - 1)))
    total = ad.take(sums, (Ellipsis, slice(nb + k - 2, nb + k - 1))) - origin
    return (sums - origin) / total


def build_interval(dt_logits, da_logits, cfg: ParamGenConfig):
    """Generic interval construction; returns (alpha, knots) on the last axis."""
    k, nb = cfg.k, cfg.n_bins
    mt = nb + 2 * k - 4
    ma = nb + k - 2

    dt = ad.softmax(dt_logits)
    dt = cfg.eps_t + (1.0 - mt * cfg.eps_t) * dt
    tpre = _knots_from_spacings(dt, cfg)
    first = ad.take(tpre, (Ellipsis, slice(0, 1)))
    second = ad.take(tpre, (Ellipsis, slice(1, 2)))
    last = ad.take(tpre, (Ellipsis, slice(mt, mt + 1)))
    penult = ad.take(tpre, (Ellipsis, slice(mt - 1, mt)))
    knots = ad.concat_last([2.0 * first - second, tpre, 2.0 * last - penult])

    da = ad.softmax(da_logits)
    da = cfg.eps_alpha + (1.0 - ma * cfg.eps_alpha) * da
    interior = ad.take(ad.cumsum(da), (Ellipsis, slice(0, ma - 1)))
    atil = ad.concat_last([0.0, interior, 1.0])

    tw0 = _window_cols(knots, 1, 2 * k - 2)
    aw0 = _window_cols(atil, 0, k)
    f_lo = spline_window_value(aw0, tw0, k, 0.0)
    tw1 = _window_cols(knots, nb, 2 * k - 2)
    aw1 = _window_cols(atil, nb - 1, k)
    f_hi = spline_window_value(aw1, tw1, k, 1.0)
    alpha = (atil - f_lo) / (f_hi - f_lo)
    return alpha, knots


def _tied_increments(free, n_free: int, total: int):
    cols = [ad.take(free, (Ellipsis, slice(i, i + 1))) for i in range(n_free)]
    for m in range(n_free, total):
        cols.append(cols[m - n_free])
    return ad.concat_last(cols)


def build_circle(dt_logits, da_logits, cfg: ParamGenConfig):
    """Generic circle construction with bit-exact wraparound tying."""
    k, nb = cfg.k, cfg.n_bins
    mt = nb + 2 * k - 4
    ma = nb + k - 2

    dtf = ad.softmax(dt_logits)
    dtf = cfg.eps_t + (1.0 - mt * cfg.eps_t) * dtf
    dt = _tied_increments(dtf, nb, mt)
    tpre = _knots_from_spacings(dt, cfg)
    head = ad.take(tpre, (Ellipsis, slice(0, nb)))
    wrap = ad.take(tpre, (Ellipsis, slice(0, 2 * k - 2)))
    seam = ad.take(tpre, (Ellipsis, slice(nb - 1, nb)))
    knots = ad.concat_last([seam - 1.0, head, wrap + 1.0])

    daf = ad.softmax(da_logits)
    daf = cfg.eps_alpha + (1.0 - ma * cfg.eps_alpha) * daf
    da = _tied_increments(daf, nb, ma)
    window = ad.take(da, (Ellipsis, slice(k - 2, ma)))
    da = da / ad.sum_last(window, keepdims=True)
    partial = ad.take(ad.cumsum(da), (Ellipsis, slice(0, nb - 1)))
    rel = ad.concat_last([0.0, partial])

    tw0 = _window_cols(knots, 1, 2 * k - 2)
    aw0 = _window_cols(rel, 0, k)
    shift = spline_window_value(aw0, tw0, k, 0.0)
    left = rel - shift
    tail = ad.take(left, (Ellipsis, slice(0, k - 1)))
    alpha = ad.concat_last([left, tail + 1.0])
    return alpha, knots


def _generate(raw: RawLogits, cfg: ParamGenConfig) -> SplineParams:
    if len(raw.dt_logits) != cfg.n_dt_logits:
        raise ArgumentError(
            f"expected {cfg.n_dt_logits} spacing logits, got {len(raw.dt_logits)}")
    if len(raw.da_logits) != cfg.n_da_logits:
        raise ArgumentError(
            f"expected {cfg.n_da_logits} increment logits, got {len(raw.da_logits)}")
    build = build_circle if cfg.domain == "circle" else build_interval
    alpha, knots = build(raw.dt_logits, raw.da_logits, cfg)
    kv = KnotVector(values=np.asarray(knots), r=cfg.r, s=cfg.s, k=cfg.k)
    return SplineParams(kv, np.asarray(alpha))


def generate_interval(raw: RawLogits, cfg: ParamGenConfig) -> SplineParams:
    """Valid monotone unit-interval parameters from unconstrained logits."""
    if cfg.domain != "interval":
        raise ArgumentError("config domain must be 'interval'")
    return _generate(raw, cfg)


def generate_circle(raw: RawLogits, cfg: ParamGenConfig) -> SplineParams:
    """Unit-circle parameters whose stored wraparound ties hold exactly."""
    if cfg.domain != "circle":
        raise ArgumentError("config domain must be 'circle'")
    return _generate(raw, cfg)


# ---------------------------------------------------------------------------
# derivative-bound certificate
# ---------------------------------------------------------------------------


def _increment_quotients(p: SplineParams) -> np.ndarray:
    """Quotients (alpha_j - alpha_{j-1}) / (t_{j+k-1} - t_j), j = r-k+2..s-1."""
    k = p.k
    count = len(p.alpha) - 1
    values = p.knots.values
    spans = values[k: k + count] - values[1: 1 + count]
    return np.diff(p.alpha) / spans


def check_sufficient_condition(p: SplineParams, l: float, u: float) -> BoundsReport:
    """Certify l < f' < u from the coefficient/knot quotients alone.

    A pass guarantees the slope bounds hold everywhere on the domain; the
    report lists the offending coefficient indices otherwise.
    """
    if not (u > 1.0 > l > 0.0):
        raise ArgumentError("bounds must satisfy u > 1 > l > 0")
    q = _increment_quotients(p)
    lo = l / (p.k - 1)
    hi = u / (p.k - 1)
    bad = np.nonzero(~((q > lo) & (q < hi)))[0]
    first_j = p.r - p.k + 2
    return BoundsReport(passed=bad.size == 0,
                        violations=tuple(int(j) + first_j for j in bad))


def implied_bounds(p: SplineParams) -> tuple[float, float]:
    """Tightest (l, u) for which the quotient certificate passes."""
    q = _increment_quotients(p)
    return float((p.k - 1) * np.min(q)), float((p.k - 1) * np.max(q))
