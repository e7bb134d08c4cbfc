"""Coupling layers and their composition into an invertible flow.

Direction conventions.  ``transform`` (the forward pass) carries data points
to the uniform base by evaluating each coordinate spline analytically; this
is the density-estimation direction and its log-Jacobian is the sum of
``log f'`` terms.  ``inverse`` carries base samples back to data space by
solving each coordinate's cubic (or quadratic) segment in closed form; this
is the sampling direction.

Coordinates are handled as columns: each is a float array of shape (n,), a
tape variable, or a dual, so the same code runs evaluation, training, and
input-derivative passes.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import network
from .errors import ArgumentError, SmoothnessError, SplineDomainError
from .paramgen import ParamGenConfig, build_circle, build_interval
from .splines import (
    solve_monotone_cubic_batch,
    spline_window_derivative,
    spline_window_value,
    spline_window_value_and_slope,
)

__all__ = ["CouplingLayer", "FlowModel", "build_coupling_flow",
           "load_model", "save_model", "CLIP_EPS"]

# transform inputs are clamped here before bin search or inversion; root
# formulas lose accuracy in the outermost sliver of the domain
CLIP_EPS = 1e-6

_TWO_PI = 2.0 * math.pi


def _encode_conditioner_input(cols, domains):
    parts = []
    for col, dom in zip(cols, domains):
        if dom == "circle":
            wrapped = ad.wrap_unit(col)
            parts.append(ad.cos(_TWO_PI * wrapped))
            parts.append(ad.sin(_TWO_PI * wrapped))
        else:
            parts.append(col)
    return ad.stack_last(parts)


@dataclass
class CouplingLayer:
    """One coupling transform: the first ``n_pass`` coordinates condition
    elementwise spline transforms of the remaining ones."""

    n_pass: int
    mlp: network.MLP
    domains: tuple[str, ...]
    cfgs: tuple[ParamGenConfig, ...]  # one per transformed coordinate

    @property
    def n_dims(self) -> int:
        return self.n_pass + len(self.cfgs)

    @property
    def order(self) -> int:
        return min(cfg.k for cfg in self.cfgs)

    def _coordinate_params(self, cols, params=None):
        """Spline parameter matrices for every transformed coordinate."""
        cond = _encode_conditioner_input(cols[: self.n_pass],
                                         self.domains[: self.n_pass])
        logits = self.mlp.forward(cond, params=params)
        out = []
        offset = 0
        for cfg in self.cfgs:
            dt = ad.take(logits, (Ellipsis, slice(offset, offset + cfg.n_dt_logits)))
            offset += cfg.n_dt_logits
            da = ad.take(logits, (Ellipsis, slice(offset, offset + cfg.n_da_logits)))
            offset += cfg.n_da_logits
            build = build_circle if cfg.domain == "circle" else build_interval
            out.append(build(dt, da, cfg))
        return out

    @staticmethod
    def _prepare_input(col, dom: str):
        if dom == "circle":
            col = ad.wrap_unit(col)
        else:
            vals = np.asarray(ad.value_of(col))
            if np.any(vals < 0.0) or np.any(vals > 1.0):
                raise SplineDomainError("coordinate outside the unit interval")
        return ad.clip(col, CLIP_EPS, 1.0 - CLIP_EPS)

    @staticmethod
    def _bins(knot_values: np.ndarray, x_values: np.ndarray,
              cfg: ParamGenConfig) -> np.ndarray:
        interior = knot_values[..., cfg.k - 1: cfg.k + cfg.n_bins]
        b = np.sum(interior <= x_values[..., None], axis=-1) - 1
        return np.clip(b, 0, cfg.n_bins - 1)

    @staticmethod
    def _windows(alpha, knots, b, cfg: ParamGenConfig):
        aw = [ad.take_rows(alpha, b + i) for i in range(cfg.k)]
        tw = [ad.take_rows(knots, b + 1 + i) for i in range(2 * cfg.k - 2)]
        return aw, tw

    def forward(self, cols, params=None):
        """Analytic pass; returns (columns, log-Jacobian column)."""
        coord_params = self._coordinate_params(cols, params=params)
        out = list(cols[: self.n_pass])
        logdet = 0.0
        for i, cfg in enumerate(self.cfgs):
            col = self._prepare_input(cols[self.n_pass + i], cfg.domain)
            alpha, knots = coord_params[i]
            b = self._bins(ad.value_of(knots), np.asarray(ad.value_of(col)), cfg)
            aw, tw = self._windows(alpha, knots, b, cfg)
            value, slope = spline_window_value_and_slope(aw, tw, cfg.k, col)
            out.append(value)
            logdet = logdet + ad.log(slope)
        return out, logdet

    def inverse(self, cols):
        """Root-finding pass (plain arrays only); returns (columns, logdet)."""
        coord_params = self._coordinate_params(cols)
        out = list(cols[: self.n_pass])
        logdet = 0.0
        for i, cfg in enumerate(self.cfgs):
            y = np.clip(np.asarray(cols[self.n_pass + i], dtype=np.float64),
                        CLIP_EPS, 1.0 - CLIP_EPS)
            alpha, knots = coord_params[i]
            alpha = np.asarray(alpha)
            knots = np.asarray(knots)
            table = self._knot_value_table(alpha, knots, cfg)
            b = np.clip(np.sum(table <= y[..., None], axis=-1) - 1,
                        0, cfg.n_bins - 1)
            aw, tw = self._windows(alpha, knots, b, cfg)
            t_lo = tw[cfg.k - 2]
            hmax = tw[cfg.k - 1] - t_lo
            x = t_lo + self._invert_windows(aw, tw, cfg, y, hmax)
            slope = spline_window_derivative(aw, tw, cfg.k, x, 1)
            logdet = logdet - np.log(slope)
            out.append(x)
        return out, logdet

    @staticmethod
    def _knot_value_table(alpha: np.ndarray, knots: np.ndarray,
                          cfg: ParamGenConfig) -> np.ndarray:
        cols = []
        for i in range(cfg.n_bins + 1):
            b = min(i, cfg.n_bins - 1)
            aw = [alpha[..., b + m] for m in range(cfg.k)]
            tw = [knots[..., b + 1 + m] for m in range(2 * cfg.k - 2)]
            x = knots[..., cfg.k - 1 + i]
            cols.append(spline_window_value(aw, tw, cfg.k, x))
        return np.stack(cols, axis=-1)

    def _invert_windows(self, aw, tw, cfg: ParamGenConfig, y, hmax):
        k = cfg.k
        t_lo = tw[k - 2]
        if k in (3, 4):
            coeffs = [spline_window_derivative(aw, tw, k, t_lo, m) / math.factorial(m)
                      for m in range(k)]
            while len(coeffs) < 4:
                coeffs.append(np.zeros_like(coeffs[0]))
            return solve_monotone_cubic_batch(coeffs[0], coeffs[1], coeffs[2],
                                              coeffs[3], y, hmax)
        # non-analytic orders: safeguarded per-sample Newton bisection
        h = np.empty_like(y)
        for row in range(len(y)):
            awr = [a[row] for a in aw]
            twr = [t[row] for t in tw]
            lo, hi = 0.0, float(hmax[row])
            x = 0.5 * hi
            for _ in range(100):
                f = spline_window_value(awr, twr, k, twr[k - 2] + x) - y[row]
                if f > 0.0:
                    hi = x
                else:
                    lo = x
                d = spline_window_derivative(awr, twr, k, twr[k - 2] + x, 1)
                nxt = x - f / d if d > 0.0 else 0.5 * (lo + hi)
                if not lo < nxt < hi:
                    nxt = 0.5 * (lo + hi)
                if abs(nxt - x) < 1e-14:
                    x = nxt
                    break
                x = nxt
            h[row] = x
        return h


class FlowModel:
    """Stack of coupling layers with inter-layer coordinate permutations and
    a uniform base distribution on the unit hypercube/torus."""

    def __init__(self, layers: list[CouplingLayer], perms: list[tuple[int, ...]],
                 domains: tuple[str, ...], box_lo=None, box_hi=None, seed: int = 0):
        if len(perms) != len(layers):
            raise ArgumentError("need one permutation per layer")
        self.layers = layers
        self.perms = [tuple(p) for p in perms]
        self.domains = tuple(domains)
        self.box_lo = None if box_lo is None else np.asarray(box_lo, dtype=np.float64)
        self.box_hi = None if box_hi is None else np.asarray(box_hi, dtype=np.float64)
        self.seed = int(seed)

    @property
    def n_dims(self) -> int:
        return len(self.domains)

    @property
    def order(self) -> int:
        return min(layer.order for layer in self.layers)

    # -- parameters ---------------------------------------------------------

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.mlp.parameters().items():
                out[f"layer{i}.{name}"] = arr
        return out

    def set_parameters(self, params: dict[str, np.ndarray]) -> None:
        for i, layer in enumerate(self.layers):
            sub = {name.split(".", 1)[1]: arr for name, arr in params.items()
                   if name.startswith(f"layer{i}.")}
            layer.mlp.set_parameters(sub)

    def _layer_params(self, params):
        if params is None:
            return [None] * len(self.layers)
        return [{name.split(".", 1)[1]: v for name, v in params.items()
                 if name.startswith(f"layer{i}.")} for i in range(len(self.layers))]

    # -- core passes ----------------------------------------------------------

    def transform_cols(self, cols, params=None):
        """Data-to-base pass over coordinate columns; returns (cols, logdet)."""
        per_layer = self._layer_params(params)
        logdet = 0.0
        for layer, perm, lp in zip(self.layers, self.perms, per_layer):
            cols, ld = layer.forward(cols, params=lp)
            cols = [cols[j] for j in perm]
            logdet = logdet + ld
        return cols, logdet

    def inverse_cols(self, cols):
        logdet = 0.0
        for layer, perm in zip(reversed(self.layers), reversed(self.perms)):
            inv = _inverse_perm(perm)
            cols = [cols[j] for j in inv]
            cols, ld = layer.inverse(cols)
            logdet = logdet + ld
        return cols, logdet

    # -- public API -----------------------------------------------------------

    def _validate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_dims:
            raise ArgumentError(f"expected {self.n_dims} coordinates")
        for i, dom in enumerate(self.domains):
            if dom == "interval" and (np.any(x[:, i] < 0.0) or np.any(x[:, i] > 1.0)):
                raise SplineDomainError(
                    f"coordinate {i} outside the unit interval")
        return x

    def transform(self, x: np.ndarray):
        """Map data points to base points; returns (u, logdet per point)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xb = self._validate(x if not single else x[None, :])
        cols = [xb[:, i] for i in range(self.n_dims)]
        cols, logdet = self.transform_cols(cols)
        u = np.stack([np.asarray(c) for c in cols], axis=-1)
        logdet = np.asarray(logdet)
        return (u[0], float(logdet[0])) if single else (u, logdet)

    def inverse_transform(self, u: np.ndarray):
        u = np.asarray(u, dtype=np.float64)
        single = u.ndim == 1
        ub = u[None, :] if single else u
        cols = [ub[:, i] for i in range(self.n_dims)]
        cols, logdet = self.inverse_cols(cols)
        x = np.stack(cols, axis=-1)
        return (x[0], float(logdet[0])) if single else (x, logdet)

    def log_density(self, x: np.ndarray):
        """Log model density on the flow domain (uniform base contributes 0)."""
        _, logdet = self.transform(x)
        return logdet

    def log_density_cols(self, cols, params=None):
        _, logdet = self.transform_cols(cols, params=params)
        return logdet

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        u = rng.random((int(n), self.n_dims))
        x, _ = self.inverse_transform(u)
        return x

    def require_twice_differentiable(self) -> None:
        if self.order < 4:
            raise SmoothnessError(
                f"force evaluation needs order >= 4 transforms, got {self.order}")

    def force_cols(self, cols, params=None):
        """Input gradient of the log density, one dual pass per coordinate."""
        self.require_twice_differentiable()
        out = []
        for i in range(self.n_dims):
            seeded = []
            for j, c in enumerate(cols):
                shape = np.shape(ad.value_of(c))
                tangent = np.ones(shape) if j == i else np.zeros(shape)
                seeded.append(ad.Dual(c, tangent if shape else float(j == i)))
            logdet = self.log_density_cols(seeded, params=params)
            out.append(ad.Dual._coerce(logdet).du)
        return out

    def force(self, x: np.ndarray) -> np.ndarray:
        """Gradient of log density at interior points; finite everywhere."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xb = self._validate(x if not single else x[None, :])
        cols = [xb[:, i] for i in range(self.n_dims)]
        force_cols = self.force_cols(cols)
        f = np.stack([np.asarray(c) for c in force_cols], axis=-1)
        return f[0] if single else f


def _inverse_perm(perm):
    inv = [0] * len(perm)
    for i, p in enumerate(perm):
        inv[p] = i
    return tuple(inv)


# ---------------------------------------------------------------------------
# construction and (de)serialization
# ---------------------------------------------------------------------------


def build_coupling_flow(n_dims: int = 2, n_layers: int = 4, bins: int = 32,
                        order: int = 4, hidden: tuple[int, ...] = (100, 100),
                        domains: tuple[str, ...] | None = None,
                        activation: str = "sin", eps: float = 1e-4,
                        seed: int = 0, box_lo=None, box_hi=None) -> FlowModel:
    """Alternating coupling flow; every layer transforms the trailing block
    and the coordinate order is reversed between layers."""
    if domains is None:
        domains = ("interval",) * n_dims
    if len(domains) != n_dims:
        raise ArgumentError("need one domain tag per coordinate")
    n_pass = max(1, n_dims // 2)
    perm = tuple(reversed(range(n_dims)))
    layers = []
    perms = []
    current = tuple(domains)
    for i in range(n_layers):
        transformed = current[n_pass:]
        cfgs = tuple(ParamGenConfig(k=order, r=0, s=bins, eps_t=eps,
                                    eps_alpha=eps, domain=d) for d in transformed)
        n_in = sum(2 if d == "circle" else 1 for d in current[:n_pass])
        n_out = sum(cfg.n_logits for cfg in cfgs)
        mlp = network.MLP(n_in, hidden, n_out, activation=activation,
                          seed=seed * 1000 + i)
        layers.append(CouplingLayer(n_pass=n_pass, mlp=mlp,
                                    domains=current, cfgs=cfgs))
        perms.append(perm)
        current = tuple(current[j] for j in perm)
    return FlowModel(layers, perms, domains, box_lo=box_lo, box_hi=box_hi,
                     seed=seed)


def save_model(model: FlowModel, directory: str) -> None:
    """Write ``manifest.json`` plus the parameter bundle into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    layer0 = model.layers[0]
    manifest = {
        "n_dims": model.n_dims,
        "n_layers": len(model.layers),
        "n_pass": layer0.n_pass,
        "bins": layer0.cfgs[0].n_bins,
        "order": layer0.cfgs[0].k,
        "eps": layer0.cfgs[0].eps_t,
        "hidden": list(model.layers[0].mlp.hidden),
        "activation": model.layers[0].mlp.activation,
        "domains": list(model.domains),
        "seed": model.seed,
        "box_lo": None if model.box_lo is None else model.box_lo.tolist(),
        "box_hi": None if model.box_hi is None else model.box_hi.tolist(),
    }
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    network.save_arrays(os.path.join(directory, "params.bin"), model.parameters())


def load_model(directory: str) -> FlowModel:
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    model = build_coupling_flow(
        n_dims=manifest["n_dims"], n_layers=manifest["n_layers"],
        bins=manifest["bins"], order=manifest["order"],
        hidden=tuple(manifest["hidden"]), domains=tuple(manifest["domains"]),
        activation=manifest["activation"], eps=manifest["eps"],
        seed=manifest["seed"],
        box_lo=manifest["box_lo"], box_hi=manifest["box_hi"])
    model.set_parameters(network.load_arrays(os.path.join(directory,
                                                          "params.bin")))
    return model
