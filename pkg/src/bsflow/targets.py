"""Analytic toy targets and Metropolis-Hastings dataset generation.

Two densities are provided.  ``rings`` is a mixture of four concentric
Gaussian-profile rings in the plane; ``periodic_rings`` replaces the radius
by the level of ``C(x) = sqrt(cos(x1^2) + cos(x2^2) + 2)``.  Both expose the
unnormalized log density, the energy (its negation), and the exact force
(gradient of the log density).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, SingularPointError

__all__ = ["ToyTarget", "Dataset", "BoxMap", "energy", "unnorm_logdensity",
           "target_force", "mh_generate", "metropolis_decision",
           "save_dataset", "load_dataset", "MARGIN"]

# affine data-to-flow mapping keeps mass away from the clipped domain edges
MARGIN = 0.05


@dataclass(frozen=True)
class ToyTarget:
    """Analytic unnormalized density with exact forces."""

    kind: str
    amplitudes: tuple[float, float, float, float] = (1.0, 0.8, 0.6, 0.4)
    radii: tuple[float, float, float, float] = (1.0, 2.0, 3.0, 4.0)
    width: float = 0.06

    def __post_init__(self):
        if self.kind not in ("rings", "periodic_rings"):
            raise ArgumentError(f"unknown target kind {self.kind!r}")
        if self.width <= 0.0:
            raise ArgumentError("width must be positive")
        if any(a <= 0.0 for a in self.amplitudes):
            raise ArgumentError("amplitudes must be positive")

    @staticmethod
    def rings() -> "ToyTarget":
        return ToyTarget(kind="rings")

    @staticmethod
    def periodic_rings() -> "ToyTarget":
        # level sets of C lie in [0, 2]; radii are chosen inside that range
        return ToyTarget(kind="periodic_rings", radii=(0.25, 0.5, 0.75, 1.0),
                         width=0.05)

    @property
    def n_dims(self) -> int:
        return 2

    def descriptor(self) -> dict:
        return {"kind": self.kind, "amplitudes": list(self.amplitudes),
                "radii": list(self.radii), "width": self.width}

    @staticmethod
    def from_descriptor(d: dict) -> "ToyTarget":
        return ToyTarget(kind=d["kind"], amplitudes=tuple(d["amplitudes"]),
                         radii=tuple(d["radii"]), width=float(d["width"]))


def _mixture_logsumexp(level: np.ndarray, target: ToyTarget):
    """Log-sum-exp over the four ring terms at mixture level ``level``.

    Returns the log density and the softmax weights of the terms, which the
    force computation reuses.
    """
    a = np.log(np.asarray(target.amplitudes))
    r = np.asarray(target.radii)
    terms = a - (level[..., None] - r) ** 2 / (2.0 * target.width)
    peak = np.max(terms, axis=-1, keepdims=True)
    w = np.exp(terms - peak)
    total = np.sum(w, axis=-1, keepdims=True)
    logp = peak[..., 0] + np.log(total[..., 0])
    return logp, w / total


def _level(target: ToyTarget, x: np.ndarray) -> np.ndarray:
    if target.kind == "rings":
        return np.sqrt(np.sum(x * x, axis=-1))
    return np.sqrt(np.cos(x[..., 0] ** 2) + np.cos(x[..., 1] ** 2) + 2.0)


def unnorm_logdensity(target: ToyTarget, x: np.ndarray) -> np.ndarray:
    """Log of the unnormalized density; stable for points far from support."""
    x = np.asarray(x, dtype=np.float64)
    logp, _ = _mixture_logsumexp(_level(target, x), target)
    return logp


def energy(target: ToyTarget, x: np.ndarray) -> np.ndarray:
    return -unnorm_logdensity(target, x)


def target_force(target: ToyTarget, x: np.ndarray) -> np.ndarray:
    """Exact gradient of the unnormalized log density."""
    x = np.asarray(x, dtype=np.float64)
    level = _level(target, x)
    _, w = _mixture_logsumexp(level, target)
    r = np.asarray(target.radii)
    dlog_dlevel = np.sum(w * (-(level[..., None] - r) / target.width), axis=-1)
    if target.kind == "rings":
        if np.any(level < 1e-12):
            raise SingularPointError("force undefined at the origin")
        grad_level = x / level[..., None]
    else:
        # d level / d x_i = -x_i sin(x_i^2) / level
        grad_level = -x * np.sin(x * x) / level[..., None]
    return dlog_dlevel[..., None] * grad_level


# ---------------------------------------------------------------------------
# dataset generation
# ---------------------------------------------------------------------------


@dataclass
class BoxMap:
    """Affine map between a data bounding box and the flow domain.

    Data is sent into ``[MARGIN, 1 - MARGIN]`` per coordinate.
    """

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        if np.any(self.hi <= self.lo):
            raise ArgumentError("bounding box must have positive extent")

    @property
    def scale(self) -> np.ndarray:
        """d(flow coordinate) / d(data coordinate), per dimension."""
        return (1.0 - 2.0 * MARGIN) / (self.hi - self.lo)

    def to_unit(self, x: np.ndarray) -> np.ndarray:
        return MARGIN + (np.asarray(x) - self.lo) * self.scale

    def from_unit(self, z: np.ndarray) -> np.ndarray:
        return self.lo + (np.asarray(z) - MARGIN) / self.scale

    def pullback_force(self, target: ToyTarget, z: np.ndarray) -> np.ndarray:
        """Target force expressed in flow coordinates at flow points ``z``."""
        return target_force(target, self.from_unit(z)) / self.scale

    def pullback_logdensity(self, target: ToyTarget, z: np.ndarray) -> np.ndarray:
        """Unnormalized target log density in flow coordinates (constant
        Jacobian omitted; only differences are meaningful)."""
        return unnorm_logdensity(target, self.from_unit(z))


@dataclass
class Dataset:
    positions: np.ndarray
    box: BoxMap
    seed: int
    target: ToyTarget
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def n_dims(self) -> int:
        return self.positions.shape[1]

    @property
    def domains(self) -> tuple[str, ...]:
        kind = "circle" if self.target.kind == "periodic_rings" else "interval"
        return (kind,) * self.n_dims

    def unit_positions(self) -> np.ndarray:
        return self.box.to_unit(self.positions)


def metropolis_decision(log_ratio: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Accept mask for proposals given log density ratios and uniform draws."""
    return np.log(np.maximum(uniforms, 1e-300)) < log_ratio


def mh_generate(target: ToyTarget, chains: int = 10_000, burn_in: int = 1_000,
                keep_every: int = 1, keeps: int = 10, step: float = 0.1,
                seed: int = 0, init_width: float = 5.0,
                collect_stats: bool = False):
    """Parallel-chain random-walk Metropolis sampler.

    ``chains`` walkers burn in for ``burn_in`` steps with isotropic Gaussian
    proposals of scale ``step``; afterwards every ``keep_every``-th state is
    kept ``keeps`` times per chain, giving ``chains * keeps`` samples.  The
    whole run is a deterministic function of ``seed``.
    """
    if min(chains, burn_in, keeps, keep_every) <= 0:
        raise ArgumentError("counts must be positive")
    rng = np.random.default_rng(seed)
    d = target.n_dims
    state = rng.uniform(-init_width, init_width, size=(chains, d))
    logp = unnorm_logdensity(target, state)
    accepted = 0
    proposed = 0
    records = [] if collect_stats else None

    def sweep(n_steps: int):
        nonlocal state, logp, accepted, proposed
        for _ in range(n_steps):
            prop = state + step * rng.standard_normal(state.shape)
            logp_prop = unnorm_logdensity(target, prop)
            accept = metropolis_decision(logp_prop - logp, rng.random(chains))
            if records is not None:
                records.append((logp_prop - logp, accept))
            state = np.where(accept[:, None], prop, state)
            logp = np.where(accept, logp_prop, logp)
            accepted += int(np.count_nonzero(accept))
            proposed += chains

    sweep(burn_in)
    kept = []
    for _ in range(keeps):
        sweep(keep_every)
        kept.append(state.copy())
    positions = np.concatenate(kept, axis=0)
    box = BoxMap(lo=positions.min(axis=0), hi=positions.max(axis=0))
    meta = {
        "chains": chains, "burn_in": burn_in, "keep_every": keep_every,
        "keeps": keeps, "step": step,
        "acceptance_rate": accepted / max(proposed, 1),
    }
    ds = Dataset(positions=positions, box=box, seed=seed, target=target,
                 meta=meta)
    if collect_stats:
        return ds, records
    return ds


# ---------------------------------------------------------------------------
# dataset file format: one JSON header line + rows of little-endian float64
# ---------------------------------------------------------------------------


def save_dataset(ds: Dataset, path: str) -> None:
    import json

    header = {
        "format": "bsflow-dataset", "version": 1,
        "n": int(ds.n), "n_dims": int(ds.n_dims),
        "box_lo": ds.box.lo.tolist(), "box_hi": ds.box.hi.tolist(),
        "seed": int(ds.seed), "target": ds.target.descriptor(),
        "meta": {k: (float(v) if isinstance(v, float) else v)
                 for k, v in ds.meta.items()},
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(ds.positions, dtype="<f8").tobytes())


def load_dataset(path: str) -> Dataset:
    import json

    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("ascii"))
        if header.get("format") != "bsflow-dataset":
            raise ArgumentError(f"{path}: not a dataset file")
        n, d = header["n"], header["n_dims"]
        raw = fh.read(n * d * 8)
    positions = np.frombuffer(raw, dtype="<f8").reshape(n, d).copy()
    return Dataset(
        positions=positions,
        box=BoxMap(lo=np.array(header["box_lo"]), hi=np.array(header["box_hi"])),
        seed=int(header["seed"]),
        target=ToyTarget.from_descriptor(header["target"]),
        meta=header.get("meta", {}),
    )


def dataset_to_csv(ds: Dataset, path: str) -> None:
    cols = ",".join(f"x{i}" for i in range(ds.n_dims))
    with open(path, "w") as fh:
        fh.write(cols + "\n")
        buf = io.StringIO()
        np.savetxt(buf, ds.positions, delimiter=",", fmt="%.17g")
        fh.write(buf.getvalue())
