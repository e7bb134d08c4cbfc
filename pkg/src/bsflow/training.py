"""Losses, Adam, the training loop, and evaluation metrics.

All losses operate in flow coordinates (the unit cube); data-space targets
are pulled through the dataset's bounding-box map so that an untrained
identity flow scores a test NLL of exactly zero nats against the uniform
base.  The combined objective is the convex mix
``(1 - lambda_fm) * nll + lambda_fm * fm`` and the force-matching term is
only ever evaluated when ``lambda_fm > 0``, because it needs nested input
derivatives.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import network
from .errors import ArgumentError, ConfigError, SmoothnessError, TrainingError
from .flow import FlowModel, save_model
from .targets import BoxMap, Dataset, ToyTarget

__all__ = ["TrainConfig", "Metrics", "AdamState", "PROFILES", "load_config",
           "nll_loss", "fm_loss", "combined_loss", "adam_step", "train",
           "evaluate", "load_checkpoint", "write_metrics_csv",
           "read_metrics_csv"]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-4
    batch_size: int = 1000
    epochs: int = 8000
    lambda_fm: float = 0.001
    lr_decay: float = 1.0
    seed: int = 0
    train_fraction: float = 0.9
    n_layers: int = 4
    bins: int = 32
    order: int = 4
    hidden: tuple[int, ...] = (100, 100)
    activation: str = "sin"
    eps: float = 1e-4
    checkpoint_every: int = 50
    eval_samples: int = 2000

    def __post_init__(self):
        if not 0.0 <= self.lambda_fm <= 1.0:
            raise ArgumentError("lambda_fm must lie in [0, 1]")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ArgumentError("train_fraction must lie in (0, 1]")


PROFILES = {
    # full-scale toy run
    "full": TrainConfig(epochs=8000),
    # small enough to finish on a workstation while exercising everything
    "desk": TrainConfig(epochs=200, hidden=(64, 64)),
}


@dataclass
class Metrics:
    test_nll: float
    fme: float
    rkld: float
    trace: list[dict] | None = None


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    def to_arrays(self) -> dict[str, np.ndarray]:
        out = {"adam.t": np.array([float(self.t)])}
        for name, arr in self.m.items():
            out[f"adam.m.{name}"] = arr
        for name, arr in self.v.items():
            out[f"adam.v.{name}"] = arr
        return out

    @staticmethod
    def from_arrays(arrays: dict[str, np.ndarray]) -> "AdamState":
        state = AdamState()
        state.t = int(arrays["adam.t"][0])
        for name, arr in arrays.items():
            if name.startswith("adam.m."):
                state.m[name[len("adam.m."):]] = arr.copy()
            elif name.startswith("adam.v."):
                state.v[name[len("adam.v."):]] = arr.copy()
        return state


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def _batch_cols(batch: np.ndarray):
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[0] == 0:
        raise ArgumentError("batch must be a nonempty (n, d) array")
    return [batch[:, i] for i in range(batch.shape[1])]


def nll_loss(model: FlowModel, batch: np.ndarray, params=None):
    """Mean negative log density of the batch under the model."""
    logp = model.log_density_cols(_batch_cols(batch), params=params)
    return -ad.mean_all(logp)


def _pullback_forces(model: FlowModel, batch: np.ndarray, target) -> np.ndarray:
    if isinstance(target, np.ndarray):
        return target
    if model.box_lo is None:
        raise ArgumentError("model carries no bounding box for the target")
    box = BoxMap(model.box_lo, model.box_hi)
    return box.pullback_force(target, batch)


def fm_loss(model: FlowModel, batch: np.ndarray, target, params=None):
    """Mean squared force-matching error.

    ``target`` is a toy target (pulled into flow coordinates through the
    model's bounding box) or a precomputed (n, d) force array.  Requires an
    at least twice continuously differentiable flow.
    """
    model.require_twice_differentiable()
    wanted = _pullback_forces(model, batch, target)
    cols = _batch_cols(batch)
    force_cols = model.force_cols(cols, params=params)
    total = 0.0
    for i, fc in enumerate(force_cols):
        diff = fc - wanted[:, i]
        total = total + ad.mean_all(diff * diff)
    return total


def combined_loss(model: FlowModel, batch: np.ndarray, target,
                  lambda_fm: float, params=None):
    """Convex combination of the two losses; skips nested differentiation
    entirely when the mixing weight is zero."""
    if lambda_fm == 0.0:
        return nll_loss(model, batch, params=params)
    if lambda_fm == 1.0:
        return fm_loss(model, batch, target, params=params)
    return (1.0 - lambda_fm) * nll_loss(model, batch, params=params) + \
        lambda_fm * fm_loss(model, batch, target, params=params)


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

_BETA1, _BETA2, _ADAM_EPS = 0.9, 0.999, 1e-8


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float):
    """Standard first/second-moment update with bias correction, in place."""
    state.t += 1
    t = state.t
    for name, g in grads.items():
        g = np.asarray(g, dtype=np.float64)
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        m = state.m[name]
        v = state.v[name]
        m *= _BETA1
        m += (1.0 - _BETA1) * g
        v *= _BETA2
        v += (1.0 - _BETA2) * g * g
        m_hat = m / (1.0 - _BETA1 ** t)
        v_hat = v / (1.0 - _BETA2 ** t)
        params[name] -= lr * m_hat / (np.sqrt(v_hat) + _ADAM_EPS)
    return params, state


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------


def _split(dataset: Dataset, cfg: TrainConfig):
    unit = dataset.unit_positions()
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(dataset.n)
    n_train = int(round(cfg.train_fraction * dataset.n))
    return unit[order[:n_train]], unit[order[n_train:]]


def _param_norm(params: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(a * a)) for a in params.values())))


def train(model: FlowModel, dataset: Dataset, cfg: TrainConfig,
          out_dir: str | None = None, use_fm: bool = False,
          start_epoch: int = 0, adam_state: AdamState | None = None,
          prior_trace: list[dict] | None = None, verbose: bool = False):
    """Seeded mini-batch training with per-epoch held-out evaluation.

    Epoch shuffles are derived from ``(seed, epoch)`` so a run resumed from
    a checkpoint continues exactly as the uninterrupted run would have.
    Checkpoints (parameters plus optimizer state) land in ``out_dir``.
    """
    lam = cfg.lambda_fm if use_fm else 0.0
    train_set, test_set = _split(dataset, cfg)
    params = model.parameters()
    state = adam_state if adam_state is not None else AdamState()
    trace: list[dict] = list(prior_trace) if prior_trace else []
    target = dataset.target
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    for epoch in range(start_epoch, cfg.epochs):
        lr = cfg.learning_rate * cfg.lr_decay ** epoch
        rng = np.random.default_rng([cfg.seed, epoch])
        order = rng.permutation(len(train_set))
        epoch_loss = 0.0
        n_batches = 0
        for b0 in range(0, len(train_set), cfg.batch_size):
            batch = train_set[order[b0: b0 + cfg.batch_size]]
            tape = ad.Tape()
            leaf = {name: tape.leaf(arr) for name, arr in params.items()}
            loss = combined_loss(model, batch, target, lam, params=leaf)
            loss_value = float(ad.value_of(loss))
            if not np.isfinite(loss_value):
                raise TrainingError("non-finite loss", epoch, n_batches,
                                    _param_norm(params))
            grads = tape.gradient(loss, list(leaf.values()))
            grad_map = dict(zip(leaf.keys(), grads))
            for g in grads:
                if not np.all(np.isfinite(g)):
                    raise TrainingError("non-finite gradient", epoch,
                                        n_batches, _param_norm(params))
            adam_step(params, grad_map, state, lr)
            epoch_loss += loss_value
            n_batches += 1
        row = {"epoch": epoch,
               "train_loss": epoch_loss / max(n_batches, 1)}
        row.update(_evaluate_row(model, test_set, dataset, cfg, epoch))
        trace.append(row)
        if verbose:
            print(f"epoch {epoch}: " +
                  " ".join(f"{k}={v:.5f}" for k, v in row.items() if k != "epoch"))
        if out_dir and ((epoch + 1) % cfg.checkpoint_every == 0
                        or epoch == cfg.epochs - 1):
            _save_checkpoint(model, state, epoch, out_dir)
    if out_dir:
        save_model(model, os.path.join(out_dir, "model"))
        write_metrics_csv(os.path.join(out_dir, "metrics.csv"), trace)
    if trace:
        last = trace[-1]
        final = Metrics(test_nll=last["test_nll"], fme=last["fme"],
                        rkld=last["rkld"], trace=trace)
    else:
        final = evaluate(model, dataset, n_samples=cfg.eval_samples,
                         seed=cfg.seed + 1)
        final.trace = trace
    return model, final


def _evaluate_row(model, test_set, dataset, cfg, epoch):
    if len(test_set) == 0:
        return {"test_nll": float("nan"), "fme": float("nan"),
                "rkld": float("nan")}
    nll = float(ad.value_of(nll_loss(model, test_set)))
    fme = _force_error(model, test_set, dataset.target)
    rkld = _reverse_kld(model, dataset.target,
                        n_samples=cfg.eval_samples, seed=[cfg.seed, epoch, 1])
    return {"test_nll": nll, "fme": fme, "rkld": rkld}


def _force_error(model, points, target) -> float:
    try:
        model.require_twice_differentiable()
        wanted = _pullback_forces(model, points, target)
    except (ArgumentError, SmoothnessError):
        return float("nan")
    got = np.stack([np.asarray(c) for c in
                    model.force_cols(_batch_cols(points))], axis=-1)
    return float(np.mean(np.sum((got - wanted) ** 2, axis=-1)))


def _reverse_kld(model, target, n_samples: int, seed) -> float:
    """Mean of log p_model - log p*_unnorm over model samples.

    The unknown log normalizer of the target shifts this by a constant, so
    only differences between checkpoints are meaningful.
    """
    if model.box_lo is None:
        return float("nan")
    rng = np.random.default_rng(seed)
    u = rng.random((n_samples, model.n_dims))
    x, inv_logdet = model.inverse_transform(u)
    # log p_model(x) = -inv_logdet (the base density is uniform)
    log_model = -inv_logdet
    box = BoxMap(model.box_lo, model.box_hi)
    log_target = box.pullback_logdensity(target, x)
    return float(np.mean(log_model - log_target))


def evaluate(model: FlowModel, dataset: Dataset, target: ToyTarget | None = None,
             n_samples: int = 2000, seed: int = 0) -> Metrics:
    """Held-out NLL, force-matching error, and reverse KLD up to a constant."""
    target = target if target is not None else dataset.target
    unit = dataset.unit_positions()
    nll = float(ad.value_of(nll_loss(model, unit)))
    fme = _force_error(model, unit, target)
    rkld = _reverse_kld(model, target, n_samples=n_samples, seed=seed)
    return Metrics(test_nll=nll, fme=fme, rkld=rkld)


def _save_checkpoint(model, state: AdamState, epoch: int, out_dir: str) -> None:
    arrays = dict(model.parameters())
    arrays.update(state.to_arrays())
    arrays["epoch"] = np.array([float(epoch)])
    network.save_arrays(os.path.join(out_dir, f"ckpt-e{epoch + 1:05d}.bin"),
                        arrays)


def load_checkpoint(path: str):
    """Returns (params, AdamState, next_epoch) from a checkpoint file."""
    arrays = network.load_arrays(path)
    epoch = int(arrays.pop("epoch")[0])
    state = AdamState.from_arrays(
        {k: v for k, v in arrays.items() if k.startswith("adam.")})
    params = {k: v for k, v in arrays.items() if not k.startswith("adam.")}
    return params, state, epoch + 1


# ---------------------------------------------------------------------------
# metrics CSV and plain-text config files
# ---------------------------------------------------------------------------

_CSV_FIELDS = ["epoch", "train_loss", "test_nll", "fme", "rkld"]


def write_metrics_csv(path: str, trace: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_CSV_FIELDS)
        writer.writeheader()
        for row in trace:
            writer.writerow({k: row.get(k, "") for k in _CSV_FIELDS})


def read_metrics_csv(path: str) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append({"epoch": int(row["epoch"]),
                        **{k: float(row[k]) for k in _CSV_FIELDS[1:]}})
    return out


_INT_KEYS = {"batch_size", "epochs", "seed", "n_layers", "bins", "order",
             "checkpoint_every", "eval_samples"}
_FLOAT_KEYS = {"learning_rate", "lambda_fm", "lr_decay", "train_fraction",
               "eps"}
_STR_KEYS = {"activation"}


def load_config(path: str) -> TrainConfig:
    """Parse a ``key = value`` config file, starting from an optional profile."""
    cfg = TrainConfig()
    overrides: dict = {}
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("expected 'key = value'", line_no)
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            try:
                if key == "profile":
                    if value not in PROFILES:
                        raise ConfigError(f"unknown profile {value!r}", line_no)
                    cfg = PROFILES[value]
                elif key == "hidden":
                    overrides["hidden"] = tuple(
                        int(tok) for tok in value.split(",") if tok.strip())
                elif key in _INT_KEYS:
                    overrides[key] = int(value)
                elif key in _FLOAT_KEYS:
                    overrides[key] = float(value)
                elif key in _STR_KEYS:
                    overrides[key] = value
                else:
                    raise ConfigError(f"unknown key {key!r}", line_no)
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {exc}", line_no)
    try:
        return replace(cfg, **overrides)
    except ArgumentError as exc:
        raise ConfigError(str(exc))
