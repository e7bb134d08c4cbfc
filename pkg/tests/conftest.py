import numpy as np
import pytest

from bsflow import paramgen as pg
from bsflow import targets, training
from bsflow.flow import build_coupling_flow


def random_interval_params(rng, bins=8, k=4, eps=1e-4):
    cfg = pg.ParamGenConfig(k=k, r=0, s=bins, eps_t=eps, eps_alpha=eps)
    raw = pg.RawLogits(rng.normal(size=cfg.n_dt_logits),
                       rng.normal(size=cfg.n_da_logits))
    return pg.generate_interval(raw, cfg)


def random_circle_params(rng, bins=8, k=4, eps=1e-4):
    cfg = pg.ParamGenConfig(k=k, r=0, s=bins, eps_t=eps, eps_alpha=eps,
                            domain="circle")
    raw = pg.RawLogits(rng.normal(size=cfg.n_dt_logits),
                       rng.normal(size=cfg.n_da_logits))
    return pg.generate_circle(raw, cfg)


def perturbed_model(seed=1, scale=0.3, **kwargs):
    """A generic (non-identity) flow for tests that need curvature."""
    defaults = dict(n_dims=2, n_layers=2, bins=8, order=4, hidden=(16, 16),
                    seed=seed)
    defaults.update(kwargs)
    model = build_coupling_flow(**defaults)
    params = model.parameters()
    rng = np.random.default_rng(seed)
    for name in params:
        params[name] = params[name] + scale * rng.standard_normal(params[name].shape)
    model.set_parameters(params)
    return model


@pytest.fixture(scope="session")
def small_rings_dataset():
    return targets.mh_generate(targets.ToyTarget.rings(), chains=500,
                               burn_in=400, keeps=10, step=0.25, seed=11)


@pytest.fixture(scope="session")
def desk_dataset():
    # 20,000 samples for the workstation-scale training run
    return targets.mh_generate(targets.ToyTarget.rings(), chains=2000,
                               burn_in=1000, keeps=10, step=0.25, seed=7)


@pytest.fixture(scope="session")
def desk_run(desk_dataset, tmp_path_factory):
    """Workstation-scale rings run: 4 layers, 32 bins, order 4, 200 epochs.

    Shared by the training-progress, force-validity, and benchmark checks;
    this is the expensive fixture of the suite.
    """
    out = tmp_path_factory.mktemp("desk-run")
    cfg = training.PROFILES["desk"]
    ds = desk_dataset
    model = build_coupling_flow(
        n_dims=ds.n_dims, n_layers=cfg.n_layers, bins=cfg.bins, order=cfg.order,
        hidden=cfg.hidden, domains=ds.domains, activation=cfg.activation,
        eps=cfg.eps, seed=cfg.seed, box_lo=ds.box.lo, box_hi=ds.box.hi)
    model, metrics = training.train(model, ds, cfg, out_dir=str(out))
    return {"model": model, "metrics": metrics, "dataset": ds,
            "out_dir": str(out), "config": cfg}
