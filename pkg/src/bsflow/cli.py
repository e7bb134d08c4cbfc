"""Command-line interface: data generation, training, evaluation, sampling,
grid rendering, and forward/reverse benchmarking.

Exit codes: 0 success, 1 user error (bad flags, bad config, refused
contracts), 2 internal error.  ``BSFLOW_THREADS`` caps the linear-algebra
thread pools; it is honored only if set before numpy is first imported,
which is why all heavy imports here live inside the command functions.
"""

from __future__ import annotations

import argparse
import os
import sys
import time


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _apply_thread_env() -> None:
    n = os.environ.get("BSFLOW_THREADS")
    if not n:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, n)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bsflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="sample a toy target with parallel-chain MH")
    p.add_argument("--target", choices=("rings", "periodic"), default="rings")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--chains", type=int, default=10_000)
    p.add_argument("--burn-in", type=int, default=1_000)
    p.add_argument("--keeps", type=int, default=10)
    p.add_argument("--keep-every", type=int, default=1)
    p.add_argument("--step", type=float, default=0.1)
    p.add_argument("--csv", help="also export the rows as CSV")

    p = sub.add_parser("train", help="train a flow on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--fm", action="store_true",
                   help="add the force-matching term with the configured weight")
    p.add_argument("--resume", help="checkpoint file to continue from")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("eval", help="metrics of a trained model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("sample", help="draw samples from a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--unit", action="store_true",
                   help="emit flow coordinates instead of data coordinates")

    p = sub.add_parser("grid", help="density or force field on a grid")
    p.add_argument("--model", required=True)
    p.add_argument("--what", choices=("density", "force"), required=True)
    p.add_argument("--res", type=int, default=100)
    p.add_argument("--out", required=True,
                   help="base path; writes .csv, .ppm and .png")

    p = sub.add_parser("bench", help="forward/reverse runtime per sample")
    p.add_argument("--model", required=True)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    return parser


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _cmd_gen_data(args) -> int:
    from . import targets

    kind = {"rings": targets.ToyTarget.rings,
            "periodic": targets.ToyTarget.periodic_rings}[args.target]()
    ds = targets.mh_generate(kind, chains=args.chains, burn_in=args.burn_in,
                             keep_every=args.keep_every, keeps=args.keeps,
                             step=args.step, seed=args.seed)
    targets.save_dataset(ds, args.out)
    if args.csv:
        targets.dataset_to_csv(ds, args.csv)
    print(f"wrote {ds.n} samples to {args.out} "
          f"(acceptance rate {ds.meta['acceptance_rate']:.3f})")
    return 0


def _cmd_train(args) -> int:
    from . import figures, targets, training
    from .flow import build_coupling_flow

    ds = targets.load_dataset(args.data)
    cfg = training.load_config(args.config)
    model = build_coupling_flow(
        n_dims=ds.n_dims, n_layers=cfg.n_layers, bins=cfg.bins, order=cfg.order,
        hidden=cfg.hidden, domains=ds.domains, activation=cfg.activation,
        eps=cfg.eps, seed=cfg.seed, box_lo=ds.box.lo, box_hi=ds.box.hi)
    start_epoch = 0
    state = None
    trace = None
    if args.resume:
        params, state, start_epoch = training.load_checkpoint(args.resume)
        model.set_parameters(params)
        metrics_path = os.path.join(args.out, "metrics.csv")
        if os.path.exists(metrics_path):
            trace = [row for row in training.read_metrics_csv(metrics_path)
                     if row["epoch"] < start_epoch]
    model, metrics = training.train(
        model, ds, cfg, out_dir=args.out, use_fm=args.fm,
        start_epoch=start_epoch, adam_state=state, prior_trace=trace,
        verbose=not args.quiet)
    if metrics.trace:
        figures.save_training_curves(os.path.join(args.out, "curves.png"),
                                     metrics.trace)
    print(f"final: test_nll={metrics.test_nll:.5f} fme={metrics.fme:.5g} "
          f"rkld={metrics.rkld:.5f}")
    return 0


def _cmd_eval(args) -> int:
    from . import targets, training
    from .flow import load_model

    model = load_model(args.model)
    ds = targets.load_dataset(args.data)
    metrics = training.evaluate(model, ds, n_samples=args.samples,
                                seed=args.seed)
    print(f"test_nll={metrics.test_nll:.6f}")
    print(f"fme={metrics.fme:.6g}")
    print(f"rkld={metrics.rkld:.6f}  # up to the target's log normalizer")
    return 0


def _cmd_sample(args) -> int:
    import numpy as np

    from .flow import load_model
    from .targets import BoxMap

    model = load_model(args.model)
    x = model.sample(args.n, seed=args.seed)
    if not args.unit:
        if model.box_lo is None:
            raise _UsageError("model has no bounding box; use --unit")
        x = BoxMap(model.box_lo, model.box_hi).from_unit(x)
    with open(args.out, "w") as fh:
        fh.write(",".join(f"x{i}" for i in range(x.shape[1])) + "\n")
        np.savetxt(fh, x, delimiter=",", fmt="%.17g")
    print(f"wrote {x.shape[0]} samples to {args.out}")
    return 0


def _strip_suffix(path: str) -> str:
    base, ext = os.path.splitext(path)
    return base if ext in (".csv", ".ppm", ".png") else path


def _cmd_grid(args) -> int:
    import numpy as np

    from . import figures
    from .flow import load_model
    from .targets import BoxMap

    model = load_model(args.model)
    if model.box_lo is None:
        raise _UsageError("model has no bounding box; cannot place the grid")
    if model.n_dims != 2:
        raise _UsageError("grid rendering expects a 2-D model")
    box = BoxMap(model.box_lo, model.box_hi)
    n = args.res
    xs = np.linspace(box.lo[0], box.hi[0], n)
    ys = np.linspace(box.lo[1], box.hi[1], n)
    xx, yy = np.meshgrid(xs, ys)
    pts = np.stack([xx.ravel(), yy.ravel()], axis=-1)
    unit = box.to_unit(pts)
    base = _strip_suffix(args.out)
    extent = (box.lo[0], box.hi[0], box.lo[1], box.hi[1])
    if args.what == "density":
        logp = model.log_density(unit) + np.sum(np.log(box.scale))
        grid = np.exp(logp).reshape(n, n)
        figures.write_grid_csv(base + ".csv", xs, ys, {"density": grid})
        figures.write_ppm(base + ".ppm", grid)
        figures.save_density_figure(base + ".png", grid, extent)
        print(f"density grid {n}x{n}: min={grid.min():.4g} max={grid.max():.4g}")
    else:
        force = model.force(unit) * box.scale
        fx = force[:, 0].reshape(n, n)
        fy = force[:, 1].reshape(n, n)
        norm = np.hypot(fx, fy)
        singular = int(np.count_nonzero(~np.isfinite(norm)))
        figures.write_grid_csv(base + ".csv", xs, ys, {"fx": fx, "fy": fy})
        figures.write_ppm(base + ".ppm", norm)
        figures.save_force_figure(base + ".png", fx, fy, extent)
        finite = norm[np.isfinite(norm)]
        top = float(finite.max()) if finite.size else float("nan")
        print(f"force grid {n}x{n}: max-norm={top:.6g} "
              f"singular-cells={singular}")
    print(f"wrote {base}.csv {base}.ppm {base}.png")
    return 0


def _cmd_bench(args) -> int:
    import numpy as np

    from .flow import load_model

    if args.n <= 0:
        print("empty report: pass --n with a positive sample count")
        return 0
    model = load_model(args.model)
    rng = np.random.default_rng(args.seed)
    x = model.sample(args.n, seed=args.seed)  # warm, in-domain workload
    u = rng.random((args.n, model.n_dims))

    def time_ms(fn) -> list[float]:
        out = []
        for _ in range(args.reps):
            t0 = time.perf_counter()
            fn()
            out.append((time.perf_counter() - t0) * 1e3 / args.n)
        return out

    fwd = time_ms(lambda: model.transform(x))
    rev = time_ms(lambda: model.inverse_transform(u))

    def report(name, times):
        times = np.asarray(times)
        mean = times.mean()
        half = 2.0 * times.std(ddof=1) / np.sqrt(len(times)) if len(times) > 1 else 0.0
        print(f"{name}: {mean:.6f} ms/sample (+- {half:.6f}, "
              f"{args.reps} reps of {args.n})")
        return mean

    f = report("forward (density estimation)", fwd)
    r = report("reverse (sampling)", rev)
    print(f"reverse/forward ratio: {r / f:.3f}")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sample": _cmd_sample,
    "grid": _cmd_grid,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    _apply_thread_env()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help and friends
        code = exc.code if isinstance(exc.code, int) else 0
        return code
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        from . import errors

        user_errors = (errors.ArgumentError, errors.ConfigError,
                       errors.SmoothnessError, errors.SplineDomainError,
                       errors.SingularPointError, FileNotFoundError,
                       IsADirectoryError, PermissionError)
        if isinstance(exc, user_errors):
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
