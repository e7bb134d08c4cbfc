"""Rendering of density/force grids and training curves.

Grids are always written as CSV; images go out twice, as a dependency-free
binary portable pixmap and as a matplotlib figure for reports.
"""

from __future__ import annotations

import numpy as np

__all__ = ["write_ppm", "save_density_figure", "save_force_figure",
           "save_training_curves", "write_grid_csv", "colorize"]

# compact blue-to-yellow ramp; enough for heatmaps without pulling in a
# plotting dependency for the pixmap path
_RAMP = np.array([
    [13, 8, 135],
    [126, 3, 168],
    [204, 71, 120],
    [248, 149, 64],
    [240, 249, 33],
], dtype=np.float64)


def colorize(grid: np.ndarray) -> np.ndarray:
    """Map a 2-D array to RGB bytes through the built-in ramp."""
    g = np.asarray(grid, dtype=np.float64)
    finite = np.isfinite(g)
    lo = float(g[finite].min()) if finite.any() else 0.0
    hi = float(g[finite].max()) if finite.any() else 1.0
    span = hi - lo if hi > lo else 1.0
    t = np.clip((np.where(finite, g, lo) - lo) / span, 0.0, 1.0)
    pos = t * (len(_RAMP) - 1)
    i0 = np.floor(pos).astype(int)
    i1 = np.minimum(i0 + 1, len(_RAMP) - 1)
    frac = (pos - i0)[..., None]
    rgb = _RAMP[i0] * (1.0 - frac) + _RAMP[i1] * frac
    rgb[~finite] = (255.0, 0.0, 0.0)
    return np.clip(rgb + 0.5, 0, 255).astype(np.uint8)


def write_ppm(path: str, grid: np.ndarray) -> None:
    """Binary P6 pixmap of a scalar grid (rows top to bottom)."""
    rgb = colorize(grid)
    h, w = rgb.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def write_grid_csv(path: str, xs: np.ndarray, ys: np.ndarray,
                   columns: dict[str, np.ndarray]) -> None:
    """Long-format CSV: one row per grid cell, one column per channel."""
    names = list(columns)
    with open(path, "w") as fh:
        fh.write("x,y," + ",".join(names) + "\n")
        for iy, y in enumerate(ys):
            for ix, x in enumerate(xs):
                vals = ",".join(f"{columns[n][iy, ix]:.17g}" for n in names)
                fh.write(f"{x:.17g},{y:.17g},{vals}\n")


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def save_density_figure(path: str, grid: np.ndarray, extent) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4.2))
    im = ax.imshow(grid, origin="lower", extent=extent, aspect="auto",
                   cmap="viridis")
    fig.colorbar(im, ax=ax, label="density")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_force_figure(path: str, fx: np.ndarray, fy: np.ndarray, extent) -> None:
    plt = _pyplot()
    mag = np.hypot(fx, fy)
    fig, ax = plt.subplots(figsize=(5, 4.2))
    im = ax.imshow(mag, origin="lower", extent=extent, aspect="auto",
                   cmap="magma")
    fig.colorbar(im, ax=ax, label="|force|")
    step = max(1, fx.shape[0] // 24)
    ny, nx = fx.shape
    xs = np.linspace(extent[0], extent[1], nx)[::step]
    ys = np.linspace(extent[2], extent[3], ny)[::step]
    xx, yy = np.meshgrid(xs, ys)
    ax.quiver(xx, yy, fx[::step, ::step], fy[::step, ::step],
              color="white", width=0.003, alpha=0.8)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_training_curves(path: str, trace: list[dict]) -> None:
    plt = _pyplot()
    epochs = [row["epoch"] for row in trace]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.4))
    for ax, key, label in zip(axes, ("train_loss", "test_nll", "rkld"),
                              ("train loss", "held-out NLL",
                               "reverse KLD (up to constant)")):
        ax.plot(epochs, [row[key] for row in trace], lw=1.2)
        ax.set_xlabel("epoch")
        ax.set_title(label)
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
