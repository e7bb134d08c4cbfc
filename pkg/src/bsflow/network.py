"""Fully connected conditioner network and the named-array checkpoint format."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ArgumentError

_ACTIVATIONS = ("sin", "tanh")


class MLP:
    """Small dense network mapping conditioning inputs to raw spline logits.

    Hidden weights start uniform in +-1/sqrt(fan_in); the final layer starts
    at zero so every freshly built transform is the identity.
    """

    def __init__(self, n_in: int, hidden: tuple[int, ...], n_out: int,
                 activation: str = "sin", seed: int = 0):
        if activation not in _ACTIVATIONS:
            raise ArgumentError(f"unknown activation {activation!r}")
        self.n_in = int(n_in)
        self.hidden = tuple(int(h) for h in hidden)
        self.n_out = int(n_out)
        self.activation = activation
        rng = np.random.default_rng(seed)
        sizes = [self.n_in, *self.hidden, self.n_out]
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == len(sizes) - 2
            if last:
                w = np.zeros((a, b))
                bias = np.zeros(b)
            else:
                bound = 1.0 / np.sqrt(a)
                w = rng.uniform(-bound, bound, size=(a, b))
                bias = rng.uniform(-bound, bound, size=b)
            self.weights.append(w)
            self.biases.append(bias)

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{i}"] = w
            out[f"b{i}"] = b
        return out

    def set_parameters(self, params: dict[str, np.ndarray]) -> None:
        for i in range(len(self.weights)):
            self.weights[i] = np.asarray(params[f"w{i}"], dtype=np.float64)
            self.biases[i] = np.asarray(params[f"b{i}"], dtype=np.float64)

    def forward(self, x, params: dict | None = None):
        """Apply the network to a (batch, n_in) matrix-like input.

        ``params`` may substitute tape variables for the stored arrays so a
        training step can differentiate through the same code path.
        """
        act = ad.tanh if self.activation == "tanh" else ad.sin
        n_layers = len(self.weights)
        h = x
        for i in range(n_layers):
            w = params[f"w{i}"] if params is not None else self.weights[i]
            b = params[f"b{i}"] if params is not None else self.biases[i]
            if isinstance(h, ad.Dual):
                h = ad.Dual(ad.affine(h.re, w, b), ad.matmul(h.du, w))
            else:
                h = ad.affine(h, w, b)
            if i < n_layers - 1:
                h = act(h)
        return h


# ---------------------------------------------------------------------------
# checkpoint format: text header (name, shape, count) + little-endian float64
# ---------------------------------------------------------------------------

_MAGIC = b"bsflow-arrays 1\n"


def save_arrays(path, arrays: dict[str, np.ndarray]) -> None:
    """Write named float64 arrays; the round trip is bit-exact."""
    names = sorted(arrays)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(f"{len(names)}\n".encode("ascii"))
        for name in names:
            if " " in name or "\n" in name:
                raise ArgumentError(f"array name {name!r} must not contain spaces")
            arr = np.asarray(arrays[name], dtype=np.float64)
            dims = " ".join(str(d) for d in arr.shape)
            fh.write(f"{name} {arr.ndim} {dims} {arr.size}\n".encode("ascii"))
        for name in names:
            arr = np.ascontiguousarray(np.asarray(arrays[name], dtype=np.float64))
            fh.write(arr.astype("<f8", copy=False).tobytes())


def load_arrays(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.readline() != _MAGIC:
            raise ArgumentError(f"{path}: not a recognized array bundle")
        count = int(fh.readline())
        headers = []
        for _ in range(count):
            fields = fh.readline().decode("ascii").split()
            name, ndim = fields[0], int(fields[1])
            shape = tuple(int(d) for d in fields[2:2 + ndim])
            size = int(fields[2 + ndim])
            headers.append((name, shape, size))
        out = {}
        for name, shape, size in headers:
            raw = fh.read(size * 8)
            if len(raw) != size * 8:
                raise ArgumentError(f"{path}: truncated payload for {name!r}")
            out[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return out
