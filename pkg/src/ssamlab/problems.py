"""Differentiable test problems with closed-form loss/gradient, plus datasets.

Every problem exposes ``dim`` and ``loss_grad(w) -> (loss, grad)`` on flat
float64 parameter vectors; the toy problems additionally expose
``loss_grad_batch`` operating on a (B, dim) stack of parameter vectors so the
experiment drivers can advance many runs per numpy call.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .numerics import RngStream, derive_stream

__all__ = [
    "QuadraticProblem",
    "quadratic_make",
    "Toy2DProblem",
    "toy2d_loss_grad",
    "LinearAutoencoderProblem",
    "lae_make",
    "lae_loss_grad",
    "MlpProblem",
    "DatasetOracle",
    "Dataset",
    "synth_classification",
    "dataset_perturb_one",
    "load_idx",
]


# ---------------------------------------------------------------------------
# quadratic
# ---------------------------------------------------------------------------

class QuadraticProblem:
    """Strongly convex quadratic loss(w) = w'Hw/2 with explicit dense H."""

    def __init__(self, hessian: np.ndarray, delta: float = 0.0, gen_seed: int = 0):
        hessian = np.asarray(hessian, dtype=np.float64)
        if hessian.ndim != 2 or hessian.shape[0] != hessian.shape[1]:
            raise ValueError("hessian must be square")
        if not np.allclose(hessian, hessian.T, atol=1e-12):
            raise ValueError("hessian must be symmetric")
        self.hessian = hessian
        self.dim = hessian.shape[0]
        self.delta = float(delta)
        self.gen_seed = int(gen_seed)

    def loss_grad(self, w: np.ndarray):
        g = self.hessian @ w
        return 0.5 * float(w @ g), g

    def loss_grad_batch(self, W: np.ndarray):
        G = W @ self.hessian  # symmetric H, so (H W')' = W H
        return 0.5 * np.einsum("bi,bi->b", W, G), G

    def eigenvalues(self) -> np.ndarray:
        """Exact spectrum, ascending (dense symmetric eigendecomposition)."""
        return np.linalg.eigvalsh(self.hessian)


def quadratic_make(d: int, delta: float, seed: int, a_std: float = 1.0) -> QuadraticProblem:
    """Random instance H = A A'/(2d) + delta*I with A a d x 2d Gaussian matrix.

    delta > 0 forces the smallest eigenvalue above delta, keeping the loss
    strongly convex. a_std = 0 degenerates to H = delta*I.
    """
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if delta <= 0:
        raise ValueError(f"delta must be > 0 for strong convexity, got {delta}")
    stream = derive_stream(seed, 0)
    A = a_std * stream.normal((d, 2 * d))
    H = A @ A.T / (2 * d) + delta * np.eye(d)
    H = 0.5 * (H + H.T)  # kill rounding asymmetry
    return QuadraticProblem(H, delta=delta, gen_seed=seed)


# ---------------------------------------------------------------------------
# 2-D toy landscape: quartic-coupled bowl with a strict saddle at the origin
# ---------------------------------------------------------------------------

class Toy2DProblem:
    """f(x1, x2) = x1^4/4 - x1 x2 + x2^2/2.

    Stationary points: strict saddle at (0, 0), global minima at (1, 1) and
    (-1, -1) where f = -1/4.
    """

    dim = 2
    minima = (np.array([1.0, 1.0]), np.array([-1.0, -1.0]))

    def loss_grad(self, x: np.ndarray):
        x1, x2 = x
        loss = 0.25 * x1 ** 4 - x1 * x2 + 0.5 * x2 ** 2
        return float(loss), np.array([x1 ** 3 - x2, x2 - x1])

    def loss_grad_batch(self, X: np.ndarray):
        x1, x2 = X[:, 0], X[:, 1]
        loss = 0.25 * x1 ** 4 - x1 * x2 + 0.5 * x2 ** 2
        grad = np.stack([x1 ** 3 - x2, x2 - x1], axis=1)
        return loss, grad


def toy2d_loss_grad(x) -> tuple[float, np.ndarray]:
    return Toy2DProblem().loss_grad(np.asarray(x, dtype=np.float64))


# ---------------------------------------------------------------------------
# linear autoencoder: factorize the identity as a product of two square matrices
# ---------------------------------------------------------------------------

class LinearAutoencoderProblem:
    """loss(W1, W2) = ||W2 W1 - I||_F^2 / 2 over flat params [W1, W2].

    Near the origin both gradients are ~ -W', so a near-zero init sits on a
    saddle plateau before the factorization modes grow.
    """

    def __init__(self, d: int, W1: np.ndarray, W2: np.ndarray):
        if W1.shape != (d, d) or W2.shape != (d, d):
            raise ValueError("W1 and W2 must be d x d")
        self.d = d
        self.dim = 2 * d * d
        self.W1 = np.array(W1, dtype=np.float64)
        self.W2 = np.array(W2, dtype=np.float64)

    def initial_params(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.W2.ravel()])

    def unpack(self, w: np.ndarray):
        d = self.d
        return w[: d * d].reshape(d, d), w[d * d:].reshape(d, d)

    def loss_grad(self, w: np.ndarray):
        d = self.d
        W1, W2 = self.unpack(w)
        E = W2 @ W1 - np.eye(d)
        loss = 0.5 * float(np.sum(E * E))
        g1 = W2.T @ E  # dL/dW1
        g2 = E @ W1.T  # dL/dW2
        return loss, np.concatenate([g1.ravel(), g2.ravel()])

    def loss_grad_batch(self, W: np.ndarray):
        B = W.shape[0]
        d = self.d
        W1 = W[:, : d * d].reshape(B, d, d)
        W2 = W[:, d * d:].reshape(B, d, d)
        E = W2 @ W1 - np.eye(d)
        loss = 0.5 * np.einsum("bij,bij->b", E, E)
        g1 = np.transpose(W2, (0, 2, 1)) @ E
        g2 = E @ np.transpose(W1, (0, 2, 1))
        return loss, np.concatenate([g1.reshape(B, -1), g2.reshape(B, -1)], axis=1)


def lae_make(d: int, init_std: float, seed: int) -> LinearAutoencoderProblem:
    """Instance with W1, W2 elementwise i.i.d. N(0, init_std^2)."""
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    if init_std < 0:
        raise ValueError(f"init_std must be >= 0, got {init_std}")
    stream = derive_stream(seed, 0)
    W1 = init_std * stream.normal((d, d))
    W2 = init_std * stream.normal((d, d))
    return LinearAutoencoderProblem(d, W1, W2)


def lae_loss_grad(p: LinearAutoencoderProblem) -> tuple[float, np.ndarray]:
    """Loss and packed gradient at the problem's stored matrices."""
    return p.loss_grad(p.initial_params())


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    """Feature matrix (n, p) with integer labels in [0, classes)."""

    features: np.ndarray
    labels: np.ndarray
    classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be (n, p)")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must be (n,)")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("non-finite features")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.classes):
            raise ValueError("label out of range")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.classes)


def synth_classification(n: int, p: int, classes: int, seed: int,
                         cluster_std: float = 0.25) -> Dataset:
    """Gaussian blobs with one center per class, pairwise center distance 1.

    Class counts are balanced within +-1; rows are shuffled deterministically.
    Requires p >= classes so the centers e_k / sqrt(2) are realizable.
    """
    if classes < 2 or n < classes:
        raise ValueError("need n >= classes >= 2")
    if p < classes:
        raise ValueError(f"need p >= classes to place unit-separated centers, got p={p}")
    stream = derive_stream(seed, 0)
    base = n // classes
    counts = [base + (1 if k < n % classes else 0) for k in range(classes)]
    labels = np.repeat(np.arange(classes), counts)
    centers = np.zeros((classes, p))
    centers[np.arange(classes), np.arange(classes)] = 1.0 / np.sqrt(2.0)
    features = centers[labels] + cluster_std * stream.normal((n, p))
    order = stream.permutation(n)
    return Dataset(features[order], labels[order], classes)


def dataset_perturb_one(S0: Dataset, seed: int):
    """Build the neighboring pair (S, S') that differ in exactly one position.

    S drops one random example z from S0; S' is S with one random position
    overwritten by z. Both have n0 - 1 examples.
    """
    if S0.n < 2:
        raise ValueError("need at least 2 examples")
    stream = derive_stream(seed, 0)
    removed_index = int(stream.integers(0, S0.n))
    keep = np.delete(np.arange(S0.n), removed_index)
    S = S0.subset(keep)
    replaced_index = int(stream.integers(0, S.n))
    fx = S.features.copy()
    lb = S.labels.copy()
    fx[replaced_index] = S0.features[removed_index]
    lb[replaced_index] = S0.labels[removed_index]
    S_prime = Dataset(fx, lb, S0.classes)
    return S, S_prime, removed_index, replaced_index


# ---------------------------------------------------------------------------
# MLP with ReLU hidden layers and a softmax cross-entropy head
# ---------------------------------------------------------------------------

class MlpProblem:
    """Fully connected ReLU network, parameters packed into one flat vector.

    Packing order is W1, b1, W2, b2, ... with Wi of shape
    (widths[i-1], widths[i]). Loss is the mean cross-entropy over a batch and
    the gradient is exact (manual reverse mode).
    """

    def __init__(self, widths):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ValueError("widths must be >= 2 positive layer sizes")
        self.widths = tuple(widths)
        self.dim = sum(widths[i] * widths[i + 1] + widths[i + 1]
                       for i in range(len(widths) - 1))

    def init_params(self, stream: RngStream) -> np.ndarray:
        """Gaussian weights scaled by 1/sqrt(fan_in), zero biases."""
        chunks = []
        for i in range(len(self.widths) - 1):
            fan_in, fan_out = self.widths[i], self.widths[i + 1]
            chunks.append(stream.normal((fan_in, fan_out)).ravel() / np.sqrt(fan_in))
            chunks.append(np.zeros(fan_out))
        return np.concatenate(chunks)

    def unpack(self, w: np.ndarray):
        params = []
        off = 0
        for i in range(len(self.widths) - 1):
            fan_in, fan_out = self.widths[i], self.widths[i + 1]
            W = w[off: off + fan_in * fan_out].reshape(fan_in, fan_out)
            off += fan_in * fan_out
            b = w[off: off + fan_out]
            off += fan_out
            params.append((W, b))
        return params

    def _forward(self, w, X):
        # exploding iterates are expected data in lr sweeps: let NaN/Inf flow
        with np.errstate(over="ignore", invalid="ignore"):
            params = self.unpack(w)
            acts = [X]
            z = None
            for i, (W, b) in enumerate(params):
                z = acts[-1] @ W + b
                if i < len(params) - 1:
                    acts.append(np.maximum(z, 0.0))
            zmax = z.max(axis=1, keepdims=True)
            ez = np.exp(z - zmax)
            probs = ez / ez.sum(axis=1, keepdims=True)
            logz = np.log(ez.sum(axis=1, keepdims=True)) + zmax
        return params, acts, z, probs, logz

    def forward(self, w: np.ndarray, X: np.ndarray) -> np.ndarray:
        """Class probabilities, one row per example."""
        return self._forward(w, np.asarray(X, dtype=np.float64))[3]

    def loss_grad(self, w: np.ndarray, X: np.ndarray, y: np.ndarray):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if X.shape[0] == 0:
            raise ValueError("empty batch")
        if X.shape[1] != self.widths[0]:
            raise ValueError(f"feature width {X.shape[1]} != input width {self.widths[0]}")
        B = X.shape[0]
        params, acts, z, probs, logz = self._forward(w, X)
        with np.errstate(over="ignore", invalid="ignore"):
            loss = float(np.mean(logz[np.arange(B), 0] - z[np.arange(B), y]))
            delta = probs.copy()
            delta[np.arange(B), y] -= 1.0
            delta /= B
            grads = [None] * len(params)
            for i in range(len(params) - 1, -1, -1):
                W, _ = params[i]
                gW = acts[i].T @ delta
                gb = delta.sum(axis=0)
                grads[i] = (gW, gb)
                if i > 0:
                    delta = (delta @ W.T) * (acts[i] > 0)
            flat = np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in grads])
        return loss, flat

    def accuracy(self, w: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
        pred = np.argmax(self.forward(w, X), axis=1)
        return float(np.mean(pred == np.asarray(y)))


class DatasetOracle:
    """Binds an MlpProblem to a fixed batch so it fits the loss_grad(w) shape."""

    def __init__(self, problem: MlpProblem, X: np.ndarray, y: np.ndarray):
        self.problem = problem
        self.X = X
        self.y = y
        self.dim = problem.dim

    def loss_grad(self, w: np.ndarray):
        return self.problem.loss_grad(w, self.X, self.y)


# ---------------------------------------------------------------------------
# IDX file ingestion (big-endian magic, optionally gzipped)
# ---------------------------------------------------------------------------

_IDX_UBYTE = 0x08


def load_idx(path) -> np.ndarray:
    """Read an IDX tensor; rank >= 2 pixel data is scaled to [0, 1] floats,
    rank-1 data (labels) comes back as int64."""
    with open(path, "rb") as fh:
        head = fh.read(2)
        fh.seek(0)
        raw = gzip.open(fh).read() if head == b"\x1f\x8b" else fh.read()
    if len(raw) < 4:
        raise ValueError("truncated IDX header")
    zero1, zero2, dtype_code, ndim = struct.unpack(">BBBB", raw[:4])
    if zero1 != 0 or zero2 != 0 or dtype_code != _IDX_UBYTE or not 1 <= ndim <= 3:
        raise ValueError(f"bad IDX magic {raw[:4].hex()}")
    if len(raw) < 4 + 4 * ndim:
        raise ValueError("truncated IDX dimension block")
    dims = struct.unpack(f">{ndim}I", raw[4: 4 + 4 * ndim])
    count = int(np.prod(dims))
    payload = raw[4 + 4 * ndim:]
    if len(payload) != count:
        raise ValueError(f"IDX payload length {len(payload)} != expected {count}")
    data = np.frombuffer(payload, dtype=np.uint8).reshape(dims)
    if ndim == 1:
        return data.astype(np.int64)
    return data.astype(np.float64) / 255.0
