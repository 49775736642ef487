"""Reverse-mode differentiation over numpy arrays.

A :class:`Tape` records every operation of a forward pass as a :class:`Node`
holding the primal value and an adjoint slot. Since nodes are appended after
their parents, the record order is already topological and the backward sweep
is a single reversed pass. Everything runs in float64.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DegenerateInputError, ParameterError


class Node:
    __slots__ = ("value", "adj", "_push")

    def __init__(self, value, push=None):
        self.value = value
        self.adj = None
        self._push = push

    @property
    def shape(self):
        return self.value.shape


def _acc(node: Node, delta: np.ndarray) -> None:
    if node.adj is None:
        node.adj = np.zeros_like(node.value)
    node.adj += delta


def _conv_same(x: np.ndarray, w: np.ndarray):
    """Stride-1 cross-correlation with zero 'same' padding.

    x: (n, cin, h, w); w: (cout, cin, k, k) with odd k. Returns the output and
    the flattened window matrix for kernel gradients.
    """
    k = w.shape[2]
    pad = k // 2
    n, cin, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * wd, cin * k * k)
    out = cols @ w.reshape(w.shape[0], -1).T
    return out.reshape(n, h, wd, w.shape[0]).transpose(0, 3, 1, 2), cols


class Tape:
    """Operation recorder with adjoint accumulation."""

    def __init__(self):
        self.nodes: list[Node] = []

    def _emit(self, value, push=None) -> Node:
        node = Node(np.asarray(value, dtype=np.float64), push)
        self.nodes.append(node)
        return node

    def leaf(self, value) -> Node:
        return self._emit(np.asarray(value, dtype=np.float64))

    def backward(self, loss: Node) -> None:
        """Seed the loss adjoint with 1 and sweep the record in reverse."""
        loss.adj = np.ones_like(loss.value)
        for node in reversed(self.nodes):
            if node.adj is not None and node._push is not None:
                node._push(node.adj)

    def all_adjoints_finite(self) -> bool:
        return all(node.adj is None or np.all(np.isfinite(node.adj)) for node in self.nodes)

    # ---- elementwise ----

    def add(self, a: Node, b: Node) -> Node:
        def push(g):
            _acc(a, g)
            _acc(b, g)

        return self._emit(a.value + b.value, push)

    def mul(self, a: Node, b: Node) -> Node:
        def push(g):
            _acc(a, g * b.value)
            _acc(b, g * a.value)

        return self._emit(a.value * b.value, push)

    def divide(self, a: Node, b: Node) -> Node:
        out_val = a.value / b.value

        def push(g):
            _acc(a, g / b.value)
            _acc(b, -g * out_val / b.value)

        return self._emit(out_val, push)

    def add_scalar(self, a: Node, s: float) -> Node:
        def push(g):
            _acc(a, g)

        return self._emit(a.value + s, push)

    def sigmoid(self, a: Node) -> Node:
        x = a.value
        out_val = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

        def push(g):
            _acc(a, g * out_val * (1.0 - out_val))

        return self._emit(out_val, push)

    def prelu(self, a: Node, slope: Node) -> Node:
        """Channel-wise parametric rectifier; slope has shape (channels,)."""
        x = a.value
        s = slope.value.reshape(1, -1, 1, 1)
        pos = x > 0

        def push(g):
            _acc(a, g * np.where(pos, 1.0, s))
            _acc(slope, (g * np.where(pos, 0.0, x)).sum(axis=(0, 2, 3)))

        return self._emit(np.where(pos, x, s * x), push)

    # ---- convolutions ----

    def conv2d(self, x: Node, w: Node, b: Node | None = None) -> Node:
        out_val, cols = _conv_same(x.value, w.value)
        if b is not None:
            out_val = out_val + b.value.reshape(1, -1, 1, 1)
        cout = w.value.shape[0]

        def push(g):
            g_mat = g.transpose(0, 2, 3, 1).reshape(-1, cout)
            _acc(w, (g_mat.T @ cols).reshape(w.value.shape))
            if b is not None:
                _acc(b, g.sum(axis=(0, 2, 3)))
            w_t = w.value.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
            _acc(x, _conv_same(g, w_t)[0])

        return self._emit(out_val, push)

    def fixed_conv2d(self, x: Node, kernel: np.ndarray) -> Node:
        """Convolution with a constant (non-trainable) kernel."""
        kernel = np.asarray(kernel, dtype=np.float64)
        out_val, _ = _conv_same(x.value, kernel)

        def push(g):
            k_t = kernel.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
            _acc(x, _conv_same(g, k_t)[0])

        return self._emit(out_val, push)

    # ---- normalization ----

    def batch_norm(self, x: Node, gamma: Node, beta: Node, mean: np.ndarray, var: np.ndarray, eps: float = 1e-5) -> Node:
        """Normalize with the given per-channel statistics (batch or running)."""
        mu = mean.reshape(1, -1, 1, 1)
        ivstd = 1.0 / np.sqrt(var.reshape(1, -1, 1, 1) + eps)
        xhat = (x.value - mu) * ivstd
        g_val = gamma.value.reshape(1, -1, 1, 1)

        def push(g):
            _acc(gamma, (g * xhat).sum(axis=(0, 2, 3)))
            _acc(beta, g.sum(axis=(0, 2, 3)))
            _acc(x, g * g_val * ivstd)

        return self._emit(g_val * xhat + beta.value.reshape(1, -1, 1, 1), push)

    def batch_norm_training(self, x: Node, gamma: Node, beta: Node, eps: float = 1e-5) -> tuple[Node, np.ndarray, np.ndarray]:
        """Batch-statistics normalization; returns (out, batch_mean, batch_var)."""
        mu = x.value.mean(axis=(0, 2, 3))
        var = x.value.var(axis=(0, 2, 3))
        mu_b = mu.reshape(1, -1, 1, 1)
        ivstd = 1.0 / np.sqrt(var.reshape(1, -1, 1, 1) + eps)
        xhat = (x.value - mu_b) * ivstd
        g_val = gamma.value.reshape(1, -1, 1, 1)

        def push(g):
            _acc(gamma, (g * xhat).sum(axis=(0, 2, 3)))
            _acc(beta, g.sum(axis=(0, 2, 3)))
            dxhat = g * g_val
            term_mean = dxhat.mean(axis=(0, 2, 3), keepdims=True)
            term_proj = (dxhat * xhat).mean(axis=(0, 2, 3), keepdims=True)
            _acc(x, ivstd * (dxhat - term_mean - xhat * term_proj))

        out = self._emit(g_val * xhat + beta.value.reshape(1, -1, 1, 1), push)
        return out, mu, var

    # ---- budget layer ----

    def mean_adjust(self, x: Node, target_mean: float) -> Node:
        """Per-image water-filling mean adjustment (see :func:`scanweave.mask.mean_adjust`).

        Clamped entries receive zero gradient (projection subgradient); the
        surviving entries follow the proportional-scaling Jacobian.
        """
        from ..mask import _water_fill

        if x.value.ndim != 4 or x.value.shape[1] != 1:
            raise ParameterError("mean_adjust expects (batch, 1, height, width)")
        batch = x.value.shape[0]
        flat = x.value.reshape(batch, -1)
        out_val = np.empty_like(flat)
        records = []
        for i in range(batch):
            adjusted, clamped, uniform_fill = _water_fill(flat[i], target_mean, 64)
            out_val[i] = adjusted
            records.append((clamped, uniform_fill))

        def push(g):
            g_flat = g.reshape(batch, -1)
            grad = np.zeros_like(g_flat)
            n = flat.shape[1]
            for i in range(batch):
                clamped, uniform_fill = records[i]
                if uniform_fill:
                    continue
                free = ~clamped
                t = flat[i][free].sum()
                k = target_mean * n - clamped.sum()
                gf = g_flat[i][free]
                xf = flat[i][free]
                grad[i][free] = (k / t) * gf - (k / (t * t)) * (gf * xf).sum()
            _acc(x, grad.reshape(x.value.shape))

        return self._emit(out_val.reshape(x.value.shape), push)

    # ---- losses ----

    def mse(self, pred: Node, target: np.ndarray) -> Node:
        diff = pred.value - target

        def push(g):
            _acc(pred, g * 2.0 * diff / diff.size)

        return self._emit(np.asarray((diff * diff).mean()), push)

    # ---- implicit solves ----

    def harmonic_solve(self, rhs: Node, weight: Node, smoothness: float, tol: float = 1e-12, max_iters: int = 20000) -> Node:
        """Weighted-harmonic solve with adjoint-method gradients.

        Solves ``(diag(d) + smoothness * laplacian) r = rhs`` per image by
        Jacobi iteration, where ``d`` is the per-pixel confidence map. The
        backward pass solves the same (symmetric) system for the adjoint, so
        no iterate history is stored.
        """
        d = weight.value
        r = _jacobi(d, smoothness, rhs.value, tol, max_iters)

        def push(g):
            lam = _jacobi(d, smoothness, g, tol, max_iters)
            _acc(rhs, lam)
            _acc(weight, -lam * r)

        return self._emit(r, push)


def _neighbor_sum(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    out[..., 1:, :] += x[..., :-1, :]
    out[..., :-1, :] += x[..., 1:, :]
    out[..., :, 1:] += x[..., :, :-1]
    out[..., :, :-1] += x[..., :, 1:]
    return out


def _degree_map(shape) -> np.ndarray:
    deg = np.full(shape, 4.0)
    deg[..., 0, :] -= 1.0
    deg[..., -1, :] -= 1.0
    deg[..., :, 0] -= 1.0
    deg[..., :, -1] -= 1.0
    return deg


def _jacobi(d: np.ndarray, smoothness: float, rhs: np.ndarray, tol: float, max_iters: int) -> np.ndarray:
    deg = _degree_map(d.shape)
    diag = d + smoothness * deg
    if diag.min() <= 0.0:
        raise DegenerateInputError("harmonic solve needs positive diagonal weights")
    r = rhs / diag
    for _ in range(max_iters):
        r_new = (rhs + smoothness * _neighbor_sum(r)) / diag
        if np.abs(r_new - r).max() <= tol:
            return r_new
        r = r_new
    return r
