"""Small dense networks with explicit forward/backward passes and Adam."""
from __future__ import annotations

import numpy as np


class Mlp:
    """ReLU hidden layers; output is identity or tanh scaled into ``[low, high]``.

    ``layers`` is a list of ``(W, b)`` with ``W`` shaped ``(fan_in, fan_out)``.
    All parameters live in one flat buffer (``self.flat``); the layer arrays are
    views into it, so optimizers and target blending work on a single vector.
    """

    def __init__(self, layers, out_bounds=None):
        for (w0, _), (w1, _) in zip(layers, layers[1:]):
            if w0.shape[1] != w1.shape[0]:
                raise ValueError(f"layer shapes {w0.shape} and {w1.shape} do not chain")
        for w, b in layers:
            if b.shape != (w.shape[1],):
                raise ValueError("bias length must equal layer fan-out")
        arrays = [np.asarray(p, dtype=float) for layer in layers for p in layer]
        self.flat = np.concatenate([a.ravel() for a in arrays])
        views = []
        pos = 0
        for a in arrays:
            views.append(self.flat[pos:pos + a.size].reshape(a.shape))
            pos += a.size
        self.layers = list(zip(views[0::2], views[1::2]))
        self.out_bounds = None if out_bounds is None else (float(out_bounds[0]), float(out_bounds[1]))

    @classmethod
    def init(cls, sizes, rng, out_bounds=None, final_scale=3e-3):
        """Fan-in uniform init; the last layer is drawn from +-``final_scale``."""
        layers = []
        for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            lim = final_scale if k == len(sizes) - 2 else 1.0 / np.sqrt(n_in)
            layers.append((rng.uniform(-lim, lim, (n_in, n_out)), rng.uniform(-lim, lim, n_out)))
        return cls(layers, out_bounds)

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[1]

    @property
    def sizes(self) -> list:
        return [self.in_dim] + [w.shape[1] for w, _ in self.layers]

    def params(self) -> list:
        return [p for layer in self.layers for p in layer]

    def set_params(self, arrays) -> None:
        for dst, src in zip(self.params(), arrays):
            dst[...] = src

    def copy(self) -> "Mlp":
        return Mlp([(w.copy(), b.copy()) for w, b in self.layers], self.out_bounds)

    @staticmethod
    def flatten(grads) -> np.ndarray:
        """Concatenate gradients aligned with :meth:`params` into one vector."""
        return np.concatenate([g.ravel() for g in grads])

    def forward(self, x, keep=False):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.shape[1] != self.in_dim:
            raise ValueError(f"input dimension {h.shape[1]} != {self.in_dim}")
        acts = [h]
        last = len(self.layers) - 1
        for k, (w, b) in enumerate(self.layers):
            z = h @ w + b
            h = np.maximum(z, 0.0) if k < last else z
            acts.append(h)
        if self.out_bounds is not None:
            lo, hi = self.out_bounds
            t = np.tanh(h)
            acts.append(t)
            h = lo + (hi - lo) * (t + 1.0) / 2.0
        out = h[0] if single else h
        return (out, acts) if keep else out

    def backward(self, acts, grad_out, grad_pre=None):
        """Reverse pass for ``sum(grad_out * output)``.

        ``grad_pre`` is an optional extra gradient on the final pre-activation
        (before the tanh squashing). Returns ``(param_grads, input_grad)`` with
        ``param_grads`` aligned with :meth:`params`.
        """
        g = np.asarray(grad_out, dtype=float)
        if g.ndim == 1:
            g = g[None, :]
        if self.out_bounds is not None:
            lo, hi = self.out_bounds
            t = acts[-1]
            g = g * (hi - lo) / 2.0 * (1.0 - t * t)
            acts = acts[:-1]
        if grad_pre is not None:
            g = g + grad_pre
        grads = []
        for k in range(len(self.layers) - 1, -1, -1):
            w, _ = self.layers[k]
            if k < len(self.layers) - 1:
                g = g * (acts[k + 1] > 0)
            grads.append((acts[k].T @ g, g.sum(axis=0)))
            g = g @ w.T
        grads.reverse()
        return [p for pair in grads for p in pair], g


class Adam:
    """Adam over a list of arrays, updated in place."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
