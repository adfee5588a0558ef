"""Fully connected network with hand-written reverse-mode gradients."""

from __future__ import annotations

import numpy as np

ACTIVATIONS = ("tanh", "silu")


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    return z / (1.0 + np.exp(-z))


def _act_grad(name, z, a):
    if name == "tanh":
        return 1.0 - a * a
    s = 1.0 / (1.0 + np.exp(-z))
    return s * (1.0 + z * (1.0 - s))


class MLP:
    """Dense network ``widths[0] -> ... -> widths[-1]`` with a linear output layer.

    Parameters live in one flat float64 array; ``weights`` and ``biases`` are
    views into it, so optimisers can update ``params`` in place.
    """

    def __init__(self, widths, activation="tanh", params=None):
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ValueError(f"invalid layer widths {widths}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.widths = widths
        self.activation = activation
        n = self.count_params(widths)
        if params is None:
            params = np.zeros(n)
        params = np.asarray(params, dtype=float)
        if params.shape != (n,):
            raise ValueError(f"expected {n} parameters, got {params.shape}")
        self.params = params
        self._bind()

    @staticmethod
    def count_params(widths):
        return sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))

    def _bind(self):
        self.weights, self.biases = [], []
        off = 0
        for a, b in zip(self.widths[:-1], self.widths[1:]):
            self.weights.append(self.params[off : off + a * b].reshape(a, b))
            off += a * b
            self.biases.append(self.params[off : off + b])
            off += b

    def init(self, rng: np.random.Generator, zero_last: bool = True) -> "MLP":
        for i, W in enumerate(self.weights):
            fan_in = W.shape[0]
            W[...] = rng.standard_normal(W.shape) / np.sqrt(fan_in)
            self.biases[i][...] = 0.0
        if zero_last:
            self.weights[-1][...] = 0.0
        return self

    def copy(self) -> "MLP":
        return MLP(self.widths, self.activation, self.params.copy())

    def forward(self, z):
        h = np.asarray(z, dtype=float)
        cache = [h]
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            pre = h @ W + b
            if i == last:
                return pre, cache
            h = _act(self.activation, pre)
            cache.append((pre, h))
        raise AssertionError("unreachable")

    def __call__(self, z):
        return self.forward(z)[0]

    def backward(self, cache, grad_out):
        """Gradient of sum(grad_out * output) with respect to ``params``."""
        grad = np.empty_like(self.params)
        gW, gb = [], []
        off = 0
        for a, b in zip(self.widths[:-1], self.widths[1:]):
            gW.append(grad[off : off + a * b].reshape(a, b))
            off += a * b
            gb.append(grad[off : off + b])
            off += b
        g = np.asarray(grad_out, dtype=float).reshape(-1, self.widths[-1])
        for i in range(len(self.weights) - 1, -1, -1):
            h_in = cache[0] if i == 0 else cache[i][1]
            h_in = h_in.reshape(-1, self.widths[i])
            gW[i][...] = h_in.T @ g
            gb[i][...] = g.sum(axis=0)
            if i:
                pre, act = cache[i]
                g = (g @ self.weights[i].T) * _act_grad(self.activation, pre, act).reshape(g.shape[0], -1)
        return grad


class SGD:
    """Plain gradient steps with multiplicative learning-rate decay."""

    def __init__(self, lr, decay=1.0, decay_every=1000):
        self.lr, self.decay, self.decay_every = lr, decay, decay_every
        self.t = 0

    def rate(self):
        return self.lr * self.decay ** (self.t // self.decay_every)

    def step(self, params, grad):
        params -= self.rate() * grad
        self.t += 1


class Adam(SGD):
    def __init__(self, lr, decay=1.0, decay_every=1000, b1=0.9, b2=0.999, eps=1e-8):
        super().__init__(lr, decay, decay_every)
        self.b1, self.b2, self.eps = b1, b2, eps
        self.m = self.v = None

    def step(self, params, grad):
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        lr = self.rate()
        self.t += 1
        m, v = self.m, self.v
        m *= self.b1
        m += (1 - self.b1) * grad
        v *= self.b2
        v += (1 - self.b2) * (grad * grad)
        denom = np.sqrt(v / (1 - self.b2**self.t))
        denom += self.eps
        params -= (lr / (1 - self.b1**self.t)) * m / denom


class SeqConv:
    """Residual stack of dilated 1D convolutions over a sequence of points.

    The flat input ``z`` of shape (n, groups_in * points * point_dim) holds
    ``groups_in`` blocks (for example x and alpha), each a sequence of
    ``points`` vectors of size ``point_dim``. They are stacked as channels,
    lifted to ``channels`` by a pointwise layer, passed through residual
    blocks ``h + W2 act(conv_k(h))`` with the given dilations (zero padding),
    and mapped back pointwise to ``groups_out`` blocks in the same flat
    layout. Weights are shared along the sequence.

    Parameters are stored in float64; ``compute`` sets the dtype of the
    activations and products (float32 roughly halves the cost).
    """

    def __init__(self, points, point_dim, groups_in, groups_out, channels=64, dilations=(1, 2, 4, 8, 16), kernel=3, activation="silu", params=None, compute="float64"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        if kernel % 2 != 1:
            raise ValueError("kernel size must be odd")
        self.points, self.point_dim = int(points), int(point_dim)
        self.groups_in, self.groups_out = int(groups_in), int(groups_out)
        self.channels, self.kernel = int(channels), int(kernel)
        self.dilations = tuple(int(d) for d in dilations)
        self.activation = activation
        self.compute = np.dtype(compute)
        c_in = self.groups_in * self.point_dim
        c_out = self.groups_out * self.point_dim
        C, k = self.channels, self.kernel
        self._shapes = [(c_in, C), (C,)]
        for _ in self.dilations:
            self._shapes += [(k * C, C), (C,), (C, C), (C,)]
        self._shapes += [(C, c_out), (c_out,)]
        n = sum(int(np.prod(s)) for s in self._shapes)
        params = np.zeros(n) if params is None else np.asarray(params, dtype=float)
        if params.shape != (n,):
            raise ValueError(f"expected {n} parameters, got {params.shape}")
        self.params = params
        self.tensors = self._views(self.params)

    @property
    def n_in(self):
        return self.groups_in * self.points * self.point_dim

    @property
    def n_out(self):
        return self.groups_out * self.points * self.point_dim

    def _views(self, flat):
        out, off = [], 0
        for s in self._shapes:
            size = int(np.prod(s))
            out.append(flat[off : off + size].reshape(s))
            off += size
        return out

    def init(self, rng: np.random.Generator, zero_last: bool = True) -> "SeqConv":
        for t in self.tensors:
            if t.ndim == 2:
                t[...] = rng.standard_normal(t.shape) / np.sqrt(t.shape[0])
            else:
                t[...] = 0.0
        # residual branches start small so the stack begins near the identity
        for i in range(len(self.dilations)):
            self.tensors[4 + 4 * i][...] *= 0.1
        if zero_last:
            self.tensors[-2][...] = 0.0
        return self

    def copy(self) -> "SeqConv":
        return SeqConv(self.points, self.point_dim, self.groups_in, self.groups_out, self.channels, self.dilations, self.kernel, self.activation, self.params.copy(), self.compute.name)

    def describe(self) -> str:
        dil = ",".join(map(str, self.dilations))
        return f"points={self.points};point_dim={self.point_dim};channels={self.channels};dilations={dil};kernel={self.kernel};compute={self.compute.name}"

    def _unfold(self, h, d):
        n, P, C = h.shape
        r = (self.kernel // 2) * d
        hp = np.zeros((n, P + 2 * r, C), dtype=h.dtype)
        hp[:, r : r + P] = h
        return np.concatenate([hp[:, j * d : j * d + P] for j in range(self.kernel)], axis=2)

    def _fold(self, g, d, C):
        n, P, _ = g.shape
        r = (self.kernel // 2) * d
        gp = np.zeros((n, P + 2 * r, C), dtype=g.dtype)
        for j in range(self.kernel):
            gp[:, j * d : j * d + P] += g[:, :, j * C : (j + 1) * C]
        return gp[:, r : r + P]

    def forward(self, z):
        z = np.asarray(z, dtype=self.compute)
        n = z.shape[0]
        P, p, C = self.points, self.point_dim, self.channels
        # rows are (sample, point) pairs so every product is one 2-D matmul
        x = z.reshape(n, self.groups_in, P, p).transpose(0, 2, 1, 3).reshape(n * P, -1)
        T = [t.astype(self.compute, copy=False) for t in self.tensors]
        h = x @ T[0] + T[1]
        cache = [x, h]
        for i, d in enumerate(self.dilations):
            Wc, bc, W2, b2 = T[2 + 4 * i : 6 + 4 * i]
            cols = self._unfold(h.reshape(n, P, C), d).reshape(n * P, -1)
            pre = cols @ Wc + bc
            act = _act(self.activation, pre)
            h = h + act @ W2 + b2
            cache.append((cols, pre, act))
        out = h @ T[-2] + T[-1]
        cache.append(h)
        flat = out.reshape(n, P, self.groups_out, p).transpose(0, 2, 1, 3).reshape(n, -1)
        cache.append(T)
        return flat.astype(float), cache

    def __call__(self, z):
        return self.forward(z)[0]

    def backward(self, cache, grad_out):
        grad = np.zeros_like(self.params)
        G = self._views(grad)
        T = cache[-1]
        cache = cache[:-1]
        P, p, C = self.points, self.point_dim, self.channels
        g = np.asarray(grad_out, dtype=self.compute)
        n = g.shape[0]
        g = g.reshape(n, self.groups_out, P, p).transpose(0, 2, 1, 3).reshape(n * P, -1)
        G[-2][...] = cache[-1].T @ g
        G[-1][...] = g.sum(axis=0)
        gh = g @ T[-2].T
        for i in range(len(self.dilations) - 1, -1, -1):
            d = self.dilations[i]
            cols, pre, act = cache[2 + i]
            Wc, W2 = T[2 + 4 * i], T[4 + 4 * i]
            G[4 + 4 * i][...] = act.T @ gh
            G[5 + 4 * i][...] = gh.sum(axis=0)
            gpre = (gh @ W2.T) * _act_grad(self.activation, pre, act)
            G[2 + 4 * i][...] = cols.T @ gpre
            G[3 + 4 * i][...] = gpre.sum(axis=0)
            gh = gh + self._fold((gpre @ Wc.T).reshape(n, P, -1), d, C).reshape(n * P, C)
        G[0][...] = cache[0].T @ gh
        G[1][...] = gh.sum(axis=0)
        return grad
