"""Small numpy networks with hand-written backward passes.

Every layer caches what it needs during ``forward`` and accumulates
parameter gradients during ``backward``; callers zero them via
``Network.zero_grad`` or let ``Adam.step`` do it. All math is float64.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy.special import digamma, expit, gammaln

CHECKPOINT_MAGIC = b"HDRLCKPT"
CHECKPOINT_VERSION = 1


def orthogonal(shape: tuple[int, int], rng: np.random.Generator, gain: float = 1.0) -> np.ndarray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(gain * q[:rows, :cols])


def softplus(x):
    return np.logaddexp(0.0, x)


class Dense:
    """y = act(x @ W + b) with act in {"tanh", "linear"}."""

    def __init__(self, n_in: int, n_out: int, activation: str = "tanh",
                 rng: np.random.Generator | None = None, gain: float = 1.0):
        if activation not in ("tanh", "linear"):
            raise ValueError(f"unsupported activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in, self.n_out, self.activation = n_in, n_out, activation
        self.W = orthogonal((n_in, n_out), rng, gain)
        self.b = np.zeros(n_out)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._x = self._y = None

    def params(self):
        return [("W", self.W, self.dW), ("b", self.b, self.db)]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.n_in:
            raise ValueError(f"Dense expects width {self.n_in}, got {x.shape[-1]}")
        z = x @ self.W + self.b
        y = np.tanh(z) if self.activation == "tanh" else z
        self._x, self._y = x, y
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dz = dy * (1.0 - self._y ** 2) if self.activation == "tanh" else dy
        self.dW += self._x.T @ dz
        self.db += dz.sum(axis=0)
        return dz @ self.W.T


class LSTM:
    """Single-layer LSTM over (batch, time, features); returns the last hidden state.

    Gate blocks in the packed weights are ordered input, forget, output, cell.
    """

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in, self.n_out, self.hidden = n_in, hidden, hidden
        h = hidden
        self.W = np.ascontiguousarray(np.concatenate([orthogonal((n_in, h), rng) for _ in range(4)], axis=1))
        self.U = np.ascontiguousarray(np.concatenate([orthogonal((h, h), rng) for _ in range(4)], axis=1))
        self.b = np.zeros(4 * h)
        self.dW = np.zeros_like(self.W)
        self.dU = np.zeros_like(self.U)
        self.db = np.zeros_like(self.b)
        self._cache = None

    def params(self):
        return [("W", self.W, self.dW), ("U", self.U, self.dU), ("b", self.b, self.db)]

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 3 or x.shape[1] == 0:
            raise ValueError("LSTM expects a non-empty (batch, time, features) array")
        if x.shape[2] != self.n_in:
            raise ValueError(f"LSTM expects width {self.n_in}, got {x.shape[2]}")
        bsz, steps, _ = x.shape
        h = self.hidden
        hs = np.zeros((steps + 1, bsz, h))
        cs = np.zeros((steps + 1, bsz, h))
        gates = np.zeros((steps, bsz, 4 * h))
        xw = x @ self.W + self.b  # (B, T, 4H)
        for t in range(steps):
            z = xw[:, t] + hs[t] @ self.U
            g = np.empty_like(z)
            g[:, :3 * h] = expit(z[:, :3 * h])
            g[:, 3 * h:] = np.tanh(z[:, 3 * h:])
            gates[t] = g
            cs[t + 1] = g[:, h:2 * h] * cs[t] + g[:, :h] * g[:, 3 * h:]
            hs[t + 1] = g[:, 2 * h:3 * h] * np.tanh(cs[t + 1])
        self._cache = (x, hs, cs, gates)
        return hs[-1]

    def backward(self, dh_last: np.ndarray) -> np.ndarray:
        x, hs, cs, gates = self._cache
        steps = x.shape[1]
        h = self.hidden
        dx = np.zeros_like(x)
        i, f, o, c_hat = (gates[..., k * h:(k + 1) * h] for k in range(4))
        tc = np.tanh(cs[1:])
        # gate pre-activation gradients are dc * via_c + dh * via_h, blockwise
        via_c = np.concatenate([c_hat * i * (1.0 - i), cs[:-1] * f * (1.0 - f),
                                np.zeros_like(o), i * (1.0 - c_hat ** 2)], axis=2)
        via_h = np.concatenate([np.zeros_like(i), np.zeros_like(f), tc * o * (1.0 - o),
                                np.zeros_like(c_hat)], axis=2)
        h_to_c = o * (1.0 - tc ** 2)
        dz_all = np.empty_like(gates)
        dh = dh_last
        dc = np.zeros_like(dh)
        for t in reversed(range(steps)):
            dc = dc + dh * h_to_c[t]
            dz = np.tile(dc, 4) * via_c[t] + np.tile(dh, 4) * via_h[t]
            dz_all[t] = dz
            dh = dz @ self.U.T
            dc = dc * f[t]
        self.dU += hs[:-1].reshape(-1, h).T @ dz_all.reshape(-1, 4 * h)
        dz_bt = dz_all.transpose(1, 0, 2)  # (B, T, 4H); reshaped matmuls keep this on BLAS
        self.dW += x.reshape(-1, self.n_in).T @ dz_bt.reshape(-1, 4 * h)
        self.db += dz_all.sum(axis=(0, 1))
        dx[:] = dz_bt @ self.W.T
        return dx


class Network:
    """Ordered stack of layers."""

    def __init__(self, layers: list):
        self.layers = list(layers)

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    __call__ = forward

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def named_params(self):
        for i, layer in enumerate(self.layers):
            for name, p, g in layer.params():
                yield f"{i}.{name}", p, g

    def parameters(self) -> list[np.ndarray]:
        return [p for _, p, _ in self.named_params()]

    def gradients(self) -> list[np.ndarray]:
        return [g for _, _, g in self.named_params()]

    def zero_grad(self) -> None:
        for g in self.gradients():
            g.fill(0.0)

    def num_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def widths(self) -> list[int]:
        """Layer boundary widths H^0, H^1, ..., H^n."""
        return [self.layers[0].n_in] + [layer.n_out for layer in self.layers]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.copy() for name, p, _ in self.named_params()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, p, _ in self.named_params():
            if name not in state or state[name].shape != p.shape:
                raise ValueError(f"checkpoint is missing or mis-shapes {name}")
            p[...] = state[name]


def mlp(widths: list[int], rng: np.random.Generator, out_gain: float = 1.0) -> Network:
    """Dense stack: tanh hidden layers, linear output layer."""
    layers = []
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        last = i == len(widths) - 2
        layers.append(Dense(a, b, "linear" if last else "tanh", rng, out_gain if last else 1.0))
    return Network(layers)


def lstm_mlp(n_in: int, hidden: int, n_out: int, n_dense: int, rng: np.random.Generator,
             out_gain: float = 1.0) -> Network:
    """One LSTM layer followed by ``n_dense`` dense layers."""
    head = mlp([hidden] * n_dense + [n_out], rng, out_gain)
    return Network([LSTM(n_in, hidden, rng)] + head.layers)


class Adam:
    """Bias-corrected adaptive-moment descent; zeroes gradients after each step."""

    def __init__(self, network: Network, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.network, self.lr = network, lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in network.parameters()]
        self.v = [np.zeros_like(p) for p in network.parameters()]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.network.parameters(), self.network.gradients(), self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)
            g.fill(0.0)

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {"t": np.array([float(self.t)])}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m{i}"], out[f"v{i}"] = m.copy(), v.copy()
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        self.t = int(state["t"][0])
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            m[...], v[...] = state[f"m{i}"], state[f"v{i}"]


def adam_step(optimizer: Adam, lr: float | None = None) -> None:
    if lr is not None:
        optimizer.lr = lr
    optimizer.step()


class Categorical:
    """Batched categorical distribution over the last axis of ``logits``."""

    def __init__(self, logits: np.ndarray):
        logits = np.atleast_2d(np.asarray(logits, dtype=float))
        shifted = logits - logits.max(axis=-1, keepdims=True)
        self.log_probs = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        self.probs = np.exp(self.log_probs)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(self.probs.shape[0])
        cdf = np.cumsum(self.probs, axis=-1)
        idx = (cdf < u[:, None] * cdf[:, -1:]).sum(axis=-1)
        return np.minimum(idx, self.probs.shape[1] - 1)

    def mode(self) -> np.ndarray:
        return self.probs.argmax(axis=-1)

    def log_prob(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=int)
        return self.log_probs[np.arange(len(idx)), idx]

    def log_prob_grad(self, idx) -> np.ndarray:
        """d log p(idx) / d logits."""
        idx = np.asarray(idx, dtype=int)
        grad = -self.probs.copy()
        grad[np.arange(len(idx)), idx] += 1.0
        return grad

    def entropy(self) -> np.ndarray:
        return -(self.probs * self.log_probs).sum(axis=-1)

    def entropy_grad(self) -> np.ndarray:
        ent = self.entropy()[:, None]
        return -self.probs * (self.log_probs + ent)


BETA_EDGE = 1e-10


class BetaPolicy:
    """Independent Beta factors; ``raw`` holds the alpha logits then the beta logits.

    Shape parameters are 1 + softplus(raw) so every factor is unimodal.
    """

    def __init__(self, raw: np.ndarray):
        raw = np.atleast_2d(np.asarray(raw, dtype=float))
        if raw.shape[1] % 2:
            raise ValueError("Beta head needs an even number of raw outputs")
        d = raw.shape[1] // 2
        self.raw = raw
        self.alpha = 1.0 + softplus(raw[:, :d])
        self.beta = 1.0 + softplus(raw[:, d:])

    @classmethod
    def from_shapes(cls, alpha, beta) -> "BetaPolicy":
        obj = cls.__new__(cls)
        obj.alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
        obj.beta = np.atleast_2d(np.asarray(beta, dtype=float))
        obj.raw = None
        return obj

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return np.clip(rng.beta(self.alpha, self.beta), BETA_EDGE, 1.0 - BETA_EDGE)

    def mean(self) -> np.ndarray:
        return self.alpha / (self.alpha + self.beta)

    def log_prob(self, a: np.ndarray) -> np.ndarray:
        a = np.atleast_2d(a)
        dens = ((self.alpha - 1.0) * np.log(a) + (self.beta - 1.0) * np.log1p(-a)
                - (gammaln(self.alpha) + gammaln(self.beta) - gammaln(self.alpha + self.beta)))
        return dens.sum(axis=-1)

    def shape_grads(self, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """d log p / d alpha and d log p / d beta per coordinate."""
        a = np.atleast_2d(a)
        psi_ab = digamma(self.alpha + self.beta)
        return np.log(a) - digamma(self.alpha) + psi_ab, np.log1p(-a) - digamma(self.beta) + psi_ab

    def log_prob_grad(self, a: np.ndarray) -> np.ndarray:
        """d log p(a) / d raw."""
        ga, gb = self.shape_grads(a)
        d = ga.shape[1]
        return np.concatenate([ga * expit(self.raw[:, :d]), gb * expit(self.raw[:, d:])], axis=1)

    def entropy(self) -> np.ndarray:
        a, b = self.alpha, self.beta
        ent = (gammaln(a) + gammaln(b) - gammaln(a + b) - (a - 1) * digamma(a)
               - (b - 1) * digamma(b) + (a + b - 2) * digamma(a + b))
        return ent.sum(axis=-1)


def grad_check(params: list[np.ndarray], loss_fn, analytic: list[np.ndarray], h: float = 1e-5,
               floor: float = 1e-7) -> float:
    """Worst relative error between ``analytic`` and central differences of ``loss_fn``.

    ``loss_fn()`` must evaluate the scalar loss from the current contents of
    ``params``, which are perturbed in place and restored. The error is
    |a - n| / max(|a|, |n|, floor): entries smaller than ``floor`` are judged
    on an absolute scale, since f64 differences with h = 1e-5 carry about
    1e-10 of absolute noise.
    """
    worst = 0.0
    for p, g in zip(params, analytic):
        for i in np.ndindex(p.shape):
            orig = p[i]
            p[i] = orig + h
            up = loss_fn()
            p[i] = orig - h
            down = loss_fn()
            p[i] = orig
            num = (up - down) / (2.0 * h)
            err = abs(num - g[i]) / max(abs(num), abs(g[i]), floor)
            worst = max(worst, err)
    return worst


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    """Write named float64 tensors.

    Layout: the 8-byte magic ``HDRLCKPT``, a little-endian uint32 version,
    a uint32 header length, a UTF-8 JSON header ``[[name, shape], ...]``,
    then each tensor's values as little-endian float64 in row-major order,
    in header order.
    """
    header = json.dumps([[k, list(v.shape)] for k, v in tensors.items()]).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(np.array([CHECKPOINT_VERSION, len(header)], dtype="<u4").tobytes())
        fh.write(header)
        for v in tensors.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a checkpoint file")
    version, hlen = np.frombuffer(blob[8:16], dtype="<u4")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    header = json.loads(blob[16:16 + hlen].decode())
    offset = 16 + hlen
    out = {}
    for name, shape in header:
        n = int(np.prod(shape)) if shape else 1
        out[name] = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).reshape(shape).copy()
        offset += 8 * n
    return out
