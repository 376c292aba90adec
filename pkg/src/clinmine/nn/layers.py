"""Layers with hand-written backward passes.

Each layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``Parameter.grad`` during ``backward``.
Batched sequence inputs are ``[B, T, ...]`` with per-sequence ``lengths``;
positions at or beyond a sequence's length are padding.
"""

from __future__ import annotations

import numpy as np

from .params import Parameter, glorot_uniform


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def length_mask(lengths: np.ndarray, T: int) -> np.ndarray:
    return np.arange(T)[None, :] < np.asarray(lengths)[:, None]


class Layer:
    def params(self) -> list[Parameter]:
        return []


class Dense(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, name: str = "dense"):
        self.W = Parameter(f"{name}.W", glorot_uniform(rng, n_in, n_out))
        self.b = Parameter(f"{name}.b", np.zeros(n_out))
        self._x: np.ndarray | None = None

    def params(self) -> list[Parameter]:
        return [self.W, self.b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return x @ self.W.value + self.b.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._x
        n_in = x.shape[-1]
        self.W.grad += x.reshape(-1, n_in).T @ dy.reshape(-1, dy.shape[-1])
        self.b.grad += dy.reshape(-1, dy.shape[-1]).sum(axis=0)
        return dy @ self.W.value.T


class Embedding(Layer):
    """Trainable lookup table; ``forward`` takes an integer array of any shape."""

    def __init__(self, n_rows: int, dim: int, rng: np.random.Generator, name: str = "embedding"):
        limit = np.sqrt(3.0 / dim)
        self.table = Parameter(f"{name}.table", rng.uniform(-limit, limit, size=(n_rows, dim)))
        self._ids: np.ndarray | None = None

    def params(self) -> list[Parameter]:
        return [self.table]

    def forward(self, ids: np.ndarray) -> np.ndarray:
        self._ids = ids
        return self.table.value[ids]

    def backward(self, dy: np.ndarray) -> None:
        d = self.table.value.shape[1]
        np.add.at(self.table.grad, self._ids.reshape(-1), dy.reshape(-1, d))


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by 1/(1-p); identity when not training."""

    def __init__(self, p: float):
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout probability must be in [0, 1)")
        self.p = p
        self._mask: np.ndarray | None = None

    def forward(self, x: np.ndarray, rng: np.random.Generator | None, training: bool) -> np.ndarray:
        if not training or self.p == 0.0:
            self._mask = None
            return x
        self._mask = (rng.random(x.shape) >= self.p) / (1.0 - self.p)
        return x * self._mask

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy if self._mask is None else dy * self._mask


class CharCNN(Layer):
    """1-d convolution over character positions with max-over-time pooling.

    Filters have shape ``[window, dim, n_filters]`` and no bias. Inputs are
    zero-padded by ``(window - 1) // 2`` on the left and the remainder on the
    right, so every character position yields one output.
    """

    def __init__(self, dim: int, n_filters: int, window: int, rng: np.random.Generator,
                 name: str = "char_cnn"):
        self.window = window
        self.filters = Parameter(
            f"{name}.filters", glorot_uniform(rng, window * dim, n_filters, (window, dim, n_filters)))
        self._cache = None

    @classmethod
    def from_filters(cls, filters: np.ndarray, name: str = "char_cnn") -> "CharCNN":
        layer = cls.__new__(cls)
        layer.window = filters.shape[0]
        layer.filters = Parameter(f"{name}.filters", filters)
        layer._cache = None
        return layer

    def params(self) -> list[Parameter]:
        return [self.filters]

    def forward(self, x: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        """``x``: ``[N, L, d]`` character vectors; returns ``[N, k]``."""
        F = self.filters.value
        w, d, k = F.shape
        N, L, dx = x.shape
        if dx != d:
            raise ValueError(f"char vector dim {dx} != filter dim {d}")
        lengths = np.maximum(np.asarray(lengths), 1)
        valid = length_mask(lengths, L)
        x = x * valid[:, :, None]
        left = (w - 1) // 2
        xp = np.zeros((N, L + w - 1, d))
        xp[:, left:left + L] = x
        conv = np.zeros((N, L, k))
        for j in range(w):
            conv += xp[:, j:j + L] @ F[j]
        conv = np.where(valid[:, :, None], conv, -np.inf)
        arg = conv.argmax(axis=1)  # [N, k], first index on ties
        pooled = np.take_along_axis(conv, arg[:, None, :], axis=1)[:, 0, :]
        self._cache = (xp, valid, arg, L)
        return pooled

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xp, valid, arg, L = self._cache
        F = self.filters.value
        w, d, k = F.shape
        N = dy.shape[0]
        dconv = np.zeros((N, L, k))
        np.put_along_axis(dconv, arg[:, None, :], dy[:, None, :], axis=1)
        dxp = np.zeros_like(xp)
        for j in range(w):
            seg = xp[:, j:j + L].reshape(-1, d)
            self.filters.grad[j] += seg.T @ dconv.reshape(-1, k)
            dxp[:, j:j + L] += dconv @ F[j].T
        left = (w - 1) // 2
        return dxp[:, left:left + L] * valid[:, :, None]


class LSTM(Layer):
    """Unidirectional LSTM, gate order (input, forget, cell, output), zero initial state."""

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator, name: str = "lstm",
                 forget_bias: float = 1.0):
        H = hidden
        self.hidden = H
        self.Wx = Parameter(f"{name}.Wx", glorot_uniform(rng, n_in, 4 * H))
        self.Wh = Parameter(f"{name}.Wh", glorot_uniform(rng, H, 4 * H))
        b = np.zeros(4 * H)
        b[H:2 * H] = forget_bias
        self.b = Parameter(f"{name}.b", b)
        self._cache = None

    def params(self) -> list[Parameter]:
        return [self.Wx, self.Wh, self.b]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """``x``: ``[B, T, D]`` -> hidden states ``[B, T, H]``."""
        B, T, D = x.shape
        if D != self.Wx.value.shape[0]:
            raise ValueError(f"LSTM input dim {D} != {self.Wx.value.shape[0]}")
        H = self.hidden
        xproj = x @ self.Wx.value + self.b.value
        Wh = self.Wh.value
        gates = np.empty((T, B, 4 * H))
        cells = np.empty((T + 1, B, H))
        hs = np.empty((T + 1, B, H))
        tcs = np.empty((T, B, H))
        cells[0] = 0.0
        hs[0] = 0.0
        for t in range(T):
            a = xproj[:, t] + hs[t] @ Wh
            g = gates[t]
            g[:, :2 * H] = sigmoid(a[:, :2 * H])
            g[:, 2 * H:3 * H] = np.tanh(a[:, 2 * H:3 * H])
            g[:, 3 * H:] = sigmoid(a[:, 3 * H:])
            cells[t + 1] = g[:, H:2 * H] * cells[t] + g[:, :H] * g[:, 2 * H:3 * H]
            tcs[t] = np.tanh(cells[t + 1])
            hs[t + 1] = g[:, 3 * H:] * tcs[t]
        self._cache = (x, gates, cells, hs, tcs)
        return hs[1:].transpose(1, 0, 2).copy()

    def backward(self, dh_all: np.ndarray) -> np.ndarray:
        x, gates, cells, hs, tcs = self._cache
        B, T, D = x.shape
        H = self.hidden
        Wh = self.Wh.value
        da_all = np.empty((T, B, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        dWh = np.zeros_like(Wh)
        for t in reversed(range(T)):
            g = gates[t]
            i, f, c_hat, o = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
            dh = dh_all[:, t] + dh_next
            tc = tcs[t]
            dc = dc_next + dh * o * (1.0 - tc * tc)
            da = da_all[t]
            da[:, :H] = dc * c_hat * i * (1.0 - i)
            da[:, H:2 * H] = dc * cells[t] * f * (1.0 - f)
            da[:, 2 * H:3 * H] = dc * i * (1.0 - c_hat * c_hat)
            da[:, 3 * H:] = dh * tc * o * (1.0 - o)
            dWh += hs[t].T @ da
            dh_next = da @ Wh.T
            dc_next = dc * f
        da_bt = da_all.transpose(1, 0, 2)
        self.Wh.grad += dWh
        self.Wx.grad += x.reshape(-1, D).T @ da_bt.reshape(-1, 4 * H)
        self.b.grad += da_bt.reshape(-1, 4 * H).sum(axis=0)
        return da_bt @ self.Wx.value.T


def reverse_index(lengths: np.ndarray, T: int) -> np.ndarray:
    """Per-row index that reverses the first ``lengths[b]`` positions and leaves
    padding in place. It is its own inverse."""
    t = np.arange(T)[None, :]
    lengths = np.asarray(lengths)[:, None]
    return np.where(t < lengths, lengths - 1 - t, t)


class BiLSTM(Layer):
    """Forward and backward LSTMs concatenated per position: ``[B, T, 2H]``.

    The backward LSTM runs over each sequence reversed within its own length,
    so padding never leaks into valid positions.
    """

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator, name: str = "bilstm"):
        self.fwd = LSTM(n_in, hidden, rng, f"{name}.fwd")
        self.bwd = LSTM(n_in, hidden, rng, f"{name}.bwd")
        self.hidden = hidden
        self._rev = None

    def params(self) -> list[Parameter]:
        return self.fwd.params() + self.bwd.params()

    def forward(self, x: np.ndarray, lengths: np.ndarray | None = None) -> np.ndarray:
        B, T, _ = x.shape
        if lengths is None:
            lengths = np.full(B, T)
        rows = np.arange(B)[:, None]
        rev = reverse_index(lengths, T)
        self._rev = (rows, rev)
        hf = self.fwd.forward(x)
        hb = self.bwd.forward(x[rows, rev])[rows, rev]
        return np.concatenate([hf, hb], axis=-1)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        rows, rev = self._rev
        H = self.hidden
        dx = self.fwd.backward(dy[..., :H])
        dx += self.bwd.backward(dy[..., H:][rows, rev])[rows, rev]
        return dx

    def final_states(self, out: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        """Last forward state (position ``len-1``) ⊕ last backward state (position 0)."""
        H = self.hidden
        rows = np.arange(out.shape[0])
        return np.concatenate([out[rows, np.asarray(lengths) - 1, :H], out[:, 0, H:]], axis=-1)

    def final_states_backward(self, d_final: np.ndarray, lengths: np.ndarray, T: int) -> np.ndarray:
        H = self.hidden
        B = d_final.shape[0]
        dout = np.zeros((B, T, 2 * H))
        dout[np.arange(B), np.asarray(lengths) - 1, :H] = d_final[:, :H]
        dout[:, 0, H:] = d_final[:, H:]
        return dout


# --------------------------------------------------------------------------
# Single-sequence conveniences
# --------------------------------------------------------------------------

def char_conv_maxpool(char_vectors: np.ndarray, filters: np.ndarray) -> np.ndarray:
    """``[L, d]`` character vectors, ``[w, d, k]`` filters -> pooled ``[k]``."""
    char_vectors = np.asarray(char_vectors, dtype=np.float64)
    filters = np.asarray(filters, dtype=np.float64)
    if char_vectors.ndim != 2 or filters.ndim != 3:
        raise ValueError("expected char_vectors [L, d] and filters [w, d, k]")
    L, d = char_vectors.shape
    if L < 1:
        raise ValueError("need at least one character")
    if filters.shape[1] != d:
        raise ValueError(f"shape mismatch: char dim {d} vs filter dim {filters.shape[1]}")
    return CharCNN.from_filters(filters).forward(char_vectors[None], np.array([L]))[0]


def bilstm(inputs: np.ndarray, layer: BiLSTM) -> np.ndarray:
    """``[T, d]`` -> ``[T, 2H]`` through ``layer``."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[0] < 1:
        raise ValueError("expected inputs [T, d] with T >= 1")
    return layer.forward(inputs[None])[0]
