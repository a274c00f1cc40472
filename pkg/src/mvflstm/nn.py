"""Dense numerical kernels: LSTM cells and layers, linear maps, softmax, gradient checking.

Everything operates on numpy arrays. Vectors are 1-D arrays; a batch of
vectors is a 2-D array with one row per item, and every kernel here accepts
either form. Gate blocks inside LSTM weights are stacked in the fixed order
``[input, forget, cell, output]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CacheError, ConfigError

GATE_ORDER = ("input", "forget", "cell", "output")


def sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


@dataclass
class LstmParams:
    """Weights of one directional LSTM layer.

    ``W_x`` is ``(4H, input_dim)``, ``W_h`` is ``(4H, H)`` and ``b`` is a
    single ``(4H,)`` bias shared by the input and recurrent paths.
    """

    W_x: np.ndarray
    W_h: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        four_h, n_in = self.W_x.shape
        if four_h % 4 or self.W_h.shape != (four_h, four_h // 4) or self.b.shape != (four_h,):
            raise ConfigError(
                f"inconsistent LSTM shapes W_x={self.W_x.shape} W_h={self.W_h.shape} b={self.b.shape}"
            )

    @property
    def input_dim(self) -> int:
        return self.W_x.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.W_h.shape[1]

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int, dtype=np.float64) -> "LstmParams":
        return cls(
            np.zeros((4 * hidden_dim, input_dim), dtype),
            np.zeros((4 * hidden_dim, hidden_dim), dtype),
            np.zeros(4 * hidden_dim, dtype),
        )

    @classmethod
    def init(cls, input_dim, hidden_dim, rng, dtype=np.float64, forget_bias=1.0):
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, forget-gate bias set to ``forget_bias``."""
        fan_in = input_dim + hidden_dim
        p = cls(
            _uniform(rng, (4 * hidden_dim, input_dim), fan_in, dtype),
            _uniform(rng, (4 * hidden_dim, hidden_dim), fan_in, dtype),
            np.zeros(4 * hidden_dim, dtype),
        )
        p.b[hidden_dim:2 * hidden_dim] = forget_bias
        return p

    def arrays(self) -> list[np.ndarray]:
        return [self.W_x, self.W_h, self.b]

    def zeros_like(self) -> "LstmParams":
        return LstmParams(*(np.zeros_like(a) for a in self.arrays()))

    def num_params(self) -> int:
        return 4 * (self.input_dim + self.hidden_dim + 1) * self.hidden_dim


@dataclass
class LinearParams:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)

    def __post_init__(self):
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ConfigError(f"inconsistent linear shapes W={self.W.shape} b={self.b.shape}")

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    @classmethod
    def zeros(cls, in_dim: int, out_dim: int, dtype=np.float64) -> "LinearParams":
        return cls(np.zeros((out_dim, in_dim), dtype), np.zeros(out_dim, dtype))

    @classmethod
    def init(cls, in_dim, out_dim, rng, dtype=np.float64):
        return cls(_uniform(rng, (out_dim, in_dim), in_dim, dtype), np.zeros(out_dim, dtype))

    def arrays(self) -> list[np.ndarray]:
        return [self.W, self.b]

    def zeros_like(self) -> "LinearParams":
        return LinearParams(np.zeros_like(self.W), np.zeros_like(self.b))

    def num_params(self) -> int:
        return self.in_dim * self.out_dim + self.out_dim


# ---------------------------------------------------------------------------
# LSTM cell


@dataclass
class LstmCellCache:
    params: LstmParams
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray


def lstm_cell_forward(x, h_prev, c_prev, p: LstmParams):
    """One LSTM step. Returns ``(h, c, cache)``.

    ``i, f, o = sigmoid(.)``, ``g = tanh(.)``, ``c = f*c_prev + i*g``,
    ``h = o*tanh(c)``.
    """
    H = p.hidden_dim
    if x.shape[-1] != p.input_dim or h_prev.shape[-1] != H or c_prev.shape != h_prev.shape:
        raise ConfigError(
            f"LSTM step got x{x.shape}, h{h_prev.shape}, c{c_prev.shape} "
            f"for input_dim={p.input_dim}, hidden_dim={H}"
        )
    z = x @ p.W_x.T + h_prev @ p.W_h.T + p.b
    i = sigmoid(z[..., :H])
    f = sigmoid(z[..., H:2 * H])
    g = np.tanh(z[..., 2 * H:3 * H])
    o = sigmoid(z[..., 3 * H:])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return h, c, LstmCellCache(p, x, h_prev, c_prev, i, f, g, o, c, tanh_c)


def lstm_cell_backward(cache: LstmCellCache, dh, dc, grads: LstmParams | None = None):
    """Backward of :func:`lstm_cell_forward`.

    ``dh`` and ``dc`` are the upstream gradients on the step's outputs. Parameter
    gradients are added into ``grads`` (allocated when omitted).
    Returns ``(dx, dh_prev, dc_prev, grads)``.
    """
    p = cache.params
    if dh.shape != cache.c.shape or dc.shape != cache.c.shape:
        raise CacheError(f"upstream gradient shape {dh.shape}/{dc.shape} does not match cache {cache.c.shape}")
    if grads is None:
        grads = p.zeros_like()
    elif grads.W_x.shape != p.W_x.shape or grads.W_h.shape != p.W_h.shape:
        raise CacheError("gradient bundle does not match the cached layer")

    dc_total = dc + dh * cache.o * (1.0 - cache.tanh_c ** 2)
    do = dh * cache.tanh_c * cache.o * (1.0 - cache.o)
    di = dc_total * cache.g * cache.i * (1.0 - cache.i)
    df = dc_total * cache.c_prev * cache.f * (1.0 - cache.f)
    dg = dc_total * cache.i * (1.0 - cache.g ** 2)
    dz = np.concatenate([di, df, dg, do], axis=-1)

    dz2 = np.atleast_2d(dz)
    grads.W_x += dz2.T @ np.atleast_2d(cache.x)
    grads.W_h += dz2.T @ np.atleast_2d(cache.h_prev)
    grads.b += dz2.sum(axis=0)

    dx = dz @ p.W_x
    dh_prev = dz @ p.W_h
    dc_prev = dc_total * cache.f
    return dx, dh_prev, dc_prev, grads


# ---------------------------------------------------------------------------
# LSTM over a sequence


@dataclass
class LstmSeqCache:
    steps: list[LstmCellCache]
    reverse: bool
    input_dim: int


def lstm_forward(xs, p: LstmParams, reverse: bool = False):
    """Run an LSTM over ``xs`` of shape ``(S, ..., input_dim)`` from zero state.

    With ``reverse`` the sequence is consumed last-to-first; outputs stay
    aligned with their input positions.
    """
    S = xs.shape[0]
    state_shape = xs.shape[1:-1] + (p.hidden_dim,)
    h = np.zeros(state_shape, dtype=xs.dtype)
    c = np.zeros(state_shape, dtype=xs.dtype)
    hs = np.empty((S,) + state_shape, dtype=np.result_type(xs, p.W_x))
    steps: list[LstmCellCache | None] = [None] * S
    order = range(S - 1, -1, -1) if reverse else range(S)
    for s in order:
        h, c, steps[s] = lstm_cell_forward(xs[s], h, c, p)
        hs[s] = h
    return hs, LstmSeqCache(steps, reverse, p.input_dim)


def lstm_backward(dhs, cache: LstmSeqCache, grads: LstmParams):
    """Backpropagate ``dhs`` (same shape as the forward outputs) through time."""
    S = len(cache.steps)
    if dhs.shape[0] != S:
        raise CacheError(f"gradient covers {dhs.shape[0]} steps, cache has {S}")
    dxs = np.empty(dhs.shape[:-1] + (cache.input_dim,), dtype=dhs.dtype)
    dh_next = np.zeros_like(dhs[0])
    dc_next = np.zeros_like(dhs[0])
    order = range(S) if cache.reverse else range(S - 1, -1, -1)
    for s in order:
        dxs[s], dh_next, dc_next, _ = lstm_cell_backward(cache.steps[s], dhs[s] + dh_next, dc_next, grads)
    return dxs


# ---------------------------------------------------------------------------
# linear, softmax


def linear_forward(x, p: LinearParams):
    if x.shape[-1] != p.in_dim:
        raise ConfigError(f"linear layer expects {p.in_dim} inputs, got {x.shape[-1]}")
    return x @ p.W.T + p.b


def linear_backward(x, dy, p: LinearParams, grads: LinearParams | None = None):
    """Returns ``(dx, grads)``; accumulates into ``grads``."""
    if dy.shape[-1] != p.out_dim or x.shape[:-1] != dy.shape[:-1]:
        raise ConfigError(f"linear backward got x{x.shape}, dy{dy.shape} for W{p.W.shape}")
    if grads is None:
        grads = p.zeros_like()
    x2 = x.reshape(-1, p.in_dim)
    dy2 = dy.reshape(-1, p.out_dim)
    grads.W += dy2.T @ x2
    grads.b += dy2.sum(axis=0)
    return dy @ p.W, grads


def log_softmax(logits, axis=-1):
    shifted = logits - logits.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax(logits, axis=-1):
    e = np.exp(logits - logits.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def softmax_cross_entropy(logits, target: int):
    """Loss ``-log softmax(logits)[target]`` and its gradient ``softmax - one_hot``."""
    C = logits.shape[-1]
    if not 0 <= target < C:
        raise ConfigError(f"target {target} outside [0, {C})")
    logp = log_softmax(logits)
    dlogits = np.exp(logp)
    dlogits[target] -= 1.0
    return float(-logp[target]), dlogits


# ---------------------------------------------------------------------------
# finite-difference checking


@dataclass
class GradCheckFailure:
    array: int
    index: tuple
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    max_rel_error: float = 0.0
    checked: int = 0
    tolerance: float = 1e-4
    failures: list[GradCheckFailure] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def __str__(self):
        status = "ok" if self.ok else f"{len(self.failures)} FAILED"
        return f"gradcheck: {self.checked} entries, max rel error {self.max_rel_error:.3e} ({status})"


def relative_error(a, n, floor=1e-5):
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps near-zero entries from dominating."""
    return abs(a - n) / max(abs(a), abs(n), floor)


def grad_check(f, params, grads, eps=1e-5, tolerance=1e-4, floor=1e-5, max_per_array=None, rng=None):
    """Compare analytic ``grads`` against central differences of ``f``.

    ``f()`` evaluates the scalar objective from the current contents of the
    arrays in ``params``; entries are perturbed in place and restored.
    ``max_per_array`` limits the check to a random subset of entries per array.
    """
    report = GradCheckReport(tolerance=tolerance)
    rng = np.random.default_rng(0) if rng is None else rng
    for k, (w, g) in enumerate(zip(params, grads)):
        if w.shape != g.shape:
            raise ConfigError(f"param {k} has shape {w.shape} but its gradient has {g.shape}")
        flat_ids = np.arange(w.size)
        if max_per_array is not None and w.size > max_per_array:
            flat_ids = rng.choice(w.size, size=max_per_array, replace=False)
        for flat in flat_ids:
            idx = np.unravel_index(flat, w.shape)
            orig = w[idx]
            w[idx] = orig + eps
            f_plus = f()
            w[idx] = orig - eps
            f_minus = f()
            w[idx] = orig
            numeric = (f_plus - f_minus) / (2 * eps)
            analytic = float(g[idx])
            rel = relative_error(analytic, numeric, floor)
            report.checked += 1
            report.max_rel_error = max(report.max_rel_error, rel)
            if rel > tolerance:
                report.failures.append(GradCheckFailure(k, idx, analytic, numeric, rel))
    return report
