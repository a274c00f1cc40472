"""Multi-view frequency-LSTM encoder.

Per frame, every view slides a window of ``F`` features with stride ``S``
over the input vector and runs the resulting chunk sequence through ``K``
bidirectional LSTM layers of width ``L``. Each view emits the last layer's
forward and backward states for every chunk (chunk-major, forward first),
the views are concatenated in declaration order, optionally projected to
``P`` dims by a linear layer, and fed to a stack of unidirectional LSTMs
running over time followed by a linear output layer.
"""
from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CacheError, ConfigError
from .nn import (
    LinearParams,
    LstmParams,
    linear_backward,
    linear_forward,
    lstm_backward,
    lstm_forward,
)


@dataclass(frozen=True)
class ViewConfig:
    F: int
    S: int
    K: int
    L: int

    def __post_init__(self):
        if not self.F >= self.S >= 1:
            raise ConfigError(f"view needs F >= S >= 1, got F={self.F} S={self.S}")
        if self.K < 1 or self.L < 1:
            raise ConfigError(f"view needs K >= 1 and L >= 1, got K={self.K} L={self.L}")

    @classmethod
    def half_stride(cls, F: int, K: int, L: int) -> "ViewConfig":
        if F % 2:
            raise ConfigError(f"window {F} has no integer half stride")
        return cls(F, F // 2, K, L)

    def chunk_count(self, N: int) -> int:
        return chunk_count(N, self.F, self.S)

    def output_size(self, N: int) -> int:
        return self.chunk_count(N) * 2 * self.L

    def __str__(self):
        return f"{self.F}/{self.S} L{self.K}x{self.L}"


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int
    views: tuple[ViewConfig, ...] = ()
    projection_dim: int | None = None
    tlstm_layers: int = 5
    tlstm_hidden: int = 768
    output_classes: int = 2608
    lfr_stack: int = 3  # windows must span whole stacked bins; 1 disables the check

    def __post_init__(self):
        object.__setattr__(self, "views", tuple(self.views))
        if self.input_dim < 1:
            raise ConfigError("input_dim must be >= 1")
        for v in self.views:
            if v.F > self.input_dim:
                raise ConfigError(f"view {v} window exceeds input_dim {self.input_dim}")
            if (self.input_dim - v.F) % v.S:
                raise ConfigError(f"view {v}: (N - F) = {self.input_dim - v.F} is not a multiple of S")
            if v.F % self.lfr_stack:
                raise ConfigError(f"view {v}: window is not a multiple of the LFR stack {self.lfr_stack}")
        if self.projection_dim is not None:
            if not self.views:
                raise ConfigError("a projection layer needs at least one view")
            if self.projection_dim < 1:
                raise ConfigError("projection_dim must be >= 1")
        if self.tlstm_layers < 1 or self.tlstm_hidden < 1:
            raise ConfigError("need at least one time-LSTM layer of width >= 1")
        if self.output_classes < 2:
            raise ConfigError("output_classes must be >= 2")

    @property
    def view_sizes(self) -> list[int]:
        return [v.output_size(self.input_dim) for v in self.views]

    @property
    def multi_view_dim(self) -> int:
        """Size of the concatenated view output; the raw input size when there are no views."""
        return sum(self.view_sizes) if self.views else self.input_dim

    @property
    def tlstm_input_dim(self) -> int:
        return self.projection_dim if self.projection_dim is not None else self.multi_view_dim


def chunk_count(N: int, F: int, S: int) -> int:
    if F > N or (N - F) % S:
        raise ConfigError(f"window {F}/{S} does not tile {N} features without padding")
    return (N - F + S) // S


def chunk(s, F: int, S: int) -> list[np.ndarray]:
    """Overlapping windows ``s[j*S : j*S + F]`` over the last axis."""
    n = chunk_count(np.shape(s)[-1], F, S)
    return [s[..., j * S : j * S + F] for j in range(n)]


# ---------------------------------------------------------------------------
# topology files


_VIEW_RE = re.compile(r"(\w+)\s*=\s*(\d+)")


def parse_config(text: str) -> EncoderConfig:
    """Parse the line-based topology format.

    ::

        input_dim=768
        view F=24 S=12 K=2 L=16     # S defaults to F/2
        projection=512              # optional
        tlstm=5x768
        outputs=2608
        lfr_stack=3                 # optional

    ``#`` starts a comment. Views keep their file order.
    """
    fields: dict = {}
    views = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if line.startswith("view"):
                kv = dict((k, int(v)) for k, v in _VIEW_RE.findall(line[4:]))
                if set(kv) - {"F", "S", "K", "L"} or not {"F", "K", "L"} <= set(kv):
                    raise ValueError("view needs F, K, L and optionally S")
                if "S" in kv:
                    views.append(ViewConfig(kv["F"], kv["S"], kv["K"], kv["L"]))
                else:
                    views.append(ViewConfig.half_stride(kv["F"], kv["K"], kv["L"]))
                continue
            key, _, value = (p.strip() for p in line.partition("="))
            if key == "input_dim":
                fields["input_dim"] = int(value)
            elif key == "projection":
                fields["projection_dim"] = None if value.lower() == "none" else int(value)
            elif key == "tlstm":
                n, _, m = value.lower().partition("x")
                fields["tlstm_layers"], fields["tlstm_hidden"] = int(n), int(m)
            elif key == "outputs":
                fields["output_classes"] = int(value)
            elif key == "lfr_stack":
                fields["lfr_stack"] = int(value)
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {raw.strip()!r}: {exc}") from exc
    if "input_dim" not in fields:
        raise ConfigError("topology is missing input_dim")
    return EncoderConfig(views=tuple(views), **fields)


def format_config(cfg: EncoderConfig) -> str:
    lines = [f"input_dim={cfg.input_dim}"]
    lines += [f"view F={v.F} S={v.S} K={v.K} L={v.L}" for v in cfg.views]
    if cfg.projection_dim is not None:
        lines.append(f"projection={cfg.projection_dim}")
    lines.append(f"tlstm={cfg.tlstm_layers}x{cfg.tlstm_hidden}")
    lines.append(f"outputs={cfg.output_classes}")
    if cfg.lfr_stack != 3:
        lines.append(f"lfr_stack={cfg.lfr_stack}")
    return "\n".join(lines) + "\n"


def load_config(path) -> EncoderConfig:
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# parameters


@dataclass
class BiLstmParams:
    fwd: LstmParams
    bwd: LstmParams

    def arrays(self):
        return self.fwd.arrays() + self.bwd.arrays()

    def zeros_like(self):
        return BiLstmParams(self.fwd.zeros_like(), self.bwd.zeros_like())


@dataclass
class EncoderParams:
    """All trainable weights. ``views[i][k]`` is layer ``k`` of view ``i``."""

    views: list[list[BiLstmParams]]
    projection: LinearParams | None
    tlstm: list[LstmParams]
    output: LinearParams

    @classmethod
    def init(cls, cfg: EncoderConfig, rng, dtype=np.float64) -> "EncoderParams":
        views = []
        for v in cfg.views:
            layers = []
            for k in range(v.K):
                n_in = v.F if k == 0 else 2 * v.L
                layers.append(BiLstmParams(LstmParams.init(n_in, v.L, rng, dtype), LstmParams.init(n_in, v.L, rng, dtype)))
            views.append(layers)
        projection = None
        if cfg.projection_dim is not None:
            projection = LinearParams.init(cfg.multi_view_dim, cfg.projection_dim, rng, dtype)
        tlstm = []
        n_in = cfg.tlstm_input_dim
        for _ in range(cfg.tlstm_layers):
            tlstm.append(LstmParams.init(n_in, cfg.tlstm_hidden, rng, dtype))
            n_in = cfg.tlstm_hidden
        output = LinearParams.init(cfg.tlstm_hidden, cfg.output_classes, rng, dtype)
        return cls(views, projection, tlstm, output)

    @classmethod
    def zeros(cls, cfg: EncoderConfig, dtype=np.float64) -> "EncoderParams":
        p = cls.init(cfg, np.random.default_rng(0), dtype)
        for a in p.arrays():
            a[...] = 0
        return p

    def map(self, fn) -> "EncoderParams":
        """New parameter set with ``fn`` applied to every array."""
        def lstm(p):
            return LstmParams(fn(p.W_x), fn(p.W_h), fn(p.b))

        def lin(p):
            return LinearParams(fn(p.W), fn(p.b))

        return EncoderParams(
            [[BiLstmParams(lstm(layer.fwd), lstm(layer.bwd)) for layer in view] for view in self.views],
            lin(self.projection) if self.projection is not None else None,
            [lstm(p) for p in self.tlstm],
            lin(self.output),
        )

    def zeros_like(self) -> "EncoderParams":
        return self.map(np.zeros_like)

    def copy(self) -> "EncoderParams":
        return self.map(np.copy)

    def astype(self, dtype) -> "EncoderParams":
        return self.map(lambda a: a.astype(dtype))

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Every array with a stable name, in serialization order."""
        out = []
        for i, view in enumerate(self.views):
            for k, layer in enumerate(view):
                for d, p in (("fwd", layer.fwd), ("bwd", layer.bwd)):
                    out += [(f"view{i}.layer{k}.{d}.{n}", a) for n, a in zip(("W_x", "W_h", "b"), p.arrays())]
        if self.projection is not None:
            out += [("projection.W", self.projection.W), ("projection.b", self.projection.b)]
        for k, p in enumerate(self.tlstm):
            out += [(f"tlstm{k}.{n}", a) for n, a in zip(("W_x", "W_h", "b"), p.arrays())]
        out += [("output.W", self.output.W), ("output.b", self.output.b)]
        return out

    def arrays(self) -> list[np.ndarray]:
        return [a for _, a in self.named_arrays()]

    def num_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def assign(self, arrays) -> "EncoderParams":
        """Overwrite every array in place from ``arrays`` (shapes must match)."""
        mine = self.named_arrays()
        if len(arrays) != len(mine):
            raise ConfigError(f"expected {len(mine)} arrays, got {len(arrays)}")
        for (name, dst), src in zip(mine, arrays):
            if dst.shape != np.shape(src):
                raise ConfigError(f"{name}: expected shape {dst.shape}, got {np.shape(src)}")
            if dst.dtype != np.asarray(src).dtype:
                raise ConfigError(f"{name}: dtype {np.asarray(src).dtype} does not match {dst.dtype}")
            dst[...] = src
        return self


# ---------------------------------------------------------------------------
# forward / backward


@dataclass
class _BiCache:
    fwd: object
    bwd: object
    L: int


def bilstm_layer_forward(xs, layer: BiLstmParams):
    """``xs`` is ``(n_chunks, R, in)``; returns ``(n_chunks, R, 2L)`` with forward states first."""
    hf, cf = lstm_forward(xs, layer.fwd)
    hb, cb = lstm_forward(xs, layer.bwd, reverse=True)
    return np.concatenate([hf, hb], axis=-1), _BiCache(cf, cb, layer.fwd.hidden_dim)


def bilstm_layer_backward(dout, cache: _BiCache, layer_grads: BiLstmParams):
    L = cache.L
    return lstm_backward(dout[..., :L], cache.fwd, layer_grads.fwd) + lstm_backward(
        dout[..., L:], cache.bwd, layer_grads.bwd
    )


@dataclass
class _ViewCache:
    view: ViewConfig
    layers: list[_BiCache]
    n_chunks: int
    rows: int


def _view_forward(s, view: ViewConfig, layers: list[BiLstmParams]):
    # s: (R, N)
    xs = np.stack(chunk(s, view.F, view.S))  # (n, R, F)
    caches = []
    for layer in layers:
        xs, c = bilstm_layer_forward(xs, layer)
        caches.append(c)
    n, R, _ = xs.shape
    return xs.transpose(1, 0, 2).reshape(R, n * 2 * view.L), _ViewCache(view, caches, n, R)


def _view_backward(dv, cache: _ViewCache, grads: list[BiLstmParams], N: int):
    view = cache.view
    dxs = dv.reshape(cache.rows, cache.n_chunks, 2 * view.L).transpose(1, 0, 2)
    for c, g in zip(reversed(cache.layers), reversed(grads)):
        dxs = bilstm_layer_backward(dxs, c, g)
    ds = np.zeros((cache.rows, N), dtype=dv.dtype)
    for j in range(cache.n_chunks):
        ds[:, j * view.S : j * view.S + view.F] += dxs[j]
    return ds


def flstm_view_forward(s, view: ViewConfig, layers: list[BiLstmParams]) -> np.ndarray:
    """View output for one frame ``(N,)`` or a batch of frames ``(R, N)``."""
    s = np.asarray(s)
    out, _ = _view_forward(np.atleast_2d(s), view, layers)
    return out[0] if s.ndim == 1 else out


def _multi_view(s2, cfg: EncoderConfig, params: EncoderParams, workers: int | None):
    if not cfg.views:
        return s2, []
    jobs = list(zip(cfg.views, params.views))
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(lambda job: _view_forward(s2, *job), jobs))
    else:
        results = [_view_forward(s2, *job) for job in jobs]
    return np.concatenate([r[0] for r in results], axis=-1), [r[1] for r in results]


def multi_view_forward(s, cfg: EncoderConfig, params: EncoderParams, workers: int | None = None):
    """Concatenated view outputs (size ``cfg.multi_view_dim``); the input itself when there are no views."""
    s = np.asarray(s, dtype=params.output.W.dtype)
    v, _ = _multi_view(np.atleast_2d(s), cfg, params, workers)
    return v[0] if s.ndim == 1 else v


@dataclass
class EncoderCache:
    cfg: EncoderConfig
    params: EncoderParams
    batch_shape: tuple[int, int]
    squeeze: bool
    views: list[_ViewCache]
    v: np.ndarray
    tlstm: list = field(default_factory=list)
    top: np.ndarray | None = None


def encoder_forward(x, cfg: EncoderConfig, params: EncoderParams, workers: int | None = None):
    """Logits for ``x`` of shape ``(T, N)`` or ``(B, T, N)``.

    Time-LSTM state starts at zero for each utterance. With padded batches the
    padding must sit at the end of each utterance; the LSTMs are causal, so
    valid frames are unaffected by it. Returns ``(logits, cache)``.
    """
    dtype = params.output.W.dtype
    x = np.asarray(x, dtype=dtype)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if x.ndim != 3 or x.shape[-1] != cfg.input_dim:
        raise ConfigError(f"expected (T, {cfg.input_dim}) or (B, T, {cfg.input_dim}) input, got {x.shape}")
    if len(params.tlstm) != cfg.tlstm_layers or len(params.views) != len(cfg.views):
        raise ConfigError("parameters do not match the topology")
    B, T, N = x.shape
    v, view_caches = _multi_view(x.reshape(B * T, N), cfg, params, workers)
    cache = EncoderCache(cfg, params, (B, T), squeeze, view_caches, v)

    h = linear_forward(v, params.projection) if params.projection is not None else v
    h = h.reshape(B, T, -1).transpose(1, 0, 2)  # time-major
    for layer in params.tlstm:
        h, c = lstm_forward(h, layer)
        cache.tlstm.append(c)
    cache.top = h
    logits = linear_forward(h, params.output).transpose(1, 0, 2)
    return (logits[0] if squeeze else logits), cache


def encoder_backward(cache: EncoderCache, dlogits) -> EncoderParams:
    """Gradients of every parameter given the gradient on the logits."""
    params, cfg = cache.params, cache.cfg
    B, T = cache.batch_shape
    dlogits = np.asarray(dlogits, dtype=params.output.W.dtype)
    if cache.squeeze:
        dlogits = dlogits[None]
    if dlogits.shape != (B, T, cfg.output_classes):
        raise CacheError(f"dlogits shape {dlogits.shape} does not match forward output {(B, T, cfg.output_classes)}")
    grads = params.zeros_like()

    dh, _ = linear_backward(cache.top, dlogits.transpose(1, 0, 2), params.output, grads.output)
    for c, g in zip(reversed(cache.tlstm), reversed(grads.tlstm)):
        dh = lstm_backward(dh, c, g)
    dh = dh.transpose(1, 0, 2).reshape(B * T, -1)
    if params.projection is not None:
        dv, _ = linear_backward(cache.v, dh, params.projection, grads.projection)
    else:
        dv = dh
    offset = 0
    for vc, g in zip(cache.views, grads.views):
        size = vc.n_chunks * 2 * vc.view.L
        _view_backward(dv[:, offset : offset + size], vc, g, cfg.input_dim)
        offset += size
    return grads
