"""From-scratch function approximator: a dense encoder for static features, a
single LSTM cell over the event history, and a dense head emitting |A| x K
decomposed action values.

Everything is float64 numpy with hand-written reverse-mode gradients, verified
against central finite differences. Parameters are immutable snapshots (plain
dicts of named arrays inside a frozen dataclass), so sharing them across
readers is safe; updates are pure functions returning new snapshots.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .rlcore import DecomposedQRow

__all__ = [
    "ApproximatorConfig",
    "NetworkParams",
    "Observation",
    "CheckpointError",
    "init_params",
    "forward",
    "forward_values",
    "loss_and_gradient",
    "sgd_step",
    "clip_gradients",
    "zero_gradients",
    "save_params",
    "load_params",
    "params_fingerprint",
    "IncrementalEncoder",
]


class CheckpointError(Exception):
    """Raised when a parameter checkpoint cannot be loaded safely."""


@dataclass(frozen=True)
class ApproximatorConfig:
    """Network sizes and the learning step; all widths are configurable and
    none of them come from the source method (which leaves them open)."""

    static_dim: int
    event_dim: int
    n_actions: int
    n_dims: int
    static_hidden: tuple[int, ...] = (64,)
    recurrent_width: int = 64
    head_hidden: tuple[int, ...] = (128,)
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self) -> None:
        sizes = (
            self.static_dim,
            self.event_dim,
            self.n_actions,
            self.n_dims,
            self.recurrent_width,
            *self.static_hidden,
            *self.head_hidden,
        )
        if any(int(x) <= 0 for x in sizes):
            raise ValueError("all network sizes must be positive")
        if self.learning_rate <= 0.0:
            raise ValueError("learning rate must be positive")
        object.__setattr__(self, "static_hidden", tuple(int(x) for x in self.static_hidden))
        object.__setattr__(self, "head_hidden", tuple(int(x) for x in self.head_hidden))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ApproximatorConfig":
        d = dict(d)
        d["static_hidden"] = tuple(d["static_hidden"])
        d["head_hidden"] = tuple(d["head_hidden"])
        return cls(**d)


@dataclass(frozen=True)
class NetworkParams:
    """All learnable arrays, keyed by layer name; float64 throughout."""

    config: ApproximatorConfig
    arrays: dict[str, np.ndarray]

    def copy_arrays(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.arrays.items()}


@dataclass(frozen=True)
class Observation:
    """Static features plus the variable-length encoded event history.

    The history is self-contained (full sequence from the episode start), so a
    replayed sample never depends on recurrent state carried from elsewhere.
    """

    static: np.ndarray
    history: np.ndarray

    def __post_init__(self) -> None:
        static = np.asarray(self.static, dtype=np.float64)
        history = np.asarray(self.history, dtype=np.float64)
        if static.ndim != 1:
            raise ValueError(f"static features must be a vector, got shape {static.shape}")
        if history.ndim != 2 and not (history.ndim == 1 and history.size == 0):
            raise ValueError(f"history must be (T, D) with T >= 0, got shape {history.shape}")
        if history.size == 0:
            history = history.reshape(0, history.shape[1] if history.ndim == 2 else 0)
        object.__setattr__(self, "static", static)
        object.__setattr__(self, "history", history)

    @classmethod
    def empty_history(cls, static, event_dim: int) -> "Observation":
        return cls(np.asarray(static, dtype=np.float64), np.zeros((0, event_dim)))


def _dense_keys(prefix: str, n_layers: int):
    for i in range(n_layers):
        yield f"{prefix}.{i}.w", f"{prefix}.{i}.b"


def init_params(config: ApproximatorConfig) -> NetworkParams:
    """Glorot-uniform dense layers, small-uniform recurrent weights, zero biases."""
    rng = np.random.default_rng(config.seed)
    arrays: dict[str, np.ndarray] = {}

    def dense(prefix: str, dims: list[int]) -> None:
        for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
            limit = np.sqrt(6.0 / (d_in + d_out))
            arrays[f"{prefix}.{i}.w"] = rng.uniform(-limit, limit, size=(d_in, d_out))
            arrays[f"{prefix}.{i}.b"] = np.zeros(d_out)

    h = config.recurrent_width
    dense("static", [config.static_dim, *config.static_hidden])
    limit = np.sqrt(1.0 / h)
    arrays["lstm.wx"] = rng.uniform(-limit, limit, size=(config.event_dim, 4 * h))
    arrays["lstm.wh"] = rng.uniform(-limit, limit, size=(h, 4 * h))
    arrays["lstm.b"] = np.zeros(4 * h)
    head_in = config.static_hidden[-1] + h
    dense("head", [head_in, *config.head_hidden, config.n_actions * config.n_dims])
    return NetworkParams(config, arrays)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _lstm_gates(params: NetworkParams, x: np.ndarray, h: np.ndarray):
    wx, wh, b = params.arrays["lstm.wx"], params.arrays["lstm.wh"], params.arrays["lstm.b"]
    z = x @ wx + h @ wh + b
    hh = params.config.recurrent_width
    i = _sigmoid(z[..., 0 * hh : 1 * hh])
    f = _sigmoid(z[..., 1 * hh : 2 * hh])
    g = np.tanh(z[..., 2 * hh : 3 * hh])
    o = _sigmoid(z[..., 3 * hh : 4 * hh])
    return i, f, g, o


def _dense_stack_forward(params, prefix, n_layers, x, final_linear):
    """Apply a tanh MLP; the last layer is linear when final_linear."""
    cache = []
    for idx, (wk, bk) in enumerate(_dense_keys(prefix, n_layers)):
        w, b = params.arrays[wk], params.arrays[bk]
        z = x @ w + b
        if final_linear and idx == n_layers - 1:
            a = z
        else:
            a = np.tanh(z)
        cache.append((x, a, wk, bk, final_linear and idx == n_layers - 1))
        x = a
    return x, cache

class _BatchCache:
    __slots__ = (
        "statics", "static_cache", "x_seq", "mask_seq", "steps",
        "h_final", "head_cache", "out_shape",
    )


def _forward_batch(params: NetworkParams, statics: np.ndarray, histories) :
    """Padded batch forward pass; returns (out (B, A, K), cache for backward).

    Histories are front-padded so every sequence ends at the final step; the
    mask keeps h and c frozen at zero until a sequence begins.
    """
    cfg = params.config
    b = statics.shape[0]
    if statics.shape != (b, cfg.static_dim):
        raise ValueError(
            f"static features have shape {statics.shape}, expected ({b}, {cfg.static_dim})"
        )
    lengths = [h.shape[0] for h in histories]
    t_max = max(lengths) if lengths else 0
    hh = cfg.recurrent_width

    x_seq = np.zeros((t_max, b, cfg.event_dim))
    mask_seq = np.zeros((t_max, b))
    for j, hist in enumerate(histories):
        t_j = hist.shape[0]
        if t_j and hist.shape[1] != cfg.event_dim:
            raise ValueError(
                f"history event dim {hist.shape[1]} does not match config {cfg.event_dim}"
            )
        if t_j:
            x_seq[t_max - t_j :, j, :] = hist
            mask_seq[t_max - t_j :, j] = 1.0

    static_enc, static_cache = _dense_stack_forward(
        params, "static", len(cfg.static_hidden), statics, final_linear=False
    )

    h = np.zeros((b, hh))
    c = np.zeros((b, hh))
    steps = []
    for t in range(t_max):
        x_t = x_seq[t]
        m = mask_seq[t][:, None]
        i, f, g, o = _lstm_gates(params, x_t, h)
        c_new = f * c + i * g
        tanh_c = np.tanh(c_new)
        h_new = o * tanh_c
        steps.append((x_t, h, c, i, f, g, o, tanh_c, m))
        h = m * h_new + (1.0 - m) * h
        c = m * c_new + (1.0 - m) * c

    u = np.concatenate([static_enc, h], axis=1)
    n_head = len(cfg.head_hidden) + 1
    out_flat, head_cache = _dense_stack_forward(params, "head", n_head, u, final_linear=True)
    out = out_flat.reshape(b, cfg.n_actions, cfg.n_dims)

    cache = _BatchCache()
    cache.statics = statics
    cache.static_cache = static_cache
    cache.x_seq = x_seq
    cache.mask_seq = mask_seq
    cache.steps = steps
    cache.h_final = h
    cache.head_cache = head_cache
    cache.out_shape = out.shape
    return out, cache


def _backward_batch(params: NetworkParams, cache: _BatchCache, d_out: np.ndarray):
    cfg = params.config
    grads = zero_gradients(params)
    b = d_out.shape[0]
    d_flat = d_out.reshape(b, cfg.n_actions * cfg.n_dims)

    # Head MLP.
    d_u = d_flat
    for x, a, wk, bk, linear in reversed(cache.head_cache):
        dz = d_u if linear else d_u * (1.0 - a * a)
        grads[wk] += x.T @ dz
        grads[bk] += dz.sum(axis=0)
        d_u = dz @ params.arrays[wk].T

    s_enc_dim = cfg.static_hidden[-1]
    d_static_enc = d_u[:, :s_enc_dim]
    dh = d_u[:, s_enc_dim:].copy()
    dc = np.zeros_like(dh)

    wh = params.arrays["lstm.wh"]
    wx = params.arrays["lstm.wx"]
    for x_t, h_prev, c_prev, i, f, g, o, tanh_c, m in reversed(cache.steps):
        do = dh * tanh_c
        dct = dc + dh * o * (1.0 - tanh_c * tanh_c)
        di = dct * g
        dg = dct * i
        df = dct * c_prev
        dz = np.concatenate(
            [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g * g), do * o * (1.0 - o)],
            axis=1,
        )
        dz *= m
        grads["lstm.wx"] += x_t.T @ dz
        grads["lstm.wh"] += h_prev.T @ dz
        grads["lstm.b"] += dz.sum(axis=0)
        dh_prev = dz @ wh.T
        # Masked-off samples pass gradients straight through to the prior step.
        dh = m * dh_prev + (1.0 - m) * dh
        dc = m * (dct * f) + (1.0 - m) * dc

    d_s = d_static_enc
    for x, a, wk, bk, linear in reversed(cache.static_cache):
        dz = d_s * (1.0 - a * a)
        grads[wk] += x.T @ dz
        grads[bk] += dz.sum(axis=0)
        d_s = dz @ params.arrays[wk].T
    return grads


def forward_values(params: NetworkParams, obs: Observation) -> np.ndarray:
    """Raw (|A|, K) decomposed values for one observation."""
    out, _ = _forward_batch(params, obs.static[None, :], [obs.history])
    return out[0]


def forward(params: NetworkParams, obs: Observation) -> DecomposedQRow:
    """Decomposed action values for one observation.

    Pure function of (params, obs): an empty history starts from the zero
    recurrent state, and identical inputs give bitwise-identical outputs.
    """
    return DecomposedQRow(forward_values(params, obs))


def loss_and_gradient(params: NetworkParams, batch):
    """Mean over the batch of the K-wise squared error on the taken action.

    `batch` is a sequence of (Observation, action index, target K-vector).
    The inner sum runs over every value dimension, so masked dimensions keep
    receiving gradient whenever their targets differ from the predictions.
    """
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    cfg = params.config
    statics = np.stack([obs.static for obs, _, _ in batch])
    histories = [obs.history for obs, _, _ in batch]
    actions = np.array([a for _, a, _ in batch], dtype=np.int64)
    targets = np.stack([np.asarray(y, dtype=np.float64) for _, _, y in batch])
    if not np.isfinite(targets).all():
        raise ValueError("targets contain non-finite values")
    if targets.shape != (len(batch), cfg.n_dims):
        raise ValueError(f"targets must be (B, K={cfg.n_dims}), got {targets.shape}")
    if (actions < 0).any() or (actions >= cfg.n_actions).any():
        raise ValueError("action index out of range")

    out, cache = _forward_batch(params, statics, histories)
    b = len(batch)
    rows = out[np.arange(b), actions]  # (B, K)
    diff = rows - targets
    loss = float((diff * diff).sum() / b)

    d_out = np.zeros_like(out)
    d_out[np.arange(b), actions] = 2.0 * diff / b
    grads = _backward_batch(params, cache, d_out)
    return loss, grads


def zero_gradients(params: NetworkParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.arrays.items()}


def sgd_step(params: NetworkParams, grads: dict[str, np.ndarray], alpha: float) -> NetworkParams:
    """w <- w - alpha * grad, elementwise; returns a new snapshot."""
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    if set(grads) != set(params.arrays):
        raise ValueError("gradient keys do not match parameter keys")
    new = {}
    for k, w in params.arrays.items():
        g = grads[k]
        if g.shape != w.shape:
            raise ValueError(f"gradient shape mismatch for {k}: {g.shape} vs {w.shape}")
        new[k] = w - alpha * g
    return NetworkParams(params.config, new)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float):
    """Scale the whole gradient so its global L2 norm is at most max_norm."""
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if max_norm <= 0.0 or total <= max_norm:
        return grads, total
    scale = max_norm / total
    return {k: g * scale for k, g in grads.items()}, total


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------
#
# Binary layout: magic (8 bytes) | version u32 | header length u32 |
# header JSON (config + shape table) | little-endian float64 payloads in
# shape-table order | crc32 u32 over everything before it.

_MAGIC = b"MASKQNET"
FORMAT_VERSION = 1


def save_params(params: NetworkParams, path) -> None:
    header = {
        "config": params.config.to_dict(),
        "arrays": [[k, list(v.shape)] for k, v in sorted(params.arrays.items())],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<I", FORMAT_VERSION)
    blob += struct.pack("<I", len(header_bytes))
    blob += header_bytes
    for k, _ in header["arrays"]:
        blob += np.ascontiguousarray(params.arrays[k], dtype="<f8").tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_params(path) -> NetworkParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(_MAGIC) + 12:
        raise CheckpointError(f"checkpoint {path} is truncated")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CheckpointError(f"checkpoint {path} failed its checksum")
    if body[: len(_MAGIC)] != _MAGIC:
        raise CheckpointError(f"checkpoint {path} has the wrong magic bytes")
    off = len(_MAGIC)
    (version,) = struct.unpack_from("<I", body, off)
    off += 4
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint {path} has format version {version}, expected {FORMAT_VERSION}"
        )
    (header_len,) = struct.unpack_from("<I", body, off)
    off += 4
    header = json.loads(body[off : off + header_len].decode("utf-8"))
    off += header_len
    config = ApproximatorConfig.from_dict(header["config"])
    arrays = {}
    for name, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        raw = body[off : off + nbytes]
        if len(raw) != nbytes:
            raise CheckpointError(f"checkpoint {path} is truncated")
        arrays[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
        off += nbytes
    if off != len(body):
        raise CheckpointError(f"checkpoint {path} has trailing bytes")
    return NetworkParams(config, arrays)


def params_fingerprint(params: NetworkParams) -> str:
    """Stable content hash; used to verify frozen snapshots stay frozen."""
    digest = hashlib.sha256()
    digest.update(json.dumps(params.config.to_dict(), sort_keys=True).encode("utf-8"))
    for k in sorted(params.arrays):
        digest.update(k.encode("utf-8"))
        digest.update(np.ascontiguousarray(params.arrays[k], dtype="<f8").tobytes())
    return digest.hexdigest()


class IncrementalEncoder:
    """Carries the recurrent state across a growing event history.

    Produces outputs identical to `forward` on the full history; acting paths
    use it so each decision only processes the events appended since the last
    one. Call reset() (or construct anew) at episode boundaries, and after the
    parameters object is swapped.
    """

    def __init__(self, params: NetworkParams):
        self._params = params
        hh = params.config.recurrent_width
        self._h = np.zeros(hh)
        self._c = np.zeros(hh)
        self._consumed = 0

    def reset(self, params: NetworkParams | None = None) -> None:
        if params is not None:
            self._params = params
        self._h[:] = 0.0
        self._c[:] = 0.0
        self._consumed = 0

    def q_values(self, obs: Observation) -> np.ndarray:
        params = self._params
        history = obs.history
        if history.shape[0] < self._consumed:
            raise ValueError(
                "history shrank; incremental encoding requires an append-only episode"
            )
        for t in range(self._consumed, history.shape[0]):
            x = history[t]
            i, f, g, o = _lstm_gates(params, x, self._h)
            self._c = f * self._c + i * g
            self._h = o * np.tanh(self._c)
        self._consumed = history.shape[0]

        x = obs.static
        for wk, bk in _dense_keys("static", len(params.config.static_hidden)):
            x = np.tanh(x @ params.arrays[wk] + params.arrays[bk])
        u = np.concatenate([x, self._h])
        n_head = len(params.config.head_hidden) + 1
        for idx, (wk, bk) in enumerate(_dense_keys("head", n_head)):
            z = u @ params.arrays[wk] + params.arrays[bk]
            u = z if idx == n_head - 1 else np.tanh(z)
        return u.reshape(params.config.n_actions, params.config.n_dims)
