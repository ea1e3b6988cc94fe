"""From-scratch stacked bidirectional LSTM classifier.

Forward pass, categorical cross-entropy with optional L1/L2 penalties, and
exact gradients via backpropagation through time. Everything runs in float64
numpy; gate kernels are packed (in_dim x 4H) in (input, forget, cell, output)
order, with per-gate views exposed on the parameter objects.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, DataError, DivergenceError

REG_CHOICES = ("none", "L1", "L2", "L1+L2")
PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class ModelConfig:
    input_channels: int
    window_len: int
    n_layers: int
    hidden_units: int
    dropout_rate: float
    kernel_reg: str = "none"
    recurrent_reg: str = "none"
    n_classes: int = 2
    l1: float = 0.01
    l2: float = 0.01

    def __post_init__(self) -> None:
        if self.input_channels < 1 or self.window_len < 1:
            raise ConfigError("input_channels and window_len must be positive")
        if self.n_layers < 1 or self.hidden_units < 1:
            raise ConfigError("n_layers and hidden_units must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")
        if self.kernel_reg not in REG_CHOICES or self.recurrent_reg not in REG_CHOICES:
            raise ConfigError(f"regularization must be one of {REG_CHOICES}")
        if self.n_classes < 2:
            raise ConfigError("n_classes must be >= 2")

    def to_json_dict(self) -> dict:
        return {
            "input_channels": self.input_channels,
            "window_len": self.window_len,
            "n_layers": self.n_layers,
            "hidden_units": self.hidden_units,
            "dropout_rate": self.dropout_rate,
            "kernel_reg": self.kernel_reg,
            "recurrent_reg": self.recurrent_reg,
            "n_classes": self.n_classes,
            "l1": self.l1,
            "l2": self.l2,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ModelConfig":
        return cls(
            input_channels=int(data["input_channels"]),
            window_len=int(data["window_len"]),
            n_layers=int(data["n_layers"]),
            hidden_units=int(data["hidden_units"]),
            dropout_rate=float(data["dropout_rate"]),
            kernel_reg=str(data.get("kernel_reg", "none")),
            recurrent_reg=str(data.get("recurrent_reg", "none")),
            n_classes=int(data["n_classes"]),
            l1=float(data.get("l1", 0.01)),
            l2=float(data.get("l2", 0.01)),
        )


@dataclass(eq=False)
class LstmDirectionParams:
    """One direction of one layer: packed input/recurrent kernels plus bias."""

    wx: np.ndarray  # (in_dim, 4H)
    wh: np.ndarray  # (H, 4H)
    b: np.ndarray  # (4H,)

    @property
    def hidden(self) -> int:
        return self.wh.shape[0]

    def _gate(self, arr: np.ndarray, k: int) -> np.ndarray:
        h = self.hidden
        return arr[..., k * h:(k + 1) * h]

    # Per-gate views in (i, f, g, o) order.
    @property
    def w_i(self) -> np.ndarray:
        return self._gate(self.wx, 0)

    @property
    def w_f(self) -> np.ndarray:
        return self._gate(self.wx, 1)

    @property
    def w_g(self) -> np.ndarray:
        return self._gate(self.wx, 2)

    @property
    def w_o(self) -> np.ndarray:
        return self._gate(self.wx, 3)

    @property
    def u_i(self) -> np.ndarray:
        return self._gate(self.wh, 0)

    @property
    def u_f(self) -> np.ndarray:
        return self._gate(self.wh, 1)

    @property
    def u_g(self) -> np.ndarray:
        return self._gate(self.wh, 2)

    @property
    def u_o(self) -> np.ndarray:
        return self._gate(self.wh, 3)

    @property
    def b_i(self) -> np.ndarray:
        return self._gate(self.b, 0)

    @property
    def b_f(self) -> np.ndarray:
        return self._gate(self.b, 1)

    @property
    def b_g(self) -> np.ndarray:
        return self._gate(self.b, 2)

    @property
    def b_o(self) -> np.ndarray:
        return self._gate(self.b, 3)


@dataclass(eq=False)
class LstmLayerParams:
    fwd: LstmDirectionParams
    bwd: LstmDirectionParams


@dataclass(eq=False)
class BiLstmModel:
    config: ModelConfig
    layers: list[LstmLayerParams]
    head_w: np.ndarray  # (2H, n_classes)
    head_b: np.ndarray  # (n_classes,)

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        """All trainable tensors in declaration order (checkpoint contract)."""
        out = []
        for i, layer in enumerate(self.layers):
            for tag, d in (("fwd", layer.fwd), ("bwd", layer.bwd)):
                out.append((f"layer{i}.{tag}.wx", d.wx))
                out.append((f"layer{i}.{tag}.wh", d.wh))
                out.append((f"layer{i}.{tag}.b", d.b))
        out.append(("head.w", self.head_w))
        out.append(("head.b", self.head_b))
        return out

    def parameter_count(self) -> int:
        return sum(arr.size for _, arr in self.parameters())


def parameter_count(config: ModelConfig) -> int:
    """Trainable parameter count for a config, without building the model."""
    h = config.hidden_units
    total = 0
    in_dim = config.input_channels
    for _ in range(config.n_layers):
        total += 2 * (in_dim * 4 * h + h * 4 * h + 4 * h)
        in_dim = 2 * h
    total += 2 * h * config.n_classes + config.n_classes
    return total


def _orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def init_model(config: ModelConfig, rng: np.random.Generator) -> BiLstmModel:
    """Glorot-uniform input kernels, orthogonal recurrent kernels, zero biases
    except the forget gate (set to 1)."""
    h = config.hidden_units

    def direction(in_dim: int) -> LstmDirectionParams:
        limit = np.sqrt(6.0 / (in_dim + h))
        wx = rng.uniform(-limit, limit, size=(in_dim, 4 * h))
        wh = np.hstack([_orthogonal(rng, h) for _ in range(4)])
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0
        return LstmDirectionParams(wx=wx, wh=wh, b=b)

    layers = []
    in_dim = config.input_channels
    for _ in range(config.n_layers):
        layers.append(LstmLayerParams(fwd=direction(in_dim), bwd=direction(in_dim)))
        in_dim = 2 * h

    limit = np.sqrt(6.0 / (2 * h + config.n_classes))
    head_w = rng.uniform(-limit, limit, size=(2 * h, config.n_classes))
    head_b = np.zeros(config.n_classes)
    return BiLstmModel(config=config, layers=layers, head_w=head_w, head_b=head_b)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def lstm_cell_step(
    x_t: np.ndarray,
    h_prev: np.ndarray,
    c_prev: np.ndarray,
    params: LstmDirectionParams,
) -> tuple[np.ndarray, np.ndarray]:
    """One LSTM step: sigmoid gates, tanh cell activation.

    Accepts single vectors or batches (leading axis).
    """
    h = params.hidden
    z = x_t @ params.wx + h_prev @ params.wh + params.b
    i = _sigmoid(z[..., 0:h])
    f = _sigmoid(z[..., h:2 * h])
    g = np.tanh(z[..., 2 * h:3 * h])
    o = _sigmoid(z[..., 3 * h:4 * h])
    c_t = f * c_prev + i * g
    h_t = o * np.tanh(c_t)
    return h_t, c_t


@dataclass(eq=False)
class _DirCache:
    """Per-direction activations in processing order (index 0 = first step)."""

    x: np.ndarray  # (n, W, in_dim) inputs, processing order
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    c_prev: np.ndarray
    h_prev: np.ndarray
    tanh_c: np.ndarray


def _run_direction(
    x_seq: np.ndarray, params: LstmDirectionParams, reverse: bool,
) -> tuple[np.ndarray, _DirCache]:
    """Scan one direction over (n, W, in_dim); returns h per processing step."""
    n, w, _ = x_seq.shape
    hdim = params.hidden
    x_proc = x_seq[:, ::-1] if reverse else x_seq
    xw = x_proc.reshape(n * w, -1) @ params.wx
    xw = xw.reshape(n, w, 4 * hdim)

    shape = (n, w, hdim)
    cache = _DirCache(
        x=x_proc,
        i=np.empty(shape), f=np.empty(shape), g=np.empty(shape), o=np.empty(shape),
        c=np.empty(shape), c_prev=np.empty(shape), h_prev=np.empty(shape),
        tanh_c=np.empty(shape),
    )
    h_seq = np.empty(shape)
    h_t = np.zeros((n, hdim))
    c_t = np.zeros((n, hdim))
    for s in range(w):
        cache.h_prev[:, s] = h_t
        cache.c_prev[:, s] = c_t
        z = xw[:, s] + h_t @ params.wh + params.b
        i = _sigmoid(z[:, 0:hdim])
        f = _sigmoid(z[:, hdim:2 * hdim])
        g = np.tanh(z[:, 2 * hdim:3 * hdim])
        o = _sigmoid(z[:, 3 * hdim:4 * hdim])
        c_t = f * c_t + i * g
        tc = np.tanh(c_t)
        h_t = o * tc
        cache.i[:, s], cache.f[:, s], cache.g[:, s], cache.o[:, s] = i, f, g, o
        cache.c[:, s], cache.tanh_c[:, s] = c_t, tc
        h_seq[:, s] = h_t
    return h_seq, cache


def _backward_direction(
    dh_proc: np.ndarray, params: LstmDirectionParams, cache: _DirCache,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """BPTT for one direction. ``dh_proc``: gradient on h per processing step.

    Returns (dx_proc, dwx, dwh, db).
    """
    n, w, hdim = dh_proc.shape
    dz_all = np.empty((n, w, 4 * hdim))
    dh_carry = np.zeros((n, hdim))
    dc_carry = np.zeros((n, hdim))
    for s in range(w - 1, -1, -1):
        dh = dh_proc[:, s] + dh_carry
        o, tc = cache.o[:, s], cache.tanh_c[:, s]
        dc = dc_carry + dh * o * (1.0 - tc * tc)
        i, f, g = cache.i[:, s], cache.f[:, s], cache.g[:, s]
        dz = dz_all[:, s]
        dz[:, 0:hdim] = dc * g * i * (1.0 - i)
        dz[:, hdim:2 * hdim] = dc * cache.c_prev[:, s] * f * (1.0 - f)
        dz[:, 2 * hdim:3 * hdim] = dc * i * (1.0 - g * g)
        dz[:, 3 * hdim:4 * hdim] = dh * tc * o * (1.0 - o)
        dh_carry = dz @ params.wh.T
        dc_carry = dc * f
    flat_dz = dz_all.reshape(n * w, 4 * hdim)
    dwx = cache.x.reshape(n * w, -1).T @ flat_dz
    dwh = cache.h_prev.reshape(n * w, hdim).T @ flat_dz
    db = flat_dz.sum(axis=0)
    dx_proc = flat_dz @ params.wx.T
    return dx_proc.reshape(n, w, -1), dwx, dwh, db


@dataclass(eq=False)
class _ForwardCache:
    x_seqs: list[np.ndarray]  # input sequence fed to each layer (post-dropout)
    dir_caches: list[tuple[_DirCache, _DirCache]]
    masks: list[Optional[np.ndarray]]  # per-layer (n, 2H) dropout mask or None
    features: np.ndarray  # (n, 2H) input to the dense head
    probs: np.ndarray


def _check_batch(model: BiLstmModel, batch: np.ndarray) -> np.ndarray:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    cfg = model.config
    if x.ndim != 3 or x.shape[1] != cfg.input_channels or x.shape[2] != cfg.window_len:
        raise DataError(
            f"batch shape {np.shape(batch)} does not match "
            f"(channels={cfg.input_channels}, window={cfg.window_len})"
        )
    return x


def _forward_cached(
    model: BiLstmModel,
    batch: np.ndarray,
    mode: str,
    rng: Optional[np.random.Generator],
) -> _ForwardCache:
    if mode not in ("train", "infer"):
        raise ConfigError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = _check_batch(model, batch)
    cfg = model.config
    p = cfg.dropout_rate if mode == "train" else 0.0
    if p > 0.0 and rng is None:
        raise ConfigError("train-mode forward with dropout needs an explicit rng")

    seq = np.swapaxes(x, 1, 2)  # (n, W, channels)
    n = seq.shape[0]
    x_seqs: list[np.ndarray] = []
    dir_caches: list[tuple[_DirCache, _DirCache]] = []
    masks: list[Optional[np.ndarray]] = []

    features = None
    for li, layer in enumerate(model.layers):
        x_seqs.append(seq)
        h_fwd, cache_f = _run_direction(seq, layer.fwd, reverse=False)
        h_bwd, cache_b = _run_direction(seq, layer.bwd, reverse=True)
        dir_caches.append((cache_f, cache_b))

        mask = None
        if p > 0.0:
            keep = rng.random((n, 2 * cfg.hidden_units)) >= p
            mask = keep.astype(np.float64) / (1.0 - p)
        masks.append(mask)

        last = li == len(model.layers) - 1
        if last:
            # Readout: forward state at the last input step, backward state at
            # the first (= its own final processing step for both).
            feat = np.concatenate([h_fwd[:, -1], h_bwd[:, -1]], axis=1)
            features = feat if mask is None else feat * mask
        else:
            # h_bwd is in processing order; flip to align per input timestep.
            out = np.concatenate([h_fwd, h_bwd[:, ::-1]], axis=2)
            if mask is not None:
                out = out * mask[:, None, :]
            seq = out

    logits = features @ model.head_w + model.head_b
    if not np.all(np.isfinite(logits)):
        raise DivergenceError("non-finite activations in forward pass")
    logits = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(logits)
    probs = ex / ex.sum(axis=1, keepdims=True)
    return _ForwardCache(
        x_seqs=x_seqs, dir_caches=dir_caches, masks=masks,
        features=features, probs=probs,
    )


def forward(
    model: BiLstmModel,
    batch: np.ndarray,
    mode: str = "infer",
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Class probabilities, one row per sample, rows summing to 1."""
    return _forward_cached(model, batch, mode, rng).probs


def forward_features(
    model: BiLstmModel,
    batch: np.ndarray,
    mode: str = "infer",
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """The (n, 2H) feature vector fed to the dense head."""
    return _forward_cached(model, batch, mode, rng).features


def predict(model: BiLstmModel, x: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    """Argmax labels in infer mode, evaluated in chunks."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty(len(x), dtype=np.int64)
    for start in range(0, len(x), batch_size):
        probs = forward(model, x[start:start + batch_size])
        out[start:start + batch_size] = np.argmax(probs, axis=1)
    return out


def _one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim == 2:
        return np.asarray(labels, dtype=np.float64)
    if labels.min() < 0 or labels.max() >= n_classes:
        raise DataError("label out of range")
    eye = np.zeros((labels.size, n_classes))
    eye[np.arange(labels.size), labels] = 1.0
    return eye


def _reg_flags(reg: str) -> tuple[bool, bool]:
    return reg in ("L1", "L1+L2"), reg in ("L2", "L1+L2")


def penalty(model: BiLstmModel) -> float:
    cfg = model.config
    kernel_l1, kernel_l2 = _reg_flags(cfg.kernel_reg)
    rec_l1, rec_l2 = _reg_flags(cfg.recurrent_reg)
    total = 0.0
    kernels = [d.wx for layer in model.layers for d in (layer.fwd, layer.bwd)]
    kernels.append(model.head_w)
    recurrents = [d.wh for layer in model.layers for d in (layer.fwd, layer.bwd)]
    if kernel_l1:
        total += cfg.l1 * sum(np.abs(w).sum() for w in kernels)
    if kernel_l2:
        total += cfg.l2 * sum((w * w).sum() for w in kernels)
    if rec_l1:
        total += cfg.l1 * sum(np.abs(w).sum() for w in recurrents)
    if rec_l2:
        total += cfg.l2 * sum((w * w).sum() for w in recurrents)
    return float(total)


def _penalty_grad(weights: np.ndarray, reg: str, l1: float, l2: float) -> np.ndarray:
    has_l1, has_l2 = _reg_flags(reg)
    grad = np.zeros_like(weights)
    if has_l1:
        grad += l1 * np.sign(weights)  # subgradient 0 at w == 0
    if has_l2:
        grad += 2.0 * l2 * weights
    return grad


def loss(probs: np.ndarray, labels: np.ndarray, model: BiLstmModel) -> float:
    """Mean categorical cross-entropy plus the model's active penalties.

    ``labels`` may be int labels or a one-hot matrix. True-class probabilities
    are clamped at 1e-12 before the log.
    """
    probs = np.asarray(probs, dtype=np.float64)
    onehot = _one_hot(labels, probs.shape[1])
    p_true = np.clip((probs * onehot).sum(axis=1), PROB_CLAMP, None)
    ce = float(-np.log(p_true).mean())
    return ce + penalty(model)


@dataclass(eq=False)
class GradientSet:
    """Gradients with the same tree shape as the model parameters."""

    by_name: dict[str, np.ndarray]

    def as_list(self, model: BiLstmModel) -> list[np.ndarray]:
        return [self.by_name[name] for name, _ in model.parameters()]


def backward(
    model: BiLstmModel,
    batch: np.ndarray,
    labels: np.ndarray,
    mode: str = "train",
    rng: Optional[np.random.Generator] = None,
) -> tuple[float, GradientSet]:
    """Loss and exact gradients of it (penalties included) for one batch.

    The internal forward pass draws the dropout masks that the backward pass
    then reuses, so the pair is always consistent.
    """
    cache = _forward_cached(model, batch, mode, rng)
    cfg = model.config
    n = cache.probs.shape[0]
    onehot = _one_hot(labels, cfg.n_classes)

    p_true = np.clip((cache.probs * onehot).sum(axis=1), PROB_CLAMP, None)
    loss_value = float(-np.log(p_true).mean()) + penalty(model)
    if not np.isfinite(loss_value):
        raise DivergenceError("non-finite loss")

    grads: dict[str, np.ndarray] = {}
    dlogits = (cache.probs - onehot) / n
    grads["head.w"] = cache.features.T @ dlogits + _penalty_grad(
        model.head_w, cfg.kernel_reg, cfg.l1, cfg.l2
    )
    grads["head.b"] = dlogits.sum(axis=0)
    dfeat = dlogits @ model.head_w.T

    h = cfg.hidden_units
    w = cfg.window_len
    dseq: Optional[np.ndarray] = None  # gradient on an intermediate layer's output
    for li in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[li]
        cache_f, cache_b = cache.dir_caches[li]
        mask = cache.masks[li]
        last = li == len(model.layers) - 1

        dh_f = np.zeros((n, w, h))
        dh_b = np.zeros((n, w, h))
        if last:
            d = dfeat if mask is None else dfeat * mask
            dh_f[:, -1] = d[:, :h]  # final processing step of each direction
            dh_b[:, -1] = d[:, h:]
        else:
            d = dseq if mask is None else dseq * mask[:, None, :]
            dh_f = d[..., :h]
            dh_b = d[..., h:][:, ::-1]  # back to the backward direction's order

        dx_f, dwx_f, dwh_f, db_f = _backward_direction(dh_f, layer.fwd, cache_f)
        dx_b, dwx_b, dwh_b, db_b = _backward_direction(dh_b, layer.bwd, cache_b)

        grads[f"layer{li}.fwd.wx"] = dwx_f + _penalty_grad(
            layer.fwd.wx, cfg.kernel_reg, cfg.l1, cfg.l2)
        grads[f"layer{li}.fwd.wh"] = dwh_f + _penalty_grad(
            layer.fwd.wh, cfg.recurrent_reg, cfg.l1, cfg.l2)
        grads[f"layer{li}.fwd.b"] = db_f
        grads[f"layer{li}.bwd.wx"] = dwx_b + _penalty_grad(
            layer.bwd.wx, cfg.kernel_reg, cfg.l1, cfg.l2)
        grads[f"layer{li}.bwd.wh"] = dwh_b + _penalty_grad(
            layer.bwd.wh, cfg.recurrent_reg, cfg.l1, cfg.l2)
        grads[f"layer{li}.bwd.b"] = db_b

        # dx_b is in the backward direction's processing order; flip before
        # summing the two directions' input gradients.
        dseq = dx_f + dx_b[:, ::-1]

    return loss_value, GradientSet(by_name=grads)


def gradient_check(
    model: BiLstmModel,
    batch: np.ndarray,
    labels: np.ndarray,
    eps: float = 1e-5,
) -> float:
    """Max relative error between BPTT and central finite differences.

    Runs in infer mode (dropout off). Intended for tiny 64-bit models.
    """
    if eps <= 0:
        raise ConfigError("eps must be positive")

    def loss_at() -> float:
        return loss(forward(model, batch, mode="infer"), labels, model)

    _, grads = backward(model, batch, labels, mode="infer")
    worst = 0.0
    for name, param in model.parameters():
        analytic = grads.by_name[name]
        it = np.nditer(param, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            original = param[idx]
            param[idx] = original + eps
            up = loss_at()
            param[idx] = original - eps
            down = loss_at()
            param[idx] = original
            numeric = (up - down) / (2.0 * eps)
            ga = analytic[idx]
            rel = abs(ga - numeric) / max(abs(ga), abs(numeric), 1e-8)
            worst = max(worst, rel)
            it.iternext()
    return worst


# --- checkpoint format -------------------------------------------------------

_CKPT_MAGIC = b"BLSM"
_CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sIIIIIIdBBdd")


def save_model(model: BiLstmModel, path: str | Path) -> None:
    """Versioned binary checkpoint: header + float64-LE tensors in order."""
    cfg = model.config
    header = _CKPT_HEADER.pack(
        _CKPT_MAGIC, _CKPT_VERSION,
        cfg.input_channels, cfg.window_len, cfg.n_layers, cfg.hidden_units,
        cfg.n_classes, cfg.dropout_rate,
        REG_CHOICES.index(cfg.kernel_reg), REG_CHOICES.index(cfg.recurrent_reg),
        cfg.l1, cfg.l2,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for _, arr in model.parameters():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_model(path: str | Path) -> BiLstmModel:
    raw = Path(path).read_bytes()
    if len(raw) < _CKPT_HEADER.size:
        raise DataError(f"checkpoint {path} truncated")
    (magic, version, channels, window, layers, hidden, classes,
     dropout, kreg, rreg, l1, l2) = _CKPT_HEADER.unpack_from(raw)
    if magic != _CKPT_MAGIC:
        raise DataError(f"checkpoint {path}: bad magic")
    if version != _CKPT_VERSION:
        raise DataError(f"checkpoint {path}: unsupported version {version}")
    config = ModelConfig(
        input_channels=channels, window_len=window, n_layers=layers,
        hidden_units=hidden, dropout_rate=dropout,
        kernel_reg=REG_CHOICES[kreg], recurrent_reg=REG_CHOICES[rreg],
        n_classes=classes, l1=l1, l2=l2,
    )
    model = init_model(config, np.random.default_rng(0))
    flat = np.frombuffer(raw, dtype="<f8", offset=_CKPT_HEADER.size)
    expected = model.parameter_count()
    if flat.size != expected:
        raise DataError(
            f"checkpoint {path}: {flat.size} values, config implies {expected}"
        )
    offset = 0
    for _, arr in model.parameters():
        arr[...] = flat[offset:offset + arr.size].reshape(arr.shape)
        offset += arr.size
    return model


def clone_parameters(model: BiLstmModel) -> list[np.ndarray]:
    return [arr.copy() for _, arr in model.parameters()]


def restore_parameters(model: BiLstmModel, snapshot: list[np.ndarray]) -> None:
    for (_, arr), saved in zip(model.parameters(), snapshot):
        arr[...] = saved
