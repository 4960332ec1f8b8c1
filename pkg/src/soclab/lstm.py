"""From-scratch LSTM state-of-charge estimator.

Single LSTM layer over an N x 3 window of normalized (V, I, T) frames with
zero initial state, followed by a sigmoid scalar head:

    i_t = sigmoid(W_i x_t + U_i h_{t-1} + b_i)
    f_t = sigmoid(W_f x_t + U_f h_{t-1} + b_f)
    g_t = tanh   (W_g x_t + U_g h_{t-1} + b_g)
    o_t = sigmoid(W_o x_t + U_o h_{t-1} + b_o)
    c_t = f_t * c_{t-1} + i_t * g_t
    h_t = o_t * tanh(c_t)

    soc_raw = sigmoid(w_out . h_N + b_out)

Training is full backpropagation through time on mean squared error, with
plain minibatch gradient descent (gradient-norm clipping at 1.0) or Adam.
Everything is plain numpy float64 and deterministic given the seed.

The gate weights are stored stacked as W (4H x 3), U (4H x H), b (4H) with
row blocks ordered [input, forget, candidate, output]; per-gate views are
exposed as properties and the model file stores the blocks separately.

Faulted inputs can be arbitrary 64-bit patterns (huge, Inf, NaN): the
forward pass must swallow them without raising; NaN propagates to the
prediction and is the campaign/monitor's problem, not an error here.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import InputWindow, NormalizationBounds
from .faults import INPUT_CHANNELS, bits_to_float, float_to_bits

MODEL_MAGIC = "SOCLAB-LSTM"
MODEL_VERSION = 1

_GATES = ("i", "f", "g", "o")


class BadFormatError(ValueError):
    """Model file is not a valid model document."""


class ShapeMismatchError(BadFormatError):
    """Model file header and weight array sizes disagree."""


class TrainingDivergedError(RuntimeError):
    """Training loss became non-finite."""


@dataclass
class LstmModel:
    hidden_size: int
    window_length: int
    W: np.ndarray  # (4H, 3) input weights, gate blocks [i|f|g|o]
    U: np.ndarray  # (4H, H) recurrent weights
    b: np.ndarray  # (4H,) gate biases
    w_out: np.ndarray  # (H,) output head weights
    b_out: float
    bounds: NormalizationBounds

    def __post_init__(self) -> None:
        h = self.hidden_size
        if h < 1 or self.window_length < 1:
            raise ValueError("hidden_size and window_length must be >= 1")
        if self.W.shape != (4 * h, INPUT_CHANNELS):
            raise ValueError(f"W shape {self.W.shape} != {(4 * h, INPUT_CHANNELS)}")
        if self.U.shape != (4 * h, h):
            raise ValueError(f"U shape {self.U.shape} != {(4 * h, h)}")
        if self.b.shape != (4 * h,):
            raise ValueError(f"b shape {self.b.shape} != {(4 * h,)}")
        if self.w_out.shape != (h,):
            raise ValueError(f"w_out shape {self.w_out.shape} != {(h,)}")
        arrays = (self.W, self.U, self.b, self.w_out)
        if not all(np.all(np.isfinite(a)) for a in arrays) or not math.isfinite(self.b_out):
            raise ValueError("model weights must be finite")

    def _gate_block(self, which: str, matrix: np.ndarray) -> np.ndarray:
        k = _GATES.index(which)
        return matrix[k * self.hidden_size : (k + 1) * self.hidden_size]

    @property
    def W_i(self) -> np.ndarray:
        return self._gate_block("i", self.W)

    @property
    def W_f(self) -> np.ndarray:
        return self._gate_block("f", self.W)

    @property
    def W_g(self) -> np.ndarray:
        return self._gate_block("g", self.W)

    @property
    def W_o(self) -> np.ndarray:
        return self._gate_block("o", self.W)

    @property
    def U_i(self) -> np.ndarray:
        return self._gate_block("i", self.U)

    @property
    def U_f(self) -> np.ndarray:
        return self._gate_block("f", self.U)

    @property
    def U_g(self) -> np.ndarray:
        return self._gate_block("g", self.U)

    @property
    def U_o(self) -> np.ndarray:
        return self._gate_block("o", self.U)

    @property
    def b_i(self) -> np.ndarray:
        return self._gate_block("i", self.b)

    @property
    def b_f(self) -> np.ndarray:
        return self._gate_block("f", self.b)

    @property
    def b_g(self) -> np.ndarray:
        return self._gate_block("g", self.b)

    @property
    def b_o(self) -> np.ndarray:
        return self._gate_block("o", self.b)


@dataclass(frozen=True)
class Prediction:
    end_step: int
    soc_raw: float
    soc_est: float  # clamp(soc_raw, 0, 1)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1.0
    batch_size: int = 64
    seed: int = 0
    optimizer: str = "gd"  # plain clipped gradient descent; "adam" optional
    clip_norm: float = 1.0


def init_model(
    hidden_size: int,
    window_length: int,
    bounds: NormalizationBounds,
    seed: int = 0,
) -> LstmModel:
    """Seeded uniform(-1/sqrt(H), 1/sqrt(H)) initialization of all parameters."""
    rng = np.random.default_rng(seed)
    h = hidden_size
    scale = 1.0 / math.sqrt(h)
    return LstmModel(
        hidden_size=h,
        window_length=window_length,
        W=rng.uniform(-scale, scale, size=(4 * h, INPUT_CHANNELS)),
        U=rng.uniform(-scale, scale, size=(4 * h, h)),
        b=rng.uniform(-scale, scale, size=4 * h),
        w_out=rng.uniform(-scale, scale, size=h),
        b_out=float(rng.uniform(-scale, scale)),
        bounds=bounds,
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp(-|x|) never overflows; NaN propagates through both branches
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _stack_windows(windows) -> np.ndarray:
    """Windows to a (N, B, 3) time-major batch."""
    return np.stack([w.frames for w in windows], axis=1)


def _forward_full(model: LstmModel, X: np.ndarray, keep_cache: bool):
    """Batched forward pass over a (N, B, 3) input block.

    Returns (soc_raw (B,), cache) where the cache holds everything the
    backward pass needs; cache is None unless requested.
    """
    n_steps, batch, _ = X.shape
    h_dim = model.hidden_size
    h = np.zeros((batch, h_dim))
    c = np.zeros((batch, h_dim))
    cache = [] if keep_cache else None

    with np.errstate(all="ignore"):
        for t in range(n_steps):
            a = X[t] @ model.W.T + h @ model.U.T + model.b
            gi = _sigmoid(a[:, :h_dim])
            gf = _sigmoid(a[:, h_dim : 2 * h_dim])
            gg = np.tanh(a[:, 2 * h_dim : 3 * h_dim])
            go = _sigmoid(a[:, 3 * h_dim :])
            c_new = gf * c + gi * gg
            hc = np.tanh(c_new)
            h_new = go * hc
            if keep_cache:
                cache.append((X[t], h, c, gi, gf, gg, go, hc))
            h, c = h_new, c_new

        z = h @ model.w_out + model.b_out
        soc_raw = _sigmoid(z)
    return soc_raw, (h, z, cache) if keep_cache else None


def forward(model: LstmModel, window: InputWindow) -> Prediction:
    """Deterministic single-window inference."""
    if window.frames.shape != (model.window_length, INPUT_CHANNELS):
        raise ValueError(
            f"window shape {window.frames.shape} does not match model "
            f"({model.window_length}, {INPUT_CHANNELS})"
        )
    raw, _ = _forward_full(model, window.frames[:, None, :], keep_cache=False)
    soc_raw = float(raw[0])
    return Prediction(window.end_step, soc_raw, float(np.clip(soc_raw, 0.0, 1.0)))


def predict_windows(model: LstmModel, windows) -> list[Prediction]:
    """Batched inference over a window schedule, one prediction per window."""
    windows = list(windows)
    if not windows:
        return []
    for w in windows:
        if w.frames.shape != (model.window_length, INPUT_CHANNELS):
            raise ValueError(f"window ending at {w.end_step} has shape {w.frames.shape}")
    raw, _ = _forward_full(model, _stack_windows(windows), keep_cache=False)
    clamped = np.clip(raw, 0.0, 1.0)
    return [
        Prediction(w.end_step, float(r), float(s))
        for w, r, s in zip(windows, raw, clamped)
    ]


def loss_and_gradients(model: LstmModel, X: np.ndarray, targets: np.ndarray):
    """Mean squared error over a (N, B, 3) batch and its full BPTT gradients.

    Returns (loss, grads) with grads keyed like the parameters:
    W, U, b, w_out, b_out (b_out as a 1-element array).
    """
    targets = np.asarray(targets, dtype=np.float64)
    batch = X.shape[1]
    h_dim = model.hidden_size

    soc_raw, (h_last, _, cache) = _forward_full(model, X, keep_cache=True)
    err = soc_raw - targets
    loss = float(np.mean(err**2))

    dW = np.zeros_like(model.W)
    dU = np.zeros_like(model.U)
    db = np.zeros_like(model.b)

    dz = (2.0 / batch) * err * soc_raw * (1.0 - soc_raw)
    dw_out = h_last.T @ dz
    db_out = float(np.sum(dz))
    dh = dz[:, None] * model.w_out
    dc = np.zeros((batch, h_dim))

    for x_t, h_prev, c_prev, gi, gf, gg, go, hc in reversed(cache):
        do = dh * hc
        dc = dc + dh * go * (1.0 - hc**2)
        di = dc * gg
        df = dc * c_prev
        dg = dc * gi
        da = np.concatenate(
            [
                di * gi * (1.0 - gi),
                df * gf * (1.0 - gf),
                dg * (1.0 - gg**2),
                do * go * (1.0 - go),
            ],
            axis=1,
        )
        dW += da.T @ x_t
        dU += da.T @ h_prev
        db += da.sum(axis=0)
        dh = da @ model.U
        dc = dc * gf

    grads = {"W": dW, "U": dU, "b": db, "w_out": dw_out, "b_out": np.array([db_out])}
    return loss, grads


def _clip_gradients(grads: dict, clip_norm: float) -> None:
    total = math.sqrt(sum(float(np.sum(g**2)) for g in grads.values()))
    if clip_norm > 0 and total > clip_norm:
        factor = clip_norm / total
        for g in grads.values():
            g *= factor


def train(
    model: LstmModel, windows, targets, config: TrainConfig = TrainConfig()
) -> tuple[LstmModel, list[float]]:
    """Fit the model to (window, soc target) pairs; returns a new model and the
    per-epoch mean training MSE history.  Deterministic given the seed."""
    windows = list(windows)
    targets = np.asarray(targets, dtype=np.float64)
    if not windows:
        raise ValueError("empty training set")
    if len(windows) != len(targets):
        raise ValueError("windows and targets length mismatch")
    if not np.all(np.isfinite(targets)):
        raise ValueError("targets must be finite")
    if np.any((targets < 0) | (targets > 1)):
        raise ValueError("targets must lie in [0, 1]")
    if config.optimizer not in ("gd", "adam"):
        raise ValueError(f"unknown optimizer {config.optimizer!r}")

    X_all = _stack_windows(windows)
    model = copy.deepcopy(model)
    params = {
        "W": model.W,
        "U": model.U,
        "b": model.b,
        "w_out": model.w_out,
        "b_out": np.array([model.b_out]),
    }

    rng = np.random.default_rng(config.seed)
    adam_m = {k: np.zeros_like(v) for k, v in params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    history: list[float] = []
    n = len(windows)
    batch_size = min(config.batch_size, n)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            loss, grads = loss_and_gradients(model, X_all[:, idx, :], targets[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss} at epoch {epoch}, batch offset {start}"
                )
            batch_losses.append(loss)
            _clip_gradients(grads, config.clip_norm)
            step += 1
            for key, p in params.items():
                g = grads[key]
                if config.optimizer == "gd":
                    p -= config.learning_rate * g
                else:
                    adam_m[key] = beta1 * adam_m[key] + (1 - beta1) * g
                    adam_v[key] = beta2 * adam_v[key] + (1 - beta2) * g**2
                    m_hat = adam_m[key] / (1 - beta1**step)
                    v_hat = adam_v[key] / (1 - beta2**step)
                    p -= config.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
            # b_out lives in a 1-element array for uniform updates; mirror it back
            model.b_out = float(params["b_out"][0])
        history.append(float(np.mean(batch_losses)))

    return model, history


def evaluate_mse(model: LstmModel, windows, targets) -> float:
    """Mean squared error of clamped predictions against targets."""
    preds = predict_windows(model, windows)
    est = np.array([p.soc_est for p in preds])
    return float(np.mean((est - np.asarray(targets)) ** 2))


# ── gradient verification ─────────────────────────────────────────────────


def finite_difference_gradients(
    model: LstmModel, window: InputWindow, target: float, epsilon: float = 1e-5
) -> dict:
    """Central-difference loss gradients, the independent oracle for BPTT."""
    X = window.frames[:, None, :]
    t = np.array([target])
    model = copy.deepcopy(model)
    params = {
        "W": model.W,
        "U": model.U,
        "b": model.b,
        "w_out": model.w_out,
        "b_out": np.array([model.b_out]),
    }

    def loss_at() -> float:
        model.b_out = float(params["b_out"][0])
        raw, _ = _forward_full(model, X, keep_cache=False)
        return float(np.mean((raw - t) ** 2))

    grads = {}
    for key, p in params.items():
        g = np.zeros_like(p)
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for j in range(flat_p.size):
            orig = flat_p[j]
            flat_p[j] = orig + epsilon
            hi = loss_at()
            flat_p[j] = orig - epsilon
            lo = loss_at()
            flat_p[j] = orig
            flat_g[j] = (hi - lo) / (2.0 * epsilon)
        grads[key] = g
    return grads


def max_relative_gradient_error(analytic: dict, numeric: dict) -> float:
    """max over all gradient components of |ga - gn| / max(|ga|, |gn|, 1e-6).

    The floor matches the resolution of central differences at epsilon 1e-5:
    components below ~1e-6 sit inside the O(epsilon^2) truncation noise and
    would report spurious mismatches under a smaller floor.
    """
    worst = 0.0
    for key in analytic:
        ga = analytic[key].reshape(-1)
        gn = numeric[key].reshape(-1)
        denom = np.maximum(np.maximum(np.abs(ga), np.abs(gn)), 1e-6)
        worst = max(worst, float(np.max(np.abs(ga - gn) / denom)))
    return worst


def gradient_check(
    model: LstmModel, window: InputWindow, target: float, epsilon: float = 1e-5
) -> float:
    """Max relative disagreement between BPTT and central finite differences.

    Meant for small models (H <= 4, N <= 8); cost grows with parameter count.
    """
    _, analytic = loss_and_gradients(model, window.frames[:, None, :], np.array([target]))
    numeric = finite_difference_gradients(model, window, target, epsilon)
    return max_relative_gradient_error(analytic, numeric)


# ── model file ────────────────────────────────────────────────────────────


def _encode_array(values: np.ndarray) -> list[str]:
    return [format(float_to_bits(float(v)), "016x") for v in np.asarray(values).reshape(-1)]


def _decode_array(words, shape: tuple[int, ...], name: str) -> np.ndarray:
    expected = int(np.prod(shape))
    if not isinstance(words, list) or len(words) != expected:
        raise ShapeMismatchError(
            f"weight {name!r} has {len(words) if isinstance(words, list) else 'no'} "
            f"entries, expected {expected}"
        )
    try:
        flat = np.array([bits_to_float(int(w, 16)) for w in words])
    except (TypeError, ValueError) as exc:
        raise BadFormatError(f"weight {name!r} holds a non-hex word") from exc
    return flat.reshape(shape)


def save_model(model: LstmModel, path) -> None:
    """Bit-exact JSON model document (floats as hex-encoded 64-bit words)."""
    h = model.hidden_size
    weights = {}
    for k, gate in enumerate(_GATES):
        rows = slice(k * h, (k + 1) * h)
        weights[f"W_{gate}"] = _encode_array(model.W[rows])
        weights[f"U_{gate}"] = _encode_array(model.U[rows])
        weights[f"b_{gate}"] = _encode_array(model.b[rows])
    weights["w_out"] = _encode_array(model.w_out)
    weights["b_out"] = _encode_array(np.array([model.b_out]))
    doc = {
        "magic": MODEL_MAGIC,
        "version": MODEL_VERSION,
        "hidden_size": h,
        "window_length": model.window_length,
        "bounds": {
            "minimum": _encode_array(model.bounds.minimum),
            "maximum": _encode_array(model.bounds.maximum),
        },
        "weights": weights,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path) -> LstmModel:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise BadFormatError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("magic") != MODEL_MAGIC:
        raise BadFormatError("missing or wrong magic string")
    if doc.get("version") != MODEL_VERSION:
        raise BadFormatError(f"unsupported model version {doc.get('version')!r}")
    try:
        h = int(doc["hidden_size"])
        n = int(doc["window_length"])
        bounds_doc = doc["bounds"]
        weights = doc["weights"]
    except (KeyError, TypeError, ValueError) as exc:
        raise BadFormatError(f"malformed model header: {exc}") from exc
    if h < 1 or n < 1:
        raise BadFormatError("hidden_size and window_length must be >= 1")

    bounds = NormalizationBounds(
        _decode_array(bounds_doc.get("minimum"), (INPUT_CHANNELS,), "bounds.minimum"),
        _decode_array(bounds_doc.get("maximum"), (INPUT_CHANNELS,), "bounds.maximum"),
    )
    blocks = {
        name: _decode_array(weights.get(name), shape, name)
        for gate in _GATES
        for name, shape in (
            (f"W_{gate}", (h, INPUT_CHANNELS)),
            (f"U_{gate}", (h, h)),
            (f"b_{gate}", (h,)),
        )
    }
    w_out = _decode_array(weights.get("w_out"), (h,), "w_out")
    b_out = float(_decode_array(weights.get("b_out"), (1,), "b_out")[0])
    return LstmModel(
        hidden_size=h,
        window_length=n,
        W=np.vstack([blocks[f"W_{g}"] for g in _GATES]),
        U=np.vstack([blocks[f"U_{g}"] for g in _GATES]),
        b=np.concatenate([blocks[f"b_{g}"] for g in _GATES]),
        w_out=w_out,
        b_out=b_out,
        bounds=bounds,
    )
