"""LSTM sequence regressor with hand-derived backpropagation through time.

One recurrent layer. Gates i, f, o are logistic and the candidate g is tanh,
all affine in [x_t; h_{t-1}]. The cell update is c_t = f * c_{t-1} + i * g and
the hidden state h_t = o * tanh(c_t). A linear head maps the final hidden
state to a scalar prediction. Sequences are short enough for full (untruncated)
BPTT.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .nn import (OptimizerConfig, derive_rng, dsigmoid_from, dtanh_from,
                 init_optimizer_state, mse_loss, optimizer_step, sigmoid)
from .preprocess import WindowedDataset

log = logging.getLogger(__name__)

GATE_NAMES = ("i", "f", "o", "g")


@dataclass
class LstmParams:
    """Gate weights over the concatenated [input; hidden] vector, plus head."""

    W_i: np.ndarray  # (H, F+H)
    W_f: np.ndarray
    W_o: np.ndarray
    W_g: np.ndarray
    b_i: np.ndarray  # (H,)
    b_f: np.ndarray
    b_o: np.ndarray
    b_g: np.ndarray
    w_y: np.ndarray  # (H,)
    b_y: np.ndarray  # (1,)

    @property
    def hidden_size(self) -> int:
        return self.W_i.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_i.shape[1] - self.W_i.shape[0]

    def param_dict(self) -> dict[str, np.ndarray]:
        out = {}
        for gate in GATE_NAMES:
            out[f"W_{gate}"] = getattr(self, f"W_{gate}")
            out[f"b_{gate}"] = getattr(self, f"b_{gate}")
        out["w_y"] = self.w_y
        out["b_y"] = self.b_y
        return out

    def copy(self) -> "LstmParams":
        return LstmParams(**{k: v.copy() for k, v in self.param_dict().items()})

    def to_dict(self) -> dict:
        doc = {"input_size": self.input_size, "hidden_size": self.hidden_size}
        for name, arr in self.param_dict().items():
            doc[name] = arr.ravel(order="C").tolist()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "LstmParams":
        f, h = int(doc["input_size"]), int(doc["hidden_size"])
        kwargs = {}
        for gate in GATE_NAMES:
            kwargs[f"W_{gate}"] = np.asarray(doc[f"W_{gate}"],
                                             dtype=np.float64).reshape(h, f + h)
            kwargs[f"b_{gate}"] = np.asarray(doc[f"b_{gate}"], dtype=np.float64)
        kwargs["w_y"] = np.asarray(doc["w_y"], dtype=np.float64)
        kwargs["b_y"] = np.asarray(doc["b_y"], dtype=np.float64)
        return cls(**kwargs)


def init_lstm(input_size: int, hidden: int, rng: np.random.Generator
              ) -> LstmParams:
    """Scaled-uniform weights; forget-gate bias starts at 1.0, others at 0."""
    fan_in = input_size + hidden
    lim = 1.0 / np.sqrt(fan_in)
    weights = {f"W_{g}": rng.uniform(-lim, lim, size=(hidden, fan_in))
               for g in GATE_NAMES}
    biases = {f"b_{g}": np.zeros(hidden) for g in GATE_NAMES}
    biases["b_f"] = np.ones(hidden)
    lim_y = 1.0 / np.sqrt(hidden)
    return LstmParams(**weights, **biases,
                      w_y=rng.uniform(-lim_y, lim_y, size=hidden),
                      b_y=np.zeros(1))


def lstm_cell_step(c_prev: np.ndarray, i: np.ndarray, f: np.ndarray,
                   o: np.ndarray, g: np.ndarray
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cell and hidden update given gate activations.

    With f = 1 and i = 0 exactly, the cell state is carried unchanged.
    """
    c = f * c_prev + i * g
    tc = np.tanh(c)
    return c, tc, o * tc


def _check_input(params: LstmParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"expected (N, T, F) input, got shape {x.shape}")
    if x.shape[2] != params.input_size:
        raise ValueError(f"expected {params.input_size} features, "
                         f"got {x.shape[2]}")
    if x.shape[1] < 1:
        raise ValueError("sequence length must be >= 1")
    return x


def forward_batch(params: LstmParams, x: np.ndarray
                  ) -> tuple[np.ndarray, dict]:
    """Run the recurrence over a batch, caching everything BPTT needs."""
    x = _check_input(params, x)
    n, t_len, _ = x.shape
    h_size = params.hidden_size
    hs = np.zeros((t_len + 1, n, h_size))
    cs = np.zeros((t_len + 1, n, h_size))
    gates = {name: np.empty((t_len, n, h_size)) for name in GATE_NAMES}
    tcs = np.empty((t_len, n, h_size))
    for t in range(t_len):
        z = np.concatenate([x[:, t, :], hs[t]], axis=1)
        i = sigmoid(z @ params.W_i.T + params.b_i)
        f = sigmoid(z @ params.W_f.T + params.b_f)
        o = sigmoid(z @ params.W_o.T + params.b_o)
        g = np.tanh(z @ params.W_g.T + params.b_g)
        cs[t + 1], tcs[t], hs[t + 1] = lstm_cell_step(cs[t], i, f, o, g)
        gates["i"][t], gates["f"][t], gates["o"][t], gates["g"][t] = i, f, o, g
    preds = hs[t_len] @ params.w_y + params.b_y[0]
    cache = {"x": x, "hs": hs, "cs": cs, "tcs": tcs, "gates": gates,
             "params_token": id(params), "hidden_size": h_size}
    return preds, cache


def backward_batch(params: LstmParams, cache: dict, dpred: np.ndarray
                   ) -> dict[str, np.ndarray]:
    """Full BPTT; returns gradients with the same shapes as the parameters."""
    if cache.get("params_token") != id(params) \
            or cache.get("hidden_size") != params.hidden_size:
        raise ValueError("cache does not match these parameters")
    x, hs, cs, tcs, gates = (cache["x"], cache["hs"], cache["cs"],
                             cache["tcs"], cache["gates"])
    n, t_len, f_size = x.shape
    dpred = np.asarray(dpred, dtype=np.float64).reshape(n)

    grads = {name: np.zeros_like(arr) for name, arr in params.param_dict().items()}
    grads["w_y"] = hs[t_len].T @ dpred
    grads["b_y"] = np.atleast_1d(dpred.sum())
    dh = np.outer(dpred, params.w_y)
    dc = np.zeros_like(dh)
    for t in range(t_len - 1, -1, -1):
        i, f, o, g = (gates["i"][t], gates["f"][t], gates["o"][t], gates["g"][t])
        tc = tcs[t]
        dc = dc + dh * o * dtanh_from(tc)
        da = {
            "o": dh * tc * dsigmoid_from(o),
            "i": dc * g * dsigmoid_from(i),
            "g": dc * i * dtanh_from(g),
            "f": dc * cs[t] * dsigmoid_from(f),
        }
        z = np.concatenate([x[:, t, :], hs[t]], axis=1)
        dz = np.zeros_like(z)
        for gate in GATE_NAMES:
            grads[f"W_{gate}"] += da[gate].T @ z
            grads[f"b_{gate}"] += da[gate].sum(axis=0)
            dz += da[gate] @ getattr(params, f"W_{gate}")
        dh = dz[:, f_size:]
        dc = dc * f
    return grads


def lstm_forward(params: LstmParams, sequence: np.ndarray
                 ) -> tuple[float, dict]:
    """Forward over one (T, F) sequence; returns the prediction and cache."""
    sequence = np.asarray(sequence, dtype=np.float64)
    if sequence.ndim != 2:
        raise ValueError(f"expected (T, F) sequence, got shape {sequence.shape}")
    preds, cache = forward_batch(params, sequence[None, :, :])
    return float(preds[0]), cache


def lstm_backward(params: LstmParams, cache: dict, loss_grad) -> dict[str, np.ndarray]:
    return backward_batch(params, cache, np.atleast_1d(loss_grad))


def predict_batch(params: LstmParams, x: np.ndarray) -> np.ndarray:
    """Predictions for (N, T, F) input without keeping a cache."""
    x = _check_input(params, x)
    n, t_len, _ = x.shape
    h = np.zeros((n, params.hidden_size))
    c = np.zeros_like(h)
    for t in range(t_len):
        z = np.concatenate([x[:, t, :], h], axis=1)
        i = sigmoid(z @ params.W_i.T + params.b_i)
        f = sigmoid(z @ params.W_f.T + params.b_f)
        o = sigmoid(z @ params.W_o.T + params.b_o)
        g = np.tanh(z @ params.W_g.T + params.b_g)
        c, _, h = lstm_cell_step(c, i, f, o, g)
    return h @ params.w_y + params.b_y[0]


def lstm_predict(params: LstmParams, sequence: np.ndarray) -> float:
    sequence = np.asarray(sequence, dtype=np.float64)
    if sequence.ndim != 2:
        raise ValueError(f"expected (T, F) sequence, got shape {sequence.shape}")
    return float(predict_batch(params, sequence[None, :, :])[0])


@dataclass
class LstmTrainConfig:
    hidden: int = 20
    epochs: int = 100
    batch_size: int = 32
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    patience: int | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")


def _train_step(params: LstmParams, param_arrs: dict, state: dict,
                batch_x: np.ndarray, batch_y: np.ndarray,
                config: LstmTrainConfig) -> float:
    preds, cache = forward_batch(params, batch_x)
    loss, dpred = mse_loss(preds, batch_y)
    grads = backward_batch(params, cache, dpred)
    optimizer_step(param_arrs, grads, state, config.optimizer)
    return loss


def _finish_epoch(history: list[float], epoch_loss: float, epoch: int,
                  batch_offset: int, patience: int | None) -> bool:
    if np.isnan(epoch_loss):
        raise ValueError(f"NaN loss at epoch {epoch}, batch offset {batch_offset}")
    history.append(epoch_loss)
    if patience is None:
        return False
    best = int(np.argmin(history))
    return len(history) - 1 - best >= patience


def lstm_train(dataset: WindowedDataset, config: LstmTrainConfig
               ) -> tuple[LstmParams, list[float]]:
    """Mini-batch gradient descent on MSE over fixed-length windows."""
    if len(dataset) == 0:
        raise ValueError("empty training set")
    rng = derive_rng(config.seed, stream=1)
    params = init_lstm(dataset.n_features, config.hidden, rng)
    param_arrs = params.param_dict()
    state = init_optimizer_state(param_arrs)
    history: list[float] = []
    n = len(dataset)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        sq_sum = 0.0
        offset = 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss = _train_step(params, param_arrs, state,
                               dataset.inputs[idx], dataset.targets[idx], config)
            sq_sum += loss * len(idx)
            offset = start
        if _finish_epoch(history, sq_sum / n, epoch, offset, config.patience):
            log.debug("early stop at epoch %d", epoch)
            break
    return params, history


def lstm_train_sequences(sequences: list[np.ndarray], targets: np.ndarray,
                         config: LstmTrainConfig
                         ) -> tuple[LstmParams, list[float]]:
    """Train on variable-length sequences by batching equal lengths together."""
    if not sequences:
        raise ValueError("empty training set")
    targets = np.asarray(targets, dtype=np.float64)
    if len(sequences) != len(targets):
        raise ValueError("sequences and targets disagree in length")
    f_size = sequences[0].shape[1]
    by_length: dict[int, list[int]] = {}
    for idx, seq in enumerate(sequences):
        if seq.ndim != 2 or seq.shape[1] != f_size:
            raise ValueError(f"sequence {idx} has shape {seq.shape}, "
                             f"expected (T, {f_size})")
        by_length.setdefault(seq.shape[0], []).append(idx)

    rng = derive_rng(config.seed, stream=1)
    params = init_lstm(f_size, config.hidden, rng)
    param_arrs = params.param_dict()
    state = init_optimizer_state(param_arrs)
    history: list[float] = []
    n = len(sequences)
    for epoch in range(config.epochs):
        sq_sum = 0.0
        offset = 0
        for length in sorted(by_length):
            group = np.asarray(by_length[length])
            group = group[rng.permutation(len(group))]
            stacked = np.stack([sequences[i] for i in group])
            for start in range(0, len(group), config.batch_size):
                idx = group[start:start + config.batch_size]
                loss = _train_step(params, param_arrs, state,
                                   stacked[start:start + config.batch_size],
                                   targets[idx], config)
                sq_sum += loss * len(idx)
                offset = start
        if _finish_epoch(history, sq_sum / n, epoch, offset, config.patience):
            log.debug("early stop at epoch %d", epoch)
            break
    return params, history
