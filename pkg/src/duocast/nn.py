"""Minimal neural-network substrate.

Matrices are plain float64 numpy arrays. Gradients are hand-derived per
architecture and verified against central finite differences; there is no
autograd graph. Training is single-threaded and bit-reproducible for a fixed
seed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


def derive_rng(seed: int, stream: int) -> np.random.Generator:
    """Independent, reproducible generator for one role within a run."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                        spawn_key=(stream,)))


# ---------------------------------------------------------------------------
# activations

def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic; stays positive and finite for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def dsigmoid_from(s: np.ndarray) -> np.ndarray:
    """Derivative expressed in terms of the sigmoid output s."""
    return s * (1.0 - s)


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def dtanh_from(t: np.ndarray) -> np.ndarray:
    """Derivative expressed in terms of the tanh output t."""
    return 1.0 - t * t


# ---------------------------------------------------------------------------
# loss

def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient with respect to pred."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ValueError("empty prediction vector")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    grad = 2.0 * diff / diff.size
    return loss, grad


# ---------------------------------------------------------------------------
# optimizers

@dataclass
class OptimizerConfig:
    kind: str = "adam"
    learning_rate: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = 5.0

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("adam betas must lie in (0, 1)")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive when set")


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float
                   ) -> dict[str, np.ndarray]:
    """Scale all gradients down together so the global norm is at most max_norm."""
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads
    scale = max_norm / norm
    return {name: g * scale for name, g in grads.items()}


def init_optimizer_state(params: dict[str, np.ndarray]) -> dict:
    return {
        "t": 0,
        "m": {name: np.zeros_like(p) for name, p in params.items()},
        "v": {name: np.zeros_like(p) for name, p in params.items()},
    }


def optimizer_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
                   state: dict, config: OptimizerConfig
                   ) -> tuple[dict[str, np.ndarray], dict]:
    """One first-order update. Parameter arrays are updated in place."""
    for name, g in grads.items():
        if np.isnan(g).any():
            raise ValueError(f"NaN gradient in {name!r}; training aborted")
    if config.clip_norm is not None:
        grads = clip_gradients(grads, config.clip_norm)
    if config.kind == "sgd":
        for name, p in params.items():
            p -= config.learning_rate * grads[name]
        return params, state
    state["t"] += 1
    t = state["t"]
    correct1 = 1.0 - config.beta1 ** t
    correct2 = 1.0 - config.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state["m"][name]
        v = state["v"][name]
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * g * g
        p -= config.learning_rate * (m / correct1) / (np.sqrt(v / correct2)
                                                      + config.eps)
    return params, state


# ---------------------------------------------------------------------------
# dense baseline: one tanh hidden layer, linear scalar output

@dataclass
class MlpModel:
    w1: np.ndarray  # (H, D)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (H,)
    b2: np.ndarray  # (1,)

    @property
    def input_size(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.w1.shape[0]

    def param_dict(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


@dataclass
class MlpTrainConfig:
    hidden: int = 10
    epochs: int = 200
    batch_size: int = 32
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def init_mlp(input_size: int, hidden: int, rng: np.random.Generator) -> MlpModel:
    lim1 = 1.0 / np.sqrt(input_size)
    lim2 = 1.0 / np.sqrt(hidden)
    return MlpModel(
        w1=rng.uniform(-lim1, lim1, size=(hidden, input_size)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-lim2, lim2, size=hidden),
        b2=np.zeros(1),
    )


def mlp_forward(model: MlpModel, inputs: np.ndarray) -> np.ndarray:
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if inputs.shape[1] != model.input_size:
        raise ValueError(f"expected {model.input_size} input features, "
                         f"got {inputs.shape[1]}")
    hidden = np.tanh(inputs @ model.w1.T + model.b1)
    return hidden @ model.w2 + model.b2[0]


def mlp_loss_grads(model: MlpModel, inputs: np.ndarray, targets: np.ndarray
                   ) -> tuple[float, dict[str, np.ndarray]]:
    hidden = np.tanh(inputs @ model.w1.T + model.b1)
    pred = hidden @ model.w2 + model.b2[0]
    loss, dpred = mse_loss(pred, targets)
    grads = {
        "w2": hidden.T @ dpred,
        "b2": np.atleast_1d(dpred.sum()),
    }
    dhidden = np.outer(dpred, model.w2) * dtanh_from(hidden)
    grads["w1"] = dhidden.T @ inputs
    grads["b1"] = dhidden.sum(axis=0)
    return loss, grads


def mlp_train(inputs: np.ndarray, targets: np.ndarray, config: MlpTrainConfig
              ) -> tuple[MlpModel, list[float]]:
    """Mini-batch training of the dense baseline on flattened windows."""
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if len(inputs) == 0:
        raise ValueError("empty training set")
    if len(inputs) != len(targets):
        raise ValueError("inputs and targets disagree in length")
    rng = derive_rng(config.seed, stream=0)
    model = init_mlp(inputs.shape[1], config.hidden, rng)
    params = model.param_dict()
    state = init_optimizer_state(params)
    history = []
    n = len(inputs)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        sq_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = mlp_loss_grads(model, inputs[idx], targets[idx])
            if np.isnan(loss):
                raise ValueError(f"NaN loss at epoch {epoch}, batch offset {start}")
            sq_sum += loss * len(idx)
            params, state = optimizer_step(params, grads, state, config.optimizer)
        history.append(sq_sum / n)
    return model, history


# ---------------------------------------------------------------------------
# finite-difference gradient checker

def grad_check(f, params: dict[str, np.ndarray], eps: float = 1e-5) -> float:
    """Largest relative disagreement between analytic and numeric gradients.

    `f(params) -> (loss, grads)` must be deterministic and must not retain
    references into the parameter arrays; they are perturbed in place and
    restored.
    """
    _, analytic = f(params)
    worst = 0.0
    for name, p in params.items():
        flat = p.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + eps
            lp, _ = f(params)
            flat[idx] = original - eps
            lm, _ = f(params)
            flat[idx] = original
            numeric = (lp - lm) / (2.0 * eps)
            denom = max(abs(a_flat[idx]), abs(numeric), 1e-12)
            worst = max(worst, abs(a_flat[idx] - numeric) / denom)
    return worst
