"""Minimal neural-network engine for the goal-setting agents.

Three architectures share one code path:

* ``hybrid`` - an LSTM over the observation window, one dense layer, then actor and critic heads
* ``mlp`` - the flattened window through two dense layers, then the heads
* ``lstm`` - the LSTM's last hidden state straight into the heads

The recurrent state starts at zero for every window, so windows in a batch are independent and
backpropagation through time runs over the W steps of each window only.

All tensors are float64 numpy arrays; a parameter set is an ordered mapping of names to arrays.

"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, Optional, Tuple, Union

import numpy as np
from scipy.special import expit as sigmoid

from exercise_goal_setting.constants import GoalConstants, NetworkDefaults, TrainingDefaults
from exercise_goal_setting.exceptions import DomainError, TrainingError

logger = logging.getLogger(__name__)

ARCHITECTURES = ("hybrid", "mlp", "lstm")


@dataclass(frozen=True)
class NetSpec:
    """Architecture of a network.

    Args:
        kind (str): ``hybrid``, ``mlp`` or ``lstm``
        window (int): observation window W
        n_features (int): features per epoch
        hidden (int): LSTM hidden size H (unused by ``mlp``)
        dense (tuple): sizes of the dense layers after the trunk
        n_actions (int): size of the actor head
    """
    kind: str = "hybrid"
    window: int = NetworkDefaults.window
    n_features: int = NetworkDefaults.n_features
    hidden: int = NetworkDefaults.hidden
    dense: Tuple[int, ...] = (NetworkDefaults.dense,)
    n_actions: int = GoalConstants.n_actions

    def __post_init__(self):
        if self.kind not in ARCHITECTURES:
            raise DomainError(f"Invalid architecture {self.kind!r}. Must be one of {ARCHITECTURES}")
        object.__setattr__(self, "dense", tuple(int(d) for d in self.dense))
        if self.window < 1 or self.n_features < 1 or self.n_actions < 1:
            raise DomainError("window, n_features and n_actions must be positive")
        if self.uses_lstm and self.hidden < 1:
            raise DomainError("hidden must be positive for recurrent architectures")
        if any(d < 1 for d in self.dense):
            raise DomainError("dense layer sizes must be positive")

    @classmethod
    def hybrid(cls, hidden: int = NetworkDefaults.hidden, dense: int = NetworkDefaults.dense, **kwargs) -> "NetSpec":
        return cls(kind="hybrid", hidden=hidden, dense=(dense,), **kwargs)

    @classmethod
    def mlp(cls, width: int = 64, layers: int = 2, **kwargs) -> "NetSpec":
        return cls(kind="mlp", dense=(width,) * layers, **kwargs)

    @classmethod
    def lstm(cls, hidden: int = NetworkDefaults.hidden, **kwargs) -> "NetSpec":
        return cls(kind="lstm", hidden=hidden, dense=(), **kwargs)

    @classmethod
    def for_kind(cls, kind: str, hidden: int = NetworkDefaults.hidden, dense: int = NetworkDefaults.dense,
                 window: int = NetworkDefaults.window) -> "NetSpec":
        """The architecture used by the agents for each kind; ``mlp`` uses two layers of width ``dense``"""
        if kind == "hybrid":
            return cls.hybrid(hidden=hidden, dense=dense, window=window)
        elif kind == "mlp":
            return cls.mlp(width=dense, layers=2, window=window)
        elif kind == "lstm":
            return cls.lstm(hidden=hidden, window=window)
        raise DomainError(f"Invalid architecture {kind!r}. Must be one of {ARCHITECTURES}")

    @property
    def uses_lstm(self) -> bool:
        return self.kind in ("hybrid", "lstm")

    @property
    def trunk_size(self) -> int:
        return self.hidden if self.uses_lstm else self.window * self.n_features

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        """Tensor names and shapes, in a fixed order"""
        shapes = {}
        if self.uses_lstm:
            shapes["lstm_Wx"] = (self.n_features, 4 * self.hidden)
            shapes["lstm_Wh"] = (self.hidden, 4 * self.hidden)
            shapes["lstm_b"] = (4 * self.hidden,)
        fan_in = self.trunk_size
        for k, width in enumerate(self.dense):
            shapes[f"dense{k}_W"] = (fan_in, width)
            shapes[f"dense{k}_b"] = (width,)
            fan_in = width
        shapes["actor_W"] = (fan_in, self.n_actions)
        shapes["actor_b"] = (self.n_actions,)
        shapes["critic_W"] = (fan_in, 1)
        shapes["critic_b"] = (1,)
        return shapes

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "window": self.window,
            "n_features": self.n_features,
            "hidden": self.hidden,
            "dense": list(self.dense),
            "n_actions": self.n_actions,
        }


def parameter_count(spec: NetSpec) -> int:
    """Closed-form number of trainable parameters of ``spec``"""
    count = 0
    if spec.uses_lstm:
        count += 4 * spec.hidden * (spec.n_features + spec.hidden + 1)
    fan_in = spec.trunk_size
    for width in spec.dense:
        count += fan_in * width + width
        fan_in = width
    count += fan_in * spec.n_actions + spec.n_actions
    count += fan_in + 1
    return count


class HybridNetParams(object):
    """The tensors of one network, keyed by name.

    Args:
        spec (NetSpec): the architecture
        tensors (dict): name to array; shapes must match ``spec.shapes()``
    """

    def __init__(self, spec: NetSpec, tensors: Dict[str, np.ndarray]) -> None:
        expected = spec.shapes()
        if set(tensors) != set(expected):
            raise DomainError(f"Tensor names {sorted(tensors)} do not match the architecture {sorted(expected)}")
        for name, shape in expected.items():
            if tuple(np.shape(tensors[name])) != shape:
                raise DomainError(f"Tensor {name} has shape {np.shape(tensors[name])}, expected {shape}")
        self.spec = spec
        self.tensors = {name: np.array(tensors[name], dtype=np.float64) for name in expected}

    @classmethod
    def initialize(cls, spec: NetSpec, rng: Optional[np.random.Generator] = None, zero: bool = False) -> "HybridNetParams":
        """Uniform initialization in +-1/sqrt(fan_in) with forget-gate bias +1; ``zero`` gives an all-zero network."""
        rng = rng if rng is not None else np.random.default_rng(0)
        tensors = {}
        for name, shape in spec.shapes().items():
            if zero:
                tensors[name] = np.zeros(shape)
                continue
            if name == "lstm_b":
                bias = np.zeros(shape)
                bias[spec.hidden:2 * spec.hidden] = NetworkDefaults.forget_bias
                tensors[name] = bias
            elif name.endswith("_b"):
                tensors[name] = np.zeros(shape)
            else:
                fan_in = spec.n_features + spec.hidden if name.startswith("lstm") else shape[0]
                bound = 1.0 / np.sqrt(fan_in)
                tensors[name] = rng.uniform(-bound, bound, size=shape)
        return cls(spec, tensors)

    def copy(self) -> "HybridNetParams":
        return HybridNetParams(self.spec, {name: array.copy() for name, array in self.tensors.items()})

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(array)) for array in self.tensors.values())

    def items(self) -> Iterator[Tuple[str, np.ndarray]]:
        return iter(self.tensors.items())

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __len__(self) -> int:
        return sum(array.size for array in self.tensors.values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, HybridNetParams):
            return NotImplemented
        return self.spec == other.spec and all(
            np.array_equal(array, other.tensors[name]) for name, array in self.tensors.items()
        )

    def __repr__(self) -> str:
        return f"HybridNetParams(kind={self.spec.kind!r}, parameters={len(self)})"


@dataclass
class Gradients:
    """Gradient tensors keyed like the parameters, plus the loss they were taken of."""
    tensors: Dict[str, np.ndarray]
    loss: float = 0.0

    def global_norm(self) -> float:
        return float(np.sqrt(sum(np.sum(g * g) for g in self.tensors.values())))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in self.tensors.values())

    def scaled(self, factor: float) -> "Gradients":
        return Gradients({name: g * factor for name, g in self.tensors.items()}, self.loss)


@dataclass
class ForwardResult:
    """Network outputs for a batch of windows: logits (B, A), values (B,), last hidden state (B, H) or None."""
    logits: np.ndarray
    value: np.ndarray
    hidden: Optional[np.ndarray]
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def probabilities(self) -> np.ndarray:
        return softmax(self.logits)


@dataclass(frozen=True)
class Segment:
    """A rollout segment: observation windows (n, W, F) and action indices (n,)."""
    windows: np.ndarray
    actions: np.ndarray


@dataclass(frozen=True)
class Targets:
    """n-step returns for a segment; advantages default to ``returns - V`` from the current parameters."""
    returns: np.ndarray
    advantages: Optional[np.ndarray] = None


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax; a probability vector for any finite logits"""
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / np.sum(exp, axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def _as_batch(params: HybridNetParams, window: np.ndarray) -> np.ndarray:
    x = np.asarray(window, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    spec = params.spec
    if x.ndim != 3 or x.shape[1:] != (spec.window, spec.n_features):
        raise DomainError(f"Window shape {np.shape(window)} does not match ({spec.window}, {spec.n_features})")
    return x


def forward(params: HybridNetParams, window: np.ndarray) -> ForwardResult:
    """Evaluate the network on one window (W, F) or a batch (B, W, F).

    Returns:
        ForwardResult: logits (B, A), value (B,), hidden (B, H) for recurrent nets, and the cache for `backward`

    Raises:
        DomainError: on a shape mismatch
    """
    x = _as_batch(params, window)
    spec = params.spec
    p = params.tensors
    batch = x.shape[0]
    cache = {"x": x}

    hidden = None
    if spec.uses_lstm:
        H = spec.hidden
        h = np.zeros((batch, H))
        c = np.zeros((batch, H))
        steps = []
        for t in range(spec.window):
            x_t = x[:, t, :]
            z = x_t @ p["lstm_Wx"] + h @ p["lstm_Wh"] + p["lstm_b"]
            i = sigmoid(z[:, :H])
            f = sigmoid(z[:, H:2 * H])
            o = sigmoid(z[:, 2 * H:3 * H])
            g = np.tanh(z[:, 3 * H:])
            c_next = f * c + i * g
            tanh_c = np.tanh(c_next)
            h_next = o * tanh_c
            steps.append((x_t, h, c, i, f, o, g, tanh_c))
            h, c = h_next, c_next
        cache["lstm"] = steps
        hidden = h
        trunk = h
    else:
        trunk = x.reshape(batch, -1)

    activations = [trunk]
    a = trunk
    for k in range(len(spec.dense)):
        a = np.tanh(a @ p[f"dense{k}_W"] + p[f"dense{k}_b"])
        activations.append(a)
    cache["activations"] = activations

    logits = a @ p["actor_W"] + p["actor_b"]
    value = (a @ p["critic_W"] + p["critic_b"])[:, 0]
    return ForwardResult(logits=logits, value=value, hidden=hidden, cache=cache)


def backward_from_outputs(params: HybridNetParams, result: ForwardResult, dlogits: np.ndarray, dvalue: np.ndarray) -> Dict[str, np.ndarray]:
    """Backpropagate output gradients (B, A) and (B,) through a cached forward pass"""
    spec = params.spec
    p = params.tensors
    grads = {name: np.zeros_like(array) for name, array in p.items()}
    activations = result.cache["activations"]
    top = activations[-1]

    grads["actor_W"] = top.T @ dlogits
    grads["actor_b"] = dlogits.sum(axis=0)
    grads["critic_W"] = top.T @ dvalue[:, None]
    grads["critic_b"] = np.array([dvalue.sum()])
    da = dlogits @ p["actor_W"].T + dvalue[:, None] @ p["critic_W"].T

    for k in reversed(range(len(spec.dense))):
        out = activations[k + 1]
        dpre = da * (1.0 - out * out)
        grads[f"dense{k}_W"] = activations[k].T @ dpre
        grads[f"dense{k}_b"] = dpre.sum(axis=0)
        da = dpre @ p[f"dense{k}_W"].T

    if spec.uses_lstm:
        H = spec.hidden
        dh = da
        dc = np.zeros_like(dh)
        for x_t, h_prev, c_prev, i, f, o, g, tanh_c in reversed(result.cache["lstm"]):
            do = dh * tanh_c
            dc = dc + dh * o * (1.0 - tanh_c * tanh_c)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dz = np.concatenate(
                [di * i * (1.0 - i), df * f * (1.0 - f), do * o * (1.0 - o), dg * (1.0 - g * g)], axis=1
            )
            grads["lstm_Wx"] += x_t.T @ dz
            grads["lstm_Wh"] += h_prev.T @ dz
            grads["lstm_b"] += dz.sum(axis=0)
            dh = dz @ p["lstm_Wh"].T
            dc = dc * f
    return grads


def actor_critic_loss(params: HybridNetParams, segment: Segment, targets: Targets,
                      entropy_coef: float = TrainingDefaults.entropy_coef,
                      value_coef: float = TrainingDefaults.value_coef,
                      normalize_advantages: bool = False) -> Tuple[float, ForwardResult, np.ndarray]:
    """Segment loss ``sum_t [ -log pi(a_t|s_t) A_t - entropy_coef H(pi) + value_coef (R_t - V(s_t))^2 ]``.

    With ``normalize_advantages`` the advantages of a segment longer than one step are shifted to zero
    mean and unit standard deviation before entering the policy term.

    Returns:
        tuple: (loss, forward result, advantages used)
    """
    result = forward(params, segment.windows)
    actions = np.asarray(segment.actions, dtype=int)
    returns = np.asarray(targets.returns, dtype=np.float64)
    if len(actions) != len(returns) or len(actions) != result.logits.shape[0]:
        raise DomainError("Segment windows, actions and returns must have the same length")
    advantages = returns - result.value if targets.advantages is None else np.asarray(targets.advantages, dtype=np.float64)
    if normalize_advantages and len(advantages) > 1:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

    log_probs = log_softmax(result.logits)
    probs = np.exp(log_probs)
    entropy = -np.sum(probs * log_probs, axis=1)
    chosen = log_probs[np.arange(len(actions)), actions]
    loss = float(np.sum(-chosen * advantages - entropy_coef * entropy + value_coef * (returns - result.value) ** 2))
    return loss, result, advantages


def backward(params: HybridNetParams, segment: Segment, targets: Targets,
             entropy_coef: float = TrainingDefaults.entropy_coef,
             value_coef: float = TrainingDefaults.value_coef,
             normalize_advantages: bool = False) -> Gradients:
    """Gradients of the actor-critic segment loss; advantages are constants in the policy term.

    Raises:
        TrainingError: if the loss or any gradient is not finite
    """
    loss, result, advantages = actor_critic_loss(params, segment, targets, entropy_coef, value_coef,
                                                 normalize_advantages)
    if not np.isfinite(loss):
        raise TrainingError(f"Non-finite loss {loss}; max |logit| {np.max(np.abs(result.logits)):.3g}, max |V| {np.max(np.abs(result.value)):.3g}")

    actions = np.asarray(segment.actions, dtype=int)
    returns = np.asarray(targets.returns, dtype=np.float64)
    log_probs = log_softmax(result.logits)
    probs = np.exp(log_probs)
    entropy = -np.sum(probs * log_probs, axis=1)

    onehot = np.zeros_like(probs)
    onehot[np.arange(len(actions)), actions] = 1.0
    dlogits = -advantages[:, None] * (onehot - probs)
    dlogits += entropy_coef * probs * (log_probs + entropy[:, None])
    dvalue = -2.0 * value_coef * (returns - result.value)

    grads = Gradients(backward_from_outputs(params, result, dlogits, dvalue), loss)
    if not grads.all_finite():
        raise TrainingError("Non-finite gradient in backward pass")
    return grads


@dataclass
class OptimizerState:
    """Shared RMS-propagation state: one squared-gradient accumulator per tensor."""
    learning_rate: float = NetworkDefaults.learning_rate
    decay: float = NetworkDefaults.rms_decay
    epsilon: float = NetworkDefaults.rms_epsilon
    accumulators: Dict[str, np.ndarray] = field(default_factory=dict)
    updates: int = 0
    rejected: int = 0

    @classmethod
    def for_params(cls, params: HybridNetParams, **kwargs) -> "OptimizerState":
        state = cls(**kwargs)
        state.accumulators = {name: np.zeros_like(array) for name, array in params.items()}
        return state


def clip_by_global_norm(grads: Gradients, max_norm: float = NetworkDefaults.grad_clip) -> Tuple[Gradients, float]:
    """Scale gradients so their global norm is at most ``max_norm``; returns the clipped gradients and the original norm"""
    norm = grads.global_norm()
    if np.isfinite(norm) and norm > max_norm:
        return grads.scaled(max_norm / norm), norm
    return grads, norm


def apply_gradients(params: HybridNetParams, state: OptimizerState, grads: Gradients,
                    max_norm: float = NetworkDefaults.grad_clip) -> bool:
    """Clip and apply one RMS-propagation update in place.

    ``acc = decay*acc + (1-decay)*g^2`` and ``theta -= lr * g / sqrt(acc + eps)``.

    Returns:
        bool: False if the update was rejected because a gradient was not finite after clipping
    """
    clipped, _ = clip_by_global_norm(grads, max_norm)
    if not clipped.all_finite():
        state.rejected += 1
        logger.warning("Rejected a non-finite gradient update (%d rejected so far)", state.rejected)
        return False

    if not state.accumulators:
        state.accumulators = {name: np.zeros_like(array) for name, array in params.items()}
    for name, g in clipped.tensors.items():
        acc = state.accumulators[name]
        acc *= state.decay
        acc += (1.0 - state.decay) * g * g
        params.tensors[name] -= state.learning_rate * g / np.sqrt(acc + state.epsilon)
    state.updates += 1
    return True


def save_checkpoint(path: Union[str, Path], params: HybridNetParams, state: Optional[OptimizerState] = None) -> Path:
    """Write parameters (and optionally optimizer accumulators) to a versioned ``.npz`` file.

    The header records the format version, the architecture and every tensor shape.
    """
    path = Path(path)
    header = {
        "version": NetworkDefaults.checkpoint_version,
        "spec": params.spec.as_dict(),
        "shapes": {name: list(array.shape) for name, array in params.items()},
    }
    arrays = {f"param/{name}": array for name, array in params.items()}
    if state is not None:
        header["optimizer"] = {
            "learning_rate": state.learning_rate,
            "decay": state.decay,
            "epsilon": state.epsilon,
            "updates": state.updates,
            "rejected": state.rejected,
        }
        arrays.update({f"acc/{name}": array for name, array in state.accumulators.items()})
    with open(path, "wb") as handle:
        np.savez(handle, header=np.array(json.dumps(header)), **arrays)
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[HybridNetParams, Optional[OptimizerState]]:
    """Read a checkpoint written by `save_checkpoint`; ``load(save(p)) == p`` bit for bit."""
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("version") != NetworkDefaults.checkpoint_version:
            raise DomainError(f"Unsupported checkpoint version {header.get('version')!r}")
        spec_dict = dict(header["spec"])
        spec_dict["dense"] = tuple(spec_dict["dense"])
        spec = NetSpec(**spec_dict)
        tensors = {name: data[f"param/{name}"].copy() for name in header["shapes"]}
        for name, shape in header["shapes"].items():
            if list(tensors[name].shape) != shape:
                raise DomainError(f"Checkpoint tensor {name} has shape {tensors[name].shape}, header says {shape}")
        params = HybridNetParams(spec, tensors)

        state = None
        if "optimizer" in header:
            opt = header["optimizer"]
            state = OptimizerState(
                learning_rate=opt["learning_rate"],
                decay=opt["decay"],
                epsilon=opt["epsilon"],
                accumulators={name: data[f"acc/{name}"].copy() for name in header["shapes"]},
                updates=opt["updates"],
                rejected=opt["rejected"],
            )
    return params, state
