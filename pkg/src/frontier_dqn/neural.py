"""Small numpy Q-networks with hand-written backpropagation.

Two topologies are supported:

* ``standard``: 36 -> 128 -> 64 -> 10, ReLU on both hidden layers.
* ``dueling``: shared 36 -> 128 feature layer, a value stream 128 -> 64 -> 1
  and an advantage stream 128 -> 64 -> 10, combined as
  ``Q = V + (A - mean(A))``.

Parameters are plain ``float64`` arrays kept in an ordered dict so that a
checkpoint can be written and read back byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

STATE_DIM = 36
N_ACTIONS = 10
HIDDEN = (128, 64)

# name -> (rows, cols); bias vectors have cols == 0
_LAYOUTS = {
    "standard": [
        ("W1", (HIDDEN[0], STATE_DIM)), ("b1", (HIDDEN[0],)),
        ("W2", (HIDDEN[1], HIDDEN[0])), ("b2", (HIDDEN[1],)),
        ("W3", (N_ACTIONS, HIDDEN[1])), ("b3", (N_ACTIONS,)),
    ],
    "dueling": [
        ("Wf", (HIDDEN[0], STATE_DIM)), ("bf", (HIDDEN[0],)),
        ("Wv1", (HIDDEN[1], HIDDEN[0])), ("bv1", (HIDDEN[1],)),
        ("Wv2", (1, HIDDEN[1])), ("bv2", (1,)),
        ("Wa1", (HIDDEN[1], HIDDEN[0])), ("ba1", (HIDDEN[1],)),
        ("Wa2", (N_ACTIONS, HIDDEN[1])), ("ba2", (N_ACTIONS,)),
    ],
}

TOPOLOGY_DIMS = {"standard": "36-128-64-10", "dueling": "36-128-64-1+10"}


class DivergenceError(FloatingPointError):
    """Raised when a loss or gradient stops being finite."""


@dataclass
class NetworkParams:
    topology: str
    arrays: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.topology not in _LAYOUTS:
            raise ValueError(f"unknown topology {self.topology!r}")
        for name, shape in _LAYOUTS[self.topology]:
            arr = self.arrays.get(name)
            if arr is None:
                raise ValueError(f"missing parameter array {name}")
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")

    @classmethod
    def zeros(cls, topology: str) -> "NetworkParams":
        return cls(topology, {n: np.zeros(s) for n, s in _LAYOUTS[topology]})

    @classmethod
    def init(cls, topology: str, rng: np.random.Generator) -> "NetworkParams":
        """Glorot-uniform weights, zero biases."""
        arrays = {}
        for name, shape in _LAYOUTS[topology]:
            if len(shape) == 2:
                fan_out, fan_in = shape
                limit = math.sqrt(6.0 / (fan_in + fan_out))
                arrays[name] = rng.uniform(-limit, limit, size=shape)
            else:
                arrays[name] = np.zeros(shape)
        return cls(topology, arrays)

    def names(self) -> list[str]:
        return [n for n, _ in _LAYOUTS[self.topology]]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays.values())


def clone(params: NetworkParams) -> NetworkParams:
    return NetworkParams(params.topology, {n: a.copy() for n, a in params.arrays.items()})


def relu(x):
    return np.maximum(x, 0.0)


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.size == 0:
        raise ValueError("softmax of an empty vector")
    e = np.exp(z - z.max())
    return e / e.sum()


def residual_block(x, g) -> np.ndarray:
    """Identity shortcut around ``g``: ``g(x) + x``."""
    x = np.asarray(x, dtype=float)
    gx = np.asarray(g(x), dtype=float)
    if gx.shape != x.shape:
        raise ValueError(f"residual branch shape {gx.shape} does not match input {x.shape}")
    return gx + x


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient with respect to ``pred``."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ValueError("mse of empty vectors")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def forward(params: NetworkParams, states, return_cache: bool = False):
    """Q-values for a single state (shape (36,)) or a batch (shape (B, 36))."""
    x = np.asarray(states, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != STATE_DIM:
        raise ValueError(f"state must have {STATE_DIM} entries, got {x.shape[1]}")
    if not np.isfinite(x).all():
        raise ValueError("non-finite input state")
    p = params.arrays
    if params.topology == "standard":
        z1 = x @ p["W1"].T + p["b1"]
        a1 = relu(z1)
        z2 = a1 @ p["W2"].T + p["b2"]
        a2 = relu(z2)
        q = a2 @ p["W3"].T + p["b3"]
        cache = {"x": x, "z1": z1, "a1": a1, "z2": z2, "a2": a2}
    else:
        zf = x @ p["Wf"].T + p["bf"]
        af = relu(zf)
        zv = af @ p["Wv1"].T + p["bv1"]
        av = relu(zv)
        v = av @ p["Wv2"].T + p["bv2"]
        za = af @ p["Wa1"].T + p["ba1"]
        aa = relu(za)
        adv = aa @ p["Wa2"].T + p["ba2"]
        q = v + (adv - adv.mean(axis=1, keepdims=True))
        cache = {"x": x, "zf": zf, "af": af, "zv": zv, "av": av, "v": v,
                 "za": za, "aa": aa, "adv": adv}
    if single:
        q = q[0]
    return (q, cache) if return_cache else q


def state_value(params: NetworkParams, states) -> np.ndarray:
    """V(s) from the value stream of a dueling network."""
    if params.topology != "dueling":
        raise ValueError("state_value needs a dueling network")
    _, cache = forward(params, states, return_cache=True)
    v = cache["v"][:, 0]
    return v[0] if np.asarray(states).ndim == 1 else v


def backward(params: NetworkParams, cache: dict, dq: np.ndarray) -> dict:
    """Gradients of a scalar loss given dLoss/dQ of shape (B, 10)."""
    p = params.arrays
    g = {}
    if params.topology == "standard":
        g["W3"] = dq.T @ cache["a2"]
        g["b3"] = dq.sum(axis=0)
        dz2 = (dq @ p["W3"]) * (cache["z2"] > 0)
        g["W2"] = dz2.T @ cache["a1"]
        g["b2"] = dz2.sum(axis=0)
        dz1 = (dz2 @ p["W2"]) * (cache["z1"] > 0)
        g["W1"] = dz1.T @ cache["x"]
        g["b1"] = dz1.sum(axis=0)
        return g
    dv = dq.sum(axis=1, keepdims=True)
    dadv = dq - dq.mean(axis=1, keepdims=True)
    g["Wv2"] = dv.T @ cache["av"]
    g["bv2"] = dv.sum(axis=0)
    dzv = (dv @ p["Wv2"]) * (cache["zv"] > 0)
    g["Wv1"] = dzv.T @ cache["af"]
    g["bv1"] = dzv.sum(axis=0)
    g["Wa2"] = dadv.T @ cache["aa"]
    g["ba2"] = dadv.sum(axis=0)
    dza = (dadv @ p["Wa2"]) * (cache["za"] > 0)
    g["Wa1"] = dza.T @ cache["af"]
    g["ba1"] = dza.sum(axis=0)
    dzf = (dzv @ p["Wv1"] + dza @ p["Wa1"]) * (cache["zf"] > 0)
    g["Wf"] = dzf.T @ cache["x"]
    g["bf"] = dzf.sum(axis=0)
    return g


def acted_loss_and_grads(params: NetworkParams, states, actions, targets) -> tuple[float, dict]:
    """MSE between Q(s, a) on the acted indices and ``targets``, plus parameter gradients."""
    states = np.asarray(states, dtype=float)
    actions = np.asarray(actions, dtype=np.int64)
    targets = np.asarray(targets, dtype=float)
    q, cache = forward(params, states, return_cache=True)
    if q.ndim == 1:
        q = q[None, :]
    rows = np.arange(len(actions))
    loss, dpred = mse_loss(q[rows, actions], targets)
    dq = np.zeros_like(q)
    dq[rows, actions] = dpred
    return loss, backward(params, cache, dq)


def backward_and_step(params: NetworkParams, states, actions, targets, lr: float) -> float:
    """One plain gradient-descent step on the acted-action MSE.  Updates in place, returns the loss."""
    if len(actions) == 0:
        raise ValueError("empty batch")
    with np.errstate(all="ignore"):
        loss, grads = acted_loss_and_grads(params, states, actions, targets)
    if not math.isfinite(loss) or not all(np.isfinite(gr).all() for gr in grads.values()):
        raise DivergenceError(f"divergence: loss={loss}")
    for name, gr in grads.items():
        params.arrays[name] -= lr * gr
    return loss


# -- checkpoint format ----------------------------------------------------

def dumps_checkpoint(params: NetworkParams, algo: str) -> str:
    lines = [f"FDQN 1 {algo} {TOPOLOGY_DIMS[params.topology]}"]
    for name in params.names():
        flat = params.arrays[name].ravel()
        lines.append(" ".join([name, str(flat.size)] + [format(v, ".17g") for v in flat]))
    return "\n".join(lines) + "\n"


class CheckpointError(ValueError):
    pass


def loads_checkpoint(text: str) -> tuple[NetworkParams, str]:
    """Parse a checkpoint; returns the params and the algorithm name in the header."""
    from .agent import VARIANTS

    lines = text.splitlines()
    if not lines:
        raise CheckpointError("empty checkpoint")
    header = lines[0].split()
    if len(header) != 4 or header[0] != "FDQN" or header[1] != "1":
        raise CheckpointError(f"bad checkpoint header: {lines[0]!r}")
    algo, dims = header[2], header[3]
    if algo not in VARIANTS:
        raise CheckpointError(f"unknown algorithm {algo!r} in header")
    topology = VARIANTS[algo].topology
    if TOPOLOGY_DIMS[topology] != dims:
        raise CheckpointError(f"topology {dims!r} does not match algorithm {algo}")
    body = {}
    for line in lines[1:]:
        if line.strip():
            parts = line.split()
            body[parts[0]] = parts[1:]
    arrays = {}
    for name, shape in _LAYOUTS[topology]:
        if name not in body:
            raise CheckpointError(f"array {name} missing")
        parts = body[name]
        expected = int(np.prod(shape))
        try:
            length = int(parts[0])
            values = np.array([float(v) for v in parts[1:]])
        except (IndexError, ValueError):
            raise CheckpointError(f"array {name} is malformed") from None
        if length != expected or values.size != expected:
            raise CheckpointError(
                f"array {name} length mismatch: header {length}, values {values.size}, expected {expected}")
        arrays[name] = values.reshape(shape)
    return NetworkParams(topology, arrays), algo
