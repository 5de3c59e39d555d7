"""Fully-connected networks: architecture, parameters, loss, gradients, SGD.

Layer convention: an architecture with widths ``(n_0, ..., n_L)`` has weight
matrices ``W_l`` of shape ``(n_{l-1}, n_l)`` for ``l = 1..L`` and bias
vectors for the hidden layers ``1..L-1`` only.  Hidden layers apply the
activation; the output layer applies neither bias nor activation.  All
numeric work is in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import _kernel
from .rng import SplitMix64

RELU = "relu"
LEAKY_RELU = "leaky_relu"
CROSS_ENTROPY = "cross_entropy"
SQUARED = "squared"

_ACT_ID = {RELU: 0, LEAKY_RELU: 1}
_LOSS_ID = {CROSS_ENTROPY: 0, SQUARED: 1}

DIVERGENCE_LIMIT = 1e6


class ShapeError(ValueError):
    """An array disagrees with the declared architecture at a named layer."""

    def __init__(self, layer: int, message: str):
        self.layer = layer
        super().__init__(f"layer {layer}: {message}")


class NonFiniteLossError(ArithmeticError):
    """The loss evaluated to a non-finite value."""


class DivergenceError(RuntimeError):
    """Training diverged; carries the last finite loss seen."""

    def __init__(self, last_finite_loss: float, epoch: int):
        self.last_finite_loss = float(last_finite_loss)
        self.epoch = epoch
        super().__init__(
            f"training diverged at epoch {epoch}; "
            f"last finite loss {self.last_finite_loss:.6g}"
        )


@dataclass(frozen=True)
class NetworkArch:
    """Widths (n_0, ..., n_L), activation and loss selection."""

    widths: tuple[int, ...]
    activation: str = RELU
    slope: float = 0.0
    loss_kind: str = CROSS_ENTROPY

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 3:
            raise ValueError("need at least two layers (input, hidden, output)")
        if any(w < 1 for w in self.widths):
            raise ValueError(f"all widths must be >= 1, got {self.widths}")
        if self.activation not in _ACT_ID:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.activation == LEAKY_RELU and not 0.0 < self.slope < 1.0:
            raise ValueError("leaky relu slope must lie in (0, 1)")
        if self.activation == RELU and self.slope != 0.0:
            raise ValueError("relu takes no slope parameter")
        if self.loss_kind not in _LOSS_ID:
            raise ValueError(f"unknown loss kind {self.loss_kind!r}")

    @property
    def depth(self) -> int:
        return len(self.widths) - 1

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def output_dim(self) -> int:
        return self.widths[-1]

    @property
    def act_id(self) -> int:
        return _ACT_ID[self.activation]

    @property
    def loss_id(self) -> int:
        return _LOSS_ID[self.loss_kind]


def _as_f64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


@dataclass(eq=False)
class Params:
    """One parameter point: weight matrices plus hidden-layer biases."""

    arch: NetworkArch
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        L = self.arch.depth
        widths = self.arch.widths
        if len(self.weights) != L:
            raise ShapeError(0, f"expected {L} weight matrices, got {len(self.weights)}")
        if len(self.biases) != L - 1:
            raise ShapeError(0, f"expected {L - 1} bias vectors, got {len(self.biases)}")
        self.weights = [_as_f64(w) for w in self.weights]
        self.biases = [_as_f64(b) for b in self.biases]
        for l in range(1, L + 1):
            w = self.weights[l - 1]
            if w.shape != (widths[l - 1], widths[l]):
                raise ShapeError(
                    l, f"weight shape {w.shape} != {(widths[l - 1], widths[l])}"
                )
            if not np.isfinite(w).all():
                raise ShapeError(l, "non-finite weight entries")
        for l in range(1, L):
            b = self.biases[l - 1]
            if b.shape != (widths[l],):
                raise ShapeError(l, f"bias shape {b.shape} != {(widths[l],)}")
            if not np.isfinite(b).all():
                raise ShapeError(l, "non-finite bias entries")

    def copy(self) -> "Params":
        return Params(
            self.arch,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )


def params_equal(a: Params, b: Params) -> bool:
    """Bitwise equality of two parameter points."""
    if a.arch != b.arch:
        return False
    return all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights)) and all(
        np.array_equal(x, y) for x, y in zip(a.biases, b.biases)
    )


def lerp_params(a: Params, b: Params, lam: float) -> Params:
    """Coordinate-wise linear interpolation (1-lam)*a + lam*b."""
    if a.arch != b.arch:
        raise ShapeError(0, "cannot interpolate across architectures")
    return Params(
        a.arch,
        [(1.0 - lam) * wa + lam * wb for wa, wb in zip(a.weights, b.weights)],
        [(1.0 - lam) * ba + lam * bb for ba, bb in zip(a.biases, b.biases)],
    )


@dataclass(eq=False)
class Dataset:
    """Input rows with one target row each (one-hot for classification)."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.inputs = _as_f64(np.atleast_2d(self.inputs))
        self.targets = _as_f64(np.atleast_2d(self.targets))
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError(
                f"{self.inputs.shape[0]} inputs vs {self.targets.shape[0]} targets"
            )
        if self.inputs.shape[0] < 1:
            raise ValueError("dataset needs at least one sample")
        self._onehot: bool | None = None

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    def is_onehot(self) -> bool:
        if self._onehot is None:
            t = self.targets
            ones = (t == 1.0).sum(axis=1)
            zeros = (t == 0.0).sum(axis=1)
            self._onehot = bool(
                np.all(ones == 1) and np.all(zeros == t.shape[1] - 1)
            )
        return self._onehot

    def labels(self) -> np.ndarray:
        return self.targets.argmax(axis=1)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.targets[idx])


@dataclass(frozen=True)
class TrainConfig:
    """SGD hyperparameters; everything a run needs to be reproducible."""

    learning_rate: float
    momentum: float = 0.0
    batch_size: int = 100
    max_epochs: int = 100
    target_loss: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if self.target_loss < 0:
            raise ValueError("target_loss must be >= 0")

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=int(seed))


# ---------------------------------------------------------------------------
# forward / loss / gradient


def init_params(arch: NetworkArch, seed: int) -> Params:
    """Fan-based uniform init: W_l ~ U[-a, a], a = sqrt(6/(n_in+n_out)); zero biases."""
    rng = SplitMix64(seed)
    weights = []
    for l in range(1, arch.depth + 1):
        n_in, n_out = arch.widths[l - 1], arch.widths[l]
        a = np.sqrt(6.0 / (n_in + n_out))
        weights.append(rng.uniform_block(n_in * n_out, -a, a).reshape(n_in, n_out))
    biases = [np.zeros(arch.widths[l]) for l in range(1, arch.depth)]
    return Params(arch, weights, biases)


def _activate(z: np.ndarray, arch: NetworkArch) -> np.ndarray:
    if arch.act_id == 0:
        return np.maximum(z, 0.0)
    return np.where(z > 0.0, z, arch.slope * z)


def hidden_features(params: Params, x: np.ndarray, layer: int) -> np.ndarray:
    """Feature rows at the given layer for a batch of input rows.

    layer 0 returns the inputs unchanged; the output layer applies no bias
    or activation.
    """
    arch = params.arch
    if not 0 <= layer <= arch.depth:
        raise ValueError(f"layer must lie in [0, {arch.depth}], got {layer}")
    x = _as_f64(np.atleast_2d(x))
    if x.shape[1] != arch.input_dim:
        raise ShapeError(0, f"input dim {x.shape[1]} != {arch.input_dim}")
    a = x
    for l in range(1, min(layer, arch.depth - 1) + 1):
        a = _activate(a @ params.weights[l - 1] + params.biases[l - 1], arch)
    if layer == arch.depth:
        a = a @ params.weights[-1]
    return a


def forward_features(params: Params, x: np.ndarray, layer: int) -> np.ndarray:
    """Feature vector at the given layer for a single input vector."""
    x = _as_f64(x)
    if x.ndim != 1:
        raise ShapeError(0, f"expected a vector, got shape {x.shape}")
    return hidden_features(params, x[None, :], layer)[0]


def logits(params: Params, x: np.ndarray) -> np.ndarray:
    """Output rows for a batch of input rows (kernel-backed)."""
    x = _as_f64(np.atleast_2d(x))
    if x.shape[1] != params.arch.input_dim:
        raise ShapeError(0, f"input dim {x.shape[1]} != {params.arch.input_dim}")
    return _kernel.forward_logits(
        params.weights, params.biases, x, params.arch.act_id, params.arch.slope
    )


def per_sample_loss(z: np.ndarray, targets: np.ndarray, loss_kind: str) -> np.ndarray:
    if loss_kind == CROSS_ENTROPY:
        m = z.max(axis=1, keepdims=True)
        lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=1))
        return lse - (z * targets).sum(axis=1)
    return 0.5 * ((z - targets) ** 2).sum(axis=1)


def loss_from_logits(
    z: np.ndarray, targets: np.ndarray, loss_kind: str, *, raising: bool = True
) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        value = float(per_sample_loss(z, targets, loss_kind).mean())
    if raising and not np.isfinite(value):
        raise NonFiniteLossError(f"loss evaluated to {value}")
    return value


def _require_targets(params: Params, data: Dataset) -> None:
    if data.targets.shape[1] != params.arch.output_dim:
        raise ShapeError(
            params.arch.depth,
            f"target dim {data.targets.shape[1]} != {params.arch.output_dim}",
        )
    if params.arch.loss_kind == CROSS_ENTROPY and not data.is_onehot():
        raise ValueError("cross-entropy loss requires exact one-hot targets")


def average_loss(params: Params, data: Dataset) -> float:
    """Mean loss over all samples (deterministic, order-independent)."""
    _require_targets(params, data)
    return loss_from_logits(
        logits(params, data.inputs), data.targets, params.arch.loss_kind
    )


def gradient(params: Params, batch: Dataset) -> Params:
    """Exact gradient of the batch-mean loss, in a Params-shaped container."""
    _require_targets(params, batch)
    gws, gbs = _kernel.grad_full(
        params.weights,
        params.biases,
        batch.inputs,
        batch.targets,
        params.arch.act_id,
        params.arch.slope,
        params.arch.loss_id,
    )
    return Params(params.arch, gws, gbs)


def classification_error(params: Params, data: Dataset) -> float:
    """Fraction of samples whose argmax logit misses the target argmax."""
    if not data.is_onehot():
        raise ValueError("classification error requires one-hot targets")
    z = logits(params, data.inputs)
    return float((z.argmax(axis=1) != data.labels()).mean())


# ---------------------------------------------------------------------------
# training


def _train_raw(ws, bs, x, y, cfg: TrainConfig, act: int, slope: float,
               loss_id: int, loss_kind: str, keep_best: bool):
    """Shared SGD loop over raw weight/bias lists.  Returns
    (ws, bs, history, best_loss); arrays are updated copies of the inputs."""
    ws = [w.copy() for w in ws]
    bs = [b.copy() for b in bs]
    vws = [np.zeros_like(w) for w in ws]
    vbs = [np.zeros_like(b) for b in bs]
    n = x.shape[0]
    batch = min(cfg.batch_size, n)

    def full_loss():
        z = _kernel.forward_logits(ws, bs, x, act, slope)
        return loss_from_logits(z, y, loss_kind, raising=False)

    loss = full_loss()
    if not np.isfinite(loss):
        raise NonFiniteLossError("starting loss is non-finite")
    history = [loss]
    best_loss = loss
    best = (ws, bs)
    if keep_best:
        best = ([w.copy() for w in ws], [b.copy() for b in bs])
    if loss <= cfg.target_loss:
        return ws, bs, history, best_loss

    rng = SplitMix64(cfg.seed)
    last_finite = loss
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        _kernel.run_epoch(
            ws, bs, vws, vbs, x, y, order, batch,
            cfg.learning_rate, cfg.momentum, act, slope, loss_id,
        )
        loss = full_loss()
        if not np.isfinite(loss) or loss > DIVERGENCE_LIMIT:
            raise DivergenceError(last_finite, epoch)
        history.append(loss)
        last_finite = loss
        if keep_best and loss < best_loss:
            best_loss = loss
            best = ([w.copy() for w in ws], [b.copy() for b in bs])
        if loss <= cfg.target_loss:
            break
    if keep_best:
        return best[0], best[1], history, best_loss
    return ws, bs, history, history[-1]


def sgd_train(init: Params, data: Dataset, cfg: TrainConfig) -> tuple[Params, list[float]]:
    """Mini-batch SGD with momentum, shuffled per epoch from cfg.seed.

    Stops once the full-data loss reaches cfg.target_loss (checked before
    the first epoch and after each one) or after cfg.max_epochs epochs.
    history[0] is the starting loss; one entry follows per epoch run.
    Deterministic: identical (init, data, cfg) give identical results.
    """
    _require_targets(init, data)
    arch = init.arch
    ws, bs, history, _ = _train_raw(
        init.weights, init.biases, data.inputs, data.targets, cfg,
        arch.act_id, arch.slope, arch.loss_id, arch.loss_kind, keep_best=False,
    )
    return Params(arch, ws, bs), history


def scale_output(params: Params, r: float) -> Params:
    """Copy with the final weight matrix scaled by r (scales the output)."""
    out = params.copy()
    out.weights[-1] *= r
    return out
