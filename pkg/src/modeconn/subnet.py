"""Sparse subnetworks from a layer to the output, their training, the
per-layer optimized-subnetwork loss estimate, and dropout-stability
evaluation.

A subnetwork anchored at layer ``l`` takes the kept features at layer ``l``
as input and reaches the output through hidden layers sized as the
complements of the kept sets above ``l``: widths
``(|kept_l|, n_{l+1}-|kept_{l+1}|, ..., n_{L-1}-|kept_{L-1}|, n_L)``.
"""

from __future__ import annotations

import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .network import (
    Dataset,
    DivergenceError,
    NetworkArch,
    Params,
    ShapeError,
    TrainConfig,
    _as_f64,
    _train_raw,
    classification_error,
    hidden_features,
    logits,
    loss_from_logits,
)
from .rng import SplitMix64
from .scalar_min import minimize_on_grid

RESCALE_BRACKET = (1e-3, 1e3)
_SEED_MASK = (1 << 63) - 1


@dataclass(frozen=True)
class SubsetPlan:
    """Kept-neuron index sets for layers anchor..L-1 of a host network."""

    anchor: int
    kept: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "kept", tuple(tuple(sorted(int(i) for i in s)) for s in self.kept)
        )
        for s in self.kept:
            if len(set(s)) != len(s):
                raise ValueError("kept sets must not repeat indices")

    @staticmethod
    def make(arch: NetworkArch, anchor: int, kept_by_layer) -> "SubsetPlan":
        """Validated plan; for anchor 0 the input set is forced to all inputs."""
        L = arch.depth
        if not 0 <= anchor <= L - 1:
            raise ValueError(f"anchor must lie in [0, {L - 1}]")
        kept = [tuple(s) for s in kept_by_layer]
        if len(kept) != L - anchor:
            raise ValueError(
                f"need kept sets for layers {anchor}..{L - 1}, got {len(kept)}"
            )
        if anchor == 0:
            kept[0] = tuple(range(arch.widths[0]))
        plan = SubsetPlan(anchor, tuple(kept))
        plan.validate(arch)
        return plan

    def validate(self, arch: NetworkArch) -> None:
        L = arch.depth
        if len(self.kept) != L - self.anchor:
            raise ValueError("plan does not cover layers anchor..L-1")
        for off, s in enumerate(self.kept):
            layer = self.anchor + off
            n = arch.widths[layer]
            if s and (s[0] < 0 or s[-1] >= n):
                raise ValueError(f"kept indices out of range at layer {layer}")
        if self.anchor == 0 and self.kept[0] != tuple(range(arch.widths[0])):
            raise ValueError("anchor-0 plans must keep every input coordinate")

    def kept_at(self, layer: int) -> tuple[int, ...]:
        return self.kept[layer - self.anchor]

    def card_at(self, layer: int) -> int:
        return len(self.kept_at(layer))

    def complement_at(self, arch: NetworkArch, layer: int) -> tuple[int, ...]:
        keep = set(self.kept_at(layer))
        return tuple(i for i in range(arch.widths[layer]) if i not in keep)


def subnet_widths(arch: NetworkArch, plan: SubsetPlan) -> tuple[int, ...]:
    """Widths of the subnetwork for this plan, anchor layer through output."""
    plan.validate(arch)
    L = arch.depth
    widths = [plan.card_at(plan.anchor)]
    for p in range(plan.anchor + 1, L):
        widths.append(arch.widths[p] - plan.card_at(p))
    widths.append(arch.output_dim)
    return tuple(widths)


@dataclass(eq=False)
class SubnetParams:
    """Weights of one subnetwork: matrices anchor+1..L, hidden biases only.

    The matrix chain must be consistent; the constructor rejects any
    mismatched shapes.
    """

    anchor: int
    matrices: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"
    slope: float = 0.0

    def __post_init__(self):
        if len(self.matrices) < 1:
            raise ShapeError(self.anchor, "subnetwork needs at least one matrix")
        if len(self.biases) != len(self.matrices) - 1:
            raise ShapeError(
                self.anchor,
                f"{len(self.matrices)} matrices need {len(self.matrices) - 1} biases",
            )
        self.matrices = [_as_f64(m) for m in self.matrices]
        self.biases = [_as_f64(b) for b in self.biases]
        for i in range(1, len(self.matrices)):
            if self.matrices[i].shape[0] != self.matrices[i - 1].shape[1]:
                raise ShapeError(
                    self.anchor + i + 1,
                    f"matrix chain breaks: {self.matrices[i - 1].shape} then "
                    f"{self.matrices[i].shape}",
                )
        for i, b in enumerate(self.biases):
            if b.shape != (self.matrices[i].shape[1],):
                raise ShapeError(self.anchor + i + 1, f"bias shape {b.shape} mismatched")
            if not np.isfinite(b).all():
                raise ShapeError(self.anchor + i + 1, "non-finite bias")
        for i, m in enumerate(self.matrices):
            if not np.isfinite(m).all():
                raise ShapeError(self.anchor + i + 1, "non-finite matrix")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.matrices[0].shape[0],) + tuple(m.shape[1] for m in self.matrices)

    def copy(self) -> "SubnetParams":
        return SubnetParams(
            self.anchor,
            [m.copy() for m in self.matrices],
            [b.copy() for b in self.biases],
            self.activation,
            self.slope,
        )


def _sub_activate(z, subnet: SubnetParams):
    if subnet.activation == "relu":
        return np.maximum(z, 0.0)
    return np.where(z > 0.0, z, subnet.slope * z)


def subnet_logits(subnet: SubnetParams, z: np.ndarray) -> np.ndarray:
    """Subnetwork output rows for feature rows z."""
    z = _as_f64(np.atleast_2d(z))
    if z.shape[1] != subnet.widths[0]:
        raise ShapeError(subnet.anchor, f"feature dim {z.shape[1]} != {subnet.widths[0]}")
    a = z
    for i in range(len(subnet.matrices) - 1):
        a = _sub_activate(a @ subnet.matrices[i] + subnet.biases[i], subnet)
    return a @ subnet.matrices[-1]


def subnet_forward(subnet: SubnetParams, z: np.ndarray) -> np.ndarray:
    """Subnetwork output for a single feature vector."""
    z = _as_f64(z)
    if z.ndim != 1:
        raise ShapeError(subnet.anchor, f"expected a vector, got shape {z.shape}")
    return subnet_logits(subnet, z[None, :])[0]


def subnet_loss(subnet: SubnetParams, features: Dataset, loss_kind: str) -> float:
    return loss_from_logits(
        subnet_logits(subnet, features.inputs), features.targets, loss_kind
    )


def subnet_error(subnet: SubnetParams, features: Dataset) -> float:
    z = subnet_logits(subnet, features.inputs)
    return float((z.argmax(axis=1) != features.labels()).mean())


def extract_features(params: Params, data: Dataset, layer: int, kept) -> Dataset:
    """Dataset of kept feature coordinates at the given layer, same targets."""
    kept = np.asarray(list(kept), dtype=np.int64)
    feats = hidden_features(params, data.inputs, layer)
    return Dataset(feats[:, kept], data.targets.copy())


def _init_subnet_arrays(widths, seed: int):
    rng = SplitMix64(seed)
    ws = []
    for i in range(len(widths) - 1):
        n_in, n_out = widths[i], widths[i + 1]
        a = np.sqrt(6.0 / max(n_in + n_out, 1))
        ws.append(rng.uniform_block(n_in * n_out, -a, a).reshape(n_in, n_out))
    bs = [np.zeros(widths[i + 1]) for i in range(len(widths) - 2)]
    return ws, bs


def train_subnet(
    features: Dataset,
    widths,
    cfg: TrainConfig,
    *,
    anchor: int = 0,
    activation: str = "relu",
    slope: float = 0.0,
    loss_kind: str = "cross_entropy",
    init: SubnetParams | None = None,
) -> tuple[SubnetParams, float]:
    """SGD on the subnetwork as a standalone net over the feature dataset.

    Returns the best parameters seen across epoch boundaries (the starting
    point included) together with their full-data loss.  That loss is an
    achieved value: it upper-bounds the unknowable infimum and is never
    reported as zero slack.
    """
    widths = tuple(int(w) for w in widths)
    if features.inputs.shape[1] != widths[0]:
        raise ShapeError(anchor, f"features dim {features.inputs.shape[1]} != {widths[0]}")
    if features.targets.shape[1] != widths[-1]:
        raise ShapeError(anchor, f"targets dim {features.targets.shape[1]} != {widths[-1]}")
    if loss_kind == "cross_entropy" and not features.is_onehot():
        raise ValueError("cross-entropy subnet training requires one-hot targets")
    if init is not None:
        if init.widths != widths:
            raise ShapeError(anchor, f"init widths {init.widths} != {widths}")
        ws, bs = [m.copy() for m in init.matrices], [b.copy() for b in init.biases]
    else:
        ws, bs = _init_subnet_arrays(widths, cfg.seed)
    act_id = 0 if activation == "relu" else 1
    loss_id = 0 if loss_kind == "cross_entropy" else 1
    ws, bs, _, best = _train_raw(
        ws, bs, features.inputs, features.targets, cfg,
        act_id, slope, loss_id, loss_kind, keep_best=True,
    )
    return SubnetParams(anchor, ws, bs, activation, slope), best


@dataclass
class TrialRecord:
    trial: int
    seed: int
    subset: tuple[int, ...]
    loss: float
    error: float
    wall_ms: float
    failed: bool = False
    message: str = ""


@dataclass
class LayerBoundEstimate:
    """Best trained-subnetwork loss over sampled kept sets at one layer."""

    layer: int
    best_loss: float
    best_plan: SubsetPlan | None
    best_subnet: SubnetParams | None
    records: list[TrialRecord] = field(default_factory=list)


_TRIAL_CTX: dict = {}


def _sample_plan(arch: NetworkArch, layer: int, cards, rng: SplitMix64) -> SubsetPlan:
    kept = []
    for off, p in enumerate(range(layer, arch.depth)):
        if p == 0:
            kept.append(tuple(range(arch.widths[0])))
        else:
            kept.append(tuple(rng.subset(arch.widths[p], int(cards[off]))))
    return SubsetPlan.make(arch, layer, kept)


def _run_bound_trial(trial: int):
    ctx = _TRIAL_CTX
    params: Params = ctx["params"]
    layer: int = ctx["layer"]
    cfg: TrainConfig = ctx["cfg"]
    arch = params.arch
    seed = cfg.seed + trial
    rng = SplitMix64(seed)
    plan = _sample_plan(arch, layer, ctx["cards"], rng)
    t0 = time.perf_counter()
    try:
        kept = np.asarray(plan.kept_at(layer), dtype=np.int64)
        features = Dataset(ctx["features_full"][:, kept], ctx["targets"])
        widths = subnet_widths(arch, plan)
        tcfg = cfg.with_seed(rng.next_u64() & _SEED_MASK)
        trained, loss = train_subnet(
            features, widths, tcfg,
            anchor=layer, activation=arch.activation, slope=arch.slope,
            loss_kind=arch.loss_kind,
        )
        error = subnet_error(trained, features) if features.is_onehot() else float("nan")
        wall = (time.perf_counter() - t0) * 1000.0
        return TrialRecord(trial, seed, plan.kept_at(layer), loss, error, wall), plan, trained
    except DivergenceError as exc:
        wall = (time.perf_counter() - t0) * 1000.0
        rec = TrialRecord(
            trial, seed, plan.kept_at(layer), float("inf"), float("nan"),
            wall, failed=True, message=str(exc),
        )
        return rec, plan, None


def estimate_min_subnet_loss(
    params: Params,
    data: Dataset,
    layer: int,
    cards,
    trials: int,
    cfg: TrainConfig,
    *,
    jobs: int = 1,
) -> LayerBoundEstimate:
    """Min over sampled kept sets of the trained-subnetwork loss at a layer.

    Each trial samples the kept set at ``layer`` uniformly (higher layers
    matter only through their cardinalities) and trains an independent
    subnetwork; trial t uses seed ``cfg.seed + t``.  A diverged trial is
    recorded, not fatal.  Ties go to the lowest trial index.
    """
    arch = params.arch
    if not 0 <= layer <= arch.depth - 1:
        raise ValueError(f"layer must lie in [0, {arch.depth - 1}]")
    cards = tuple(int(c) for c in cards)
    if len(cards) != arch.depth - layer:
        raise ValueError(
            f"need cardinalities for layers {layer}..{arch.depth - 1}, got {len(cards)}"
        )
    if layer == 0 and cards[0] != arch.widths[0]:
        raise ValueError("anchor-0 estimates keep every input coordinate")
    for off, c in enumerate(cards):
        n = arch.widths[layer + off]
        if not 0 <= c <= n:
            raise ValueError(f"cardinality {c} out of range at layer {layer + off}")
    if trials < 1:
        raise ValueError("need at least one trial")

    ctx = {
        "params": params,
        "layer": layer,
        "cards": cards,
        "cfg": cfg,
        "features_full": hidden_features(params, data.inputs, layer),
        "targets": data.targets,
    }
    global _TRIAL_CTX
    old_ctx = _TRIAL_CTX
    _TRIAL_CTX = ctx
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs, mp_context=multiprocessing.get_context("fork")) as pool:
                outcomes = list(pool.map(_run_bound_trial, range(trials)))
        else:
            outcomes = [_run_bound_trial(t) for t in range(trials)]
    finally:
        _TRIAL_CTX = old_ctx

    est = LayerBoundEstimate(layer, float("inf"), None, None)
    for rec, plan, trained in outcomes:
        est.records.append(rec)
        if not rec.failed and rec.loss < est.best_loss:
            est.best_loss = rec.loss
            est.best_plan = plan
            est.best_subnet = trained
    return est


# ---------------------------------------------------------------------------
# dropout-stability evaluation


def dropout_candidate(
    params: Params, layer: int, ratio: float, rng: SplitMix64
) -> tuple[Params, list[tuple[int, ...]]]:
    """Zero out floor(ratio * n_q) random neurons at every layer q >= layer.

    Removed neurons become pure zero: incoming column, bias and outgoing row
    are all exactly 0.  Returns the copy and the kept index sets for layers
    layer..L-1.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError("removal ratio must lie in (0, 1)")
    arch = params.arch
    if not 1 <= layer <= arch.depth - 1:
        raise ValueError(f"layer must lie in [1, {arch.depth - 1}]")
    out = params.copy()
    kept_sets = []
    for q in range(layer, arch.depth):
        n = arch.widths[q]
        n_remove = int(np.floor(ratio * n))
        removed = rng.subset(n, n_remove)
        keep_mask = np.ones(n, dtype=bool)
        keep_mask[removed] = False
        kept_sets.append(tuple(np.flatnonzero(keep_mask).tolist()))
        out.weights[q - 1][:, removed] = 0.0
        out.biases[q - 1][removed] = 0.0
        out.weights[q][removed, :] = 0.0
    return out, kept_sets


def optimize_rescale(cand: Params, data: Dataset) -> tuple[float, float]:
    """Best positive scale r on the network output, by 1-D minimization.

    Scaling the output is the same as scaling the final weight matrix, so the
    loss is evaluated on cached logits.  The bracket is log-spaced over
    RESCALE_BRACKET; if every evaluation is non-finite the fallback is r=1.
    """
    z = logits(cand, data.inputs)
    kind = cand.arch.loss_kind

    def f(r: float) -> float:
        return loss_from_logits(r * z, data.targets, kind, raising=False)

    grid = np.geomspace(RESCALE_BRACKET[0], RESCALE_BRACKET[1], 61)
    r, fr = minimize_on_grid(f, grid, tol=1e-7)
    if not np.isfinite(fr):
        return 1.0, f(1.0)
    return float(r), float(fr)


@dataclass
class DropoutLayerResult:
    layer: int
    best_loss: float
    best_scale: float
    best_kept: list[tuple[int, ...]] | None
    records: list[TrialRecord] = field(default_factory=list)


def _run_dropout_trial(args):
    layer, trial, seed, ratio = args
    ctx = _TRIAL_CTX
    params: Params = ctx["params"]
    data: Dataset = ctx["data"]
    rng = SplitMix64(seed)
    t0 = time.perf_counter()
    cand, kept_sets = dropout_candidate(params, layer, ratio, rng)
    r, loss = optimize_rescale(cand, data)
    error = (
        classification_error(cand, data) if data.is_onehot() else float("nan")
    )
    wall = (time.perf_counter() - t0) * 1000.0
    flat = tuple(i for s in kept_sets for i in s)
    return TrialRecord(trial, seed, flat, loss, error, wall), r, kept_sets


def dropout_stability_curve(
    params: Params,
    data: Dataset,
    trials: int,
    ratio: float,
    cfg: TrainConfig,
    *,
    jobs: int = 1,
) -> list[DropoutLayerResult]:
    """Per-layer best rescaled loss over repeated random dropout candidates.

    For each layer l in 1..L-1, runs ``trials`` independent
    (drop, rescale) rounds and keeps the best training loss.  Trial t at
    layer l uses seed ``cfg.seed + (l-1)*trials + t``.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    arch = params.arch
    results = []
    global _TRIAL_CTX
    old_ctx = _TRIAL_CTX
    _TRIAL_CTX = {"params": params, "data": data}
    try:
        for layer in range(1, arch.depth):
            tasks = [
                (layer, t, cfg.seed + (layer - 1) * trials + t, ratio)
                for t in range(trials)
            ]
            if jobs > 1:
                with ProcessPoolExecutor(max_workers=jobs, mp_context=multiprocessing.get_context("fork")) as pool:
                    outcomes = list(pool.map(_run_dropout_trial, tasks))
            else:
                outcomes = [_run_dropout_trial(a) for a in tasks]
            res = DropoutLayerResult(layer, float("inf"), 1.0, None)
            for rec, r, kept_sets in outcomes:
                res.records.append(rec)
                if not rec.failed and rec.loss < res.best_loss:
                    res.best_loss = rec.loss
                    res.best_scale = r
                    res.best_kept = kept_sets
            results.append(res)
    finally:
        _TRIAL_CTX = old_ctx
    return results


def subnet_from_dropout(
    params: Params, layer: int, kept_sets, scale: float
) -> tuple[SubnetParams, SubsetPlan]:
    """The subnetwork that reproduces a rescaled dropout candidate exactly.

    ``kept_sets`` are the kept indices for layers layer..L-1.  The plan keeps
    the same set at the anchor layer and the *complements* at higher layers,
    so the subnetwork's hidden units occupy exactly the candidate's kept
    positions.  Note that such a plan satisfies the half-width constraint of
    the path construction only when at most half the units were kept.
    """
    arch = params.arch
    kept_sets = [tuple(int(i) for i in s) for s in kept_sets]
    if len(kept_sets) != arch.depth - layer:
        raise ValueError("kept sets must cover layers layer..L-1")
    plan_kept = [kept_sets[0]]
    for off, p in enumerate(range(layer + 1, arch.depth)):
        keep = set(kept_sets[off + 1])
        plan_kept.append(tuple(i for i in range(arch.widths[p]) if i not in keep))
    plan = SubsetPlan.make(arch, layer, plan_kept)

    matrices = []
    biases = []
    prev = np.asarray(kept_sets[0], dtype=np.int64)
    for off, p in enumerate(range(layer + 1, arch.depth)):
        cur = np.asarray(kept_sets[off + 1], dtype=np.int64)
        matrices.append(params.weights[p - 1][np.ix_(prev, cur)])
        biases.append(params.biases[p - 1][cur])
        prev = cur
    matrices.append(scale * params.weights[arch.depth - 1][prev, :])
    built = SubnetParams(layer, matrices, biases, arch.activation, arch.slope)
    # the plan's complement sizes must match the subnetwork hidden widths
    if subnet_widths(arch, plan) != built.widths:
        raise ShapeError(layer, "plan complements do not match subnet widths")
    return built, plan
