"""Piecewise-linear parameter paths: output-invariant segment builders, the
layer-by-layer sparsification procedure, the bridge between two sparsified
points, and the full connecting-path composition with its loss bound.

Every path is a list of breakpoints traversed by coordinate-wise linear
interpolation, with one label per segment.  Segment types are either
output-invariant (swap-*, zero-incoming, set-incoming: the network function
does not change along them) or convex (output-interp, bridge-output: only
the final weight matrix moves, so the loss is bounded by the endpoint
losses).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .network import (
    Dataset,
    NetworkArch,
    Params,
    ShapeError,
    TrainConfig,
    average_loss,
    classification_error,
    lerp_params,
    logits,
    loss_from_logits,
    params_equal,
)
from .subnet import (
    LayerBoundEstimate,
    SubnetParams,
    SubsetPlan,
    estimate_min_subnet_loss,
    subnet_widths,
)

SWAP_A = "swap-a"
SWAP_B = "swap-b"
SWAP_C = "swap-c"
ZERO_INCOMING = "zero-incoming"
SET_INCOMING = "set-incoming"
OUTPUT_INTERP = "output-interp"
BRIDGE_OUTPUT = "bridge-output"
_REVERSE_PREFIX = "reverse-of:"


class PreconditionError(RuntimeError):
    """A segment builder was asked to violate its output-invariance
    precondition; never proceeds silently."""


@dataclass(eq=False)
class PWLPath:
    """Ordered breakpoints plus one label per segment.

    A zero-segment "point" path is permitted as the identity for
    concatenation (an alignment with nothing to do returns one).
    """

    breakpoints: list[Params]
    labels: list[str]

    def __post_init__(self):
        if len(self.breakpoints) < 1:
            raise ValueError("path needs at least one breakpoint")
        if len(self.labels) != len(self.breakpoints) - 1:
            raise ValueError("need exactly one label per segment")
        arch = self.breakpoints[0].arch
        if any(p.arch != arch for p in self.breakpoints):
            raise ShapeError(0, "breakpoints mix architectures")

    @staticmethod
    def point(params: Params) -> "PWLPath":
        return PWLPath([params.copy()], [])

    @staticmethod
    def segment(a: Params, b: Params, label: str) -> "PWLPath":
        return PWLPath([a, b], [label])

    @property
    def segment_count(self) -> int:
        return len(self.labels)

    @property
    def start(self) -> Params:
        return self.breakpoints[0]

    @property
    def end(self) -> Params:
        return self.breakpoints[-1]

    def then(self, other: "PWLPath") -> "PWLPath":
        """Concatenation; the junction breakpoints must match bitwise."""
        if not params_equal(self.end, other.start):
            raise PreconditionError("paths do not share a junction breakpoint")
        return PWLPath(
            self.breakpoints + other.breakpoints[1:], self.labels + other.labels
        )

    def reverse(self) -> "PWLPath":
        labels = []
        for tag in reversed(self.labels):
            if tag.startswith(_REVERSE_PREFIX):
                labels.append(tag[len(_REVERSE_PREFIX):])
            else:
                labels.append(_REVERSE_PREFIX + tag)
        return PWLPath(list(reversed(self.breakpoints)), labels)

    def at(self, seg: int, lam: float) -> Params:
        """Point within one segment: (1-lam)*start + lam*end."""
        if lam == 0.0:
            return self.breakpoints[seg].copy()
        if lam == 1.0:
            return self.breakpoints[seg + 1].copy()
        return lerp_params(self.breakpoints[seg], self.breakpoints[seg + 1], lam)

    def point_at(self, t: float) -> Params:
        """Global parameterization: equal t-span per segment, t in [0, 1]."""
        if not 0.0 <= t <= 1.0:
            raise ValueError("t must lie in [0, 1]")
        if self.segment_count == 0:
            return self.breakpoints[0].copy()
        pos = t * self.segment_count
        seg = min(int(pos), self.segment_count - 1)
        return self.at(seg, pos - seg)


@dataclass
class PathSample:
    t: float
    segment: int
    label: str
    loss: float
    error: float


@dataclass
class PathReport:
    """Losses sampled along a path; endpoints are always included."""

    samples: list[PathSample]
    max_loss: float
    per_segment_max: list[float]

    @property
    def endpoint_losses(self) -> tuple[float, float]:
        return self.samples[0].loss, self.samples[-1].loss


@dataclass
class EndpointBound:
    endpoint: int
    loss: float
    layer_losses: dict[int, float]
    plans: dict[int, SubsetPlan]
    subnets: dict[int, SubnetParams]
    records: dict[int, LayerBoundEstimate]

    @property
    def worst(self) -> float:
        layer_max = max(self.layer_losses.values(), default=-math.inf)
        return max(self.loss, layer_max)


@dataclass
class BoundReport:
    """Achieved per-layer subnetwork losses and the resulting path bound."""

    endpoints: list[EndpointBound]

    @property
    def rhs(self) -> float:
        return max(e.worst for e in self.endpoints)

    def to_json_dict(self) -> dict:
        return {
            "format": "MCBOUND1",
            "rhs": self.rhs,
            "endpoint_losses": [e.loss for e in self.endpoints],
            "per_layer": [
                {
                    "endpoint": e.endpoint,
                    "layer": l,
                    "achieved_loss": e.layer_losses[l],
                    "kept": list(e.plans[l].kept_at(l)) if l in e.plans else None,
                    "subnet_widths": list(e.subnets[l].widths)
                    if l in e.subnets
                    else None,
                    "trials": len(e.records[l].records) if l in e.records else 0,
                }
                for e in self.endpoints
                for l in sorted(e.layer_losses)
            ],
        }


@dataclass
class LayerAssignment:
    """Target incoming weights for some neurons of one hidden layer."""

    layer: int
    indices: tuple[int, ...]
    w_cols: np.ndarray  # (n_{layer-1}, len(indices))
    b_vals: np.ndarray  # (len(indices),)


# ---------------------------------------------------------------------------
# structural checks


def _outgoing(params: Params, layer: int) -> np.ndarray:
    # outgoing weight rows of layer-`layer` neurons live in W_{layer+1}
    return params.weights[layer]


def _is_pure_zero(params: Params, layer: int, idx: int) -> bool:
    return (
        not params.weights[layer - 1][:, idx].any()
        and params.biases[layer - 1][idx] == 0.0
        and not _outgoing(params, layer)[idx, :].any()
    )


def _influence_masks(patterns: list[np.ndarray]) -> list[np.ndarray | None]:
    """For each hidden layer, which neurons can reach the output through
    nonzero weights.  ``patterns[l-1]`` is the nonzero pattern of W_l."""
    L = len(patterns)
    infl: list[np.ndarray | None] = [None] * L
    cur = patterns[L - 1].any(axis=1)
    infl[L - 1] = cur
    for p in range(L - 2, 0, -1):
        cur = (patterns[p] & cur[None, :]).any(axis=1)
        infl[p] = cur
    return infl


def _assert_silent(start: Params, end: Params, assignments: Sequence[LayerAssignment]):
    """Every assigned neuron must have no nonzero-weight route to the output
    anywhere along the segment.  The interior nonzero pattern of a linear
    segment is contained in the union of the endpoint patterns, so the check
    runs on that union."""
    union = [
        (ws != 0.0) | (we != 0.0) for ws, we in zip(start.weights, end.weights)
    ]
    infl = _influence_masks(union)
    for a in assignments:
        mask = infl[a.layer]
        for idx in a.indices:
            if mask[idx]:
                raise PreconditionError(
                    f"neuron {idx} at layer {a.layer} can still reach the output; "
                    "refusing to rewrite its incoming weights"
                )


# ---------------------------------------------------------------------------
# segment builders


def swap_neurons_path(params: Params, layer: int, zero_idx: int, src_idx: int) -> PWLPath:
    """Exchange a pure-zero neuron with another one on the same hidden layer
    by three output-invariant segments: copy incoming, transfer outgoing
    mass, zero the source's incoming."""
    arch = params.arch
    if not 1 <= layer <= arch.depth - 1:
        raise ValueError(f"layer must be hidden, got {layer}")
    if zero_idx == src_idx:
        raise PreconditionError("cannot swap a neuron with itself")
    if not _is_pure_zero(params, layer, zero_idx):
        raise PreconditionError(
            f"neuron {zero_idx} at layer {layer} is not pure zero"
        )
    p0 = params.copy()
    # (a) copy source incoming onto the zero neuron
    p1 = p0.copy()
    p1.weights[layer - 1][:, zero_idx] = p1.weights[layer - 1][:, src_idx]
    p1.biases[layer - 1][zero_idx] = p1.biases[layer - 1][src_idx]
    # (b) move the outgoing weight mass across
    p2 = p1.copy()
    p2.weights[layer][zero_idx, :] = p1.weights[layer][src_idx, :]
    p2.weights[layer][src_idx, :] = 0.0
    # (c) zero the source incoming
    p3 = p2.copy()
    p3.weights[layer - 1][:, src_idx] = 0.0
    p3.biases[layer - 1][src_idx] = 0.0
    return PWLPath([p0, p1, p2, p3], [SWAP_A, SWAP_B, SWAP_C])


def zero_out_incoming(params: Params, layer: int, indices) -> PWLPath:
    """One segment driving the incoming weights and biases of the listed
    neurons to zero; requires their outgoing rows to be exactly zero."""
    arch = params.arch
    if not 1 <= layer <= arch.depth - 1:
        raise ValueError(f"layer must be hidden, got {layer}")
    indices = tuple(int(i) for i in indices)
    p0 = params.copy()
    if not indices:
        return PWLPath.segment(p0, p0.copy(), ZERO_INCOMING)
    out = _outgoing(p0, layer)
    for idx in indices:
        if out[idx, :].any():
            raise PreconditionError(
                f"neuron {idx} at layer {layer} still has outgoing weight"
            )
    p1 = p0.copy()
    p1.weights[layer - 1][:, list(indices)] = 0.0
    p1.biases[layer - 1][list(indices)] = 0.0
    return PWLPath.segment(p0, p1, ZERO_INCOMING)


def set_incoming(params: Params, assignments: Sequence[LayerAssignment]) -> PWLPath:
    """One segment writing arbitrary incoming weights into output-silent
    neurons.  Silence is checked structurally over the whole segment: no
    assigned neuron may have a nonzero-weight route to the output at either
    endpoint (interior patterns are contained in that union)."""
    p0 = params.copy()
    p1 = p0.copy()
    for a in assignments:
        if not 1 <= a.layer <= p0.arch.depth - 1:
            raise ValueError(f"layer must be hidden, got {a.layer}")
        cols = np.asarray(a.indices, dtype=np.int64)
        w = np.asarray(a.w_cols, dtype=np.float64)
        b = np.asarray(a.b_vals, dtype=np.float64)
        if w.shape != (p0.arch.widths[a.layer - 1], len(a.indices)):
            raise ShapeError(a.layer, f"assignment block shape {w.shape} mismatched")
        p1.weights[a.layer - 1][:, cols] = w
        p1.biases[a.layer - 1][cols] = b
    _assert_silent(p0, p1, assignments)
    return PWLPath.segment(p0, p1, SET_INCOMING)


def output_interp(params: Params, w_last: np.ndarray, label: str = OUTPUT_INTERP) -> PWLPath:
    """One segment moving only the final weight matrix; convex in the loss."""
    p0 = params.copy()
    w_last = np.asarray(w_last, dtype=np.float64)
    if w_last.shape != p0.weights[-1].shape:
        raise ShapeError(p0.arch.depth, f"final matrix shape {w_last.shape} mismatched")
    p1 = p0.copy()
    p1.weights[-1] = w_last.copy()
    return PWLPath.segment(p0, p1, label)


# ---------------------------------------------------------------------------
# embedding a subnetwork into a host network


@dataclass
class EmbedResult:
    embedded: Params
    assignments: list[LayerAssignment]
    w_last_on: np.ndarray


def embed(subnet: SubnetParams, plan: SubsetPlan, host: Params) -> EmbedResult:
    """Write a subnetwork into the complement positions of a host network.

    The hidden matrices become incoming-weight assignments for the
    complement neurons at layers anchor+1..L-1 (zero from outside the
    subnetwork); the final matrix becomes ``w_last_on``, the output matrix
    that reads the subnetwork rows only.  Host neurons at the target
    positions must be pure zero.  ``embedded`` applies the hidden
    assignments but leaves the output matrix alone.
    """
    arch = host.arch
    expect = subnet_widths(arch, plan)
    if subnet.widths != expect:
        raise ShapeError(
            plan.anchor, f"subnet widths {subnet.widths} != plan widths {expect}"
        )
    L = arch.depth
    anchor = plan.anchor
    assignments = []
    src = np.asarray(plan.kept_at(anchor), dtype=np.int64)
    for off, p in enumerate(range(anchor + 1, L)):
        u = subnet.matrices[off]
        dst = plan.complement_at(arch, p)
        for idx in dst:
            if not _is_pure_zero(host, p, idx):
                raise PreconditionError(
                    f"host neuron {idx} at layer {p} is not pure zero"
                )
        w_cols = np.zeros((arch.widths[p - 1], len(dst)))
        if len(dst):
            w_cols[src, :] = u
        if dst:
            assignments.append(
                LayerAssignment(p, tuple(dst), w_cols, subnet.biases[off].copy())
            )
        src = np.asarray(dst, dtype=np.int64)
    rows = (
        plan.kept_at(L - 1) if anchor == L - 1 else plan.complement_at(arch, L - 1)
    )
    w_last_on = np.zeros_like(host.weights[-1])
    if len(rows):
        w_last_on[np.asarray(rows, dtype=np.int64), :] = subnet.matrices[-1]
    embedded = host.copy()
    for a in assignments:
        cols = np.asarray(a.indices, dtype=np.int64)
        embedded.weights[a.layer - 1][:, cols] = a.w_cols
        embedded.biases[a.layer - 1][cols] = a.b_vals
    return EmbedResult(embedded, assignments, w_last_on)


# ---------------------------------------------------------------------------
# sparsification


@dataclass
class SparsifyResult:
    path: PWLPath
    sparse: Params
    active: dict[int, tuple[int, ...]]  # layer -> positions still in use


def sparsify_path(
    params: Params,
    plans: Mapping[int, SubsetPlan],
    subnets: Mapping[int, SubnetParams],
) -> SparsifyResult:
    """Drive every complement neuron to pure zero, one layer at a time from
    the top, switching the output onto each anchor's trained subnetwork
    through a convex segment.  The plans must agree on a single family of
    kept sets; layers whose complement is empty are skipped.
    """
    arch = params.arch
    L = arch.depth
    family: dict[int, tuple[int, ...]] = {}
    for l in range(1, L):
        if l not in plans:
            raise ValueError(f"missing plan for layer {l}")
        family[l] = plans[l].kept_at(l)
        if 2 * len(family[l]) < arch.widths[l]:
            raise PreconditionError(
                f"plan at layer {l} keeps fewer than half the neurons"
            )
    for l in range(1, L):
        for p in range(l + 1, L):
            if plans[l].kept_at(p) != family[p]:
                raise ValueError(
                    f"plan for anchor {l} disagrees with the family at layer {p}"
                )
        if l not in subnets:
            raise ValueError(f"missing subnetwork for layer {l}")
        if subnets[l].widths != subnet_widths(arch, plans[l]):
            raise ShapeError(l, "subnetwork widths do not match the plan")

    comp = {l: plans[l].complement_at(arch, l) for l in range(1, L)}
    cur = params.copy()
    path = PWLPath.point(cur)

    def push(seg: PWLPath):
        nonlocal path, cur
        path = path.then(seg)
        cur = path.end

    # top layer: refit the output onto the kept features, then clear the
    # complement
    if comp[L - 1]:
        top_subnet = subnets[L - 1]
        w_on = np.zeros_like(cur.weights[-1])
        w_on[np.asarray(family[L - 1], dtype=np.int64), :] = top_subnet.matrices[0]
        push(output_interp(cur, w_on))
        push(zero_out_incoming(cur, L - 1, comp[L - 1]))

    active: dict[int, tuple[int, ...]] = {L - 1: family[L - 1]}
    for p in range(1, L - 1):
        active[p] = tuple(range(arch.widths[p]))

    for l in range(L - 2, 0, -1):
        if not comp[l]:
            continue
        er = embed(subnets[l], plans[l], cur)
        if er.assignments:
            push(set_incoming(cur, er.assignments))
        push(output_interp(cur, er.w_last_on))
        # the old kept-side circuitry above layer l is now silent; clear it
        # top-down so each zeroing sees zero outgoing rows
        for p in range(L - 1, l, -1):
            push(zero_out_incoming(cur, p, family[p]))
        push(zero_out_incoming(cur, l, comp[l]))
        # relocate the subnetwork units into kept positions, freeing the
        # complements again (bottom-up, ascending index pairing)
        for p in range(l + 1, L):
            dests = sorted(family[p])
            for k, src_idx in enumerate(sorted(comp[p])):
                push(swap_neurons_path(cur, p, dests[k], src_idx))
            active[p] = tuple(dests[: len(comp[p])])
        active[l] = family[l]

    return SparsifyResult(path, cur, active)


def align_subsets(
    sparse: Params,
    from_active: Mapping[int, tuple[int, ...]],
    to_active: Mapping[int, tuple[int, ...]],
) -> PWLPath:
    """Swap pure-zero neurons so the active positions of a sparsified point
    match a target layout; output-invariant throughout.  Returns a point
    path when the layouts already agree."""
    arch = sparse.arch
    cur = sparse.copy()
    path = PWLPath.point(cur)
    for layer in range(1, arch.depth):
        src = set(from_active.get(layer, ()))
        dst = set(to_active.get(layer, ()))
        if len(src) != len(dst):
            raise PreconditionError(
                f"layer {layer}: cannot align {len(src)} active units to "
                f"{len(dst)} positions"
            )
        moves = list(zip(sorted(src - dst), sorted(dst - src)))
        for src_idx, dst_idx in moves:
            seg = swap_neurons_path(cur, layer, dst_idx, src_idx)
            path = path.then(seg)
            cur = path.end
    return path


def bridge_sparsified(
    sparse_a: Params,
    sparse_b: Params,
    input_subnet: SubnetParams,
    input_plan: SubsetPlan,
    active: Mapping[int, tuple[int, ...]],
) -> PWLPath:
    """Connect two sparsified points with identical pure-zero layouts via a
    subnetwork trained on the raw inputs: switch the output onto it, rewrite
    the silent kept side to the second point, switch back, and clear."""
    arch = sparse_a.arch
    L = arch.depth
    if input_plan.anchor != 0:
        raise ValueError("the bridge subnetwork must be anchored at the input")
    for layer in range(1, L):
        act = set(active.get(layer, ()))
        for idx in range(arch.widths[layer]):
            if idx in act:
                continue
            for point, name in ((sparse_a, "first"), (sparse_b, "second")):
                if not _is_pure_zero(point, layer, idx):
                    raise PreconditionError(
                        f"{name} point: neuron {idx} at layer {layer} should be "
                        "pure zero"
                    )

    cur = sparse_a.copy()
    path = PWLPath.point(cur)

    def push(seg: PWLPath):
        nonlocal path, cur
        path = path.then(seg)
        cur = path.end

    er = embed(input_subnet, input_plan, cur)
    if er.assignments:
        push(set_incoming(cur, er.assignments))
    push(output_interp(cur, er.w_last_on, label=BRIDGE_OUTPUT))

    assignments = []
    for layer in range(1, L):
        kept = np.asarray(input_plan.kept_at(layer), dtype=np.int64)
        if len(kept) == 0:
            continue
        assignments.append(
            LayerAssignment(
                layer,
                tuple(int(i) for i in kept),
                sparse_b.weights[layer - 1][:, kept].copy(),
                sparse_b.biases[layer - 1][kept].copy(),
            )
        )
    if assignments:
        push(set_incoming(cur, assignments))
    push(output_interp(cur, sparse_b.weights[-1], label=BRIDGE_OUTPUT))
    for layer in range(L - 1, 0, -1):
        comp = input_plan.complement_at(arch, layer)
        if comp:
            push(zero_out_incoming(cur, layer, comp))
    if not params_equal(cur, sparse_b):
        raise PreconditionError("bridge did not terminate at the second point")
    return path


# ---------------------------------------------------------------------------
# full composition and evaluation


@dataclass
class PathBuildResult:
    path: PWLPath
    bound: BoundReport
    report: PathReport


def eval_path(path: PWLPath, data: Dataset, samples_per_segment: int) -> PathReport:
    """Loss and error at segment endpoints plus samples_per_segment - 1
    equispaced interior points per segment."""
    if samples_per_segment < 1:
        raise ValueError("samples_per_segment must be >= 1")
    onehot = data.is_onehot()
    kind = path.start.arch.loss_kind

    def measure(p: Params) -> tuple[float, float]:
        z = logits(p, data.inputs)
        loss = loss_from_logits(z, data.targets, kind, raising=False)
        err = (
            float((z.argmax(axis=1) != data.labels()).mean()) if onehot else math.nan
        )
        return loss, err

    samples: list[PathSample] = []
    per_seg: list[float] = []
    n_seg = path.segment_count
    if n_seg == 0:
        loss, err = measure(path.start)
        return PathReport([PathSample(0.0, 0, "", loss, err)], loss, [])
    for seg in range(n_seg):
        seg_max = -math.inf
        start_j = 0 if seg == 0 else 1
        for j in range(start_j, samples_per_segment + 1):
            lam = j / samples_per_segment
            t = (seg + lam) / n_seg
            loss, err = measure(path.at(seg, lam))
            samples.append(PathSample(t, seg, path.labels[seg], loss, err))
            seg_max = max(seg_max, loss)
        if seg > 0:
            # the shared junction sample belongs to both segments
            seg_max = max(seg_max, samples[-(samples_per_segment + 1)].loss)
        per_seg.append(seg_max)
    max_loss = max(s.loss for s in samples)
    return PathReport(samples, max_loss, per_seg)


def default_cards(arch: NetworkArch, layer: int, ratio: float) -> tuple[int, ...]:
    """Kept-set cardinalities for layers layer..L-1 at the given removal
    ratio: ceil((1-ratio) * n_l), and every input coordinate at layer 0."""
    cards = []
    for p in range(layer, arch.depth):
        if p == 0:
            cards.append(arch.widths[0])
        else:
            cards.append(int(math.ceil((1.0 - ratio) * arch.widths[p])))
    return tuple(cards)


def build_connecting_path(
    point_a: Params,
    point_b: Params,
    data: Dataset,
    cfg: TrainConfig,
    *,
    ratio: float = 0.5,
    trials: int = 20,
    samples_per_segment: int = 20,
    shortcut: bool = False,
    jobs: int = 1,
) -> PathBuildResult:
    """Full construction between two parameter points.

    Per endpoint and per layer, estimates the best trained subnetwork over
    ``trials`` sampled kept sets; sparsifies both endpoints along their
    winning families; aligns the second sparsified point to the first's
    layout; bridges through the better of the two input-anchored
    subnetworks; and returns the composed path with its achieved-loss bound
    and a sampled loss report.

    With ``shortcut=True`` and bitwise-identical endpoints, the trivial
    identity segment is returned instead (the detour through sparsification
    is the default even for equal endpoints, by design).
    """
    if point_a.arch != point_b.arch:
        raise ShapeError(0, "endpoints have different architectures")
    arch = point_a.arch
    L = arch.depth

    if shortcut and params_equal(point_a, point_b):
        path = PWLPath.segment(point_a.copy(), point_b.copy(), OUTPUT_INTERP)
        report = eval_path(path, data, samples_per_segment)
        endpoints = [
            EndpointBound(e, average_loss(p, data), {}, {}, {}, {})
            for e, p in enumerate((point_a, point_b))
        ]
        return PathBuildResult(path, BoundReport(endpoints), report)

    estimates: list[dict[int, LayerBoundEstimate]] = []
    bounds: list[EndpointBound] = []
    for e, point in enumerate((point_a, point_b)):
        per_layer: dict[int, LayerBoundEstimate] = {}
        for l in range(0, L):
            cards = default_cards(arch, l, ratio)
            base_seed = cfg.seed + (e * L + l) * trials
            est = estimate_min_subnet_loss(
                point, data, l, cards, trials, cfg.with_seed(base_seed), jobs=jobs
            )
            if est.best_plan is None:
                raise PreconditionError(
                    f"endpoint {e}, layer {l}: every subnetwork trial diverged"
                )
            per_layer[l] = est
        estimates.append(per_layer)
        bounds.append(
            EndpointBound(
                e,
                average_loss(point, data),
                {l: per_layer[l].best_loss for l in per_layer},
                {l: per_layer[l].best_plan for l in per_layer},
                {l: per_layer[l].best_subnet for l in per_layer},
                per_layer,
            )
        )

    def family_plans(per_layer: dict[int, LayerBoundEstimate]):
        family = {l: per_layer[l].best_plan.kept_at(l) for l in range(1, L)}
        plans = {}
        for l in range(1, L):
            kept = [family[p] for p in range(l, L)]
            plans[l] = SubsetPlan.make(arch, l, kept)
        input_plan = SubsetPlan.make(
            arch, 0, [tuple(range(arch.widths[0]))] + [family[p] for p in range(1, L)]
        )
        return plans, input_plan

    plans0, bridge_plan = family_plans(estimates[0])
    plans1, _ = family_plans(estimates[1])
    subnets0 = {l: estimates[0][l].best_subnet for l in range(1, L)}
    subnets1 = {l: estimates[1][l].best_subnet for l in range(1, L)}

    sp0 = sparsify_path(point_a, plans0, subnets0)
    sp1 = sparsify_path(point_b, plans1, subnets1)
    alignment = align_subsets(sp1.sparse, sp1.active, sp0.active)

    if estimates[0][0].best_loss <= estimates[1][0].best_loss:
        input_subnet = estimates[0][0].best_subnet
    else:
        input_subnet = estimates[1][0].best_subnet

    bridge = bridge_sparsified(
        sp0.sparse, alignment.end, input_subnet, bridge_plan, sp0.active
    )
    full = sp0.path.then(bridge).then(alignment.reverse()).then(sp1.path.reverse())
    report = eval_path(full, data, samples_per_segment)
    return PathBuildResult(full, BoundReport(bounds), report)
