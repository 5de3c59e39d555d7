"""Checkable predicates behind the sufficient conditions for connectivity:
generic position, distinctness, last-two-layer capacity arithmetic,
last-layer refits, one-vs-rest linear separability, and dropout stability.

Each check returns a :class:`CheckResult`; related checks are grouped in a
:class:`ConditionReport` whose overall verdict is their conjunction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .network import (
    CROSS_ENTROPY,
    Dataset,
    NetworkArch,
    Params,
    TrainConfig,
    average_loss,
    hidden_features,
    loss_from_logits,
)
from .rng import SplitMix64
from .subnet import SubsetPlan, dropout_stability_curve

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"
NO_VIOLATION = "no-violation-found"


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


@dataclass
class CheckResult:
    name: str
    status: str
    margin: float | None = None
    witness: object = None
    detail: str = ""
    exact: bool = True

    @property
    def passed(self) -> bool:
        return self.status in (PASS, NO_VIOLATION)

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "status": self.status,
            "margin": None if self.margin is None else float(self.margin),
            "witness": _jsonable(self.witness),
            "detail": self.detail,
            "exact": self.exact,
        }


@dataclass
class ConditionReport:
    name: str
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def overall(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json_dict(self) -> dict:
        return {
            "name": self.name,
            "overall": self.overall,
            "checks": [c.to_json_dict() for c in self.checks],
        }


# ---------------------------------------------------------------------------
# geometry of feature sets


def _homogeneous_det(points: np.ndarray, subset) -> tuple[float, float]:
    m = np.hstack([points[list(subset)], np.ones((len(subset), 1))])
    scale = float(np.prod(np.linalg.norm(m, axis=1)))
    return float(np.linalg.det(m)), scale


def check_generic_position(
    points: np.ndarray,
    *,
    tol: float = 1e-9,
    exact_limit: int = 20000,
    mc_trials: int = 2000,
    seed: int = 0,
) -> CheckResult:
    """No hyperplane through more than d of the points.

    Exact mode enumerates every (d+1)-subset and tests the homogenized
    determinant against ``tol`` times the product of row norms; it runs when
    the subset count is at most ``exact_limit``.  Larger instances are
    spot-checked on ``mc_trials`` random subsets, which can only report
    "no violation found", never a proof.
    """
    points = np.asarray(points, dtype=np.float64)
    n, d = points.shape
    if n < d + 1:
        return CheckResult("generic-position", PASS, detail="fewer points than d+1")
    if math.comb(n, d + 1) <= exact_limit:
        for subset in itertools.combinations(range(n), d + 1):
            det, scale = _homogeneous_det(points, subset)
            if abs(det) <= tol * scale:
                return CheckResult(
                    "generic-position",
                    FAIL,
                    margin=abs(det),
                    witness=list(subset),
                    detail="d+1 points lie on one hyperplane",
                )
        return CheckResult("generic-position", PASS, detail="exhaustive scan")
    rng = SplitMix64(seed)
    for _ in range(mc_trials):
        subset = rng.subset(n, d + 1)
        det, scale = _homogeneous_det(points, subset)
        if abs(det) <= tol * scale:
            return CheckResult(
                "generic-position",
                FAIL,
                margin=abs(det),
                witness=[int(i) for i in subset],
                detail="d+1 points lie on one hyperplane",
            )
    return CheckResult(
        "generic-position",
        NO_VIOLATION,
        exact=False,
        detail=f"no violation found in {mc_trials} random subsets (not a proof)",
    )


def check_distinct(points: np.ndarray, tol: float = 1e-9) -> CheckResult:
    """All pairwise L-infinity distances exceed tol; reports the closest pair."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    best = math.inf
    pair = None
    for i in range(n - 1):
        d = np.abs(points[i + 1:] - points[i]).max(axis=1)
        j = int(d.argmin())
        if d[j] < best:
            best = float(d[j])
            pair = (i, i + 1 + j)
    if n < 2:
        return CheckResult("distinct", PASS, detail="fewer than two points")
    status = PASS if best > tol else FAIL
    return CheckResult("distinct", status, margin=best, witness=list(pair))


# ---------------------------------------------------------------------------
# capacity arithmetic and last-layer refit


def check_capacity(arch: NetworkArch, keep_size: int, n_samples: int) -> CheckResult:
    """Integer inequality tying the last two hidden widths to the sample
    count: keep at least half of layer L-1, and
    4*floor(n_{L-2}/8)*floor((n_{L-1}-keep)/(4*n_L)) >= N.  Pure integer
    arithmetic."""
    widths = arch.widths
    n_lm1 = widths[-2]
    n_lm2 = widths[-3]
    n_out = widths[-1]
    keep = int(keep_size)
    if 2 * keep < n_lm1:
        return CheckResult(
            "capacity",
            FAIL,
            margin=float(2 * keep - n_lm1),
            detail=f"kept {keep} of {n_lm1}: below half",
        )
    product = 4 * (n_lm2 // 8) * ((n_lm1 - keep) // (4 * n_out))
    status = PASS if product >= n_samples else FAIL
    return CheckResult(
        "capacity",
        status,
        margin=float(product - n_samples),
        detail=f"capacity product {product} vs {n_samples} samples",
    )


def refit_last_layer(
    params: Params,
    data: Dataset,
    kept,
    *,
    grad_tol: float = 1e-7,
    max_iters: int = 20000,
    stop_at: float | None = None,
) -> tuple[float, bool]:
    """Convex refit of the output matrix over the kept last-hidden features
    by full-batch gradient descent with an adaptive step.

    Returns (loss, converged); converged means the gradient norm reached
    ``grad_tol`` or the loss reached ``stop_at``.  Warm-started from the
    current output weights restricted to the kept rows.
    """
    arch = params.arch
    kept = np.asarray(list(kept), dtype=np.int64)
    feats = np.ascontiguousarray(
        hidden_features(params, data.inputs, arch.depth - 1)[:, kept]
    )
    w = np.ascontiguousarray(params.weights[-1][kept, :])
    if w.size == 0:
        w = np.zeros((0, arch.output_dim))
    loss_id = arch.loss_id
    kind = arch.loss_kind

    def value(wm):
        z = feats @ wm
        return loss_from_logits(z, data.targets, kind, raising=False)

    loss = value(w)
    step = 1.0
    for _ in range(max_iters):
        if stop_at is not None and loss <= stop_at:
            return loss, True
        gws, _ = _kernel.grad_full([w], [], feats, data.targets, 0, 0.0, loss_id)
        g = gws[0]
        gnorm = float(np.sqrt((g * g).sum()))
        if gnorm <= grad_tol:
            return loss, True
        while step > 1e-18:
            trial = w - step * g
            tval = value(trial)
            if np.isfinite(tval) and tval <= loss:
                w, loss = trial, tval
                step *= 1.25
                break
            step *= 0.5
        else:
            return loss, False
    return loss, False


def check_last_layer_refit(
    params: Params,
    data: Dataset,
    kept,
    epsilon: float,
    *,
    grad_tol: float = 1e-7,
    max_iters: int = 20000,
    early_exit: bool = True,
) -> CheckResult:
    """Does some output matrix over the kept features reach the current loss
    plus epsilon?  The refit value always upper-bounds the true optimum, so
    a pass is conclusive; a fail is only claimed after convergence."""
    ref = average_loss(params, data)
    target = ref + epsilon
    loss, converged = refit_last_layer(
        params,
        data,
        kept,
        grad_tol=grad_tol,
        max_iters=max_iters,
        stop_at=target if early_exit else None,
    )
    if loss <= target:
        status = PASS
    elif converged:
        status = FAIL
    else:
        status = INCONCLUSIVE
    return CheckResult(
        "last-layer-refit",
        status,
        margin=target - loss,
        witness={"refit_loss": loss, "reference_loss": ref},
        detail=f"refit loss {loss:.6g} vs target {target:.6g}",
    )


# ---------------------------------------------------------------------------
# linear separability


def perceptron_budget(n: int, classes: int) -> int:
    return 10 * n * classes


def check_linear_separability(
    features: np.ndarray,
    labels_onehot: np.ndarray,
    max_epochs: int | None = None,
) -> CheckResult:
    """One-vs-rest perceptron per class, margin-free updates.

    Passes only when every class reaches zero one-vs-rest errors within the
    epoch budget; the witness is then one (weights, bias) hyperplane per
    class.  Running out of budget is reported as "not separated within
    budget", never as a proof of inseparability.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels_onehot, dtype=np.float64)
    n, d = x.shape
    classes = y.shape[1]
    if max_epochs is None:
        max_epochs = perceptron_budget(n, classes)
    aug = np.hstack([x, np.ones((n, 1))])
    witness = []
    for k in range(classes):
        sign = np.where(y[:, k] == 1.0, 1.0, -1.0)
        w = np.zeros(d + 1)
        separated = False
        for _ in range(max_epochs):
            margins = sign * (aug @ w)
            if (margins > 0.0).all():
                separated = True
                break
            for j in range(n):
                if sign[j] * (aug[j] @ w) <= 0.0:
                    w = w + sign[j] * aug[j]
        if not separated and not (sign * (aug @ w) > 0.0).all():
            return CheckResult(
                "linear-separability",
                FAIL,
                witness=None,
                detail=f"class {k} not separated within {max_epochs} epochs",
                exact=False,
            )
        witness.append((w[:d].copy(), float(w[d])))
    return CheckResult(
        "linear-separability",
        PASS,
        witness=witness,
        detail=f"{classes} one-vs-rest hyperplanes found",
    )


def verify_separating_witness(features, labels_onehot, witness) -> bool:
    """Brute-force sign check of a one-vs-rest witness over every sample."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels_onehot, dtype=np.float64)
    for k, (w, b) in enumerate(witness):
        score = x @ np.asarray(w) + b
        sign = np.where(y[:, k] == 1.0, 1.0, -1.0)
        if not (sign * score > 0.0).all():
            return False
    return True


def check_layerwise_separability(
    params: Params,
    data: Dataset,
    plans: dict[int, SubsetPlan] | dict[int, tuple],
    max_epochs: int | None = None,
) -> ConditionReport:
    """Width windows plus per-layer kept-feature separability.

    For each hidden layer the kept count must satisfy
    n_l/2 <= K <= n_l - n_L, and the kept features (raw inputs at layer 0)
    must be one-vs-rest separable.  The remaining hypothesis, an interval on
    which the activation is strictly monotonic, holds for both supported
    activations (any positive interval) and is not re-checked at runtime.
    """
    arch = params.arch
    report = ConditionReport("layerwise-separability")
    n_out = arch.output_dim
    for layer in range(0, arch.depth):
        if layer == 0:
            kept = tuple(range(arch.widths[0]))
        else:
            plan = plans[layer]
            kept = plan.kept_at(layer) if isinstance(plan, SubsetPlan) else tuple(plan)
            n_l = arch.widths[layer]
            k = len(kept)
            if 2 * k < n_l or k > n_l - n_out:
                report.checks.append(
                    CheckResult(
                        f"width-window-layer-{layer}",
                        FAIL,
                        margin=float(min(2 * k - n_l, n_l - n_out - k)),
                        detail=(
                            f"kept {k} outside [{(n_l + 1) // 2}, {n_l - n_out}] "
                            f"at width {n_l}"
                        ),
                    )
                )
                continue
            report.checks.append(
                CheckResult(
                    f"width-window-layer-{layer}",
                    PASS,
                    detail=f"kept {len(kept)} of {arch.widths[layer]}",
                )
            )
        feats = hidden_features(params, data.inputs, layer)[:, list(kept)]
        res = check_linear_separability(feats, data.targets, max_epochs)
        res.name = f"separability-layer-{layer}"
        report.checks.append(res)
    return report


# ---------------------------------------------------------------------------
# dropout stability


def check_dropout_stable(
    params: Params,
    data: Dataset,
    epsilon: float,
    trials: int = 200,
    *,
    ratio: float = 0.5,
    seed: int = 0,
) -> ConditionReport:
    """Best-of-``trials`` dropout-plus-rescale loss per layer, compared with
    the reference loss plus epsilon."""
    ref = average_loss(params, data)
    cfg = TrainConfig(learning_rate=1.0, seed=seed)
    curve = dropout_stability_curve(params, data, trials, ratio, cfg)
    report = ConditionReport("dropout-stability")
    for res in curve:
        ok = res.best_loss <= ref + epsilon
        report.checks.append(
            CheckResult(
                f"dropout-layer-{res.layer}",
                PASS if ok else FAIL,
                margin=ref + epsilon - res.best_loss,
                witness={"best_loss": res.best_loss, "scale": res.best_scale},
                detail=(
                    f"best of {trials} trials: {res.best_loss:.6g} vs "
                    f"reference {ref:.6g} + {epsilon:g}"
                ),
            )
        )
    return report
