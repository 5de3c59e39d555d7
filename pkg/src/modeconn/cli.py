"""Command-line driver.

Subcommands compose the library into the experiment protocols:

* ``train``    -- train one model (or a width sweep) and write model files
* ``bounds``   -- per-layer best trained-subnetwork losses for a model
* ``dropout``  -- per-layer best dropout-plus-rescale losses for a model
* ``path``     -- build and evaluate the connecting path between two models
* ``check``    -- run the sufficient-condition checkers against a model

Configuration comes from an INI-style file with one section per command
(plus ``[data]`` and ``[arch]``); command-line flags override file values,
and unknown keys are rejected.  Exit codes: 0 success, 1 training finished
above zero error, 2 configuration error, 3 numeric divergence,
4 precondition violation during path construction.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
import time

import numpy as np

from . import data as dio
from . import network as net
from . import pathbuild as pb
from . import subnet as sn
from .conditions import (
    check_capacity,
    check_distinct,
    check_dropout_stable,
    check_generic_position,
    check_last_layer_refit,
    check_layerwise_separability,
)
from .rng import SplitMix64

EXIT_OK = 0
EXIT_TRAIN_INCOMPLETE = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_PRECONDITION = 4


class ConfigError(Exception):
    pass


_SECTION_KEYS = {
    "data": {"kind", "n", "dim", "classes", "noise", "seed", "images", "labels"},
    "arch": {"widths", "activation", "slope", "loss"},
    "train": {"lr", "momentum", "batch", "epochs", "target_loss", "seed"},
    "bounds": {"trials", "p", "jobs", "lr", "momentum", "batch", "epochs",
               "target_loss"},
    "dropout": {"trials", "p", "jobs"},
    "path": {"trials", "p", "samples_per_segment", "shortcut", "jobs", "lr",
             "momentum", "batch", "epochs", "target_loss"},
    "check": {"epsilon", "trials", "p", "keep", "refit_iters"},
}


def load_config(path: str | None) -> dict[str, dict[str, str]]:
    if path is None:
        return {}
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file {path!r} not found")
    out: dict[str, dict[str, str]] = {}
    for section in parser.sections():
        if section not in _SECTION_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        known = _SECTION_KEYS[section]
        out[section] = {}
        for key, value in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            out[section][key] = value
    return out


def _get(cfg, section, key, flag_value, default, cast):
    if flag_value is not None:
        return flag_value
    raw = cfg.get(section, {}).get(key)
    if raw is None:
        return default
    try:
        if cast is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc


def _data_spec(cfg, args) -> dio.DataSpec:
    sec = cfg.get("data", {})
    kind = sec.get("kind", "blobs")
    kwargs = dict(
        kind=kind,
        n=_get(cfg, "data", "n", None, 200, int),
        dim=_get(cfg, "data", "dim", None, 2, int),
        classes=_get(cfg, "data", "classes", None, 2, int),
        noise=_get(cfg, "data", "noise", None, 0.3, float),
        seed=_get(cfg, "data", "seed", None, 0, int),
    )
    if kind == "mnist-subset":
        kwargs["images"] = sec.get("images")
        kwargs["labels"] = sec.get("labels")
    try:
        return dio.DataSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _arch(cfg, widths_override=None) -> net.NetworkArch:
    widths = widths_override or _get(cfg, "arch", "widths", None, "2,16,2", str)
    if isinstance(widths, str):
        widths = tuple(int(w) for w in widths.replace(" ", "").split(","))
    activation = _get(cfg, "arch", "activation", None, net.RELU, str)
    slope = _get(cfg, "arch", "slope", None, 0.0, float)
    loss = _get(cfg, "arch", "loss", None, net.CROSS_ENTROPY, str)
    try:
        return net.NetworkArch(widths, activation, slope, loss)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _train_config(cfg, section, seed_flag=None) -> net.TrainConfig:
    try:
        return net.TrainConfig(
            learning_rate=_get(cfg, section, "lr", None, 0.1, float),
            momentum=_get(cfg, section, "momentum", None, 0.9, float),
            batch_size=_get(cfg, section, "batch", None, 100, int),
            max_epochs=_get(cfg, section, "epochs", None, 200, int),
            target_loss=_get(cfg, section, "target_loss", None, 0.01, float),
            seed=_get(cfg, section, "seed", seed_flag, 0, int),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _model_name(out_dir: str, seed: int, width: int | None = None) -> str:
    stem = f"model-seed{seed}" + (f"-w{width}" if width is not None else "")
    return os.path.join(out_dir, stem + ".mcnet")


def train_to_zero_error(params, dataset, cfg, chunk=50):
    """Train until zero classification error and the loss target, or until
    the epoch budget runs out; returns (params, history, error)."""
    history = [net.average_loss(params, dataset)]
    remaining = cfg.max_epochs
    chunk_idx = 0
    while True:
        step = min(chunk, remaining) if remaining > 0 else 0
        if step == 0:
            break
        part = net.TrainConfig(
            cfg.learning_rate, cfg.momentum, cfg.batch_size, step,
            cfg.target_loss, cfg.seed + chunk_idx,
        )
        params, hist = net.sgd_train(params, dataset, part)
        history.extend(hist if not history else hist[1:])
        remaining -= step
        chunk_idx += 1
        err = net.classification_error(params, dataset)
        if err == 0.0 and history[-1] <= cfg.target_loss:
            break
    return params, history, net.classification_error(params, dataset)


def cmd_train(args, cfg) -> int:
    spec = _data_spec(cfg, args)
    dataset = dio.generate(spec)
    tcfg = _train_config(cfg, "train", args.seed)
    widths_list = [None]
    if args.widths:
        widths_list = [int(w) for w in args.widths.replace(" ", "").split(",")]
    worst = EXIT_OK
    for width in widths_list:
        if width is None:
            arch = _arch(cfg)
        else:
            base = _arch(cfg)
            hidden = max(len(base.widths) - 2, 1)
            arch = net.NetworkArch(
                (spec.dim,) + (width,) * hidden + (spec.classes,),
                base.activation, base.slope, base.loss_kind,
            )
        t0 = time.perf_counter()
        params, history, err = train_to_zero_error(
            net.init_params(arch, tcfg.seed), dataset, tcfg
        )
        wall = time.perf_counter() - t0
        model_path = _model_name(args.out, tcfg.seed, width)
        dio.save_model(params, model_path, seed=tcfg.seed)
        csv_path = model_path.replace(".mcnet", "-training.csv")
        dio.write_csv(
            csv_path, dio.TRAINING_COLUMNS,
            [(i, f"{loss:.17g}") for i, loss in enumerate(history)],
        )
        print(
            f"trained {arch.widths} seed {tcfg.seed}: loss {history[-1]:.4g}, "
            f"error {err:.3f}, {len(history) - 1} epochs, {wall:.1f}s -> {model_path}"
        )
        if err > 0.0:
            worst = max(worst, EXIT_TRAIN_INCOMPLETE)
    return worst


def _load_model_arg(path: str) -> net.Params:
    params, _ = dio.load_model(path)
    return params


def _experiment_rows(experiment, layer, records):
    rows = []
    for rec in records:
        rows.append((
            experiment, layer, rec.trial, rec.seed, dio.subset_hash(rec.subset),
            f"{rec.loss:.17g}", f"{rec.error:.17g}", f"{rec.wall_ms:.3f}",
        ))
    return rows


def cmd_bounds(args, cfg) -> int:
    spec = _data_spec(cfg, args)
    dataset = dio.generate(spec)
    params = _load_model_arg(args.model)
    arch = params.arch
    ratio = _get(cfg, "bounds", "p", args.p, 0.5, float)
    trials = _get(cfg, "bounds", "trials", args.trials_a, 20, int)
    jobs = _get(cfg, "bounds", "jobs", args.jobs, 1, int)
    tcfg = _train_config(cfg, "bounds")
    ref_loss = net.average_loss(params, dataset)
    model_seed = _get(cfg, "train", "seed", args.seed, 0, int)
    width = max(arch.widths[1:-1])
    trial_rows, summary_rows = [], []
    for layer in range(0, arch.depth):
        cards = pb.default_cards(arch, layer, ratio)
        est = sn.estimate_min_subnet_loss(
            params, dataset, layer, cards, trials,
            tcfg.with_seed(tcfg.seed + layer * trials), jobs=jobs,
        )
        trial_rows.extend(_experiment_rows("subnet-bound", layer, est.records))
        best_err = min(
            (r.error for r in est.records if not r.failed and r.loss == est.best_loss),
            default=float("nan"),
        )
        summary_rows.append((
            "subnet-bound", layer, model_seed, width,
            f"{est.best_loss:.17g}", f"{best_err:.17g}", f"{ref_loss:.17g}",
        ))
        print(f"layer {layer}: best subnet loss {est.best_loss:.4g} over {trials} trials")
    dio.write_csv(os.path.join(args.out, "bounds-trials.csv"), dio.TRIALS_COLUMNS, trial_rows)
    dio.write_csv(os.path.join(args.out, "bounds-summary.csv"), dio.SUMMARY_COLUMNS, summary_rows)
    return EXIT_OK


def cmd_dropout(args, cfg) -> int:
    spec = _data_spec(cfg, args)
    dataset = dio.generate(spec)
    params = _load_model_arg(args.model)
    arch = params.arch
    ratio = _get(cfg, "dropout", "p", args.p, 0.5, float)
    trials = _get(cfg, "dropout", "trials", args.trials_b, 200, int)
    jobs = _get(cfg, "dropout", "jobs", args.jobs, 1, int)
    seed = _get(cfg, "train", "seed", args.seed, 0, int)
    ref_loss = net.average_loss(params, dataset)
    width = max(arch.widths[1:-1])
    curve = sn.dropout_stability_curve(
        params, dataset, trials, ratio,
        net.TrainConfig(learning_rate=1.0, seed=seed), jobs=jobs,
    )
    trial_rows, summary_rows = [], []
    for res in curve:
        trial_rows.extend(_experiment_rows("dropout", res.layer, res.records))
        best_err = min(
            (r.error for r in res.records if not r.failed and r.loss == res.best_loss),
            default=float("nan"),
        )
        summary_rows.append((
            "dropout", res.layer, seed, width,
            f"{res.best_loss:.17g}", f"{best_err:.17g}", f"{ref_loss:.17g}",
        ))
        print(f"layer {res.layer}: best dropout loss {res.best_loss:.4g} over {trials} trials")
    dio.write_csv(os.path.join(args.out, "dropout-trials.csv"), dio.TRIALS_COLUMNS, trial_rows)
    dio.write_csv(os.path.join(args.out, "dropout-summary.csv"), dio.SUMMARY_COLUMNS, summary_rows)
    return EXIT_OK


def cmd_path(args, cfg) -> int:
    spec = _data_spec(cfg, args)
    dataset = dio.generate(spec)
    a = _load_model_arg(args.model_a)
    b = _load_model_arg(args.model_b)
    if a.arch != b.arch:
        raise ConfigError("the two models have different architectures")
    ratio = _get(cfg, "path", "p", args.p, 0.5, float)
    trials = _get(cfg, "path", "trials", args.trials_a, 20, int)
    sps = _get(cfg, "path", "samples_per_segment", args.samples_per_segment, 20, int)
    jobs = _get(cfg, "path", "jobs", args.jobs, 1, int)
    shortcut = bool(args.shortcut) or _get(cfg, "path", "shortcut", None, False, bool)
    tcfg = _train_config(cfg, "path", args.seed)
    result = pb.build_connecting_path(
        a, b, dataset, tcfg, ratio=ratio, trials=trials,
        samples_per_segment=sps, shortcut=shortcut, jobs=jobs,
    )
    os.makedirs(args.out, exist_ok=True)
    dio.save_path_file(result.path, os.path.join(args.out, "path.mcpath"))
    rows = [
        (f"{s.t:.17g}", s.segment, s.label, f"{s.loss:.17g}", f"{s.error:.17g}")
        for s in result.report.samples
    ]
    dio.write_csv(os.path.join(args.out, "path-report.csv"), dio.PATH_REPORT_COLUMNS, rows)
    dio.write_json(os.path.join(args.out, "bound-report.json"), result.bound.to_json_dict())
    print(
        f"path: {result.path.segment_count} segments, measured max "
        f"{result.report.max_loss:.6g}, bound rhs {result.bound.rhs:.6g}"
    )
    return EXIT_OK


def cmd_check(args, cfg) -> int:
    spec = _data_spec(cfg, args)
    dataset = dio.generate(spec)
    params = _load_model_arg(args.model)
    arch = params.arch
    epsilon = _get(cfg, "check", "epsilon", args.epsilon, 0.1, float)
    trials = _get(cfg, "check", "trials", args.trials_b, 200, int)
    ratio = _get(cfg, "check", "p", args.p, 0.5, float)
    refit_iters = _get(cfg, "check", "refit_iters", None, 20000, int)
    seed = _get(cfg, "train", "seed", args.seed, 0, int)

    from .conditions import ConditionReport

    # dropout-stability suite
    drop = check_dropout_stable(
        params, dataset, epsilon, trials, ratio=ratio, seed=seed
    )

    # capacity suite: keep half the last hidden layer, refit, geometry
    keep_default = math.ceil(arch.widths[-2] / 2)
    keep = _get(cfg, "check", "keep", None, keep_default, int)
    capacity = ConditionReport("capacity")
    capacity.checks.append(check_capacity(arch, keep, dataset.n))
    feats_last = net.hidden_features(params, dataset.inputs, arch.depth - 1)
    order = np.argsort(-np.linalg.norm(feats_last, axis=0), kind="stable")
    kept_last = np.sort(order[:keep])
    capacity.checks.append(
        check_last_layer_refit(params, dataset, kept_last, epsilon,
                               max_iters=refit_iters)
    )
    if arch.depth >= 2:
        k2 = math.ceil(arch.widths[-3] / 2) if arch.depth >= 3 else None
        if arch.depth >= 3:
            feats = net.hidden_features(params, dataset.inputs, arch.depth - 2)
            sel = np.sort(
                np.argsort(-np.linalg.norm(feats, axis=0), kind="stable")[:k2]
            )
            capacity.checks.append(check_generic_position(feats[:, sel]))
            lower = net.hidden_features(params, dataset.inputs, 1)
            capacity.checks.append(check_distinct(lower[:, :-1]))

    # separability suite: keep the most active units, as many as the
    # window allows (the checker reports the violation when none fits)
    seps_plans = {}
    for layer in range(1, arch.depth):
        n_l = arch.widths[layer]
        k = max(n_l - arch.output_dim, math.ceil(n_l / 2))
        feats = net.hidden_features(params, dataset.inputs, layer)
        sel = np.sort(np.argsort(-np.linalg.norm(feats, axis=0), kind="stable")[:k])
        seps_plans[layer] = tuple(int(i) for i in sel)
    separability = check_layerwise_separability(params, dataset, seps_plans)

    suites = [drop, capacity, separability]
    overall = any(s.overall for s in suites)
    payload = {
        "overall": overall,
        "suites": [s.to_json_dict() for s in suites],
    }
    dio.write_json(os.path.join(args.out, "condition-report.json"), payload)

    print(f"{'suite':<28}{'verdict':<10}checks")
    for s in suites:
        marks = ", ".join(f"{c.name}:{c.status}" for c in s.checks)
        print(f"{s.name:<28}{'pass' if s.overall else 'fail':<10}{marks}")
    print(f"overall: {'pass' if overall else 'fail'} (any suite suffices)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modeconn",
        description="Low-loss connecting paths between trained networks.",
    )
    parser.add_argument("--version", action="version", version="modeconn 0.1.0")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--p", type=float, default=None, help="removal ratio")
        p.add_argument("--trials-a", type=int, default=None, dest="trials_a")
        p.add_argument("--trials-b", type=int, default=None, dest="trials_b")
        p.add_argument("--samples-per-segment", type=int, default=None,
                       dest="samples_per_segment")
        p.add_argument("--jobs", type=int, default=None,
                       help="trial-level parallelism (default: all cores)")

    p_train = sub.add_parser("train", help="train a model (or width sweep)")
    common(p_train)
    p_train.add_argument("--widths", default=None,
                         help="comma list of hidden widths to sweep")

    p_bounds = sub.add_parser("bounds", help="per-layer trained-subnet bounds")
    common(p_bounds)
    p_bounds.add_argument("model")

    p_drop = sub.add_parser("dropout", help="per-layer dropout stability")
    common(p_drop)
    p_drop.add_argument("model")

    p_path = sub.add_parser("path", help="build a connecting path")
    common(p_path)
    p_path.add_argument("model_a")
    p_path.add_argument("model_b")
    p_path.add_argument("--shortcut", action="store_true",
                        help="emit the trivial path for identical endpoints")

    p_check = sub.add_parser("check", help="run the condition checkers")
    common(p_check)
    p_check.add_argument("model")
    p_check.add_argument("--epsilon", type=float, default=None)
    return parser


_COMMANDS = {
    "train": cmd_train,
    "bounds": cmd_bounds,
    "dropout": cmd_dropout,
    "path": cmd_path,
    "check": cmd_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs is None:
        args.jobs = os.cpu_count() or 1
    try:
        cfg = load_config(args.config)
        os.makedirs(args.out, exist_ok=True)
        return _COMMANDS[args.command](args, cfg)
    except (ConfigError, dio.FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except net.DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except pb.PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
