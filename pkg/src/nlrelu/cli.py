"""Command-line entry point: ``python -m nlrelu <subcommand>``.

Every subcommand writes CSV (to ``--out`` or stdout) whose leading ``#``
lines echo the full configuration. Settings resolve in three layers: built-in
defaults, then the JSON file given by ``--config``, then explicit flags.
Unknown keys in the config file are an error.

Exit codes: 0 success, 1 usage or configuration error, 2 dataset I/O error,
3 internal invariant violation (including a failed gradient check).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from . import activations as act
from . import experiments, harness, presets
from .errors import ConfigError, DatasetError, NonFiniteError
from .network import TrainConfig, build, grad_check
from .tensor import RngStream

log = logging.getLogger("nlrelu")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3

TRAIN_KEYS = {f.name: f.default for f in fields(TrainConfig)}
HARNESS_KEYS = {
    "preset": "simple_cnn", "dataset": "mnist", "n_train": None, "n_test": None,
    "threshold": None, "pool": True, "filters": 64, "dense": 1024,
}

# Per-subcommand settings and their defaults. Every key may appear in the
# config file; every key except lists has a matching --flag.
SETTINGS = {
    "grad-check": {
        "activation": list(act.ZOO), "filters": 8, "dense": 64, "pool": True,
        "input_size": 8, "batch": 4, "h": 1e-5, "tolerance": 1e-5, "seed": 0,
    },
    "curve": {
        "activation": ["nlrelu"], "x_min": -5.0, "x_max": 5.0, "points": 201,
        "which": "value", "seed": 0,
    },
    "simulate-bias-shift": {
        "activation": ["nlrelu"], "depth": 10, "width": 100, "batch": 100,
        "bias_init": 0.1, "weight_std": 1.5, "seed": 0,
    },
    "train": {**TRAIN_KEYS, **HARNESS_KEYS, "activation": ["nlrelu"], "eval_every": 100,
              "checkpoint": None},
    "beta-sweep": {**TRAIN_KEYS, **HARNESS_KEYS, "betas": list(harness.DEFAULT_BETAS),
                   "repeats": 3, "runs_out": None},
    "lr-contrast": {**TRAIN_KEYS, **HARNESS_KEYS, "activation": ["nlrelu", "relu"],
                    "learning_rates": [1e-4, 1e-2], "repeats": 5, "runs_out": None},
    "ablate-positions": {**TRAIN_KEYS, **HARNESS_KEYS, "preset": "tiny_resnet",
                         "dataset": "cifar10", "activation": ["nlrelu"], "iterations": 500,
                         "batch_size": 32, "repeats": 2, "runs_out": None},
}
COMMON = ("seed", "out", "config", "data_dir")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def make_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", type=Path, help="CSV output path (default: stdout)")
    common.add_argument("--config", type=Path, help="JSON file of settings")
    common.add_argument("--data-dir", type=Path,
                        help="dataset root (default: $NLRELU_DATA_DIR or ./data)")
    common.add_argument("-v", "--verbose", action="store_true", help="progress on stderr")

    p = _Parser(prog="nlrelu", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd, keys in SETTINGS.items():
        sp = sub.add_parser(cmd, parents=[common])
        for key, default in keys.items():
            if key in COMMON:
                continue
            flag = _flag(key)
            if key == "activation":
                sp.add_argument(flag, action="append", metavar="SPEC",
                                help="zoo member, e.g. nlrelu or nlrelu:beta=0.9; repeatable"
                                     + ("; 'all' for the whole zoo" if cmd == "grad-check" else ""))
            elif key in ("betas", "learning_rates"):
                sp.add_argument(flag, type=_floats, metavar="V1,V2,...")
            elif isinstance(default, bool):
                sp.add_argument(flag, action=argparse.BooleanOptionalAction, default=None)
            elif key in ("checkpoint", "runs_out"):
                sp.add_argument(flag, type=Path)
            elif key == "which":
                sp.add_argument(flag, choices=("value", "derivative"))
            elif key == "preset":
                sp.add_argument(flag, choices=presets.PRESETS)
            elif key == "dataset":
                sp.add_argument(flag, choices=tuple(harness.DESK_SIZES))
            elif key == "learning_rate":
                sp.add_argument(flag, "--lr", dest=key, type=float)
            else:
                typ = float if isinstance(default, float) or key == "threshold" else int
                sp.add_argument(flag, type=typ)
    return p


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults, the config file and explicit flags into one dict."""
    defaults = SETTINGS[command]
    settings = dict(defaults)
    if args.config is not None:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(doc) - set(defaults) - {"data_dir"})
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
        settings.update(doc)
    for key in defaults:
        v = getattr(args, key, None)
        if v is not None:
            settings[key] = v
    if isinstance(settings.get("activation"), str):
        settings["activation"] = [settings["activation"]]
    settings["data_dir"] = Path(args.data_dir or settings.get("data_dir")
                                or os.environ.get("NLRELU_DATA_DIR", "data"))
    return settings


def _specs(names) -> list[act.ActivationSpec]:
    if list(names) == ["all"]:
        names = act.ZOO
    try:
        return [act.ActivationSpec.parse(n) for n in names]
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _train_config(s: dict) -> TrainConfig:
    try:
        return TrainConfig(**{k: s[k] for k in TRAIN_KEYS})
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad training settings: {e}") from None


def _preset_kwargs(s: dict) -> dict:
    if s["preset"] == "simple_cnn":
        return {"pool": bool(s["pool"]), "filters": int(s["filters"]), "dense": int(s["dense"])}
    return {}


def _echo(command: str, s: dict) -> list[str]:
    # data_dir is left out so the same run from another checkout is byte-identical
    shown = {k: v for k, v in sorted(s.items()) if k not in ("data_dir", "runs_out", "checkpoint")}
    return [f"nlrelu {command}"] + [f"{k}: {json.dumps(v)}" for k, v in shown.items()]


def _data(s: dict):
    return harness.load_desk_data(s["dataset"], s["data_dir"], s["seed"], s["n_train"], s["n_test"])


def cmd_grad_check(s: dict) -> tuple[str, int]:
    specs = _specs(s["activation"])
    size = int(s["input_size"])
    rows, worst = [], 0.0
    for spec in specs:
        rng = RngStream(s["seed"]).split("grad-check", spec.label)
        layers = presets.simple_cnn(spec, 10, pool=bool(s["pool"]), filters=int(s["filters"]),
                                    dense=int(s["dense"]))
        try:
            net, params = build(layers, (1, size, size), "xavier", rng.split("init"))
        except ValueError as e:
            raise ConfigError(str(e)) from None
        x = rng.split("x").uniform((int(s["batch"]), 1, size, size))
        y = rng.split("y").integers(0, 10, int(s["batch"]))
        rep = grad_check(net, params, x, y, h=float(s["h"]), tolerance=float(s["tolerance"]))
        log.info("%s: %s", spec.label, rep.summary())
        worst = max(worst, rep.max_rel_err)
        rows.append([spec.label, rep.max_rel_err, rep.worst_param,
                     rep.worst_layer, rep.n_checked, rep.n_excluded,
                     int(rep.passed(float(s["tolerance"])))])
    text = harness._csv(("activation", "max_rel_err", "worst_param", "worst_layer", "n_checked",
                         "n_excluded", "passed"), rows, _echo("grad-check", s))
    return text, EXIT_OK if worst <= float(s["tolerance"]) else EXIT_INVARIANT


def cmd_curve(s: dict) -> tuple[str, int]:
    specs = _specs(s["activation"])
    try:
        curves = [(spec, act.emit_curve(spec, float(s["x_min"]), float(s["x_max"]),
                                        int(s["points"]), s["which"])) for spec in specs]
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if len(curves) == 1:
        return act.curve_csv(curves[0][1], _echo("curve", s)), EXIT_OK
    rows = ([spec.label, x, y] for spec, c in curves for x, y in c)
    return harness._csv(("activation", "x", "value"), rows, _echo("curve", s)), EXIT_OK


def cmd_simulate(s: dict) -> tuple[str, int]:
    specs = _specs(s["activation"])
    if len(specs) != 1:
        raise ConfigError("simulate-bias-shift takes exactly one --activation; run it once per curve")
    try:
        cfg = experiments.BiasShiftConfig(
            depth=int(s["depth"]), width=int(s["width"]), batch=int(s["batch"]),
            bias_init=float(s["bias_init"]), weight_std=float(s["weight_std"]),
            activation=specs[0], seed=int(s["seed"]))
    except ValueError as e:
        raise ConfigError(str(e)) from None
    stats = experiments.simulate_bias_shift(cfg)
    finite = [x for x in stats if x.finite]
    if len(finite) < len(stats):
        log.warning("%s overflowed at layer %d", cfg.activation.label, len(stats))
    if len(finite) >= 2:
        log.info("%s: heteroscedasticity %.4g", cfg.activation.label,
                 experiments.heteroscedasticity_metric(finite))
    return experiments.stats_csv(cfg, stats), EXIT_OK


def _progress(s):
    every = max(1, int(s["iterations"]) // 20)

    def report(it, loss):
        if it % every == 0:
            log.info("iteration %d loss %.4f", it, loss)
    return report


def cmd_train(s: dict) -> tuple[str, int]:
    specs = _specs(s["activation"])
    if len(specs) != 1:
        raise ConfigError("train takes exactly one --activation")
    cfg = _train_config(s)
    rec = harness.train(s["preset"], _data(s), specs[0], cfg, eval_every=int(s["eval_every"]),
                        threshold=s["threshold"], preset_kwargs=_preset_kwargs(s),
                        progress=_progress(s), checkpoint=s["checkpoint"])
    log.info("test_acc %.4f converged=%s diverged=%s (%.1fs)", rec.test_acc, rec.converged,
             rec.diverged, rec.seconds)
    comments = _echo("train", s) + [
        f"result: test_acc={rec.test_acc!r} converged={int(rec.converged)} "
        f"diverged={int(rec.diverged)} iterations_run={rec.iterations_run}"]
    return harness.curve_rows_csv(rec, comments), EXIT_OK


def _sweep_out(s, summaries, comments):
    if s["runs_out"] is not None:
        harness.write_text(s["runs_out"], harness.records_csv(summaries, comments))


def cmd_beta_sweep(s: dict) -> tuple[str, int]:
    cfg = _train_config(s)
    summ = harness.beta_sweep(s["preset"], _data(s), s["betas"], int(s["repeats"]), cfg,
                              threshold=s["threshold"], preset_kwargs=_preset_kwargs(s))
    comments = _echo("beta-sweep", s)
    _sweep_out(s, summ, comments)
    return harness.beta_sweep_csv(summ, comments), EXIT_OK


def cmd_lr_contrast(s: dict) -> tuple[str, int]:
    cfg = _train_config(s)
    summ = harness.lr_contrast(s["preset"], _data(s), _specs(s["activation"]),
                               s["learning_rates"], int(s["repeats"]), cfg,
                               threshold=s["threshold"], preset_kwargs=_preset_kwargs(s))
    comments = _echo("lr-contrast", s)
    _sweep_out(s, summ, comments)
    return harness.lr_contrast_csv(summ, comments), EXIT_OK


def cmd_ablate(s: dict) -> tuple[str, int]:
    if s["preset"] != "tiny_resnet":
        raise ConfigError("ablate-positions uses the tiny_resnet preset only")
    specs = _specs(s["activation"])
    if len(specs) != 1:
        raise ConfigError("ablate-positions takes exactly one --activation")
    cfg = _train_config(s)
    summ = harness.ablate_positions(_data(s), cfg, int(s["repeats"]), specs[0],
                                    threshold=s["threshold"])
    comments = _echo("ablate-positions", s)
    _sweep_out(s, summ, comments)
    return harness.ablation_csv(summ, comments), EXIT_OK


COMMANDS = {
    "grad-check": cmd_grad_check,
    "curve": cmd_curve,
    "simulate-bias-shift": cmd_simulate,
    "train": cmd_train,
    "beta-sweep": cmd_beta_sweep,
    "lr-contrast": cmd_lr_contrast,
    "ablate-positions": cmd_ablate,
}


def main(argv=None) -> int:
    try:
        args = make_parser().parse_args(argv)
    except SystemExit as e:  # usage errors and --help, returned rather than raised
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        settings = resolve(args.command, args)
        text, code = COMMANDS[args.command](settings)
    except ConfigError as e:
        print(f"nlrelu: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as e:
        print(f"nlrelu: dataset error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteError, AssertionError) as e:
        print(f"nlrelu: invariant violated: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    if args.out is None:
        sys.stdout.write(text)
    else:
        harness.write_text(args.out, text)
    return code


if __name__ == "__main__":
    sys.exit(main())
