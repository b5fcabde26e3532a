"""Desk-scale training runs and the sweeps built on them.

Every sweep is a grid of independent cells (activation, beta, learning rate,
position flags) times repeats. Repeat ``r`` of cell ``R`` trains with seed
``cell_seed(base_seed, R, r)``, so no two runs share a random stream and any
single cell can be re-run in isolation. Cells run sequentially and results
are aggregated in cell order, so output depends only on the configuration and
the dataset files.

Training pathologies are outcomes, not errors: a run whose loss or
activations become non-finite stops early and is recorded with
``diverged=True`` and ``converged=False``.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import presets
from .activations import ActivationSpec
from .data import Dataset, find_cifar10, find_mnist, subset
from .errors import ConfigError, NonFiniteError
from .network import AdamState, Network, TrainConfig, adam_step, build, save_checkpoint
from .tensor import RngStream

DEFAULT_BETAS = tuple(round(0.60 + 0.05 * i, 2) for i in range(13))
DESK_SIZES = {"mnist": (2000, 1000), "cifar10": (4000, 1000)}
EVAL_CHUNK = 500
TRAIN_EVAL_MAX = 1000  # training accuracy is measured on at most this many samples


@dataclass(frozen=True)
class ExperimentRecord:
    preset: str
    activation: str
    learning_rate: float
    seed: int
    iterations_run: int
    final_loss: float
    train_acc: float
    test_acc: float
    converged: bool
    diverged: bool
    curve: tuple = ()  # (iteration, train_loss, train_acc, test_acc) at each evaluation
    seconds: float = field(default=0.0, compare=False)


def cell_seed(base_seed: int, run: int, repeat: int) -> int:
    """Seed for repeat ``repeat`` of grid cell ``run``."""
    return int(RngStream(base_seed).split(run, repeat).integers(0, 2**63))


def load_desk_data(dataset: str, data_dir, seed: int, n_train: int | None = None,
                   n_test: int | None = None) -> tuple[Dataset, Dataset]:
    """Stratified desk-scale (train, test) pair.

    The test subset is drawn from the official test split when it is present
    and otherwise from the training pool, disjoint from the training subset.
    """
    if dataset not in DESK_SIZES:
        raise ConfigError(f"unknown dataset {dataset!r}; expected one of {tuple(DESK_SIZES)}")
    d_train, d_test = DESK_SIZES[dataset]
    n_train = d_train if n_train is None else n_train
    n_test = d_test if n_test is None else n_test
    train, test = (find_mnist if dataset == "mnist" else find_cifar10)(data_dir)
    if test is None:
        return subset(train, n_train, n_test, seed)
    return subset(train, n_train, 0, seed)[0], subset(test, 0, n_test, seed)[1]


def _batches(rng: RngStream, n: int, size: int):
    """Endless minibatch index stream: a fresh permutation every epoch."""
    epoch = 0
    buf = np.empty(0, dtype=np.int64)
    while True:
        while len(buf) < size:
            buf = np.concatenate([buf, rng.split("epoch", epoch).permutation(n)])
            epoch += 1
        yield buf[:size]
        buf = buf[size:]


def accuracy(net: Network, params, data: Dataset) -> float:
    """Top-1 accuracy in inference mode; ties go to the lowest class index.

    A chunk whose forward pass produces non-finite values counts as wrong.
    """
    correct = 0
    for s in range(0, len(data), EVAL_CHUNK):
        x, y = data.images[s : s + EVAL_CHUNK], data.labels[s : s + EVAL_CHUNK]
        try:
            probs, _ = net.forward(params, x, "infer")
        except NonFiniteError:
            continue
        correct += int(np.sum(np.argmax(probs, axis=1) == y))
    return correct / len(data) if len(data) else 0.0


def train(
    preset: str,
    data: tuple[Dataset, Dataset],
    activation: ActivationSpec,
    config: TrainConfig,
    eval_every: int = 0,
    threshold: float | None = None,
    preset_kwargs: dict | None = None,
    progress: Callable[[int, float], None] | None = None,
    checkpoint=None,
) -> ExperimentRecord:
    """Train ``preset`` with Adam and evaluate on the test half of ``data``.

    ``train_loss`` in the curve is the minibatch loss at that iteration;
    ``train_acc`` is measured on the first ``TRAIN_EVAL_MAX`` training samples.

    ``threshold`` is the final test accuracy needed to count as converged;
    the default is twice chance. ``eval_every > 0`` adds intermediate
    evaluations to ``curve``. ``checkpoint`` is an optional path for the
    final parameters.
    """
    train_set, test_set = data
    k = train_set.num_classes
    threshold = 2.0 / k if threshold is None else threshold
    rng = RngStream(config.seed)
    try:
        net, params = build(presets.make(preset, activation, k, **(preset_kwargs or {})),
                            train_set.sample_shape, presets.default_init(preset), rng.split("init"))
    except TypeError as e:
        raise ConfigError(f"bad options for preset {preset!r}: {e}") from None
    state = AdamState.zeros(params)
    train_probe = train_set.take(np.arange(min(len(train_set), TRAIN_EVAL_MAX)))
    stream = _batches(rng.split("batches"), len(train_set), config.batch_size)
    curve = []
    loss = math.nan
    diverged = False
    it = 0
    t0 = time.perf_counter()
    while it < config.iterations:
        idx = next(stream)
        try:
            _, cache = net.forward(params, train_set.images[idx], "train")
            loss, grads = net.backward(params, cache, train_set.labels[idx])
        except NonFiniteError:
            diverged = True
        if diverged or not math.isfinite(loss):
            diverged, loss = True, math.nan
            break
        adam_step(params, grads, state, config)
        net.apply_state_updates(params, cache)
        it += 1
        if progress is not None:
            progress(it, loss)
        if eval_every and it % eval_every == 0 and it < config.iterations:
            curve.append((it, loss, accuracy(net, params, train_probe),
                          accuracy(net, params, test_set)))
    train_acc = accuracy(net, params, train_probe)
    acc = accuracy(net, params, test_set)
    curve.append((it, loss, train_acc, acc))
    if checkpoint is not None:
        save_checkpoint(checkpoint, params, len(net.layers))
    return ExperimentRecord(
        preset=preset,
        activation=activation.label,
        learning_rate=config.learning_rate,
        seed=config.seed,
        iterations_run=it,
        final_loss=loss,
        train_acc=train_acc,
        test_acc=acc,
        converged=(not diverged) and acc >= threshold,
        diverged=diverged,
        curve=tuple(curve),
        seconds=time.perf_counter() - t0,
    )


@dataclass(frozen=True)
class CellSummary:
    key: tuple
    records: tuple

    @property
    def accs(self) -> np.ndarray:
        return np.array([r.test_acc for r in self.records])

    @property
    def mean_acc(self) -> float:
        return float(self.accs.mean())

    @property
    def std_acc(self) -> float:
        # population std: defined (zero) for a single repeat
        return float(self.accs.std())

    @property
    def n_converged(self) -> int:
        return sum(r.converged for r in self.records)

    @property
    def n_diverged(self) -> int:
        return sum(r.diverged for r in self.records)


def _run_grid(cells: Sequence[tuple], make_run: Callable[[tuple, int], ExperimentRecord],
              repeats: int) -> list[CellSummary]:
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    return [CellSummary(key, tuple(make_run(key, (R, r)) for r in range(repeats)))
            for R, key in enumerate(cells)]


def beta_sweep(preset: str, data, betas: Iterable[float] = DEFAULT_BETAS, repeats: int = 3,
               config: TrainConfig = TrainConfig(), threshold: float | None = None,
               preset_kwargs: dict | None = None) -> list[CellSummary]:
    """NLReLU accuracy as a function of beta; one summary per beta."""
    betas = [float(b) for b in betas]
    if any(not b > 0 for b in betas):
        raise ConfigError("every beta must be > 0")

    def run(key, ix):
        cfg = replace(config, seed=cell_seed(config.seed, *ix))
        return train(preset, data, ActivationSpec("nlrelu", beta=key[0]), cfg,
                     threshold=threshold, preset_kwargs=preset_kwargs)

    return _run_grid([(b,) for b in betas], run, repeats)


def lr_contrast(preset: str, data, activations: Sequence[ActivationSpec],
                learning_rates: Sequence[float], repeats: int = 5,
                config: TrainConfig = TrainConfig(), threshold: float | None = None,
                preset_kwargs: dict | None = None) -> list[CellSummary]:
    """Convergence table over (activation, learning rate) cells, activation-major."""
    cells = [(a, float(lr)) for a in activations for lr in learning_rates]

    def run(key, ix):
        cfg = replace(config, learning_rate=key[1], seed=cell_seed(config.seed, *ix))
        return train(preset, data, key[0], cfg, threshold=threshold, preset_kwargs=preset_kwargs)

    return _run_grid(cells, run, repeats)


def ablate_positions(data, config: TrainConfig, repeats: int = 2,
                     activation: ActivationSpec = ActivationSpec("nlrelu"),
                     threshold: float | None = None,
                     preset_kwargs: dict | None = None) -> list[CellSummary]:
    """tiny_resnet with every (A, B, C) activation-site combination."""

    def run(key, ix):
        cfg = replace(config, seed=cell_seed(config.seed, *ix))
        return train("tiny_resnet", data, activation, cfg, threshold=threshold,
                     preset_kwargs={**(preset_kwargs or {}), "flags": key})

    return _run_grid(list(presets.POSITION_FLAGS), run, repeats)


def ranks(summaries: Sequence[CellSummary]) -> list[int]:
    """1 = highest mean accuracy; equal means keep table order."""
    order = sorted(range(len(summaries)), key=lambda i: (-summaries[i].mean_acc, i))
    out = [0] * len(summaries)
    for rank, i in enumerate(order, 1):
        out[i] = rank
    return out


# -- CSV ---------------------------------------------------------------------

def _csv(header: Sequence[str], rows: Iterable[Sequence], comments: Iterable[str]) -> str:
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        # shortest repr that round-trips the double exactly
        w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _acc_cols(s: CellSummary) -> list:
    return [s.mean_acc, s.std_acc, float(s.accs.min()), float(s.accs.max()),
            s.n_converged, s.n_diverged, len(s.records)]


ACC_COLUMNS = ("mean_acc", "std_acc", "min_acc", "max_acc", "converged", "diverged", "repeats")


def beta_sweep_csv(summaries, comments=()) -> str:
    return _csv(("beta", *ACC_COLUMNS), ([s.key[0], *_acc_cols(s)] for s in summaries), comments)


def lr_contrast_csv(summaries, comments=()) -> str:
    return _csv(("activation", "learning_rate", *ACC_COLUMNS),
                ([s.key[0].label, s.key[1], *_acc_cols(s)] for s in summaries), comments)


def ablation_csv(summaries, comments=()) -> str:
    rk = ranks(summaries)
    return _csv(("A", "B", "C", *ACC_COLUMNS, "rank"),
                ([*s.key, *_acc_cols(s), r] for s, r in zip(summaries, rk)), comments)


def curve_rows_csv(record: ExperimentRecord, comments=()) -> str:
    return _csv(("iteration", "train_loss", "train_acc", "test_acc"), record.curve, comments)


def records_csv(summaries: Sequence[CellSummary], comments=()) -> str:
    """One row per individual run, for inspecting the spread behind each cell."""
    rows = []
    for R, s in enumerate(summaries):
        for r, rec in enumerate(s.records):
            rows.append([R, r, rec.activation, rec.learning_rate, rec.seed, rec.iterations_run,
                         rec.final_loss, rec.train_acc, rec.test_acc, int(rec.converged),
                         int(rec.diverged)])
    return _csv(("cell", "repeat", "activation", "learning_rate", "seed", "iterations_run",
                 "final_loss", "train_acc", "test_acc", "converged", "diverged"), rows, comments)


def write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")
