"""Training loop, sweeps, presets and their CSV tables.

Runs here use small synthetic datasets so each training call takes well
under a second; the desk-scale runs live in the acceptance tests.
"""

import csv
import io
from dataclasses import replace

import numpy as np
import pytest

from nlrelu import harness, presets
from nlrelu.activations import ActivationSpec
from nlrelu.data import Dataset, encode_idx
from nlrelu.errors import ConfigError
from nlrelu.network import TrainConfig, build, load_checkpoint
from nlrelu.network.layers import Dense
from nlrelu.tensor import RngStream

SMALL = {"filters": 4, "dense": 16}
NLRELU = ActivationSpec("nlrelu")


def blobs(n, seed, shape=(1, 8, 8), k=10, noise=0.3):
    """Class c lights up a class-specific random template; easy to separate."""
    templates = np.random.default_rng(1234).uniform(size=(k,) + shape)
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % k
    images = np.clip(templates[labels] + noise * rng.normal(size=(n,) + shape), 0, 1)
    return Dataset(images, labels)


@pytest.fixture(scope="module")
def pair():
    return blobs(200, 1), blobs(100, 2)


@pytest.fixture(scope="module")
def colour_pair():
    return blobs(80, 3, (3, 8, 8)), blobs(40, 4, (3, 8, 8))


def cfg(**kw):
    return TrainConfig(**{"learning_rate": 1e-2, "batch_size": 20, "iterations": 30, "seed": 0, **kw})


def rows(text):
    body = [l for l in text.splitlines() if not l.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


class TestSeeds:
    def test_cells_never_share_a_seed(self):
        seeds = {harness.cell_seed(0, R, r) for R in range(50) for r in range(10)}
        assert len(seeds) == 500

    def test_deterministic_and_base_dependent(self):
        assert harness.cell_seed(3, 1, 2) == harness.cell_seed(3, 1, 2)
        assert harness.cell_seed(3, 1, 2) != harness.cell_seed(4, 1, 2)


class TestTrain:
    def test_untrained_is_near_chance(self, pair):
        rec = harness.train("simple_cnn", pair, NLRELU, cfg(iterations=0), preset_kwargs=SMALL)
        assert 0.0 <= rec.test_acc <= 0.25 and rec.iterations_run == 0
        assert not rec.converged

    def test_learns_separable_data(self, pair):
        rec = harness.train("simple_cnn", pair, NLRELU, cfg(iterations=150), preset_kwargs=SMALL)
        assert rec.test_acc >= 0.9 and rec.converged and not rec.diverged
        assert rec.iterations_run == 150 and np.isfinite(rec.final_loss)

    def test_curve_points(self, pair):
        rec = harness.train("simple_cnn", pair, NLRELU, cfg(), eval_every=10, preset_kwargs=SMALL)
        assert [c[0] for c in rec.curve] == [10, 20, 30]
        assert all(0 <= c[2] <= 1 and 0 <= c[3] <= 1 for c in rec.curve)
        assert rec.curve[-1][3] == rec.test_acc

    def test_deterministic(self, pair):
        a = harness.train("simple_cnn", pair, NLRELU, cfg(), eval_every=10, preset_kwargs=SMALL)
        b = harness.train("simple_cnn", pair, NLRELU, cfg(), eval_every=10, preset_kwargs=SMALL)
        assert a == b

    def test_threshold(self, pair):
        rec = harness.train("simple_cnn", pair, NLRELU, cfg(), threshold=1.01, preset_kwargs=SMALL)
        assert not rec.converged and not rec.diverged

    def test_non_finite_mid_run_is_recorded(self, pair):
        train_set, test_set = pair
        bad = train_set.images.copy()
        bad[137] = np.inf  # the first batch drawing sample 137 goes non-finite
        poisoned = (Dataset(bad, train_set.labels), test_set)
        rec = harness.train("simple_cnn", poisoned, NLRELU, cfg(iterations=50), eval_every=1,
                            preset_kwargs=SMALL)
        assert rec.diverged and not rec.converged
        assert 0 < rec.iterations_run < 50
        assert np.isnan(rec.final_loss)
        assert len(rec.curve) == rec.iterations_run + 1

    def test_checkpoint_written(self, pair, tmp_path):
        path = tmp_path / "final.ckpt"
        harness.train("simple_cnn", pair, NLRELU, cfg(iterations=2), preset_kwargs=SMALL,
                      checkpoint=path)
        count, params = load_checkpoint(path)
        assert count == 8 and "0.w" in params

    def test_bad_preset_options(self, pair):
        with pytest.raises(ConfigError):
            harness.train("simple_cnn", pair, NLRELU, cfg(), preset_kwargs={"width": 3})
        with pytest.raises(ConfigError):
            harness.train("vgg", pair, NLRELU, cfg())


class TestSweeps:
    def test_default_beta_grid(self):
        assert harness.DEFAULT_BETAS == (0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0,
                                         1.05, 1.1, 1.15, 1.2)

    def test_single_repeat_has_zero_std(self, pair):
        summ = harness.beta_sweep("simple_cnn", pair, [0.7, 1.0], 1, cfg(iterations=3),
                                  preset_kwargs=SMALL)
        table = rows(harness.beta_sweep_csv(summ))
        assert [r["beta"] for r in table] == ["0.7", "1.0"]
        assert all(float(r["std_acc"]) == 0.0 and r["repeats"] == "1" for r in table)

    def test_beta_sweep_is_repeatable(self, pair):
        a = harness.beta_sweep("simple_cnn", pair, [0.8], 2, cfg(iterations=3), preset_kwargs=SMALL)
        b = harness.beta_sweep("simple_cnn", pair, [0.8], 2, cfg(iterations=3), preset_kwargs=SMALL)
        assert harness.beta_sweep_csv(a) == harness.beta_sweep_csv(b)
        assert a[0].records[0].seed != a[0].records[1].seed

    def test_beta_must_be_positive(self, pair):
        with pytest.raises(ConfigError):
            harness.beta_sweep("simple_cnn", pair, [0.5, 0.0], 1, cfg())

    def test_repeats_must_be_positive(self, pair):
        with pytest.raises(ConfigError):
            harness.beta_sweep("simple_cnn", pair, [1.0], 0, cfg())

    def test_lr_contrast_layout(self, pair):
        acts = [NLRELU, ActivationSpec("relu")]
        summ = harness.lr_contrast("simple_cnn", pair, acts, [1e-4, 1e-2], 2, cfg(iterations=2),
                                   preset_kwargs=SMALL)
        table = rows(harness.lr_contrast_csv(summ))
        assert [(r["activation"], r["learning_rate"]) for r in table] == [
            ("nlrelu(beta=1)", "0.0001"), ("nlrelu(beta=1)", "0.01"),
            ("relu", "0.0001"), ("relu", "0.01")]
        for r in table:
            assert 0 <= float(r["min_acc"]) <= float(r["mean_acc"]) <= float(r["max_acc"]) <= 1
            assert float(r["std_acc"]) >= 0

    def test_empty_lr_list(self, pair):
        summ = harness.lr_contrast("simple_cnn", pair, [NLRELU], [], 3, cfg())
        assert summ == [] and len(rows(harness.lr_contrast_csv(summ))) == 0

    def test_each_cell_uses_its_own_learning_rate(self, pair):
        summ = harness.lr_contrast("simple_cnn", pair, [NLRELU], [1e-3, 1e-2], 1, cfg(iterations=1),
                                   preset_kwargs=SMALL)
        assert [s.records[0].learning_rate for s in summ] == [1e-3, 1e-2]

    def test_ablation_has_eight_ordered_rows(self, colour_pair):
        summ = harness.ablate_positions(colour_pair, cfg(iterations=2, batch_size=8), 1,
                                        preset_kwargs={"widths": (4, 4, 4), "units_per_stage": 1})
        table = rows(harness.ablation_csv(summ))
        assert [(int(r["A"]), int(r["B"]), int(r["C"])) for r in table] == list(presets.POSITION_FLAGS)
        assert sorted(int(r["rank"]) for r in table) == list(range(1, 9))

    def test_records_csv(self, pair):
        summ = harness.beta_sweep("simple_cnn", pair, [0.9, 1.1], 2, cfg(iterations=1),
                                  preset_kwargs=SMALL)
        table = rows(harness.records_csv(summ, ["note"]))
        assert [(r["cell"], r["repeat"]) for r in table] == [("0", "0"), ("0", "1"), ("1", "0"), ("1", "1")]


def summary(*accs):
    recs = tuple(harness.ExperimentRecord("p", "a", 1e-3, 0, 1, 0.0, 0.0, a, True, False) for a in accs)
    return harness.CellSummary((0,), recs)


class TestAggregation:
    def test_population_std(self):
        s = summary(0.5, 0.7)
        assert s.mean_acc == pytest.approx(0.6) and s.std_acc == pytest.approx(0.1)

    def test_ranks_keep_order_on_ties(self):
        assert harness.ranks([summary(0.5), summary(0.9), summary(0.5)]) == [2, 1, 3]

    def test_comment_lines(self):
        text = harness.beta_sweep_csv([summary(0.5)], ["nlrelu beta-sweep", "seed: 0"])
        assert text.splitlines()[:3] == ["# nlrelu beta-sweep", "# seed: 0",
                                         "beta,mean_acc,std_acc,min_acc,max_acc,converged,diverged,repeats"]


def write_mnist(root, ds, prefix="train"):
    root.mkdir(parents=True, exist_ok=True)
    u8 = np.round(ds.images[:, 0] * 255).astype(np.uint8)
    (root / f"{prefix}-images-idx3-ubyte").write_bytes(encode_idx(u8))
    (root / f"{prefix}-labels-idx1-ubyte").write_bytes(encode_idx(ds.labels.astype(np.uint8)))


class TestDeskData:
    def test_pool_split_is_disjoint(self, tmp_path):
        ds = blobs(250, 5)
        ds.images[:, 0, 0, 0] = np.arange(250) / 255  # tag each sample by its byte value
        write_mnist(tmp_path / "mnist", ds)
        tr, te = harness.load_desk_data("mnist", tmp_path, 0, 100, 50)
        assert len(tr) == 100 and len(te) == 50
        assert not set(tr.images[:, 0, 0, 0]) & set(te.images[:, 0, 0, 0])

    def test_official_test_split_used_when_present(self, tmp_path):
        write_mnist(tmp_path, blobs(100, 6))
        test = blobs(60, 7)
        test.images[:] = 1.0
        write_mnist(tmp_path, test, "t10k")
        _, te = harness.load_desk_data("mnist", tmp_path, 0, 50, 30)
        assert np.all(te.images == 1.0)

    def test_unknown_dataset(self, tmp_path):
        with pytest.raises(ConfigError):
            harness.load_desk_data("svhn", tmp_path, 0)


class TestPresets:
    def test_simple_cnn_layout(self):
        kinds = [l.kind for l in presets.simple_cnn(NLRELU)]
        assert kinds == ["conv2d", "activation", "maxpool", "flatten", "dense", "activation",
                         "dense", "softmax_output"]
        conv, dense = presets.simple_cnn(NLRELU)[0], presets.simple_cnn(NLRELU)[4]
        assert (conv.filters, conv.kh, conv.kw) == (64, 5, 5) and dense.out_features == 1024

    @pytest.mark.parametrize("pool,flat", [(True, 12544), (False, 50176)])
    def test_simple_cnn_shapes(self, pool, flat):
        # shapes only: the unpooled dense layer alone would hold 51 million weights
        shape = (1, 28, 28)
        for i, layer in enumerate(presets.simple_cnn(NLRELU, pool=pool)):
            if isinstance(layer, Dense) and i == 4:
                assert shape == (flat,)
            shape = layer.bind(f"{i}.", shape).out_shape
        assert shape == (10,)

    def test_lenet_and_resnet_build(self):
        net, _ = build(presets.lenet5_like(NLRELU), (1, 28, 28))
        assert net.output_shape == (10,)
        net, p = build(presets.tiny_resnet(NLRELU), (3, 32, 32), "msra", RngStream(0))
        units = [l for l in net.layers if l.kind == "residual_unit"]
        assert [u.out_shape for u in units] == [(16, 32, 32)] * 2 + [(32, 16, 16)] * 2 + [(64, 8, 8)] * 2

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            presets.make("alexnet", NLRELU)

    def test_default_init(self):
        assert presets.default_init("tiny_resnet") == "msra"
        assert presets.default_init("simple_cnn") == "xavier"


def test_train_config_replace_keeps_validation():
    with pytest.raises(ValueError):
        replace(cfg(), learning_rate=-1.0)
