"""Initialization-time layer statistics of deep fully-connected stacks."""

import csv
import io
import math

import pytest

from nlrelu.activations import ActivationSpec
from nlrelu.errors import NonFiniteError
from nlrelu.experiments import (
    CSV_COLUMNS,
    BiasShiftConfig,
    LayerStats,
    compare,
    heteroscedasticity_metric,
    mean_shift_report,
    simulate_bias_shift,
    stats_csv,
)

RELU, NLRELU = ActivationSpec("relu"), ActivationSpec("nlrelu")


def stats_with_std(stds):
    return [LayerStats(i, 0.0, s, 0.5, 50.0, 1.0) for i, s in enumerate(stds, 1)]


def run(activation, **kw):
    return simulate_bias_shift(BiasShiftConfig(activation=activation, **kw))


class TestConfig:
    @pytest.mark.parametrize("kw", [{"depth": 0}, {"width": 0}, {"batch": 0}, {"weight_std": -1.0}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            BiasShiftConfig(**kw)

    def test_defaults(self):
        c = BiasShiftConfig()
        assert (c.depth, c.width, c.batch, c.bias_init, c.weight_std) == (10, 100, 100, 0.1, 1.5)


class TestSimulate:
    def test_zero_weights_propagate_the_bias(self):
        st = run(RELU, weight_std=0.0)
        assert all(s.mean_activation == pytest.approx(0.1, rel=1e-15) for s in st)
        assert all(s.std_activation < 1e-15 for s in st)
        assert all(s.active_fraction == 1.0 and s.mean_active_count == 100.0 for s in st)

    def test_zero_weights_nlrelu(self):
        st = run(NLRELU, weight_std=0.0)
        assert all(s.mean_activation == pytest.approx(math.log(1.1), rel=1e-15) for s in st)

    def test_depth_one_gives_one_row(self):
        assert len(run(RELU, depth=1)) == 1

    def test_row_per_layer(self):
        st = run(NLRELU, depth=7, width=20, batch=30)
        assert [s.layer_index for s in st] == list(range(1, 8))

    def test_active_count_consistent_with_fraction(self):
        for s in run(NLRELU, width=40, batch=25):
            assert s.mean_active_count == pytest.approx(s.active_fraction * 40, rel=1e-12)
            assert s.std_activation >= 0 and s.std_active_count >= 0

    def test_deterministic(self):
        assert run(NLRELU, seed=3) == run(NLRELU, seed=3)
        assert run(NLRELU, seed=3) != run(NLRELU, seed=4)

    @pytest.mark.parametrize("std", [1.5, 1.0])
    def test_first_layer_sparsity_is_shared(self, std):
        """ReLU and NLReLU zero out exactly the same inputs at layer 1."""
        for seed in range(10):
            a, b = run(RELU, weight_std=std, seed=seed), run(NLRELU, weight_std=std, seed=seed)
            assert a[0].active_fraction == b[0].active_fraction
            assert a[0].mean_active_count == b[0].mean_active_count

    @pytest.mark.parametrize("std", [1.5, 1.0])
    def test_nlrelu_layer_means_not_above_relu(self, std):
        for seed in range(10):
            a, b = run(RELU, weight_std=std, seed=seed), run(NLRELU, weight_std=std, seed=seed)
            assert all(y.mean_activation <= x.mean_activation for x, y in zip(a, b))

    def test_overflow_is_reported_not_raised(self):
        st = run(RELU, depth=400, width=50, batch=10, weight_std=3.0)
        assert not st[-1].finite and math.isnan(st[-1].mean_activation)
        assert all(s.finite for s in st[:-1])
        assert len(st) < 400

    def test_strict_overflow_names_layer(self):
        cfg = BiasShiftConfig(depth=400, width=50, batch=10, weight_std=3.0, activation=RELU)
        n = len(simulate_bias_shift(cfg))
        with pytest.raises(NonFiniteError, match=f"hidden layer {n}"):
            simulate_bias_shift(cfg, strict=True)


class TestMetrics:
    def test_equal_stds(self):
        assert heteroscedasticity_metric(stats_with_std([0.7] * 5)) == 1.0

    def test_ratio(self):
        assert heteroscedasticity_metric(stats_with_std([1, 2, 4])) == 4.0

    def test_zero_std_is_clamped(self):
        assert heteroscedasticity_metric(stats_with_std([0.0, 1e-3])) == pytest.approx(1e9)

    def test_needs_two_layers(self):
        with pytest.raises(ValueError):
            heteroscedasticity_metric(stats_with_std([1.0]))

    def test_mean_shift_examples(self):
        zero = [LayerStats(1, 0.0, 0.0, 0.0, 0.0, 0.0)]
        assert mean_shift_report(zero) == {"mean_of_layer_means": 0.0, "max_abs_layer_mean": 0.0}
        one = [LayerStats(1, 0.3, 0.0, 1.0, 1.0, 0.0)]
        assert mean_shift_report(one) == {"mean_of_layer_means": 0.3, "max_abs_layer_mean": 0.3}

    # values frozen from the first oracle run at seed 0
    @pytest.mark.parametrize("std,relu_h,nl_h,relu_m,nl_m", [
        (1.5, 1810770883.6711195, 1.3063564127844762, 10286877257.580126, 1.6457309714589938),
        (1.0, 47148273.32708196, 1.2754278034425623, 178929529.349849, 1.3620286325194517),
    ])
    def test_frozen_seed_zero(self, std, relu_h, nl_h, relu_m, nl_m):
        a, b = run(RELU, weight_std=std), run(NLRELU, weight_std=std)
        assert heteroscedasticity_metric(a) == pytest.approx(relu_h, rel=1e-12)
        assert heteroscedasticity_metric(b) == pytest.approx(nl_h, rel=1e-12)
        assert mean_shift_report(a)["max_abs_layer_mean"] == pytest.approx(relu_m, rel=1e-12)
        assert mean_shift_report(b)["max_abs_layer_mean"] == pytest.approx(nl_m, rel=1e-12)

    def test_compare_shares_weights(self):
        res = compare(BiasShiftConfig(activation=RELU, seed=2), NLRELU)
        assert set(res) == {RELU.label, NLRELU.label}
        r, n = res[RELU.label], res[NLRELU.label]
        assert n["hetero"] < r["hetero"] and not r["diverged"]


class TestCsv:
    def test_header_and_rows(self):
        cfg = BiasShiftConfig(depth=3, width=10, batch=5, activation=NLRELU, seed=1)
        text = stats_csv(cfg, simulate_bias_shift(cfg))
        lines = text.splitlines()
        assert lines[0].startswith("# simulate-bias-shift ") and "seed=1" in lines[0]
        assert "weight_std=1.5" in lines[0]
        rows = list(csv.reader(io.StringIO("\n".join(lines[1:]))))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert CSV_COLUMNS == ("layer", "mean_act", "std_act", "active_frac",
                               "mean_active_count", "std_active_count")
        assert [r[0] for r in rows[1:]] == ["1", "2", "3"]

    def test_overflow_row_is_nan(self):
        cfg = BiasShiftConfig(depth=400, width=50, batch=10, weight_std=3.0, activation=RELU)
        last = stats_csv(cfg, simulate_bias_shift(cfg)).splitlines()[-1].split(",")
        assert all(v == "nan" for v in last[1:])

    def test_values_round_trip(self):
        cfg = BiasShiftConfig(depth=2, width=8, batch=4, activation=NLRELU)
        st = simulate_bias_shift(cfg)
        row = stats_csv(cfg, st).splitlines()[2].split(",")
        assert float(row[1]) == st[0].mean_activation
        assert float(row[3]) == st[0].active_fraction
