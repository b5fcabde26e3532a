"""Layer statistics of a deep random MLP at initialization, ReLU against NLReLU.

A standard-normal batch goes through ten dense layers with Gaussian weights
and a 0.1 bias. With ReLU the activations grow layer over layer, so both the
layer means and their spread drift apart; NLReLU's logarithm keeps them in a
narrow band. Run with ``python demos/02_bias_shift.py``.
"""

from nlrelu.activations import ActivationSpec
from nlrelu.experiments import BiasShiftConfig, heteroscedasticity_metric, mean_shift_report, simulate_bias_shift

for std in (1.5, 1.0):
    print(f"weights ~ N(0, {std}^2)")
    print(f"{'':16}{'layer':>6}{'mean':>14}{'std':>14}{'active':>9}")
    for spec in (ActivationSpec("relu"), ActivationSpec("nlrelu")):
        stats = simulate_bias_shift(BiasShiftConfig(weight_std=std, activation=spec, seed=0))
        for s in stats[::3]:
            print(f"{spec.label:16}{s.layer_index:6d}{s.mean_activation:14.4g}"
                  f"{s.std_activation:14.4g}{s.active_fraction:9.2f}")
        h = heteroscedasticity_metric(stats)
        m = mean_shift_report(stats)["max_abs_layer_mean"]
        print(f"{spec.label:16} max/min layer std = {h:.4g}, largest layer mean = {m:.4g}\n")
