"""Short MNIST runs: ReLU and NLReLU at a small and a large learning rate.

Uses the desk-scale MNIST subset (2000 train / 1000 test) and the pooled
simple CNN trained with Adam. The full criteria run 1500 iterations; this
demo defaults to 200 iterations on a narrower network (16 filters, 256 dense
units) so it finishes in about a minute on one core.

    python demos/03_mnist_contrast.py --data-dir data --iterations 200
"""

import argparse

from nlrelu import harness
from nlrelu.activations import ActivationSpec
from nlrelu.network import TrainConfig

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--data-dir", default="data")
parser.add_argument("--iterations", type=int, default=200)
parser.add_argument("--filters", type=int, default=16)
parser.add_argument("--dense", type=int, default=256)
args = parser.parse_args()

data = harness.load_desk_data("mnist", args.data_dir, seed=0)
summaries = harness.lr_contrast(
    "simple_cnn", data, [ActivationSpec("nlrelu"), ActivationSpec("relu")], [1e-4, 1e-2],
    repeats=1, config=TrainConfig(iterations=args.iterations),
    preset_kwargs={"filters": args.filters, "dense": args.dense})
print(f"{'activation':16}{'lr':>8}{'test acc':>10}{'diverged':>10}")
for s in summaries:
    print(f"{s.key[0].label:16}{s.key[1]:8g}{s.mean_acc:10.3f}{s.n_diverged:10d}")
