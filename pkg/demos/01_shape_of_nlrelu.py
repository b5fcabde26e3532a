"""How NLReLU bends the positive half-line, and what that does to gradients.

Run with ``python demos/01_shape_of_nlrelu.py``. Everything here is
closed-form, so it finishes instantly.
"""

import numpy as np

from nlrelu import activations as act
from nlrelu.activations import ActivationSpec

xs = np.array([-1.0, 0.0, 0.5, 1.0, 2.0, 5.0, 20.0])

print("f(x) for a few betas against ReLU")
print(f"{'x':<17}" + "".join(f"{x:>9g}" for x in xs))
for spec in (ActivationSpec("relu"), *(ActivationSpec("nlrelu", beta=b) for b in (0.5, 1.0, 2.0))):
    print(f"{spec.label:<17}" + "".join(f"{v:9.4f}" for v in act.forward(spec, xs)))

# The derivative starts at beta and decays like 1/x, so large inputs are
# compressed without ever saturating completely.
nl = ActivationSpec("nlrelu")
print("\nf'(x) for beta = 1:", np.round(act.derivative(nl, xs), 4))

# Equal input steps produce shrinking output steps further from zero.
print("\noutput gap for an input step of 0.25")
for beta in (0.7, 1.0):
    spec = ActivationSpec("nlrelu", beta=beta)
    gaps = [act.discrimination_gap(spec, a, 0.25) for a in (0.0, 0.25, 0.75, 2.0)]
    print(f"  beta={beta}: " + ", ".join(f"{g:.4f}" for g in gaps))

# For one neuron with pre-activation z > 0 the weight gradient under NLReLU
# is beta/(beta*z + 1) times the ReLU one. It drops below 1 once z > (beta-1)/beta.
print("\ngradient scale relative to ReLU")
for beta in (0.7, 1.0, 2.0):
    z = np.array([0.1, 0.5, 1.0, 3.0])
    print(f"  beta={beta}: z={z.tolist()} -> {np.round(beta / (beta * z + 1), 3).tolist()}")
