"""Tour of the loss family and its gradients.

Shows how the regulatory exponent q interpolates between the plain
complementary loss (q=0) and its fully noise-tolerant form (q=1), how the
soft label shifts weight between the active and complementary terms, and
that every analytic gradient agrees with finite differences.
"""

import numpy as np

import noisymatch as nm
from noisymatch.matching import build_context

rng = np.random.default_rng(5)
k = 6
s = rng.uniform(-1.0, 1.0, size=(k, k))
np.fill_diagonal(s, rng.uniform(0.3, 0.9, size=k))  # plausible matched pairs
ctx = build_context(s, tau=0.05)

print("complementary loss of pair 0 as q sweeps 0 -> 1:")
for q in (0.0, 0.25, 0.5, 0.75, 1.0):
    print(f"  q={q:4.2f}: {nm.complementary_loss(ctx, 0, q).value:8.4f}")

print("\ncombined loss of pair 0 as the soft label falls (q = 1 - label):")
cfg = nm.LossConfig()
for y in (1.0, 0.7, 0.4, 0.1, 0.0):
    ev = nm.active_complementary_loss(ctx, 0, y, cfg)
    act = nm.active_loss(ctx, 0, y).value
    print(f"  label={y:4.2f}: total {ev.value:8.4f}  (active part {act:8.4f})")
print("at label 0 the active term is gone: the pair only teaches through negatives")

print("\ntriplet baselines on the same batch:")
print(f"  hard-negative margin 0.2: {nm.triplet_hard_negative(s, 0, 0.2).value:.4f}")
for y in (1.0, 0.5, 0.0):
    print(f"  soft margin, label {y:3.1f}:  {nm.soft_margin_triplet(s, 0, y, 0.2, 10.0).value:.4f}")

print("\ngradient checks (max relative error vs central differences):")
checks = {
    "complementary q=0.6": lambda m: nm.complementary_loss(build_context(m, 0.05), 2, 0.6),
    "active": lambda m: nm.active_loss(build_context(m, 0.05), 2, 0.8),
    "combined batch": lambda m: nm.batch_loss(build_context(m, 0.05), np.full(k, 0.5), cfg),
    "hard triplet": lambda m: nm.triplet_hard_negative(m, 2, 0.2),
}
for name, fn in checks.items():
    rep = nm.gradcheck(fn, s)
    print(f"  {name:22s}: {rep.max_rel_err:.2e}  ({'ok' if rep.passed else 'MISMATCH'})")

params = nm.init_encoder_params(8, 6, 4, np.random.SeedSequence(0))
images = rng.standard_normal((k, 8))
texts = rng.standard_normal((k, 6))
rep = nm.gradcheck_encoder(
    lambda m: nm.batch_loss(build_context(m, 0.05), np.full(k, 0.5), cfg), params, images, texts
)
print(f"  {'through the encoders':22s}: {rep.max_rel_err:.2e}  ({'ok' if rep.passed else 'MISMATCH'})")
