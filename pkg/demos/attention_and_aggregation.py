"""
Nested dual attention and adjacent aggregation on random features
=================================================================

Runs the cross-modal attention block on a pair of RGB and depth feature
maps and the adjacent-level aggregation block on three encoder levels,
printing the quantities the architecture guarantees.
"""

import numpy as np

from m2rnet.aiam import AIAM
from m2rnet.ndam import NDAM
from m2rnet.tensor import Tensor, no_grad

rng = np.random.default_rng(1)

# Level-4 features of a 64x64 input with the toy widths: 96 channels, 8x8.
f_rgb = Tensor(rng.standard_normal((2, 96, 8, 8)))
f_depth = Tensor(rng.standard_normal((2, 96, 8, 8)))
block = NDAM(4, 96, rng)

with no_grad():
    fused = f_rgb + f_depth
    channel_att = block.c1.attention(fused).data
    position_att = block.s1.attention(block.c1(fused)).data
    refined = block(f_rgb, f_depth)

print("channel attention", channel_att.shape, "row sums within",
      f"{np.abs(channel_att.sum(-1) - 1).max():.1e}", "of 1")
print("position attention", position_att.shape, "row sums within",
      f"{np.abs(position_att.sum(-1) - 1).max():.1e}", "of 1")

with no_grad():
    after_phase1 = block.s1(block.c1(fused))
    channel_gate = block.c2.gate(after_phase1).data
    spatial_gate = block.s2.gate(block.c2(after_phase1)).data
# Gates are sigmoids, strictly inside (0, 1) in exact arithmetic.  In float64
# a logit above about 36.7 rounds to exactly 1.0, which these large summed
# features reach in the channel gate.
for name, gate in (("channel", channel_gate), ("spatial", spatial_gate)):
    print(f"{name} gate: min {gate.min():.2e}, 1 - max {1 - gate.max():.2e}")
print("refined output", refined.shape)

# Aggregation at level 3 takes levels 2, 3 and 4 (widths 32, 64, 96).
low = Tensor(rng.standard_normal((1, 32, 32, 32)))
mid = Tensor(rng.standard_normal((1, 64, 16, 16)))
high = Tensor(rng.standard_normal((1, 96, 8, 8)))
agg = AIAM(3, 32, 64, 96, rng)
with no_grad():
    out = agg(low, mid, high)
    progressive = agg.i1(low, mid, high).data
    jumping = agg.i2(low, mid, high).data
print("aggregated level-3 feature", out.shape)
print(f"progressive path rms {np.sqrt((progressive ** 2).mean()):.3f}, "
      f"jumping path rms {np.sqrt((jumping ** 2).mean()):.3f}")
