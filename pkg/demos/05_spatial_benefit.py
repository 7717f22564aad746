"""Does the IMD stream help when a tag is only distinguishable by direction?

In the spatial synthetic set, tags v and o share one sound source and differ
only in which channel is louder.  The basic stream averages the channels, so
it cannot tell them apart; the IMD stream can.  About 45 s per seed.
"""
# %%
import tempfile

from cgrnn.experiments import spatial_benefit

for seed in range(2):
    r = spatial_benefit(seed, tempfile.mkdtemp())
    print(f"seed {seed}: mfb40 {r.eer_basic:.3f}  mfb40+IMD {r.eer_spatial:.3f}")
    print("   per tag v/o:", r.report_basic.per_tag["v"], "->", r.report_spatial.per_tag["v"])
