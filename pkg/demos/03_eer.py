"""Equal error rate on a few hand-made score lists."""
# %%
import numpy as np

from cgrnn.metrics import EERReport, compute_eer

print("perfect separation:", compute_eer([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]))

# %% interleaved scores: the threshold sweep and the ROC convex hull disagree
scores, labels = [0.35, 0.8, 0.1, 0.4], [1, 1, 0, 0]
print("sweep:", compute_eer(scores, labels), " convex hull:", compute_eer(scores, labels, method="rocch"))

# %% EER depends only on the ranking of the scores
rng = np.random.default_rng(0)
s, y = rng.random(200), rng.integers(0, 2, 200)
print(compute_eer(s, y) == compute_eer(np.log(s), y))

# %% a per-tag report over the seven tags
probs = rng.random((40, 7))
truth = (probs + 0.4 * rng.standard_normal((40, 7)) > 0.5).astype(int)
print(EERReport.from_scores(probs, truth).table("demo"))
