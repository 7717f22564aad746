"""Finite-difference checks of every hand-written backward pass.

Each layer is compared against central differences in float64.  A deliberately
corrupted gradient shows what a failing check looks like.
"""
# %%
from cgrnn import gradcheck

results = gradcheck.run_suite(seeds=range(5))
for layer, res in results.items():
    print(f"{layer:11s} worst rel. error {max(r.worst_error for r in res):.2e}")

# %% the whole tiny network, probing a seeded subset of coordinates per tensor
r = gradcheck.check_model(0)
print(f"tiny model  worst rel. error {r.worst_error:.2e} in {r.worst_tensor}")

# %% an injected fault is caught and located
bad = gradcheck.check_gru(0, fault=True)
print(f"faulty GRU: passed={bad.passed}, tensor {bad.worst_tensor}, index {bad.worst_index}")
