"""Synthesise a small dataset, train a compact model and evaluate it.

The same steps are available from the shell as ``cgrnn synth``,
``cgrnn train`` and ``cgrnn eval``.
"""
# %%
import tempfile
import warnings
from pathlib import Path

from cgrnn.checkpoint import load_checkpoint, save_checkpoint
from cgrnn.data import SynthSpec, generate_synthetic
from cgrnn.metrics import evaluate
from cgrnn.model import ModelConfig
from cgrnn.pipeline import FeatureLoader
from cgrnn.train import TrainConfig, train_fold

warnings.simplefilter("ignore", UserWarning)
work = Path(tempfile.mkdtemp())
entries = generate_synthetic(SynthSpec(n_chunks=60, seed=1), work)
train, valid = entries[:45], entries[45:]
print(train[0].chunk_id, train[0].labels)

# %%
mc = ModelConfig(basic_kind="mfb40", n_filters=16, n_gru_layers=1, gru_units=16, dense_units=32,
                 dtype="float32")
tc = TrainConfig(max_epochs=10, patience=3, learning_rate=3e-3, seed=0)
loader = FeatureLoader()
ckpt, log = train_fold(train, valid, tc, mc, loader)
print(log.to_csv(include_time=False))

# %% the checkpoint reloads to the same predictions
save_checkpoint(work / "model.cgrn", ckpt)
print(evaluate(load_checkpoint(work / "model.cgrn"), valid, loader).table("valid"))
