"""Convolutional gated recurrent network with a spatial (IMD) stream for
multi-label audio tagging, written on top of numpy."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import ManifestEntry, SynthSpec, generate_synthetic, parse_manifest, read_manifest, read_wav
from .features import FeatureSequence, Waveform, extract, extract_basic, extract_spatial
from .labels import ALPHABET, TAG_ORDER, LabelSet
from .metrics import EERReport, compute_eer, evaluate
from .model import ModelConfig, init_params, model_forward
from .train import TrainConfig, cross_validate, make_batches, train_fold

__version__ = "0.1.0"
