import numpy as np
import pytest

from cgrnn.data import SynthSpec, generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def synth20(tmp_path_factory):
    """20-chunk default synthetic dataset shared across tests."""
    out = tmp_path_factory.mktemp("synth20")
    entries = generate_synthetic(SynthSpec(n_chunks=20, seed=7), out)
    return out, entries


@pytest.fixture(scope="session")
def loader():
    from cgrnn.pipeline import FeatureLoader

    return FeatureLoader(cache_dir=False)


@pytest.fixture(scope="session")
def tiny_model():
    from cgrnn.model import ModelConfig

    return ModelConfig(basic_kind="mfb40", n_filters=4, n_gru_layers=1, gru_units=4, dense_units=8)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module is not None and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in module.RESULTS:
            terminalreporter.write_line(line)
