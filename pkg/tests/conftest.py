import numpy as np
import pytest

from strf.synthdata import SynthSpec, generate


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Shared small dataset: 4 identities (2 train, 2 test), 2 cameras."""
    root = tmp_path_factory.mktemp("tinydata")
    spec = SynthSpec(
        identities=4,
        tracklets_per_identity=2,
        frames_per_tracklet=12,
        frame_height=32,
        frame_width=16,
        cameras=2,
        pairing="appearance",
        train_identities=2,
        seed=3,
    )
    manifest = generate(spec, str(root))
    return manifest
