"""Shared fixtures: micro model configs and tiny deterministic corpora.

Everything here is sized for speed; the acceptance tests build their own
full-size harnesses.
"""

import numpy as np
import pytest

from streamcodec.attention import WindowSpec
from streamcodec.codec import Codec, ModelConfig
from streamcodec.corpus import CorpusSpec, synth_utterance
from streamcodec.noise import NoiseConfig


def micro_config(**overrides) -> ModelConfig:
    base = dict(
        sample_rate=800,
        frame_size=16,
        hidden_dim=16,
        code_dim=4,
        codebook_size=32,
        enc_layers=1,
        dec_layers=1,
        heads=2,
        enc_window=WindowSpec(4, 0),
        dec_window=WindowSpec(4, 2),
        noise=NoiseConfig(p=0.0),
    )
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def micro_codec():
    return Codec(micro_config(), seed=7)


@pytest.fixture
def tiny_waves():
    spec = CorpusSpec(num_utterances=6, seconds=0.5, sample_rate=800, seed=11)
    return [synth_utterance(spec, i)[0] for i in range(6)]


@pytest.fixture
def rng():
    return np.random.default_rng(0)
