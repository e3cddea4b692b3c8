"""Codec assembly: config validation, round trips, streaming sessions."""

import numpy as np
import pytest

from streamcodec import tensor as T
from streamcodec.attention import WindowSpec
from streamcodec.codec import (Codec, FrameDiscriminator, ModelConfig,
                               StreamSession, adv_losses, bitrate,
                               latency_samples, latent_reg)
from streamcodec.errors import ContractError, ShapeError
from streamcodec.noise import NoiseConfig

from conftest import micro_config


def test_default_config_validates():
    ModelConfig().validate()


def test_config_rejects_indivisible_heads():
    with pytest.raises(ContractError):
        micro_config(hidden_dim=18, heads=4).validate()


def test_config_rejects_encoder_lookahead():
    with pytest.raises(ContractError):
        micro_config(enc_window=WindowSpec(4, 1)).validate()


def test_token_rate():
    cfg = micro_config(sample_rate=800, frame_size=16)
    assert cfg.token_rate == 50


def test_bitrate_anchors():
    # 131072 codes = 17 bits per token.
    base = dict(hidden_dim=64, code_dim=8, enc_layers=1, dec_layers=1, heads=4,
                enc_window=WindowSpec(4, 0), dec_window=WindowSpec(4, 2),
                noise=NoiseConfig())
    cfg = ModelConfig(sample_rate=16000, frame_size=320, codebook_size=131072, **base)
    assert bitrate(cfg) == 850
    cfg = ModelConfig(sample_rate=16000, frame_size=160, codebook_size=131072, **base)
    assert bitrate(cfg) == 1700
    cfg = ModelConfig(sample_rate=16000, frame_size=640, codebook_size=131072, **base)
    assert bitrate(cfg) == 425


def test_bitrate_single_code_is_zero():
    cfg = micro_config(codebook_size=1)
    assert bitrate(cfg) == 0


def test_latency_is_lookahead_frames():
    cfg = micro_config(dec_window=WindowSpec(4, 2), frame_size=16)
    assert latency_samples(cfg) == 32
    cfg = micro_config(dec_window=WindowSpec(4, 0), frame_size=16)
    assert latency_samples(cfg) == 0


def test_latent_reg_anchor():
    z = T.constant(np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32))
    assert latent_reg(z).item() == pytest.approx(7.5)


def test_adv_losses_perfect_sides():
    ones = T.constant(np.ones((4, 1), dtype=np.float32))
    zeros = T.constant(np.zeros((4, 1), dtype=np.float32))
    gen, disc, feat = adv_losses(ones, ones, [], [])
    assert gen.item() == pytest.approx(0.0)
    gen, disc, feat = adv_losses(ones, zeros, [], [])
    assert disc.item() == pytest.approx(0.0)
    assert feat.item() == pytest.approx(0.0)


def test_adv_losses_halfway_anchor():
    # Single 0.5 logit on both sides: disc = 0.25 + 0.25.
    real = T.constant(np.full((1, 1), 0.5, dtype=np.float32))
    fake = T.constant(np.full((1, 1), 0.5, dtype=np.float32))
    gen, disc, feat = adv_losses(real, fake, [], [])
    assert gen.item() == pytest.approx(0.25)
    assert disc.item() == pytest.approx(0.5)


def test_adv_losses_feature_matching_detaches_real(rng):
    rf = T.parameter(rng.standard_normal((3, 4)))
    ff = T.parameter(rng.standard_normal((3, 4)))
    logits = T.constant(np.zeros((3, 1), dtype=np.float32))
    _, _, feat = adv_losses(logits, logits, [rf], [ff])
    feat.backward()
    assert rf.grad is None
    assert ff.grad is not None


def test_adv_losses_rejects_uneven_feature_lists(rng):
    logits = T.constant(np.zeros((2, 1), dtype=np.float32))
    with pytest.raises(ShapeError):
        adv_losses(logits, logits, [T.constant(np.zeros((2, 2)))], [])


def test_params_inventory_stable(micro_codec):
    names = list(micro_codec.params())
    assert len(names) == len(set(names))
    for prefix in ("enc.", "dec.", "quant.map", "disc."):
        assert any(n.startswith(prefix) for n in names), prefix
    # Same config, same seed: identical inventory and values.
    again = Codec(micro_config(), seed=7)
    assert list(again.params()) == names
    for n, p in micro_codec.params().items():
        np.testing.assert_array_equal(p.data, again.params()[n].data)


def test_all_tensors_adds_frozen_table(micro_codec):
    extra = set(micro_codec.all_tensors()) - set(micro_codec.params())
    assert extra == {"quant.frozen"}


def test_set_trainable_marks_exact_prefixes(micro_codec):
    micro_codec.set_trainable(("dec.",))
    for name, p in micro_codec.params().items():
        assert p.requires_grad == name.startswith("dec.")


def test_load_tensors_roundtrip(micro_codec):
    blob = {name: arr.copy() for name, arr in micro_codec.all_tensors().items()}
    other = Codec(micro_config(), seed=99)
    other.load_tensors(blob)
    for name, arr in other.all_tensors().items():
        np.testing.assert_array_equal(arr, blob[name])


def test_load_tensors_names_the_problem(micro_codec):
    blob = {name: arr.copy() for name, arr in micro_codec.all_tensors().items()}
    del blob["quant.map"]
    with pytest.raises(ShapeError, match="quant.map"):
        Codec(micro_config(), seed=0).load_tensors(blob)

    blob = {name: arr.copy() for name, arr in micro_codec.all_tensors().items()}
    blob["enc.out.w"] = blob["enc.out.w"][:, :-1]
    with pytest.raises(ShapeError):
        Codec(micro_config(), seed=0).load_tensors(blob)


def test_load_tensors_refreshes_code_cache(micro_codec):
    z = np.random.default_rng(0).standard_normal(
        (4, micro_codec.cfg.code_dim)).astype(np.float32)
    from streamcodec.quantizer import quantize

    before, _ = quantize(z, micro_codec.codebook)
    blob = {name: arr.copy() for name, arr in micro_codec.all_tensors().items()}
    blob["quant.map"] = blob["quant.map"] * -1.0
    micro_codec.load_tensors(blob)
    after, _ = quantize(z, micro_codec.codebook)
    assert not np.array_equal(before, after)


def test_pad_wave_to_frame_multiple(micro_codec):
    w = np.ones(20, dtype=np.float32)
    padded = micro_codec.pad_wave(w)
    assert len(padded) == 32
    np.testing.assert_array_equal(padded[20:], np.zeros(12, dtype=np.float32))
    exact = micro_codec.pad_wave(np.ones(16, dtype=np.float32))
    assert len(exact) == 16


def test_encode_decode_shapes(micro_codec, tiny_waves):
    w = tiny_waves[0]
    tokens, latents = micro_codec.encode(w)
    frames = int(np.ceil(len(w) / micro_codec.cfg.frame_size))
    assert tokens.shape == (frames,)
    assert latents.shape == (frames, micro_codec.cfg.code_dim)
    assert tokens.min() >= 0
    assert tokens.max() < micro_codec.cfg.codebook_size
    audio = micro_codec.decode(tokens)
    assert audio.shape == (frames * micro_codec.cfg.frame_size,)
    assert audio.dtype == np.float32


def test_decode_rejects_out_of_range_tokens(micro_codec):
    with pytest.raises(ContractError):
        micro_codec.decode(np.array([0, micro_codec.cfg.codebook_size]))
    with pytest.raises(ContractError):
        micro_codec.decode(np.array([-1]))


def test_streaming_tokens_match_offline_bitwise(micro_codec, tiny_waves):
    w = micro_codec.pad_wave(tiny_waves[1])
    offline_tokens, _ = micro_codec.encode(w)
    offline_audio = micro_codec.decode(offline_tokens)

    session = StreamSession(micro_codec)
    for sample in w:
        session.push(np.array([sample], dtype=np.float32))
    session.close()
    np.testing.assert_array_equal(np.array(session.tokens), offline_tokens)
    np.testing.assert_array_equal(session.pull(), offline_audio)


def test_streaming_chunk_size_invariance(micro_codec, tiny_waves):
    w = micro_codec.pad_wave(tiny_waves[2])
    offline_tokens, _ = micro_codec.encode(w)

    for chunk in (1, 7, 16, 160):
        session = StreamSession(micro_codec)
        for i in range(0, len(w), chunk):
            session.push(w[i: i + chunk])
        session.close()
        np.testing.assert_array_equal(np.array(session.tokens), offline_tokens)


def test_streaming_latency_exact(micro_codec):
    # Audio for frame t appears only after the decoder has seen token
    # t + right, so the first pull succeeds exactly at that point.
    cfg = micro_codec.cfg
    lat_frames = cfg.dec_window.right
    session = StreamSession(micro_codec)
    rng = np.random.default_rng(1)

    emitted = []
    pushed = 0
    while len(emitted) == 0:
        chunk = rng.uniform(-0.5, 0.5, cfg.frame_size).astype(np.float32)
        session.push(chunk)
        pushed += cfg.frame_size
        out = session.pull()
        if out.size:
            emitted.append(pushed)
    assert emitted[0] == (lat_frames + 1) * cfg.frame_size
    assert session.latency_samples == lat_frames * cfg.frame_size


def test_streaming_pull_before_ready_is_empty(micro_codec):
    session = StreamSession(micro_codec)
    assert session.pull().size == 0
    session.push(np.zeros(3, dtype=np.float32))
    assert session.pull().size == 0


def test_streaming_close_pads_partial_frame(micro_codec):
    w = np.ones(micro_codec.cfg.frame_size + 5, dtype=np.float32) * 0.25
    session = StreamSession(micro_codec)
    session.push(w)
    session.close()
    padded = micro_codec.pad_wave(w)
    tokens, _ = micro_codec.encode(padded)
    np.testing.assert_array_equal(np.array(session.tokens), tokens)
    np.testing.assert_array_equal(session.pull(), micro_codec.decode(tokens))


def test_streaming_push_after_close_rejected(micro_codec):
    session = StreamSession(micro_codec)
    session.push(np.zeros(4, dtype=np.float32))
    session.close()
    with pytest.raises(ContractError):
        session.push(np.zeros(1, dtype=np.float32))


def test_encoder_causality_bitwise(micro_codec, tiny_waves):
    # Editing samples after frame t leaves tokens 0..t untouched.
    w = micro_codec.pad_wave(tiny_waves[3])
    fs = micro_codec.cfg.frame_size
    tokens, _ = micro_codec.encode(w)
    cut = 4 * fs
    edited = w.copy()
    edited[cut:] = np.random.default_rng(0).uniform(-0.5, 0.5, len(w) - cut)
    tokens2, _ = micro_codec.encode(edited)
    np.testing.assert_array_equal(tokens2[:4], tokens[:4])


def test_decoder_locality_bitwise(micro_codec):
    # Frame t of the decode depends on tokens up to t + right only.
    rng = np.random.default_rng(5)
    K = micro_codec.cfg.codebook_size
    right = micro_codec.cfg.dec_window.right
    fs = micro_codec.cfg.frame_size
    tokens = rng.integers(0, K, 12)
    audio = micro_codec.decode(tokens)
    edited = tokens.copy()
    t = 4
    edited[t + right + 1:] = rng.integers(0, K, len(tokens) - t - right - 1)
    audio2 = micro_codec.decode(edited)
    np.testing.assert_array_equal(audio2[: (t + 1) * fs], audio[: (t + 1) * fs])


def test_discriminator_shapes(rng):
    disc = FrameDiscriminator(n_mels=32, hidden=64, rng=np.random.default_rng(0))
    x = T.constant(rng.standard_normal((10, 32)).astype(np.float32))
    logits, feats = disc.forward(x)
    assert logits.shape == (10, 1)
    assert len(feats) == 2
    assert all(f.shape == (10, 64) for f in feats)
