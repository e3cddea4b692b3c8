"""Streaming neural audio codec with windowed attention and a single-layer
reparameterized vector quantizer, built on a self-contained numpy autodiff
engine. Training runs in three stages (autoencoder warm-up, quantizer
fitting, adversarial polish) with Bernoulli frame-noise injection whose
spectral effect is verifiable in closed form.
"""

from .attention import WindowSpec
from .codec import (Codec, FrameDiscriminator, ModelConfig, StreamSession,
                    adv_losses, bitrate, latency_samples, latent_reg)
from .corpus import CorpusSpec, gen_corpus, load_corpus, synth_utterance
from .errors import (AudioError, ConfigError, ContractError, ParseError,
                     ShapeError, StreamcodecError, VersionError)
from .checkpoint import load_checkpoint, save_checkpoint
from .noise import NoiseConfig, attenuation_factor, inject, mc_verify
from .optim import AdamW, LrSchedule, clip_global_norm, lr_at
from .quantizer import Codebook, quantize, ste_quantize, usage_stats, vq_loss
from .spectral import (SpecScale, default_scales, dft, mel_spectrogram,
                       multiscale_mel_loss, snr_db, stft_mag)
from .tensor import Tensor
from .tokenstats import (NgramTable, RankCurve, ngram_counts,
                         normalized_curve, rank_curve, zipf_fit)
from .training import (StagePlan, Trainer, default_plan, reconstruct,
                       stage_loss, train_step)
from .wavio import wav_read, wav_write

__version__ = "0.1.0"

__all__ = [
    "AdamW", "AudioError", "Codebook", "Codec", "ConfigError",
    "ContractError", "CorpusSpec", "FrameDiscriminator", "LrSchedule",
    "ModelConfig", "NgramTable", "NoiseConfig", "ParseError", "RankCurve",
    "ShapeError", "SpecScale", "StagePlan", "StreamSession",
    "StreamcodecError", "Tensor", "Trainer", "VersionError", "WindowSpec",
    "adv_losses", "attenuation_factor", "bitrate", "clip_global_norm",
    "default_plan", "default_scales", "dft", "gen_corpus", "inject",
    "latency_samples", "latent_reg", "load_checkpoint", "load_corpus",
    "lr_at", "mc_verify", "mel_spectrogram", "multiscale_mel_loss",
    "ngram_counts", "normalized_curve", "quantize", "rank_curve",
    "reconstruct", "save_checkpoint", "snr_db", "stage_loss", "ste_quantize",
    "stft_mag", "synth_utterance", "train_step", "usage_stats", "vq_loss",
    "wav_read", "wav_write", "zipf_fit",
]
