"""All three training stages on a micro model, start to finish in seconds.

Stage 1 trains encoder and decoder with quantization bypassed, stage 2
freezes the encoder and fits the codebook map, stage 3 freezes everything
upstream of the decoder and polishes it against the per-frame discriminator.
The script prints the mel-loss trajectory per stage, then reports roundtrip
metrics and codebook health on held-out audio. Everything is seeded, so two
runs of this file produce identical numbers.

Run from the repository root:  python3 demos/train_micro.py
"""

import os
import time

import numpy as np

from streamcodec.attention import WindowSpec
from streamcodec.codec import Codec, ModelConfig
from streamcodec.corpus import CorpusSpec, synth_utterance
from streamcodec.noise import NoiseConfig
from streamcodec.optim import LrSchedule
from streamcodec.quantizer import usage_stats
from streamcodec.spectral import default_scales, multiscale_mel_loss, snr_db
from streamcodec.training import Trainer, default_plan

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

cfg = ModelConfig(sample_rate=800, frame_size=16, hidden_dim=16, code_dim=4,
                  codebook_size=32, enc_layers=1, dec_layers=1, heads=2,
                  enc_window=WindowSpec(4, 0), dec_window=WindowSpec(4, 2),
                  noise=NoiseConfig(p=0.2))
spec = CorpusSpec(num_utterances=24, seconds=0.5, sample_rate=800, seed=11)
train_waves = [synth_utterance(spec, i)[0] for i in range(20)]
held_waves = [synth_utterance(spec, i)[0] for i in range(20, 24)]

codec = Codec(cfg, seed=0)
t0 = time.time()
for stage, steps in ((1, 400), (2, 400), (3, 150)):
    schedule = LrSchedule(lr_max=5e-4, lr_min=5e-5,
                          warmup_steps=steps // 10, total_steps=steps)
    plan = default_plan(stage, steps=steps, batch_size=4, crop_seconds=0.5,
                        schedule=schedule)
    metrics = os.path.join(OUT, f"micro_stage{stage}.csv")
    rows = Trainer(codec, train_waves, plan, seed=stage).run(
        metrics_path=metrics)
    mels = [r["mel"] for r in rows]
    print(f"stage {stage}: mel {mels[0]:.3f} -> {mels[-1]:.3f} over "
          f"{steps} steps ({time.time() - t0:.1f}s), metrics in {metrics}")

tokens_all = []
snrs = []
mels = []
for w in held_waves:
    tokens, _ = codec.encode(w)
    rec = codec.decode(tokens)[:len(w)]
    tokens_all.append(tokens)
    snrs.append(snr_db(w, rec))
    mels.append(multiscale_mel_loss(w, rec, default_scales(),
                                    cfg.sample_rate).item())
stats = usage_stats(np.concatenate(tokens_all), cfg.codebook_size)

print(f"held-out mel distance: {np.mean(mels):.3f}")
print(f"held-out snr: {np.mean(snrs):+.2f} dB (spectral losses leave "
      f"absolute phase free, so time-domain snr stays low by design)")
print(f"codebook: {stats.usage:.0%} of {cfg.codebook_size} codes used, "
      f"token perplexity {stats.perplexity:.1f}")
