"""Rank-frequency structure of codec token streams.

Encodes a synthetic corpus with a small trained-for-a-moment codec, counts
token n-grams within utterances, and fits the power-law exponent of each
rank-frequency curve. Natural-language word frequencies famously follow a
power law with exponent near 1. Codec tokens over a tonal corpus show the
same shape with a steeper unigram exponent, since sustained tones keep
re-selecting a few codes; longer n-grams diversify combinatorially, so the
fitted exponent falls toward 1 as the order grows while r^2 stays high.

Also writes the order-2 curve in normalized log-log coordinates, where an
exact power law is the straight diagonal y = x.

Run from the repository root:  python3 demos/token_zipf.py
"""

import os

import numpy as np

from streamcodec.attention import WindowSpec
from streamcodec.codec import Codec, ModelConfig
from streamcodec.corpus import CorpusSpec, synth_utterance
from streamcodec.noise import NoiseConfig
from streamcodec.optim import LrSchedule
from streamcodec.tokenstats import (ngram_counts, normalized_curve,
                                    rank_curve, zipf_fit)
from streamcodec.training import Trainer, default_plan

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

cfg = ModelConfig(sample_rate=800, frame_size=16, hidden_dim=16, code_dim=4,
                  codebook_size=32, enc_layers=1, dec_layers=1, heads=2,
                  enc_window=WindowSpec(4, 0), dec_window=WindowSpec(4, 2),
                  noise=NoiseConfig(p=0.0))
spec = CorpusSpec(num_utterances=64, seconds=0.5, sample_rate=800, seed=5)
waves = [synth_utterance(spec, i)[0] for i in range(64)]

# A brief stage-1+2 pass so the codebook reflects the data rather than
# random projections.
codec = Codec(cfg, seed=1)
schedule = LrSchedule(lr_max=5e-4, lr_min=5e-5, warmup_steps=40,
                      total_steps=400)
Trainer(codec, waves, default_plan(1, steps=400, batch_size=4,
                                   crop_seconds=0.5, schedule=schedule),
        seed=1).run()
Trainer(codec, waves, default_plan(2, steps=400, batch_size=4,
                                   crop_seconds=0.5, schedule=schedule),
        seed=2).run()

streams = [codec.encode(w)[0] for w in waves]
total = sum(len(s) for s in streams)
print(f"encoded {len(streams)} utterances, {total} tokens, "
      f"vocabulary {cfg.codebook_size}\n")

print(f"{'order':>5} {'types':>6} {'hapaxes':>8} {'exponent':>9} {'r^2':>6}")
for n in range(1, 5):
    table = ngram_counts(streams, n)
    full = rank_curve(table)
    kept = rank_curve(table, drop_hapax=True)
    if len(kept) < 3:
        print(f"{n:>5} {len(full):>6} {len(full) - len(kept):>8} "
              f"{'too few points':>16}")
        continue
    fit = zipf_fit(kept)
    print(f"{n:>5} {len(full):>6} {len(full) - len(kept):>8} "
          f"{fit.s:>9.3f} {fit.r2:>6.3f}")

curve = rank_curve(ngram_counts(streams, 2), drop_hapax=True)
rows = normalized_curve(curve)
path = os.path.join(OUT, "zipf_order2.csv")
with open(path, "w", encoding="utf-8") as f:
    f.write("rank,count,x_norm,y_norm\n")
    for (rank, count), (x, y) in zip(curve.entries, rows):
        f.write(f"{rank},{count:g},{x:.6f},{y:.6f}\n")
print(f"\nwrote the normalized order-2 curve to {path}")
print("plot y_norm against x_norm: the closer to the diagonal, the closer "
      "the stream is to an exact power law.")
