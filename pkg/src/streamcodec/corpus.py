"""Deterministic synthetic audio corpus.

Each utterance mixes 1 to 5 components, every one a sinusoid or a linear
chirp with log-uniform frequency, random amplitude and phase, and an
optional slow amplitude-modulation envelope, over a faint Gaussian noise
floor, then peak-normalizes to 0.9. Every utterance draws from its own
generator seeded with spec.seed XOR the utterance index, so files are
reproducible independently and the corpus is bit-identical across runs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .wavio import wav_read, wav_write

FREQ_LOW_HZ = 50.0
FREQ_HIGH_FRACTION = 0.45   # of the sample rate
CHIRP_PROBABILITY = 0.3
AM_PROBABILITY = 0.5
NOISE_FLOOR = 0.01
PEAK = 0.9
MANIFEST_NAME = "manifest.csv"


@dataclass
class CorpusSpec:
    num_utterances: int = 200
    seconds: float = 1.0
    sample_rate: int = 4000
    seed: int = 0

    def validate(self) -> None:
        if self.num_utterances < 1:
            raise ConfigError("num_utterances must be positive")
        if self.seconds <= 0:
            raise ConfigError("seconds must be positive")
        if self.sample_rate < 200:
            raise ConfigError("sample_rate too low for the frequency range")


@dataclass
class Component:
    kind: str            # "tone" or "chirp"
    f0: float
    f1: float            # == f0 for tones
    amp: float
    phase: float
    am_rate: float       # 0 when no envelope
    am_depth: float

    def describe(self) -> str:
        parts = [self.kind, f"f0={self.f0:.3f}"]
        if self.kind == "chirp":
            parts.append(f"f1={self.f1:.3f}")
        parts.append(f"amp={self.amp:.3f}")
        if self.am_rate:
            parts.append(f"am={self.am_rate:.3f}x{self.am_depth:.3f}")
        return " ".join(parts)


def _log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def synth_utterance(spec: CorpusSpec, index: int) -> tuple[np.ndarray, list[Component]]:
    """One utterance plus its component descriptors, fully seed-determined."""
    spec.validate()
    rng = np.random.default_rng(spec.seed ^ index)
    n = int(round(spec.seconds * spec.sample_rate))
    t = np.arange(n, dtype=np.float64) / spec.sample_rate
    f_hi = FREQ_HIGH_FRACTION * spec.sample_rate

    comps: list[Component] = []
    x = np.zeros(n, dtype=np.float64)
    for _ in range(int(rng.integers(1, 6))):
        chirp = rng.random() < CHIRP_PROBABILITY
        f0 = _log_uniform(rng, FREQ_LOW_HZ, f_hi)
        f1 = _log_uniform(rng, FREQ_LOW_HZ, f_hi) if chirp else f0
        amp = float(rng.uniform(0.1, 0.5))
        phase = float(rng.uniform(0.0, 2.0 * np.pi))
        am_rate = am_depth = 0.0
        if rng.random() < AM_PROBABILITY:
            am_rate = float(rng.uniform(1.0, 8.0))
            am_depth = float(rng.uniform(0.0, 0.5))
        # Linear chirp: instantaneous frequency runs f0 -> f1 over the clip.
        inst_phase = 2.0 * np.pi * (f0 * t + (f1 - f0) * t * t / (2.0 * spec.seconds))
        env = 1.0 + am_depth * np.sin(2.0 * np.pi * am_rate * t) if am_rate else 1.0
        x += amp * env * np.sin(inst_phase + phase)
        comps.append(Component("chirp" if chirp else "tone", f0, f1,
                               amp, phase, am_rate, am_depth))
    x += rng.normal(0.0, NOISE_FLOOR, n)
    x *= PEAK / np.abs(x).max()
    return x.astype(np.float32), comps


def gen_corpus(spec: CorpusSpec, out_dir: str) -> list[str]:
    """Write utt_%05d.wav files plus manifest.csv; returns the wav paths."""
    spec.validate()
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    lines = ["path,seconds,components"]
    for i in range(spec.num_utterances):
        wave, comps = synth_utterance(spec, i)
        name = f"utt_{i:05d}.wav"
        wav_write(wave, os.path.join(out_dir, name), spec.sample_rate)
        paths.append(os.path.join(out_dir, name))
        desc = ";".join(c.describe() for c in comps)
        lines.append(f"{name},{spec.seconds:g},{desc}")
    with open(os.path.join(out_dir, MANIFEST_NAME), "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    return paths


def load_corpus(data_dir: str, expected_rate: int | None = None) -> list[np.ndarray]:
    """Read every utt_*.wav in the directory, sorted by name.

    With expected_rate set, a file at any other rate is a config error;
    resampling is out of scope.
    """
    names = sorted(n for n in os.listdir(data_dir)
                   if n.startswith("utt_") and n.endswith(".wav"))
    if not names:
        raise ConfigError(f"no utt_*.wav files in {data_dir}")
    waves = []
    for n in names:
        wave, rate = wav_read(os.path.join(data_dir, n))
        if expected_rate is not None and rate != expected_rate:
            raise ConfigError(f"{n} is sampled at {rate} Hz, "
                              f"config expects {expected_rate}")
        waves.append(wave)
    return waves
