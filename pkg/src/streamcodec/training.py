"""Three-stage training: warm-up, quantizer fitting, adversarial polish.

Stage 1 trains encoder and decoder as a plain autoencoder; quantization is
bypassed entirely (the decoder reads the raw latents), so the loss has zero
dependence on codebook contents. Stage 2 freezes the encoder and fits the
codebook map plus the decoder around the now-fixed latents, adding the
codebook/commitment terms. Stage 3 freezes everything upstream of the
decoder and polishes it against a small per-frame discriminator with the
least-squares adversarial and feature-matching losses.

Freezing is structural: set_trainable flips requires_grad so frozen
parameters never enter the graph, which makes the bit-identity freeze
contracts hold by construction rather than by optimizer discipline. The
discriminator is a separate parameter group with its own optimizer; stray
gradients it picks up from the generator's backward pass are cleared before
its own update.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .attention import stack_forward
from .codec import Codec, adv_losses, latent_reg
from .errors import ConfigError, ContractError
from .noise import inject
from .optim import AdamW, LrSchedule, clip_global_norm, lr_at
from .quantizer import quantize, ste_quantize, usage_stats, vq_loss
from .spectral import (MEL_LOG_FLOOR, SpecScale, default_scales,
                       mel_spectrogram, multiscale_mel_loss)
from .tensor import Tensor

# Parameter-name prefixes updated per stage (generator side; the stage-3
# discriminator is its own group on top of these).
STAGE_TRAINABLE: dict[int, tuple[str, ...]] = {
    1: ("enc.", "dec."),
    2: ("quant.map", "dec."),
    3: ("dec.",),
}

# The discriminator reads log-mel frames at this single scale.
DISC_SCALE = SpecScale(win=256, hop=64, n_mels=32)

METRICS_FIELDS = ("step", "stage", "loss", "mel", "vq", "reg", "adv", "feat",
                  "usage", "perplexity", "lr")


@dataclass
class StagePlan:
    """Everything one training stage needs besides the model and the data."""

    stage: int
    steps: int = 2000
    batch_size: int = 8
    crop_seconds: float = 1.0
    mel_weight: float = 1.0
    latent_weight: float = 0.0
    vq_weight: float = 0.0
    adv_weight: float = 0.0
    feat_weight: float = 0.0
    grad_clip: float = 1.0
    schedule: LrSchedule = field(default_factory=LrSchedule)
    trainable: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.trainable is None and self.stage in STAGE_TRAINABLE:
            self.trainable = STAGE_TRAINABLE[self.stage]

    def validate(self) -> None:
        if self.stage not in (1, 2, 3):
            raise ConfigError(f"stage must be 1, 2, or 3, got {self.stage}")
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError("steps and batch_size must be positive")
        if self.crop_seconds <= 0:
            raise ConfigError("crop_seconds must be positive")
        off = {1: ("vq_weight", "adv_weight", "feat_weight"),
               2: ("latent_weight", "adv_weight", "feat_weight"),
               3: ("latent_weight", "vq_weight")}[self.stage]
        for name in off:
            if getattr(self, name) != 0.0:
                raise ConfigError(
                    f"stage {self.stage} requires {name} == 0, "
                    f"got {getattr(self, name)}")
        if self.schedule.total_steps < self.steps:
            raise ConfigError("schedule.total_steps must cover plan.steps")


def default_plan(stage: int, steps: int = 2000, **overrides) -> StagePlan:
    """A StagePlan with the per-stage default weights filled in."""
    weights = {
        1: dict(latent_weight=1e-4),
        2: dict(vq_weight=1.0),
        3: dict(adv_weight=1.0, feat_weight=1.0),
    }
    if stage not in weights:
        raise ConfigError(f"stage must be 1, 2, or 3, got {stage}")
    kw = dict(weights[stage])
    kw.update(overrides)
    if "schedule" not in kw:
        kw["schedule"] = LrSchedule(total_steps=steps,
                                    warmup_steps=max(1, steps // 10))
    plan = StagePlan(stage=stage, steps=steps, **kw)
    plan.validate()
    return plan


@dataclass
class ForwardOut:
    """One training forward pass: reconstruction plus the latent bookkeeping."""

    wave: Tensor            # (B, N) reconstruction
    z: Tensor               # (B, frames, code_dim) encoder latents
    z_flat: Tensor          # (B*frames, code_dim) view of z
    tokens: np.ndarray      # (B*frames,) selected code indices


def reconstruct(codec: Codec, batch: np.ndarray, stage: int,
                rng: np.random.Generator | None = None,
                train: bool = True) -> ForwardOut:
    """Run the full encode/decode graph on a (B, N) sample batch.

    N must be a whole number of frames. In stage 1 the decoder reads the raw
    latents (quantization bypass); stages 2 and 3 route through the
    straight-through quantizer. Noise injection needs `rng` and happens only
    when training with a stage-enabled noise config.
    """
    cfg = codec.cfg
    batch = np.asarray(batch)
    if batch.dtype != np.float64:
        # float64 passes through so finite-difference verification can run
        # the composed graph at full precision; everything else works in
        # the storage dtype.
        batch = batch.astype(np.float32)
    if batch.ndim != 2 or batch.shape[1] % cfg.frame_size != 0:
        raise ContractError("batch must be (B, N) with N a multiple of frame_size")
    B, N = batch.shape
    frames = N // cfg.frame_size

    x = T.constant(batch.reshape(B, frames, cfg.frame_size))
    h = T.add(T.matmul(x, codec.enc_in1.w), codec.enc_in1.b)
    h = T.gelu(h)
    h = T.add(T.matmul(h, codec.enc_in2.w), codec.enc_in2.b)
    noise = cfg.noise
    if train and noise.p > 0.0 and noise.active[stage - 1]:
        if rng is None:
            raise ContractError("noise injection needs an rng")
        h = inject(h, noise, rng)
    h = stack_forward(h, codec.enc_stack)
    z = T.add(T.matmul(h, codec.enc_out.w), codec.enc_out.b)

    z_flat = T.reshape(z, (B * frames, cfg.code_dim))
    if stage == 1:
        # Tokens here are for the metrics columns only; the stage-1 loss
        # path never touches the codebook.
        tokens, _ = quantize(z_flat.data, codec.codebook)
        dec_in = z
    else:
        tokens, z_q = ste_quantize(z_flat, codec.codebook)
        dec_in = T.reshape(z_q, (B, frames, cfg.code_dim))

    wave = decode_training(codec, dec_in)
    return ForwardOut(wave=wave, z=z, z_flat=z_flat, tokens=tokens)


def decode_training(codec: Codec, dec_in: Tensor) -> Tensor:
    """Batched decoder graph: (B, frames, code_dim) -> (B, frames*frame_size).

    Lookahead is an output delay: `right` zero rows extend the lifted
    sequence and audio frame t is read from position t + right of the
    strictly causal stack, mirroring what the streaming session does one
    frame at a time.
    """
    cfg = codec.cfg
    B, frames, _ = dec_in.shape
    h = T.add(T.matmul(dec_in, codec.dec_in.w), codec.dec_in.b)
    right = cfg.dec_window.right
    if right:
        pad = T.constant(np.zeros((B, right, cfg.hidden_dim), dtype=np.float32))
        h = T.concat([h, pad], axis=1)
    h = stack_forward(h, codec.dec_stack)
    if right:
        h = T.slice_axis(h, 1, right, frames + right)
    out = T.add(T.matmul(h, codec.dec_out.w), codec.dec_out.b)
    return T.reshape(out, (B, frames * cfg.frame_size))


def logmel_frames(x, sample_rate: int) -> Tensor:
    """Log-mel rows at the discriminator's scale: (..., N) -> (rows, n_mels)."""
    m = mel_spectrogram(x, DISC_SCALE, sample_rate)
    lm = T.log(T.add(m, MEL_LOG_FLOOR))
    return T.reshape(lm, (-1, DISC_SCALE.n_mels))


@dataclass
class LossOut:
    loss: Tensor
    parts: dict[str, float]
    tokens: np.ndarray
    fake_logmel: Tensor | None = None
    real_logmel: np.ndarray | None = None


def stage_loss(codec: Codec, batch: np.ndarray, plan: StagePlan,
               rng: np.random.Generator | None = None,
               train: bool = True) -> LossOut:
    """Composite loss for one batch under the plan's stage and weights."""
    cfg = codec.cfg
    fwd = reconstruct(codec, batch, plan.stage, rng, train=train)
    mel = multiscale_mel_loss(batch, fwd.wave, default_scales(), cfg.sample_rate)
    parts = {"mel": float(mel.data), "vq": 0.0, "reg": 0.0,
             "adv": 0.0, "feat": 0.0}
    loss = T.mul(mel, plan.mel_weight)
    fake_logmel = None
    real_logmel = None

    if plan.stage == 1:
        reg = latent_reg(fwd.z)
        parts["reg"] = float(reg.data)
        loss = T.add(loss, T.mul(reg, plan.latent_weight))
    elif plan.stage == 2:
        z_q = T.gather_rows(codec.codebook.codes(), fwd.tokens)
        total, _, _ = vq_loss(fwd.z_flat, z_q)
        parts["vq"] = float(total.data)
        loss = T.add(loss, T.mul(total, plan.vq_weight))
    else:
        real_logmel = logmel_frames(batch, cfg.sample_rate).data
        fake_logmel = logmel_frames(fwd.wave, cfg.sample_rate)
        real_logits, real_feats = codec.disc.forward(T.constant(real_logmel))
        fake_logits, fake_feats = codec.disc.forward(fake_logmel)
        gen, _, feat = adv_losses(real_logits, fake_logits, real_feats, fake_feats)
        parts["adv"] = float(gen.data)
        parts["feat"] = float(feat.data)
        loss = T.add(loss, T.add(T.mul(gen, plan.adv_weight),
                                 T.mul(feat, plan.feat_weight)))

    if not np.isfinite(loss.data).all():
        raise ContractError(f"non-finite loss; components: {parts}")
    return LossOut(loss=loss, parts=parts, tokens=fwd.tokens,
                   fake_logmel=fake_logmel, real_logmel=real_logmel)


def train_step(codec: Codec, plan: StagePlan, batch: np.ndarray, lr: float,
               opt: AdamW, disc_opt: AdamW | None,
               rng: np.random.Generator) -> dict[str, float]:
    """One optimization step; returns the metrics record for the CSV."""
    opt.zero_grad()
    out = stage_loss(codec, batch, plan, rng, train=True)
    out.loss.backward()
    clip_global_norm(opt.params.values(), plan.grad_clip)
    opt.step(lr)

    disc_loss_val = 0.0
    if plan.stage == 3:
        if disc_opt is None:
            raise ContractError("stage 3 needs the discriminator optimizer")
        # The generator backward left gradients on discriminator parameters;
        # clear them, then train the discriminator against detached fakes.
        disc_opt.zero_grad()
        real_logits, _ = codec.disc.forward(T.constant(out.real_logmel))
        fake_logits, _ = codec.disc.forward(T.constant(out.fake_logmel.data))
        _, disc_loss, _ = adv_losses(real_logits, fake_logits, [], [])
        disc_loss.backward()
        clip_global_norm(disc_opt.params.values(), plan.grad_clip)
        disc_opt.step(lr)
        disc_loss_val = float(disc_loss.data)

    stats = usage_stats(out.tokens, codec.cfg.codebook_size)
    record = {"loss": float(out.loss.data), "lr": lr,
              "usage": stats.usage, "perplexity": stats.perplexity,
              "disc": disc_loss_val}
    record.update(out.parts)
    return record


class Trainer:
    """Runs one stage over an in-memory list of waveforms.

    Batches are random crops of crop_seconds, seeded once at construction;
    with noise p = 0 the whole run is bit-reproducible. Metrics go to a CSV
    with one row per step when a path is given.
    """

    def __init__(self, codec: Codec, waves: Sequence[np.ndarray],
                 plan: StagePlan, seed: int = 0):
        plan.validate()
        if not waves:
            raise ContractError("training needs at least one waveform")
        cfg = codec.cfg
        crop = int(round(plan.crop_seconds * cfg.sample_rate))
        crop -= crop % cfg.frame_size
        if crop < cfg.frame_size:
            raise ConfigError("crop_seconds shorter than one frame")
        self.codec = codec
        self.plan = plan
        self.crop_len = crop
        self.waves = [np.asarray(w, dtype=np.float32).reshape(-1) for w in waves]
        self.rng = np.random.default_rng(seed)

        trainable = codec.set_trainable(plan.trainable)
        self.disc_opt: AdamW | None = None
        if plan.stage == 3:
            for name, p in codec.params().items():
                if name.startswith("disc."):
                    p.requires_grad = True
                    p.grad = None
            disc_group = {k: v for k, v in codec.params().items()
                          if k.startswith("disc.")}
            trainable = {k: v for k, v in trainable.items()
                         if not k.startswith("disc.")}
            self.disc_opt = AdamW(disc_group)
        self.opt = AdamW(trainable)

    def sample_batch(self) -> np.ndarray:
        """(batch_size, crop_len) of random crops, zero-padded when short."""
        rows = np.zeros((self.plan.batch_size, self.crop_len), dtype=np.float32)
        idx = self.rng.integers(0, len(self.waves), size=self.plan.batch_size)
        for row, i in enumerate(idx):
            w = self.waves[i]
            if len(w) <= self.crop_len:
                rows[row, :len(w)] = w
            else:
                off = int(self.rng.integers(0, len(w) - self.crop_len + 1))
                rows[row] = w[off:off + self.crop_len]
        return rows

    def run(self, metrics_path: str | None = None,
            on_step: Callable[[int, dict], None] | None = None) -> list[dict]:
        """Train plan.steps steps; returns (and optionally writes) metrics."""
        sink: io.TextIOBase | None = None
        if metrics_path is not None:
            sink = open(metrics_path, "w", encoding="utf-8")
            sink.write(",".join(METRICS_FIELDS) + "\n")
        records = []
        try:
            for step in range(1, self.plan.steps + 1):
                lr = lr_at(step, self.plan.schedule)
                batch = self.sample_batch()
                rec = train_step(self.codec, self.plan, batch, lr,
                                 self.opt, self.disc_opt, self.rng)
                rec["step"] = step
                rec["stage"] = self.plan.stage
                records.append(rec)
                if sink is not None:
                    sink.write(format_metrics_row(rec) + "\n")
                if on_step is not None:
                    on_step(step, rec)
        finally:
            if sink is not None:
                sink.close()
        return records


def format_metrics_row(rec: dict) -> str:
    vals = []
    for name in METRICS_FIELDS:
        v = rec[name]
        vals.append(str(v) if isinstance(v, int) else f"{float(v):.10g}")
    return ",".join(vals)
