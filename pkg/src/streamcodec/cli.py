"""Command-line interface.

One subcommand per workflow: corpus generation, staged training, offline
encode/decode, a roundtrip with metrics, the noise-attenuation verifier, the
Zipf analyzer, the gradient checker, and a streaming-equivalence check.

Token files are plain text, one utterance per line, space-separated decimal
ids. Every failure exits nonzero after printing exactly one line of the form
"<category>: <message>" to stderr.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .codec import Codec, StreamSession, bitrate, latency_samples
from .config import (load_corpus_spec, load_train_config, model_from_dict,
                     model_to_dict)
from .corpus import gen_corpus, load_corpus
from .errors import ConfigError, ContractError, ParseError, StreamcodecError
from .gradcheck import run_composite, run_suite
from .noise import NOISE_MODELS, mc_verify
from .quantizer import usage_stats
from .spectral import default_scales, multiscale_mel_loss, snr_db
from .tokenstats import ngram_counts, normalized_curve, rank_curve, zipf_fit
from .training import Trainer
from .wavio import wav_read, wav_write

# Fixed evaluation points for verify-prop1, matching the scale of the
# closed-form's interesting region.
VERIFY_OMEGA_NORMS = (0.5, 1.0, 2.0, 4.0)
VERIFY_SEED = 20240801

OP_TOLERANCE = 1e-4
COMPOSITE_TOLERANCE = 1e-3


def _fmt(v: float) -> str:
    return f"{float(v):.10g}"


def _load_codec(path: str) -> tuple[Codec, dict]:
    tensors, metadata = load_checkpoint(path)
    if "model" not in metadata:
        raise ParseError("checkpoint metadata lacks the model block")
    cfg = model_from_dict(metadata["model"], path="checkpoint.model")
    codec = Codec(cfg, seed=0)
    codec.load_tensors(tensors)
    return codec, metadata


def _read_wave(path: str, expected_rate: int) -> np.ndarray:
    wave, rate = wav_read(path)
    if rate != expected_rate:
        raise ConfigError(f"{path} is sampled at {rate} Hz, "
                          f"model expects {expected_rate}")
    return wave


def _read_token_lines(path: str) -> list[np.ndarray]:
    streams = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                streams.append(np.array([int(t) for t in line.split()],
                                        dtype=np.int64))
            except ValueError:
                raise ParseError(f"{path} line {lineno}: tokens must be "
                                 "space-separated decimal integers")
    return streams


def _cmd_gen_corpus(args) -> int:
    spec = load_corpus_spec(args.spec)
    paths = gen_corpus(spec, args.out)
    print(f"wrote {len(paths)} utterances to {args.out}")
    return 0


def _cmd_train(args) -> int:
    tc = load_train_config(args.config)
    stage = args.stage
    if stage not in tc.stages:
        raise ConfigError(f"config has no plan for stage {stage}")
    waves = load_corpus(args.data, expected_rate=tc.model.sample_rate)
    stages_done: list[int] = []
    if args.ckpt_in:
        codec, metadata = _load_codec(args.ckpt_in)
        if model_to_dict(codec.cfg) != model_to_dict(tc.model):
            raise ConfigError("checkpoint model differs from config model")
        stages_done = list(metadata.get("stages_done", []))
    else:
        codec = Codec(tc.model, seed=tc.seed)
    trainer = Trainer(codec, waves, tc.stages[stage], seed=tc.seed * 4 + stage)
    records = trainer.run(metrics_path=args.metrics)
    metadata = {"model": model_to_dict(tc.model),
                "stages_done": stages_done + [stage],
                "seed": tc.seed}
    save_checkpoint(codec.all_tensors(), metadata, args.ckpt_out)
    last = records[-1]
    print(f"stage {stage} done: {len(records)} steps, "
          f"final loss {_fmt(last['loss'])}, mel {_fmt(last['mel'])}, "
          f"usage {_fmt(last['usage'])}")
    return 0


def _cmd_encode(args) -> int:
    codec, _ = _load_codec(args.ckpt)
    wave = _read_wave(args.in_path, codec.cfg.sample_rate)
    tokens, _ = codec.encode(wave)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(" ".join(str(int(t)) for t in tokens) + "\n")
    print(f"encoded {len(wave)} samples to {len(tokens)} tokens")
    return 0


def _cmd_decode(args) -> int:
    codec, _ = _load_codec(args.ckpt)
    streams = _read_token_lines(args.in_path)
    if not streams:
        raise ParseError(f"{args.in_path} holds no token lines")
    parts = [codec.decode(s) for s in streams]
    wave = np.concatenate(parts)
    wav_write(wave, args.out, codec.cfg.sample_rate)
    print(f"decoded {sum(map(len, streams))} tokens to {len(wave)} samples")
    return 0


def _cmd_roundtrip(args) -> int:
    codec, _ = _load_codec(args.ckpt)
    cfg = codec.cfg
    wave = _read_wave(args.in_path, cfg.sample_rate)
    tokens, _ = codec.encode(wave)
    decoded = codec.decode(tokens)[:len(wave)]
    wav_write(decoded, args.out, cfg.sample_rate)
    snr = snr_db(wave, decoded)
    mel = float(multiscale_mel_loss(wave[None, :], decoded[None, :],
                                    default_scales(), cfg.sample_rate).data)
    usage = usage_stats(tokens, cfg.codebook_size).usage
    with open(args.metrics, "w", encoding="utf-8") as f:
        f.write("snr_db,mel_distance,usage,bitrate\n")
        f.write(",".join(_fmt(v) for v in (snr, mel, usage, bitrate(cfg))) + "\n")
    print(f"roundtrip: snr {_fmt(snr)} dB, mel {_fmt(mel)}, "
          f"usage {_fmt(usage)}, bitrate {_fmt(bitrate(cfg))} bps")
    return 0


def _cmd_verify_prop1(args) -> int:
    if args.model not in NOISE_MODELS:
        raise ConfigError(f"model must be one of {NOISE_MODELS}")
    if args.dim < 1:
        raise ConfigError("dim must be positive")
    rng = np.random.default_rng(VERIFY_SEED)
    x = rng.uniform(-1.0, 1.0, args.dim)
    lines = ["omega_norm,p,sigma,model,analytic,mc_mean,mc_stderr,n"]
    for norm in VERIFY_OMEGA_NORMS:
        omega = np.zeros(args.dim)
        omega[0] = norm
        row = mc_verify(args.p, args.sigma, omega, 0.0, x,
                        args.samples, args.model, rng)
        lines.append(",".join([_fmt(row.omega_norm), _fmt(row.p),
                               _fmt(row.sigma), row.model, _fmt(row.analytic),
                               _fmt(row.mc_mean), _fmt(row.mc_stderr),
                               str(row.n)]))
    with open(args.out, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    print(f"verified {len(VERIFY_OMEGA_NORMS)} points, wrote {args.out}")
    return 0


def _parse_order_range(text: str) -> range:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return range(int(lo), int(hi) + 1)
    n = int(text)
    return range(n, n + 1)


def _cmd_zipf(args) -> int:
    try:
        orders = _parse_order_range(args.n)
    except ValueError:
        raise ConfigError(f"--n must be an integer or A..B, got {args.n!r}")
    streams = []
    for path in args.tokens:
        streams.extend(_read_token_lines(path))
    if not streams:
        raise ParseError("no token lines found in the given files")
    csv_lines = ["n,rank,count,x_norm,y_norm"]
    fit_lines = ["n,s,intercept,r2"]
    for n in orders:
        curve = rank_curve(ngram_counts(streams, n), drop_hapax=args.drop_hapax)
        if len(curve) >= 2:
            norm = normalized_curve(curve)
        else:
            norm = [("", "")] * len(curve)
        for (rank, count), (x, y) in zip(curve.entries, norm):
            xs = _fmt(x) if x != "" else ""
            ys = _fmt(y) if y != "" else ""
            csv_lines.append(f"{n},{rank},{_fmt(count)},{xs},{ys}")
        if len(curve) >= 3:
            fit = zipf_fit(curve)
            fit_lines.append(f"{n},{_fmt(fit.s)},{_fmt(fit.intercept)},"
                             f"{_fmt(fit.r2)}")
    with open(args.out, "w", encoding="utf-8") as f:
        f.write("\n".join(csv_lines) + "\n")
    print("\n".join(fit_lines))
    return 0


def _cmd_gradcheck(args) -> int:
    results = run_suite(args.seed)
    for name in sorted(results):
        print(f"{name} {results[name]:.3e}")
    composite = run_composite(args.seed)
    print(f"composite {composite:.3e}")
    worst = max(results.values())
    if worst >= OP_TOLERANCE or composite >= COMPOSITE_TOLERANCE:
        raise ContractError(f"gradcheck failed: worst op {worst:.3e}, "
                            f"composite {composite:.3e}")
    print(f"gradcheck ok: worst op {worst:.3e}, composite {composite:.3e}")
    return 0


def _cmd_stream_check(args) -> int:
    codec, _ = _load_codec(args.ckpt)
    wave = _read_wave(args.in_path, codec.cfg.sample_rate)
    tokens_off, _ = codec.encode(wave)
    audio_off = codec.decode(tokens_off)

    session = StreamSession(codec)
    chunks = []
    for i in range(len(wave)):
        session.push(wave[i:i + 1])
        chunks.append(session.pull())
    session.close()
    chunks.append(session.pull())
    audio_stream = np.concatenate(chunks)
    tokens_stream = np.asarray(session.tokens, dtype=np.int64)

    if not np.array_equal(tokens_stream, tokens_off):
        raise ContractError("streaming tokens differ from offline tokens")
    if audio_stream.shape != audio_off.shape:
        raise ContractError("streaming decode length differs from offline")
    max_abs = float(np.max(np.abs(audio_stream - audio_off))) if len(wave) else 0.0
    if max_abs >= 1e-5:
        raise ContractError(f"streaming decode deviates by {max_abs:.3e}")
    print(f"stream-check ok: {len(tokens_off)} tokens exact, "
          f"max-abs {max_abs:.3e}, latency {latency_samples(codec.cfg)} samples")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="streamcodec",
                                description="streaming neural audio codec")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-corpus", help="synthesize a deterministic corpus")
    g.add_argument("--spec", required=True, help="CorpusSpec JSON")
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(fn=_cmd_gen_corpus)

    t = sub.add_parser("train", help="run one training stage")
    t.add_argument("--config", required=True, help="train config JSON")
    t.add_argument("--stage", required=True, type=int, choices=(1, 2, 3))
    t.add_argument("--data", required=True, help="directory of utt_*.wav")
    t.add_argument("--ckpt-in", dest="ckpt_in", default=None)
    t.add_argument("--ckpt-out", dest="ckpt_out", required=True)
    t.add_argument("--metrics", required=True, help="per-step metrics CSV")
    t.set_defaults(fn=_cmd_train)

    e = sub.add_parser("encode", help="waveform to token line")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--in", dest="in_path", required=True, help="input WAV")
    e.add_argument("--out", required=True, help="output token file")
    e.set_defaults(fn=_cmd_encode)

    d = sub.add_parser("decode", help="token lines to waveform")
    d.add_argument("--ckpt", required=True)
    d.add_argument("--in", dest="in_path", required=True, help="token file")
    d.add_argument("--out", required=True, help="output WAV")
    d.set_defaults(fn=_cmd_decode)

    r = sub.add_parser("roundtrip", help="encode+decode with metrics")
    r.add_argument("--ckpt", required=True)
    r.add_argument("--in", dest="in_path", required=True, help="input WAV")
    r.add_argument("--out", required=True, help="reconstructed WAV")
    r.add_argument("--metrics", required=True, help="metrics CSV")
    r.set_defaults(fn=_cmd_roundtrip)

    v = sub.add_parser("verify-prop1",
                       help="Monte-Carlo check of the noise attenuation law")
    v.add_argument("--p", type=float, required=True)
    v.add_argument("--sigma", type=float, required=True)
    v.add_argument("--dim", type=int, required=True)
    v.add_argument("--model", required=True, choices=NOISE_MODELS)
    v.add_argument("--samples", type=int, required=True)
    v.add_argument("--out", required=True, help="output CSV")
    v.set_defaults(fn=_cmd_verify_prop1)

    z = sub.add_parser("zipf", help="n-gram rank-frequency analysis")
    z.add_argument("--tokens", nargs="+", required=True, help="token files")
    z.add_argument("--n", default="1..6", help="order or range A..B")
    z.add_argument("--drop-hapax", dest="drop_hapax", action="store_true")
    z.add_argument("--out", required=True, help="curve CSV")
    z.set_defaults(fn=_cmd_zipf)

    c = sub.add_parser("gradcheck", help="finite-difference gradient check")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(fn=_cmd_gradcheck)

    s = sub.add_parser("stream-check",
                       help="verify streaming matches offline on a file")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--in", dest="in_path", required=True, help="input WAV")
    s.set_defaults(fn=_cmd_stream_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except StreamcodecError as e:
        print(f"{e.category}: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"io-error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
