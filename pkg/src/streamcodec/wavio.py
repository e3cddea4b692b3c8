"""PCM16 mono WAV reading and writing.

Only the one encoding the rest of the package produces is accepted: 16-bit
signed little-endian samples, single channel. Values map to floats as
s / 32768 on read and back as rint(v * 32768) clipped to the int16 range on
write, a symmetric pair, so write(read(f)) reproduces f byte for byte and
full scale 1.0 still lands on 32767 via the clip.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import AudioError

SCALE = 32768.0


def wav_write(samples: np.ndarray, path: str, sample_rate: int) -> None:
    """Write mono PCM16; values are clamped to [-1, 1] before scaling."""
    if sample_rate <= 0:
        raise AudioError("sample rate must be positive")
    x = np.asarray(samples, dtype=np.float64).reshape(-1)
    pcm = np.clip(np.rint(np.clip(x, -1.0, 1.0) * SCALE), -32768, 32767)
    data = pcm.astype("<i2").tobytes()
    with open(path, "wb") as f:
        f.write(b"RIFF")
        f.write(struct.pack("<I", 36 + len(data)))
        f.write(b"WAVE")
        f.write(b"fmt ")
        f.write(struct.pack("<IHHIIHH", 16, 1, 1, sample_rate,
                            sample_rate * 2, 2, 16))
        f.write(b"data")
        f.write(struct.pack("<I", len(data)))
        f.write(data)


def wav_read(path: str) -> tuple[np.ndarray, int]:
    """Read mono PCM16; returns (float32 samples in [-1, 1), sample_rate)."""
    with open(path, "rb") as f:
        blob = f.read()

    def need(offset: int, count: int, what: str) -> bytes:
        if offset + count > len(blob):
            raise AudioError(f"truncated WAV while reading {what} "
                             f"(byte offset {offset})")
        return blob[offset:offset + count]

    if need(0, 4, "RIFF tag") != b"RIFF":
        raise AudioError("not a RIFF file (byte offset 0)")
    if need(8, 4, "WAVE tag") != b"WAVE":
        raise AudioError("not a WAVE file (byte offset 8)")

    pos = 12
    fmt = None
    data = None
    while pos + 8 <= len(blob):
        tag = need(pos, 4, "chunk tag")
        (size,) = struct.unpack("<I", need(pos + 4, 4, "chunk size"))
        body = need(pos + 8, size, f"chunk '{tag.decode('latin1')}'")
        if tag == b"fmt ":
            fmt = body
        elif tag == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None or data is None:
        raise AudioError("missing fmt or data chunk")
    if len(fmt) < 16:
        raise AudioError("fmt chunk too short")
    audio_format, channels, sample_rate, _, _, bits = struct.unpack(
        "<HHIIHH", fmt[:16])
    if audio_format != 1 or bits != 16:
        raise AudioError(f"unsupported encoding (format {audio_format}, "
                         f"{bits}-bit); only PCM16 is accepted")
    if channels != 1:
        raise AudioError(f"unsupported channel count {channels}; mono only")
    if len(data) % 2:
        raise AudioError("data chunk has an odd byte count")
    pcm = np.frombuffer(data, dtype="<i2")
    return (pcm.astype(np.float32) / SCALE), sample_rate
