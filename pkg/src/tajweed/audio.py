"""Audio loading and shaping: WAV input, resampling, duration normalization,
and the 4 s / 0.5 s sliding windows used by detection.

All operations are pure functions of their inputs (plus an explicit seed
where randomness is involved); clips are immutable and safe to share.

WAV support is deliberately narrow: RIFF/WAVE, PCM, 8-bit unsigned or
16-bit signed, 1-2 channels, sample rate >= 1000 Hz.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CorruptHeader, InvalidRate, NotFound, UnsupportedFormat

MIN_SAMPLE_RATE_HZ = 1000


@dataclass(frozen=True)
class AudioClip:
    """Mono PCM samples in [-1, 1] at a known sample rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        if self.samples.ndim != 1:
            raise ValueError("AudioClip samples must be one-dimensional")
        if self.sample_rate_hz < 1:
            raise ValueError("sample_rate_hz must be positive")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def __len__(self) -> int:
        return len(self.samples)


def load_wav(path) -> AudioClip:
    """Read a PCM WAV file as a mono clip scaled to [-1, 1].

    Stereo files are averaged per-sample. The file's sample rate is kept.
    Raises NotFound, UnsupportedFormat, or CorruptHeader.
    """
    if not os.path.isfile(path):
        raise NotFound(f"no such audio file: {path}")
    with open(path, "rb") as fh:
        data = fh.read()

    if len(data) < 12:
        raise CorruptHeader(f"{path}: truncated RIFF header")
    if data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise CorruptHeader(f"{path}: not a RIFF/WAVE file")
    riff_size = struct.unpack_from("<I", data, 4)[0]
    if riff_size + 8 > len(data):
        raise CorruptHeader(f"{path}: RIFF size exceeds file length")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        chunk_size = struct.unpack_from("<I", data, pos + 4)[0]
        body_start = pos + 8
        if body_start + chunk_size > len(data):
            raise CorruptHeader(f"{path}: chunk {chunk_id!r} overruns file")
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise CorruptHeader(f"{path}: fmt chunk too small")
            fmt = struct.unpack_from("<HHIIHH", data, body_start)
        elif chunk_id == b"data":
            payload = data[body_start:body_start + chunk_size]
        # chunks are word-aligned; odd sizes carry a pad byte
        pos = body_start + chunk_size + (chunk_size & 1)

    if fmt is None or payload is None:
        raise CorruptHeader(f"{path}: missing fmt or data chunk")
    audio_format, channels, rate, _byte_rate, block_align, bits = fmt
    if audio_format != 1:
        raise UnsupportedFormat(f"{path}: only PCM is supported (format tag {audio_format})")
    if channels not in (1, 2):
        raise UnsupportedFormat(f"{path}: {channels} channels (expected 1 or 2)")
    if bits not in (8, 16):
        raise UnsupportedFormat(f"{path}: {bits}-bit samples (expected 8 or 16)")
    if rate < MIN_SAMPLE_RATE_HZ:
        raise UnsupportedFormat(f"{path}: sample rate {rate} Hz below {MIN_SAMPLE_RATE_HZ}")
    frame_bytes = channels * bits // 8
    if block_align != frame_bytes:
        raise CorruptHeader(f"{path}: block align {block_align} != {frame_bytes}")
    if len(payload) % frame_bytes != 0:
        raise CorruptHeader(f"{path}: data chunk not a whole number of frames")
    if len(payload) == 0:
        raise CorruptHeader(f"{path}: empty data chunk")

    if bits == 16:
        raw = np.frombuffer(payload, dtype="<i2").astype(np.float64) / 32768.0
    else:
        raw = (np.frombuffer(payload, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    if channels == 2:
        raw = raw.reshape(-1, 2).mean(axis=1)
    return AudioClip(np.clip(raw, -1.0, 1.0), int(rate))


def write_wav(path, clip: AudioClip) -> None:
    """Write a clip as 16-bit PCM mono WAV (scale matches load_wav)."""
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = pcm.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH", 16, 1, 1, clip.sample_rate_hz, clip.sample_rate_hz * 2, 2, 16
    )
    header += b"data" + struct.pack("<I", len(payload))
    with open(path, "wb") as fh:
        fh.write(header + payload)


def _lowpass_taps(cutoff_hz: float, rate_hz: int, n_taps: int = 63) -> np.ndarray:
    """Hamming-windowed-sinc FIR low-pass, DC gain normalized to 1."""
    mid = (n_taps - 1) / 2
    t = np.arange(n_taps) - mid
    taps = 2.0 * cutoff_hz / rate_hz * np.sinc(2.0 * cutoff_hz / rate_hz * t)
    taps *= 0.54 - 0.46 * np.cos(2.0 * np.pi * np.arange(n_taps) / (n_taps - 1))
    return taps / taps.sum()


def resample(clip: AudioClip, target_hz: int) -> AudioClip:
    """Resample by linear interpolation; decimation applies a 63-tap
    anti-alias low-pass (cutoff 0.45 x target rate) first.
    """
    if target_hz < MIN_SAMPLE_RATE_HZ:
        raise InvalidRate(f"target rate {target_hz} Hz below {MIN_SAMPLE_RATE_HZ}")
    if target_hz == clip.sample_rate_hz:
        return clip

    samples = clip.samples
    if target_hz < clip.sample_rate_hz:
        taps = _lowpass_taps(0.45 * target_hz, clip.sample_rate_hz)
        samples = np.convolve(samples, taps, mode="same")

    n_out = int(round(len(samples) * target_hz / clip.sample_rate_hz))
    n_out = max(n_out, 1)
    t_out = np.arange(n_out) / target_hz
    t_in = np.arange(len(samples)) / clip.sample_rate_hz
    out = np.interp(t_out, t_in, samples)
    return AudioClip(np.clip(out, -1.0, 1.0), int(target_hz))


def normalize_duration(clip: AudioClip, target_s: float = 4.0, *, seed: int) -> AudioClip:
    """Force a clip to exactly round(target_s * rate) samples.

    Shorter clips get trailing zeros; longer clips keep one contiguous
    segment whose start offset is drawn uniformly with the given seed.
    """
    n_target = int(round(target_s * clip.sample_rate_hz))
    n = len(clip.samples)
    if n == n_target:
        return clip
    if n < n_target:
        padded = np.zeros(n_target)
        padded[:n] = clip.samples
        return AudioClip(padded, clip.sample_rate_hz)
    rng = np.random.default_rng(seed)
    start = int(rng.integers(0, n - n_target + 1))
    return AudioClip(clip.samples[start:start + n_target].copy(), clip.sample_rate_hz)


def slide_windows(clip: AudioClip, window_s: float = 4.0, stride_s: float = 0.5):
    """Fixed-length windows at offsets 0, stride, 2*stride, ... while the
    window still fits. A clip shorter than one window yields a single
    zero-padded window at offset 0.

    Returns a list of (offset_s, AudioClip) pairs.
    """
    if window_s <= 0 or stride_s <= 0:
        raise ValueError("window_s and stride_s must be positive")
    rate = clip.sample_rate_hz
    window_n = int(round(window_s * rate))
    stride_n = int(round(stride_s * rate))
    n = len(clip.samples)

    if n < window_n:
        padded = np.zeros(window_n)
        padded[:n] = clip.samples
        return [(0.0, AudioClip(padded, rate))]

    windows = []
    start = 0
    while start + window_n <= n:
        windows.append((start / rate, AudioClip(clip.samples[start:start + window_n].copy(), rate)))
        start += stride_n
    return windows
