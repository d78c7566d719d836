"""Framing, pitch tracking, voicing and per-frame acoustic descriptors.

Every function here is a pure function of its arguments. Times are in
seconds, levels in dB, and audio amplitudes are normalized to [-1, 1].
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.io import wavfile

from . import _kernels

DEFAULT_FRAME_LEN = 0.025
DEFAULT_HOP = 0.010
DEFAULT_F0_MIN = 60.0
DEFAULT_F0_MAX = 500.0
VOICING_THRESHOLD = 0.45
LOUDNESS_FLOOR_DB = -80.0
HNR_CLAMP_DB = 60.0
PAUSE_DB_THRESHOLD = -50.0
MIN_PAUSE = 0.150
ALPHA_LOW_BAND = (50.0, 1000.0)
ALPHA_HIGH_BAND = (1000.0, 5000.0)


class AudioError(ValueError):
    """Raised for unreadable, unsupported or empty audio."""


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise AudioError(f"audio must be mono (1-D), got shape {samples.shape}")
        if int(self.sample_rate) <= 0:
            raise AudioError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class FrameTrack:
    values: np.ndarray
    frame_len: float
    hop: float
    start_offset: float = 0.0

    def __len__(self) -> int:
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        """Start time of every frame."""
        return self.start_offset + np.arange(len(self)) * self.hop


@dataclass(frozen=True)
class F0Track:
    f0_hz: np.ndarray
    voicing: np.ndarray
    hop: float
    frame_len: float = DEFAULT_FRAME_LEN
    threshold: float = VOICING_THRESHOLD
    f0_min: float = DEFAULT_F0_MIN
    f0_max: float = DEFAULT_F0_MAX

    def __len__(self) -> int:
        return len(self.f0_hz)

    @property
    def voiced(self) -> np.ndarray:
        return self.f0_hz > 0


@dataclass(frozen=True)
class VoicedSegment:
    start: float
    end: float
    kind: str  # "voiced" | "unvoiced" | "pause"

    @property
    def duration(self) -> float:
        return self.end - self.start


class PeriodList(NamedTuple):
    periods: np.ndarray
    amplitudes: np.ndarray
    onsets: np.ndarray
    onset_index: np.ndarray
    onset_frac: np.ndarray
    chain: np.ndarray  # id of the unbroken pulse chain each period belongs to


# ---------------------------------------------------------------------------
# I/O


def read_wav(path) -> AudioBuffer:
    """Read a PCM or float WAV file as a mono buffer normalized to [-1, 1].

    Multichannel audio is downmixed by averaging channels.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"audio file not found: {path}")
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise AudioError(f"{path}: not a supported WAV file ({exc})") from exc
    if data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        # 24-bit data arrives left-justified in int32
        x = data.astype(np.float64) / 2147483648.0
    elif data.dtype == np.int64:
        x = data.astype(np.float64) / 9223372036854775808.0
    elif data.dtype.kind == "f":
        x = np.clip(data.astype(np.float64), -1.0, 1.0)
    else:
        raise AudioError(f"{path}: unsupported sample type {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.shape[0] == 0:
        raise AudioError(f"{path}: zero-length audio")
    return AudioBuffer(x, int(rate))


def write_wav(path, audio: AudioBuffer, bits: int = 16) -> None:
    """Write ``audio`` as 16/32-bit PCM (``bits=16|32``) or 32-bit float (``bits=-32``)."""
    x = np.clip(audio.samples, -1.0, 1.0)
    if bits == 16:
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype(np.int16)
    elif bits == 32:
        data = np.clip(np.round(x * 2147483648.0), -2147483648, 2147483647).astype(np.int32)
    elif bits == -32:
        data = x.astype(np.float32)
    else:
        raise ValueError(f"unsupported bit depth {bits}")
    wavfile.write(os.fspath(path), audio.sample_rate, data)


# ---------------------------------------------------------------------------
# framing


def frame_params(sample_rate: int, frame_len: float, hop: float) -> tuple[int, int]:
    """Frame length and hop in samples."""
    if hop <= 0 or frame_len < hop:
        raise ValueError(f"need frame_len >= hop > 0, got frame_len={frame_len}, hop={hop}")
    frame_n = int(round(frame_len * sample_rate))
    hop_n = int(round(hop * sample_rate))
    if hop_n < 1:
        raise ValueError(f"hop of {hop} s is below one sample at {sample_rate} Hz")
    return frame_n, hop_n


def frame_signal(audio: AudioBuffer, frame_len: float = DEFAULT_FRAME_LEN, hop: float = DEFAULT_HOP) -> np.ndarray:
    """Split audio into overlapping frames, dropping the last partial window.

    Returns an array of shape ``(n_frames, frame_samples)``.
    """
    frame_n, hop_n = frame_params(audio.sample_rate, frame_len, hop)
    n = len(audio)
    if n < frame_n:
        raise AudioError(f"audio of {n} samples is shorter than one frame ({frame_n} samples)")
    n_frames = (n - frame_n) // hop_n + 1
    windows = np.lib.stride_tricks.sliding_window_view(audio.samples, frame_n)
    return np.ascontiguousarray(windows[: (n_frames - 1) * hop_n + 1 : hop_n])


def _n_frames(audio: AudioBuffer, frame_len: float, hop: float) -> int:
    frame_n, hop_n = frame_params(audio.sample_rate, frame_len, hop)
    return 0 if len(audio) < frame_n else (len(audio) - frame_n) // hop_n + 1


# ---------------------------------------------------------------------------
# pitch


def _parabolic(y_left: float, y_mid: float, y_right: float) -> tuple[float, float]:
    den = y_left - 2.0 * y_mid + y_right
    if den >= 0.0:
        return 0.0, y_mid
    delta = 0.5 * (y_left - y_right) / den
    return delta, y_mid - 0.25 * (y_left - y_right) * delta


def _pick_lag(row: np.ndarray, octave_ratio: float = 0.9) -> tuple[int, float, float]:
    """Choose the shortest-lag local maximum within ``octave_ratio`` of the best one.

    Returns ``(index, fractional offset, interpolated value)``; index -1 means no peak.
    """
    inner = row[1:-1]
    is_peak = (inner >= row[:-2]) & (inner > row[2:]) & (inner > 0)
    peaks = np.flatnonzero(is_peak) + 1
    if peaks.size == 0:
        return -1, 0.0, 0.0
    best = row[peaks].max()
    k = int(peaks[np.argmax(row[peaks] >= octave_ratio * best)])
    delta, value = _parabolic(row[k - 1], row[k], row[k + 1])
    return k, delta, value


def estimate_f0(
    audio: AudioBuffer,
    f0_min: float = DEFAULT_F0_MIN,
    f0_max: float = DEFAULT_F0_MAX,
    frame_len: float = DEFAULT_FRAME_LEN,
    hop: float = DEFAULT_HOP,
    threshold: float = VOICING_THRESHOLD,
) -> F0Track:
    """Frame-wise pitch from the normalized autocorrelation peak.

    The peak lag is refined by parabolic interpolation and the interpolated
    correlation value is the voicing strength; frames below ``threshold``
    are unvoiced and carry f0 = 0.
    """
    if not 0 < f0_min < f0_max:
        raise ValueError(f"invalid pitch range [{f0_min}, {f0_max}]")
    sr = audio.sample_rate
    if sr <= 2 * f0_max:
        raise ValueError(f"sample rate {sr} Hz too low for f0_max={f0_max} Hz")
    frames = frame_signal(audio, frame_len, hop)
    frame_n = frames.shape[1]
    lag_min = max(int(np.floor(sr / f0_max)) - 1, 1)
    lag_max = int(np.ceil(sr / f0_min)) + 1
    if lag_max >= frame_n:
        raise ValueError(f"frame of {frame_len} s is too short for f0_min={f0_min} Hz")
    acf = _kernels.nccf(frames, lag_min, lag_max)
    n = frames.shape[0]
    f0 = np.zeros(n)
    voicing = np.zeros(n)
    for t in range(n):
        k, delta, value = _pick_lag(acf[t])
        if k < 0:
            continue
        v = min(max(value, 0.0), 1.0)
        voicing[t] = v
        if v >= threshold:
            f0[t] = min(max(sr / (lag_min + k + delta), f0_min), f0_max)
    return F0Track(f0, voicing, hop, frame_len, threshold, f0_min, f0_max)


# ---------------------------------------------------------------------------
# cycle-level perturbation


def _frame_cells(n_frames: int, frame_n: int, hop_n: int, n_samples: int) -> np.ndarray:
    """Sample boundaries of the hop-wide cell centred on each frame."""
    off = (frame_n - hop_n) // 2
    bounds = off + np.arange(n_frames + 1) * hop_n
    bounds[0] = 0
    bounds[-1] = max(n_samples, bounds[-1]) if n_frames else 0
    return bounds


def boolean_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open index runs where ``mask`` is true."""
    padded = np.r_[False, mask.astype(bool), False]
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return list(zip(edges[::2].tolist(), edges[1::2].tolist()))


def extract_periods(audio: AudioBuffer, f0: F0Track) -> PeriodList:
    """Glottal periods and peak amplitudes inside voiced regions.

    Pulses are chained by searching for the next positive peak 0.7 to 1.3
    local periods after the current one; each period carries the amplitude
    of its opening pulse. When no positive peak follows, the chain ends and
    the search restarts further on; periods never span two chains.
    """
    frame_n, hop_n = frame_params(audio.sample_rate, f0.frame_len, f0.hop)
    n_frames = len(f0)
    empty = PeriodList(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0, dtype=np.int64))
    runs = boolean_runs(f0.f0_hz > 0)
    if not runs:
        return empty
    cells = _frame_cells(n_frames, frame_n, hop_n, len(audio))
    starts = np.array([cells[a] for a, _ in runs], dtype=np.int64)
    ends = np.array([min(cells[b], len(audio)) for _, b in runs], dtype=np.int64)
    sample_frame = np.clip((np.arange(len(audio)) - (frame_n - hop_n) // 2) // hop_n, 0, n_frames - 1)
    f0_per_sample = f0.f0_hz[sample_frame]
    period = np.where(f0_per_sample > 0, audio.sample_rate / np.where(f0_per_sample > 0, f0_per_sample, 1.0), 0.0)
    idx, frac, amp, chain = _kernels.pick_pulses(audio.samples, starts, ends, period)
    if idx.size < 2:
        return empty
    same = chain[1:] == chain[:-1]
    steps = (idx[1:] - idx[:-1]) + (frac[1:] - frac[:-1])
    periods = steps[same] / audio.sample_rate
    amplitudes = np.maximum(amp[:-1][same], 0.0)
    onset_index = idx[:-1][same]
    onset_frac = frac[:-1][same]
    onsets = (onset_index + onset_frac) / audio.sample_rate
    return PeriodList(periods, amplitudes, onsets, onset_index, onset_frac, chain[:-1][same])


def jitter_local(periods) -> float:
    """Mean absolute difference of consecutive periods over the mean period."""
    p = np.asarray(periods, dtype=np.float64)
    if p.size < 2:
        return 0.0
    mean = p.mean()
    if mean <= 0:
        return 0.0
    return float(np.abs(np.diff(p)).mean() / mean)


def jitter_ppq5(periods) -> float:
    """Five-point period perturbation quotient."""
    p = np.asarray(periods, dtype=np.float64)
    if p.size < 5:
        return 0.0
    mean = p.mean()
    if mean <= 0:
        return 0.0
    local = np.convolve(p, np.ones(5) / 5.0, mode="valid")
    return float(np.abs(p[2:-2] - local).mean() / mean)


def shimmer_local(amplitudes) -> float:
    """Mean absolute difference of consecutive amplitudes over the mean amplitude."""
    a = np.asarray(amplitudes, dtype=np.float64)
    if a.size < 2:
        return 0.0
    mean = a.mean()
    if mean <= 0:
        return 0.0
    return float(np.abs(np.diff(a)).mean() / mean)


def shimmer_db(amplitudes) -> float:
    """Mean absolute dB ratio of consecutive amplitudes; pairs with a zero amplitude are skipped."""
    a = np.asarray(amplitudes, dtype=np.float64)
    if a.size < 2:
        return 0.0
    prev, cur = a[:-1], a[1:]
    ok = (prev > 0) & (cur > 0)
    if not ok.any():
        return 0.0
    return float(np.abs(20.0 * np.log10(cur[ok] / prev[ok])).mean())


# ---------------------------------------------------------------------------
# frame descriptors


def _nccf_at(frame: np.ndarray, lag: int) -> float:
    a = frame[: frame.shape[0] - lag]
    b = frame[lag:]
    den = np.sqrt(np.dot(a, a) * np.dot(b, b))
    return float(np.dot(a, b) / den) if den > 1e-20 else 0.0


def hnr(frame, f0_hz: float, sample_rate: int) -> float:
    """Harmonics-to-noise ratio in dB from the autocorrelation at the pitch lag.

    The correlation is read at the rounded lag and, when that lag is a local
    maximum, refined to the parabolic peak value. Clamped to +-60 dB.
    """
    if f0_hz <= 0:
        raise ValueError("hnr is undefined for unvoiced frames (f0 <= 0)")
    frame = np.asarray(frame, dtype=np.float64)
    lag = int(round(sample_rate / f0_hz))
    if lag < 1 or lag + 1 >= frame.shape[0]:
        raise ValueError(f"pitch lag {lag} does not fit a frame of {frame.shape[0]} samples")
    r_mid = _nccf_at(frame, lag)
    r = r_mid
    if lag >= 2:
        r_left = _nccf_at(frame, lag - 1)
        r_right = _nccf_at(frame, lag + 1)
        if r_mid >= r_left and r_mid >= r_right:
            r = _parabolic(r_left, r_mid, r_right)[1]
    return hnr_from_r(r)


def hnr_from_r(r: float) -> float:
    if r <= 0.0:
        return -HNR_CLAMP_DB
    if r >= 1.0:
        return HNR_CLAMP_DB
    return float(np.clip(10.0 * np.log10(r / (1.0 - r)), -HNR_CLAMP_DB, HNR_CLAMP_DB))


def loudness(frame) -> float:
    """RMS level in dB, floored at -80 dB."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.size == 0:
        raise ValueError("empty frame")
    rms = np.sqrt(np.mean(frame * frame))
    if rms <= 0:
        return LOUDNESS_FLOOR_DB
    return float(max(20.0 * np.log10(rms), LOUDNESS_FLOOR_DB))


def alpha_ratio(frame, sample_rate: int) -> float:
    """Energy ratio (dB) of the 1-5 kHz band to the 50-1000 Hz band of the Hann-windowed frame."""
    if sample_rate < 10000:
        raise ValueError(f"alpha ratio needs a sample rate of at least 10 kHz, got {sample_rate}")
    frame = np.asarray(frame, dtype=np.float64)
    n = frame.shape[0]
    power = np.abs(np.fft.rfft(frame * np.hanning(n))) ** 2
    freqs = np.arange(power.shape[0]) * sample_rate / n
    low = power[(freqs >= ALPHA_LOW_BAND[0]) & (freqs < ALPHA_LOW_BAND[1])].sum()
    high = power[(freqs >= ALPHA_HIGH_BAND[0]) & (freqs < ALPHA_HIGH_BAND[1])].sum()
    eps = np.finfo(np.float64).eps
    return float(10.0 * np.log10(max(high, eps) / max(low, eps)))


def loudness_track(audio: AudioBuffer, frame_len: float = DEFAULT_FRAME_LEN, hop: float = DEFAULT_HOP) -> FrameTrack:
    frames = frame_signal(audio, frame_len, hop)
    rms = np.sqrt(np.mean(frames * frames, axis=1))
    with np.errstate(divide="ignore"):
        db = np.where(rms > 0, 20.0 * np.log10(np.where(rms > 0, rms, 1.0)), LOUDNESS_FLOOR_DB)
    return FrameTrack(np.maximum(db, LOUDNESS_FLOOR_DB), frame_len, hop)


# ---------------------------------------------------------------------------
# segmentation


def frame_kinds(
    f0: F0Track,
    loudness: FrameTrack,
    pause_db_threshold: float = PAUSE_DB_THRESHOLD,
    min_pause: float = MIN_PAUSE,
) -> np.ndarray:
    """Per-frame class: 0 unvoiced, 1 voiced, 2 pause."""
    kinds = np.where(f0.f0_hz > 0, 1, 0)
    silent = np.asarray(loudness.values) < pause_db_threshold
    for a, b in boolean_runs(silent):
        if (b - a) * f0.hop >= min_pause - 1e-9:
            kinds[a:b] = 2
    return kinds


def segment_voicing(
    f0: F0Track,
    loudness: FrameTrack,
    pause_db_threshold: float = PAUSE_DB_THRESHOLD,
    min_pause: float = MIN_PAUSE,
    duration: float | None = None,
) -> list[VoicedSegment]:
    """Tile the utterance into voiced, unvoiced and pause segments.

    A pause is a run of frames quieter than ``pause_db_threshold`` lasting
    at least ``min_pause``; other frames are voiced when their f0 is nonzero.
    Frame ``t`` owns the hop-wide cell around its centre; the first cell
    starts at 0 and the last one ends at ``duration`` when given.
    """
    if len(f0) != len(loudness):
        raise ValueError(f"track lengths differ: f0 has {len(f0)} frames, loudness {len(loudness)}")
    if not np.isclose(f0.hop, loudness.hop) or not np.isclose(f0.frame_len, loudness.frame_len):
        raise ValueError("f0 and loudness tracks use different framing")
    n = len(f0)
    if n == 0:
        return []
    kinds = frame_kinds(f0, loudness, pause_db_threshold, min_pause)
    centre = f0.frame_len / 2.0
    bounds = centre - f0.hop / 2.0 + np.arange(n + 1) * f0.hop
    bounds[0] = 0.0
    end = bounds[-1] if duration is None else max(float(duration), bounds[-2])
    bounds[-1] = end
    names = ("unvoiced", "voiced", "pause")
    change = np.flatnonzero(np.diff(kinds)) + 1
    starts = np.r_[0, change]
    stops = np.r_[change, n]
    return [VoicedSegment(float(bounds[s]), float(bounds[e]), names[kinds[s]]) for s, e in zip(starts, stops)]
