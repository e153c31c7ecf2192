"""Conditioning sub-network: frame features -> per-sample embedding.

Input is an F x 88 matrix per utterance (86 linguistic context features, a
voiced/unvoiced flag, and log-f0).  Two bi-directional LSTM layers (128 units
per direction, concatenated to 256) feed an affine projection down to the
residual-channel width, and the frame-level embedding is upsampled to sample
level by repetition so gradients flow back from the waveform loss.

Since no linguistic front-end ships with this package, a synthetic feature
generator stands in: log-f0 and voicing come from an autocorrelation pitch
tracker run on the waveform itself, and the 86 linguistic dims are a seeded,
smoothly varying sinusoid mixture.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from ssws.audio_codec import AudioBuffer
from ssws.neural_core import Parameters, Tensor, ops, uniform_init

FEATURE_DIM = 88
LINGUISTIC_DIM = 86
VUV_COL = 86
LOGF0_COL = 87

FEATURE_MAGIC = b"SSWSFEAT"
FEATURE_VERSION = 1


class FeatureError(ValueError):
    pass


@dataclass
class FrameFeatures:
    """Per-frame conditioning matrix plus the frame hop in samples."""

    frames: np.ndarray  # (F, 88) float32
    hop_size: int

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2 or self.frames.shape[1] != FEATURE_DIM:
            raise FeatureError(
                f"feature matrix must be F x {FEATURE_DIM}, got {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise FeatureError("need at least one frame")
        if int(self.hop_size) < 1:
            raise FeatureError(f"hop_size must be >= 1, got {self.hop_size}")
        self.hop_size = int(self.hop_size)
        vuv = self.frames[:, VUV_COL]
        if not np.all((vuv == 0.0) | (vuv == 1.0)):
            raise FeatureError("voiced/unvoiced column must be binary")
        logf0 = self.frames[:, LOGF0_COL]
        if not np.all(np.isfinite(logf0[vuv == 1.0])):
            raise FeatureError("log-f0 must be finite on voiced frames")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_samples(self) -> int:
        return self.frames.shape[0] * self.hop_size


# ---------------------------------------------------------------------------
# network


def init_conditioning_params(params: Parameters, rng: np.random.Generator,
                             input_dim: int = FEATURE_DIM, hidden: int = 128,
                             out_dim: int = 128, prefix: str = "cond") -> None:
    """Register both bi-LSTM layers and the 2H -> out_dim projection."""
    in_dims = (input_dim, 2 * hidden)
    for layer, d in enumerate(in_dims):
        for direction in ("fwd", "bwd"):
            base = f"{prefix}.l{layer}.{direction}"
            params.add(f"{base}.wx", uniform_init(rng, (d, 4 * hidden), fan_in=d))
            params.add(f"{base}.wh", uniform_init(rng, (hidden, 4 * hidden), fan_in=hidden))
            params.add(f"{base}.b", np.zeros(4 * hidden, dtype=np.float32))
    params.add(f"{prefix}.proj.w",
               uniform_init(rng, (2 * hidden, out_dim), fan_in=2 * hidden))
    params.add(f"{prefix}.proj.b", np.zeros(out_dim, dtype=np.float32))


def bilstm_layer(x: Tensor, params: Parameters, prefix: str) -> Tensor:
    """Forward and time-reversed LSTM passes, concatenated per frame."""
    f = f"{prefix}.fwd"
    b = f"{prefix}.bwd"
    fwd = ops.lstm_seq(x, params[f + ".wx"], params[f + ".wh"], params[f + ".b"])
    bwd = ops.flip_time(
        ops.lstm_seq(ops.flip_time(x), params[b + ".wx"], params[b + ".wh"],
                     params[b + ".b"]))
    return ops.concat_cols(fwd, bwd)


def project_embedding(stacked: Tensor, params: Parameters, prefix: str = "cond") -> Tensor:
    w = params[f"{prefix}.proj.w"]
    if stacked.shape[1] != w.shape[0]:
        raise FeatureError(
            f"projection expects {w.shape[0]} input columns, got {stacked.shape[1]}")
    return ops.affine(stacked, w, params[f"{prefix}.proj.b"])


def conditioning_forward(frames: Tensor, params: Parameters, prefix: str = "cond") -> Tensor:
    """Frame matrix -> frame-level embedding (F x out_dim)."""
    h = bilstm_layer(frames, params, f"{prefix}.l0")
    h = bilstm_layer(h, params, f"{prefix}.l1")
    return project_embedding(h, params, prefix)


def upsample(frame_embedding: Tensor, hop_size: int) -> Tensor:
    """Nearest-neighbour upsampling to sample rate; exact-adjoint backward."""
    return ops.upsample_repeat(frame_embedding, hop_size)


# ---------------------------------------------------------------------------
# synthetic features


def _frame_pitch(samples: np.ndarray, center: int, window: int, sr: float,
                 f_min: float, f_max: float, threshold: float):
    """Normalized-autocorrelation pitch for one frame.

    Returns (voiced, log_f0).  The window is centred on the frame; the score
    at lag L is sum(x[i] x[i+L]) / sqrt(sum head^2 * sum tail^2), peak picked
    over the lag range for [f_min, f_max] and refined parabolically.
    """
    lo = max(0, center - window // 2)
    hi = min(len(samples), lo + window)
    w = samples[lo:hi]
    n = len(w)
    lag_min = int(sr / f_max)
    lag_max = int(math.ceil(sr / f_min))
    if n < 2 * lag_min or lag_min < 1:
        return 0.0, 0.0
    lag_max = min(lag_max, n - 1)
    w = w - w.mean()
    energy = float(np.dot(w, w))
    if energy < 1e-8:
        return 0.0, 0.0

    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.fft.rfft(w, nfft)
    raw = np.fft.irfft(spec * np.conj(spec), nfft)[: n].real

    # Per-lag energy normalisation from prefix sums.
    csq = np.concatenate([[0.0], np.cumsum(w * w)])
    lags = np.arange(n)
    head = csq[n - lags] - csq[0]      # energy of x[0 .. n-L)
    tail = csq[n] - csq[lags]          # energy of x[L .. n)
    norm = np.sqrt(head * tail) + 1e-12
    score = raw / norm

    seg = score[lag_min : lag_max + 1]
    if seg.size == 0:
        return 0.0, 0.0
    k = int(np.argmax(seg)) + lag_min
    peak = score[k]
    if peak < threshold:
        return 0.0, 0.0
    # Parabolic refinement around the integer peak.
    lag = float(k)
    if 1 <= k < n - 1:
        y0, y1, y2 = score[k - 1], score[k], score[k + 1]
        denom = y0 - 2.0 * y1 + y2
        if abs(denom) > 1e-12:
            delta = 0.5 * (y0 - y2) / denom
            if abs(delta) < 1.0:
                lag += delta
    f0 = sr / lag
    if not (f_min * 0.5 <= f0 <= f_max * 2.0):
        return 0.0, 0.0
    return 1.0, math.log(f0)


def generate_synthetic_features(audio: AudioBuffer, seed: int,
                                hop_size: int | None = None,
                                f_min: float = 50.0, f_max: float = 500.0,
                                voicing_threshold: float = 0.5) -> FrameFeatures:
    """Stand-in front-end: pitch-tracked prosody + seeded smooth linguistics.

    The frame count is ceil(n_samples / hop); training and synthesis treat the
    utterance as F * hop samples long, zero-padding the tail if needed.
    """
    if len(audio) < 1:
        raise FeatureError("cannot extract features from empty audio")
    sr = audio.sample_rate
    if hop_size is None:
        hop_size = max(1, int(round(sr * 0.005)))
    samples = np.asarray(audio.samples, dtype=np.float64)
    n_frames = int(math.ceil(len(samples) / hop_size))
    window = 2 * int(math.ceil(sr / f_min))

    feats = np.zeros((n_frames, FEATURE_DIM), dtype=np.float32)

    # 86 linguistic dims: per-dim mixture of three slow sinusoids.
    rng = np.random.default_rng(seed)
    n_harm = 3
    freqs = rng.uniform(0.002, 0.05, size=(LINGUISTIC_DIM, n_harm))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(LINGUISTIC_DIM, n_harm))
    amps = rng.uniform(0.3, 1.0, size=(LINGUISTIC_DIM, n_harm))
    t = np.arange(n_frames)[:, None, None]
    waves = amps[None] * np.sin(2.0 * np.pi * freqs[None] * t + phases[None])
    feats[:, :LINGUISTIC_DIM] = waves.sum(axis=2) / n_harm

    for f in range(n_frames):
        center = f * hop_size + hop_size // 2
        vuv, logf0 = _frame_pitch(samples, center, window, sr,
                                  f_min, f_max, voicing_threshold)
        feats[f, VUV_COL] = vuv
        feats[f, LOGF0_COL] = logf0

    return FrameFeatures(frames=feats, hop_size=hop_size)


# ---------------------------------------------------------------------------
# file formats


def write_feature_file(path, features: FrameFeatures) -> None:
    """Binary layout: magic, version u32, F u32, dim u32, hop u32, F*88 <f4."""
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<IIII", FEATURE_VERSION, features.n_frames,
                             FEATURE_DIM, features.hop_size))
        fh.write(np.ascontiguousarray(features.frames, dtype="<f4").tobytes())


def read_feature_file(path) -> FrameFeatures:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != FEATURE_MAGIC:
            raise FeatureError("not a feature file (bad magic)")
        header = fh.read(16)
        if len(header) != 16:
            raise FeatureError("truncated feature file header")
        version, n_frames, dim, hop = struct.unpack("<IIII", header)
        if version != FEATURE_VERSION:
            raise FeatureError(f"unsupported feature file version {version}")
        if dim != FEATURE_DIM:
            raise FeatureError(f"feature dim {dim} != {FEATURE_DIM}")
        body = fh.read(4 * n_frames * dim)
        if len(body) != 4 * n_frames * dim:
            raise FeatureError("truncated feature file body")
        frames = np.frombuffer(body, dtype="<f4").reshape(n_frames, dim)
    return FrameFeatures(frames=frames.astype(np.float32), hop_size=hop)


def read_feature_text(path) -> FrameFeatures:
    """Hand-written fixture format: '# comment' lines, a 'hop_size N' line,
    then one whitespace-separated row of 88 values per frame."""
    hop = None
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if hop is None:
                parts = line.split()
                if len(parts) != 2 or parts[0] != "hop_size":
                    raise FeatureError(
                        f"line {lineno}: expected 'hop_size N' header, got {line!r}")
                hop = int(parts[1])
                continue
            values = line.split()
            if len(values) != FEATURE_DIM:
                raise FeatureError(
                    f"line {lineno}: expected {FEATURE_DIM} values, got {len(values)}")
            rows.append([float(v) for v in values])
    if hop is None or not rows:
        raise FeatureError("feature text needs a hop_size header and >= 1 row")
    return FrameFeatures(frames=np.array(rows, dtype=np.float32), hop_size=hop)
