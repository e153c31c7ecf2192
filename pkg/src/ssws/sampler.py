"""Autoregressive synthesis in training-shaped chunks.

Generation walks the same 165-frame chunk layout as training.  Within a
chunk, each content sample is drawn by running the stack over a window of
the last receptive-field-plus-one samples (mathematically identical to a
full forward — warm-up covers the receptive field, so the window never
leaves the chunk), adding Gumbel noise to the logits, and feeding the
sampled bin back.  Chunk k's warm-up region holds chunk k-1's predictions;
the first chunk starts from zero-amplitude history.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ssws.audio_codec import AudioBuffer, mulaw_decode
from ssws.conditioning import FrameFeatures, conditioning_forward, upsample
from ssws.neural_core import Parameters, Tensor, no_grad
from ssws.trainer import CHUNK_FRAMES, WARMUP_FRAMES, chunk_spans
from ssws.wavenet import StackConfig, receptive_field, stack_forward


class SamplerError(RuntimeError):
    pass


@dataclass
class SamplerConfig:
    seed: int = 0
    temperature: float = 1.0
    greedy: bool = False          # argmax instead of sampling (debugging/tests)
    trace_path: str | None = None

    def __post_init__(self):
        if self.temperature <= 0:
            raise SamplerError(f"temperature must be positive, got {self.temperature}")


def gumbel_sample(logits: np.ndarray, rng: np.random.Generator) -> int:
    """argmax(logits + Gumbel noise): an exact draw from softmax(logits)."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise SamplerError(f"logits must be 1-D, got shape {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise SamplerError("non-finite logit")
    u = np.clip(rng.random(logits.shape[0]), 1e-12, 1.0 - 1e-12)
    g = -np.log(-np.log(u))
    return int(np.argmax(logits + g))


def _window_logits(bins: np.ndarray, cond_data: np.ndarray, t: int, rf: int,
                   params: Parameters, config: StackConfig) -> np.ndarray:
    """Logit row for position t from its receptive-field window.

    Equal to stack_forward over the whole sequence evaluated at t: the
    window holds every sample and conditioning row position t can see.
    """
    lo = t - rf
    window = bins[lo : t + 1]
    cond = Tensor(cond_data[lo : t + 1])
    return stack_forward(window, cond, params, config).data[-1]


def synthesize(features: FrameFeatures, params: Parameters, config: StackConfig,
               sampler_config: SamplerConfig | None = None) -> AudioBuffer:
    """Generate F x hop_size samples for an utterance's features."""
    if sampler_config is None:
        sampler_config = SamplerConfig()
    r = config.residual_channels
    a = config.quantization_bins
    embed = params["stack.embed.w"]
    if embed.shape != (a, r):
        raise SamplerError(
            f"parameter/config mismatch: embedding {embed.shape}, config wants {(a, r)}")
    proj = params["cond.proj.w"]
    if proj.shape[1] != r:
        raise SamplerError(
            f"conditioning projects to {proj.shape[1]} dims, stack expects {r}")
    if features.hop_size != config.hop_size:
        raise SamplerError(
            f"feature hop {features.hop_size} != model hop {config.hop_size}")

    hop = config.hop_size
    F = features.n_frames
    rf = receptive_field(config)
    if WARMUP_FRAMES * hop < rf:
        raise SamplerError(
            f"warm-up span {WARMUP_FRAMES * hop} < receptive field {rf}")
    pad_bin = a // 2
    generated = np.full(F * hop, pad_bin, dtype=np.int64)
    rng = np.random.default_rng(sampler_config.seed)
    inv_temp = 1.0 / sampler_config.temperature

    with no_grad():
        for start, n_content in chunk_spans(F):
            frame_lo = start - WARMUP_FRAMES
            feats = np.zeros((CHUNK_FRAMES, features.frames.shape[1]),
                             dtype=np.float32)
            src_lo = max(0, frame_lo)
            src_hi = min(F, frame_lo + CHUNK_FRAMES)
            feats[src_lo - frame_lo : src_hi - frame_lo] = \
                features.frames[src_lo:src_hi]
            emb = conditioning_forward(Tensor(feats), params)
            cond = upsample(emb, hop).data

            local_bins = np.full(CHUNK_FRAMES * hop, pad_bin, dtype=np.int64)
            # warm-up (and any earlier real samples in the window) come from
            # what has been generated so far
            lo_sample = frame_lo * hop
            known_lo = max(0, lo_sample)
            known_hi = start * hop
            local_bins[known_lo - lo_sample : known_hi - lo_sample] = \
                generated[known_lo:known_hi]

            t0 = WARMUP_FRAMES * hop
            for t in range(t0, t0 + n_content * hop):
                logits = _window_logits(local_bins, cond, t, rf, params, config)
                if sampler_config.greedy:
                    b = int(np.argmax(logits))
                else:
                    b = gumbel_sample(logits * inv_temp, rng)
                local_bins[t] = b
                generated[lo_sample + t] = b

    if sampler_config.trace_path:
        with open(sampler_config.trace_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample", "bin"])
            for i, b in enumerate(generated):
                writer.writerow([i, int(b)])

    return AudioBuffer(sample_rate=config.sample_rate,
                       samples=mulaw_decode(generated, n_bins=a))
