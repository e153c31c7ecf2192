"""Chunked teacher-forced training.

Utterances are cut into 165-frame chunks: 35 warm-up frames, 120 content
frames, 10 frames of future context.  Content regions tile the utterance
(the last chunk's content may be shorter); warm-up before the utterance
start and future context past its end are zero-amplitude padding.  The
cross-entropy is computed over content samples only — warm-up exists so
every content sample has a fully realised receptive field, and the future
frames only feed the bi-directional conditioning network.

Weights update with Adam under a per-epoch geometric annealing schedule.
A non-finite gradient or loss aborts the run rather than corrupting the
parameters.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from ssws.audio_codec import AudioBuffer, mulaw_encode, read_wav
from ssws.conditioning import FrameFeatures, read_feature_file
from ssws.neural_core import (
    AdamState,
    LearningRateSchedule,
    Parameters,
    adam_step,
    save_checkpoint,
)
from ssws.wavenet import StackConfig, init_model_params, model_forward, receptive_field
from ssws.neural_core import ops

WARMUP_FRAMES = 35
CONTENT_FRAMES = 120
FUTURE_FRAMES = 10
CHUNK_FRAMES = WARMUP_FRAMES + CONTENT_FRAMES + FUTURE_FRAMES


class TrainError(RuntimeError):
    pass


@dataclass
class Chunk:
    """One 165-frame training window with aligned samples and content mask."""

    features: np.ndarray      # (165, 88) float32; zero rows outside the utterance
    bins: np.ndarray          # (165 * hop,) int64; pad bin outside the utterance
    mask: np.ndarray          # (165 * hop,) float32; 1 on content samples
    content_start: int        # utterance frame index of the first content frame
    n_content: int            # content frames in this chunk
    index: int                # position of this chunk within its utterance


@dataclass
class Utterance:
    utterance_id: str
    domain: str
    features: FrameFeatures
    bins: np.ndarray          # encoded audio, length n_frames * hop_size


def chunk_spans(n_frames: int):
    """Content tiling: [(content_start_frame, n_content_frames), ...]."""
    if n_frames < 1:
        raise TrainError("utterance must have at least one frame")
    spans = []
    start = 0
    while start < n_frames:
        spans.append((start, min(CONTENT_FRAMES, n_frames - start)))
        start += CONTENT_FRAMES
    return spans


def chunk_utterance(features: FrameFeatures, encoded_bins: np.ndarray,
                    config: StackConfig) -> list[Chunk]:
    """Slice one utterance into training chunks.

    encoded_bins must span exactly n_frames * hop_size samples.  The chunker
    asserts the warm-up region covers the receptive field, which is what
    makes content logits independent of anything before the chunk window.
    """
    hop = config.hop_size
    F = features.n_frames
    encoded_bins = np.asarray(encoded_bins)
    if encoded_bins.shape != (F * hop,):
        raise TrainError(
            f"audio/feature length mismatch: {encoded_bins.shape[0]} samples "
            f"vs {F} frames x hop {hop}")
    rf = receptive_field(config)
    if WARMUP_FRAMES * hop < rf:
        raise TrainError(
            f"warm-up span {WARMUP_FRAMES * hop} < receptive field {rf}; "
            f"content samples would see out-of-chunk context")

    pad_bin = config.quantization_bins // 2
    chunks = []
    for idx, (start, n_content) in enumerate(chunk_spans(F)):
        frame_lo = start - WARMUP_FRAMES
        feats = np.zeros((CHUNK_FRAMES, features.frames.shape[1]), dtype=np.float32)
        bins = np.full(CHUNK_FRAMES * hop, pad_bin, dtype=np.int64)
        src_lo = max(0, frame_lo)
        src_hi = min(F, frame_lo + CHUNK_FRAMES)
        dst_lo = src_lo - frame_lo
        dst_hi = src_hi - frame_lo
        feats[dst_lo:dst_hi] = features.frames[src_lo:src_hi]
        bins[dst_lo * hop : dst_hi * hop] = encoded_bins[src_lo * hop : src_hi * hop]
        mask = np.zeros(CHUNK_FRAMES * hop, dtype=np.float32)
        mask[WARMUP_FRAMES * hop : (WARMUP_FRAMES + n_content) * hop] = 1.0
        chunks.append(Chunk(features=feats, bins=bins, mask=mask,
                            content_start=start, n_content=n_content, index=idx))
    return chunks


def masked_loss(logits, targets, mask, reduction: str = "mean"):
    """Cross-entropy over masked positions only."""
    mask = np.asarray(mask)
    if not np.any(mask):
        raise TrainError("loss mask selects no positions")
    return ops.cross_entropy(logits, targets, mask=mask, reduction=reduction)


# ---------------------------------------------------------------------------
# dataset loading


def load_manifest(path):
    """Rows of (audio path, feature path, utterance id, domain)."""
    rows = []
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise TrainError(
                    f"{path}:{lineno}: expected 4 columns "
                    f"(audio, features, id, domain), got {len(parts)}")
            audio, feats, utt_id, domain = parts
            rows.append((os.path.join(base, audio), os.path.join(base, feats),
                         utt_id, domain))
    if not rows:
        raise TrainError(f"manifest {path} lists no utterances")
    return rows


def make_utterance(audio: AudioBuffer, features: FrameFeatures,
                   utterance_id: str = "utt", domain: str = "default",
                   n_bins: int = 1024) -> Utterance:
    """Pair audio with features, zero-padding the audio tail to a whole frame."""
    hop = features.hop_size
    F = features.n_frames
    n = len(audio)
    if not (F - 1) * hop < n <= F * hop:
        raise TrainError(
            f"{utterance_id}: {n} samples inconsistent with {F} frames x hop {hop}")
    samples = np.zeros(F * hop, dtype=np.float64)
    samples[:n] = audio.samples
    bins = mulaw_encode(samples, n_bins=n_bins).astype(np.int64)
    return Utterance(utterance_id=utterance_id, domain=domain,
                     features=features, bins=bins)


def load_dataset(manifest_path, n_bins: int = 1024) -> list[Utterance]:
    items = []
    for audio_path, feat_path, utt_id, domain in load_manifest(manifest_path):
        audio = read_wav(audio_path)
        features = read_feature_file(feat_path)
        items.append(make_utterance(audio, features, utt_id, domain, n_bins=n_bins))
    return items


# ---------------------------------------------------------------------------
# training loop


@dataclass
class TrainRunConfig:
    epochs: int = 1
    seed: int = 0
    batch_size: int = 1
    schedule: LearningRateSchedule = field(default_factory=LearningRateSchedule)
    checkpoint_dir: str | None = None
    trace_path: str | None = None
    stop_below: float | None = None  # stop once epoch loss drops under this

    def __post_init__(self):
        if self.epochs < 1:
            raise TrainError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise TrainError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class TrainResult:
    params: Parameters
    adam: AdamState
    trace: list  # (epoch, mean content cross-entropy, learning rate)


def train(dataset: list[Utterance], model_config: StackConfig,
          run_config: TrainRunConfig, params: Parameters | None = None,
          adam: AdamState | None = None) -> TrainResult:
    if not dataset:
        raise TrainError("empty dataset")
    rng = np.random.default_rng(run_config.seed)
    if params is None:
        params = init_model_params(model_config, rng)
    if adam is None:
        adam = AdamState()

    chunks = []
    for utt in dataset:
        chunks.extend(chunk_utterance(utt.features, utt.bins, model_config))

    trace = []
    writer = None
    trace_fh = None
    if run_config.trace_path:
        trace_fh = open(run_config.trace_path, "w", newline="", encoding="utf-8")
        writer = csv.writer(trace_fh)
        writer.writerow(["epoch", "loss", "learning_rate"])
    try:
        for epoch in range(run_config.epochs):
            rate = run_config.schedule.rate(epoch)
            order = rng.permutation(len(chunks))
            epoch_nll = 0.0
            epoch_positions = 0.0
            for lo in range(0, len(order), run_config.batch_size):
                batch = [chunks[i] for i in order[lo : lo + run_config.batch_size]]
                total_content = float(sum(c.mask.sum() for c in batch))
                params.zero_grad()
                for chunk in batch:
                    logits = model_forward(chunk.bins, chunk.features, params,
                                           model_config)
                    loss = masked_loss(logits, chunk.bins, chunk.mask,
                                       reduction="sum")
                    nll = loss.item()
                    if not np.isfinite(nll):
                        raise TrainError(
                            f"non-finite loss at epoch {epoch}, chunk "
                            f"{chunk.index} (content start {chunk.content_start})")
                    epoch_nll += nll
                    epoch_positions += float(chunk.mask.sum())
                    # average over content positions across the whole batch
                    (loss * (1.0 / total_content)).backward()
                adam_step(params, adam, rate)
            epoch_loss = epoch_nll / epoch_positions
            trace.append((epoch, epoch_loss, rate))
            if writer is not None:
                writer.writerow([epoch, f"{epoch_loss:.6f}", f"{rate:.8e}"])
                trace_fh.flush()
            if run_config.checkpoint_dir:
                os.makedirs(run_config.checkpoint_dir, exist_ok=True)
                save_checkpoint(
                    os.path.join(run_config.checkpoint_dir, f"epoch_{epoch:04d}.ckpt"),
                    params, adam)
                save_checkpoint(
                    os.path.join(run_config.checkpoint_dir, "latest.ckpt"),
                    params, adam)
            if run_config.stop_below is not None and epoch_loss < run_config.stop_below:
                break
    finally:
        if trace_fh is not None:
            trace_fh.close()
    return TrainResult(params=params, adam=adam, trace=trace)
