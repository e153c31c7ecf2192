"""Autoregressive convolution stack over mu-law bins.

Topology: previous-sample bins are embedded to `r` channels (a 1x1 conv over
one-hot input), then run through `blocks` x `layers_per_block` dilated causal
gated convolution layers.  Each layer computes

    z = tanh(conv_f(x) + affine_f(c)) * sigmoid(conv_g(x) + affine_g(c))

with the per-sample conditioning embedding c entering through per-layer
affine transforms, adds a 1x1 projection of z back onto the residual path,
and emits a 1x1 skip projection.  The summed skips pass through
relu -> 1x1 -> relu -> 1x1 to produce logits over the quantization bins.
Dilations double each layer and reset at block boundaries.

The input shift happens inside stack_forward: logits at time t see samples
strictly before t (position 0 sees the zero-amplitude bin) and conditioning
up to and including t.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from ssws import conditioning
from ssws.neural_core import Parameters, Tensor, ops, uniform_init


class ModelConfigError(ValueError):
    pass


class StackError(ValueError):
    pass


@dataclass
class StackConfig:
    blocks: int = 4
    layers_per_block: int = 10
    residual_channels: int = 128   # r
    skip_channels: int = 1024      # s
    quantization_bins: int = 1024  # a
    kernel_size: int = 2
    sample_rate: int = 24000
    hop_size: int = 120
    cond_hidden: int = 128         # LSTM units per direction

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if int(v) < 1:
                raise ModelConfigError(f"{f.name} must be positive, got {v}")
            setattr(self, f.name, int(v))

    def dilations(self):
        """Per-layer dilation, doubling within a block, reset per block."""
        return [2 ** n for _ in range(self.blocks)
                for n in range(self.layers_per_block)]

    def layer_names(self):
        return [f"stack.b{b}.l{n}" for b in range(self.blocks)
                for n in range(self.layers_per_block)]


def receptive_field(config: StackConfig) -> int:
    """Samples of history that can influence one output position."""
    per_block = (1 << config.layers_per_block) - 1
    return 1 + (config.kernel_size - 1) * config.blocks * per_block


# Config file keys <-> StackConfig fields.
_CONFIG_KEYS = {
    "blocks": "blocks",
    "layers": "layers_per_block",
    "r": "residual_channels",
    "s": "skip_channels",
    "a": "quantization_bins",
    "kernel": "kernel_size",
    "sample_rate": "sample_rate",
    "hop_size": "hop_size",
    "cond_hidden": "cond_hidden",
}


def load_stack_config(path) -> StackConfig:
    """Plain-text `key = value` model configuration; unknown keys error."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ModelConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in _CONFIG_KEYS:
                raise ModelConfigError(f"line {lineno}: unknown config key {key!r}")
            if key in values:
                raise ModelConfigError(f"line {lineno}: duplicate key {key!r}")
            try:
                values[key] = int(value.strip())
            except ValueError as exc:
                raise ModelConfigError(f"line {lineno}: bad integer for {key!r}") from exc
    return StackConfig(**{_CONFIG_KEYS[k]: v for k, v in values.items()})


def save_stack_config(path, config: StackConfig) -> None:
    inverse = {v: k for k, v in _CONFIG_KEYS.items()}
    with open(path, "w", encoding="utf-8") as fh:
        for f in fields(config):
            fh.write(f"{inverse[f.name]} = {getattr(config, f.name)}\n")


# ---------------------------------------------------------------------------
# parameters


def init_model_params(config: StackConfig, rng: np.random.Generator) -> Parameters:
    """All trainable weights: conditioning sub-network plus the conv stack."""
    r = config.residual_channels
    s = config.skip_channels
    a = config.quantization_bins
    K = config.kernel_size
    params = Parameters()
    conditioning.init_conditioning_params(
        params, rng, input_dim=conditioning.FEATURE_DIM,
        hidden=config.cond_hidden, out_dim=r)
    params.add("stack.embed.w", uniform_init(rng, (a, r), fan_in=a))
    for name in config.layer_names():
        params.add(f"{name}.conv_f", uniform_init(rng, (K, r, r), fan_in=K * r))
        params.add(f"{name}.conv_g", uniform_init(rng, (K, r, r), fan_in=K * r))
        params.add(f"{name}.cond_f.w", uniform_init(rng, (r, r), fan_in=r))
        params.add(f"{name}.cond_f.b", np.zeros(r, dtype=np.float32))
        params.add(f"{name}.cond_g.w", uniform_init(rng, (r, r), fan_in=r))
        params.add(f"{name}.cond_g.b", np.zeros(r, dtype=np.float32))
        params.add(f"{name}.res.w", uniform_init(rng, (r, r), fan_in=r))
        params.add(f"{name}.res.b", np.zeros(r, dtype=np.float32))
        params.add(f"{name}.skip.w", uniform_init(rng, (r, s), fan_in=r))
        params.add(f"{name}.skip.b", np.zeros(s, dtype=np.float32))
    params.add("stack.head.w1", uniform_init(rng, (s, s), fan_in=s))
    params.add("stack.head.b1", np.zeros(s, dtype=np.float32))
    params.add("stack.head.w2", uniform_init(rng, (s, a), fan_in=s))
    params.add("stack.head.b2", np.zeros(a, dtype=np.float32))
    return params


# ---------------------------------------------------------------------------
# forward


def gated_layer(x: Tensor, cond: Tensor, params: Parameters, prefix: str,
                dilation: int):
    """One residual layer; returns (residual_out, skip_out)."""
    if x.shape[0] != cond.shape[0]:
        raise StackError(
            f"audio/conditioning length mismatch: {x.shape[0]} vs {cond.shape[0]}")
    f = ops.conv1d_causal(x, params[f"{prefix}.conv_f"], dilation) \
        + ops.affine(cond, params[f"{prefix}.cond_f.w"], params[f"{prefix}.cond_f.b"])
    g = ops.conv1d_causal(x, params[f"{prefix}.conv_g"], dilation) \
        + ops.affine(cond, params[f"{prefix}.cond_g.w"], params[f"{prefix}.cond_g.b"])
    z = ops.tanh(f) * ops.sigmoid(g)
    residual = x + ops.affine(z, params[f"{prefix}.res.w"], params[f"{prefix}.res.b"])
    skip = ops.affine(z, params[f"{prefix}.skip.w"], params[f"{prefix}.skip.b"])
    return residual, skip


def stack_forward(bins: np.ndarray, cond: Tensor, params: Parameters,
                  config: StackConfig) -> Tensor:
    """Teacher-forced logits for every position of a bin sequence.

    bins[t] is the sample at time t; internally the sequence is shifted right
    by one (with the zero-amplitude bin in front) so logits[t] is the
    distribution over bins[t] given bins[<t] and cond[<=t].
    """
    bins = np.asarray(bins)
    if bins.ndim != 1:
        raise StackError(f"bins must be 1-D, got shape {bins.shape}")
    T = bins.shape[0]
    if cond.shape[0] != T:
        raise StackError(
            f"audio/conditioning length mismatch: {T} vs {cond.shape[0]}")
    a = config.quantization_bins
    if bins.size and (bins.min() < 0 or bins.max() >= a):
        raise StackError(f"bin values outside [0, {a})")

    shifted = np.empty(T, dtype=np.int64)
    shifted[0] = a // 2
    shifted[1:] = bins[:-1]
    x = ops.embedding(params["stack.embed.w"], shifted)

    skip_sum = None
    for prefix, dilation in zip(config.layer_names(), config.dilations()):
        x, skip = gated_layer(x, cond, params, prefix, dilation)
        skip_sum = skip if skip_sum is None else skip_sum + skip

    h = ops.relu(skip_sum)
    h = ops.affine(h, params["stack.head.w1"], params["stack.head.b1"])
    h = ops.relu(h)
    return ops.affine(h, params["stack.head.w2"], params["stack.head.b2"])


def model_forward(bins: np.ndarray, frames: np.ndarray, params: Parameters,
                  config: StackConfig) -> Tensor:
    """Conditioning net + upsampling + stack in one call.

    frames is the (n_frames, 88) feature slice aligned with bins; bins must
    span exactly n_frames * hop_size samples.
    """
    frames = np.asarray(frames)
    expected = frames.shape[0] * config.hop_size
    if len(bins) != expected:
        raise StackError(
            f"bins length {len(bins)} != frames {frames.shape[0]} x hop {config.hop_size}")
    emb = conditioning.conditioning_forward(Tensor(frames), params)
    cond = conditioning.upsample(emb, config.hop_size)
    return stack_forward(bins, cond, params, config)
