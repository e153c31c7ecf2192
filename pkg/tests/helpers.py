"""Shared model/test fixtures: small configs, harmonic audio, param casting."""
import numpy as np

from ssws.audio_codec import AudioBuffer
from ssws.neural_core import Parameters
from ssws.wavenet import StackConfig, init_model_params


def tiny_config(**overrides):
    """The 8 kHz overfit-fixture shape: 2 blocks x 4 layers, r=16, s=32, a=256."""
    base = dict(blocks=2, layers_per_block=4, residual_channels=16,
                skip_channels=32, quantization_bins=256, kernel_size=2,
                sample_rate=8000, hop_size=40, cond_hidden=32)
    base.update(overrides)
    return StackConfig(**base)


def micro_config(**overrides):
    """Smallest full model for gradient checks: 1 block x 2 layers."""
    base = dict(blocks=1, layers_per_block=2, residual_channels=4,
                skip_channels=8, quantization_bins=8, kernel_size=2,
                sample_rate=8000, hop_size=3, cond_hidden=3)
    base.update(overrides)
    return StackConfig(**base)


def harmonic_audio(sample_rate=8000, seconds=2.0, f0=275.0, seed=None):
    """Periodic fixture: f0 plus two harmonics, peak-normalised to 0.8.

    The default fundamental keeps one period (29 samples at 8 kHz) inside
    the 2x4 stack's receptive field (31), so free-running synthesis stays
    phase-locked instead of drifting.
    """
    t = np.arange(int(sample_rate * seconds)) / sample_rate
    x = (np.sin(2 * np.pi * f0 * t)
         + 0.5 * np.sin(2 * np.pi * 2 * f0 * t + 0.7)
         + 0.25 * np.sin(2 * np.pi * 3 * f0 * t + 1.9))
    x = 0.8 * x / np.abs(x).max()
    return AudioBuffer(sample_rate=sample_rate, samples=x)


def as_float64(params: Parameters) -> Parameters:
    out = Parameters()
    for name, t in params.items():
        out.add(name, t.data.astype(np.float64))
    return out


def f64_model_params(config: StackConfig, seed=0) -> Parameters:
    return as_float64(init_model_params(config, np.random.default_rng(seed)))
