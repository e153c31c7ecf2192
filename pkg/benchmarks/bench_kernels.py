"""Compare the numba and numpy kernel backends on training-shaped work.

Times the two hot kernels (dilated causal conv, LSTM recurrence) at the
sizes a training step sees, then a full teacher-forced step and a stretch
of autoregressive sampling on the overfit-fixture model.

    python3 benchmarks/bench_kernels.py [--repeats N]
"""
import argparse
import time

import numpy as np

from ssws.conditioning import generate_synthetic_features
from ssws.neural_core import LearningRateSchedule, kernels
from ssws.sampler import SamplerConfig, synthesize
from ssws.trainer import TrainRunConfig, make_utterance, train
from ssws.wavenet import StackConfig


def timeit(fn, repeats):
    fn()                                        # warm-up (jit compilation)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def fixture_config():
    return StackConfig(blocks=2, layers_per_block=4, residual_channels=16,
                       skip_channels=32, quantization_bins=256, kernel_size=2,
                       sample_rate=8000, hop_size=40, cond_hidden=32)


def bench_conv(repeats):
    rng = np.random.default_rng(0)
    T, cin, cout = 6600, 64, 128                # one 165-frame chunk at hop 40
    x = rng.standard_normal((T, cin)).astype(np.float32)
    k = rng.standard_normal((2, cin, cout)).astype(np.float32)
    g = rng.standard_normal((T, cout)).astype(np.float32)
    fwd = timeit(lambda: kernels.conv1d_causal_fwd(x, k, 64), repeats)
    bwd = timeit(lambda: kernels.conv1d_causal_bwd(x, k, 64, g), repeats)
    return fwd, bwd


def bench_lstm(repeats):
    rng = np.random.default_rng(1)
    F, D, H = 400, 88, 128                      # 2 s of frames, published width
    x = rng.standard_normal((F, D)).astype(np.float32)
    wx = rng.standard_normal((D, 4 * H)).astype(np.float32) * 0.1
    wh = rng.standard_normal((H, 4 * H)).astype(np.float32) * 0.1
    b = np.zeros(4 * H, dtype=np.float32)
    fwd = timeit(lambda: kernels.lstm_fwd(x, wx, wh, b), repeats)
    h_seq, gates, c_seq, tanh_c = kernels.lstm_fwd(x, wx, wh, b)
    g = rng.standard_normal(h_seq.shape).astype(np.float32)
    bwd = timeit(
        lambda: kernels.lstm_bwd(x, wx, wh, h_seq, gates, c_seq, tanh_c, g),
        repeats)
    return fwd, bwd


def make_fixture():
    cfg = fixture_config()
    sr = cfg.sample_rate
    t = np.arange(int(sr * 1.0)) / sr
    x = (np.sin(2 * np.pi * 275 * t) + 0.5 * np.sin(2 * np.pi * 550 * t + 0.7))
    x = 0.8 * x / np.abs(x).max()
    from ssws.audio_codec import AudioBuffer

    audio = AudioBuffer(sample_rate=sr, samples=x)
    feats = generate_synthetic_features(audio, seed=3, hop_size=cfg.hop_size)
    return cfg, make_utterance(audio, feats, "bench", "bench",
                               n_bins=cfg.quantization_bins)


def bench_train(cfg, utt):
    run = TrainRunConfig(epochs=1, seed=0, batch_size=1,
                         schedule=LearningRateSchedule(1e-3, 1.0))
    t0 = time.perf_counter()
    result = train([utt], cfg, run)
    return time.perf_counter() - t0, result.params


def bench_sample(cfg, utt, params, n_frames=50):
    from ssws.conditioning import FrameFeatures

    feats = FrameFeatures(utt.features.frames[:n_frames], hop_size=cfg.hop_size)
    t0 = time.perf_counter()
    audio = synthesize(feats, params, cfg, SamplerConfig(seed=0))
    dt = time.perf_counter() - t0
    return dt, len(audio) / dt


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    rows = []
    cfg, utt = make_fixture()
    for backend in ("numpy", "numba"):
        kernels.set_backend(backend)
        if kernels.get_backend() != backend:
            print(f"-- {backend} backend unavailable, skipping")
            continue
        conv_f, conv_b = bench_conv(args.repeats)
        lstm_f, lstm_b = bench_lstm(args.repeats)
        epoch, params = bench_train(cfg, utt)
        sample_dt, rate = bench_sample(cfg, utt, params)
        rows.append((backend, conv_f, conv_b, lstm_f, lstm_b, epoch, rate))
    kernels.set_backend(None)

    hdr = (f"{'backend':<9}{'conv fwd':>10}{'conv bwd':>10}{'lstm fwd':>10}"
           f"{'lstm bwd':>10}{'epoch':>9}{'samples/s':>11}")
    print(hdr)
    print("-" * len(hdr))
    for backend, cf, cb, lf, lb, ep, rate in rows:
        print(f"{backend:<9}{cf * 1e3:>8.2f}ms{cb * 1e3:>8.2f}ms{lf * 1e3:>8.2f}ms"
              f"{lb * 1e3:>8.2f}ms{ep:>8.2f}s{rate:>11.0f}")
    if len(rows) == 2:
        print(f"\nepoch speedup numba over numpy: {rows[0][5] / rows[1][5]:.1f}x")


if __name__ == "__main__":
    main()
