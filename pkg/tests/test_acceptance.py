"""Acceptance gate: one test per core contract, each with a runtime budget.

Run with -v to get a single pass/fail line per criterion.  Slow items (the
overfit fixture, the published-size causality probe) sit at the end.
"""
import contextlib
import hashlib
import os
import time

import numpy as np
import pytest

from ssws.audio_codec import mulaw_decode, mulaw_encode
from ssws.conditioning import FrameFeatures, generate_synthetic_features
from ssws.mushra.design import (
    DesignError,
    TestPlan,
    build_assignment,
    domain_quota,
    validate_assignment,
)
from ssws.mushra.stats import (
    StatsError,
    format_report,
    holm_bonferroni,
    paired_t_test,
    read_ratings_csv,
    screen_ranks,
    summarize,
    wilcoxon_signed_rank,
    write_pairs_csv,
)
from ssws.neural_core import (
    AdamState,
    LearningRateSchedule,
    Parameters,
    Tensor,
    adam_step,
    no_grad,
    ops,
)
from ssws.sampler import SamplerConfig, gumbel_sample, synthesize
from ssws.service import EvalStore
from ssws.trainer import (
    CONTENT_FRAMES,
    FUTURE_FRAMES,
    WARMUP_FRAMES,
    TrainRunConfig,
    chunk_spans,
    chunk_utterance,
    make_utterance,
    train,
)
from ssws.wavenet import (
    StackConfig,
    init_model_params,
    model_forward,
    receptive_field,
    stack_forward,
)

from conftest import gradcheck
from helpers import as_float64, f64_model_params, harmonic_audio, micro_config, tiny_config
from test_mushra_design import DOMAIN_SIZES, SYSTEMS, published_plan
from test_mushra_stats import brute_force_wilcoxon_p, holm_by_hand

CHI2_CRIT_999 = {7: 24.322}     # chi-square critical values at p = 1e-3


def published_config():
    return StackConfig(blocks=4, layers_per_block=10, residual_channels=128,
                       skip_channels=1024, quantization_bins=1024,
                       kernel_size=2, sample_rate=24000, hop_size=120,
                       cond_hidden=128)


@contextlib.contextmanager
def budget(seconds):
    t0 = time.monotonic()
    yield
    elapsed = time.monotonic() - t0
    assert elapsed < seconds, f"took {elapsed:.1f} s, budget {seconds} s"


# ---------------------------------------------------------------------------
# 1. mu-law codec


def test_acceptance_mulaw_codec():
    with budget(1.0):
        assert mulaw_encode(-1.0) == 0
        assert mulaw_encode(0.0) == 512
        assert mulaw_encode(1.0) == 1023

        bins = np.arange(1024)
        assert np.array_equal(mulaw_encode(mulaw_decode(bins)), bins)

        # exact bin edges: invert the compander at uniform code edges
        mu = 1023.0
        y_edges = 2.0 * np.arange(1025) / 1024.0 - 1.0
        amp_edges = np.sign(y_edges) * ((1.0 + mu) ** np.abs(y_edges) - 1.0) / mu
        widths = np.diff(amp_edges)

        x = np.linspace(-1.0, 1.0, 100_000)
        b = mulaw_encode(x)
        err = np.abs(mulaw_decode(b) - x)
        assert np.all(err <= widths[b] + 1e-12)


# ---------------------------------------------------------------------------
# 2. gradient checks: every differentiable op, then the full micro model


def test_acceptance_gradient_checks():
    with budget(60.0):
        rng = np.random.default_rng(0)

        def t(*shape, offset=0.0):
            return Tensor(rng.standard_normal(shape) + offset,
                          requires_grad=True)

        a, b = t(4, 3), t(4, 3)
        c = t(3)                                 # broadcast operand
        gradcheck(lambda *_: ((a + b) * a - (-b) + 2.0 * a - b * 0.5
                              + (a + c)).sum(), [a, b, c])

        m1, m2 = t(4, 5), t(5, 3)
        gradcheck(lambda *_: (m1 @ m2).sum(), [m1, m2])

        x, w, bias = t(6, 4), t(4, 3), t(3)
        gradcheck(lambda *_: ops.affine(x, w, bias).sum(), [x, w, bias])

        for fn in (ops.sigmoid, ops.tanh, ops.relu):
            z = t(5, 3, offset=0.3)              # keep relu off its kink
            gradcheck(lambda *_: fn(z).sum(), [z])

        z, mix = t(4, 6), t(4, 6)
        gradcheck(lambda *_: (ops.softmax(z) * mix).sum(), [z, mix])

        logits = t(5, 7)
        targets = rng.integers(0, 7, size=5)
        mask = np.array([1.0, 0.0, 1.0, 1.0, 0.0])
        gradcheck(lambda *_: ops.cross_entropy(logits, targets), [logits])
        gradcheck(lambda *_: ops.cross_entropy(logits, targets, mask=mask),
                  [logits])

        emb = t(6, 4)
        idx = np.array([0, 3, 3, 5, 1])
        mix = Tensor(rng.standard_normal((5, 4)))
        gradcheck(lambda *_: (ops.embedding(emb, idx) * mix).sum(), [emb])

        for dilation in (1, 3):
            cx, ck = t(9, 3), t(2, 3, 4)
            gradcheck(lambda *_: ops.conv1d_causal(cx, ck, dilation).sum(),
                      [cx, ck])

        lx, wx, wh, lb = t(5, 4), t(4, 12), t(3, 12), t(12)
        gradcheck(lambda *_: ops.lstm_seq(lx, wx, wh, lb).sum(),
                  [lx, wx, wh, lb])

        f = t(6, 3)
        fmix = Tensor(rng.standard_normal((6, 3)))
        gradcheck(lambda *_: (ops.flip_time(f) * fmix).sum(), [f])
        g1, g2 = t(5, 2), t(5, 3)
        gmix = Tensor(rng.standard_normal((5, 5)))
        gradcheck(lambda *_: (ops.concat_cols(g1, g2) * gmix).sum(), [g1, g2])
        u = t(4, 3)
        umix = Tensor(rng.standard_normal((12, 3)))
        gradcheck(lambda *_: (ops.upsample_repeat(u, 3) * umix).sum(), [u])

        # full micro model (1x2 layers, r=4, s=8, a=8): every parameter
        cfg = micro_config()
        params = f64_model_params(cfg, seed=1)
        frames = rng.standard_normal((3, 88))
        bins = rng.integers(0, cfg.quantization_bins,
                            size=3 * cfg.hop_size)

        def build(*_):
            return ops.cross_entropy(model_forward(bins, frames, params, cfg),
                                     bins)

        gradcheck(build, [params[n] for n in params.names()], tol=1e-4)


# ---------------------------------------------------------------------------
# 3. causality + receptive field


def test_acceptance_causality_and_receptive_field():
    with budget(300.0):
        # reduced config, exhaustively: every same-or-future sample invisible
        cfg = tiny_config()
        assert receptive_field(cfg) == 31
        rng = np.random.default_rng(8)
        params = init_model_params(cfg, rng)
        T = 64
        bins = rng.integers(0, cfg.quantization_bins, size=T)
        cond = Tensor(rng.standard_normal((T, cfg.residual_channels)).astype(np.float32))
        with no_grad():
            base = stack_forward(bins, cond, params, cfg).data
            for t in range(T):
                mutated = bins.copy()
                mutated[t] = (mutated[t] + 97) % cfg.quantization_bins
                out = stack_forward(mutated, cond, params, cfg).data
                assert np.array_equal(out[: t + 1], base[: t + 1]), f"leak at t={t}"
                if t + 1 < T:
                    assert not np.array_equal(out[t + 1], base[t + 1])

        # reduced config, edge of the window in 64-bit
        rf = receptive_field(cfg)
        params64 = f64_model_params(cfg, seed=10)
        T = rf + 2
        bins = rng.integers(0, cfg.quantization_bins, size=T)
        cond = Tensor(np.zeros((T, cfg.residual_channels)))
        with no_grad():
            base = stack_forward(bins, cond, params64, cfg).data
            mutated = bins.copy()
            mutated[0] = (mutated[0] + 128) % cfg.quantization_bins
            out = stack_forward(mutated, cond, params64, cfg).data
        assert not np.array_equal(out[rf], base[rf])
        assert np.array_equal(out[rf + 1], base[rf + 1])
        assert np.array_equal(out[0], base[0])

        # published scale (4x10, kernel 2): spot-check the same boundary
        cfg = published_config()
        rf = receptive_field(cfg)
        assert rf == 4093
        params64 = as_float64(init_model_params(cfg, np.random.default_rng(2)))
        T = rf + 2
        bins = rng.integers(0, cfg.quantization_bins, size=T)
        cond = Tensor(np.zeros((T, cfg.residual_channels)))
        with no_grad():
            base = stack_forward(bins, cond, params64, cfg).data
            mutated = bins.copy()
            mutated[0] = (mutated[0] + 511) % cfg.quantization_bins
            out = stack_forward(mutated, cond, params64, cfg).data
            assert not np.array_equal(out[rf], base[rf])      # oldest visible
            assert np.array_equal(out[rf + 1], base[rf + 1])  # one older: gone
            assert np.array_equal(out[0], base[0])
            mid = T // 2                                       # future-blindness
            mutated = bins.copy()
            mutated[mid] = (mutated[mid] + 511) % cfg.quantization_bins
            out = stack_forward(mutated, cond, params64, cfg).data
            assert np.array_equal(out[: mid + 1], base[: mid + 1])


# ---------------------------------------------------------------------------
# 4. chunk layout


def test_acceptance_chunk_layout():
    with budget(1.0):
        assert (WARMUP_FRAMES, CONTENT_FRAMES, FUTURE_FRAMES) == (35, 120, 10)
        # warm-up span covers the receptive field at the published hop
        assert WARMUP_FRAMES * 120 >= receptive_field(published_config())

        rng = np.random.default_rng(3)
        frame_counts = [1, 7, 119, 120, 121, 165, 240, 400, 1234]
        frame_counts += list(rng.integers(1, 3000, size=20))
        for F in frame_counts:
            spans = chunk_spans(F)
            covered = []
            for start, n_content in spans:
                assert 1 <= n_content <= CONTENT_FRAMES
                covered.extend(range(start, start + n_content))
            assert covered == list(range(F)), f"tiling broken at F={F}"

        # masks from a real utterance cover each content sample exactly once
        cfg = tiny_config()
        F = 400
        feats = FrameFeatures(np.zeros((F, 88), dtype=np.float32),
                              hop_size=cfg.hop_size)
        bins = rng.integers(0, cfg.quantization_bins, size=F * cfg.hop_size)
        chunks = chunk_utterance(feats, bins, cfg)
        coverage = np.zeros(F * cfg.hop_size)
        for chunk in chunks:
            lo = (chunk.content_start - WARMUP_FRAMES) * cfg.hop_size
            coverage[np.nonzero(chunk.mask)[0] + lo] += 1
        assert np.all(coverage == 1.0)


# ---------------------------------------------------------------------------
# 5. schedule and optimizer


def test_acceptance_schedule_and_adam():
    schedule = LearningRateSchedule()
    for e in range(60):
        assert schedule.rate(e) == 5e-4 * 0.836 ** e

    params = Parameters()
    w = params.add("w", np.array([1.0, -2.0, 3.0, 0.25]))
    g = np.array([0.5, -3.0, 1e-3, 7.0])
    w.grad = g.copy()
    state = AdamState(eps=1e-12)
    adam_step(params, state, rate=0.1)
    expect = np.array([1.0, -2.0, 3.0, 0.25]) - 0.1 * np.sign(g)
    assert np.allclose(w.data, expect, atol=1e-9)


# ---------------------------------------------------------------------------
# 6. Gumbel sampler vs softmax


def test_acceptance_gumbel_chi_square():
    rng = np.random.default_rng(12)
    n_draws = 100_000
    for trial in range(5):
        logits = rng.standard_normal(8) * 1.2
        p = np.exp(logits - logits.max())
        p /= p.sum()
        counts = np.zeros(8)
        draw_rng = np.random.default_rng(100 + trial)
        for _ in range(n_draws):
            counts[gumbel_sample(logits, draw_rng)] += 1
        expected = n_draws * p
        chi2 = float(((counts - expected) ** 2 / expected).sum())
        assert chi2 < CHI2_CRIT_999[7], f"trial {trial}: chi2 {chi2:.1f}"


# ---------------------------------------------------------------------------
# 7. balanced design at the published scale


def test_acceptance_design_published_scale():
    with budget(5.0):
        plan = published_plan()
        assert domain_quota(plan) == {
            "entertainment": 5, "infotainment": 5, "texting": 5,
            "accessibility": 3, "calling": 5, "flash-briefing": 3,
            "news": 7, "spelling": 2, "navigation": 5,
        }
        assignment = build_assignment(plan)
        assert validate_assignment(assignment, plan) == []
        assert len(assignment.screens) == 50
        assert all(len(s) == 40 for s in assignment.screens.values())

        with pytest.raises(DesignError, match="infeasible"):
            build_assignment(published_plan_with(n_listeners=49))
        # 36 screens keeps the count identity (50*36 = 200*9) but the
        # 25-utterance domains would need 4.5 screens per listener
        with pytest.raises(DesignError, match="remainder"):
            build_assignment(published_plan_with(screens_per_listener=36,
                                             ratings_per_utterance=9))
        with pytest.raises(DesignError, match="repeats"):
            build_assignment(TestPlan(
                utterances=[("u1", "d"), ("u2", "d")], systems=["A", "B"],
                n_listeners=2, screens_per_listener=3,
                ratings_per_utterance=3))


def published_plan_with(**overrides):
    base = published_plan()
    kw = dict(utterances=base.utterances, systems=base.systems,
              n_listeners=base.n_listeners,
              screens_per_listener=base.screens_per_listener,
              ratings_per_utterance=base.ratings_per_utterance)
    kw.update(overrides)
    return TestPlan(**kw)


# ---------------------------------------------------------------------------
# 8. statistics against independent oracles


def test_acceptance_statistics_oracles():
    rng = np.random.default_rng(21)

    # Wilcoxon exact two-sided p == full 2^n sign enumeration
    checked = 0
    n = 2
    while checked < 100:
        d = rng.integers(-6, 7, size=n)
        n = n + 1 if n < 12 else 2
        if not np.any(d):
            continue
        w, p = wilcoxon_signed_rank(d.astype(float), np.zeros(len(d)))
        expect = brute_force_wilcoxon_p(d)
        assert abs(p - expect) <= 1e-12 * max(1.0, expect)
        checked += 1

    # Holm step-down == hand-run procedure on 10 fixed vectors
    for k in range(10):
        m = k % 8 + 1
        pvals = np.round(np.random.default_rng(50 + k).random(m), 4)
        adj, rej = holm_bonferroni(pvals, alpha=0.05)
        adj_hand, rej_hand = holm_by_hand(list(pvals), 0.05)
        assert np.allclose(adj, adj_hand, atol=1e-12)
        assert list(rej) == rej_hand

    # paired t on a worked example
    d = np.array([2.0, -1.0, 3.0, 0.0, 1.0])
    t, p = paired_t_test(d, np.zeros(5))
    assert abs(t - 1.4142) < 1e-4
    assert abs(p - 0.2302) < 1e-3

    # rank sums on 4-system screens are always 1+2+3+4
    for _ in range(200):
        scores = {s: int(rng.integers(0, 101)) for s in ("a", "b", "c", "d")}
        assert sum(screen_ranks(scores).values()) == pytest.approx(10.0)


# ---------------------------------------------------------------------------
# 9. overfit fixture (slow)


def test_acceptance_overfit_fixture():
    with budget(1800.0):
        cfg = tiny_config()
        audio = harmonic_audio(seconds=2.0)       # f0 = 275 Hz
        feats = generate_synthetic_features(audio, seed=3, hop_size=cfg.hop_size)
        utt = make_utterance(audio, feats, "fixture", "fixture",
                             n_bins=cfg.quantization_bins)

        # best constant predictor: entropy of the marginal bin distribution
        counts = np.bincount(utt.bins, minlength=cfg.quantization_bins)
        probs = counts[counts > 0] / counts.sum()
        entropy = float(-(probs * np.log(probs)).sum())
        assert entropy >= np.log(256) / 2.0

        run = TrainRunConfig(
            epochs=200, seed=1, batch_size=1,
            schedule=LearningRateSchedule(initial_rate=6e-3, anneal_factor=0.97),
            stop_below=0.08)
        result = train([utt], cfg, run)
        losses = [loss for _, loss, _ in result.trace]
        assert min(losses) < 1.0
        assert len(losses) <= 200

        # free-running synthesis holds the fixture's pitch: FFT peak near f0
        one_second = FrameFeatures(feats.frames[:200], hop_size=cfg.hop_size)
        generated = synthesize(one_second, result.params, cfg,
                               SamplerConfig(seed=7))
        x = generated.samples - generated.samples.mean()
        spectrum = np.abs(np.fft.rfft(x * np.hanning(len(x))))
        freqs = np.fft.rfftfreq(len(x), d=1.0 / cfg.sample_rate)
        search = freqs >= 50.0
        peak = freqs[search][np.argmax(spectrum[search])]
        assert abs(peak - 275.0) <= 0.10 * 275.0, f"FFT peak at {peak:.1f} Hz"


# ---------------------------------------------------------------------------
# 10. end-to-end rehearsal: design -> service -> export -> analysis


def offset_score(listener, utterance, system):
    """Deterministic synthetic rating: system offset plus a +-8 hash jitter."""
    base = {"recordings": 88, "SSWS": 72, "hybrid": 58, "SPSS": 40}[system]
    digest = hashlib.sha256(f"{listener}|{utterance}|{system}".encode()).digest()
    return int(np.clip(base + digest[0] % 17 - 8, 0, 100))


def test_acceptance_pipeline_rehearsal(tmp_path):
    with budget(120.0):
        plan = published_plan()
        assignment = build_assignment(plan)
        assert validate_assignment(assignment, plan) == []
        audio_paths = {(u, s): f"/nonexistent/{u}-{s}.wav"
                       for u, _ in plan.utterances for s in plan.systems}

        log = tmp_path / "service.jsonl"
        store = EvalStore(plan, assignment, audio_paths, log_path=str(log))
        for listener in plan.listener_ids():
            while True:
                screen = store.next_screen(listener)
                if screen["done"]:
                    break
                k = screen["screen_id"]
                record = assignment.screens[listener][k]
                scores = {}
                for i, slot in enumerate(screen["slots"]):
                    system = record.system_order[i]
                    scores[slot["slot"]] = offset_score(
                        listener, record.utterance_id, system)
                store.submit_ratings(listener, k, scores)
        store.close()

        # restart from the log alone, then round-trip the export format
        store = EvalStore(plan, assignment, audio_paths, log_path=str(log))
        csv_path = tmp_path / "ratings.csv"
        csv_path.write_text(store.export_ratings_csv())
        store.close()
        ratings = read_ratings_csv(csv_path)
        assert len(ratings) == 50 * 40 * 4

        overall = summarize(ratings, grouping="overall", alpha=0.01)
        per_domain = summarize(ratings, grouping="per-domain", alpha=0.01)

        report = overall[0]
        assert report.n_screens == 2000 and report.n_excluded == 0
        ranking = [s.system for s in report.summaries]
        assert ranking == ["recordings", "SSWS", "hybrid", "SPSS"]
        assert len(report.pairs) == 6
        for pair in report.pairs:
            assert pair.t_significant and pair.w_significant

        assert [r.grouping for r in per_domain] == sorted(DOMAIN_SIZES)
        for rep in per_domain:
            assert [s.system for s in rep.summaries] == ranking

        # report rendering and the pairwise CSV schema hold together
        text = format_report(report)
        assert "recordings" in text and "p(holm)" in text
        pairs_csv = tmp_path / "pairs.csv"
        write_pairs_csv(pairs_csv, overall + per_domain)
        n_rows = sum(1 for _ in open(pairs_csv)) - 1
        assert n_rows == 6 * (1 + len(DOMAIN_SIZES))
