"""Stack topology: receptive field, causality, zero fixed points, gradients."""
import numpy as np
import pytest

from ssws.neural_core import Parameters, Tensor, no_grad, ops
from ssws.wavenet import (
    ModelConfigError,
    StackConfig,
    StackError,
    gated_layer,
    init_model_params,
    load_stack_config,
    model_forward,
    receptive_field,
    save_stack_config,
    stack_forward,
)

from conftest import gradcheck, rel_err
from helpers import as_float64, f64_model_params, micro_config, tiny_config


# ---------------------------------------------------------------------------
# config


def test_receptive_field_values():
    assert receptive_field(StackConfig()) == 4093                       # 4 x 10, kernel 2
    assert receptive_field(StackConfig(blocks=1, layers_per_block=1)) == 2
    assert receptive_field(StackConfig(blocks=2, layers_per_block=3)) == 15
    assert receptive_field(tiny_config()) == 31


def test_dilations_reset_per_block():
    cfg = StackConfig(blocks=2, layers_per_block=4)
    assert cfg.dilations() == [1, 2, 4, 8, 1, 2, 4, 8]
    assert StackConfig().dilations()[:10] == [2 ** n for n in range(10)]


def test_config_rejects_nonpositive():
    with pytest.raises(ModelConfigError):
        StackConfig(blocks=0)
    with pytest.raises(ModelConfigError):
        StackConfig(hop_size=-1)


def test_config_file_round_trip(tmp_path):
    cfg = tiny_config()
    path = tmp_path / "model.cfg"
    save_stack_config(path, cfg)
    assert load_stack_config(path) == cfg


def test_config_file_parsing(tmp_path):
    path = tmp_path / "m.cfg"
    path.write_text("# comment\nblocks = 2\nlayers = 3\nr=8  # inline\n")
    cfg = load_stack_config(path)
    assert cfg.blocks == 2
    assert cfg.layers_per_block == 3
    assert cfg.residual_channels == 8
    assert cfg.skip_channels == 1024    # unspecified keys keep defaults


def test_config_file_errors(tmp_path):
    bad_key = tmp_path / "a.cfg"
    bad_key.write_text("warp = 3\n")
    with pytest.raises(ModelConfigError, match="unknown"):
        load_stack_config(bad_key)

    bad_int = tmp_path / "b.cfg"
    bad_int.write_text("blocks = four\n")
    with pytest.raises(ModelConfigError, match="integer"):
        load_stack_config(bad_int)

    dup = tmp_path / "c.cfg"
    dup.write_text("blocks = 1\nblocks = 2\n")
    with pytest.raises(ModelConfigError, match="duplicate"):
        load_stack_config(dup)


# ---------------------------------------------------------------------------
# zero-parameter fixed points


def _zero_params_like(params):
    zeroed = Parameters()
    for name, t in params.items():
        zeroed.add(name, np.zeros_like(t.data))
    return zeroed


def test_zero_params_give_uniform_logits():
    cfg = tiny_config()
    rng = np.random.default_rng(0)
    params = _zero_params_like(init_model_params(cfg, rng))
    bins = rng.integers(0, cfg.quantization_bins, size=100)
    cond = Tensor(np.zeros((100, cfg.residual_channels), dtype=np.float32))
    with no_grad():
        logits = stack_forward(bins, cond, params, cfg)
    assert np.all(logits.data == 0.0)
    loss = ops.cross_entropy(logits, bins)
    assert rel_err(loss.item(), np.log(cfg.quantization_bins)) < 1e-6


def test_gated_layer_zero_params_identity():
    cfg = micro_config()
    r, s = cfg.residual_channels, cfg.skip_channels
    p = Parameters()
    p.add("L.conv_f", np.zeros((2, r, r)))
    p.add("L.conv_g", np.zeros((2, r, r)))
    p.add("L.cond_f.w", np.zeros((r, r)))
    p.add("L.cond_f.b", np.zeros(r))
    p.add("L.cond_g.w", np.zeros((r, r)))
    p.add("L.cond_g.b", np.zeros(r))
    p.add("L.res.w", np.zeros((r, r)))
    p.add("L.res.b", np.zeros(r))
    p.add("L.skip.w", np.zeros((r, s)))
    p.add("L.skip.b", np.zeros(s))
    rng = np.random.default_rng(1)
    x = Tensor(rng.standard_normal((9, r)))
    cond = Tensor(rng.standard_normal((9, r)))
    res, skip = gated_layer(x, cond, p, "L", dilation=2)
    assert np.array_equal(res.data, x.data)      # residual path passes through
    assert np.all(skip.data == 0.0)


def test_zero_layers_depth_invariant():
    # With every layer zeroed, only embed + head act; depth cannot matter.
    rng = np.random.default_rng(2)
    shallow = micro_config()
    deep = micro_config(blocks=3, layers_per_block=4)
    p_shallow = _zero_params_like(init_model_params(shallow, rng))
    p_deep = _zero_params_like(init_model_params(deep, np.random.default_rng(3)))
    for p in (p_shallow, p_deep):
        rs = np.random.default_rng(4)
        p["stack.embed.w"].data[:] = rs.standard_normal(p["stack.embed.w"].shape)
        p["stack.head.w1"].data[:] = rs.standard_normal(p["stack.head.w1"].shape)
        p["stack.head.b1"].data[:] = rs.standard_normal(p["stack.head.b1"].shape)
        p["stack.head.w2"].data[:] = rs.standard_normal(p["stack.head.w2"].shape)
        p["stack.head.b2"].data[:] = rs.standard_normal(p["stack.head.b2"].shape)
    bins = np.random.default_rng(5).integers(0, 8, size=12)
    cond = Tensor(np.zeros((12, 4), dtype=np.float32))
    with no_grad():
        a = stack_forward(bins, cond, p_shallow, shallow).data
        b = stack_forward(bins, cond, p_deep, deep).data
    assert np.array_equal(a, b)


def test_softmax_rows_normalise():
    cfg = micro_config()
    params = f64_model_params(cfg, seed=6)
    rng = np.random.default_rng(7)
    bins = rng.integers(0, cfg.quantization_bins, size=20)
    cond = Tensor(rng.standard_normal((20, cfg.residual_channels)))
    with no_grad():
        probs = ops.softmax(stack_forward(bins, cond, params, cfg)).data
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12)


# ---------------------------------------------------------------------------
# causality and receptive field


def test_causality_exhaustive_reduced_config():
    # 2 blocks x 4 layers (RF 31): perturbing the sample at t must leave
    # logits at or before t bit-for-bit unchanged, for every t.
    cfg = tiny_config()
    rng = np.random.default_rng(8)
    params = init_model_params(cfg, rng)
    T = 64
    bins = rng.integers(0, cfg.quantization_bins, size=T)
    cond_data = rng.standard_normal((T, cfg.residual_channels)).astype(np.float32)
    with no_grad():
        base = stack_forward(bins, Tensor(cond_data), params, cfg).data
        for t in range(T):
            mutated = bins.copy()
            mutated[t] = (mutated[t] + 97) % cfg.quantization_bins
            out = stack_forward(mutated, Tensor(cond_data), params, cfg).data
            assert np.array_equal(out[: t + 1], base[: t + 1]), f"leak at t={t}"
            if t + 1 < T:
                assert not np.array_equal(out[t + 1], base[t + 1])


def test_conditioning_is_causal_too():
    cfg = tiny_config()
    rng = np.random.default_rng(9)
    params = init_model_params(cfg, rng)
    T = 48
    bins = rng.integers(0, cfg.quantization_bins, size=T)
    cond_data = rng.standard_normal((T, cfg.residual_channels)).astype(np.float32)
    with no_grad():
        base = stack_forward(bins, Tensor(cond_data), params, cfg).data
        for t in (0, 17, 40):
            mutated = cond_data.copy()
            mutated[t] += 2.0
            out = stack_forward(bins, Tensor(mutated), params, cfg).data
            # cond at t feeds logit t (same-time path) but nothing earlier
            assert np.array_equal(out[:t], base[:t])
            assert not np.array_equal(out[t], base[t])


def test_receptive_field_tightness():
    # The influence window of a past sample spans exactly RF logits:
    # bins[0] can move logit RF, never logit RF+1.  64-bit weights keep the
    # longest-path contribution above rounding.
    cfg = tiny_config()
    rf = receptive_field(cfg)
    params = f64_model_params(cfg, seed=10)
    rng = np.random.default_rng(10)
    T = rf + 2
    bins = rng.integers(0, cfg.quantization_bins, size=T)
    cond = Tensor(np.zeros((T, cfg.residual_channels)))
    with no_grad():
        base = stack_forward(bins, cond, params, cfg).data
        mutated = bins.copy()
        mutated[0] = (mutated[0] + 128) % cfg.quantization_bins
        out = stack_forward(mutated, cond, params, cfg).data
    assert not np.array_equal(out[rf], base[rf])          # lag RF: reachable
    assert np.array_equal(out[rf + 1], base[rf + 1])      # lag RF+1: out of reach
    assert np.array_equal(out[:1], base[:1])


# ---------------------------------------------------------------------------
# errors


def test_stack_forward_validation():
    cfg = micro_config()
    params = f64_model_params(cfg)
    good_cond = Tensor(np.zeros((5, cfg.residual_channels)))
    with pytest.raises(StackError, match="mismatch"):
        stack_forward(np.zeros(4, dtype=int), good_cond, params, cfg)
    with pytest.raises(StackError, match="outside"):
        stack_forward(np.full(5, 99), good_cond, params, cfg)
    with pytest.raises(StackError, match="1-D"):
        stack_forward(np.zeros((5, 1), dtype=int), good_cond, params, cfg)


def test_model_forward_length_check():
    cfg = micro_config()
    params = f64_model_params(cfg)
    frames = np.zeros((2, 88))
    with pytest.raises(StackError, match="length"):
        model_forward(np.zeros(5, dtype=int), frames, params, cfg)


def test_gated_layer_shape_mismatch():
    cfg = micro_config()
    params = f64_model_params(cfg)
    x = Tensor(np.zeros((6, cfg.residual_channels)))
    cond = Tensor(np.zeros((5, cfg.residual_channels)))
    with pytest.raises(StackError):
        gated_layer(x, cond, params, "stack.b0.l0", dilation=1)


# ---------------------------------------------------------------------------
# gradients


def test_gated_layer_gradcheck():
    cfg = micro_config()
    rng = np.random.default_rng(11)
    params = f64_model_params(cfg, seed=12)
    x = Tensor(rng.standard_normal((7, cfg.residual_channels)), requires_grad=True)
    cond = Tensor(rng.standard_normal((7, cfg.residual_channels)), requires_grad=True)
    w_res = Tensor(rng.standard_normal((7, cfg.residual_channels)))
    w_skip = Tensor(rng.standard_normal((7, cfg.skip_channels)))
    targets = [x, cond, params["stack.b0.l0.conv_f"], params["stack.b0.l0.cond_g.w"],
               params["stack.b0.l0.res.w"], params["stack.b0.l0.skip.b"]]

    def build(*_):
        res, skip = gated_layer(x, cond, params, "stack.b0.l0", dilation=2)
        return ((res * w_res) + 0.0).sum() + (skip * w_skip).sum()

    gradcheck(build, targets, tol=2e-4)


def test_stack_gradcheck_subset():
    # Gradient check through the full depth of the micro stack (conditioning
    # input held as a leaf) over a representative subset of tensors.
    cfg = micro_config()
    rng = np.random.default_rng(13)
    params = f64_model_params(cfg, seed=14)
    T = 8
    bins = rng.integers(0, cfg.quantization_bins, size=T)
    cond = Tensor(rng.standard_normal((T, cfg.residual_channels)), requires_grad=True)
    targets = [cond, params["stack.embed.w"], params["stack.b0.l1.conv_g"],
               params["stack.head.w2"]]

    def build(*_):
        logits = stack_forward(bins, cond, params, cfg)
        return ops.cross_entropy(logits, bins)

    gradcheck(build, targets, tol=2e-4)
