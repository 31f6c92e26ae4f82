import numpy as np
import pytest

from maskrl.nnapprox import (
    ApproximatorConfig,
    CheckpointError,
    IncrementalEncoder,
    Observation,
    clip_gradients,
    forward,
    forward_values,
    init_params,
    load_params,
    loss_and_gradient,
    params_fingerprint,
    save_params,
    sgd_step,
    zero_gradients,
)

SMALL = ApproximatorConfig(
    static_dim=5, event_dim=4, n_actions=3, n_dims=2,
    static_hidden=(6,), recurrent_width=5, head_hidden=(7,), seed=1,
)


def random_obs(rng, t, cfg=SMALL):
    return Observation(rng.normal(size=cfg.static_dim), rng.normal(size=(t, cfg.event_dim)))


def manual_lstm_unroll(params, history):
    """Step-by-step oracle for the recurrent cell, written independently."""
    cfg = params.config
    hh = cfg.recurrent_width
    wx, wh, b = params.arrays["lstm.wx"], params.arrays["lstm.wh"], params.arrays["lstm.b"]
    h = np.zeros(hh)
    c = np.zeros(hh)
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))
    for x in history:
        z = x @ wx + h @ wh + b
        i, f, g, o = sig(z[:hh]), sig(z[hh:2*hh]), np.tanh(z[2*hh:3*hh]), sig(z[3*hh:])
        c = f * c + i * g
        h = o * np.tanh(c)
    return h


def manual_head(params, static, h):
    cfg = params.config
    x = static
    for i in range(len(cfg.static_hidden)):
        x = np.tanh(x @ params.arrays[f"static.{i}.w"] + params.arrays[f"static.{i}.b"])
    u = np.concatenate([x, h])
    n_head = len(cfg.head_hidden) + 1
    for i in range(n_head):
        z = u @ params.arrays[f"head.{i}.w"] + params.arrays[f"head.{i}.b"]
        u = z if i == n_head - 1 else np.tanh(z)
    return u.reshape(cfg.n_actions, cfg.n_dims)


class TestForward:
    def test_zero_params_zero_output(self):
        params = init_params(SMALL)
        zeroed = sgd_step(params, params.arrays, alpha=1.0)  # w - 1.0 * w = 0
        obs = random_obs(np.random.default_rng(0), 3)
        assert np.all(forward_values(zeroed, obs) == 0.0)

    def test_deterministic(self):
        params = init_params(SMALL)
        obs = random_obs(np.random.default_rng(1), 4)
        a = forward_values(params, obs)
        b = forward_values(params, obs)
        assert np.array_equal(a, b)

    def test_manual_three_step_unroll(self):
        params = init_params(SMALL)
        rng = np.random.default_rng(2)
        obs = random_obs(rng, 3)
        expected = manual_head(params, obs.static, manual_lstm_unroll(params, obs.history))
        got = forward_values(params, obs)
        assert np.allclose(got, expected, atol=1e-12)

    @pytest.mark.parametrize("t", [0, 1, 2, 7, 20])
    def test_output_shape_every_history_length(self, t):
        params = init_params(SMALL)
        obs = random_obs(np.random.default_rng(3), t)
        row = forward(params, obs)
        assert row.values.shape == (SMALL.n_actions, SMALL.n_dims)

    def test_empty_history_uses_zero_state(self):
        params = init_params(SMALL)
        rng = np.random.default_rng(4)
        static = rng.normal(size=SMALL.static_dim)
        obs = Observation(static, np.zeros((0, SMALL.event_dim)))
        expected = manual_head(params, static, np.zeros(SMALL.recurrent_width))
        assert np.allclose(forward_values(params, obs), expected, atol=1e-12)

    def test_shape_mismatch_rejected(self):
        params = init_params(SMALL)
        with pytest.raises(ValueError):
            forward_values(params, Observation(np.zeros(2), np.zeros((0, 4))))
        with pytest.raises(ValueError):
            forward_values(params, Observation(np.zeros(5), np.zeros((2, 9))))


class TestLossAndGradient:
    def test_zero_loss_zero_gradient_at_targets(self):
        params = init_params(SMALL)
        rng = np.random.default_rng(5)
        obs = random_obs(rng, 2)
        target = forward_values(params, obs)[1]
        loss, grads = loss_and_gradient(params, [(obs, 1, target)])
        assert loss == 0.0
        assert all(np.all(g == 0.0) for g in grads.values())

    def test_loss_nonnegative_and_zero_iff_match(self):
        params = init_params(SMALL)
        rng = np.random.default_rng(6)
        obs = random_obs(rng, 1)
        target = forward_values(params, obs)[0] + 0.5
        loss, _ = loss_and_gradient(params, [(obs, 0, target)])
        assert loss > 0.0

    def test_single_linear_layer_closed_form(self):
        # One sample, purely linear head: gradient is 2*(out - y) x input.
        cfg = ApproximatorConfig(static_dim=3, event_dim=2, n_actions=2, n_dims=1,
                                 static_hidden=(3,), recurrent_width=2,
                                 head_hidden=(), seed=0)
        params = init_params(cfg)
        rng = np.random.default_rng(7)
        obs = Observation(rng.normal(size=3), np.zeros((0, 2)))
        y = np.array([1.5])
        out, _ = loss_and_gradient(params, [(obs, 0, y)])
        # recompute pieces analytically
        s_enc = np.tanh(obs.static @ params.arrays["static.0.w"] + params.arrays["static.0.b"])
        u = np.concatenate([s_enc, np.zeros(2)])
        pred = u @ params.arrays["head.0.w"] + params.arrays["head.0.b"]
        diff = pred.reshape(2, 1)[0] - y
        _, grads = loss_and_gradient(params, [(obs, 0, y)])
        expected_w = np.zeros_like(params.arrays["head.0.w"])
        expected_w[:, 0] = 2.0 * diff[0] * u
        assert np.allclose(grads["head.0.w"], expected_w, atol=1e-12)
        expected_b = np.zeros(2)
        expected_b[0] = 2.0 * diff[0]
        assert np.allclose(grads["head.0.b"], expected_b, atol=1e-12)

    def test_finite_difference_check_small(self):
        # The acceptance suite runs the full 5-seed sweep; this is one seed.
        params = init_params(SMALL)
        rng = np.random.default_rng(8)
        batch = [
            (random_obs(rng, t), int(rng.integers(SMALL.n_actions)),
             rng.normal(size=SMALL.n_dims))
            for t in (0, 2, 5)
        ]
        _, grads = loss_and_gradient(params, batch)
        eps = 1e-6
        worst = 0.0
        for key, arr in params.arrays.items():
            flat = arr.ravel()
            idx = np.random.default_rng(9).choice(flat.size, size=min(20, flat.size), replace=False)
            for i in idx:
                orig = flat[i]
                flat[i] = orig + eps
                lp, _ = loss_and_gradient(params, batch)
                flat[i] = orig - eps
                lm, _ = loss_and_gradient(params, batch)
                flat[i] = orig
                fd = (lp - lm) / (2 * eps)
                an = grads[key].ravel()[i]
                rel = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
                worst = max(worst, rel)
        assert worst < 1e-4

    def test_masked_dimensions_receive_gradient(self):
        # Targets differing only in one dimension still move head weights for it.
        params = init_params(SMALL)
        rng = np.random.default_rng(10)
        obs = random_obs(rng, 2)
        base = forward_values(params, obs)[2].copy()
        target = base.copy()
        target[1] += 1.0  # pretend dimension 1 is mask-suppressed; it still trains
        _, grads = loss_and_gradient(params, [(obs, 2, target)])
        last = f"head.{len(SMALL.head_hidden)}.w"
        flat_idx = 2 * SMALL.n_dims + 1  # action 2, dim 1 in the flat output
        assert np.abs(grads[last][:, flat_idx]).max() > 0.0

    def test_nonfinite_targets_rejected(self):
        params = init_params(SMALL)
        obs = random_obs(np.random.default_rng(11), 1)
        with pytest.raises(ValueError):
            loss_and_gradient(params, [(obs, 0, np.array([np.nan, 0.0]))])

    def test_empty_batch_rejected(self):
        params = init_params(SMALL)
        with pytest.raises(ValueError):
            loss_and_gradient(params, [])


class TestSgd:
    def test_zero_gradient_no_change(self):
        params = init_params(SMALL)
        out = sgd_step(params, zero_gradients(params), alpha=0.5)
        assert all(np.array_equal(out.arrays[k], params.arrays[k]) for k in params.arrays)

    def test_elementwise_step(self):
        cfg = ApproximatorConfig(static_dim=1, event_dim=1, n_actions=1, n_dims=1,
                                 static_hidden=(1,), recurrent_width=1, head_hidden=(), seed=0)
        params = init_params(cfg)
        grads = zero_gradients(params)
        params.arrays["head.0.b"][:] = 2.0
        grads["head.0.b"][:] = 0.5
        out = sgd_step(params, grads, alpha=1.0)
        assert out.arrays["head.0.b"][0] == pytest.approx(1.5)

    def test_two_steps_commute_only_for_constant_gradients(self):
        params = init_params(SMALL)
        g = {k: np.full_like(v, 0.01) for k, v in params.arrays.items()}
        twice = sgd_step(sgd_step(params, g, 0.1), g, 0.1)
        summed = sgd_step(params, {k: 2 * v for k, v in g.items()}, 0.1)
        assert all(np.allclose(twice.arrays[k], summed.arrays[k]) for k in g)

    def test_shape_mismatch_rejected(self):
        params = init_params(SMALL)
        grads = zero_gradients(params)
        grads["lstm.b"] = np.zeros(3)
        with pytest.raises(ValueError):
            sgd_step(params, grads, alpha=0.1)

    def test_clip_gradients(self):
        grads = {"a": np.array([3.0, 4.0])}  # norm 5
        clipped, norm = clip_gradients(grads, 1.0)
        assert norm == pytest.approx(5.0)
        assert np.allclose(clipped["a"], [0.6, 0.8])
        same, _ = clip_gradients(grads, 100.0)
        assert same is grads


class TestCheckpoints:
    def test_round_trip_bit_exact(self, tmp_path):
        params = init_params(SMALL)
        path = tmp_path / "net.ckpt"
        save_params(params, path)
        loaded = load_params(path)
        assert loaded.config == params.config
        for k in params.arrays:
            assert np.array_equal(loaded.arrays[k], params.arrays[k])
        obs = random_obs(np.random.default_rng(12), 3)
        assert np.array_equal(forward_values(params, obs), forward_values(loaded, obs))

    def test_truncated_file_rejected(self, tmp_path):
        params = init_params(SMALL)
        path = tmp_path / "net.ckpt"
        save_params(params, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(CheckpointError):
            load_params(path)

    def test_version_bump_rejected(self, tmp_path):
        import struct
        import zlib

        params = init_params(SMALL)
        path = tmp_path / "net.ckpt"
        save_params(params, path)
        data = bytearray(path.read_bytes())[:-4]
        struct.pack_into("<I", data, 8, 999)  # bump the version field
        data += struct.pack("<I", zlib.crc32(bytes(data)) & 0xFFFFFFFF)
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointError, match="version"):
            load_params(path)

    def test_corrupted_payload_fails_checksum(self, tmp_path):
        params = init_params(SMALL)
        path = tmp_path / "net.ckpt"
        save_params(params, path)
        data = bytearray(path.read_bytes())
        data[60] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(CheckpointError, match="checksum"):
            load_params(path)

    def test_fingerprint_tracks_content(self):
        params = init_params(SMALL)
        fp1 = params_fingerprint(params)
        changed = sgd_step(params, {k: np.full_like(v, 1e-3) for k, v in params.arrays.items()}, 0.1)
        assert params_fingerprint(changed) != fp1
        assert params_fingerprint(params) == fp1


class TestIncrementalEncoder:
    def test_matches_full_forward_incrementally(self):
        params = init_params(SMALL)
        rng = np.random.default_rng(13)
        static = rng.normal(size=SMALL.static_dim)
        full_history = rng.normal(size=(9, SMALL.event_dim))
        enc = IncrementalEncoder(params)
        for cut in (0, 3, 4, 9):
            obs = Observation(static, full_history[:cut])
            inc = enc.q_values(obs)
            ref = forward_values(params, obs)
            assert np.allclose(inc, ref, atol=1e-12)

    def test_shrinking_history_rejected(self):
        params = init_params(SMALL)
        enc = IncrementalEncoder(params)
        rng = np.random.default_rng(14)
        enc.q_values(random_obs(rng, 5))
        with pytest.raises(ValueError):
            enc.q_values(random_obs(rng, 2))

    def test_reset_clears_state(self):
        params = init_params(SMALL)
        rng = np.random.default_rng(15)
        obs = random_obs(rng, 4)
        enc = IncrementalEncoder(params)
        enc.q_values(obs)
        enc.reset()
        assert np.allclose(enc.q_values(obs), forward_values(params, obs), atol=1e-12)
