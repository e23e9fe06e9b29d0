"""Engine tests: clipping, noise calibration, control variates, reductions.

The bitwise reduction equivalences (sigma=0 SCAFFOLD, zeroed controls,
K s = 1 FedSGD) are the load-bearing correctness checks: they pin the
update rules of the four algorithm families against each other.
"""

import math

import numpy as np
import pytest

from dpfed import datagen, engine, models, rngstream
from dpfed.engine import Algorithm, ServerState, TrainConfig


@pytest.fixture(scope="module")
def small_data():
    return datagen.synth_generate(
        datagen.SynthConfig(users=10, records=50, n_features=6, n_classes=3, alpha=1.0, beta=1.0, seed=3)
    )


@pytest.fixture(scope="module")
def small_model(small_data):
    return models.LogisticRegression(small_data.n_features, small_data.n_classes, l2=5e-3)


def base_config(**overrides):
    base = dict(
        algorithm=Algorithm.DP_SCAFFOLD,
        rounds=4,
        local_steps=3,
        user_ratio=0.5,
        data_ratio=0.25,
        eta0=0.2,
        sigma_g=2.0,
        clip_mode=engine.CLIP_FIXED,
        clip_c=1.0,
        seed=17,
    )
    base.update(overrides)
    return TrainConfig(**base)


class TestClip:
    def test_short_vector_unchanged(self):
        g = np.array([0.3, 0.4])
        assert np.array_equal(engine.clip(g, 1.0), g)

    def test_rescales_to_threshold(self):
        out = engine.clip(np.array([3.0, 4.0]), 1.0)
        assert np.allclose(out, [0.6, 0.8])

    def test_infinite_threshold_is_identity(self):
        g = np.array([100.0, -250.0])
        assert np.array_equal(engine.clip(g, math.inf), g)

    def test_norm_bounded_randomized(self):
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            g = rng.standard_normal(4) * rng.uniform(0, 10)
            c = rng.uniform(0.1, 5.0)
            clipped = engine.clip(g, c)
            assert np.linalg.norm(clipped) <= c * (1 + 1e-12)
            # direction preserved
            if np.linalg.norm(g) > 0:
                cos = clipped @ g / (np.linalg.norm(clipped) * np.linalg.norm(g) + 1e-300)
                assert cos >= 1 - 1e-9


class TestNoisyBatchGradient:
    def test_zero_noise_is_clipped_mean(self, small_model):
        rng = np.random.default_rng(1)
        params = rng.standard_normal(small_model.dim)
        X = rng.standard_normal((8, 6))
        y = rng.integers(0, 3, 8)
        got, _ = engine.noisy_batch_gradient(
            small_model, params, X, y, 0.5, 0.0, engine.SENS_RECORD, 0.25
        )
        gsum, _ = small_model.clipped_grad_sum(params, X, y, 0.5)
        want = gsum / 8 + small_model.reg_grad(params)
        assert np.allclose(got, want, atol=1e-15)

    def test_equal_small_gradients_pass_through(self):
        model = models.LogisticRegression(3, 2, l2=0.0)
        params = np.zeros(model.dim)
        X = np.tile(np.array([0.1, 0.2, 0.0]), (5, 1))
        y = np.zeros(5, dtype=np.int64)
        got, _ = engine.noisy_batch_gradient(model, params, X, y, 10.0, 0.0, engine.SENS_RECORD, 1.0)
        single = model.per_example_loss_grad(params, X[0], 0)[1]
        assert np.allclose(got, single, atol=1e-12)

    def test_empty_batch_error(self, small_model):
        with pytest.raises(ValueError, match="empty"):
            engine.noisy_batch_gradient(
                small_model, np.zeros(small_model.dim), np.zeros((0, 6)),
                np.zeros(0, dtype=np.int64), 1.0, 1.0, engine.SENS_RECORD, 0.25,
            )

    def test_noise_requires_finite_clip(self, small_model):
        with pytest.raises(ValueError, match="finite clip"):
            engine.noisy_batch_gradient(
                small_model, np.zeros(small_model.dim), np.zeros((2, 6)),
                np.zeros(2, dtype=np.int64), math.inf, 1.0, engine.SENS_RECORD, 0.25,
                rng=np.random.default_rng(0),
            )

    @pytest.mark.parametrize("sensitivity", [engine.SENS_RECORD, engine.SENS_USER])
    def test_noise_variance_calibration(self, sensitivity):
        # A6: empirical per-coordinate variance of (output - clipped mean)
        # within 5% of (S sigma_g)^2 over 1e5 samples
        model = models.LogisticRegression(4, 3, l2=0.0)
        params = np.zeros(model.dim)
        rng_data = np.random.default_rng(2)
        X = rng_data.standard_normal((10, 4))
        y = rng_data.integers(0, 3, 10)
        clip_c, sigma_g, s = 0.7, 1.5, 0.2
        base, _ = engine.noisy_batch_gradient(model, params, X, y, clip_c, 0.0, sensitivity, s)
        rng = np.random.default_rng(3)
        draws = math.ceil(100_000 / model.dim)
        samples = np.empty((draws, model.dim))
        for i in range(draws):
            noisy, _ = engine.noisy_batch_gradient(
                model, params, X, y, clip_c, sigma_g, sensitivity, s, rng=rng
            )
            samples[i] = noisy - base
        scale = engine.noise_scale(clip_c, len(y), s, sensitivity) * sigma_g
        empirical = samples.ravel().var()
        assert abs(empirical - scale**2) <= 0.05 * scale**2

    def test_sensitivity_modes(self):
        assert engine.noise_scale(1.0, 100, 0.2, engine.SENS_RECORD) == pytest.approx(0.02)
        assert engine.noise_scale(1.0, 100, 0.2, engine.SENS_USER) == pytest.approx(10.0)


class TestLocalRound:
    def test_single_plain_gradient_step(self, small_data, small_model):
        # K=1, sigma=0, zero controls, full batch: dy = -eta_l grad F_i,
        # dc = grad F_i
        cfg = base_config(
            local_steps=1, data_ratio=1.0, sigma_g=0.0, clip_c=math.inf, eta0=0.3
        )
        dim = small_model.dim
        server = ServerState(np.zeros(dim), np.zeros(dim), 0, math.inf)
        controls = np.zeros((small_data.n_users, dim))
        delta, _ = engine.local_round(2, server, controls, cfg, small_data, small_model)
        grad = small_model.mean_grad(np.zeros(dim), *small_data.user_train(2))
        assert np.allclose(delta.dy, -cfg.eta_l * grad, atol=1e-12)
        assert np.allclose(delta.dc, grad, atol=1e-12)

    @staticmethod
    def replay_h_mean(uid, server, controls, cfg, data, model):
        """Running mean of the applied noisy gradients, rebuilt from the
        same keyed streams (the independent route of the closed form)."""
        X, y = data.user_train(uid)
        batch = int(cfg.data_ratio * len(y))
        t = server.round + 1
        batch_rng = rngstream.stream(cfg.seed, rngstream.BATCH, t, uid)
        noise = None
        if cfg.sigma_g > 0:
            noise = rngstream.stream(cfg.seed, rngstream.NOISE, t, uid).standard_normal(
                (cfg.local_steps, model.dim)
            )
        y_local = server.x.copy()
        correction = server.c - controls[uid]
        h_sum = np.zeros(model.dim)
        for k in range(cfg.local_steps):
            idx = batch_rng.choice(len(y), size=batch, replace=False)
            g, _ = engine.noisy_batch_gradient(
                model, y_local, X[idx], y[idx], server.clip_c, cfg.sigma_g,
                cfg.sensitivity, cfg.data_ratio, noise=None if noise is None else noise[k],
            )
            h_sum += g
            y_local = y_local - cfg.eta_l * (g + correction)
        return h_sum / cfg.local_steps

    def test_control_variate_closed_form_every_user_every_round(self, small_data, small_model):
        # telescoped c~ agrees with the running mean of H~ to 1e-9 relative
        # for every selected user in every round of a small run
        cfg = base_config(rounds=3, clip_mode=engine.CLIP_MEDIAN)
        dim = small_model.dim
        states = [
            ServerState(
                small_model.init_params(rngstream.stream(cfg.seed, rngstream.INIT)),
                np.zeros(dim), 0, cfg.clip_c,
            )
        ]
        control_snaps = [np.zeros((small_data.n_users, dim))]

        def capture(server, controls):
            states.append(ServerState(server.x.copy(), server.c.copy(), server.round, server.clip_c))
            control_snaps.append(controls.copy())

        engine.run(cfg, small_data, small_model, record_metrics=False, round_hook=capture)

        checked = 0
        for t in range(1, cfg.rounds + 1):
            server = states[t - 1]
            controls = control_snaps[t - 1]
            sel = rngstream.stream(cfg.seed, rngstream.SELECT, t).choice(
                small_data.n_users, size=int(cfg.user_ratio * small_data.n_users), replace=False
            )
            for uid in sel:
                delta, _ = engine.local_round(int(uid), server, controls, cfg, small_data, small_model)
                telescoped = delta.dc + controls[int(uid)]
                replayed = self.replay_h_mean(int(uid), server, controls, cfg, small_data, small_model)
                rel = np.linalg.norm(telescoped - replayed) / np.linalg.norm(replayed)
                assert rel <= 1e-9
                checked += 1
        assert checked == cfg.rounds * int(cfg.user_ratio * small_data.n_users)

    def test_matching_controls_cancel_drift(self, small_data, small_model):
        # with c_i = c the correction vanishes and the SCAFFOLD trajectory
        # equals the FedAvg one bitwise under shared streams
        dim = small_model.dim
        rng0 = np.random.default_rng(10)
        x0 = rng0.standard_normal(dim) * 0.1
        shared = rng0.standard_normal(dim) * 0.05
        cfg_s = base_config()
        cfg_f = base_config(algorithm=Algorithm.DP_FEDAVG)
        server_s = ServerState(x0.copy(), shared.copy(), 0, cfg_s.clip_c)
        server_f = ServerState(x0.copy(), np.zeros(dim), 0, cfg_f.clip_c)
        controls = np.tile(shared, (small_data.n_users, 1))
        d_s, _ = engine.local_round(1, server_s, controls, cfg_s, small_data, small_model)
        d_f, _ = engine.local_round(1, server_f, np.zeros_like(controls), cfg_f, small_data, small_model)
        assert np.array_equal(d_s.dy, d_f.dy)

    def test_order_independence(self, small_data, small_model):
        cfg = base_config()
        dim = small_model.dim
        server = ServerState(np.zeros(dim), np.zeros(dim), 0, cfg.clip_c)
        controls = np.zeros((small_data.n_users, dim))
        forward = [engine.local_round(u, server, controls, cfg, small_data, small_model)[0] for u in (0, 3, 7)]
        backward = [engine.local_round(u, server, controls, cfg, small_data, small_model)[0] for u in (7, 3, 0)]
        for a, b in zip(forward, reversed(backward)):
            assert np.array_equal(a.dy, b.dy)
            assert np.array_equal(a.dc, b.dc)


class TestAggregate:
    def test_single_user_unit_step(self):
        cfg = base_config(user_ratio=0.1, eta_g=1.0)
        server = ServerState(np.ones(3), np.zeros(3), 0)
        dy = np.array([0.5, -1.0, 2.0])
        out = engine.aggregate(server, [engine.RoundDelta(dy, np.zeros(3))], cfg, 10)
        assert np.allclose(out.x, server.x + dy)
        assert out.round == 1

    def test_common_control_delta(self):
        cfg = base_config(user_ratio=0.5)
        server = ServerState(np.zeros(3), np.full(3, 0.2), 0)
        v = np.array([1.0, 2.0, 3.0])
        deltas = [engine.RoundDelta(np.zeros(3), v.copy()) for _ in range(2)]
        out = engine.aggregate(server, deltas, cfg, 4)
        assert np.allclose(out.c, server.c + cfg.user_ratio * v)

    def test_dimension_mismatch(self):
        cfg = base_config()
        server = ServerState(np.zeros(3), np.zeros(3), 0)
        with pytest.raises(ValueError, match="dimension"):
            engine.aggregate(server, [engine.RoundDelta(np.zeros(4), np.zeros(4))], cfg, 10)

    def test_server_control_stays_mean_of_user_controls(self, small_data, small_model):
        # induction invariant with floor(l M) = l M exactly (cold start)
        cfg = base_config(rounds=6, user_ratio=0.5, sigma_g=0.0, clip_c=math.inf)
        worst = 0.0

        def check(server, controls):
            nonlocal worst
            worst = max(worst, float(np.max(np.abs(server.c - controls.mean(axis=0)))))

        engine.run(cfg, small_data, small_model, record_metrics=False, round_hook=check)
        assert worst <= 1e-12


class TestWarmStart:
    def test_full_participation_initializes_all(self, small_data, small_model):
        cfg = base_config(
            algorithm=Algorithm.SCAFFOLD_WARM, user_ratio=1.0, data_ratio=1.0,
            local_steps=1, sigma_g=0.0, clip_c=math.inf,
        )
        dim = small_model.dim
        server = ServerState(np.zeros(dim), np.zeros(dim), 0, math.inf)
        controls = np.zeros((small_data.n_users, dim))
        used = engine.warm_start(server, controls, cfg, small_data, small_model)
        assert used == 4  # ceil(4/l) with l=1
        for i in range(small_data.n_users):
            grad = small_model.mean_grad(np.zeros(dim), *small_data.user_train(i))
            assert np.allclose(controls[i], grad, atol=1e-12)
        pool_grad = np.mean(
            [small_model.mean_grad(np.zeros(dim), *small_data.user_train(i)) for i in range(small_data.n_users)],
            axis=0,
        )
        assert np.allclose(server.c, pool_grad, atol=1e-12)

    def test_round_count(self, small_data, small_model):
        cfg = base_config(algorithm=Algorithm.DP_SCAFFOLD_WARM, user_ratio=0.3)
        dim = small_model.dim
        server = ServerState(np.zeros(dim), np.zeros(dim), 0, cfg.clip_c)
        controls = np.zeros((small_data.n_users, dim))
        used = engine.warm_start(server, controls, cfg, small_data, small_model)
        assert used == math.ceil(4.0 / 0.3)

    def test_coverage_probability(self):
        # after 4/l rounds of l-sampling each user is covered w.p.
        # about 1 - e^-4 ~= 0.98; check mean per-user coverage over 200
        # seeded trials (full-set coverage is only ~0.23, see ledger)
        n_users, ratio = 100, 0.1
        rounds = math.ceil(4.0 / ratio)
        covered = 0
        for trial in range(200):
            seen = np.zeros(n_users, dtype=bool)
            for w in range(rounds):
                sel = rngstream.stream(trial, rngstream.WARM_SELECT, w).choice(
                    n_users, size=int(ratio * n_users), replace=False
                )
                seen[sel] = True
            covered += int(seen.sum())
        assert covered / (200 * n_users) >= 0.95


class TestReductions:
    """A5: reduction equivalences hold bitwise under shared seeds."""

    def test_zero_noise_recovers_scaffold(self, small_data, small_model):
        dp = base_config(sigma_g=0.0, clip_c=math.inf, rounds=5)
        plain = dp.replace(algorithm=Algorithm.SCAFFOLD)
        a = engine.run(dp, small_data, small_model, record_metrics=False)
        b = engine.run(plain, small_data, small_model, record_metrics=False)
        assert np.array_equal(a.final_params, b.final_params)
        assert np.array_equal(a.server_control, b.server_control)
        assert np.array_equal(a.user_controls, b.user_controls)

    def test_zero_noise_warm_recovers_scaffold_warm(self, small_data, small_model):
        dp = base_config(algorithm=Algorithm.DP_SCAFFOLD_WARM, sigma_g=0.0, clip_c=math.inf, rounds=3)
        plain = dp.replace(algorithm=Algorithm.SCAFFOLD_WARM)
        a = engine.run(dp, small_data, small_model, record_metrics=False)
        b = engine.run(plain, small_data, small_model, record_metrics=False)
        assert np.array_equal(a.final_params, b.final_params)

    def test_zeroed_controls_recover_fedavg(self, small_data, small_model):
        scaffold = base_config(rounds=5)
        fed = scaffold.replace(algorithm=Algorithm.DP_FEDAVG)

        def zero_controls(server, controls):
            server.c[:] = 0.0
            controls[:] = 0.0

        a = engine.run(scaffold, small_data, small_model, record_metrics=False, round_hook=zero_controls)
        b = engine.run(fed, small_data, small_model, record_metrics=False)
        assert np.array_equal(a.final_params, b.final_params)

    def test_unit_ks_recovers_fedsgd(self, small_data, small_model):
        fedavg = base_config(algorithm=Algorithm.DP_FEDAVG, local_steps=4, data_ratio=0.25, rounds=5)
        fedsgd = fedavg.replace(algorithm=Algorithm.DP_FEDSGD)
        a = engine.run(fedavg, small_data, small_model, record_metrics=False)
        b = engine.run(fedsgd, small_data, small_model, record_metrics=False)
        assert np.array_equal(a.final_params, b.final_params)

    def test_nonprivate_pair(self, small_data, small_model):
        fedavg = base_config(
            algorithm=Algorithm.FEDAVG, local_steps=4, data_ratio=0.25, rounds=5,
            sigma_g=0.0, clip_c=math.inf,
        )
        fedsgd = fedavg.replace(algorithm=Algorithm.FEDSGD)
        a = engine.run(fedavg, small_data, small_model, record_metrics=False)
        b = engine.run(fedsgd, small_data, small_model, record_metrics=False)
        assert np.array_equal(a.final_params, b.final_params)


class TestDeterminism:
    def test_identical_seed_identical_trace(self, small_data, small_model):
        cfg = base_config(rounds=5, clip_mode=engine.CLIP_MEDIAN)
        a = engine.run(cfg, small_data, small_model)
        b = engine.run(cfg, small_data, small_model)
        assert np.array_equal(a.final_params, b.final_params)
        for ra, rb in zip(a.rows, b.rows):
            assert ra == rb

    def test_different_seed_differs(self, small_data, small_model):
        cfg = base_config(rounds=3)
        a = engine.run(cfg, small_data, small_model, record_metrics=False)
        b = engine.run(cfg.replace(seed=cfg.seed + 1), small_data, small_model, record_metrics=False)
        assert not np.array_equal(a.final_params, b.final_params)


class TestMedianHeuristic:
    def test_threshold_follows_median_of_norms(self, small_data, small_model):
        cfg = base_config(rounds=2, clip_mode=engine.CLIP_MEDIAN, clip_c=1.0)
        trace = engine.run(cfg, small_data, small_model)
        # reconstruct round 1 with the same streams and state
        dim = small_model.dim
        x0 = small_model.init_params(rngstream.stream(cfg.seed, rngstream.INIT))
        server = ServerState(x0, np.zeros(dim), 0, cfg.clip_c)
        controls = np.zeros((small_data.n_users, dim))
        sel = rngstream.stream(cfg.seed, rngstream.SELECT, 1).choice(
            small_data.n_users, size=int(cfg.user_ratio * small_data.n_users), replace=False
        )
        norms = np.concatenate(
            [engine.local_round(int(u), server, controls, cfg, small_data, small_model)[1] for u in sel]
        )
        assert trace.rows[0].clip_c == pytest.approx(float(np.median(norms)), rel=1e-12)

    def test_fixed_mode_keeps_threshold(self, small_data, small_model):
        cfg = base_config(rounds=3, clip_mode=engine.CLIP_FIXED, clip_c=0.8)
        trace = engine.run(cfg, small_data, small_model)
        assert all(r.clip_c == 0.8 for r in trace.rows)


class TestValidation:
    def test_tiny_sampling_rejected(self, small_data, small_model):
        with pytest.raises(ValueError, match="floor"):
            engine.run(base_config(user_ratio=0.05), small_data, small_model)
        with pytest.raises(ValueError, match="floor"):
            engine.run(base_config(data_ratio=0.01), small_data, small_model)

    def test_fedsgd_requires_unit_ks(self, small_data, small_model):
        cfg = base_config(algorithm=Algorithm.DP_FEDSGD, local_steps=3, data_ratio=0.25)
        with pytest.raises(ValueError, match="K \\* s"):
            engine.run(cfg, small_data, small_model)

    def test_nonprivate_forces_no_noise(self, small_data, small_model):
        cfg = base_config(algorithm=Algorithm.SCAFFOLD, sigma_g=1.0, clip_c=math.inf)
        with pytest.raises(ValueError, match="sigma_g"):
            engine.run(cfg, small_data, small_model)

    def test_nonprivate_forces_no_clipping(self, small_data, small_model):
        cfg = base_config(algorithm=Algorithm.FEDAVG, local_steps=4, sigma_g=0.0, clip_c=1.0)
        with pytest.raises(ValueError, match="clipping"):
            engine.run(cfg, small_data, small_model)
