import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alliance_dilemmas import training as tr
from alliance_dilemmas.a2c import a2c_loss_and_grads, a2c_update, discounted_returns, returns_and_advantages
from alliance_dilemmas.network import sequence_forward
from alliance_dilemmas.optim import RMSProp
from alliance_dilemmas.rollout import EVAL, TRAIN


def tiny(scenario, **overrides):
    base = dict(trunk=(8,), lstm=8, n_seeds=1, n_updates=3, eval_every=2, eval_episodes=4,
                episodes_per_update=4)
    base.update(overrides)
    return tr.desk_config(scenario, **base)


def brute_returns(rewards, gamma):
    T = len(rewards)
    return np.array([sum(gamma ** (k - t) * rewards[k] for k in range(t, T)) for t in range(T)])


class TestReturns:
    def test_terminal_reward(self):
        r = np.zeros((15, 1))
        r[14] = 1 / 3
        assert discounted_returns(r, 0.99)[0, 0] == pytest.approx(0.99 ** 14 / 3, abs=1e-15)

    def test_zero_rewards(self):
        values = np.random.default_rng(0).random((15, 2))
        ret, adv = returns_and_advantages(np.zeros((15, 2)), values, 0.99)
        assert not ret.any()
        np.testing.assert_array_equal(adv, -values)

    @given(st.integers(0, 14), st.floats(0.5, 1.0))
    def test_penalty_against_brute_force(self, t, gamma):
        r = np.zeros((15, 1))
        r[t] = -1.0
        r[14] += 1 / 3
        ret = discounted_returns(r, gamma)[:, 0]
        np.testing.assert_allclose(ret, brute_returns(r[:, 0], gamma), atol=1e-12)
        unpenalised = r.copy()
        unpenalised[t] += 1.0
        clean = discounted_returns(unpenalised, gamma)[:, 0]
        # the penalty lowers every return up to step t and none after it
        assert np.all(ret[:t + 1] < clean[:t + 1]) and np.allclose(ret[t + 1:], clean[t + 1:])


class TestRMSProp:
    def test_first_step_closed_form(self):
        params = {"w": np.array([0.0])}
        RMSProp(learning_rate=0.01).step(params, {"w": np.array([1.0])})
        assert params["w"][0] == pytest.approx(-0.01 / np.sqrt(0.01 + 0.001), abs=1e-12)

    def test_zero_gradient_is_identity(self):
        params = {"w": np.array([0.3, -2.0])}
        RMSProp(learning_rate=0.5).step(params, {"w": np.zeros(2)})
        assert params["w"].tolist() == [0.3, -2.0]

    def test_second_step_uses_accumulator(self):
        params = {"w": np.array([0.0])}
        opt = RMSProp(learning_rate=0.01)
        opt.step(params, {"w": np.array([1.0])})
        opt.step(params, {"w": np.array([1.0])})
        acc = 0.99 * 0.01 + 0.01
        expected = -0.01 / np.sqrt(0.011) - 0.01 / np.sqrt(acc + 0.001)
        assert params["w"][0] == pytest.approx(expected, abs=1e-12)


def trajectory(scenario, seed=3):
    cfg = tiny(scenario, trunk=(5,), lstm=5)
    rng = np.random.default_rng(seed)
    agents = tr.build_agents(cfg, rng)
    batch = tr.collect(cfg, agents, 2, TRAIN, rng)
    return cfg, agents[0], batch.trajectories[0]


class TestA2C:
    @pytest.mark.parametrize("scenario", ["baseline", "contracts-3", "punishment"])
    def test_gradient_matches_finite_differences(self, scenario):
        cfg, agent, traj = trajectory(scenario)
        _, _, values, _ = sequence_forward(agent.params, agent.spec, traj.obs)
        adv = discounted_returns(traj.rewards, cfg.gamma) - values
        args = (agent.spec, traj, cfg.loss_weights, cfg.gamma, adv)
        _, grads, _ = a2c_loss_and_grads(agent.params, *args)
        fds, ans = [], []
        for name, p in agent.params.items():
            for idx in list(np.ndindex(p.shape))[::7]:
                old = p[idx]
                p[idx] = old + 1e-6
                up = a2c_loss_and_grads(agent.params, *args)[0]
                p[idx] = old - 1e-6
                down = a2c_loss_and_grads(agent.params, *args)[0]
                p[idx] = old
                fds.append((up - down) / 2e-6)
                ans.append(grads[name][idx])
        fds, ans = np.array(fds), np.array(ans)
        rel = np.linalg.norm(fds - ans) / (np.linalg.norm(fds) + np.linalg.norm(ans))
        assert rel < 1e-4
        assert np.max(np.abs(fds - ans)) < 1e-8

    def test_small_step_decreases_loss(self):
        cfg, agent, traj = trajectory("contracts-3")
        _, _, values, _ = sequence_forward(agent.params, agent.spec, traj.obs)
        adv = discounted_returns(traj.rewards, cfg.gamma) - values
        before, grads, _ = a2c_loss_and_grads(agent.params, agent.spec, traj, cfg.loss_weights, cfg.gamma, adv)
        for name in agent.params:
            agent.params[name] -= 1e-4 * grads[name]
        after = a2c_loss_and_grads(agent.params, agent.spec, traj, cfg.loss_weights, cfg.gamma, adv)[0]
        assert after < before

    def test_non_finite_loss_aborts(self):
        cfg, agent, traj = trajectory("baseline")
        traj.rewards[0, 0] = np.nan
        with pytest.raises(FloatingPointError, match="non-finite"):
            a2c_update(agent.params, agent.spec, traj, RMSProp(0.01), cfg.loss_weights, cfg.gamma)


class TestRollout:
    @pytest.mark.parametrize("scenario", ["baseline", "copybot", "contracts-2", "punishment"])
    def test_payoffs_and_conservation(self, scenario):
        cfg = tiny(scenario)
        rng = np.random.default_rng(0)
        batch = tr.collect(cfg, tr.build_agents(cfg, rng), 8, TRAIN, rng)
        np.testing.assert_allclose(batch.payoffs.sum(axis=1), 1.0)
        assert np.all(batch.gifts + batch.discards == 5)
        assert batch.chips.sum() == batch.gifts.sum()
        for row in batch.payoffs:
            winners = row[row > 0]
            assert np.allclose(winners, 1 / len(winners))

    def test_same_seed_same_batch(self):
        cfg = tiny("punishment")
        batches = []
        for _ in range(2):
            rng = np.random.default_rng(4)
            batches.append(tr.collect(cfg, tr.build_agents(cfg, rng), 6, TRAIN, rng))
        assert np.array_equal(batches[0].payoffs, batches[1].payoffs)
        for i in batches[0].trajectories:
            assert np.array_equal(batches[0].trajectories[i].obs, batches[1].trajectories[i].obs)

    def test_penalties_reach_rewards_once(self):
        cfg = tiny("punishment")
        rng = np.random.default_rng(5)
        batch = tr.collect(cfg, tr.build_agents(cfg, rng), 16, TRAIN, rng)
        for i, traj in batch.trajectories.items():
            shaped = traj.rewards.sum(axis=0) - batch.payoffs[:, i]
            np.testing.assert_allclose(shaped, batch.penalties[:, i])
        assert np.all(np.isin(np.round(batch.penalties, 12), -np.arange(16)))

    def test_copy_bot_has_no_trajectory(self):
        cfg = tiny("copybot")
        rng = np.random.default_rng(0)
        batch = tr.collect(cfg, tr.build_agents(cfg, rng), 2, EVAL, rng)
        assert set(batch.trajectories) == {0, 2}

    def test_observation_width(self):
        # scenarios without contracts keep a zero contract block so layouts line up
        for scenario, width in [("baseline", 79), ("contracts-3", 79), ("punishment", 85)]:
            assert tr.network_spec(tiny(scenario)).obs_dim == width
        assert tr.network_spec(tiny("punishment", observe_obligation=False)).obs_dim == 82


class TestMetrics:
    def test_rates_sum_to_one(self):
        cfg = tiny("contracts-3")
        rng = np.random.default_rng(1)
        batch = tr.collect(cfg, tr.build_agents(cfg, rng), 8, TRAIN, rng)
        for row in tr.batch_metrics(batch, 0):
            assert row["discard_rate"] + row["gift_rate"] == pytest.approx(1.0)
            assert set(row) == set(tr.METRIC_COLUMNS)

    def test_confidence_band(self):
        mean, half = tr.confidence_band(np.array([[1.0], [2.0], [3.0]]))
        assert mean[0] == 2.0 and half[0] == pytest.approx(4.302653 / np.sqrt(3), rel=1e-6)


class TestRunSeed:
    def test_bit_reproducible(self):
        cfg = tiny("contracts-2")
        a, b = tr.run_seed(cfg, 0), tr.run_seed(cfg, 0)
        assert a.train_metrics == b.train_metrics and a.eval_metrics == b.eval_metrics
        for i, agent in a.agents.items():
            if hasattr(agent, "params"):
                for name in agent.params:
                    assert np.array_equal(agent.params[name], b.agents[i].params[name])

    def test_eval_schedule(self):
        res = tr.run_seed(tiny("baseline"), 0)
        assert [u for u, _, _ in res.eval_draws] == [0, 2, 3]
        assert len(res.signings) == 3 and len(res.final_eval()) == 3

    def test_checkpoint_round_trip(self, tmp_path):
        cfg = tiny("copybot")
        res = tr.run_seed(cfg, 1)
        paths = tr.save_agents(tmp_path, cfg, res)
        assert [p.name for p in paths] == ["seed1_agent0.json", "seed1_agent2.json"]
        assert tr.config_from_checkpoint(paths[0]) == cfg
        agents = tr.load_agents(paths, cfg)
        rng_a, rng_b = np.random.default_rng(9), np.random.default_rng(9)
        a = tr.collect(cfg, res.agents, 4, EVAL, rng_a)
        b = tr.collect(cfg, agents, 4, EVAL, rng_b)
        assert np.array_equal(a.payoffs, b.payoffs)
        with pytest.raises(ValueError):
            tr.load_agents(paths[:1], cfg)


class TestConfig:
    def test_unknown_override_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            tr.with_overrides(tr.TrainConfig(), learnin_rate=0.1)

    def test_paper_defaults(self):
        cfg = tr.TrainConfig.for_scenario("punishment")
        assert (cfg.learning_rate, cfg.contract_weight, cfg.trunk, cfg.lstm) == (0.002738, 3.371262, (128, 128), 128)

    @pytest.mark.parametrize("bad", [dict(gamma=0.0), dict(entropy_env=-1.0), dict(scenario="chess")])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            tr.TrainConfig(**bad)


class TestRegression:
    def test_synthetic_oracle(self):
        rng = np.random.default_rng(0)
        x = rng.integers(0, 6, 150).astype(float)
        y = 2 * x + rng.normal(0, 1, 150)
        slope, intercept, p = tr.ols(x, y)
        # closed-form least squares
        xc = x - x.mean()
        assert slope == pytest.approx((xc * (y - y.mean())).sum() / (xc * xc).sum(), rel=1e-12)
        assert intercept == pytest.approx(y.mean() - slope * x.mean(), rel=1e-12)
        assert slope == pytest.approx(2.0, abs=0.15) and p < 0.01

    def test_degenerate(self):
        with pytest.raises(tr.DegenerateRegression):
            tr.ols([1, 1, 1, 1], [0, 1, 2, 3])

    @settings(deadline=None, max_examples=5)
    @given(st.integers(0, 1000))
    def test_report_has_150_records(self, seed):
        cfg = tiny("contracts-3")
        agents = tr.build_agents(cfg, np.random.default_rng(seed))
        try:
            report = tr.regression_report(agents, cfg, episodes=50, seed=seed)
        except tr.DegenerateRegression:
            pytest.skip("untrained agents signed no contracts")
        assert len(report.records) == 150
        assert {r[1] for r in report.records} == {0, 1, 2}
