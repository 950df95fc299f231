import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from alliance_dilemmas import network as nn
from alliance_dilemmas.agents import CopyBot, LearningAgent, RandomAgent, copy_bot_act, stubborn_act
from alliance_dilemmas.gifting import DISCARD, GiftTo

SPEC = nn.NetworkSpec(obs_dim=7, n_actions=3, n_offers=19, trunk=(6, 5), lstm=4)


def fresh(seed=0, spec=SPEC):
    return nn.init_params(spec, np.random.default_rng(seed))


class TestForward:
    def test_distributions_sum_to_one(self):
        rng = np.random.default_rng(1)
        env, con, v, mem = nn.forward(fresh(), SPEC, nn.initial_memory(SPEC, 5), rng.random((5, 7)))
        np.testing.assert_allclose(env.sum(axis=1), 1.0)
        np.testing.assert_allclose(con.sum(axis=1), 1.0)
        assert v.shape == (5,) and mem.h.shape == (5, 4)

    def test_single_legal_action_has_probability_one(self):
        mask = np.array([[False, True, False]])
        env, _, _, _ = nn.forward(fresh(), SPEC, nn.initial_memory(SPEC, 1), np.ones(7), env_mask=mask)
        assert env.tolist() == [[0.0, 1.0, 0.0]]

    def test_forced_offer_floor(self):
        params = fresh()
        params["Wc"][:] = 0.0  # uniform contract head
        _, con, _, _ = nn.forward(params, SPEC, nn.initial_memory(SPEC, 2), np.ones((2, 7)),
                                  forced_offer=[4, -1], p_c=0.5)
        assert con[0, 4] == pytest.approx(0.5 + 0.5 / 19)
        assert con[1, 4] == pytest.approx(1 / 19)

    def test_floor_lifts_point_two_to_point_six(self):
        params = fresh()
        params["Wc"][:] = 0.0
        params["bc"][:] = -50.0
        params["bc"][:2] = [np.log(0.2), np.log(0.8)]
        _, con, _, _ = nn.forward(params, SPEC, nn.initial_memory(SPEC, 1), np.ones(7),
                                  forced_offer=0, p_c=0.5)
        assert con[0, 0] == pytest.approx(0.6)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            nn.core_step(fresh(), SPEC, nn.initial_memory(SPEC, 1), np.ones(8))
        with pytest.raises(ValueError):
            nn.forward(fresh(), SPEC, nn.initial_memory(SPEC, 1), np.ones(7), env_mask=np.ones(4, bool))

    def test_deterministic(self):
        obs = np.random.default_rng(3).random((2, 7))
        a = nn.forward(fresh(9), SPEC, nn.initial_memory(SPEC, 2), obs)
        b = nn.forward(fresh(9), SPEC, nn.initial_memory(SPEC, 2), obs)
        for x, y in zip(a[:3], b[:3]):
            assert np.array_equal(x, y)

    def test_sequence_matches_stepping(self):
        params = fresh(2)
        obs = np.random.default_rng(4).random((6, 3, 7))
        e, k, v, _ = nn.sequence_forward(params, SPEC, obs)
        mem = nn.initial_memory(SPEC, 3)
        for t in range(6):
            et, kt, vt, mem = nn.core_step(params, SPEC, mem, obs[t])
            np.testing.assert_allclose(e[t], et, atol=1e-12)
            np.testing.assert_allclose(k[t], kt, atol=1e-12)
            np.testing.assert_allclose(v[t], vt, atol=1e-12)

    @given(st.lists(st.floats(-30, 30), min_size=3, max_size=3),
           st.lists(st.booleans(), min_size=3, max_size=3).filter(any))
    def test_masked_softmax(self, logits, mask):
        p = nn.masked_softmax(np.array(logits), np.array(mask))
        assert p.sum() == pytest.approx(1.0)
        assert np.all(p[~np.array(mask)] == 0)


class TestBackward:
    def test_head_gradients_match_finite_differences(self):
        spec = nn.NetworkSpec(5, 3, 4, trunk=(5,), lstm=5)
        params = fresh(5, spec)
        rng = np.random.default_rng(6)
        obs = rng.random((4, 2, 5))
        ce, ck, cv = rng.normal(size=(4, 2, 3)), rng.normal(size=(4, 2, 4)), rng.normal(size=(4, 2))

        def loss():
            e, k, v, _ = nn.sequence_forward(params, spec, obs)
            return (ce * e).sum() + (ck * k).sum() + (cv * v).sum()

        _, _, _, cache = nn.sequence_forward(params, spec, obs)
        grads = nn.sequence_backward(params, spec, cache, ce, ck, cv)
        for name, p in params.items():
            for idx in list(np.ndindex(p.shape))[::3]:
                old = p[idx]
                p[idx] = old + 1e-6
                up = loss()
                p[idx] = old - 1e-6
                down = loss()
                p[idx] = old
                assert grads[name][idx] == pytest.approx((up - down) / 2e-6, abs=1e-6), name


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        params = fresh(7)
        path = tmp_path / "agent.json"
        nn.save_checkpoint(path, SPEC, params, {"seed": 7})
        spec, loaded, extra = nn.load_checkpoint(path)
        assert spec == SPEC and extra == {"seed": 7}
        for name in params:
            assert np.array_equal(params[name], loaded[name])
        obs = np.random.default_rng(0).random((1, 7))
        a = nn.forward(params, SPEC, nn.initial_memory(SPEC, 1), obs)[0]
        b = nn.forward(loaded, spec, nn.initial_memory(spec, 1), obs)[0]
        assert np.array_equal(a, b)

    def test_wrong_version_rejected(self, tmp_path):
        path = tmp_path / "agent.json"
        nn.save_checkpoint(path, SPEC, fresh())
        payload = json.loads(path.read_text())
        payload["version"] = 99
        path.write_text(json.dumps(payload))
        with pytest.raises(ValueError):
            nn.load_checkpoint(path)


class TestInit:
    def test_shapes_and_forget_bias(self):
        params = fresh()
        assert {k: v.shape for k, v in params.items()} == SPEC.shapes()
        assert np.all(params["bl"][4:8] == 1.0) and np.all(params["bl"][:4] == 0.0)

    def test_learning_agent_create(self):
        agent = LearningAgent.create(SPEC, np.random.default_rng(0), contracts=True)
        assert agent.contracts and set(agent.params) == set(SPEC.shapes())


class TestScriptedAgents:
    @pytest.mark.parametrize("last,expected", [
        (None, DISCARD),
        (DISCARD, DISCARD),
        (GiftTo(1), GiftTo(0)),  # gift to the bot comes back to the target
        (GiftTo(2), GiftTo(2)),  # gift to a third player is copied
    ])
    def test_copy_bot(self, last, expected):
        assert copy_bot_act(last, bot=1, target=0) == expected

    def test_copy_bot_tracks_only_target(self):
        bot = CopyBot(bot=1, target=0)
        bot.observe(2, GiftTo(1))
        assert bot.act() == DISCARD
        bot.observe(0, GiftTo(1))
        assert bot.act() == GiftTo(0)
        bot.reset()
        assert bot.act() == DISCARD

    @pytest.mark.parametrize("prob,action", [(1.0, 0), (0.0, 1)])
    def test_stubborn_deterministic(self, prob, action):
        rng = np.random.default_rng(0)
        assert {stubborn_act(prob, rng) for _ in range(100)} == {action}

    def test_stubborn_half(self):
        rng = np.random.default_rng(0)
        share = np.mean([stubborn_act(0.5, rng) == 0 for _ in range(10_000)])
        assert share == pytest.approx(0.5, abs=0.02)

    def test_stubborn_range(self):
        with pytest.raises(ValueError):
            stubborn_act(1.5, np.random.default_rng(0))

    def test_random_agent_never_gifts_itself(self):
        agent = RandomAgent(player=2, n_players=3)
        rng = np.random.default_rng(0)
        seen = {agent.act(rng) for _ in range(200)}
        assert seen == {DISCARD, GiftTo(0), GiftTo(1)}
