"""Fast built-in property and oracle checks behind the ``verify`` subcommand."""

from __future__ import annotations

import sys

import numpy as np

from . import contracts as ct
from . import dynamics as dyn
from . import gifting as gf
from . import matrix_games as mg
from .a2c import a2c_loss_and_grads, discounted_returns
from .network import sequence_forward
from .optim import RMSProp
from .rollout import TRAIN
from .training import build_agents, collect, desk_config


def check_odd_one_out_gradient():
    game = mg.odd_one_out()
    pts = np.random.default_rng(0).random((1000, 3))
    g = dyn.exact_gradient(game, pts, 2)
    err = np.max(np.abs(g - 2.0 * (1.0 - pts[:, 0] - pts[:, 1]) / 3.0))
    assert err < 1e-12, f"closed-form mismatch {err:g}"


def check_gradient_finite_difference():
    rng = np.random.default_rng(1)
    game = mg.build_pq_game(*rng.random(2))
    for pt in rng.random((50, 3)):
        g = dyn.gradient_field(game, pt)
        for i in range(3):
            hi, lo = pt.copy(), pt.copy()
            hi[i] += 1e-5
            lo[i] -= 1e-5
            fd = (dyn.expected_payoffs(game, hi)[i] - dyn.expected_payoffs(game, lo)[i]) / 2e-5
            assert abs(fd - g[i]) <= 1e-8, f"player {i}: {fd} vs {g[i]}"


def check_alliance_optima():
    opt = dyn.alliance_optimum(mg.odd_one_out())
    assert abs(opt.match_prob - 0.75) < 1e-6 and abs(opt.per_learner_value - 0.375) < 1e-6, opt
    opt = dyn.alliance_optimum(mg.matching())
    assert opt.per_learner_value == 0.5, opt


def check_reduced_classification():
    for game, strict, greed, fear in ((mg.matching(), True, False, True),
                                      (mg.odd_one_out(), False, True, False)):
        red = mg.reduce_two_player(game, 2, 1.0)
        found = [c for c in (mg.classify(mg.DilemmaPayoffs.from_reduced(red, a)) for a in (0, 1))
                 if c.is_dilemma]
        assert len(found) == 1, found
        cls = found[0]
        assert (cls.strict, cls.greed, cls.fear) == (strict, greed, fear), cls


def check_gifting_invariants():
    config = gf.GiftingConfig()
    rng = np.random.default_rng(2)
    for _ in range(100):
        state = gf.reset(config, rng)
        n_turns = 0
        while not state.terminal:
            p = gf.current_player(state)
            legal = gf.legal_actions(state, p)
            state = gf.step(state, legal[rng.integers(len(legal))])
            n_turns += 1
            total = sum(state.own_remaining) + sum(map(sum, state.holdings)) + sum(state.discarded)
            assert total == config.n_players * config.m_chips, "chips not conserved"
        assert n_turns == config.episode_length
        assert abs(sum(gf.score(state).payoffs) - 1.0) < 1e-12


def check_discarding_is_equilibrium():
    found = gf.profitable_deviations(gf.GiftingConfig(m_chips=2))
    assert not found, f"{len(found)} profitable deviations"


def check_offer_alphabet():
    for player in range(3):
        alphabet = ct.OfferAlphabet(3, player)
        assert alphabet.size == ct.offer_alphabet_size(3) == 19
        for k in range(alphabet.size):
            assert alphabet.encode(alphabet.decode(k)) == k


def check_rmsprop_first_step():
    params = {"w": np.array([0.0])}
    opt = RMSProp(learning_rate=0.01)
    opt.step(params, {"w": np.array([1.0])})
    expected = -0.01 / np.sqrt(0.01 + 0.001)
    assert abs(params["w"][0] - expected) < 1e-12, params


def check_a2c_gradient():
    cfg = desk_config("punishment", trunk=(5,), lstm=5)
    rng = np.random.default_rng(3)
    agents = build_agents(cfg, rng)
    batch = collect(cfg, agents, 2, TRAIN, rng)
    agent, traj = agents[0], batch.trajectories[0]
    _, _, values, _ = sequence_forward(agent.params, agent.spec, traj.obs)
    adv = discounted_returns(traj.rewards, cfg.gamma) - values
    _, grads, _ = a2c_loss_and_grads(agent.params, agent.spec, traj, cfg.loss_weights, cfg.gamma, adv)
    fds, ans = [], []
    for name, p in agent.params.items():
        for idx in list(np.ndindex(p.shape))[:6]:
            old = p[idx]
            p[idx] = old + 1e-6
            up = a2c_loss_and_grads(agent.params, agent.spec, traj, cfg.loss_weights, cfg.gamma, adv)[0]
            p[idx] = old - 1e-6
            down = a2c_loss_and_grads(agent.params, agent.spec, traj, cfg.loss_weights, cfg.gamma, adv)[0]
            p[idx] = old
            fds.append((up - down) / 2e-6)
            ans.append(grads[name][idx])
    fds, ans = np.array(fds), np.array(ans)
    # norm-wise, so entries near zero do not turn roundoff into a large ratio
    rel = np.linalg.norm(fds - ans) / (np.linalg.norm(fds) + np.linalg.norm(ans))
    assert rel < 1e-4, f"relative error {rel:g}"


CHECKS = [
    check_odd_one_out_gradient,
    check_gradient_finite_difference,
    check_alliance_optima,
    check_reduced_classification,
    check_gifting_invariants,
    check_discarding_is_equilibrium,
    check_offer_alphabet,
    check_rmsprop_first_step,
    check_a2c_gradient,
]


def run_checks(stream=sys.stdout) -> list[str]:
    """Run every check, print one line each, return the names that failed."""
    failures = []
    for check in CHECKS:
        name = check.__name__.removeprefix("check_")
        try:
            check()
        except Exception as exc:  # report every failure, keep going
            failures.append(name)
            print(f"FAIL {name}: {exc}", file=stream)
        else:
            print(f"ok   {name}", file=stream)
    return failures
