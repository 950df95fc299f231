"""Every acceptance criterion at its stated tolerance, one PASS/FAIL line each.

Training criteria use the desk presets (widths 32, five seeds) and share
session-scoped runs, so the full module takes about half an hour on one core.
Run only the fast ones with ``pytest tests/test_acceptance.py -m "not slow"``.
"""

import time

import numpy as np
import pytest

from alliance_dilemmas import dynamics as dyn
from alliance_dilemmas import gifting as gf
from alliance_dilemmas import matrix_games as mg
from alliance_dilemmas import training as tr
from alliance_dilemmas.a2c import a2c_loss_and_grads, discounted_returns
from alliance_dilemmas.network import sequence_forward
from alliance_dilemmas.optim import RMSProp
from alliance_dilemmas.rollout import TRAIN

from conftest import ACCEPTANCE_LINES

SEED = 0
TRAIN_BUDGET = 30 * 60


def verdict(criterion, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------
# Matrix games and dynamics
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def counting():
    start = time.perf_counter()
    summary = mg.run_counting_experiment(1000, seed=SEED)
    return summary, time.perf_counter() - start


def test_c1a_dilemma_fraction(counting):
    summary, elapsed = counting
    frac = summary.dilemma_fraction
    verdict("1a", abs(frac - 0.54) <= 0.05 and elapsed < 60,
            f"dilemma fraction {frac:.3f} (target 0.54 +- 0.05), {elapsed:.1f}s")


def test_c1b_strict_fraction_among_dilemmas(counting):
    summary, elapsed = counting
    frac = summary.strict_fraction_of_dilemmas
    verdict("1b", abs(frac - 0.12) <= 0.05 and elapsed < 60,
            f"strict fraction among dilemmas {frac:.3f} (target 0.12 +- 0.05; "
            f"share of all games {summary.strict_fraction_of_games:.3f}), {elapsed:.1f}s")


def test_c2_epsilon_histogram():
    start = time.perf_counter()
    hist = mg.run_epsilon_histogram(1000, 20, seed=SEED)
    elapsed = time.perf_counter() - start
    low, mode = int(hist.counts[0]), int(hist.counts.max())
    unimodal = mg.is_unimodal(hist.counts, tolerance_bins=2)
    verdict(2, low < 0.25 * mode and unimodal and elapsed < 10,
            f"lowest bin {low} vs modal {mode}, unimodal={unimodal}, {elapsed:.2f}s")


def test_c3_odd_one_out_gradient():
    game = mg.odd_one_out()
    rng = np.random.default_rng(SEED)
    pts = rng.integers(0, 101, (1000, 3)) / 100.0
    closed = 2.0 * (1.0 - pts[:, 0] - pts[:, 1]) / 3.0
    exact_err = float(np.max(np.abs(dyn.exact_gradient(game, pts, 2) - closed)))
    fd_err = 0.0
    h = 1e-6
    for pt in rng.random((200, 3)):
        g = dyn.gradient_field(game, pt)
        for i in range(3):
            hi, lo = pt.copy(), pt.copy()
            hi[i] += h
            lo[i] -= h
            fd = (dyn.expected_payoffs(game, hi)[i] - dyn.expected_payoffs(game, lo)[i]) / (2 * h)
            fd_err = max(fd_err, abs(fd - g[i]))
    verdict(3, exact_err <= 1e-12 and fd_err <= 1e-8,
            f"closed-form error {exact_err:.1e} (<= 1e-12), finite-difference error {fd_err:.1e} (<= 1e-8)")


def interior_starts(n=100):
    rng = np.random.default_rng(SEED)
    return np.column_stack([rng.uniform(0.01, 0.99, (n, 2)), np.ones(n)])


def test_c4a_matching_dynamics():
    # starts near the all-defect corner crawl, so this run uses 200k steps
    start = time.perf_counter()
    game = mg.matching()
    final = dyn.final_policies(game, dyn.DynamicsConfig(n_steps=200_000), interior_starts())
    pay = dyn.expected_payoffs(game, final)[:, :2]
    elapsed = time.perf_counter() - start
    match = float(final[:, :2].min())
    gap = float(np.max(np.abs(pay - 1 / 3)))
    verdict("4a", match > 0.99 and gap <= 1e-3 and elapsed < 60,
            f"Matching: min learner P(match stubborn) {match:.5f} (> 0.99), "
            f"max |payoff - 1/3| {gap:.1e} (<= 1e-3), {elapsed:.1f}s")


def test_c4b_odd_one_out_dynamics():
    start = time.perf_counter()
    game = mg.odd_one_out()
    final = dyn.final_policies(game, dyn.DynamicsConfig(), interior_starts())
    pay = dyn.expected_payoffs(game, final)[:, :2]
    elapsed = time.perf_counter() - start
    worst = float(pay.max())
    both_low = int(np.sum(pay.max(axis=1) < 1e-3))
    one_wins = int(np.sum(pay.max(axis=1) > 0.5))
    verdict("4b", worst < 1e-3 and elapsed < 60,
            f"Odd One Out: max final learner payoff {worst:.4f} (< 1e-3); {both_low}/100 runs with "
            f"both learners < 1e-3, {one_wins}/100 with one learner > 0.5, "
            f"mean joint learner payoff {float(pay.sum(axis=1).mean()):.3f}, {elapsed:.1f}s")


def test_c4c_fixed_point_report():
    report = dyn.fixed_point_report(mg.odd_one_out())
    by_name = {fp.describe(): fp.stability for fp in report}
    ok = by_name.get("(0.5, 0.5, 0.5)") == dyn.UNSTABLE and "(1, 0, z)" in by_name
    verdict("4c", ok, f"fixed points {by_name}")


def test_c5_alliance_optima():
    ooo = dyn.alliance_optimum(mg.odd_one_out())
    match = dyn.alliance_optimum(mg.matching())
    ok = (abs(ooo.match_prob - 0.75) <= 1e-6 and abs(ooo.per_learner_value - 0.375) <= 1e-6
          and match.per_learner_value == 0.5)
    verdict(5, ok, f"Odd One Out p*={ooo.match_prob:.8f} value={ooo.per_learner_value:.8f}; "
                   f"Matching value={match.per_learner_value!r}")


def test_c6_reduced_game_classifications():
    found = {}
    for name, game in (("matching", mg.matching()), ("odd-one-out", mg.odd_one_out())):
        red = mg.reduce_two_player(game, 2, 1.0)
        # enumeration oracle: payoff of learner 0 for every joint action against the stubborn 0
        oracle = np.array([[game.payoff((a, b, 0))[0] for b in (0, 1)] for a in (0, 1)])
        exact = np.array_equal(red.u, oracle)
        labels = [mg.classify(mg.DilemmaPayoffs.from_reduced(red, c)) for c in (0, 1)]
        hits = [c for c in labels if c.is_dilemma]
        found[name] = (exact, hits)
    m_exact, m_hits = found["matching"]
    o_exact, o_hits = found["odd-one-out"]
    ok = (m_exact and o_exact and len(m_hits) == 1 and len(o_hits) == 1
          and m_hits[0].strict and m_hits[0].fear and not m_hits[0].greed
          and not o_hits[0].strict and o_hits[0].greed and not o_hits[0].fear)
    verdict(6, ok, f"Matching {m_hits}, Odd One Out {o_hits}, tables exact={m_exact and o_exact}")


def test_c7_gifting_properties():
    start = time.perf_counter()
    config = gf.GiftingConfig()
    rng = np.random.default_rng(SEED)
    problems = []
    for _ in range(500):
        s = gf.reset(config, rng)
        turns = 0
        while not s.terminal:
            legal = gf.legal_actions(s, gf.current_player(s))
            s = gf.step(s, legal[rng.integers(len(legal))])
            turns += 1
            if sum(s.own_remaining) + sum(map(sum, s.holdings)) + sum(s.discarded) != 15:
                problems.append("conservation")
        if turns != 15:
            problems.append("length")
        if abs(sum(gf.score(s).payoffs) - 1.0) > 1e-12:
            problems.append("constant sum")
    deviations = sum(len(gf.profitable_deviations(gf.GiftingConfig(m_chips=m))) for m in (1, 2, 3))
    sampled = []
    for _ in range(300):
        s = gf.reset(config, rng)
        for _ in range(rng.integers(0, 15)):
            legal = gf.legal_actions(s, gf.current_player(s))
            s = gf.step(s, legal[rng.integers(len(legal))])
        sampled.append(s)
    deviations += len(gf.profitable_deviations(config, sampled))
    elapsed = time.perf_counter() - start
    verdict(7, not problems and deviations == 0 and elapsed < 60,
            f"{len(problems)} invariant violations, {deviations} profitable deviations "
            f"(exhaustive m<=3, 300 sampled states at m=5), {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# Training scenarios
# ---------------------------------------------------------------------------

_RUNS = {}


def trained(scenario):
    if scenario not in _RUNS:
        config = tr.desk_config(scenario)
        start = time.perf_counter()
        results = tr.run_training(config)
        _RUNS[scenario] = (config, results, time.perf_counter() - start)
    return _RUNS[scenario]


def median_final(results):
    return np.median(tr.final_eval_rewards(results), axis=0)


def median_gift_rate(results):
    # mean over agents of each seed's final eval gifting rate, then median over seeds
    return float(np.median(tr.final_eval_gift_rates(results).mean(axis=1)))


@pytest.mark.slow
def test_c8_baseline():
    config, results, elapsed = trained("baseline")
    rewards = tr.final_eval_rewards(results).mean(axis=0)
    gift = median_gift_rate(results)
    ok = gift < 0.05 and np.all(np.abs(rewards - 1 / 3) <= 0.05) and elapsed <= TRAIN_BUDGET
    verdict(8, ok, f"median gift rate {gift:.3f} (< 0.05), mean eval rewards "
                   f"{np.round(rewards, 3).tolist()} (1/3 +- 0.05), {config.n_seeds} seeds, {elapsed:.0f}s")


@pytest.mark.slow
def test_c9_copy_bot():
    config, results, elapsed = trained("copybot")
    med = median_final(results)
    ok = med[0] >= 0.45 and med[1] >= 0.45 and med[2] <= 0.10 and elapsed <= TRAIN_BUDGET
    verdict(9, ok, f"median final eval rewards learner/bot/other {np.round(med, 3).tolist()}, "
                   f"{config.n_seeds} seeds, {elapsed:.0f}s")


@pytest.mark.slow
def test_c10_binding_contracts_two_plus_one():
    config, results, elapsed = trained("contracts-2")
    med = median_final(results)
    ok = med[0] >= 0.45 and med[1] >= 0.45 and med[2] <= 0.10 and elapsed <= TRAIN_BUDGET
    verdict(10, ok, f"median final eval rewards {np.round(med, 3).tolist()}, "
                    f"{config.n_seeds} seeds, {elapsed:.0f}s")


@pytest.mark.slow
def test_c11_regression():
    config, results, _ = trained("contracts-3")
    fits = []
    for res in results:
        try:
            report = tr.regression_report(res.agents, config, episodes=50, seed=res.seed)
            fits.append((report.p_value, report.slope, len(report.records)))
        except tr.DegenerateRegression:
            fits.append((1.0, float("nan"), 150))
    fits.sort()
    p, slope, n = fits[len(fits) // 2]
    verdict(11, slope > 0 and p < 0.05 and n == 150,
            f"median seed slope {slope:.3f}, p={p:.2e}, {n} records; "
            f"all p {[f'{f[0]:.1e}' for f in fits]}")


@pytest.mark.slow
def test_c12_punishment_contracts():
    config, results, _ = trained("punishment")
    _, binding, _ = trained("contracts-3")
    q = config.n_updates // 4
    rises, draws = [], []
    for res in results:
        gg = np.array([g for _, g, _ in res.signings])
        rises.append(gg[-q:].mean() - gg[:q].mean())
        draws.append(sum(d for u, d, _ in res.eval_draws if u >= config.n_updates - q))
    rise, draw = float(np.median(rises)), float(np.median(draws))
    gift, gift_binding = median_gift_rate(results), median_gift_rate(binding)
    ok = rise > 0 and draw >= 1 and gift < gift_binding
    verdict(12, ok, f"median G-G rise {rise:+.3f}/episode, median final-quartile two-way draws {draw:.0f}, "
                    f"gift rate {gift:.3f} vs binding {gift_binding:.3f}")


# ---------------------------------------------------------------------------
# Optimiser and gradient
# ---------------------------------------------------------------------------


def test_c13_gradient_and_optimizer():
    config = tr.desk_config("punishment", trunk=(5,), lstm=5)
    rng = np.random.default_rng(SEED)
    agents = tr.build_agents(config, rng)
    traj = tr.collect(config, agents, 2, TRAIN, rng).trajectories[0]
    agent = agents[0]
    _, _, values, _ = sequence_forward(agent.params, agent.spec, traj.obs)
    adv = discounted_returns(traj.rewards, config.gamma) - values
    args = (agent.spec, traj, config.loss_weights, config.gamma, adv)
    _, grads, _ = a2c_loss_and_grads(agent.params, *args)
    fds, ans = [], []
    for name, p in agent.params.items():
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + 1e-6
            up = a2c_loss_and_grads(agent.params, *args)[0]
            p[idx] = old - 1e-6
            down = a2c_loss_and_grads(agent.params, *args)[0]
            p[idx] = old
            fds.append((up - down) / 2e-6)
            ans.append(grads[name][idx])
    fds, ans = np.array(fds), np.array(ans)
    rel = float(np.linalg.norm(fds - ans) / (np.linalg.norm(fds) + np.linalg.norm(ans)))

    params = {"w": np.array([0.0])}
    RMSProp(learning_rate=0.01, decay=0.99, epsilon=0.001).step(params, {"w": np.array([1.0])})
    rms_err = abs(params["w"][0] + 0.01 / np.sqrt(0.01 + 0.001))
    verdict(13, rel < 1e-4 and rms_err <= 1e-12,
            f"A2C gradient relative error {rel:.1e} over {len(fds)} parameters (< 1e-4), "
            f"first RMSProp step error {rms_err:.1e} (<= 1e-12)")
