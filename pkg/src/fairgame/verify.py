"""Seeded verification suites: independent oracles (central finite
differences, contraction measurements, statistical zero-mean checks) run
against the library's closed-form and linear-solve paths over randomly
generated instances. Each suite returns a machine-readable report.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .envs import random_markov_game
from .games import (
    DilemmaKind,
    DilemmaPayoffs,
    altruism_level_bruteforce,
    altruism_level_closed_form,
    altruistic_extension,
    check_consistency_ts_r2,
    classify_social_dilemma,
    find_pure_nash,
)
from .markov import (
    AltruismWeights,
    SoftmaxPolicyProfile,
    TabularMarkovGame,
    baseline_zero_check,
    bellman_apply,
    default_horizon,
    exact_fair_gradient,
    fair_objective,
    mc_fair_gradient,
    solve_values,
)
from .metrics import gini


@dataclass
class SuiteCheck:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class SuiteReport:
    suite: str
    checks: list[SuiteCheck] = field(default_factory=list)
    elapsed_seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    def add(self, name: str, passed: bool, detail: str = "") -> None:
        self.checks.append(SuiteCheck(name, bool(passed), detail))

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "passed": self.passed,
            "elapsed_seconds": round(self.elapsed_seconds, 3),
            "checks": [
                {"name": c.name, "passed": c.passed, "detail": c.detail}
                for c in self.checks
            ],
        }


def sample_dilemmas(
    rng: np.random.Generator,
    count: int,
    require_temptation: bool = False,
    alpha_range: tuple[float, float] | None = None,
) -> list[DilemmaPayoffs]:
    """Rejection-sample payoff tuples satisfying the dilemma inequalities.

    Optionally restrict to T > R instances, and to instances whose closed-form
    altruism level falls in alpha_range (so threshold probes stay in (0, 1)).
    """
    kept: list[DilemmaPayoffs] = []
    while len(kept) < count:
        batch = rng.uniform(0.1, 10.0, size=(4096, 4))
        T, R, S, P = batch.T
        ok = (R > P) & (R > S) & (2.0 * R >= T + S) & ((T > R) | (P > S))
        if require_temptation:
            ok &= T > R
        if alpha_range is not None:
            with np.errstate(divide="ignore", invalid="ignore"):
                level = np.where(
                    T > R, (np.log(T) - np.log(R)) / (np.log(R) - np.log(S)), 0.0
                )
            ok &= (level >= alpha_range[0]) & (level <= alpha_range[1])
        for row in batch[ok]:
            kept.append(DilemmaPayoffs(*(float(x) for x in row)))
            if len(kept) == count:
                break
    return kept


def random_game_and_policies(
    rng: np.random.Generator,
    max_agents: int = 3,
    max_states: int = 5,
    max_actions: int = 3,
    gamma_range: tuple[float, float] = (0.8, 0.95),
    logit_scale: float = 0.5,
) -> tuple[TabularMarkovGame, SoftmaxPolicyProfile]:
    num_agents = int(rng.integers(2, max_agents + 1))
    num_states = int(rng.integers(2, max_states + 1))
    action_counts = tuple(int(rng.integers(2, max_actions + 1)) for _ in range(num_agents))
    gamma = float(rng.uniform(*gamma_range))
    game = random_markov_game(
        num_agents, num_states, action_counts, gamma, seed=int(rng.integers(2**31))
    )
    policies = SoftmaxPolicyProfile.random(
        num_states, action_counts, rng, scale=logit_scale
    )
    return game, policies


def finite_difference_fair_gradient(
    game: TabularMarkovGame,
    policies: SoftmaxPolicyProfile,
    weights: AltruismWeights,
    h: float = 1e-5,
) -> list[np.ndarray]:
    """Central-difference gradient of each agent's objective with respect to
    its own logits: the independent oracle for the exact gradient path."""
    grads = []
    for i in range(policies.num_agents):
        table = policies.logits[i]
        grad = np.zeros_like(table)
        for s in range(table.shape[0]):
            for a in range(table.shape[1]):
                original = table[s, a]
                table[s, a] = original + h
                plus = fair_objective(game, policies, weights)[i]
                table[s, a] = original - h
                minus = fair_objective(game, policies, weights)[i]
                table[s, a] = original
                grad[s, a] = (plus - minus) / (2.0 * h)
        grads.append(grad)
    return grads


def gradient_tolerance_ok(
    exact: np.ndarray,
    reference: np.ndarray,
    rel_tol: float = 1e-4,
    abs_floor: float = 1e-8,
) -> bool:
    """Per-coordinate relative agreement; coordinates below abs_floor in
    magnitude are compared absolutely at abs_floor."""
    diff = np.abs(exact - reference)
    small = np.abs(reference) < abs_floor
    ok_small = diff[small] <= abs_floor
    ok_large = diff[~small] <= rel_tol * np.abs(reference[~small])
    return bool(ok_small.all() and ok_large.all())


def verify_altruism(
    num_instances: int = 200, resolution: float = 1e-6, seed: int = 2024
) -> SuiteReport:
    """Closed-form vs brute-force altruism levels, spot values, and the
    cooperation threshold behavior around the closed-form level."""
    start = time.perf_counter()
    report = SuiteReport("altruism")
    rng = np.random.default_rng(seed)

    spot_pd = altruism_level_closed_form(DilemmaPayoffs(5, 3, 1, 2))
    report.add(
        "spot_prisoners_dilemma",
        abs(spot_pd - 0.46497) < 5e-5,
        f"alpha_G={spot_pd:.6f}",
    )
    spot_chicken = altruism_level_closed_form(DilemmaPayoffs(7, 5, 2, 1))
    report.add(
        "spot_chicken", abs(spot_chicken - 0.36720) < 5e-5, f"alpha_G={spot_chicken:.6f}"
    )
    spot_stag = altruism_level_closed_form(DilemmaPayoffs(3, 4, 1, 2))
    report.add("spot_stag_hunt", spot_stag == 0.0, f"alpha_G={spot_stag}")

    dilemmas = sample_dilemmas(rng, num_instances)
    worst = 0.0
    agreements = 0
    for payoffs in dilemmas:
        closed = altruism_level_closed_form(payoffs)
        brute = altruism_level_bruteforce(payoffs.to_game(), resolution)
        if brute is None:
            continue
        worst = max(worst, abs(closed - brute))
        agreements += abs(closed - brute) <= 2e-6
    report.add(
        "closed_form_vs_bruteforce",
        agreements == len(dilemmas),
        f"{agreements}/{len(dilemmas)} within 2e-6, worst diff {worst:.2e}",
    )

    probes = sample_dilemmas(
        rng, num_instances, require_temptation=True, alpha_range=(2e-4, 0.999)
    )
    threshold_ok = 0
    for payoffs in probes:
        level = altruism_level_closed_form(payoffs)
        game = payoffs.to_game()
        above = (0, 0) in find_pure_nash(altruistic_extension(game, level + 1e-4))
        below = (0, 0) not in find_pure_nash(altruistic_extension(game, level - 1e-4))
        threshold_ok += above and below
    report.add(
        "cooperation_threshold",
        threshold_ok == len(probes),
        f"{threshold_ok}/{len(probes)} flip exactly at the level",
    )

    consistency_ok = all(check_consistency_ts_r2(p) for p in sample_dilemmas(rng, 10_000))
    report.add("ts_le_r2_for_dilemmas", consistency_ok, "10000 random dilemma tuples")
    report.elapsed_seconds = time.perf_counter() - start
    return report


def verify_gradients(num_games: int = 50, seed: int = 7, h: float = 1e-5) -> SuiteReport:
    """Exact fair gradients against central finite differences."""
    start = time.perf_counter()
    report = SuiteReport("gradients")
    rng = np.random.default_rng(seed)
    agree = 0
    worst_detail = ""
    worst_rel = 0.0
    for _ in range(num_games):
        game, policies = random_game_and_policies(rng)
        weights = AltruismWeights(float(rng.uniform(0.0, 1.0)))
        exact = exact_fair_gradient(game, policies, weights)
        reference = finite_difference_fair_gradient(game, policies, weights, h)
        game_ok = True
        for e, f in zip(exact.per_agent, reference):
            if not gradient_tolerance_ok(e, f):
                game_ok = False
            big = np.abs(f) >= 1e-8
            if big.any():
                rel = float(np.max(np.abs(e[big] - f[big]) / np.abs(f[big])))
                if rel > worst_rel:
                    worst_rel = rel
                    worst_detail = f"worst rel err {rel:.2e}"
        agree += game_ok
    report.add(
        "exact_vs_finite_difference",
        agree == num_games,
        f"{agree}/{num_games} games within 1e-4; {worst_detail}",
    )
    report.elapsed_seconds = time.perf_counter() - start
    return report


def verify_bellman(
    num_games: int = 50, num_pairs: int = 100, seed: int = 11
) -> SuiteReport:
    """Fixed-point residual of the linear solve, empirical contraction factor,
    and the geometric error bound of fixed-point iteration."""
    start = time.perf_counter()
    report = SuiteReport("bellman")
    rng = np.random.default_rng(seed)
    residual_ok = contraction_ok = iteration_ok = 0
    worst_residual = 0.0
    worst_factor = 0.0
    for _ in range(num_games):
        game, policies = random_game_and_policies(rng)
        bundle = solve_values(game, policies)
        residual = float(
            np.max(np.abs(bellman_apply(game, policies, bundle.state_values) - bundle.state_values))
        )
        worst_residual = max(worst_residual, residual)
        residual_ok += residual <= 1e-9

        scale = game.max_reward / (1.0 - game.discount)
        game_contracts = True
        for _ in range(num_pairs):
            v1 = rng.uniform(-scale, scale, size=bundle.state_values.shape)
            v2 = rng.uniform(-scale, scale, size=bundle.state_values.shape)
            gap = float(np.max(np.abs(v1 - v2)))
            if gap == 0.0:
                continue
            mapped = float(
                np.max(
                    np.abs(
                        bellman_apply(game, policies, v1) - bellman_apply(game, policies, v2)
                    )
                )
            )
            factor = mapped / gap
            worst_factor = max(worst_factor, factor - game.discount)
            if factor > game.discount + 1e-12:
                game_contracts = False
        contraction_ok += game_contracts

        values = np.zeros_like(bundle.state_values)
        bound_holds = True
        for k in range(1, 25):
            values = bellman_apply(game, policies, values)
            bound = game.discount**k * scale + 1e-9
            if float(np.max(np.abs(values - bundle.state_values))) > bound:
                bound_holds = False
        iteration_ok += bound_holds
    report.add(
        "fixed_point_residual",
        residual_ok == num_games,
        f"worst ||T V* - V*||_inf = {worst_residual:.2e}",
    )
    report.add(
        "contraction_factor",
        contraction_ok == num_games,
        f"worst factor excess over gamma: {worst_factor:.2e}",
    )
    report.add(
        "iteration_error_bound",
        iteration_ok == num_games,
        "gamma^k bound holds for k=1..24",
    )
    report.elapsed_seconds = time.perf_counter() - start
    return report


def verify_baseline(
    num_triples: int = 10, num_samples: int = 100_000, seed: int = 5
) -> SuiteReport:
    """Baseline-term lemma: the analytic score-baseline expectation is the
    zero tensor; Monte Carlo means stay within 3 standard errors of zero."""
    start = time.perf_counter()
    report = SuiteReport("baseline")
    rng = np.random.default_rng(seed)
    analytic_zero = quadrature_small = mc_within = 0
    for _ in range(num_triples):
        game, policies = random_game_and_policies(rng, max_states=3)
        levels = rng.uniform(0.5, 5.0, size=game.num_states)
        results = baseline_zero_check(
            game, policies, lambda s: float(levels[s]), num_samples,
            seed=int(rng.integers(2**31)),
        )
        analytic_zero += all(not r.analytic.any() for r in results)
        quadrature_small += all(r.quadrature_residual <= 1e-12 for r in results)
        mc_within += all(
            np.all(np.abs(r.mc_mean) <= 3.0 * r.mc_se + 1e-15) for r in results
        )
    report.add("analytic_exactly_zero", analytic_zero == num_triples, "")
    report.add(
        "quadrature_residual", quadrature_small == num_triples, "<= 1e-12 everywhere"
    )
    report.add(
        "mc_within_3_se", mc_within == num_triples, f"{mc_within}/{num_triples} triples"
    )
    report.elapsed_seconds = time.perf_counter() - start
    return report


def verify_montecarlo(
    num_games: int = 10, num_rollouts: int = 100_000, seed: int = 3
) -> SuiteReport:
    """Monte Carlo gradient estimator against the exact gradient at both
    alpha=0 and alpha=1, per coordinate within 3 SE plus the truncation bound."""
    start = time.perf_counter()
    report = SuiteReport("montecarlo")
    rng = np.random.default_rng(seed)
    for alpha in (0.0, 1.0):
        within = 0
        for _ in range(num_games):
            game, policies = random_game_and_policies(
                rng, max_agents=2, max_states=3, max_actions=2, gamma_range=(0.8, 0.9)
            )
            weights = AltruismWeights(alpha)
            exact = exact_fair_gradient(game, policies, weights)
            estimate = mc_fair_gradient(
                game,
                policies,
                weights,
                num_rollouts,
                seed=int(rng.integers(2**31)),
                truncation_tol=1e-5,
            )
            slack = _truncation_slack(game, policies, weights, truncation_tol=1e-5)
            ok = all(
                np.all(np.abs(m - e) <= 3.0 * se + slack)
                for m, se, e in zip(estimate.per_agent, estimate.std_errors, exact.per_agent)
            )
            within += ok
        report.add(
            f"mc_within_3_se_alpha_{alpha:g}",
            within == num_games,
            f"{within}/{num_games} games",
        )
    report.elapsed_seconds = time.perf_counter() - start
    return report


def _truncation_slack(
    game: TabularMarkovGame,
    policies: SoftmaxPolicyProfile,
    weights: AltruismWeights,
    truncation_tol: float,
) -> float:
    """Upper bound on the per-coordinate tail the truncated estimator drops."""
    horizon = default_horizon(game.discount, game.max_reward, truncation_tol)
    bundle = solve_values(game, policies)
    v_min = float(bundle.state_values[:, game.initial_dist > 0].min())
    q_max = game.max_reward / (1.0 - game.discount)
    coeff_sum = 1.0 + weights.alpha * (game.num_agents - 1)
    return (
        game.discount**horizon / (1.0 - game.discount) * coeff_sum * q_max / v_min
    )


def verify_gini(num_vectors: int = 10_000, seed: int = 13) -> SuiteReport:
    """Scale/permutation invariance, bounds, and Pigou-Dalton monotonicity."""
    start = time.perf_counter()
    report = SuiteReport("gini")
    rng = np.random.default_rng(seed)
    report.add("spot_even", gini([1, 1, 1, 1]) == 0.0, "")
    report.add(
        "spot_one_hot_7",
        abs(gini([1, 0, 0, 0, 0, 0, 0]) - 6.0 / 7.0) < 1e-15,
        "",
    )
    scale_ok = perm_ok = bounds_ok = pigou_ok = True
    for _ in range(num_vectors):
        n = int(rng.integers(1, 11))
        values = rng.uniform(0.0, 10.0, size=n)
        if rng.random() < 0.2:
            values[rng.integers(0, n)] = 0.0
        g = gini(values)
        k = float(rng.uniform(0.1, 100.0))
        scale_ok &= abs(gini(k * values) - g) <= 1e-12
        perm_ok &= abs(gini(rng.permutation(values)) - g) <= 1e-12
        bounds_ok &= -1e-15 <= g <= (n - 1) / n + 1e-12
        if n >= 2 and values.sum() > 0.0:
            order = np.argsort(values)
            poor, rich = order[0], order[-1]
            if values[rich] > values[poor]:
                delta = rng.uniform(0.0, (values[rich] - values[poor]) / 2.0)
                transferred = values.copy()
                transferred[rich] -= delta
                transferred[poor] += delta
                pigou_ok &= gini(transferred) <= g + 1e-12
    report.add("scale_invariance", scale_ok, "")
    report.add("permutation_invariance", perm_ok, "")
    report.add("bounds", bounds_ok, "0 <= gini <= (N-1)/N")
    report.add("pigou_dalton", pigou_ok, "rich-to-poor transfers never raise gini")
    report.elapsed_seconds = time.perf_counter() - start
    return report


def verify_objective_symmetry(num_games: int = 20, seed: int = 17) -> SuiteReport:
    """At alpha=1 the objective and its exact gradients are agent-independent."""
    start = time.perf_counter()
    report = SuiteReport("symmetry")
    rng = np.random.default_rng(seed)
    objective_ok = gradient_ok = 0
    weights = AltruismWeights(1.0)
    for _ in range(num_games):
        game, policies = random_game_and_policies(rng)
        objectives = fair_objective(game, policies, weights)
        objective_ok += all(j == objectives[0] for j in objectives)
        base = exact_fair_gradient(game, policies, weights, objective_agent=0)
        same = True
        for k in range(1, game.num_agents):
            other = exact_fair_gradient(game, policies, weights, objective_agent=k)
            same &= all(
                np.array_equal(a, b) for a, b in zip(base.per_agent, other.per_agent)
            )
        gradient_ok += same
    report.add("objective_identical", objective_ok == num_games, "exact equality")
    report.add("gradients_identical", gradient_ok == num_games, "coordinate-wise equality")
    report.elapsed_seconds = time.perf_counter() - start
    return report


SUITES = {
    "altruism": verify_altruism,
    "gradients": verify_gradients,
    "bellman": verify_bellman,
    "baseline": verify_baseline,
    "montecarlo": verify_montecarlo,
    "gini": verify_gini,
    "symmetry": verify_objective_symmetry,
}


def run_suite(name: str) -> list[SuiteReport]:
    if name == "all":
        return [fn() for fn in SUITES.values()]
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)} or 'all'")
    return [SUITES[name]()]
