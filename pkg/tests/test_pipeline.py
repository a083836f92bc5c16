"""Staged pipeline orchestration, baselines, and reporting."""

import json

import numpy as np
import pytest

from alcoi.benchmarks import make_one_step_toy, make_single_bump_model
from alcoi.dynamics import ParametricFeedback, RandomEnergy, child_seed
from alcoi.estimation import least_squares_fit
from alcoi.pipeline import (
    STAGE_EVAL,
    AlcoiConfig,
    DegenerateCurvatureError,
    confidence_radius,
    regularizer,
    run_alcoi,
    run_baseline_aopt,
    run_baseline_random,
)
from alcoi.synthesis import ControlProblem, SynthesisOptions, excess_cost


def small_opts():
    return SynthesisOptions(n_mc=32, seed=0, n_starts=1)


def toy_setup():
    model, problem = make_one_step_toy(noise_std=0.1)
    return model, problem, RandomEnergy(1.0)


def toy_config(n_episodes, split="half-half"):
    return AlcoiConfig(
        n_episodes=n_episodes,
        exploration_budget=1.0,
        budget_split=split,
        curvature_n_mc=16,
        eval_n_mc=32,
        n_shooting=8,
        synthesis_options=small_opts(),
    )


def test_confidence_radius_direct_evaluation():
    radius = confidence_radius(
        1, noise_std=1.0, horizon=1, state_dim=0, param_dim=1, delta=1.0, alpha=0.5, lf=np.e
    )
    np.testing.assert_allclose(radius, np.sqrt(2048.0), rtol=1e-12)
    assert round(radius, 4) == 45.2548


def test_confidence_radius_unit_cancellation():
    radius = confidence_radius(
        16, noise_std=1.0, horizon=2048, state_dim=1, param_dim=0, delta=1.0, alpha=0.5
    )
    np.testing.assert_allclose(radius, 0.25, rtol=1e-12)


def test_confidence_radius_monotone_in_n():
    values = [
        confidence_radius(
            n, noise_std=0.5, horizon=10, state_dim=2, param_dim=3, delta=0.1, alpha=0.4
        )
        for n in (8, 16, 64, 256, 1024)
    ]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_confidence_radius_domain_errors():
    with pytest.raises(ValueError):
        confidence_radius(8, noise_std=1, horizon=1, state_dim=1, param_dim=1, delta=0.0)
    with pytest.raises(ValueError):
        confidence_radius(1, noise_std=1, horizon=1, state_dim=1, param_dim=1, delta=0.5)


def test_regularizer_formula_substitution():
    assert regularizer(np.eye(1), mode="formula", lambda_min_star=16.0) == 1.0


def test_regularizer_fixed_mode_ignores_curvature():
    assert regularizer(np.zeros((3, 3)), mode="fixed", fixed_value=1e-3) == 1e-3


def test_regularizer_formula_scale_invariant():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((4, 4))
    h = a @ a.T + 0.5 * np.eye(4)
    base = regularizer(h, mode="formula", lambda_min_star=2.0)
    scaled = regularizer(3.7 * h, mode="formula", lambda_min_star=2.0)
    np.testing.assert_allclose(scaled, base, rtol=1e-12)


def test_regularizer_degenerate_curvature():
    with pytest.raises(DegenerateCurvatureError):
        regularizer(np.diag([1.0, 0.0]), mode="formula", lambda_min_star=1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        AlcoiConfig(n_episodes=7, exploration_budget=1.0)
    with pytest.raises(ValueError):
        AlcoiConfig(n_episodes=8, exploration_budget=1.0, delta=0.3)
    with pytest.raises(ValueError):
        AlcoiConfig(n_episodes=8, exploration_budget=1.0, alpha=0.25)
    with pytest.raises(ValueError):
        AlcoiConfig(n_episodes=8, exploration_budget=0.0)
    with pytest.raises(ValueError):
        AlcoiConfig(n_episodes=8, exploration_budget=1.0, budget_split="thirds")


def test_stage_budgets():
    assert toy_config(8).stage_budgets() == (4, 4, 0)
    assert toy_config(8, "quarter-quarter-half").stage_budgets() == (2, 2, 4)
    assert toy_config(13, "quarter-quarter-half").stage_budgets() == (3, 3, 6)


def test_quarter_split_stage_accounting():
    model, problem, policy = toy_setup()
    report = run_alcoi(problem, [1.0], policy, toy_config(8, "quarter-quarter-half"), seed=0)
    names = [s.name for s in report.stages]
    assert names == ["initial", "curvature", "design", "refit", "evaluate"]
    assert [s.episodes for s in report.stages] == [2, 0, 2, 4, 0]
    assert sum(s.episodes for s in report.stages) <= 8
    assert set(report.datasets) == {"initial", "design", "mixture"}
    # Two design episodes cannot fill the schedule, so the run degrades to the
    # initial policy and says so.
    assert any("schedule minimum" in m for m in report.messages)
    assert report.n_design_policies == 0


def test_half_split_runs_the_design_loop():
    model, problem, policy = toy_setup()
    report = run_alcoi(problem, [1.0], policy, toy_config(16), seed=1)
    assert [s.episodes for s in report.stages] == [8, 0, 8, 0, 0]
    assert report.n_design_policies == 1
    assert len(report.design_trace) == 2
    assert set(report.datasets) == {"initial", "design"}
    assert np.isfinite(report.excess_cost)


def test_initial_stage_draws_do_not_depend_on_budget():
    model, problem, policy = toy_setup()
    small = run_alcoi(problem, [1.0], policy, toy_config(8, "quarter-quarter-half"), seed=3)
    large = run_alcoi(problem, [1.0], policy, toy_config(16, "quarter-quarter-half"), seed=3)
    for a, b in zip(small.datasets["initial"].episodes, large.datasets["initial"].episodes):
        np.testing.assert_array_equal(a.states, b.states)
        np.testing.assert_array_equal(a.inputs, b.inputs)


def test_diagnostic_bypass_matches_standalone_excess():
    model, problem, policy = toy_setup()
    cfg = toy_config(8, "quarter-quarter-half")
    report = run_alcoi(
        problem,
        [1.0],
        policy,
        cfg,
        seed=4,
        coarse_phi_override=np.array([1.0]),
        mixture_override=policy,
    )
    standalone = excess_cost(
        problem,
        report.phi_refined,
        [1.0],
        cfg.eval_n_mc,
        child_seed(4, STAGE_EVAL),
        cfg.synthesis_options,
    )
    assert report.excess_cost == standalone
    assert any("overridden" in m for m in report.messages)


def test_stage_isolation_coarse_fit_reproducible():
    model, problem, policy = toy_setup()
    cfg = toy_config(16)
    report = run_alcoi(problem, [1.0], policy, cfg, seed=7)
    refit = least_squares_fit(
        report.datasets["initial"], model, cfg.resolved_fit_init(model), cfg.fit_options
    )
    np.testing.assert_array_equal(refit.phi, report.phi_coarse)


def test_report_serializes_to_json():
    model, problem, policy = toy_setup()
    report = run_alcoi(problem, [1.0], policy, toy_config(16), seed=2)
    decoded = json.loads(report.to_json())
    assert decoded["objective_kind"] == "control-oriented"
    assert decoded["n_episodes"] == 16
    assert len(decoded["stages"]) == 5


def zero_param_problem():
    from alcoi.dynamics import SystemModel

    model = SystemModel(
        state_dim=1,
        input_dim=1,
        param_dim=0,
        dynamics_fn=lambda x, u, phi: x + u,
        noise_std=0.1,
        horizon=2,
    )
    return ControlProblem(
        model=model,
        stage_cost=lambda t, x, u: np.zeros(np.asarray(x).shape[:-1]),
        terminal_cost=lambda x: (np.asarray(x)[..., 0] - 1.0) ** 2,
        make_policy=lambda theta: ParametricFeedback(
            theta, lambda th, x: np.broadcast_to(th, np.asarray(x).shape[:-1] + (1,))
        ),
        theta_dim=1,
        synthesis_mode="generic-optimizer",
        theta_init=np.array([0.3]),
    )


def test_baseline_random_zero_parameter_model():
    problem = zero_param_problem()
    cfg = AlcoiConfig(
        n_episodes=8, exploration_budget=1.0, eval_n_mc=16, synthesis_options=small_opts()
    )
    report = run_baseline_random(problem, np.zeros(0), cfg, seed=0)
    assert report.excess_cost == 0.0


def test_baseline_random_deterministic():
    model, problem, policy = toy_setup()
    cfg = toy_config(8)
    a = run_baseline_random(problem, [1.0], cfg, seed=9)
    b = run_baseline_random(problem, [1.0], cfg, seed=9)
    np.testing.assert_array_equal(a.phi_refined, b.phi_refined)
    np.testing.assert_array_equal(a.theta, b.theta)
    assert a.excess_cost == b.excess_cost


def scalar_linear_problem(noise_std=0.1, horizon=10):
    from alcoi.benchmarks import scalar_linear_dynamics, scalar_linear_param_jacobian
    from alcoi.dynamics import SystemModel

    model = SystemModel(
        state_dim=1,
        input_dim=1,
        param_dim=2,
        dynamics_fn=scalar_linear_dynamics,
        param_jacobian_fn=scalar_linear_param_jacobian,
        noise_std=noise_std,
        horizon=horizon,
    )
    return ControlProblem(
        model=model,
        stage_cost=lambda t, x, u: np.zeros(np.asarray(x).shape[:-1]),
        terminal_cost=lambda x: np.asarray(x)[..., 0] ** 2,
        make_policy=lambda theta: ParametricFeedback(
            theta, lambda th, x: np.broadcast_to(th, np.asarray(x).shape[:-1] + (1,))
        ),
        theta_dim=1,
        synthesis_mode="generic-optimizer",
        theta_init=np.array([0.0]),
    )


def test_baseline_random_matches_fisher_information_level():
    # Closed-form expected information for energy-normalized random inputs:
    # each input has second moment budget/T, cross moments vanish, and the
    # state second moment follows a linear recursion from zero.
    budget, horizon, noise_std = 10.0, 10, 0.1
    a_coef, b_coef = 0.5, 1.0
    s = 0.0
    s_sum = 0.0
    for _ in range(horizon):
        s_sum += s
        s = a_coef**2 * s + b_coef**2 * (budget / horizon) + noise_std**2
    n = 1024
    level = noise_std**2 / n * (1.0 / s_sum + 1.0 / budget)

    problem = scalar_linear_problem(noise_std, horizon)
    cfg = AlcoiConfig(
        n_episodes=n,
        exploration_budget=budget,
        eval_n_mc=8,
        synthesis_options=SynthesisOptions(n_mc=8, seed=0, n_starts=1),
    )
    errors = []
    for seed in range(6):
        report = run_baseline_random(problem, [a_coef, b_coef], cfg, seed=seed)
        errors.append(np.sum((report.phi_refined - np.array([a_coef, b_coef])) ** 2))
    ratio = np.mean(errors) / level
    assert 1 / 3 <= ratio <= 3


def single_bump_problem():
    from dataclasses import replace

    from alcoi.benchmarks import BUMP_TARGET, bump_lqr_gain, bump_psi

    # Start next to the bump so the data actually constrains its center.
    model = replace(make_single_bump_model(), initial_state=np.array([4.5, 0.5]))
    gain = bump_lqr_gain()

    def feedback(theta, x):
        x = np.asarray(x, float)
        center = np.stack([theta[..., 0], np.zeros_like(theta[..., 0])], axis=-1)
        return (x - BUMP_TARGET) @ gain.T - bump_psi(x - center)

    return ControlProblem(
        model=model,
        stage_cost=lambda t, x, u: np.sum((np.asarray(x) - BUMP_TARGET) ** 2, axis=-1),
        terminal_cost=lambda x: np.sum((np.asarray(x) - BUMP_TARGET) ** 2, axis=-1),
        make_policy=lambda theta: ParametricFeedback(theta, feedback),
        theta_dim=1,
        synthesis_mode="benchmark-analytic",
        analytic_synthesis=lambda phi: np.asarray(phi, float).copy(),
    )


def test_aopt_equals_alcoi_for_one_parameter():
    # With a single parameter the measured curvature is a positive scalar, and
    # the design reward is normalized by the curvature norm, so the identity
    # substitution cannot change any policy decision.
    problem = single_bump_problem()
    cfg = AlcoiConfig(
        n_episodes=16,
        exploration_budget=10.0,
        fit_init=np.array([5.5]),
        curvature_n_mc=16,
        eval_n_mc=16,
        n_shooting=10,
        synthesis_options=SynthesisOptions(n_mc=16, seed=0, n_starts=1),
    )
    full = run_alcoi(problem, [5.0], RandomEnergy(10.0), cfg, seed=0)
    aopt = run_baseline_aopt(problem, [5.0], RandomEnergy(10.0), cfg, seed=0)
    assert aopt.objective_kind == "A-optimal"
    assert full.objective_kind == "control-oriented"
    for a, b in zip(full.datasets["design"].episodes, aopt.datasets["design"].episodes):
        np.testing.assert_array_equal(a.inputs, b.inputs)
    np.testing.assert_allclose(aopt.phi_refined, full.phi_refined, rtol=1e-12)
    np.testing.assert_allclose(aopt.excess_cost, full.excess_cost, rtol=1e-9, atol=1e-12)
