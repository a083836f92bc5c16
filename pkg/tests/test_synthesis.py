"""Cost evaluation, certainty-equivalent synthesis, excess cost, curvature."""

import numpy as np
import pytest

from alcoi.benchmarks import (
    cartpole_lqr_gain,
    cartpole_step,
    make_benchmark,
    make_one_step_toy,
)
from alcoi.dynamics import ParametricFeedback, SystemModel
from alcoi.synthesis import (
    ControlProblem,
    CurvatureWarning,
    SynthesisOptions,
    evaluate_cost,
    excess_cost,
    model_task_hessian,
    synthesize_ce,
)


def toy(noise_std=0.0):
    _, problem = make_one_step_toy(noise_std=noise_std)
    return problem


def test_zero_costs_evaluate_to_zero():
    problem = toy()
    rigged = ControlProblem(
        model=problem.model,
        stage_cost=problem.stage_cost,
        terminal_cost=lambda x: np.zeros(np.asarray(x).shape[:-1]),
        make_policy=problem.make_policy,
        theta_dim=1,
        synthesis_mode="generic-optimizer",
        theta_init=np.array([0.5]),
    )
    assert evaluate_cost(rigged, [0.7], [1.0], n_mc=16, seed=0) == 0.0


def test_one_step_exact_tracking():
    cost = evaluate_cost(toy(), [1.0], [1.0], n_mc=8, seed=0)
    assert cost == 0.0


def test_one_step_noisy_cost_closed_form():
    problem = toy(noise_std=0.3)
    phi, theta = 1.5, 1.0
    n = 10_000
    cost = evaluate_cost(problem, [theta], [phi], n_mc=n, seed=1)
    expected = (phi * theta - 1.0) ** 2 + 0.3**2
    # Per-episode costs are (phi*theta - 1 + w)^2; bound the MC error by three
    # standard errors of that variable.
    var = 4 * (phi * theta - 1.0) ** 2 * 0.09 + 2 * 0.09**2
    assert abs(cost - expected) <= 3.0 * np.sqrt(var / n)


def test_common_random_numbers_reduce_difference_variance():
    problem = toy(noise_std=0.3)
    a = evaluate_cost(problem, [1.0], [1.0], n_mc=64, seed=5)
    b = evaluate_cost(problem, [1.0], [1.0], n_mc=64, seed=5)
    assert a == b


def test_synthesize_inverse_parameter_rule():
    theta = synthesize_ce(toy(), [2.0], SynthesisOptions(n_mc=32, seed=0))
    np.testing.assert_allclose(theta, [0.5], atol=1e-3)


def test_synthesize_quadratic_origin():
    model = SystemModel(
        state_dim=2,
        input_dim=2,
        param_dim=1,
        dynamics_fn=lambda x, u, phi: u,
        noise_std=0.0,
        horizon=1,
    )
    problem = ControlProblem(
        model=model,
        stage_cost=lambda t, x, u: np.zeros(np.asarray(x).shape[:-1]),
        terminal_cost=lambda x: np.sum(np.asarray(x) ** 2, axis=-1),
        make_policy=lambda theta: ParametricFeedback(
            theta, lambda th, x: np.broadcast_to(th, np.asarray(x).shape[:-1] + (2,))
        ),
        theta_dim=2,
        synthesis_mode="generic-optimizer",
        theta_init=np.array([0.4, -0.3]),
    )
    theta = synthesize_ce(problem, [0.0], SynthesisOptions(n_mc=4, seed=0))
    np.testing.assert_allclose(theta, [0.0, 0.0], atol=1e-4)


def test_first_order_condition_at_synthesized_policy():
    problem = toy()
    opts = SynthesisOptions(n_mc=32, seed=0, grad_tol=1e-6)
    theta = synthesize_ce(problem, [2.0], opts)
    h = 1e-5
    up = evaluate_cost(problem, theta + h, [2.0], n_mc=32, seed=0)
    down = evaluate_cost(problem, theta - h, [2.0], n_mc=32, seed=0)
    assert abs((up - down) / (2 * h)) <= 10 * opts.grad_tol


def test_cartpole_analytic_gain_matches_riccati_iteration():
    bench = make_benchmark("cartpole")
    phi = bench.phi_star
    gain = cartpole_lqr_gain(phi)

    eps = 1e-6
    x0 = np.zeros(4)
    a = np.empty((4, 4))
    for i in range(4):
        e = np.zeros(4)
        e[i] = eps
        a[:, i] = (cartpole_step(x0 + e, 0.0, phi) - cartpole_step(x0 - e, 0.0, phi)) / (2 * eps)
    b = ((cartpole_step(x0, eps, phi) - cartpole_step(x0, -eps, phi)) / (2 * eps)).reshape(4, 1)

    # Fixed-point iteration of the discrete Riccati equation.
    s = np.eye(4)
    for _ in range(10_000):
        gain_it = np.linalg.solve(np.eye(1) + b.T @ s @ b, b.T @ s @ a)
        s_next = a.T @ s @ (a - b @ gain_it) + np.eye(4)
        if np.abs(s_next - s).max() < 1e-13:
            s = s_next
            break
        s = s_next
    gain_oracle = np.linalg.solve(np.eye(1) + b.T @ s @ b, b.T @ s @ a).ravel()
    np.testing.assert_allclose(gain, gain_oracle, atol=1e-6)


def test_excess_zero_at_truth():
    problem = toy(noise_std=0.2)
    assert excess_cost(problem, [1.3], [1.3], n_mc=64, seed=3) == 0.0


def test_excess_closed_form_quarter():
    problem = toy()
    excess = excess_cost(problem, [2.0], [1.0], n_mc=16, seed=0)
    np.testing.assert_allclose(excess, 0.25, atol=1e-2)


def test_hessian_zero_for_constant_cost():
    problem = toy()
    rigged = ControlProblem(
        model=problem.model,
        stage_cost=lambda t, x, u: np.zeros(np.asarray(x).shape[:-1]),
        terminal_cost=lambda x: np.ones(np.asarray(x).shape[:-1]),
        make_policy=problem.make_policy,
        theta_dim=1,
        synthesis_mode="generic-optimizer",
        theta_init=np.array([0.5]),
    )
    est = model_task_hessian(rigged, [1.0], n_mc=8, fd_step=1e-2, seed=0)
    np.testing.assert_allclose(est.matrix, [[0.0]], atol=1e-6)


def test_hessian_one_step_closed_form():
    # Synthesis and evaluation share one integer seed, so the same noise
    # draws appear in both and the closed-form curvature 2 / phi^2 comes out
    # nearly exactly even at a modest rollout count.
    problem = toy(noise_std=0.1)
    opts = SynthesisOptions(n_mc=2000, seed=11, n_starts=1)
    est = model_task_hessian(problem, [1.0], n_mc=2000, fd_step=1e-2, seed=11, opts=opts)
    assert est.matrix.shape == (1, 1)
    assert abs(est.matrix[0, 0] - 2.0) / 2.0 <= 0.05


def test_hessian_symmetrized_output():
    bench = make_benchmark("illustrative2d")
    est = model_task_hessian(bench.problem, bench.fit_init, n_mc=16, fd_step=1e-2, seed=0)
    np.testing.assert_allclose(est.matrix, est.matrix.T, atol=1e-10)


def test_hessian_warns_on_concave_landscape():
    model = SystemModel(
        state_dim=1,
        input_dim=1,
        param_dim=1,
        dynamics_fn=lambda x, u, phi: u,
        noise_std=0.0,
        horizon=1,
    )
    problem = ControlProblem(
        model=model,
        stage_cost=lambda t, x, u: np.zeros(np.asarray(x).shape[:-1]),
        terminal_cost=lambda x: 1.0 - (np.asarray(x)[..., 0] - 1.0) ** 2,
        make_policy=lambda theta: ParametricFeedback(
            theta, lambda th, x: th[0] * np.ones(np.asarray(x).shape[:-1] + (1,))
        ),
        theta_dim=1,
        synthesis_mode="benchmark-analytic",
        analytic_synthesis=lambda phi: np.asarray(phi, float).copy(),
    )
    with pytest.warns(CurvatureWarning):
        model_task_hessian(problem, [1.0], n_mc=4, fd_step=1e-2, seed=0)
