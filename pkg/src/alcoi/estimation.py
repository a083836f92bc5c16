"""Identification from episodic data.

Parameters are fit by nonlinear least squares on one-step transitions: the
objective is ``sum_{k,t} ||f(x_t, u_t, phi) - x_{t+1}||^2`` over all episodes.
The solver is a damped Gauss-Newton iteration with multi-start, so the result
is the best stationary point found, not a certified global optimum.

Curvature summaries of a policy's visitation are collected in Gram matrices
``sum_t Df(x_t, u_t, phi)^T Df(x_t, u_t, phi)`` where ``Df`` is the parameter
Jacobian of the dynamics. Scaled by the noise level these become Fisher
information estimates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .dynamics import (
    DynamicsError,
    Policy,
    SeedLike,
    SystemModel,
    Trajectory,
    param_jacobian,
    rollout_arrays,
    rollout_batch,
)


class EstimationError(RuntimeError):
    """No usable fit could be produced from the given data."""


class ConvergenceError(EstimationError):
    """The iteration cap was reached before the gradient tolerance; carries the best iterate."""

    def __init__(self, best: "FitResult"):
        self.best = best
        super().__init__(
            f"no start met the gradient tolerance (best gradient norm {best.grad_norm:.3e})"
        )


@dataclass(eq=False)
class EpisodeDataset:
    """A bag of episodes collected on one system."""

    episodes: list[Trajectory]

    def __post_init__(self):
        self.episodes = list(self.episodes)
        if not self.episodes:
            raise ValueError("dataset must contain at least one episode")

    @property
    def n_episodes(self) -> int:
        return len(self.episodes)

    def transitions(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stack all (x, u, x_next) rows across episodes."""
        xs, us, ys = zip(*(ep.transitions() for ep in self.episodes))
        return np.concatenate(xs), np.concatenate(us), np.concatenate(ys)

    def merged(self, other: "EpisodeDataset") -> "EpisodeDataset":
        return EpisodeDataset(self.episodes + other.episodes)

    def save_csv(self, path) -> None:
        """Flat layout: episode, step, state dims, input dims, next-state dims."""
        dx = self.episodes[0].states.shape[1]
        du = self.episodes[0].inputs.shape[1]
        header = (
            ["episode", "step"]
            + [f"x{i}" for i in range(dx)]
            + [f"u{i}" for i in range(du)]
            + [f"y{i}" for i in range(dx)]
        )
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for k, ep in enumerate(self.episodes):
                X, U, Y = ep.transitions()
                for t in range(len(U)):
                    row = [k, t] + [repr(float(v)) for v in (*X[t], *U[t], *Y[t])]
                    writer.writerow(row)

    @classmethod
    def load_csv(cls, path, state_dim: int, input_dim: int) -> "EpisodeDataset":
        by_episode: dict[int, list[list[float]]] = {}
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                k = int(row[0])
                by_episode.setdefault(k, []).append([float(v) for v in row[2:]])
        episodes = []
        for k in sorted(by_episode):
            rows = np.asarray(by_episode[k])
            X = rows[:, :state_dim]
            U = rows[:, state_dim : state_dim + input_dim]
            Y = rows[:, state_dim + input_dim :]
            states = np.concatenate([X, Y[-1:]], axis=0)
            episodes.append(Trajectory(states, U))
        return cls(episodes)


def dataset_from_rollouts(
    model: SystemModel, policy: Policy, phi, n_episodes: int, seed: SeedLike
) -> EpisodeDataset:
    return EpisodeDataset(rollout_batch(model, policy, phi, n_episodes, seed))


@dataclass(eq=False)
class GramMatrix:
    """Symmetric PSD accumulation of ``Df^T Df`` terms with its normalization tag.

    ``per-episode-mean`` divides the sum over all steps by the episode count;
    ``raw-sum`` leaves it unnormalized.
    """

    matrix: np.ndarray
    normalization: str = "per-episode-mean"

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, float)
        if self.normalization not in ("per-episode-mean", "raw-sum"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError("Gram matrix must be square")
        scale = max(1.0, float(np.abs(self.matrix).max())) if self.matrix.size else 1.0
        if np.abs(self.matrix - self.matrix.T).max(initial=0.0) > 1e-12 * scale:
            raise ValueError("Gram matrix must be symmetric")

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([self.normalization, self.matrix.shape[0]])
            for row in self.matrix:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def load_csv(cls, path) -> "GramMatrix":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            tag, _ = next(reader)
            matrix = np.asarray([[float(v) for v in row] for row in reader])
        return cls(matrix, tag)


# ---------------------------------------------------------------------------
# Least squares
# ---------------------------------------------------------------------------


@dataclass
class SolverOptions:
    """Damped Gauss-Newton settings.

    ``n_starts`` runs the local solver from ``init`` plus perturbed copies;
    perturbations are ``start_scale * (1 + |init|)``-scaled standard normals
    drawn from ``seed``.
    """

    grad_tol: float = 1e-8
    max_iter: int = 500
    n_starts: int = 5
    start_scale: float = 0.5
    seed: int = 0
    jacobian_fd_step: float = 1e-5


@dataclass
class FitResult:
    phi: np.ndarray
    objective: float
    grad_norm: float
    n_iter: int
    converged: bool
    start_index: int


def _residual_system(model: SystemModel, X, U, Y, fd_step: float):
    def residual(phi):
        pred = np.asarray(model.dynamics_fn(X, U, phi), float)
        return (pred - Y).ravel()

    def jacobian(phi):
        J = param_jacobian(model, X, U, phi, fd_step=fd_step)
        return J.reshape(-1, model.param_dim)

    return residual, jacobian


def _damped_gauss_newton(residual, jacobian, init, opts: SolverOptions):
    """Minimize ||r(phi)||^2 by Gauss-Newton steps with adaptive damping."""
    phi = np.asarray(init, float).copy()
    try:
        r = residual(phi)
    except DynamicsError:
        return None
    if not np.all(np.isfinite(r)):
        return None
    obj = float(r @ r)
    mu = None
    n_iter = 0
    grad_norm = np.inf
    for n_iter in range(1, opts.max_iter + 1):
        try:
            J = jacobian(phi)
        except DynamicsError:
            # A probe point of the difference stencil tripped a model guard;
            # keep the current iterate rather than discarding the start.
            return FitResult(phi, obj, grad_norm, n_iter, False, -1)
        if not np.all(np.isfinite(J)):
            return None
        g = 2.0 * (J.T @ r)
        grad_norm = float(np.linalg.norm(g))
        if grad_norm <= opts.grad_tol:
            return FitResult(phi, obj, grad_norm, n_iter, True, -1)
        JtJ = J.T @ J
        diag = np.diag(JtJ).copy()
        diag[diag < 1e-12] = 1e-12
        if mu is None:
            mu = 1e-3
        accepted = False
        while mu < 1e14:
            try:
                step = np.linalg.solve(JtJ + mu * np.diag(diag), -0.5 * g)
            except np.linalg.LinAlgError:
                mu *= 4.0
                continue
            cand = phi + step
            try:
                r_new = residual(cand)
            except DynamicsError:
                mu *= 4.0
                continue
            if np.all(np.isfinite(r_new)):
                obj_new = float(r_new @ r_new)
                if obj_new < obj:
                    phi, r, obj = cand, r_new, obj_new
                    mu = max(mu / 3.0, 1e-12)
                    accepted = True
                    break
            mu *= 4.0
        if not accepted:
            # Damping exhausted: either at a stationary point up to roundoff
            # or stuck; report what we have.
            return FitResult(phi, obj, grad_norm, n_iter, grad_norm <= opts.grad_tol, -1)
    return FitResult(phi, obj, grad_norm, opts.max_iter, False, -1)


def least_squares_fit(
    data: EpisodeDataset,
    model: SystemModel,
    init,
    opts: SolverOptions | None = None,
) -> FitResult:
    """Fit ``phi`` to one-step transitions by multi-start damped Gauss-Newton.

    Returns the lowest-objective iterate across starts when it meets the
    gradient tolerance. Raises :class:`ConvergenceError` carrying that best
    iterate when it does not, and :class:`EstimationError` when every start
    diverges.
    """
    opts = opts or SolverOptions()
    init = np.atleast_1d(np.asarray(init, float))
    if init.shape != (model.param_dim,):
        raise ValueError(f"init must have shape ({model.param_dim},)")
    if model.param_dim == 0:
        return FitResult(init.copy(), _objective_value(data, model, init), 0.0, 0, True, 0)
    X, U, Y = data.transitions()
    residual, jacobian = _residual_system(model, X, U, Y, opts.jacobian_fd_step)
    rng = np.random.default_rng(opts.seed)
    results: list[FitResult] = []
    for s in range(max(1, opts.n_starts)):
        if s == 0:
            start = init
        else:
            start = init + opts.start_scale * (1.0 + np.abs(init)) * rng.standard_normal(init.shape)
        res = _damped_gauss_newton(residual, jacobian, start, opts)
        if res is not None:
            res.start_index = s
            results.append(res)
    if not results:
        raise EstimationError("all starts diverged")
    # Select by objective across all starts before looking at convergence
    # flags. A start that met the gradient tolerance on a flat plateau must
    # not displace a lower-objective iterate whose gradient merely stalled
    # at the numerical floor of a large summed objective.
    best = min(results, key=lambda r: r.objective)
    if best.converged:
        return best
    raise ConvergenceError(best)


def _objective_value(data: EpisodeDataset, model: SystemModel, phi) -> float:
    X, U, Y = data.transitions()
    resid = np.asarray(model.dynamics_fn(X, U, phi), float) - Y
    return float(np.sum(resid * resid))


# ---------------------------------------------------------------------------
# Error and information functionals
# ---------------------------------------------------------------------------


def prediction_error(
    phi_hat,
    phi_star,
    policy: Policy,
    model: SystemModel,
    n_mc: int,
    seed: SeedLike,
) -> float:
    """Monte Carlo estimate of the time-averaged one-step prediction error.

    Episodes run under the true parameter ``phi_star``; the error averages
    ``||f(x, u, phi_hat) - f(x, u, phi_star)||^2`` over steps, then episodes.
    """
    states, inputs = rollout_arrays(model, policy, np.asarray(phi_star, float), n_mc, seed)
    X, U = states[:, :-1], inputs
    diff = np.asarray(model.dynamics_fn(X, U, np.asarray(phi_hat, float)), float) - np.asarray(
        model.dynamics_fn(X, U, np.asarray(phi_star, float)), float
    )
    return float(np.mean(np.mean(np.sum(diff * diff, axis=-1), axis=-1)))


def empirical_gram(
    data: EpisodeDataset,
    model: SystemModel,
    phi,
    normalization: str = "per-episode-mean",
) -> GramMatrix:
    """Accumulate ``Df^T Df`` over every step of every episode."""
    X, U, _ = data.transitions()
    J = param_jacobian(model, X, U, np.asarray(phi, float))
    J = J.reshape(-1, model.state_dim, model.param_dim)
    total = np.einsum("nij,nik->jk", J, J)
    if normalization == "per-episode-mean":
        total = total / data.n_episodes
    return GramMatrix(total, normalization)


def mc_covariance(
    policy: Policy,
    model: SystemModel,
    phi,
    n_mc: int,
    seed: SeedLike,
) -> GramMatrix:
    """Monte Carlo estimate of the expected per-episode Gram matrix of ``policy``."""
    phi = np.asarray(phi, float)
    states, inputs = rollout_arrays(model, policy, phi, n_mc, seed)
    X = states[:, :-1].reshape(-1, model.state_dim)
    U = inputs.reshape(-1, model.input_dim)
    J = param_jacobian(model, X, U, phi).reshape(-1, model.state_dim, model.param_dim)
    total = np.einsum("nij,nik->jk", J, J) / n_mc
    return GramMatrix(total, "per-episode-mean")


def fisher_information(
    policy: Policy,
    model: SystemModel,
    phi,
    n_mc: int,
    seed: SeedLike,
) -> GramMatrix:
    """Estimated information matrix: the expected Gram scaled by the noise power."""
    if model.noise_std <= 0:
        raise ValueError("Fisher information requires positive noise_std")
    cov = mc_covariance(policy, model, phi, n_mc, seed)
    return GramMatrix(cov.matrix / model.noise_std**2, cov.normalization)
