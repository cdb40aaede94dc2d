"""Semidiscrete mixed Hodge heat equation and backward Euler time stepping.

The block ODE in the unknown coefficient vectors (Sigma, U) is::

    Msig Sigma' ... (algebraic)   Msig Sigma - B^T U = 0
    A U' + B Sigma + K U = F(t)

with A the mass matrix of the k-forms and F = A * Pi_h f(t).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .hodge import MixedSolution, default_next_space, harmonic_basis, mixed_solver
from .operators import (adjoint_inclusion, l2_error, mass_matrix, mixed_matrix,
                        project_data, stiffness_matrix, top_form_integrals)
from .spaces import Cochain, FormSpace


@dataclass
class ExactSolution:
    """Evaluators of a smooth solution; each takes (points, t)."""

    u: Callable
    u_t: Callable
    minus_laplacian: Callable
    harmonic_part: Callable
    sigma: Callable | None = None
    du: Callable | None = None
    dsigma: Callable | None = None


@dataclass
class ParabolicProblem:
    sigma_space: FormSpace | None
    u_space: FormSpace
    T: float
    dt: float
    source: Callable | None = None
    initial: Callable | None = None
    initial_minus_laplacian: Callable | None = None
    initial_harmonic: Callable | None = None
    initial_coefficients: np.ndarray | None = None
    exact: ExactSolution | None = None
    next_space: FormSpace | None = None
    initial_mode: str = "elliptic"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.T >= self.dt:
            raise ValueError("T must be at least dt")
        if self.initial_mode not in ("elliptic", "projection"):
            raise ValueError(f"unknown initial mode {self.initial_mode!r}")
        if self.exact is not None and self.initial is None and self.initial_coefficients is None:
            ex = self.exact
            self.initial = lambda x: ex.u(x, 0.0)
            self.initial_minus_laplacian = lambda x: ex.minus_laplacian(x, 0.0)
            self.initial_harmonic = lambda x: ex.harmonic_part(x, 0.0)
        if self.next_space is None:
            self.next_space = default_next_space(self.u_space)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass(frozen=True)
class ParabolicState:
    t: float
    sigma: Cochain | None
    u: Cochain


def _coef(c):
    return np.asarray(getattr(c, "coefficients", c), dtype=float)


def elliptic_projection(problem: ParabolicProblem, t0: float, minus_laplacian=None,
                        harmonic_part=None) -> MixedSolution:
    """Discrete elliptic solve with data Pi_h(-Lap u(t0)) and Pi_h(P_H u(t0))."""
    ex = problem.exact
    if minus_laplacian is None:
        minus_laplacian = lambda x: ex.minus_laplacian(x, t0)  # noqa: E731
    if harmonic_part is None:
        harmonic_part = lambda x: ex.harmonic_part(x, t0)  # noqa: E731
    space = problem.u_space
    f_h = project_data(space, minus_laplacian)
    w_h = project_data(space, harmonic_part)
    return mixed_solver(problem.sigma_space, space, problem.next_space).solve(f_h, w_h)


class BackwardEuler:
    """Assembled block system and cached factorizations of the stepping matrix."""

    def __init__(self, problem: ParabolicProblem):
        self.problem = problem
        s, u = problem.sigma_space, problem.u_space
        self.A = mass_matrix(u)
        self.K = stiffness_matrix(u, problem.next_space)
        self.n_u = u.dof_count
        if s is not None:
            self.D = mass_matrix(s)
            self.B = mixed_matrix(s, u)
            self.n_s = s.dof_count
            self._sigma_lu = splu(self.D.tocsc())
        else:
            self.D = self.B = None
            self.n_s = 0
        self._factors = {}

    def block_mass(self):
        if self.n_s == 0:
            return self.A
        return sp.bmat([[self.D, -self.B.T], [None, self.A]], format="csr")

    def evolution(self):
        if self.n_s == 0:
            return self.K
        return sp.bmat([[sp.csr_matrix((self.n_s, self.n_s)), None],
                        [self.B, self.K]], format="csr")

    def factor(self, dt: float):
        if dt not in self._factors:
            self._factors[dt] = splu((self.block_mass() + dt * self.evolution()).tocsc())
        return self._factors[dt]

    def sigma_from_u(self, u) -> np.ndarray:
        return self._sigma_lu.solve(self.B.T @ u)

    def load(self, t: float) -> np.ndarray:
        f = self.problem.source
        if f is None:
            return np.zeros(self.n_u)
        return self.A @ project_data(self.problem.u_space, lambda x: f(x, t)).coefficients

    def step(self, state: ParabolicState, dt: float, f_next=None) -> ParabolicState:
        u = state.u.coefficients
        x = u if self.n_s == 0 else np.concatenate([state.sigma.coefficients, u])
        rhs = self.block_mass() @ x
        if f_next is not None:
            rhs[self.n_s:] += dt * _coef(f_next)
        y = self.factor(dt).solve(rhs)
        return self._state(state.t + dt, y)

    def _state(self, t, y):
        s = self.problem.sigma_space
        sigma = Cochain(s, y[:self.n_s]) if s is not None else None
        return ParabolicState(t, sigma, Cochain(self.problem.u_space, y[self.n_s:]))

    def energy(self, u) -> float:
        u = _coef(u)
        return float(u @ (self.A @ u))

    def total_integral(self, u) -> float:
        space = self.problem.u_space
        if space.k != space.n:
            return float("nan")
        return float(top_form_integrals(space) @ _coef(u))


def step_backward_euler(stepper: BackwardEuler, state: ParabolicState, dt: float,
                        f_next=None) -> ParabolicState:
    """Solve (Mblk + dt [[0,0],[B,K]]) x_next = Mblk x + dt (0, F_next)."""
    return stepper.step(state, dt, f_next)


def initial_state(problem: ParabolicProblem, stepper: BackwardEuler | None = None) -> ParabolicState:
    stepper = stepper or BackwardEuler(problem)
    space = problem.u_space
    if problem.initial_coefficients is not None:
        u = np.asarray(problem.initial_coefficients, dtype=float)
    elif problem.initial is None:
        u = np.zeros(space.dof_count)
    elif problem.initial_mode == "projection":
        u = project_data(space, problem.initial).coefficients
    else:
        sol = elliptic_projection(problem, 0.0, problem.initial_minus_laplacian,
                                  problem.initial_harmonic)
        u = sol.u.coefficients
    y = u if stepper.n_s == 0 else np.concatenate([stepper.sigma_from_u(u), u])
    return stepper._state(0.0, y)


class SemidiscreteFlow:
    """Exact solution of the semidiscrete system with zero source, by modal expansion.

    Eliminating Sigma gives A U' = -(B D^{-1} B^T + K) U; the generalized
    eigenvectors of that pencil diagonalize the flow.
    """

    def __init__(self, problem: ParabolicProblem, stepper: BackwardEuler | None = None):
        if problem.source is not None:
            raise ValueError("the modal flow handles zero source only")
        self.stepper = stepper or BackwardEuler(problem)
        st = self.stepper
        lap = st.K.toarray()
        if st.n_s:
            bt = st.B.T.toarray()
            lap = lap + bt.T @ sla.solve(st.D.toarray(), bt, assume_a="pos")
        a = st.A.toarray()
        self.rates, self.modes = sla.eigh(0.5 * (lap + lap.T), 0.5 * (a + a.T))
        self.rates = np.clip(self.rates, 0.0, None)
        self.A = st.A

    def state(self, initial: ParabolicState, t: float) -> ParabolicState:
        c = self.modes.T @ (self.A @ initial.u.coefficients)
        u = self.modes @ (np.exp(-self.rates * (t - initial.t)) * c)
        st = self.stepper
        y = u if st.n_s == 0 else np.concatenate([st.sigma_from_u(u), u])
        return st._state(t, y)


@dataclass
class ErrorQuantities:
    """Thomee error functions at one time, with their W_h norms."""

    t: float
    rho: Cochain
    theta: Cochain
    psi: Cochain | None
    epsilon: Cochain | None
    norms: dict = field(default_factory=dict)


@dataclass
class RunResult:
    times: np.ndarray
    states: list
    series: dict
    errors: list
    bochner: dict
    snapshots: dict

    def column(self, name):
        return self.series[name]


def bochner_norms(times, values) -> dict:
    """L1, L2 and Linf in time of a sampled scalar norm curve (trapezoid rule)."""
    times = np.asarray(times, dtype=float)
    values = np.abs(np.asarray(values, dtype=float))
    if len(times) < 2:
        v = float(values.max(initial=0.0))
        return {"L1": 0.0, "L2": 0.0, "Linf": v}
    return {"L1": float(np.trapezoid(values, times)),
            "L2": float(np.sqrt(np.trapezoid(values ** 2, times))),
            "Linf": float(values.max())}


def thomee_residuals(stepper: BackwardEuler, theta, epsilon, theta_t, rho_t, p_tilde,
                     crime_ut, state_scale) -> tuple[float, float]:
    """Residuals of the two error equations, relative to the state scale.

    First: Msig eps - B^T theta.  Second: A theta_t + B eps + K theta minus
    A(-rho_t + p_tilde + (Pi_h - i_h^*) u_t).  ``state_scale`` holds
    (|Msig sigma_h|, |A du_h/dt|) and optionally |A u_h|, the last one a floor
    for states at rest where every operand is at rounding level.
    """
    A, K = stepper.A, stepper.K
    floor = state_scale[2] if len(state_scale) > 2 else 0.0
    if stepper.n_s:
        lhs1, rhs1 = stepper.D @ epsilon, stepper.B.T @ theta
        r1 = float(np.abs(lhs1 - rhs1).max() / max(state_scale[0], floor, np.finfo(float).tiny))
        b_eps = stepper.B @ epsilon
    else:
        r1, b_eps = 0.0, np.zeros_like(theta)
    terms = [A @ theta_t, b_eps, K @ theta, A @ (-rho_t + p_tilde + crime_ut)]
    res = terms[0] + terms[1] + terms[2] - terms[3]
    scale = max([np.abs(t).max(initial=0.0) for t in terms]
                + [state_scale[1], floor, np.finfo(float).tiny])
    return r1, float(np.abs(res).max() / scale)


def run(problem: ParabolicProblem, method: str = "backward_euler", sample_every: int = 1,
        snapshot_times=(), callback=None) -> RunResult:
    """March from 0 to T, sampling states, diagnostics and (if known) errors.

    ``method="semidiscrete"`` samples the exact semidiscrete flow at the same
    times instead of stepping; it needs a zero source.
    """
    stepper = BackwardEuler(problem)
    state = initial_state(problem, stepper)
    flow = SemidiscreteFlow(problem, stepper) if method == "semidiscrete" else None
    if method not in ("backward_euler", "semidiscrete"):
        raise ValueError(f"unknown method {method!r}")
    n_steps, dt = problem.n_steps, problem.T / problem.n_steps
    snap_idx = {int(round(ts / dt)): ts for ts in snapshot_times}
    samples, snapshots = [state], {}
    if 0 in snap_idx:
        snapshots[snap_idx[0]] = state
    start = state
    harmonic = None
    for n in range(1, n_steps + 1):
        t = n * dt
        if flow is None:
            state = stepper.step(state, dt, stepper.load(t) if problem.source else None)
        else:
            state = flow.state(start, t)
        if not np.all(np.isfinite(state.u.coefficients)):
            raise FloatingPointError(f"non-finite state at step {n}")
        if n % sample_every == 0 or n == n_steps:
            samples.append(state)
        if n in snap_idx:
            snapshots[snap_idx[n]] = state
        if callback is not None:
            callback(n, state)
    times = np.array([s.t for s in samples])
    us = np.array([s.u.coefficients for s in samples])
    series = {"t": times,
              "energy": np.einsum("ti,ti->t", us, (stepper.A @ us.T).T),
              "mass": np.array([stepper.total_integral(u) for u in us])}
    if problem.u_space.k < problem.u_space.n or problem.sigma_space is None:
        series["mass"] = np.full(len(times), np.nan)
    if problem.exact is not None or problem.u_space.dof_count <= 4000:
        try:
            harmonic = harmonic_basis(problem.sigma_space, problem.u_space, problem.next_space)
        except Exception:  # diagnostics only
            harmonic = None
    if harmonic is not None and harmonic.dim:
        mh = stepper.A @ harmonic.vectors
        series["harmonic"] = us @ mh
    errors = []
    bochner = {}
    if problem.exact is not None:
        errors = _error_series(problem, stepper, samples, series)
        for name in ("u_error", "sigma_error", "theta", "epsilon", "rho", "psi"):
            if name in series:
                bochner[name] = bochner_norms(times, series[name])
    return RunResult(times, samples, series, errors, bochner, snapshots)


def _wnorm(mat, c):
    return float(np.sqrt(max(c @ (mat @ c), 0.0)))


def _error_series(problem, stepper, samples, series):
    ex = problem.exact
    U, S = problem.u_space, problem.sigma_space
    times = series["t"]
    rows, ells, rhos, thetas, eps_list, p_list, crimes, scales = [], [], [], [], [], [], [], []
    ksig = stiffness_matrix(S, U) if S is not None else None
    for st in samples:
        t = st.t
        ell = elliptic_projection(problem, t)
        ihu = adjoint_inclusion(U, lambda x: ex.u(x, t)).coefficients
        rho = ell.u.coefficients - ihu
        theta = st.u.coefficients - ell.u.coefficients
        ut = lambda x: ex.u_t(x, t)  # noqa: E731
        crime = project_data(U, ut).coefficients - adjoint_inclusion(U, ut).coefficients
        row = {"rho": _wnorm(stepper.A, rho), "theta": _wnorm(stepper.A, theta),
               "dtheta": _wnorm(stepper.K, theta),
               "u_error": l2_error(U, st.u, lambda x: ex.u(x, t))}
        if ex.du is not None and U.k < U.n:
            row["du_error"] = l2_error(U, st.u, lambda x: ex.du(x, t), derivative=True)
        if S is not None:
            ihs = adjoint_inclusion(S, lambda x: ex.sigma(x, t)).coefficients
            psi = st.sigma.coefficients - ihs
            eps = st.sigma.coefficients - ell.sigma.coefficients
            row.update({"psi": _wnorm(stepper.D, psi), "epsilon": _wnorm(stepper.D, eps),
                        "depsilon": _wnorm(ksig, eps),
                        "sigma_error": l2_error(S, st.sigma, lambda x: ex.sigma(x, t))})
            if ex.dsigma is not None:
                row["dsigma_error"] = l2_error(S, st.sigma, lambda x: ex.dsigma(x, t),
                                               derivative=True)
            eps_list.append(eps)
            scales.append(np.abs(stepper.D @ st.sigma.coefficients).max(initial=0.0))
        else:
            psi = eps = None
            eps_list.append(None)
            scales.append(0.0)
        errors_t = ErrorQuantities(t, Cochain(U, rho), Cochain(U, theta),
                                   Cochain(S, psi) if S is not None else None,
                                   Cochain(S, eps) if S is not None else None, row)
        rows.append(errors_t)
        rhos.append(rho)
        thetas.append(theta)
        p_list.append(ell.p.coefficients)
        crimes.append(crime)
    thetas, rhos = np.array(thetas), np.array(rhos)
    if len(times) >= 3:
        theta_t = np.gradient(thetas, times, axis=0, edge_order=2)
        rho_t = np.gradient(rhos, times, axis=0, edge_order=2)
        us = np.array([s.u.coefficients for s in samples])
        u_t = np.gradient(us, times, axis=0, edge_order=2)
    else:
        theta_t = rho_t = u_t = np.zeros_like(thetas)
    for j, errs in enumerate(rows):
        scale = (scales[j], float(np.abs(stepper.A @ u_t[j]).max(initial=0.0)),
                 float(np.abs(stepper.A @ samples[j].u.coefficients).max(initial=0.0)))
        eps = eps_list[j] if eps_list[j] is not None else np.zeros(0)
        r1, r2 = thomee_residuals(stepper, thetas[j], eps, theta_t[j], rho_t[j],
                                  p_list[j], crimes[j], scale)
        errs.norms.update(r1=r1, r2=r2)
    for name in rows[0].norms:
        series[name] = np.array([e.norms.get(name, np.nan) for e in rows])
    return rows
