"""Heat-equation parameter fitting with grid-spacing fidelities.

``u_t = alpha u_xx + 2 beta u`` on ``[0, L] x [0, T]`` with
``u(x, 0) = sin(pi x / 2)`` and zero boundary values, discretized by central
differences in space and integrated with Tsitouras 5(4) at
``dt = 0.4 dx^2``.  Level ``k`` uses ``dx(k) = 1 / (k + c)``.
"""

from __future__ import annotations

import math

import numba
import numpy as np

from ..numerics import TABLEAUS, ODEBlowUp, step_plan

LENGTH = 10.0
HORIZON = 1.0
CFL = 0.4
TRUE_PARAMS = (0.85, 0.21)
REFERENCE_DX = 5e-3

_T5 = TABLEAUS["tsit5"]
_A = np.zeros((6, 6))
for _i, _row in enumerate(_T5.a):
    _A[_i, : len(_row)] = _row
_B = np.array(_T5.b)


def spacing(k: int, c: float = 8.0) -> float:
    if k < 1:
        raise ValueError("fidelity must be >= 1")
    return 1.0 / (k + c)


def grid(dx: float, length: float = LENGTH) -> np.ndarray:
    """Nodes ``0, dx, ..., length``; ``dx`` must divide ``length``."""
    cells = length / dx
    n = int(round(cells))
    if abs(cells - n) > 1e-9 * cells or n < 2:
        raise ValueError(f"dx={dx!r} does not divide the domain length {length!r}")
    return np.linspace(0.0, length, n + 1)


def initial_condition(x) -> np.ndarray:
    return np.sin(np.pi * np.asarray(x, dtype=float) / 2.0)


def analytic_solution(x, t: float, alpha: float, beta: float) -> np.ndarray:
    """Separable solution for the sine initial condition."""
    return math.exp((2.0 * beta - alpha * math.pi**2 / 4.0) * t) * initial_condition(x)


@numba.njit(cache=True)
def _rhs(u, alpha, beta, inv_dx2, out):
    n = u.size
    for i in range(n):
        left = u[i - 1] if i > 0 else 0.0
        right = u[i + 1] if i < n - 1 else 0.0
        out[i] = alpha * (left - 2.0 * u[i] + right) * inv_dx2 + 2.0 * beta * u[i]


@numba.njit(cache=True)
def _tsit5(u, alpha, beta, inv_dx2, h, n_steps, A, B):
    n = u.size
    ks = np.empty((6, n))
    tmp = np.empty(n)
    for _ in range(n_steps):
        for s in range(6):
            for i in range(n):
                acc = u[i]
                for j in range(s):
                    acc += h * A[s, j] * ks[j, i]
                tmp[i] = acc
            _rhs(tmp, alpha, beta, inv_dx2, ks[s])
        for i in range(n):
            acc = u[i]
            for s in range(6):
                acc += h * B[s] * ks[s, i]
            u[i] = acc
    return u


def heat_solve(alpha: float, beta: float, dx: float, horizon: float = HORIZON,
               length: float = LENGTH) -> np.ndarray:
    """Field ``u(x, horizon)`` on :func:`grid` nodes, boundary included."""
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be nonnegative")
    x = grid(dx, length)
    u = initial_condition(x[1:-1])
    dt = CFL * dx * dx
    n, rest = step_plan(horizon, dt)
    inv_dx2 = 1.0 / (dx * dx)
    u = _tsit5(u, float(alpha), float(beta), inv_dx2, dt, n, _A, _B)
    if rest > 0:
        u = _tsit5(u, float(alpha), float(beta), inv_dx2, rest, 1, _A, _B)
    if not np.all(np.isfinite(u)):
        raise ODEBlowUp(horizon)
    out = np.zeros(x.size)
    out[1:-1] = u
    return out


def heat_objective(alpha: float, beta: float, dx: float, target_x, target_u) -> float:
    """``dx * sum (u - u_bar)^2`` with ``u_bar`` interpolated linearly onto the grid."""
    u = heat_solve(alpha, beta, dx)
    u_bar = np.interp(grid(dx), np.asarray(target_x, dtype=float), np.asarray(target_u, dtype=float))
    with np.errstate(over="ignore"):
        return float(dx * np.sum((u - u_bar) ** 2))


def relative_l2_error(u, x, t: float, alpha: float, beta: float) -> float:
    exact = analytic_solution(x, t, alpha, beta)
    return float(np.linalg.norm(u - exact) / np.linalg.norm(exact))


class HeatPDEProblem:
    """Energy sequence ``E_k(alpha, beta)`` for annealing.

    The target field comes from a reference solve at ``reference_dx``
    unless supplied.  Blow-up maps to ``+inf`` energy.
    """

    name = "pde"
    dim = 2

    def __init__(self, true_params=TRUE_PARAMS, c: float = 8.0, reference_dx: float = REFERENCE_DX,
                 target: tuple[np.ndarray, np.ndarray] | None = None):
        self.true_params = tuple(float(p) for p in true_params)
        self.c = float(c)
        if target is None:
            target = (grid(reference_dx), heat_solve(*self.true_params, reference_dx))
        self.target_x, self.target_u = (np.asarray(a, dtype=float) for a in target)

    def spacing(self, k: int) -> float:
        return spacing(k, self.c)

    def energy(self, theta, k: int) -> float:
        alpha, beta = (float(v) for v in np.asarray(theta).reshape(-1))
        if alpha < 0 or beta < 0:
            return math.inf
        try:
            return heat_objective(alpha, beta, self.spacing(k), self.target_x, self.target_u)
        except ODEBlowUp:
            return math.inf

    def cost(self, k: int) -> float:
        # interior nodes times time steps
        dx = self.spacing(k)
        n_nodes = grid(dx).size - 2
        steps = math.ceil(HORIZON / (CFL * dx * dx) - 1e-9)
        return float(n_nodes * steps)
