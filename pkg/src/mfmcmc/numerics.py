"""Shared numerical kernels: quadrature, fixed-step ODE integration,
resumable conjugate gradients and Gaussian conditioning."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

MAX_ODE_STEPS = 10**8
JITTER_START = 1e-8
JITTER_DOUBLINGS = 6
_RZ_UNDERFLOW = math.sqrt(np.finfo(float).tiny)


class ODEBlowUp(FloatingPointError):
    """The integrated state became non-finite."""

    def __init__(self, t: float):
        super().__init__(f"non-finite ODE state at t={t:.6g}")
        self.t = t


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


class CGBreakdown(ArithmeticError):
    pass


# --------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class Grid1D:
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a grid needs at least two nodes")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, a: float, b: float, n: int) -> Grid1D:
        return cls(np.linspace(a, b, n))

    @property
    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    def __len__(self):
        return self.nodes.size


def trapezoid(values, grid: Grid1D) -> float:
    values = np.asarray(values, dtype=float)
    if values.shape != grid.nodes.shape:
        raise ValueError(f"{values.size} values for a grid of {grid.nodes.size} nodes")
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * grid.spacing))


# --------------------------------------------------------------------------
# fixed-step Runge-Kutta

_TSIT5_A = (
    (),
    (0.161,),
    (-0.008480655492356988544, 0.3354806554923569885),
    (2.897153057105493432, -6.359448489975074843, 4.362295432869581411),
    (5.325864828439256604, -11.74888356406282788, 7.495539342889836208, -0.09249506636175524926),
    (5.861455442946420029, -12.92096931784710929, 8.159367898576158643, -0.07158497328140099722,
     -0.02826905039406838291),
)
_TSIT5_B = (0.09646076681806522952, 0.01, 0.4798896504144995748, 1.379008574103741893,
            -3.290069515436080680, 2.324710524099773982)


@dataclass(frozen=True)
class ButcherTableau:
    a: tuple
    b: tuple
    c: tuple

    @classmethod
    def from_lower(cls, a, b) -> ButcherTableau:
        return cls(tuple(tuple(row) for row in a), tuple(b), tuple(math.fsum(row) for row in a))


TABLEAUS = {
    "euler": ButcherTableau.from_lower(((),), (1.0,)),
    "rk4": ButcherTableau.from_lower(((), (0.5,), (0.0, 0.5), (0.0, 0.0, 1.0)),
                                     (1 / 6, 1 / 3, 1 / 3, 1 / 6)),
    "tsit5": ButcherTableau.from_lower(_TSIT5_A, _TSIT5_B),
}


def rk_step(rhs, t: float, z: np.ndarray, h: float, tableau: ButcherTableau) -> np.ndarray:
    stages = []
    for a_row, c in zip(tableau.a, tableau.c):
        zi = z
        for a_ij, k_j in zip(a_row, stages):
            if a_ij != 0.0:
                zi = zi + (h * a_ij) * k_j
        stages.append(np.asarray(rhs(t + c * h, zi), dtype=float))
    out = z
    for b_i, k_i in zip(tableau.b, stages):
        out = out + (h * b_i) * k_i
    return out


def step_plan(span: float, dt: float) -> tuple[int, float]:
    """Number of full steps of size ``dt`` covering ``span`` and the leftover."""
    n = int(math.floor(span / dt))
    rest = span - n * dt
    if rest <= 1e-12 * max(span, dt):
        rest = 0.0
    elif dt - rest <= 1e-12 * max(span, dt):
        n, rest = n + 1, 0.0
    return n, rest


def ode_solve(rhs, z0, t_grid, dt: float, method: str = "rk4", t0: float = 0.0,
              max_steps: int = MAX_ODE_STEPS) -> np.ndarray:
    """Integrate ``dz/dt = rhs(t, z)`` with fixed steps of size ``dt``.

    Between consecutive output times the solver takes as many full steps as
    fit and then one partial step landing exactly on the output time.

    Returns an array of shape ``(len(t_grid),) + z0.shape``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    try:
        tableau = TABLEAUS[method.lower()]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(TABLEAUS)}") from None
    z = np.array(z0, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) < 0) or (t_grid.size and t_grid[0] < t0):
        raise ValueError("output times must be sorted and not precede t0")
    out = np.empty((t_grid.size,) + z.shape)
    t = t0
    steps = 0
    for i, t_next in enumerate(t_grid):
        n, rest = step_plan(t_next - t, dt)
        steps += n + (rest > 0)
        if steps > max_steps:
            raise RuntimeError(f"ODE step budget of {max_steps} exceeded")
        for j in range(n):
            z = rk_step(rhs, t + j * dt, z, dt, tableau)
        if rest > 0:
            z = rk_step(rhs, t + n * dt, z, rest, tableau)
        t = t_next
        if not np.all(np.isfinite(z)):
            raise ODEBlowUp(t)
        out[i] = z
    return out


# --------------------------------------------------------------------------
# conjugate gradients


@dataclass(frozen=True)
class CGState:
    z: np.ndarray
    residual: np.ndarray
    direction: np.ndarray
    rz: float
    k: int


def cg_start(b, preconditioner=None) -> CGState:
    b = np.asarray(b, dtype=float)
    r = b.copy()
    s = preconditioner(r) if preconditioner is not None else r
    return CGState(np.zeros_like(b), r, np.array(s, dtype=float), float(r @ s), 0)


def cg_advance(state: CGState, apply_A, m: int = 1, preconditioner=None) -> CGState:
    """Run ``m`` more (preconditioned) CG iterations from ``state``."""
    z, r, p, rz = state.z, state.residual, state.direction, state.rz
    k = state.k
    for _ in range(m):
        k += 1
        if rz == 0.0:
            continue  # exact solution reached
        Ap = apply_A(p)
        curvature = float(p @ Ap)
        if curvature == 0.0 and rz < _RZ_UNDERFLOW:
            rz = 0.0  # converged to working precision
            continue
        if not curvature > 0.0:
            raise CGBreakdown(f"non-positive curvature {curvature!r} at iteration {k}")
        alpha = rz / curvature
        z = z + alpha * p
        r = r - alpha * Ap
        s = preconditioner(r) if preconditioner is not None else r
        rz_new = float(r @ s)
        p = s + (rz_new / rz) * p
        rz = rz_new
    return CGState(z, r, p, rz, k)


def cg_solve(apply_A, b, k: int, preconditioner=None) -> CGState:
    """Exactly ``k`` CG iterations from the zero vector (no tolerance stop)."""
    if k < 0:
        raise ValueError("iteration count must be >= 0")
    return cg_advance(cg_start(b, preconditioner), apply_A, k, preconditioner)


def jacobi_preconditioner(A: np.ndarray):
    inv_diag = 1.0 / np.diag(A)
    return lambda r: inv_diag * r


# --------------------------------------------------------------------------
# Gaussian machinery


def cholesky(S, jitter_scale: float | None = None) -> np.ndarray:
    """Lower Cholesky factor, adding diagonal jitter if needed.

    Jitter starts at ``1e-8 * mean(diag)`` and doubles up to six times.
    """
    S = np.asarray(S, dtype=float)
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(S))) if jitter_scale is None else float(jitter_scale)
    if not scale > 0:
        scale = 1.0
    jitter = JITTER_START * scale
    eye = np.eye(S.shape[0])
    for _ in range(JITTER_DOUBLINGS + 1):
        try:
            return np.linalg.cholesky(S + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 2.0
    raise NotPositiveDefinite(f"matrix not positive definite even with jitter {jitter / 2:.3g}")


def mvn_sample(chol, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    chol = np.asarray(chol)
    d = chol.shape[0]
    if size is None:
        return chol @ rng.standard_normal(d)
    return rng.standard_normal((size, d)) @ chol.T


def conditional_operator(S_oo, S_no, S_nn, jitter_scale: float | None = None):
    """Return ``(A, C)`` with ``new | old ~ N(A @ old, C)``."""
    L = cholesky(S_oo, jitter_scale)
    A = scipy.linalg.cho_solve((L, True), np.asarray(S_no, dtype=float).T).T
    C = np.asarray(S_nn, dtype=float) - A @ np.asarray(S_no, dtype=float).T
    return A, 0.5 * (C + C.T)


def gaussian_conditional(cov, f_old):
    """Mean and covariance of the trailing block given the leading ``f_old``."""
    cov = np.asarray(cov, dtype=float)
    f_old = np.atleast_1d(np.asarray(f_old, dtype=float))
    n = f_old.size
    A, C = conditional_operator(cov[:n, :n], cov[n:, :n], cov[n:, n:])
    return A @ f_old, C


def se_kernel(x, x2, lengthscale: float = 1.0, variance: float = 1.0) -> float:
    if lengthscale <= 0 or variance <= 0:
        raise ValueError("lengthscale and variance must be positive")
    d = np.atleast_1d(np.asarray(x, dtype=float) - np.asarray(x2, dtype=float))
    return float(variance * np.exp(-0.5 * (d @ d) / lengthscale**2))


def se_kernel_matrix(X1, X2, lengthscale: float, variance: float = 1.0) -> np.ndarray:
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    if X1.ndim == 1:
        X1 = X1[:, None]
    if X2.ndim == 1:
        X2 = X2[:, None]
    return variance * np.exp(-0.5 * cdist(X1, X2, "sqeuclidean") / lengthscale**2)


__all__ = [
    "CGBreakdown", "CGState", "Grid1D", "NotPositiveDefinite", "ODEBlowUp", "TABLEAUS",
    "cg_advance", "cg_solve", "cg_start", "cholesky", "conditional_operator",
    "gaussian_conditional", "jacobi_preconditioner", "mvn_sample", "ode_solve",
    "rk_step", "se_kernel", "se_kernel_matrix", "step_plan", "trapezoid",
]
