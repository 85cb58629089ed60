"""Benchmark problems: semilinear heat equation and a linear control case.

The main benchmark is the 1D heat equation with a bounded reaction term on
[0, 1] with homogeneous Dirichlet boundaries,

    u_t - u_xx = 1/(1 + u^2) + S(x, t),

discretized by second-order central differences on n interior points
(dx = 1/(n+1)). The source S is chosen so that u(x, t) = x(1-x) e^t solves
the PDE; since that profile is quadratic in x, the central difference of its
second derivative is exact and the grid samples solve the semidiscrete
system exactly as well, leaving time integration as the only error source.
Stiffness comes from the Laplacian: the infinity norm of A is 4(n+1)^2,
about 1.6e5 at the default n = 200.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "SemilinearProblem",
    "discrete_l2",
    "make_heat1d",
    "make_linear_decay",
    "error_at",
    "heat_source",
]


@dataclass(frozen=True)
class SemilinearProblem:
    """u' = A u + g(t, u) with optional exact solution on a 1D grid."""

    name: str
    n: int
    A: Optional[np.ndarray]
    apply_A: Callable[[np.ndarray], np.ndarray]
    g: Callable[[float, np.ndarray], np.ndarray]
    u0: np.ndarray
    dx: float
    exact: Optional[Callable[[float], np.ndarray]] = None
    lipschitz_bound: Optional[float] = None

    def f(self, t: float, u: np.ndarray) -> np.ndarray:
        """Full right-hand side A u + g(t, u)."""
        return self.apply_A(u) + self.g(t, u)


def discrete_l2(v: np.ndarray, dx: float) -> float:
    """sqrt(dx * sum v_k^2), the grid analogue of the L2 norm."""
    return math.sqrt(dx * float(np.dot(v, v)))


def _dirichlet_laplacian(n: int) -> np.ndarray:
    dx2 = (n + 1) ** 2  # 1/dx^2
    A = np.zeros((n, n))
    idx = np.arange(n)
    A[idx, idx] = -2.0 * dx2
    A[idx[:-1], idx[:-1] + 1] = dx2
    A[idx[1:], idx[1:] - 1] = dx2
    return A


def heat_source(x, t):
    """Source making x(1-x)e^t solve the reaction-diffusion equation.

    S = u_t - u_xx - 1/(1+u^2) evaluated at the target profile:
    x(1-x)e^t + 2e^t - 1/(1 + x^2 (1-x)^2 e^(2t)).
    """
    prof = x * (1.0 - x) * np.exp(t)
    return prof + 2.0 * np.exp(t) - 1.0 / (1.0 + prof**2)


def make_heat1d(n: int = 200) -> SemilinearProblem:
    """Semilinear heat benchmark on n interior grid points."""
    if n < 8:
        raise ValueError("heat benchmark needs at least 8 interior points")
    A = _dirichlet_laplacian(n)
    A.setflags(write=False)
    x = np.arange(1, n + 1) / (n + 1)
    x.setflags(write=False)

    def g(t, u):
        return 1.0 / (1.0 + u**2) + heat_source(x, t)

    def exact(t):
        return x * (1.0 - x) * math.exp(t)

    u0 = exact(0.0)
    u0.setflags(write=False)
    # |d/du 1/(1+u^2)| = |2u|/(1+u^2)^2 peaks at u = 1/sqrt(3)
    lip = 3.0 * math.sqrt(3.0) / 8.0
    return SemilinearProblem(
        name="heat1d", n=n, A=A, apply_A=lambda v: A @ v, g=g, u0=u0,
        dx=1.0 / (n + 1), exact=exact, lipschitz_bound=lip,
    )


def make_linear_decay(n: int = 128) -> SemilinearProblem:
    """Pure diffusion of the lowest Fourier mode; exact for any step size.

    sin(pi x) is an eigenvector of the discrete Laplacian with eigenvalue
    -4(n+1)^2 sin^2(pi / (2(n+1))), so the semidiscrete solution is known in
    closed form and any exponential scheme must reproduce it to roundoff.
    """
    A = _dirichlet_laplacian(n)
    A.setflags(write=False)
    x = np.arange(1, n + 1) / (n + 1)
    u0 = np.sin(np.pi * x)
    u0.setflags(write=False)
    lam1 = -4.0 * (n + 1) ** 2 * math.sin(math.pi / (2 * (n + 1))) ** 2

    def g(t, u):
        return np.zeros_like(u)

    def exact(t):
        return math.exp(lam1 * t) * u0

    return SemilinearProblem(
        name="lindecay", n=n, A=A, apply_A=lambda v: A @ v, g=g, u0=u0,
        dx=1.0 / (n + 1), exact=exact, lipschitz_bound=0.0,
    )


def error_at(problem: SemilinearProblem, state: np.ndarray, t: float) -> float:
    """Discrete L2 distance from the exact solution at time t."""
    if problem.exact is None:
        raise ValueError(f"problem {problem.name!r} has no exact solution")
    return discrete_l2(np.asarray(state) - problem.exact(t), problem.dx)


PROBLEM_FACTORIES = {
    "heat1d": make_heat1d,
    "lindecay": make_linear_decay,
}


def problem_by_name(name: str, n: int) -> SemilinearProblem:
    try:
        factory = PROBLEM_FACTORIES[name]
    except KeyError:
        raise KeyError(
            f"unknown problem {name!r}; choose from {tuple(PROBLEM_FACTORIES)}"
        ) from None
    return factory(n)
