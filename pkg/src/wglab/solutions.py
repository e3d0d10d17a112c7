"""Manufactured solutions of the Poisson Dirichlet problem on (0,1)^2.

Each entry supplies u, its gradient, and f = -laplacian(u) analytically;
the Dirichlet datum is the trace of u.  ``sinsin`` vanishes on the
boundary, ``expmix`` exercises the nonhomogeneous boundary path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ManufacturedSolution:
    name: str
    u: callable
    grad: callable
    f: callable

    def g(self, x, y):
        """Dirichlet datum: the boundary trace of u."""
        return self.u(x, y)


def _sinsin_u(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y)


def _sinsin_grad(x, y):
    return np.stack([
        np.pi * np.cos(np.pi * x) * np.sin(np.pi * y),
        np.pi * np.sin(np.pi * x) * np.cos(np.pi * y),
    ], axis=-1)


def _sinsin_f(x, y):
    return 2 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(np.pi * y)


def _expmix_u(x, y):
    return np.exp(x) * (x + np.cos(y))


def _expmix_grad(x, y):
    return np.stack([
        np.exp(x) * (x + 1 + np.cos(y)),
        -np.exp(x) * np.sin(y),
    ], axis=-1)


def _expmix_f(x, y):
    return -np.exp(x) * (x + 2)


SOLUTIONS = {
    "sinsin": ManufacturedSolution("sinsin", _sinsin_u, _sinsin_grad, _sinsin_f),
    "expmix": ManufacturedSolution("expmix", _expmix_u, _expmix_grad, _expmix_f),
}


def get_solution(name: str) -> ManufacturedSolution:
    try:
        return SOLUTIONS[name]
    except KeyError:
        raise ValueError(f"unknown solution {name!r}; choose from {sorted(SOLUTIONS)}") from None
