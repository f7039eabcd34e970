"""Manufactured elliptic problems on the unit square.

All functions take ``(n, 2)`` point arrays. Sources are closed forms
derived by hand from the exact solutions (no symbolic dependency); a unit
test checks them against finite differences of the flux.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

__all__ = ["ManufacturedProblem", "available_problems", "get_problem"]


@dataclass(frozen=True)
class ManufacturedProblem:
    """Coefficients, data and exact solution of one ADR test problem:
    ``div(-D grad u) + beta . grad u + gamma u = f``, ``u = g`` on the
    boundary."""

    name: str
    diffusion: callable
    advection: callable
    reaction: callable
    source: callable
    exact: callable
    exact_gradient: callable

    @property
    def dirichlet(self):
        return self.exact

    @property
    def is_poisson(self) -> bool:
        return self.name.startswith("poisson")


def _poisson_sine() -> ManufacturedProblem:
    kx, ky = 2.0 * np.pi, 3.0 * np.pi

    def u(p):
        return np.sin(kx * p[:, 0]) * np.sin(ky * p[:, 1])

    def grad_u(p):
        return np.column_stack(
            [
                kx * np.cos(kx * p[:, 0]) * np.sin(ky * p[:, 1]),
                ky * np.sin(kx * p[:, 0]) * np.cos(ky * p[:, 1]),
            ]
        )

    def f(p):
        return (kx**2 + ky**2) * u(p)

    return ManufacturedProblem(
        name="poisson-manufactured",
        diffusion=lambda p: np.broadcast_to(np.eye(2), (len(p), 2, 2)),
        advection=lambda p: np.zeros((len(p), 2)),
        reaction=lambda p: np.zeros(len(p)),
        source=f,
        exact=u,
        exact_gradient=grad_u,
    )


def _poisson_affine() -> ManufacturedProblem:
    coeff = (2.0, 3.0, -1.5)

    def u(p):
        return coeff[0] + coeff[1] * p[:, 0] + coeff[2] * p[:, 1]

    return ManufacturedProblem(
        name="poisson-affine",
        diffusion=lambda p: np.broadcast_to(np.eye(2), (len(p), 2, 2)),
        advection=lambda p: np.zeros((len(p), 2)),
        reaction=lambda p: np.zeros(len(p)),
        source=lambda p: np.zeros(len(p)),
        exact=u,
        exact_gradient=lambda p: np.broadcast_to(
            np.array(coeff[1:]), (len(p), 2)
        ).copy(),
    )


def _adr_variable() -> ManufacturedProblem:
    """Anisotropic diffusion, rotational advection, bilinear reaction.

    Exact solution: a shifted quadratic plus a shifted cubic plus
    ``sin(2 pi x) sin(3 pi y)``; the source below is its hand-computed
    image under the full operator.
    """

    def parts(p):
        x, y = p[:, 0], p[:, 1]
        a = (x - 0.2) + 0.5 * (y - 0.3)
        b = 0.5 * (x - 0.7) + (y - 0.8)
        sx, cx = np.sin(2 * np.pi * x), np.cos(2 * np.pi * x)
        sy, cy = np.sin(3 * np.pi * y), np.cos(3 * np.pi * y)
        return x, y, a, b, sx, cx, sy, cy

    def u(p):
        x, y, a, b, sx, cx, sy, cy = parts(p)
        return 3 * a**2 + 2 * b**3 + sx * sy

    def grad_u(p):
        x, y, a, b, sx, cx, sy, cy = parts(p)
        ux = 6 * a + 3 * b**2 + 2 * np.pi * cx * sy
        uy = 3 * a + 6 * b**2 + 3 * np.pi * sx * cy
        return np.column_stack([ux, uy])

    def diffusion(p):
        x, y = p[:, 0], p[:, 1]
        d = np.empty((len(p), 2, 2))
        d[:, 0, 0] = 1 + y**2
        d[:, 0, 1] = -x * y
        d[:, 1, 0] = -x * y
        d[:, 1, 1] = 1 + x**2
        return d

    def advection(p):
        return np.column_stack([p[:, 0], -p[:, 1]])

    def reaction(p):
        return p[:, 0] * p[:, 1]

    def source(p):
        x, y, a, b, sx, cx, sy, cy = parts(p)
        ux = 6 * a + 3 * b**2 + 2 * np.pi * cx * sy
        uy = 3 * a + 6 * b**2 + 3 * np.pi * sx * cy
        uxx = 6 + 3 * b - 4 * np.pi**2 * sx * sy
        uxy = 3 + 6 * b + 6 * np.pi**2 * cx * cy
        uyy = 1.5 + 12 * b - 9 * np.pi**2 * sx * sy
        diffusion_term = -(
            (1 + y**2) * uxx + (1 + x**2) * uyy - 2 * x * y * uxy - x * ux - y * uy
        )
        return diffusion_term + (x * ux - y * uy) + x * y * u(p)

    return ManufacturedProblem(
        name="adr-paper",
        diffusion=diffusion,
        advection=advection,
        reaction=reaction,
        source=source,
        exact=u,
        exact_gradient=grad_u,
    )


_BUILDERS = {
    "poisson-manufactured": _poisson_sine,
    "poisson-affine": _poisson_affine,
    "adr-paper": _adr_variable,
}


def available_problems():
    return sorted(_BUILDERS)


def get_problem(name: str) -> ManufacturedProblem:
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise ConfigError(
            f"unknown problem {name!r}; choose from {available_problems()}"
        ) from None
