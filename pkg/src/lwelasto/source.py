"""Ball-localized pulse forcing.

The force is ``s(t) * g0(x) * 1_B(x) * (1, 1, 1)`` with the Ricker-type time
factor ``s(t) = (1 - a^2) exp(-a^2)``, ``a = pi * g_c * (t - t0)``, and the
indicator of the open ball ``B(x_c, r0)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_legendre

from .assembly import assemble_ball_load, assemble_load


def sine_bump(points):
    """Default spatial profile [sin(pi x1) sin(pi x2) sin(pi x3)]^2."""
    p = np.atleast_2d(points)
    return np.prod(np.sin(np.pi * p), axis=1) ** 2


@dataclass(frozen=True)
class SourceConfig:
    g_c: float
    x_c: tuple
    r_0: float
    t_0: float = 0.0
    profile: object = field(default=sine_bump, compare=False)
    unit_note: str = ""

    def __post_init__(self):
        if not self.r_0 > 0:
            raise ValueError("focus radius r_0 must be positive")
        object.__setattr__(self, "x_c", tuple(float(v) for v in self.x_c))

    def inside(self, points) -> np.ndarray:
        p = np.atleast_2d(points)
        return np.linalg.norm(p - np.array(self.x_c), axis=1) < self.r_0

    def fits_in(self, domain) -> bool:
        xc = np.array(self.x_c)
        return bool(np.all(xc - self.r_0 >= np.array(domain.lo)) and np.all(xc + self.r_0 <= np.array(domain.hi)))


def time_factor(cfg: SourceConfig, t):
    a2 = (np.pi * cfg.g_c * (np.asarray(t, dtype=float) - cfg.t_0)) ** 2
    return (1.0 - a2) * np.exp(-a2)


def eval_source(cfg: SourceConfig, x, t):
    """Force vector(s) at point(s) ``x`` and time ``t``."""
    single = np.ndim(x) == 1
    p = np.atleast_2d(np.asarray(x, dtype=float))
    mag = time_factor(cfg, t) * cfg.profile(p) * cfg.inside(p)
    out = np.repeat(mag[:, None], 3, axis=1)
    return out[0] if single else out


_GL3 = roots_legendre(3)


def integrate_source_in_time(cfg: SourceConfig, t_a: float, t_b: float) -> float:
    """Three-point Gauss-Legendre integral of the time factor over [t_a, t_b]."""
    if not t_b > t_a:
        raise ValueError("need t_a < t_b")
    x, w = _GL3
    mid, half = 0.5 * (t_a + t_b), 0.5 * (t_b - t_a)
    return float(half * np.sum(w * time_factor(cfg, mid + half * x)))


def assemble_source_load(space, cfg: SourceConfig, method="ball", resolution=12):
    """Spatial load ``int g0 1_B phi_i (1, 1, 1)`` for a unit time factor.

    ``method="ball"`` integrates over the ball with its own product rule;
    ``method="pointwise"`` samples the indicator at the volume quadrature
    points of every tet, which misses balls smaller than the quadrature
    spacing.
    """
    if method == "ball":
        return assemble_ball_load(space, cfg.profile, cfg.x_c, cfg.r_0, resolution=resolution)
    if method == "pointwise":
        def g(p):
            mag = cfg.profile(p) * cfg.inside(p)
            return np.repeat(mag[:, None], 3, axis=1)
        return assemble_load(space, g)
    raise ValueError(f"unknown source quadrature {method!r}")
