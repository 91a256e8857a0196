"""Euler-Maruyama integration of dX = sigma(X) dB + b(X) dt on a uniform grid."""

from dataclasses import dataclass, field
import csv
import math

import numpy as np

from .errors import ConfigError, NumericalDomainError
from .rng import TAG_NOISE, derive_seed


def steps_per_unit(dt):
    """n with dt == 1/n, or ConfigError."""
    if not dt > 0:
        raise ConfigError("dt must be positive", "dt")
    n = int(round(1.0 / dt))
    if n < 4 or abs(n * dt - 1.0) > 1e-12:
        raise ConfigError("dt must equal 1/n for an integer n >= 4", "dt")
    return n


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1.0 / 16
    horizon: float = 100.0
    replicate_seed: int = 0
    integrator: str = "euler_maruyama"

    def validate(self):
        n = steps_per_unit(self.dt)
        if self.integrator != "euler_maruyama":
            raise ConfigError("integrator must be 'euler_maruyama'", "integrator")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive", "horizon")
        steps = self.horizon * n
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigError("horizon must be a multiple of dt", "horizon")
        return self

    @property
    def n(self):
        return steps_per_unit(self.dt)

    @property
    def n_steps(self):
        return int(round(self.horizon * self.n))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Path sampled at times i*dt, i = 0..horizon/dt."""

    dt: float
    points: np.ndarray
    x0: np.ndarray = field(repr=False)
    horizon: float
    noise_key: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise ValueError("points must be a 2-D array")
        if len(pts) != int(round(self.horizon / self.dt)) + 1:
            raise ValueError("points length must be horizon/dt + 1")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "x0", pts[0])

    @property
    def d(self):
        return self.points.shape[1]

    @property
    def n(self):
        return steps_per_unit(self.dt)

    @property
    def times(self):
        return np.arange(len(self.points)) * self.dt

    def project(self, l):
        return self.points @ np.asarray(l, dtype=np.float64)

    def at(self, t):
        """Linearly interpolated position at time ``t``."""
        if t < 0 or t > self.horizon + 1e-12:
            raise ValueError(f"time {t} outside [0, {self.horizon}]")
        u = t / self.dt
        i = min(int(math.floor(u)), len(self.points) - 2)
        f = u - i
        return self.points[i] + f * (self.points[i + 1] - self.points[i])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x{j + 1}" for j in range(self.d)])
            for t, p in zip(self.times, self.points):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in p])


def matrix_sqrt(a):
    """Symmetric PSD square root of a symmetric positive definite matrix."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NumericalDomainError("matrix must be square")
    scale = max(1.0, float(np.abs(a).max()))
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * scale):
        raise NumericalDomainError("matrix is not symmetric")
    lam, vec = np.linalg.eigh(0.5 * (a + a.T))
    if lam.min() <= 0:
        raise NumericalDomainError("matrix is not positive definite")
    return (vec * np.sqrt(lam)) @ vec.T


def noise_key(replicate_seed):
    return derive_seed(replicate_seed, TAG_NOISE)


def simulate_path(env, x0, cfg):
    cfg.validate()
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.shape != (env.d,):
        raise ValueError("x0 dimension does not match the environment")
    key = noise_key(cfg.replicate_seed)
    pts = env.kernel.simulate(x0, cfg.n_steps, cfg.dt, key)
    return Trajectory(cfg.dt, pts, x0, cfg.horizon, key)


def polyline_trajectory(knot_times, knots, dt, horizon=None):
    """Trajectory sampling the piecewise-linear path through ``knots``.

    Handy for scripted test paths; knot times should lie on the grid.
    """
    knot_times = np.asarray(knot_times, dtype=np.float64)
    knots = np.asarray(knots, dtype=np.float64)
    if knots.ndim == 1:
        knots = knots[:, None]
    n = steps_per_unit(dt)
    horizon = float(knot_times[-1] if horizon is None else horizon)
    steps = int(round(horizon * n))
    t = np.arange(steps + 1) / n
    pts = np.column_stack([np.interp(t, knot_times, knots[:, j]) for j in range(knots.shape[1])])
    return Trajectory(dt, pts, pts[0], horizon)


def brownian_increments(key, n_steps, d, dt):
    """Gaussian increments with variance dt from the counter stream ``key``."""
    from .backend import kernels_for

    g = kernels_for(d).gaussians(key, n_steps * d)
    return math.sqrt(dt) * g.reshape(n_steps, d)
