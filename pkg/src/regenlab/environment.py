"""Stationary random coefficient fields with finite-range dependence.

The field is a mollified i.i.d. lattice: every lattice cell carries a vector
of uniform[-1, 1] variables derived from ``(master_seed, cell index)``; the
value at ``x`` is the kernel-weighted average of the cells within radius
``rho`` (partition of unity).  Values at points further apart than ``2 rho``
share no cells, hence are independent.  A seed-dependent uniform shift of the
lattice makes the law exactly translation invariant.

Channels, in order: ``d`` drift channels ``G``, then the upper triangle of a
symmetric matrix ``S`` row by row.  ``b = drift_mean + drift_amplitude * G``
and ``a = I + diffusion_amplitude * S``.
"""

from dataclasses import dataclass, field, replace
from functools import lru_cache
import itertools
import math

import numpy as np

from . import backend
from .errors import ConfigError
from .rng import TAG_ENV, TAG_SHIFT, derive_seed, uniform

MODES = ("constant", "random_field")


@lru_cache(maxsize=32)
def channel_gradient_bound(d, ratio):
    """Upper bound on |grad F_c| * s for one normalized channel.

    ``ratio`` is kernel_radius / lattice_spacing.  With
    F = sum(xi_k w_k) / sum(w_k) and |xi_k - F| <= 2 we get
    |grad F| <= 2 sum|grad w_k| / sum w_k; the right-hand side is
    maximized over a sample of the unit cell and inflated by 10%.
    """
    r = int(math.ceil(ratio)) + 1
    offsets = np.array(list(itertools.product(range(-r, r + 1), repeat=d)), dtype=float)
    m = 11 if d <= 3 else 6
    axis = (np.arange(m) + 0.5) / m
    pts = np.array(list(itertools.product(axis, repeat=d)))
    rel = pts[:, None, :] - offsets[None, :, :]
    r2 = (rel ** 2).sum(-1) / ratio ** 2
    inside = r2 < 1.0
    t = np.where(inside, 1.0 - r2, 0.0)
    w = t ** 3
    gw = 6.0 * np.sqrt(r2) * t ** 2 / ratio
    bound = 2.0 * gw.sum(1) / w.sum(1)
    return 1.1 * float(bound.max())


@dataclass(frozen=True)
class EnvironmentSpec:
    dimension: int = 2
    dependence_range: float = 1.0
    ellipticity: float = 2.0
    coefficient_bound: float = 10.0
    lattice_spacing: float | None = None
    kernel_radius: float | None = None
    drift_mean: tuple = (0.0, 0.0)
    drift_amplitude: float = 0.0
    diffusion_amplitude: float = 0.0
    master_seed: int = 0
    mode: str = "random_field"

    def __post_init__(self):
        object.__setattr__(self, "drift_mean", tuple(float(v) for v in self.drift_mean))
        if self.lattice_spacing is None:
            object.__setattr__(self, "lattice_spacing", self.dependence_range / 4.0)
        if self.kernel_radius is None:
            object.__setattr__(self, "kernel_radius", self.dependence_range / 2.0)

    @property
    def R(self):
        return self.dependence_range

    @property
    def effective_amplitudes(self):
        if self.mode == "constant":
            return 0.0, 0.0
        return self.drift_amplitude, self.diffusion_amplitude

    def validate(self):
        """Raise ConfigError naming the first violated constraint."""
        d = self.dimension
        if not isinstance(d, (int, np.integer)) or d < 1:
            raise ConfigError("dimension must be an integer >= 1", "dimension")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}", "mode")
        if not self.dependence_range > 0:
            raise ConfigError("dependence_range must be > 0", "dependence_range")
        if not self.ellipticity > 1:
            raise ConfigError("ellipticity must be > 1", "ellipticity")
        if not self.coefficient_bound > 1:
            raise ConfigError("coefficient_bound must be > 1", "coefficient_bound")
        if len(self.drift_mean) != d:
            raise ConfigError("drift_mean length must equal dimension", "drift_mean")
        if self.drift_amplitude < 0:
            raise ConfigError("drift_amplitude must be >= 0", "drift_amplitude")
        if self.diffusion_amplitude < 0:
            raise ConfigError("diffusion_amplitude must be >= 0", "diffusion_amplitude")
        s, rho = self.lattice_spacing, self.kernel_radius
        if not (s > 0 and rho > 0):
            raise ConfigError("lattice_spacing and kernel_radius must be > 0", "lattice_spacing")
        if 2 * rho > self.dependence_range * (1 + 1e-12):
            raise ConfigError("finite range: 2*kernel_radius <= dependence_range violated",
                              "kernel_radius")
        if self.mode == "random_field" and not s * math.sqrt(d) / 2 < rho:
            raise ConfigError("kernel does not cover the lattice: need spacing*sqrt(d)/2 < radius",
                              "lattice_spacing")

        amp, delta = self.effective_amplitudes
        if delta * d > 1.0 - 1.0 / self.ellipticity + 1e-12:
            raise ConfigError("ellipticity: diffusion_amplitude*d <= 1 - 1/ellipticity violated",
                              "diffusion_amplitude")
        m = math.hypot(*self.drift_mean) if d > 1 else abs(self.drift_mean[0])
        bound = max(m + amp + d + delta * d,
                    m + amp * math.sqrt(d) + math.sqrt(d) + delta * d)
        if bound > self.coefficient_bound:
            raise ConfigError(
                f"bound: |drift_mean| + amplitudes + d = {bound:.4g} exceeds coefficient_bound",
                "coefficient_bound")
        if self.mode == "random_field" and (amp > 0 or delta > 0):
            lip = (amp * math.sqrt(d) + delta * d) * channel_gradient_bound(d, rho / s) / s
            if lip > self.coefficient_bound:
                raise ConfigError(
                    f"Lipschitz: field gradient bound {lip:.4g} exceeds coefficient_bound",
                    "coefficient_bound")
        return self


@dataclass(frozen=True)
class Environment:
    spec: EnvironmentSpec
    origin_offset: tuple
    kernel: object = field(repr=False, compare=False)

    @property
    def d(self):
        return self.spec.dimension

    def coefficients(self, x):
        return self.kernel.eval(np.asarray(x, dtype=np.float64))


def _build_kernel(spec, offset, prefer):
    d = spec.dimension
    key = derive_seed(spec.master_seed, TAG_ENV)
    skey = derive_seed(spec.master_seed, TAG_SHIFT)
    shift = [spec.lattice_spacing * uniform(skey, j) for j in range(d)]
    amp, delta = spec.effective_amplitudes
    mod = backend.kernels_for(d, prefer)
    return mod.Field(d, spec.mode == "constant", list(spec.drift_mean), amp, delta,
                     spec.lattice_spacing, spec.kernel_radius, key, shift, list(offset))


def make_environment(spec, backend_name=None):
    """Validated environment realization for ``spec.master_seed``.

    ``backend_name`` ("compiled" or "python") pins the kernel implementation.
    """
    spec.validate()
    offset = (0.0,) * spec.dimension
    return Environment(spec, offset, _build_kernel(spec, offset, backend_name))


def eval_coefficients(env, x):
    """(a, b) at ``x``: diffusion matrix and drift vector."""
    return env.kernel.eval(np.asarray(x, dtype=np.float64))


def shift_environment(env, y):
    """Environment translated so that evaluation at x reads the original at x + y."""
    y = np.asarray(y, dtype=np.float64)
    offset = tuple(float(o + v) for o, v in zip(env.origin_offset, y))
    prefer = "python" if env.kernel.__class__.__module__.endswith("_pykernels") else None
    return Environment(env.spec, offset, _build_kernel(env.spec, offset, prefer))


def with_seed(spec, seed):
    return replace(spec, master_seed=int(seed))
