"""Stopping times and slab-visit statistics on sampled paths.

Paths are treated as the polyline through their samples; every crossing time
is located by linear interpolation inside the step where it happens.
Unreached times are ``None`` except ``OscillationStats.h``, which uses
``math.inf`` for "never".
"""

from dataclasses import dataclass
import math

import numpy as np

MODES = ("abs_ge", "abs_le", "rel_ge", "rel_le")


def _traj(obj):
    return getattr(obj, "traj", obj)


def _unit(l):
    l = np.asarray(l, dtype=np.float64)
    nrm = float(np.linalg.norm(l))
    if abs(nrm - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    return l


class Level:
    """Projected path l.X_t with crossing searches starting at arbitrary times."""

    def __init__(self, y, dt):
        self.y = np.asarray(y, dtype=np.float64)
        self.dt = dt
        self.n = int(round(1.0 / dt))
        self.last = len(self.y) - 1
        self.horizon = self.last / self.n

    @classmethod
    def of(cls, traj, l):
        traj = _traj(traj)
        return cls(traj.project(l), traj.dt)

    def value(self, t):
        u = t * self.n
        i = min(int(math.floor(u)), self.last - 1) if self.last > 0 else 0
        if self.last == 0:
            return float(self.y[0])
        f = u - i
        if f == 0.0:
            return float(self.y[i])
        return float(self.y[i] + f * (self.y[i + 1] - self.y[i]))

    def index_after(self, t):
        """First grid index with time strictly greater than t."""
        return int(math.floor(t * self.n)) + 1

    def _scan(self, start, pred, chunk=256):
        i = start
        while i <= self.last:
            e = min(self.last + 1, i + chunk)
            hit = np.flatnonzero(pred(i, e))
            if hit.size:
                return i + int(hit[0])
            i = e
            chunk *= 4
        return None

    def _interp(self, t0, y0, j, u):
        """Time in the step ending at grid index j where the level equals u."""
        j0 = self.index_after(t0)
        if j == j0:
            tp, yp = t0, y0
        else:
            tp, yp = (j - 1) / self.n, float(self.y[j - 1])
        yj = float(self.y[j])
        frac = 1.0 if yj == yp else (u - yp) / (yj - yp)
        if j == j0 and tp != (j - 1) / self.n:
            return tp + frac * (j / self.n - tp)
        return ((j - 1) + frac) / self.n

    def first_ge(self, u, t0=0.0):
        """inf{t >= t0 : y(t) >= u}."""
        y0 = self.value(t0)
        if y0 >= u:
            return t0
        y = self.y
        j = self._scan(self.index_after(t0), lambda a, b: y[a:b] >= u)
        return None if j is None else self._interp(t0, y0, j, u)

    def first_le(self, u, t0=0.0):
        """inf{t >= t0 : y(t) <= u}."""
        y0 = self.value(t0)
        if y0 <= u:
            return t0
        y = self.y
        j = self._scan(self.index_after(t0), lambda a, b: y[a:b] <= u)
        return None if j is None else self._interp(t0, y0, j, u)

    def enter_band(self, lo, hi, t0=0.0):
        """First entrance time into the closed band lo <= y <= hi."""
        y0 = self.value(t0)
        if lo <= y0 <= hi:
            return t0
        y = self.y
        j0 = self.index_after(t0)

        def pred(a, b):
            prev = y[a - 1:b - 1].copy()
            if a == j0:
                prev[0] = y0
            cur = y[a:b]
            return (np.minimum(prev, cur) <= hi) & (np.maximum(prev, cur) >= lo)

        j = self._scan(j0, pred)
        if j is None:
            return None
        yp = y0 if j == j0 else float(y[j - 1])
        return self._interp(t0, y0, j, lo if yp < lo else hi)

    def exit_open(self, a, b, t0=0.0):
        """First time >= t0 outside the open band a < y < b."""
        y0 = self.value(t0)
        if not a < y0 < b:
            return t0
        y = self.y
        j = self._scan(self.index_after(t0), lambda s, e: (y[s:e] <= a) | (y[s:e] >= b))
        if j is None:
            return None
        return self._interp(t0, y0, j, b if y[j] >= b else a)

    def exit_closed(self, a, b, t0=0.0):
        y0 = self.value(t0)
        if not a <= y0 <= b:
            return t0
        y = self.y
        j = self._scan(self.index_after(t0), lambda s, e: (y[s:e] < a) | (y[s:e] > b))
        if j is None:
            return None
        return self._interp(t0, y0, j, b if y[j] > b else a)

    def max_between(self, t0, t1):
        """max of y over [t0, t1] (interpolated endpoints included)."""
        i0, i1 = self.index_after(t0), int(math.floor(t1 * self.n))
        best = max(self.value(t0), self.value(t1))
        if i1 >= i0:
            best = max(best, float(self.y[i0:i1 + 1].max()))
        return best

    def min_between(self, t0, t1):
        i0, i1 = self.index_after(t0), int(math.floor(t1 * self.n))
        best = min(self.value(t0), self.value(t1))
        if i1 >= i0:
            best = min(best, float(self.y[i0:i1 + 1].min()))
        return best


def hitting_time(traj, l, u, mode="abs_ge"):
    """First time the projection crosses ``u``; None if not by the horizon."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    lev = Level.of(traj, _unit(l))
    if mode.startswith("rel"):
        u = u + float(lev.y[0])
    return lev.first_ge(u) if mode.endswith("ge") else lev.first_le(u)


@dataclass(frozen=True)
class SlabSpec:
    l: tuple
    a: float
    b: float
    closed: bool = False

    def __post_init__(self):
        _unit(self.l)
        if not self.a < self.b:
            raise ValueError("slab needs a < b")


def slab_exit_time(traj, slab):
    lev = Level.of(traj, slab.l)
    if slab.closed:
        return lev.exit_closed(slab.a, slab.b)
    return lev.exit_open(slab.a, slab.b)


def running_max(traj, l, t):
    """sup of l.X_s over s in [0, t]."""
    traj = _traj(traj)
    if not 0 <= t <= traj.horizon + 1e-12:
        raise ValueError(f"t={t} outside [0, {traj.horizon}]")
    lev = Level.of(traj, _unit(l))
    return lev.max_between(0.0, t)


@dataclass(frozen=True)
class OscillationStats:
    m: int
    alpha: int
    N: int
    k: int
    h: float  # math.inf when level (m+alpha)L is never reached
    visits: tuple = ()  # (R_k, S_k) pairs examined


def _check_levels(L, alpha):
    if not L > 0:
        raise ValueError("L must be positive")
    if int(alpha) != alpha or alpha < 2:
        raise ValueError("alpha must be an integer >= 2")


def oscillation_stats(traj, l, L, m, alpha):
    """Long-visit statistics of slab m before level (m + alpha) L.

    Visits start on entering the closed inner band [mL + L/3, mL + 2L/3] and
    end on leaving the open slab (mL, (m+1)L); a visit lasting at least one
    time unit and ending before level (m + alpha) L counts.
    """
    _check_levels(L, alpha)
    lev = Level.of(traj, _unit(l))
    Lp = L / 3.0
    base = m * L
    t_start = lev.first_ge(base)
    t_far = lev.first_ge((m + alpha) * L)
    visits = []
    count, k_last = 0, 0
    s_last = t_start
    if t_far is not None:
        t = 0.0
        k = 0
        while True:
            r = lev.enter_band(base + Lp, base + 2 * Lp, t)
            if r is None or r >= t_far:
                break
            s = lev.exit_open(base, base + L, r)
            if s is None:
                break
            k += 1
            visits.append((r, s))
            if s >= t_far:
                break
            if r + 1.0 <= s:
                count += 1
                k_last = k
                s_last = s
            t = s
    if t_far is None:
        h = math.inf
    else:
        h = s_last - t_start
    return OscillationStats(int(m), int(alpha), count, k_last, h, tuple(visits))


def oscillation_fraction(trajs, l, L, h, alpha, M):
    """Fraction of slabs m = 0..M whose h_alpha is at most ``h``.

    With several paths the per-path fractions are averaged.
    """
    if not isinstance(trajs, (list, tuple)):
        trajs = [trajs]
    fracs = []
    for tr in trajs:
        hits = sum(1 for m in range(M + 1) if oscillation_stats(tr, l, L, m, alpha).h <= h)
        fracs.append(hits / (M + 1))
    return float(np.mean(fracs))


def event_Cm(path, m, L, Lp, h0, K, alpha, l=None):
    """Slab-m event: positioned right of the inner band h0 after reaching mL,
    then reaching (m + alpha) L without dropping back to mL + 2L'."""
    traj = _traj(path)
    if l is None:
        l = np.eye(traj.d)[0]
    lev = Level.of(traj, _unit(l))
    base = m * L
    t_m = lev.first_ge(base)
    if t_m is None:
        return False
    t_star = t_m + h0
    if t_star > lev.horizon:
        return False
    pos = lev.value(t_star)
    if not base + 2 * Lp < pos < (m + K) * L:
        return False
    t_far = lev.first_ge((m + alpha) * L)
    if t_far is None or not t_star < t_far:
        return False
    drop = lev.first_le(base + 2 * Lp, t_star)
    return drop is None or drop > t_far
