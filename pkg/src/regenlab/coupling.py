"""Bernoulli marks attached to unit time intervals, and regeneration times.

Interval ``[m, m+1]`` carries a mark ``lam[m]``.  In ``forced_bridge`` mode a
successful mark replaces the interval by a guided bridge that stays inside
the ball ``U = B(x + 5R l, 6R)`` and ends uniformly in ``B = B(x + 9R l, R)``
where ``x`` is the position at time m.  Unmarked intervals follow the plain
Euler-Maruyama law with the same noise stream as :func:`simulate_path`, so a
run with ``eps = 0`` reproduces the uncoupled path bit for bit.

Regeneration detection works on integer times only and follows the
V / N-tilde / N / S / D / R hierarchy; see :func:`find_regenerations`.
"""

from dataclasses import dataclass, field, asdict
import math

import numpy as np

from .errors import CouplingError
from .path_events import Level
from .rng import TAG_BRIDGE, TAG_LAMBDA, TAG_THIN, bernoulli_np, derive_seed
from .sde import Trajectory, noise_key

COUPLING_MODES = ("forced_bridge", "thinning")
MAX_BRIDGE_TRIES = 100_000

INFINITE = "infinite_within_horizon"
FINITE = "finite"
CENSORED = "censored"


@dataclass(frozen=True, eq=False)
class CoupledTrajectory:
    traj: Trajectory
    lam: np.ndarray
    forced: np.ndarray
    eps: float
    mode: str
    R: float
    l: np.ndarray
    tries: np.ndarray | None = None

    def __post_init__(self):
        if len(self.lam) != len(self.forced):
            raise ValueError("lam and forced must have equal length")

    @classmethod
    def scripted(cls, traj, lam, R=1.0, l=None, eps=0.0):
        """Wrap a given path with explicit marks (list of 0/1 or success indices)."""
        size = int(math.floor(traj.horizon)) + 1
        lam = np.asarray(lam)
        if lam.dtype == bool or (lam.size == size and set(np.unique(lam)) <= {0, 1}):
            marks = lam.astype(np.uint8)
        else:
            marks = np.zeros(size, dtype=np.uint8)
            marks[lam.astype(int)] = 1
        if l is None:
            l = np.eye(traj.d)[0]
        return cls(traj, marks, np.zeros(size, dtype=bool), eps, "scripted", R,
                   np.asarray(l, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class BridgeSample:
    path: np.ndarray
    endpoint: np.ndarray
    tries: int


def interval_in_bridge_geometry(segment, R, l):
    """Confinement to U and endpoint in B, for a unit-interval segment."""
    x = segment[0]
    l = np.asarray(l, dtype=np.float64)
    inside = np.linalg.norm(segment - (x + 5 * R * l), axis=1) < 6 * R
    return bool(inside.all() and np.linalg.norm(segment[-1] - (x + 9 * R * l)) < R)


def sample_forced_bridge(env, x, seed, R=None, l=None, dt=1.0 / 16,
                         max_tries=MAX_BRIDGE_TRIES, interval=0):
    """Unit-time path from x, confined to U, ending uniformly on B.

    The endpoint is drawn first; proposals are discretized diffusion bridges
    toward it (the final step lands exactly on the endpoint) and are accepted
    when every sample stays in U.
    """
    R = env.spec.R if R is None else R
    l = np.eye(env.d)[0] if l is None else np.asarray(l, dtype=np.float64)
    n = int(round(1.0 / dt))
    key = derive_seed(seed, TAG_BRIDGE)
    seg, tries = env.kernel.bridge(np.asarray(x, dtype=np.float64), interval, n, dt,
                                   key, R, l, max_tries)
    if tries == 0:
        raise CouplingError(interval, max_tries)
    return BridgeSample(seg, seg[-1].copy(), int(tries))


def attach_bernoulli(env, x0, cfg, eps, mode="forced_bridge", R=None, l=None, q=None,
                     max_tries=MAX_BRIDGE_TRIES):
    """Coupled path: marks lam_m ~ Bernoulli(eps) plus the path they act on."""
    if mode not in COUPLING_MODES:
        raise ValueError(f"coupling mode must be one of {COUPLING_MODES}")
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    cfg.validate()
    R = env.spec.R if R is None else R
    l = np.eye(env.d)[0] if l is None else np.asarray(l, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    n = cfg.n
    size = int(math.floor(cfg.horizon)) + 1
    nkey = noise_key(cfg.replicate_seed)

    if mode == "forced_bridge":
        lam = bernoulli_np(derive_seed(cfg.replicate_seed, TAG_LAMBDA), size, eps)
        bkey = derive_seed(cfg.replicate_seed, TAG_BRIDGE)
        pts, forced, tries, failed = env.kernel.simulate_coupled(
            x0, cfg.n_steps, n, cfg.dt, nkey, lam, bkey, R, l, max_tries)
        if failed >= 0:
            raise CouplingError(int(failed), max_tries)
        flags = np.zeros(size, dtype=bool)
        flags[:len(forced)] = forced.astype(bool)
        tr = np.zeros(size, dtype=np.int64)
        tr[:len(tries)] = tries
        traj = Trajectory(cfg.dt, pts, x0, cfg.horizon, nkey)
        return CoupledTrajectory(traj, lam, flags, eps, mode, R, l, tr)

    # thinning: plain path, marks only where the interval happens to fit
    q = eps if q is None else q
    pts = env.kernel.simulate(x0, cfg.n_steps, cfg.dt, nkey)
    coins = bernoulli_np(derive_seed(cfg.replicate_seed, TAG_THIN), size, q)
    lam = np.zeros(size, dtype=np.uint8)
    for m in np.flatnonzero(coins):
        if (m + 1) * n < len(pts) and interval_in_bridge_geometry(pts[m * n:(m + 1) * n + 1], R, l):
            lam[m] = 1
    traj = Trajectory(cfg.dt, pts, x0, cfg.horizon, nkey)
    return CoupledTrajectory(traj, lam, np.zeros(size, dtype=bool), eps, mode, R, l)


# -- regeneration hierarchy ---------------------------------------------------

@dataclass(frozen=True)
class Candidate:
    """One V_k candidate considered while searching for N-tilde."""

    V: float
    ceil: int
    oscillation: float | None
    accepted: bool
    reason: str


@dataclass
class HierarchyTrace:
    start: int
    a: float
    candidates: list = field(default_factory=list)
    n_tilde: list = field(default_factory=list)
    N1: int | None = None

    @property
    def V(self):
        return [c.V for c in self.candidates]


@dataclass(frozen=True)
class DStatus:
    kind: str
    value: int | None = None

    @property
    def infinite(self):
        return self.kind == INFINITE

    def to_dict(self):
        return {"kind": self.kind, "value": self.value}


def _n_tilde_1(lev, t0, a, R, last, trace):
    """First ceil(V_k) started at integer time t0 with oscillation < R/2."""
    running = lev.value(t0)
    upto = t0
    V = lev.first_ge(running + a, t0)
    while V is not None:
        c = int(math.ceil(V))
        if c > last:
            if trace is not None:
                trace.candidates.append(Candidate(V, c, None, False, "beyond horizon"))
            return None
        yV = lev.value(V)
        if c > V:
            osc = max(lev.max_between(V, c) - yV, yV - lev.min_between(V, c))
        else:
            osc = 0.0
        ok = osc < R / 2
        if trace is not None:
            trace.candidates.append(Candidate(V, c, osc, ok, "accepted" if ok else "oscillation >= R/2"))
        if ok:
            return c
        running = max(running, lev.max_between(upto, c))
        upto = c
        V = lev.first_ge(running + R, c)
    if trace is not None:
        trace.candidates.append(Candidate(math.inf, -1, None, False, "level not reached"))
    return None


def _n1(lev, lam, t0, a, R, last, trace=None):
    nt = _n_tilde_1(lev, t0, a, R, last, trace)
    while nt is not None:
        if trace is not None:
            trace.n_tilde.append(nt)
        if nt < len(lam) and lam[nt]:
            if trace is not None:
                trace.N1 = nt
            return nt
        nt = _n_tilde_1(lev, nt, 3 * R, R, last, trace)
    return None


def _last_time(traj):
    return int(math.floor(traj.horizon + 1e-9))


def compute_hierarchy(coupled, l, R, a, start=0):
    """V_k / N-tilde_k candidates and N_1(a) for the path restarted at ``start``."""
    lev = Level.of(coupled.traj, l)
    trace = HierarchyTrace(int(start), float(a))
    _n1(lev, coupled.lam, int(start), a, R, _last_time(coupled.traj), trace)
    return trace


def _d_status(lev, S, R, guard):
    ys = lev.value(S)
    t = lev.first_le(ys - R, S)
    if t is not None:
        return DStatus(FINITE, int(math.ceil(t - S)))
    if lev.y[-1] >= ys + guard:
        return DStatus(INFINITE)
    return DStatus(CENSORED)


def compute_D(coupled, from_time, l, R, guard=None):
    """Ceiled time after ``from_time`` until the first relative drop of -R."""
    guard = 10 * R if guard is None else guard
    return _d_status(Level.of(coupled.traj, l), int(from_time), R, guard)


@dataclass(frozen=True)
class Increment:
    k: int
    dtau: int
    dx: tuple
    dl: float
    seg_min: float
    seg_max: float


@dataclass
class RegenerationRecord:
    taus: list
    positions: list
    increments: list
    z0: Increment | None
    last_block_censored: bool
    d_status: DStatus
    eps: float
    mode: str
    searches: list = field(default_factory=list)

    def to_dict(self):
        return {
            "tau": list(self.taus),
            "positions": [list(p) for p in self.positions],
            "z0": None if self.z0 is None else asdict(self.z0),
            "increments": [asdict(z) for z in self.increments],
            "last_block_censored": self.last_block_censored,
            "D_status": self.d_status.to_dict(),
            "eps": self.eps,
            "mode": self.mode,
            "searches": self.searches,
        }

    @classmethod
    def from_dict(cls, d):
        def inc(z):
            return Increment(z["k"], z["dtau"], tuple(z["dx"]), z["dl"], z["seg_min"], z["seg_max"])

        return cls(list(d["tau"]), [tuple(p) for p in d["positions"]],
                   [inc(z) for z in d["increments"]],
                   None if d["z0"] is None else inc(d["z0"]),
                   d["last_block_censored"], DStatus(**d["D_status"]),
                   d["eps"], d["mode"], d.get("searches", []))


def _increment(traj, lev, k, t_a, t_b):
    n = traj.n
    xa, xb = traj.points[t_a * n], traj.points[t_b * n]
    seg = lev.y[t_a * n:(t_b - 1) * n + 1] - lev.y[t_a * n]
    return Increment(k, t_b - t_a, tuple(float(v) for v in xb - xa),
                     float(lev.y[t_b * n] - lev.y[t_a * n]),
                     float(seg.min()), float(seg.max()))


def find_regenerations(coupled, l=None, R=None, guard=None):
    """Regeneration times tau_1 < tau_2 < ... and the blocks between them.

    A candidate S_k becomes a regeneration time when the path never drops
    R below l.X_{S_k} before the horizon and ends at least ``guard`` above
    it.  A candidate with no drop but a short tail stops the search and
    marks the trailing block censored.
    """
    l = coupled.l if l is None else np.asarray(l, dtype=np.float64)
    R = coupled.R if R is None else R
    guard = 10 * R if guard is None else guard
    traj = coupled.traj
    lev = Level.of(traj, l)
    last = _last_time(traj)
    lam = coupled.lam

    taus, searches = [], []
    censored = False
    t0 = 0
    while True:
        s = {"origin": t0, "N": [], "S": [], "R": [], "a": [], "outcome": "no candidate"}
        searches.append(s)
        N = _n1(lev, lam, t0, 3 * R, R, last)
        tau = None
        while N is not None:
            S = N + 1
            s["N"].append(N)
            s["S"].append(S)
            if S > last:
                s["outcome"] = "truncated"
                break
            st = _d_status(lev, S, R, guard)
            if st.kind == INFINITE:
                tau = S
                s["outcome"] = "regeneration"
                break
            if st.kind == CENSORED:
                s["outcome"] = "censored"
                break
            Rk = S + st.value
            s["R"].append(Rk)
            if Rk > last:
                s["outcome"] = "truncated"
                break
            a_k = lev.max_between(t0, Rk) - lev.value(Rk) + R
            s["a"].append(a_k)
            N = _n1(lev, lam, Rk, a_k, R, last)
        if tau is None:
            censored = s["outcome"] == "censored"
            break
        taus.append(tau)
        t0 = tau

    n = traj.n
    positions = [tuple(float(v) for v in traj.points[t * n]) for t in taus]
    z0 = _increment(traj, lev, 0, 0, taus[0]) if taus else None
    incs = [_increment(traj, lev, k, taus[k - 1], taus[k]) for k in range(1, len(taus))]
    return RegenerationRecord(taus, positions, incs, z0, censored,
                              _d_status(lev, 0, R, guard), coupled.eps, coupled.mode, searches)
