"""Close encounters of two diffusions in a common environment.

Two paths "meet" when some point of one and some point of the other, both
with projection in the open window (lo, hi), are closer than 2R; that is,
both visit a common open ball of radius R centred at the midpoint.
"""

from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor
import csv

import numpy as np

from .environment import make_environment, with_seed
from .renewal import wilson_interval
from .rng import TAG_ENV, TAG_PAIR, derive_seed
from .sde import SimConfig, simulate_path


def segment_distances(p0, p1, q0, q1):
    """Minimum distances between segment pairs [p0,p1] and [q0,q1] (row-wise)."""
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    f = np.einsum("ij,ij->i", d2, r)
    c = np.einsum("ij,ij->i", d1, r)
    b = np.einsum("ij,ij->i", d1, d2)
    tiny = 1e-300
    pa_ok, qa_ok = a > tiny, e > tiny
    safe_a = np.where(pa_ok, a, 1.0)
    safe_e = np.where(qa_ok, e, 1.0)
    denom = a * e - b * b
    general = denom > 1e-12 * a * e
    s = np.where(general, np.clip((b * f - c * e) / np.where(general, denom, 1.0), 0, 1), 0.0)
    s = np.where(pa_ok, s, 0.0)
    t = np.where(qa_ok, (b * s + f) / safe_e, 0.0)
    s_lo = np.where(pa_ok, np.clip(-c / safe_a, 0, 1), 0.0)
    s_hi = np.where(pa_ok, np.clip((b - c) / safe_a, 0, 1), 0.0)
    s = np.where(t < 0, s_lo, np.where(t > 1, s_hi, s))
    t = np.clip(t, 0, 1)
    # degenerate second segment: project onto the first
    s = np.where(qa_ok, s, s_lo)
    diff = (p0 + s[:, None] * d1) - (q0 + t[:, None] * d2)
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def clip_segments(points, l, lo, hi):
    """Polyline pieces whose projection lies in [lo, hi], as (start, end) arrays."""
    y = points @ l
    a, b = points[:-1], points[1:]
    ya, yb = y[:-1], y[1:]
    keep = (np.maximum(ya, yb) > lo) & (np.minimum(ya, yb) < hi)
    a, b, ya, yb = a[keep], b[keep], ya[keep], yb[keep]
    dy = yb - ya
    with np.errstate(divide="ignore", invalid="ignore"):
        t_lo = np.where(dy != 0, (lo - ya) / dy, -np.inf)
        t_hi = np.where(dy != 0, (hi - ya) / dy, np.inf)
    t0 = np.clip(np.maximum(0.0, np.minimum(t_lo, t_hi)), 0, 1)
    t1 = np.clip(np.minimum(1.0, np.maximum(t_lo, t_hi)), 0, 1)
    seg = b - a
    return a + t0[:, None] * seg, a + t1[:, None] * seg


def _cell_keys(mid, cell):
    return np.floor(mid / cell).astype(np.int64)


def _candidate_pairs(pa, pb, qa, qb, cell):
    """Index pairs whose midpoints fall in the same or adjacent hash cells."""
    d = pa.shape[1]
    ka = _cell_keys(0.5 * (pa + pb), cell)
    kb = _cell_keys(0.5 * (qa + qb), cell)
    lo = np.minimum(ka.min(0), kb.min(0)) - 1
    span = np.maximum(ka.max(0), kb.max(0)) - lo + 2
    weights = np.cumprod(np.concatenate(([1], span[:-1])))
    ha = (ka - lo) @ weights
    order = np.argsort(ha, kind="stable")
    hs = ha[order]
    out_i, out_j = [], []
    for off in np.array(np.meshgrid(*[[-1, 0, 1]] * d, indexing="ij")).reshape(d, -1).T:
        hb = (kb + off - lo) @ weights
        left = np.searchsorted(hs, hb, "left")
        right = np.searchsorted(hs, hb, "right")
        cnt = right - left
        if not cnt.any():
            continue
        j = np.repeat(np.arange(len(hb)), cnt)
        starts = np.repeat(left, cnt)
        within = np.arange(len(j)) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        out_i.append(order[starts + within])
        out_j.append(j)
    if not out_i:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    return np.concatenate(out_i), np.concatenate(out_j)


def pair_encounter(traj_x, traj_y, l, L, y_level, R):
    """True iff the two paths come within 2R of each other inside the window (L, y_level - L)."""
    l = np.asarray(l, dtype=np.float64)
    px = getattr(traj_x, "points", traj_x)
    py = getattr(traj_y, "points", traj_y)
    lo, hi = L, y_level - L
    if not lo < hi:
        return False
    pa, pb = clip_segments(np.asarray(px, dtype=float), l, lo, hi)
    qa, qb = clip_segments(np.asarray(py, dtype=float), l, lo, hi)
    if len(pa) == 0 or len(qa) == 0:
        return False
    longest = max(np.linalg.norm(pb - pa, axis=1).max(), np.linalg.norm(qb - qa, axis=1).max())
    # midpoints of segments within 2R are within 2R + longest of each other
    i, j = _candidate_pairs(pa, pb, qa, qb, 2 * R + longest)
    if i.size == 0:
        return False
    step = 200_000
    for s in range(0, i.size, step):
        ii, jj = i[s:s + step], j[s:s + step]
        if np.any(segment_distances(pa[ii], pb[ii], qa[jj], qb[jj]) < 2 * R):
            return True
    return False


@dataclass(frozen=True)
class EncounterConfig:
    L: float
    y_L: tuple
    replicates: int
    horizon_x: float
    horizon_y: float

    def validate(self, l, R):
        if self.L < 4 * R:
            raise ValueError("L must be at least 4R")
        if float(np.dot(self.y_L, l)) < 3 * self.L - 1e-12:
            raise ValueError("need l . y_L >= 3L")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")


def _one_pair(env_spec, cfg, l, dt, master, i):
    spec = with_seed(env_spec, derive_seed(master, i, TAG_ENV))
    env = make_environment(spec)
    cx = SimConfig(dt, cfg.horizon_x, derive_seed(master, i, TAG_PAIR, 1))
    cy = SimConfig(dt, cfg.horizon_y, derive_seed(master, i, TAG_PAIR, 2))
    x = simulate_path(env, np.zeros(env.d), cx)
    y = simulate_path(env, np.asarray(cfg.y_L, dtype=float), cy)
    return pair_encounter(x, y, l, cfg.L, float(np.dot(cfg.y_L, l)), spec.R)


def encounter_probability(env_spec, cfg, dt=1.0 / 16, l=None, seed=0, threads=1):
    """Fraction of pairs (fresh environment each) that meet, with a Wilson interval."""
    if cfg.replicates < 1:
        raise ValueError("replicates must be >= 1")
    l = np.eye(env_spec.dimension)[0] if l is None else np.asarray(l, dtype=float)
    cfg.validate(l, env_spec.R)
    env_spec.validate()
    master = derive_seed(seed, int(round(cfg.L * 1000)))
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            hits = list(ex.map(lambda i: _one_pair(env_spec, cfg, l, dt, master, i),
                               range(cfg.replicates)))
    else:
        hits = [_one_pair(env_spec, cfg, l, dt, master, i) for i in range(cfg.replicates)]
    k = int(sum(hits))
    lo, hi = wilson_interval(k, cfg.replicates)
    return {"L": cfg.L, "y_L": [float(v) for v in cfg.y_L], "n": cfg.replicates,
            "encounters": k, "gamma": k / cfg.replicates, "ci_low": lo, "ci_high": hi}


def write_encounter_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["L", "y_L", "n", "encounters", "gamma", "ci_low", "ci_high"])
        for r in rows:
            w.writerow([r["L"], " ".join(repr(v) for v in r["y_L"]), r["n"], r["encounters"],
                        r["gamma"], r["ci_low"], r["ci_high"]])
