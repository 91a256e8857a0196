"""Velocity estimators, escape classification and renewal-increment tests."""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import stats

from .errors import InsufficientDataError
from .path_events import Level, _traj

LABELS = ("plus", "minus", "oscillating", "undecided")
Z95 = 1.959963984540054


@dataclass(frozen=True)
class VelocityEstimate:
    estimate: float
    se: float
    n_effective: int
    method: str

    def ci(self, z=Z95):
        return self.estimate - z * self.se, self.estimate + z * self.se

    def to_dict(self):
        return {"estimate": self.estimate, "se": self.se, "n_effective": self.n_effective,
                "method": self.method}


def _mean_se(values):
    v = np.asarray(values, dtype=np.float64)
    n = len(v)
    mean = math.fsum(v) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def terminal_velocities(trajs, l):
    l = np.asarray(l, dtype=np.float64)
    out = []
    for tr in trajs:
        tr = _traj(tr)
        out.append(float((tr.points[-1] - tr.points[0]) @ l) / tr.horizon)
    return np.array(out)


def velocity_direct(trajs, l, classes=None, label=None):
    """Mean of l.(X_T - X_0)/T over the ensemble, optionally for one class."""
    trajs = list(trajs)
    if not trajs:
        raise ValueError("empty ensemble")
    horizons = {round(_traj(t).horizon, 9) for t in trajs}
    if len(horizons) != 1:
        raise ValueError("ensemble must share one horizon")
    v = terminal_velocities(trajs, l)
    if label is not None:
        v = v[[c.label == label for c in classes]]
        if v.size == 0:
            raise ValueError(f"no replicates classified {label!r}")
    mean, se = _mean_se(v)
    return VelocityEstimate(mean, se, int(v.size), "direct")


def pooled_increments(records):
    """(l.dX, dtau) arrays of all complete blocks k >= 1."""
    dl, dt = [], []
    for rec in records:
        for z in rec.increments:
            dl.append(z.dl)
            dt.append(z.dtau)
    return np.array(dl, dtype=np.float64), np.array(dt, dtype=np.float64)


def ratio_estimate(x, t):
    """sum(x)/sum(t) with a delta-method standard error."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    n = len(x)
    if n < 2:
        raise InsufficientDataError(f"need at least 2 increments, got {n}")
    sx, st = math.fsum(x), math.fsum(t)
    v = sx / st
    xbar, tbar = sx / n, st / n
    resid = (x - xbar) - v * (t - tbar)
    var = math.fsum(resid * resid) / (n - 1)
    se = math.sqrt(var / n) / abs(tbar)
    return v, se


def velocity_renewal(records, l=None, se_method="delta", n_boot=999, seed=0):
    """Ratio of summed block displacements to summed block durations (k >= 1).

    ``se_method="bootstrap"`` resamples whole replicates instead of using the
    delta method, which keeps any within-replicate dependence in the error bar.
    """
    records = list(records)
    dl, dt = pooled_increments(records)
    v, se = ratio_estimate(dl, dt)
    if se_method == "bootstrap":
        sums = np.array([[math.fsum(z.dl for z in r.increments), math.fsum(z.dtau for z in r.increments)]
                         for r in records])
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, len(records), size=(n_boot, len(records)))
        num, den = sums[idx, 0].sum(axis=1), sums[idx, 1].sum(axis=1)
        ok = den > 0
        se = float(np.std(num[ok] / den[ok], ddof=1))
    elif se_method != "delta":
        raise ValueError("se_method must be 'delta' or 'bootstrap'")
    return VelocityEstimate(v, se, int(len(dl)), "renewal")


# -- escape classification -------------------------------------------------

@dataclass(frozen=True)
class EscapeClass:
    label: str
    evidence: dict = field(default_factory=dict)


def classify_escape(traj, l, theta, beta=None):
    """Threshold proxy for escape along +l or -l.

    plus: terminal relative level >= theta and, after first reaching theta/2,
    the path never falls below theta/2 - beta.  minus is the mirror image.
    oscillating: the path reached both +theta/4 and -theta/4 without escaping.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")
    beta = theta / 4 if beta is None else beta
    lev = Level.of(traj, l)
    y = lev.y - lev.y[0]
    term = float(y[-1])

    def escapes(z):
        if z[-1] < theta:
            return False, None
        j = int(np.argmax(z >= theta / 2))
        tail_min = float(z[j:].min())
        return tail_min > theta / 2 - beta, tail_min

    up, up_min = escapes(y)
    down, down_min = escapes(-y)
    hi, lo = float(y.max()), float(y.min())
    evidence = {"terminal": term, "max": hi, "min": lo, "theta": theta, "beta": beta,
                "tail_min": up_min if up_min is not None else (None if down_min is None else -down_min)}
    if up:
        return EscapeClass("plus", evidence)
    if down:
        return EscapeClass("minus", evidence)
    if hi >= theta / 4 and lo <= -theta / 4:
        return EscapeClass("oscillating", evidence)
    return EscapeClass("undecided", evidence)


def wilson_interval(k, n, z=Z95):
    if n <= 0:
        raise ValueError("n must be positive")
    p = k / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


def dichotomy_verdict(lo, hi, eta=0.1):
    away0, away1 = lo > eta, hi < 1 - eta
    if away0 and away1:
        return "inconsistent with dichotomy"
    if away1:
        return "consistent with 0"
    if away0:
        return "consistent with 1"
    return "undetermined"


def zero_one_report(classes, l=None, eta=0.1, z=Z95, min_n=30):
    """Frequencies of plus / minus / either with Wilson intervals and verdicts."""
    labels = [c.label if isinstance(c, EscapeClass) else str(c) for c in classes]
    n = len(labels)
    if n < min_n:
        raise InsufficientDataError(f"need at least {min_n} classified replicates, got {n}")
    counts = {k: labels.count(k) for k in LABELS}
    p_plus = counts["plus"] / n
    p_minus = counts["minus"] / n
    rows = {}
    for name, k, p in (("plus", counts["plus"], p_plus),
                       ("minus", counts["minus"], p_minus),
                       ("plus_or_minus", counts["plus"] + counts["minus"], p_plus + p_minus)):
        lo, hi = wilson_interval(k, n, z)
        rows[name] = {"count": k, "p": p, "ci": [lo, hi], "verdict": dichotomy_verdict(lo, hi, eta)}
    return {"n": n, "counts": counts, "eta": eta, "z": z,
            "direction": None if l is None else [float(v) for v in l], "events": rows}


# -- i.i.d. tests ----------------------------------------------------------

@dataclass(frozen=True)
class TestReport:
    __test__ = False  # not a pytest class

    name: str
    statistic: float | None
    p_value: float | None
    reject: bool | None
    alpha: float
    sizes: tuple
    method: str
    degenerate: bool = False

    def to_dict(self):
        return {"name": self.name, "statistic": self.statistic, "p_value": self.p_value,
                "reject": self.reject, "alpha": self.alpha, "sizes": list(self.sizes),
                "method": self.method, "degenerate": self.degenerate}


def _autocorr(x, lag):
    c = x - x.mean()
    den = float(c @ c)
    return float(c[:-lag] @ c[lag:]) / den


def autocorrelation_test(x, lag, n_perm=999, alpha=0.01, seed=0, name=None):
    """Two-sided permutation test of zero lag-``lag`` autocorrelation."""
    x = np.asarray(x, dtype=np.float64)
    name = name or f"autocorr_lag{lag}"
    if len(x) <= lag + 1 or np.ptp(x) == 0:
        return TestReport(name, None, None, None, alpha, (len(x),), "permutation", True)
    r = _autocorr(x, lag)
    rng = np.random.default_rng(seed)
    c = x - x.mean()
    den = float(c @ c)
    perms = np.array([rng.permutation(c) for _ in range(n_perm)])
    rs = np.einsum("ij,ij->i", perms[:, :-lag], perms[:, lag:]) / den
    p = (1 + int(np.sum(np.abs(rs) >= abs(r) - 1e-15))) / (n_perm + 1)
    return TestReport(name, r, p, p < alpha, alpha, (len(x),), f"permutation(B={n_perm})")


def ks_test(a, b, alpha=0.01, name="ks"):
    """Two-sample KS: asymptotic p-value when both samples have >= 30 points, exact otherwise."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) == 0 or len(b) == 0 or np.ptp(np.concatenate([a, b])) == 0:
        return TestReport(name, None, None, None, alpha, (len(a), len(b)), "ks", True)
    method = "asymp" if min(len(a), len(b)) >= 30 else "exact"
    res = stats.ks_2samp(a, b, method=method)
    p = float(res.pvalue)
    return TestReport(name, float(res.statistic), p, p < alpha, alpha, (len(a), len(b)),
                      f"ks_2samp({method})")


def iid_tests(records, alpha=0.01, n_perm=999, seed=0, min_increments=50):
    """Autocorrelation (lags 1-3), even/odd KS and delay-block KS on block increments."""
    records = list(records)
    dl, dt = pooled_increments(records)
    if len(dl) < min_increments:
        raise InsufficientDataError(f"need at least {min_increments} increments, got {len(dl)}")
    reports = []
    for series, tag in ((dt, "dtau"), (dl, "dl")):
        for lag in (1, 2, 3):
            reports.append(autocorrelation_test(series, lag, n_perm, alpha, seed + lag,
                                                name=f"autocorr_{tag}_lag{lag}"))
    ks = [z for rec in records for z in rec.increments]
    even = [z for z in ks if z.k % 2 == 0]
    odd = [z for z in ks if z.k % 2 == 1]
    for attr in ("dtau", "dl"):
        reports.append(ks_test([getattr(z, attr) for z in even], [getattr(z, attr) for z in odd],
                               alpha, name=f"ks_even_odd_{attr}"))
    delay = [rec.z0 for rec in records if rec.z0 is not None and rec.d_status.infinite]
    for attr in ("dtau", "dl"):
        reports.append(ks_test([getattr(z, attr) for z in delay], [getattr(z, attr) for z in ks],
                               alpha, name=f"ks_delay_vs_blocks_{attr}"))
    return reports


def tau1_moment_report(records, l=None, min_n=30, stability=0.10):
    """Mean of l.X_{tau_1} and tau_1 over first blocks that never backtrack."""
    first = [rec.z0 for rec in records if rec.z0 is not None and rec.d_status.infinite]
    n = len(first)
    out = {"n": n, "low_n": n < min_n, "verdict": None}
    if n == 0:
        return out
    for key, vals in (("l_x_tau1", [z.dl for z in first]), ("tau1", [z.dtau for z in first])):
        v = np.asarray(vals, dtype=np.float64)
        mean, se = _mean_se(v)
        running = np.cumsum(v) / np.arange(1, n + 1)
        half = running[n // 2:]
        spread = float(np.max(np.abs(half - running[-1])) / abs(running[-1])) if running[-1] else math.inf
        out[key] = {"mean": mean, "se": se, "running_mean": running.tolist(),
                    "relative_spread_last_half": spread}
    if n >= min_n:
        stable = all(out[k]["relative_spread_last_half"] < stability for k in ("l_x_tau1", "tau1"))
        out["verdict"] = "stable" if stable else "unstable"
    return out


# -- limit velocity --------------------------------------------------------

def default_directions(d, count=8):
    if d == 2:
        ang = np.arange(count) * 2 * np.pi / count
        return np.column_stack([np.cos(ang), np.sin(ang)])
    eye = np.eye(d)
    return np.vstack([eye, -eye])


def limit_velocity_summary(trajs, theta, directions=None, angle_tol=math.radians(15), beta=None):
    """Direction l_* of the limiting velocity and its speeds v_+ and v_-.

    A replicate counts as non-oscillating when it escapes (plus or minus)
    along some direction of the grid.  l_* is the principal axis of the
    non-oscillating velocity vectors, oriented along their mean.
    """
    trajs = [_traj(t) for t in trajs]
    d = trajs[0].d
    dirs = default_directions(d) if directions is None else np.asarray(directions, dtype=float)
    vel = np.array([(t.points[-1] - t.points[0]) / t.horizon for t in trajs])
    escaping = np.array([any(classify_escape(t, u, theta, beta).label in ("plus", "minus")
                             for u in dirs) for t in trajs])
    out = {"n": len(trajs), "n_non_oscillating": int(escaping.sum())}
    if not escaping.any():
        out.update({"l_star": None, "v_plus": 0.0, "v_minus": 0.0, "zero_velocity": True,
                    "collinearity": None})
        return out
    v = vel[escaping]
    _, vecs = np.linalg.eigh(v.T @ v)
    axis = vecs[:, -1]
    mean = v.mean(axis=0)
    if mean @ axis < 0 or (abs(mean @ axis) < 1e-12 and axis[np.argmax(np.abs(axis))] < 0):
        axis = -axis
    labels = [classify_escape(t, axis, theta, beta).label for t in trajs]
    proj = vel @ axis
    plus = [p for p, lab in zip(proj, labels) if lab == "plus"]
    minus = [-p for p, lab in zip(proj, labels) if lab == "minus"]
    speeds = np.linalg.norm(v, axis=1)
    cosang = np.abs(v @ axis) / np.where(speeds > 0, speeds, 1.0)
    out.update({
        "l_star": axis.tolist(),
        "v_plus": float(np.mean(plus)) if plus else None,
        "v_minus": float(np.mean(minus)) if minus else None,
        "n_plus": len(plus), "n_minus": len(minus),
        "zero_velocity": False,
        "collinearity": float(np.mean(cosang >= math.cos(angle_tol))),
    })
    return out


def harmonic_escape_probe(env, probes, l, n_sub, dt=1.0 / 16, horizon=200.0, theta=None,
                          seed=0, beta=None):
    """Quenched escape-probability estimates r(x) at each probe point."""
    from .rng import TAG_PROBE, derive_seed
    from .sde import SimConfig, simulate_path

    theta = 20 * env.spec.R if theta is None else theta
    rows = []
    for i, x in enumerate(np.atleast_2d(np.asarray(probes, dtype=float))):
        hits = 0
        for j in range(n_sub):
            cfg = SimConfig(dt, horizon, derive_seed(seed, TAG_PROBE, i, j))
            if classify_escape(simulate_path(env, x, cfg), l, theta, beta).label == "plus":
                hits += 1
        r = hits / n_sub
        rows.append({"probe": x.tolist(), "r_hat": r, "se": math.sqrt(r * (1 - r) / n_sub), "n": n_sub})
    return rows
