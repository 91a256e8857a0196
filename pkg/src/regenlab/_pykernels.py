"""Pure-Python/numpy implementation of the hot kernels.

Same API and the same random-number arithmetic as the compiled module, so a
path simulated by either backend agrees to rounding.  Used when the extension
is not built or when ``REGENLAB_PURE_PYTHON=1``.
"""

import math

import numpy as np

from .rng import MASK64, TWO_POW_M53, combine, stream

MAX_DIM = None  # no dimension cap


def _gauss(key, c):
    u1 = ((stream(key, 2 * c) >> 11) + 1) * TWO_POW_M53
    u2 = (stream(key, 2 * c + 1) >> 11) * TWO_POW_M53
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def gaussians(key, n):
    return np.array([_gauss(key, i) for i in range(n)], dtype=np.float64)


def sqrtm(a):
    lam, vec = np.linalg.eigh(np.asarray(a, dtype=np.float64))
    lam = np.sqrt(np.clip(lam, 0.0, None))
    return (vec * lam) @ vec.T


class Field:
    """Coefficient field (a, b) of one environment realization."""

    def __init__(self, d, constant, drift_mean, amp, delta, s, rho, key, shift, offset):
        self.d = int(d)
        self.constant = bool(constant)
        self.nch = self.d + self.d * (self.d + 1) // 2
        self.mean = np.array(drift_mean, dtype=np.float64)
        self.amp = float(amp)
        self.delta = float(delta)
        self.s = float(s)
        self.rho = float(rho)
        self.rho2 = self.rho * self.rho
        self.rr = self.rho / self.s if self.s > 0 else 0.0
        self.key = int(key) & MASK64
        self.shift = np.array(shift, dtype=np.float64)
        self.offset = np.array(offset, dtype=np.float64)
        self._chan = np.arange(self.nch, dtype=np.uint64)
        self._cell_cache = {}

    def _cell_values(self, cell):
        vals = self._cell_cache.get(cell)
        if vals is None:
            h = self.key
            for k in cell:
                h = combine(h, k)
            vals = np.array(
                [2.0 * ((stream(h, c) >> 11) * TWO_POW_M53) - 1.0 for c in range(self.nch)]
            )
            if len(self._cell_cache) > 200_000:
                self._cell_cache.clear()
            self._cell_cache[cell] = vals
        return vals

    def eval(self, x):
        d = self.d
        if self.constant:
            return np.eye(d), self.mean.copy()
        x = np.asarray(x, dtype=np.float64)
        rel = (x + self.offset) - self.shift
        u = rel / self.s
        lo = np.ceil(u - self.rr).astype(np.int64)
        hi = np.floor(u + self.rr).astype(np.int64)
        axes = [np.arange(lo[j], hi[j] + 1) for j in range(d)]
        K = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        dz = rel - self.s * K
        r2 = np.zeros(len(K))
        for j in range(d):
            r2 = r2 + dz[:, j] * dz[:, j]
        inside = r2 < self.rho2
        t = 1.0 - r2[inside] / self.rho2
        w = t * t * t
        cells = K[inside]
        vals = np.array([self._cell_values(tuple(int(v) for v in c)) for c in cells])
        W = w.sum()
        F = (w[:, None] * vals).sum(axis=0) / W
        b = self.mean + self.amp * F[:d]
        a = np.eye(d)
        idx = d
        for i in range(d):
            for j in range(i, d):
                v = self.delta * F[idx]
                if i == j:
                    a[i, i] = 1.0 + v
                else:
                    a[i, j] = a[j, i] = v
                idx += 1
        return a, b

    def eval_many(self, X):
        X = np.asarray(X, dtype=np.float64)
        n = X.shape[0]
        A = np.empty((n, self.d, self.d))
        B = np.empty((n, self.d))
        for i in range(n):
            A[i], B[i] = self.eval(X[i])
        return A, B

    def _em(self, P, i0, n, dt, key, base):
        d = self.d
        sq = math.sqrt(dt)
        for i in range(n):
            a, b = self.eval(P[i0 + i])
            sg = sqrtm(a)
            xi = np.array([_gauss(key, (base + i) * d + j) for j in range(d)])
            P[i0 + i + 1] = P[i0 + i] + b * dt + sq * (sg @ xi)

    def simulate(self, x0, n_steps, dt, key):
        P = np.empty((n_steps + 1, self.d))
        P[0] = x0
        self._em(P, 0, n_steps, dt, int(key), 0)
        return P

    def integrate(self, x0, dt, dW):
        dW = np.asarray(dW, dtype=np.float64)
        n = dW.shape[0]
        P = np.empty((n + 1, self.d))
        P[0] = x0
        for i in range(n):
            a, b = self.eval(P[i])
            P[i + 1] = P[i] + b * dt + sqrtm(a) @ dW[i]
        return P

    def _bridge(self, P, i0, m, n, dt, bkey, R, l, max_tries):
        d = self.d
        sq = math.sqrt(dt)
        lim2 = 36.0 * R * R
        mkey = combine(bkey, m)
        ykey = combine(mkey, -1)
        x0 = P[i0].copy()
        cu = x0 + 5.0 * R * l
        g = np.array([_gauss(ykey, j) for j in range(d)])
        nrm = math.sqrt(float(g @ g))
        rad = R * ((stream(combine(ykey, 1), 0) >> 11) * TWO_POW_M53) ** (1.0 / d)
        direction = g / nrm if nrm > 0 else l
        Y = (x0 + 9.0 * R * l) + rad * direction
        for attempt in range(max_tries):
            pkey = combine(mkey, attempt)
            ok = True
            for i in range(n - 1):
                xi = P[i0 + i]
                a, _ = self.eval(xi)
                sg = sqrtm(a)
                rem = float(n - i)
                fac = sq * math.sqrt((rem - 1.0) / rem)
                z = np.array([_gauss(pkey, i * d + j) for j in range(d)])
                nxt = xi + (Y - xi) / rem + fac * (sg @ z)
                P[i0 + i + 1] = nxt
                diff = nxt - cu
                if not float(diff @ diff) < lim2:
                    ok = False
                    break
            if ok:
                P[i0 + n] = Y
                return attempt + 1
        return 0

    def bridge(self, x, m, n, dt, bridge_key, R, l, max_tries):
        seg = np.empty((n + 1, self.d))
        seg[0] = x
        tries = self._bridge(seg, 0, int(m), int(n), dt, int(bridge_key), R,
                             np.asarray(l, dtype=np.float64), int(max_tries))
        return seg, tries

    def simulate_coupled(self, x0, n_steps, n_unit, dt, noise_key, lam,
                         bridge_key, R, l, max_tries):
        d = self.d
        P = np.empty((n_steps + 1, d))
        P[0] = x0
        n_units = n_steps // n_unit
        forced = np.zeros(n_units, dtype=np.uint8)
        tries = np.zeros(n_units, dtype=np.int64)
        lam = np.asarray(lam, dtype=np.uint8)
        l = np.asarray(l, dtype=np.float64)
        nk, bk = int(noise_key), int(bridge_key)
        for m in range(n_units):
            i0 = m * n_unit
            if m < len(lam) and lam[m]:
                used = self._bridge(P, i0, m, n_unit, dt, bk, R, l, int(max_tries))
                if used == 0:
                    return P, forced, tries, m
                forced[m] = 1
                tries[m] = used
            else:
                self._em(P, i0, n_unit, dt, nk, i0)
        if n_units * n_unit < n_steps:
            i0 = n_units * n_unit
            self._em(P, i0, n_steps - i0, dt, nk, i0)
        return P, forced, tries, -1



