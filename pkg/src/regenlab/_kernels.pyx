# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: lattice-field evaluation, Euler-Maruyama stepping and
guided unit-time bridges.

Operation-for-operation mirror of ``_pykernels``; see that module for the
readable version.  All loops run without the GIL so replicates can be
simulated from a thread pool.
"""

import numpy as np

from libc.math cimport sqrt, log, cos, floor, ceil, fabs, pow, M_PI
from libc.stdint cimport uint64_t, int64_t, uint8_t

cdef enum:
    MAXD = 4
    MAXCH = 14  # MAXD + MAXD*(MAXD+1)/2

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15
cdef uint64_t M1 = 0xBF58476D1CE4E5B9
cdef uint64_t M2 = 0x94D049BB133111EB
cdef double TWO_M53 = 1.0 / 9007199254740992.0

MAX_DIM = MAXD


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = z ^ (z >> 30)
    z = z * M1
    z = z ^ (z >> 27)
    z = z * M2
    return z ^ (z >> 31)


cdef inline uint64_t stream(uint64_t key, uint64_t ctr) noexcept nogil:
    return mix64(key + (ctr + 1) * GOLDEN)


cdef inline uint64_t combine(uint64_t h, int64_t v) noexcept nogil:
    return mix64(h ^ mix64(<uint64_t>v + GOLDEN))


cdef inline double u53(uint64_t h) noexcept nogil:
    return <double>(h >> 11) * TWO_M53


cdef inline double gauss(uint64_t key, uint64_t c) noexcept nogil:
    cdef double u1 = <double>((stream(key, 2 * c) >> 11) + 1) * TWO_M53
    cdef double u2 = u53(stream(key, 2 * c + 1))
    return sqrt(-2.0 * log(u1)) * cos(2.0 * M_PI * u2)


def gaussians(key, long n):
    """``n`` standard normals from stream ``key`` (counters 0..n-1)."""
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef uint64_t k = key
    cdef long i
    for i in range(n):
        o[i] = gauss(k, i)
    return out


cdef void _sqrtm(int d, const double* a, double* out) noexcept nogil:
    """Symmetric square root by cyclic Jacobi eigendecomposition."""
    cdef double A[MAXD * MAXD]
    cdef double V[MAXD * MAXD]
    cdef double lam[MAXD]
    cdef int i, j, k, p, q, sweep
    cdef double off, scale, apq, theta, t, c, s, akp, akq, apk, aqk
    for i in range(d * d):
        A[i] = a[i]
        V[i] = 0.0
    for i in range(d):
        V[i * d + i] = 1.0
    scale = 0.0
    for i in range(d * d):
        scale += A[i] * A[i]
    for sweep in range(64):
        off = 0.0
        for p in range(d):
            for q in range(p + 1, d):
                off += A[p * d + q] * A[p * d + q]
        if off <= 1e-34 * scale:
            break
        for p in range(d):
            for q in range(p + 1, d):
                apq = A[p * d + q]
                if apq == 0.0:
                    continue
                theta = (A[q * d + q] - A[p * d + p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for k in range(d):
                    akp = A[k * d + p]
                    akq = A[k * d + q]
                    A[k * d + p] = c * akp - s * akq
                    A[k * d + q] = s * akp + c * akq
                for k in range(d):
                    apk = A[p * d + k]
                    aqk = A[q * d + k]
                    A[p * d + k] = c * apk - s * aqk
                    A[q * d + k] = s * apk + c * aqk
                for k in range(d):
                    akp = V[k * d + p]
                    akq = V[k * d + q]
                    V[k * d + p] = c * akp - s * akq
                    V[k * d + q] = s * akp + c * akq
    for i in range(d):
        lam[i] = sqrt(A[i * d + i]) if A[i * d + i] > 0.0 else 0.0
    for i in range(d):
        for j in range(d):
            t = 0.0
            for k in range(d):
                t += V[i * d + k] * lam[k] * V[j * d + k]
            out[i * d + j] = t


def sqrtm(a):
    """Square root of a small symmetric matrix (Jacobi)."""
    arr = np.ascontiguousarray(a, dtype=np.float64)
    cdef int d = arr.shape[0]
    if d > MAXD:
        raise ValueError("dimension above compiled limit")
    out = np.empty((d, d), dtype=np.float64)
    cdef double[:, ::1] av = arr
    cdef double[:, ::1] ov = out
    _sqrtm(d, &av[0, 0], &ov[0, 0])
    return out


cdef class Field:
    """Coefficient field (a, b) of one environment realization."""

    cdef readonly int d
    cdef readonly bint constant
    cdef int nch
    cdef double amp, delta, s, rho, rho2, rr
    cdef uint64_t key
    cdef double mean[MAXD]
    cdef double shift[MAXD]
    cdef double offset[MAXD]

    def __cinit__(self, int d, bint constant, drift_mean, double amp,
                  double delta, double s, double rho, key, shift, offset):
        if d < 1 or d > MAXD:
            raise ValueError("dimension outside compiled range")
        self.d = d
        self.constant = constant
        self.nch = d + d * (d + 1) // 2
        self.amp = amp
        self.delta = delta
        self.s = s
        self.rho = rho
        self.rho2 = rho * rho
        self.rr = rho / s if s > 0 else 0.0
        self.key = key
        cdef int j
        for j in range(d):
            self.mean[j] = drift_mean[j]
            self.shift[j] = shift[j]
            self.offset[j] = offset[j]

    cdef void _eval(self, const double* x, double* a, double* b) noexcept nogil:
        cdef int d = self.d
        cdef int i, j, c, idx
        cdef double zz[MAXD]
        cdef double rel[MAXD]
        cdef int64_t lo[MAXD]
        cdef int64_t hi[MAXD]
        cdef int64_t k[MAXD]
        cdef double acc[MAXCH]
        cdef double W, r2, dz, t, w, u
        cdef uint64_t h
        if self.constant:
            for i in range(d):
                b[i] = self.mean[i]
                for j in range(d):
                    a[i * d + j] = 1.0 if i == j else 0.0
            return
        for j in range(d):
            zz[j] = x[j] + self.offset[j]
            rel[j] = zz[j] - self.shift[j]
            u = rel[j] / self.s
            lo[j] = <int64_t>ceil(u - self.rr)
            hi[j] = <int64_t>floor(u + self.rr)
            k[j] = lo[j]
        for c in range(self.nch):
            acc[c] = 0.0
        W = 0.0
        while True:
            r2 = 0.0
            for j in range(d):
                dz = rel[j] - self.s * <double>k[j]
                r2 = r2 + dz * dz
            if r2 < self.rho2:
                t = 1.0 - r2 / self.rho2
                w = t * t * t
                h = self.key
                for j in range(d):
                    h = combine(h, k[j])
                W = W + w
                for c in range(self.nch):
                    acc[c] = acc[c] + w * (2.0 * u53(stream(h, c)) - 1.0)
            # odometer increment
            j = 0
            while j < d:
                k[j] += 1
                if k[j] <= hi[j]:
                    break
                k[j] = lo[j]
                j += 1
            if j == d:
                break
        for i in range(d):
            b[i] = self.mean[i] + self.amp * (acc[i] / W)
        idx = d
        for i in range(d):
            for j in range(i, d):
                t = self.delta * (acc[idx] / W)
                if i == j:
                    a[i * d + i] = 1.0 + t
                else:
                    a[i * d + j] = t
                    a[j * d + i] = t
                idx += 1

    def eval(self, x):
        xv = np.ascontiguousarray(x, dtype=np.float64)
        a = np.empty((self.d, self.d), dtype=np.float64)
        b = np.empty(self.d, dtype=np.float64)
        cdef double[::1] xm = xv
        cdef double[:, ::1] am = a
        cdef double[::1] bm = b
        self._eval(&xm[0], &am[0, 0], &bm[0])
        return a, b

    def eval_many(self, X):
        Xv = np.ascontiguousarray(X, dtype=np.float64)
        cdef long n = Xv.shape[0]
        A = np.empty((n, self.d, self.d), dtype=np.float64)
        B = np.empty((n, self.d), dtype=np.float64)
        cdef double[:, ::1] xm = Xv
        cdef double[:, :, ::1] am = A
        cdef double[:, ::1] bm = B
        cdef long i
        with nogil:
            for i in range(n):
                self._eval(&xm[i, 0], &am[i, 0, 0], &bm[i, 0])
        return A, B

    cdef void _em(self, double* P, long n, double dt, uint64_t key,
                  uint64_t base) noexcept nogil:
        """n Euler-Maruyama steps; P points at the starting row."""
        cdef int d = self.d
        cdef double a[MAXD * MAXD]
        cdef double sg[MAXD * MAXD]
        cdef double b[MAXD]
        cdef double xi[MAXD]
        cdef double sq = sqrt(dt)
        cdef double acc
        cdef long i
        cdef int j, k
        for i in range(n):
            self._eval(&P[i * d], a, b)
            _sqrtm(d, a, sg)
            for j in range(d):
                xi[j] = gauss(key, (base + i) * d + j)
            for j in range(d):
                acc = 0.0
                for k in range(d):
                    acc = acc + sg[j * d + k] * xi[k]
                P[(i + 1) * d + j] = P[i * d + j] + b[j] * dt + sq * acc

    def simulate(self, x0, long n_steps, double dt, key):
        path = np.empty((n_steps + 1, self.d), dtype=np.float64)
        path[0] = x0
        cdef double[:, ::1] P = path
        cdef uint64_t k = key
        with nogil:
            self._em(&P[0, 0], n_steps, dt, k, 0)
        return path

    def integrate(self, x0, double dt, dW):
        """Euler-Maruyama driven by supplied Brownian increments ``dW``."""
        dWv = np.ascontiguousarray(dW, dtype=np.float64)
        cdef long n = dWv.shape[0]
        cdef int d = self.d
        path = np.empty((n + 1, d), dtype=np.float64)
        path[0] = x0
        cdef double[:, ::1] P = path
        cdef double[:, ::1] W = dWv
        cdef double a[MAXD * MAXD]
        cdef double sg[MAXD * MAXD]
        cdef double b[MAXD]
        cdef double acc
        cdef long i
        cdef int j, k
        with nogil:
            for i in range(n):
                self._eval(&P[i, 0], a, b)
                _sqrtm(d, a, sg)
                for j in range(d):
                    acc = 0.0
                    for k in range(d):
                        acc = acc + sg[j * d + k] * W[i, k]
                    P[i + 1, j] = P[i, j] + b[j] * dt + acc
        return path

    cdef long _bridge(self, double* P, long m, long n, double dt,
                      uint64_t bkey, double R, const double* l,
                      long max_tries) noexcept nogil:
        """Forced unit-time bridge from P[0] into P[1..n].

        Returns the number of proposals used, or 0 when the cap is hit.
        """
        cdef int d = self.d
        cdef double a[MAXD * MAXD]
        cdef double sg[MAXD * MAXD]
        cdef double b[MAXD]
        cdef double g[MAXD]
        cdef double Y[MAXD]
        cdef double cu[MAXD]
        cdef double x0[MAXD]
        cdef double sq = sqrt(dt)
        cdef double lim2 = 36.0 * R * R
        cdef double nrm, rad, fac, acc, dist2, rem
        cdef uint64_t mkey = combine(bkey, m)
        cdef uint64_t ykey = combine(mkey, -1)
        cdef uint64_t pkey
        cdef long attempt, i
        cdef int j, k
        cdef bint ok
        for j in range(d):
            x0[j] = P[j]
            cu[j] = x0[j] + 5.0 * R * l[j]
        nrm = 0.0
        for j in range(d):
            g[j] = gauss(ykey, j)
            nrm = nrm + g[j] * g[j]
        nrm = sqrt(nrm)
        rad = R * pow(u53(stream(combine(ykey, 1), 0)), 1.0 / d)
        for j in range(d):
            if nrm > 0.0:
                Y[j] = (x0[j] + 9.0 * R * l[j]) + rad * (g[j] / nrm)
            else:
                Y[j] = (x0[j] + 9.0 * R * l[j]) + rad * l[j]
        for attempt in range(max_tries):
            pkey = combine(mkey, attempt)
            ok = True
            for i in range(n - 1):
                self._eval(&P[i * d], a, b)
                _sqrtm(d, a, sg)
                rem = <double>(n - i)
                fac = sq * sqrt((rem - 1.0) / rem)
                for j in range(d):
                    g[j] = gauss(pkey, i * d + j)
                dist2 = 0.0
                for j in range(d):
                    acc = 0.0
                    for k in range(d):
                        acc = acc + sg[j * d + k] * g[k]
                    P[(i + 1) * d + j] = P[i * d + j] + (Y[j] - P[i * d + j]) / rem + fac * acc
                    dist2 = dist2 + (P[(i + 1) * d + j] - cu[j]) * (P[(i + 1) * d + j] - cu[j])
                if not dist2 < lim2:
                    ok = False
                    break
            if ok:
                for j in range(d):
                    P[n * d + j] = Y[j]
                return attempt + 1
        return 0

    def bridge(self, x, long m, long n, double dt, bridge_key, double R, l,
               long max_tries):
        """One forced bridge segment of n steps; returns (segment, tries)."""
        seg = np.empty((n + 1, self.d), dtype=np.float64)
        seg[0] = x
        lv = np.ascontiguousarray(l, dtype=np.float64)
        cdef double[:, ::1] P = seg
        cdef double[::1] L = lv
        cdef uint64_t k = bridge_key
        cdef long tries
        with nogil:
            tries = self._bridge(&P[0, 0], m, n, dt, k, R, &L[0], max_tries)
        return seg, tries

    def simulate_coupled(self, x0, long n_steps, long n_unit, double dt,
                         noise_key, lam, bridge_key, double R, l,
                         long max_tries):
        """Path with unit intervals [m, m+1] replaced by bridges where lam[m].

        Returns (path, forced, tries, failed_unit); failed_unit is -1 on
        success.
        """
        cdef int d = self.d
        path = np.empty((n_steps + 1, d), dtype=np.float64)
        path[0] = x0
        cdef long n_units = n_steps // n_unit
        forced = np.zeros(n_units, dtype=np.uint8)
        tries = np.zeros(n_units, dtype=np.int64)
        lam_a = np.ascontiguousarray(lam, dtype=np.uint8)
        lv = np.ascontiguousarray(l, dtype=np.float64)
        cdef double[:, ::1] P = path
        cdef uint8_t[::1] F = forced
        cdef int64_t[::1] T = tries
        cdef const uint8_t[::1] LM = lam_a
        cdef double[::1] L = lv
        cdef uint64_t nk = noise_key
        cdef uint64_t bk = bridge_key
        cdef long m, i0, used
        cdef long failed = -1
        with nogil:
            for m in range(n_units):
                i0 = m * n_unit
                if m < LM.shape[0] and LM[m]:
                    used = self._bridge(&P[i0, 0], m, n_unit, dt, bk, R, &L[0], max_tries)
                    if used == 0:
                        failed = m
                        break
                    F[m] = 1
                    T[m] = used
                else:
                    self._em(&P[i0, 0], n_unit, dt, nk, i0)
            if failed < 0 and n_units * n_unit < n_steps:
                i0 = n_units * n_unit
                self._em(&P[i0, 0], n_steps - i0, dt, nk, i0)
        return path, forced, tries, failed
