# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: the phi4 Euler-Maruyama quench and Brandes betweenness.

Arithmetic is written in the same association order as ``_fallback`` so the two
backends agree bit for bit (the extension is built without FMA contraction).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, log, sqrt
from libc.stdint cimport int64_t, uint64_t
from libc.stdlib cimport free, malloc

from . import _rng

cnp.import_array()

cdef double[257] ZX
cdef double[256] ZR
cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t SUBKEY_MULT = 0xD1B54A32D192ED03ULL
cdef double ZIG_R = _rng.ZIG_R
cdef double TWO_M52 = 2.0 ** -52
cdef double TWO_M53 = 2.0 ** -53
cdef double BLOWUP = 1.0e3
cdef long CHECK_EVERY = 1024

for _i in range(257):
    ZX[_i] = _rng.ZIG_X[_i]
for _i in range(256):
    ZR[_i] = _rng.ZIG_RATIO[_i]


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t hash_at(uint64_t key, uint64_t ctr) nogil:
    return mix64(key + GOLDEN * (ctr + 1))


cdef inline double uniform_open(uint64_t h) nogil:
    return (<double>(<int64_t>(h >> 11)) + 1.0) * TWO_M53


cdef double normal_slow(uint64_t key, uint64_t ctr, uint64_t h) nogil:
    cdef uint64_t e = 1
    cdef int i
    cdef double u, a, b, xx, f0, f1, w
    while True:
        i = <int>(h & 255)
        u = (<double>(<int64_t>(h >> 11)) + 0.5) * TWO_M52 - 1.0
        if fabs(u) < ZR[i]:
            return u * ZX[i]
        if i == 0:
            while True:
                a = -log(uniform_open(hash_at(mix64(key ^ (e * SUBKEY_MULT)), ctr))) / ZIG_R
                b = -log(uniform_open(hash_at(mix64(key ^ ((e + 1) * SUBKEY_MULT)), ctr)))
                e += 2
                if 2.0 * b > a * a:
                    if u < 0.0:
                        return -(ZIG_R + a)
                    return ZIG_R + a
        xx = u * ZX[i]
        f0 = exp(-0.5 * (ZX[i] * ZX[i] - xx * xx))
        f1 = exp(-0.5 * (ZX[i + 1] * ZX[i + 1] - xx * xx))
        w = uniform_open(hash_at(mix64(key ^ (e * SUBKEY_MULT)), ctr))
        e += 1
        if f1 + w * (f0 - f1) < 1.0:
            return xx
        h = hash_at(mix64(key ^ (e * SUBKEY_MULT)), ctr)
        e += 1


cdef inline double normal_at(uint64_t key, uint64_t ctr) nogil:
    cdef uint64_t h = hash_at(key, ctr)
    cdef int i = <int>(h & 255)
    cdef double u = (<double>(<int64_t>(h >> 11)) + 0.5) * TWO_M52 - 1.0
    if fabs(u) < ZR[i]:
        return u * ZX[i]
    return normal_slow(key, ctr, h)


def normals(uint64_t key, uint64_t counter0, Py_ssize_t n):
    """Standard normals for counters ``counter0 .. counter0 + n - 1``."""
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t j
    for j in range(n):
        o[j] = normal_at(key, counter0 + j)
    return out


def phi4_integrate(double[::1] phi, double eps_start, double deps, long step0,
                   long n_steps, double dt, double eta, uint64_t key):
    """Advance a periodic phi4 ring in place; see ``_fallback.phi4_integrate``."""
    cdef Py_ssize_t L = phi.shape[0]
    cdef Py_ssize_t i
    cdef long n
    cdef double sq = eta * sqrt(dt)
    cdef double eps, p
    cdef double *cur
    cdef double *new
    cdef double *tmp
    cdef double *z
    cdef uint64_t base, h
    cdef int k
    cdef double u
    cdef const double *zr = ZR
    cdef const double *zx = ZX
    cdef bint noisy = eta != 0.0
    cdef long failed = -1
    if L < 3:
        raise ValueError("ring needs at least 3 sites")
    cur = <double *> malloc(L * sizeof(double))
    new = <double *> malloc(L * sizeof(double))
    z = <double *> malloc(L * sizeof(double))
    if cur == NULL or new == NULL or z == NULL:
        free(cur)
        free(new)
        free(z)
        raise MemoryError()
    for i in range(L):
        cur[i] = phi[i]
        z[i] = 0.0
    with nogil:
        for n in range(n_steps):
            eps = eps_start + (step0 + n) * deps
            if noisy:
                base = <uint64_t>(step0 + n) * <uint64_t>L
                for i in range(L):
                    h = mix64(key + GOLDEN * (base + <uint64_t>i + 1))
                    k = <int>(h & 255)
                    u = (<double>(<int64_t>(h >> 11)) + 0.5) * TWO_M52 - 1.0
                    if fabs(u) < zr[k]:
                        z[i] = sq * (u * zx[k])
                    else:
                        z[i] = sq * normal_slow(key, base + i, h)
            p = cur[0]
            new[0] = p + dt * (eps * p - p * p * p + (cur[1] - 2.0 * p + cur[L - 1]))
            for i in range(1, L - 1):
                p = cur[i]
                new[i] = p + dt * (eps * p - p * p * p + (cur[i + 1] - 2.0 * p + cur[i - 1]))
            p = cur[L - 1]
            new[L - 1] = p + dt * (eps * p - p * p * p + (cur[0] - 2.0 * p + cur[L - 2]))
            if noisy:
                for i in range(L):
                    new[i] = new[i] + z[i]
            tmp = cur
            cur = new
            new = tmp
            if (n + 1) % CHECK_EVERY == 0 or n + 1 == n_steps:
                for i in range(L):
                    if not fabs(cur[i]) <= BLOWUP:
                        failed = n
                        break
                if failed >= 0:
                    break
    for i in range(L):
        phi[i] = cur[i]
    free(cur)
    free(new)
    free(z)
    return failed


def betweenness(cnp.uint8_t[:, ::1] adjacency):
    """Brandes betweenness over unordered pairs for an unweighted graph."""
    cdef Py_ssize_t n = adjacency.shape[0]
    cdef Py_ssize_t s, v, w, j, head, tail, top, k
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] cb = out
    if n == 0:
        return out
    deg_arr = np.asarray(adjacency).sum(axis=1).astype(np.intp)
    cdef Py_ssize_t[::1] deg = deg_arr
    offs_arr = np.zeros(n + 1, dtype=np.intp)
    offs_arr[1:] = np.cumsum(deg_arr)
    cdef Py_ssize_t[::1] offs = offs_arr
    nbr_arr = np.nonzero(np.asarray(adjacency))[1].astype(np.intp)
    cdef Py_ssize_t[::1] nbr = nbr_arr
    cdef Py_ssize_t[::1] dist = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] order = np.empty(n, dtype=np.intp)
    cdef double[::1] sigma = np.empty(n, dtype=np.float64)
    cdef double[::1] delta = np.empty(n, dtype=np.float64)
    with nogil:
        for s in range(n):
            for v in range(n):
                dist[v] = -1
                sigma[v] = 0.0
                delta[v] = 0.0
            dist[s] = 0
            sigma[s] = 1.0
            order[0] = s
            head = 0
            tail = 1
            while head < tail:
                v = order[head]
                head += 1
                for j in range(offs[v], offs[v + 1]):
                    w = nbr[j]
                    if dist[w] < 0:
                        dist[w] = dist[v] + 1
                        order[tail] = w
                        tail += 1
                    if dist[w] == dist[v] + 1:
                        sigma[w] += sigma[v]
            # predecessors of w are neighbours one step closer to s
            top = tail - 1
            while top >= 0:
                w = order[top]
                top -= 1
                for j in range(offs[w], offs[w + 1]):
                    v = nbr[j]
                    if dist[v] == dist[w] - 1:
                        delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
                if w != s:
                    cb[w] += delta[w]
        for k in range(n):
            cb[k] = cb[k] / 2.0
    return out
