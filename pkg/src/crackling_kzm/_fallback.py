"""Pure-Python/numpy versions of the hot kernels.

Same signatures and, for the phi4 integrator, the same floating-point results
as the compiled module; used when the extension is unavailable or when
``CRACKLING_KZM_BACKEND=python`` is set.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from . import _rng

BLOWUP = 1.0e3
CHECK_EVERY = 1024


def phi4_integrate(
    phi: np.ndarray,
    eps_start: float,
    deps: float,
    step0: int,
    n_steps: int,
    dt: float,
    eta: float,
    key: int,
) -> int:
    """Advance a periodic phi4 ring in place with explicit Euler-Maruyama.

    Global step ``k = step0 + n`` uses control parameter ``eps_start + k * deps``
    and the normals for counters ``k * L .. k * L + L - 1``, so a run split into
    chunks reproduces the unsplit run exactly. Returns -1 on success or the
    local step index at which ``|phi|`` exceeded the blow-up bound.
    """
    L = phi.shape[0]
    sq = eta * np.sqrt(dt)
    cur = phi.copy()
    # a diverging field overflows before the periodic check catches it
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            eps = eps_start + (step0 + n) * deps
            lap = np.roll(cur, -1) - 2.0 * cur + np.roll(cur, 1)
            drift = eps * cur - cur * cur * cur + lap
            if eta != 0.0:
                z = _rng.normals(key, (step0 + n) * L, L)
                cur = cur + dt * drift + sq * z
            else:
                cur = cur + dt * drift
            if (n + 1) % CHECK_EVERY == 0 or n + 1 == n_steps:
                if not np.all(np.abs(cur) <= BLOWUP):
                    phi[:] = cur
                    return n
    phi[:] = cur
    return -1


def betweenness(adjacency: np.ndarray) -> np.ndarray:
    """Brandes betweenness over unordered pairs for an unweighted graph."""
    n = adjacency.shape[0]
    nbrs = [np.nonzero(adjacency[i])[0].tolist() for i in range(n)]
    cb = [0.0] * n
    for s in range(n):
        stack = []
        preds: list[list[int]] = [[] for _ in range(n)]
        sigma = [0] * n
        dist = [-1] * n
        sigma[s] = 1
        dist[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            for w in nbrs[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = [0.0] * n
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                cb[w] += delta[w]
    return np.asarray(cb) / 2.0
