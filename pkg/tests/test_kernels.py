import os
import subprocess
import sys

import numpy as np
import pytest
from scipy import stats

from crackling_kzm import _fallback, _rng, kernels

from oracles import brute_betweenness

needs_compiled = pytest.mark.skipif(kernels.compiled is None, reason="extension not built")


def random_adjacency(rng, n, p):
    a = np.triu(rng.random((n, n)) < p, 1)
    return np.ascontiguousarray((a | a.T).astype(np.uint8))


def test_normals_distribution():
    z = _rng.normals(12345, 0, 200_000)
    assert abs(z.mean()) < 0.01 and abs(z.var() - 1) < 0.01
    assert stats.kstest(z, "norm").pvalue > 1e-3
    # the tails go through the slow path
    assert np.count_nonzero(np.abs(z) > _rng.ZIG_R) > 0


def test_normals_are_counter_based():
    whole = _rng.normals(7, 100, 50)
    assert np.array_equal(np.r_[_rng.normals(7, 100, 20), _rng.normals(7, 120, 30)], whole)
    assert not np.array_equal(_rng.normals(8, 100, 50), whole)


def test_uniforms_range():
    u = _rng.uniforms(3, 0, 100_000)
    assert u.min() >= 0 and u.max() < 1
    assert stats.kstest(u, "uniform").pvalue > 1e-3


@needs_compiled
def test_compiled_normals_match_python():
    for key in (0, 1, 2**63 + 5):
        assert np.array_equal(kernels.compiled.normals(key, 40, 5000), _rng.normals(key, 40, 5000))


@needs_compiled
@pytest.mark.parametrize("eta", [0.0, 0.1, 0.5])
def test_phi4_backends_bit_identical(eta):
    rng = np.random.default_rng(0)
    start = rng.uniform(-0.01, 0.01, 64)
    a, b = start.copy(), start.copy()
    ra = kernels.compiled.phi4_integrate(a, -1.0, 2.0 / 3000, 0, 3000, 0.01, eta, 99)
    rb = _fallback.phi4_integrate(b, -1.0, 2.0 / 3000, 0, 3000, 0.01, eta, 99)
    assert ra == rb == -1
    assert np.array_equal(a, b)


@pytest.mark.parametrize("backend", [pytest.param(kernels.compiled, marks=needs_compiled), _fallback],
                         ids=["compiled", "python"])
def test_phi4_chunking_reproduces_single_run(backend):
    rng = np.random.default_rng(1)
    start = rng.uniform(-0.01, 0.01, 64)
    one, two = start.copy(), start.copy()
    backend.phi4_integrate(one, -1.0, 1e-3, 0, 2000, 0.01, 0.1, 5)
    backend.phi4_integrate(two, -1.0, 1e-3, 0, 700, 0.01, 0.1, 5)
    backend.phi4_integrate(two, -1.0, 1e-3, 700, 1300, 0.01, 0.1, 5)
    assert np.array_equal(one, two)


@pytest.mark.parametrize("backend", [pytest.param(kernels.compiled, marks=needs_compiled), _fallback],
                         ids=["compiled", "python"])
def test_phi4_blow_up_flag(backend):
    phi = np.full(64, 50.0)
    assert backend.phi4_integrate(phi, 1.0, 0.0, 0, 2000, 0.1, 0.0, 0) >= 0


@pytest.mark.parametrize("backend", [pytest.param(kernels.compiled, marks=needs_compiled), _fallback],
                         ids=["compiled", "python"])
def test_betweenness_against_brute_force(backend):
    rng = np.random.default_rng(2)
    for _ in range(30):
        n = int(rng.integers(2, 9))
        a = random_adjacency(rng, n, rng.uniform(0.2, 0.8))
        edges = [(i, j) for i in range(n) for j in range(i + 1, n) if a[i, j]]
        assert np.allclose(backend.betweenness(a), brute_betweenness(n, edges), atol=1e-12)


@needs_compiled
def test_betweenness_backends_agree():
    rng = np.random.default_rng(3)
    for n in (10, 32, 64):
        a = random_adjacency(rng, n, 0.15)
        assert np.allclose(kernels.compiled.betweenness(a), _fallback.betweenness(a), rtol=1e-13, atol=1e-12)


def test_backend_override_by_environment():
    code = "from crackling_kzm import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, CRACKLING_KZM_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    env.pop("CRACKLING_KZM_BACKEND")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == ("cython" if kernels.compiled is not None else "python")
