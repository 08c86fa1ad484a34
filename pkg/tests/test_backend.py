"""The numpy fallback must compute what the jitted kernels compute."""

import os
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from anonqcd import _backend, _kernels


@pytest.mark.skipif(not _backend.USE_NUMBA, reason="already running the fallback")
class TestInterpreterEquivalence:
    def test_assignment_dp(self):
        rng = np.random.default_rng(0)
        py = _backend.python_version(_kernels.dp_log_assignment_sum)
        for _ in range(10):
            caps = rng.integers(1, 4, size=rng.integers(1, 4)).astype(np.int64)
            loglik = np.log(rng.random((int(caps.sum()), caps.size)))
            a = _kernels.dp_log_assignment_sum(loglik, caps)
            b = py(loglik, caps)
            assert abs(a - b) <= 1e-12 * max(1.0, abs(a))

    def test_dual_solver(self):
        rng = np.random.default_rng(1)
        py = _backend.python_version(_kernels.exponent_dual_solve)
        for _ in range(5):
            K, S = int(rng.integers(1, 4)), int(rng.integers(2, 5))
            p = rng.random((K, S)) + 0.05
            p /= p.sum(axis=1, keepdims=True)
            alpha = rng.dirichlet(np.ones(K) * 3)
            q = rng.dirichlet(np.ones(S) * 2)
            args = (np.log(p), alpha, q, np.zeros(S), 100_000, 1e-9, 1e-11)
            va, _, _, ra, _, sa = _kernels.exponent_dual_solve(*args)
            vb, _, _, rb, _, sb = py(*args)
            assert sa == sb == _kernels.SOLVE_OK
            assert abs(va - vb) <= 1e-9 * max(1.0, abs(va))

    def test_transport(self):
        rng = np.random.default_rng(2)
        py = _backend.python_version(_kernels.transport_max_loglik)
        for _ in range(10):
            K = int(rng.integers(1, 4))
            caps = rng.integers(1, 4, size=K).astype(np.int64)
            n = int(caps.sum())
            loglik = np.log(rng.random((n, K)))
            supply = np.ones(n, dtype=np.int64)
            a = _kernels.transport_max_loglik(loglik, supply, caps)
            b = py(loglik, supply, caps)
            assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


def test_env_flag_selects_fallback():
    code = textwrap.dedent(
        """
        import numpy as np
        import anonqcd
        from anonqcd.model import NetworkModel, binomial_pmf
        from anonqcd.mixture import mixture_log_ratio
        assert anonqcd.BACKEND == "numpy", anonqcd.BACKEND
        model = NetworkModel(
            group_sizes=(1, 1),
            pre=(binomial_pmf(6, 0.5), binomial_pmf(6, 0.5)),
            post=(binomial_pmf(6, 0.3), binomial_pmf(6, 0.7)),
        )
        print(repr(mixture_log_ratio(model, np.array([1, 5])).value))
        """
    )
    env = dict(os.environ)
    env["ANONQCD_NUMBA"] = "0"
    proc = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True
    )
    assert proc.returncode == 0, proc.stderr
    fallback_value = float(proc.stdout.strip())

    from anonqcd.mixture import mixture_log_ratio
    from anonqcd.model import NetworkModel, binomial_pmf

    model = NetworkModel(
        group_sizes=(1, 1),
        pre=(binomial_pmf(6, 0.5), binomial_pmf(6, 0.5)),
        post=(binomial_pmf(6, 0.3), binomial_pmf(6, 0.7)),
    )
    here = mixture_log_ratio(model, np.array([1, 5])).value
    assert abs(here - fallback_value) <= 1e-12 * max(1.0, abs(here))
