import numpy as np
import pytest

from dcsysid import DcHyperparams, RegressionData, dc_cholesky_factor, simulate_fir


@pytest.fixture
def fir_problem():
    """Factory for seeded synthetic FIR datasets with a DC-prior response."""

    def make(seed=0, n=20, n_samples=200, hyper=None, sigma2=0.3):
        rng = np.random.default_rng(seed)
        h = hyper if hyper is not None else DcHyperparams(c=1.5, lam=0.8, rho=0.6)
        g_true = dc_cholesky_factor(h, n) @ rng.standard_normal(n)
        u = rng.standard_normal(n_samples)
        y = simulate_fir(g_true, u, sigma2=sigma2, seed=seed + 10_000)
        data = RegressionData(u=u, y=y, n=n)
        return data, g_true, h

    return make
