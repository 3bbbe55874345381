"""Gaussian regression mixtures with softmax gates: fitting, model selection
and Monte-Carlo divergences."""

import json

from . import _core
from ._core import MixregError, gamma_kappa, gaussian_hellinger_exact, model_dim, sigma_m

__all__ = [
    "MixregError",
    "divergence",
    "fit",
    "gamma_kappa",
    "gaussian_hellinger_exact",
    "generate",
    "model_dim",
    "select",
    "sigma_m",
]


def _truth_text(truth):
    if isinstance(truth, str):
        return json.dumps({"example": truth})
    return json.dumps(truth)


def generate(truth="P", n=2000, seed=0):
    """Sample (x, y); truth is "P", "NP" or a parameter dict."""
    return _core.generate(_truth_text(truth), n, seed)


def fit(x, y, K, seed=0, **kwargs):
    """Fit a K-component mixture; returns the fit as a dict."""
    return json.loads(_core.fit(_as2d(x), _as2d(y), K, seed, **kwargs))


def select(x, y, K_range, kappa=1.0, seed=0, **kwargs):
    """Fit every K in K_range and pick the penalized-likelihood minimizer."""
    return json.loads(_core.select(_as2d(x), _as2d(y), list(K_range), kappa, seed, **kwargs))


def divergence(truth, params, x, kind="kl", m_y=1000, seed=0, rho=0.5):
    """Tensorized divergence between truth and fitted params; returns (value, se)."""
    return _core.divergence(_truth_text(truth), json.dumps(params), _as2d(x), kind, m_y, seed, rho)


def _as2d(a):
    import numpy as np

    a = np.asarray(a, dtype=float)
    return a.reshape(-1, 1) if a.ndim == 1 else a
