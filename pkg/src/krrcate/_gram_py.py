"""Pure-numpy Gram kernels.

Mirrors the signatures of the compiled ``_gram_ext`` module. Inputs are
C-contiguous float64 arrays already restricted to the active coordinates.
"""

import numpy as np
from scipy.spatial.distance import cdist


def _mirror_upper(G):
    # exact symmetry: every unordered pair is taken from one computation
    return np.triu(G) + np.triu(G, 1).T


def matern_gram(X1, X2, nu, length_scale, symmetric):
    u = cdist(X1, X2) * (np.sqrt(2.0 * nu) / length_scale)
    if nu == 1.5:
        G = (1.0 + u) * np.exp(-u)
    else:
        G = (1.0 + u + u * u / 3.0) * np.exp(-u)
    return _mirror_upper(G) if symmetric else G


def rbf_gram(X1, X2, length_scale, symmetric):
    r = cdist(X1, X2)
    G = np.exp(-(r * r) / (2.0 * length_scale * length_scale))
    return _mirror_upper(G) if symmetric else G


def _horner(coefs, x):
    out = np.full_like(x, coefs[0])
    for c in coefs[1:]:
        out = out * x + c
    return out


def sobolev_gram(X1, X2, low_coefs, high_coefs, symmetric):
    """Tensor-product Bernoulli-polynomial kernel.

    ``low_coefs[k]`` holds the Horner coefficients of B_{k+1}/(k+1)!, and
    ``high_coefs`` those of the signed B_{2m}/(2m)! term.
    """
    G = np.ones((X1.shape[0], X2.shape[0]))
    for c in range(X1.shape[1]):
        s = X1[:, c]
        t = X2[:, c]
        kc = np.ones_like(G)
        for coefs in low_coefs:
            kc += np.multiply.outer(_horner(coefs, s), _horner(coefs, t))
        kc += _horner(high_coefs, np.abs(np.subtract.outer(s, t)))
        G *= kc
    return _mirror_upper(G) if symmetric else G
