"""Numpy implementations of the solver's inner-loop kernels.

Used when the compiled ``_ckernels`` extension is unavailable, or when
``TRANSFER_ER_PURE=1`` is set in the environment.
"""
import numpy as np


def forward(X, src_a, src_b, w0, W):
    """Per-example scores <w0 + (W[a] + W[b]) / 2, x_k>."""
    combined = w0 + 0.5 * (W[src_a] + W[src_b])
    return np.einsum("kj,kj->k", X, combined)


def backward(X, src_a, src_b, r, n_sources):
    """Accumulate sum_k r_k x_k for w0 and half of it onto each pair source.

    Returns ``(s0, S)`` with shapes ``(d,)`` and ``(n_sources, d)``. The loss
    gradient is ``(-s0, -S)`` when ``r`` holds residuals.
    """
    d = X.shape[1]
    s0 = X.T @ r
    half = 0.5 * r[:, None] * X
    S = np.empty((n_sources, d))
    for j in range(d):
        S[:, j] = (np.bincount(src_a, weights=half[:, j], minlength=n_sources)
                   + np.bincount(src_b, weights=half[:, j], minlength=n_sources))
    return s0, S


def soft_threshold(v, tau):
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)
