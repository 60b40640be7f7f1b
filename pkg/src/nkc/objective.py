"""Empirical score-matching objective for ``log q(y|x) = sum_i alpha_i^T phi(y) h_i(x)``.

Per sample ``t`` and coordinate ``j``::

    s_tj = d/dy_j   log q(y_t | x_t)
    u_tj = d2/dy_j2 log q(y_t | x_t)

and the objective is ``mean_t sum_j (s_tj^2 / 2 + u_tj) + l2_alpha * |alpha|^2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel_basis import KernelBasis
from .mlp import Mlp


@dataclass
class BatchTerms:
    s: np.ndarray  # (n, d_y) first derivatives
    u: np.ndarray  # (n, d_y) diagonal second derivatives
    jac: np.ndarray  # (n, d_y, F) feature jacobian rows
    lap: np.ndarray  # (n, d_y, F) feature laplacian rows
    wg: np.ndarray  # (n, d_y, d) alpha_i . jac rows
    wq: np.ndarray  # (n, d_y, d) alpha_i . lap rows
    h: np.ndarray  # (n, d)
    cache: dict


def _check(y, x, alpha, net: Mlp, basis: KernelBasis):
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if x.ndim == 1:
        x = x[:, None]
    if len(y) == 0:
        raise ValueError("empty batch")
    if len(y) != len(x):
        raise ValueError(f"y has {len(y)} rows but x has {len(x)}")
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (net.d_out, basis.n_features):
        raise ValueError(f"alpha shape {alpha.shape} != ({net.d_out}, {basis.n_features})")
    return y, x, alpha


def batch_terms(y, x, alpha, net: Mlp, basis: KernelBasis) -> BatchTerms:
    y, x, alpha = _check(y, x, alpha, net, basis)
    jac = basis.feature_jacobian(y)
    lap = basis.feature_laplacian_rows(y)
    h, cache = net.forward(x)
    wg = jac @ alpha.T
    wq = lap @ alpha.T
    s = np.einsum("tji,ti->tj", wg, h)
    u = np.einsum("tji,ti->tj", wq, h)
    return BatchTerms(s, u, jac, lap, wg, wq, h, cache)


def objective_value(y, x, alpha, net: Mlp, basis: KernelBasis, l2_alpha: float = 0.0) -> float:
    terms = batch_terms(y, x, alpha, net, basis)
    value = np.mean(np.sum(0.5 * terms.s**2 + terms.u, axis=1))
    return float(value + l2_alpha * np.sum(np.asarray(alpha) ** 2))


def objective_gradients(y, x, alpha, net: Mlp, basis: KernelBasis, l2_alpha: float = 0.0):
    """Return ``(grad_alpha, grad_theta, value)``.

    ``grad_theta`` is a list aligned with ``net.params()``.
    """
    terms = batch_terms(y, x, alpha, net, basis)
    n = len(terms.h)
    alpha = np.asarray(alpha, dtype=np.float64)
    value = float(np.mean(np.sum(0.5 * terms.s**2 + terms.u, axis=1)) + l2_alpha * np.sum(alpha**2))

    grad_h = (np.einsum("tj,tji->ti", terms.s, terms.wg) + terms.wq.sum(axis=1)) / n
    grad_theta = net.backward(terms.cache, grad_h)

    # d/d alpha_i of s_tj = h_ti * jac_tj ; of u_tj = h_ti * lap_tj
    coef = terms.s[:, :, None] * terms.jac + terms.lap  # (n, d_y, F)
    grad_alpha = np.einsum("ti,tf->if", terms.h, coef.sum(axis=1)) / n + 2.0 * l2_alpha * alpha
    return grad_alpha, grad_theta, value
