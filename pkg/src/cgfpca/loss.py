"""LogDet covariance-fitting loss, its gradients, and the roughness penalty.

For each sample with design B (M x K) and values y, the model covariance is
``Sigma = B U W U^T B^T + sigma2 * I`` and the per-sample loss term is
``log det Sigma + y^T Sigma^{-1} y``; the objective averages the terms over
samples. The rank-1 sample moment y y^T is never materialized.

The default evaluation path uses the matrix determinant lemma and the
Woodbury identity through the R x R matrix ``A = sigma2 W^{-1} + Phi^T Phi``
with ``Phi = B U``:

    Sigma^{-1}   = (I - Phi A^{-1} Phi^T) / sigma2
    log det Sigma = (M - R) log sigma2 + log det W + log det A

which brings the cost down to O(N (R^3 + M K R)). Samples are grouped by
length so the per-sample work runs as batched array operations. A dense
reference path is kept for testing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .manifold import ProductPoint
from .splines import PenaltyMatrix


class LossError(ValueError):
    """Numerical failure while evaluating the objective."""


@dataclass(frozen=True)
class ModelParams:
    """Low-rank covariance parameters: a manifold point plus noise variance."""

    point: ProductPoint
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise LossError(f"sigma2 must be positive, got {self.sigma2}")


@dataclass(frozen=True)
class SampleView:
    """One sample's design matrix and observed values."""

    design: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.design.shape[0] != self.values.shape[0]:
            raise LossError("design rows and value length differ")


@dataclass(frozen=True)
class PenaltyConfig:
    """Roughness penalty weight and matrix; eta = 0 disables the penalty."""

    eta: float
    gamma: PenaltyMatrix

    def __post_init__(self):
        if self.eta < 0:
            raise LossError(f"penalty weight must be >= 0, got {self.eta}")


class LossData:
    """Samples grouped by length for batched evaluation.

    Groups are ordered by sample length so results are reproducible; the
    reduction over samples is a fixed-order sum within and across groups.
    """

    def __init__(self, samples: Sequence[SampleView]):
        if len(samples) == 0:
            raise LossError("need at least one sample")
        if any(s.values.shape[0] < 1 for s in samples):
            raise LossError("every sample needs at least one observation")
        self.num_samples = len(samples)
        self.num_basis = samples[0].design.shape[1]
        by_len: dict[int, list[SampleView]] = {}
        for s in samples:
            by_len.setdefault(s.design.shape[0], []).append(s)
        self.groups = []
        for m in sorted(by_len):
            grp = by_len[m]
            B = np.stack([s.design for s in grp])          # (n, m, K)
            Y = np.stack([s.values for s in grp])          # (n, m)
            self.groups.append((B, Y, np.sum(Y * Y, axis=1)))


def _as_data(samples) -> LossData:
    return samples if isinstance(samples, LossData) else LossData(list(samples))


def _w_inverse(w_mat: np.ndarray):
    """Inverse and log-determinant of W via Cholesky; raises on non-SPD."""
    try:
        lw = np.linalg.cholesky(w_mat)
    except np.linalg.LinAlgError as exc:
        raise LossError("W factor is numerically singular") from exc
    linv = np.linalg.inv(lw)
    return linv.T @ linv, 2.0 * float(np.sum(np.log(np.diagonal(lw))))


def model_covariance(sample: SampleView, params: ModelParams) -> np.ndarray:
    """Dense M x M model covariance for one sample."""
    u, w = params.point.orth, params.point.spd
    phi = sample.design @ u
    cov = phi @ w @ phi.T + params.sigma2 * np.eye(phi.shape[0])
    return (cov + cov.T) / 2.0


def _fast_pass(data: LossData, params: ModelParams, want_grads: bool):
    u, w = params.point.orth, params.point.spd
    s2 = params.sigma2
    n_total = data.num_samples
    rank = u.shape[1]
    w_inv, logdet_w = _w_inverse(w)

    loss = 0.0
    acc_u = np.zeros_like(u) if want_grads else None
    acc_w = np.zeros((rank, rank)) if want_grads else None
    acc_s2 = 0.0
    for B, Y, yy in data.groups:
        m = B.shape[1]
        phi = B @ u                                        # (n, m, R)
        gram = np.einsum("nmr,nms->nrs", phi, phi, optimize=True)
        a_mat = s2 * w_inv + gram
        try:
            chol = np.linalg.cholesky(a_mat)
        except np.linalg.LinAlgError as exc:
            raise LossError("inner R x R system is numerically singular "
                            "(collapsing eigenvalue or vanishing sigma2)") from exc
        logdet_a = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1)
        phi_ty = np.einsum("nmr,nm->nr", phi, Y, optimize=True)
        alpha = np.linalg.solve(a_mat, phi_ty[..., None])[..., 0]
        quad = yy - np.einsum("nr,nr->n", phi_ty, alpha)
        loss += float(np.sum((m - rank) * np.log(s2) + logdet_w + logdet_a + quad / s2))

        if want_grads:
            c_mat = np.linalg.solve(a_mat, gram)           # A^{-1} Phi^T Phi
            h_mat = (phi - phi @ c_mat) / s2               # Sigma^{-1} Phi
            z = (Y - np.einsum("nmr,nr->nm", phi, alpha)) / s2
            t2 = np.einsum("nmr,nm->nr", phi, z, optimize=True)
            bt_h = np.einsum("nmk,nmr->kr", B, h_mat, optimize=True)
            b_z = np.einsum("nmk,nm->nk", B, z, optimize=True)
            acc_u += bt_h - b_z.T @ t2
            phit_h = np.einsum("nmr,nms->rs", phi, h_mat, optimize=True)
            acc_w += phit_h - t2.T @ t2
            trace_inv = (m - np.trace(c_mat, axis1=1, axis2=2)) / s2
            acc_s2 += float(np.sum(trace_inv - np.einsum("nm,nm->n", z, z)))

    loss /= n_total
    if not want_grads:
        return loss, None, None, None
    grad_u = (2.0 / n_total) * (acc_u @ w)
    grad_w = acc_w / n_total
    return loss, grad_u, (grad_w + grad_w.T) / 2.0, acc_s2 / n_total


def _dense_pass(data: LossData, params: ModelParams, want_grads: bool):
    u, w = params.point.orth, params.point.spd
    s2 = params.sigma2
    n_total = data.num_samples
    loss = 0.0
    acc_u = np.zeros_like(u)
    acc_w = np.zeros_like(w)
    acc_s2 = 0.0
    for B, Y, _ in data.groups:
        for b_n, y_n in zip(B, Y):
            phi = b_n @ u
            sigma = phi @ w @ phi.T + s2 * np.eye(b_n.shape[0])
            sign, logdet = np.linalg.slogdet(sigma)
            if sign <= 0:
                raise LossError("dense covariance not positive definite")
            sig_inv = np.linalg.inv(sigma)
            z = sig_inv @ y_n
            loss += logdet + float(y_n @ z)
            if want_grads:
                g_n = sig_inv - np.outer(z, z)
                acc_u += 2.0 * b_n.T @ g_n @ phi
                acc_w += u.T @ b_n.T @ g_n @ b_n @ u
                acc_s2 += float(np.trace(g_n))
    loss /= n_total
    if not want_grads:
        return loss, None, None, None
    grad_w = acc_w / n_total
    return loss, (acc_u @ w) / n_total, (grad_w + grad_w.T) / 2.0, acc_s2 / n_total


def logdet_loss(samples, params: ModelParams, dense: bool = False) -> float:
    """Average LogDet loss over all samples (constant term dropped)."""
    passes = _dense_pass if dense else _fast_pass
    return passes(_as_data(samples), params, want_grads=False)[0]


def loss_gradients_euclidean(samples, params: ModelParams, dense: bool = False):
    """Euclidean partial derivatives of the loss w.r.t. (U, W)."""
    _, grad_u, grad_w, _ = (_dense_pass if dense else _fast_pass)(
        _as_data(samples), params, want_grads=True
    )
    return grad_u, grad_w


def sigma2_gradient(samples, params: ModelParams, dense: bool = False) -> float:
    """Derivative of the loss w.r.t. the noise variance."""
    return (_dense_pass if dense else _fast_pass)(
        _as_data(samples), params, want_grads=True
    )[3]


def loss_value_and_grads(samples, params: ModelParams, dense: bool = False):
    """Loss with all three gradients in one pass: (value, dU, dW, dsigma2)."""
    return (_dense_pass if dense else _fast_pass)(_as_data(samples), params, want_grads=True)


def penalty_value(u_mat: np.ndarray, cfg: PenaltyConfig) -> float:
    """Roughness penalty eta * tr(U^T Gamma U)."""
    if cfg.eta == 0.0:
        return 0.0
    return float(cfg.eta * np.sum(u_mat * (cfg.gamma.gamma @ u_mat)))


def penalty_gradient(u_mat: np.ndarray, cfg: PenaltyConfig) -> np.ndarray:
    """Gradient of the roughness penalty: 2 eta Gamma U."""
    if cfg.eta == 0.0:
        return np.zeros_like(u_mat)
    return 2.0 * cfg.eta * (cfg.gamma.gamma @ u_mat)


def bregman_divergence(k_mat: np.ndarray, sigma: np.ndarray) -> float:
    """LogDet matrix Bregman divergence tr{-log K + log S + S^{-1}(K - S)}.

    Nonnegative, and zero exactly when the arguments coincide.
    """
    for name, mat in (("first", k_mat), ("second", sigma)):
        if np.max(np.abs(mat - mat.T)) > 1e-8 * max(1.0, np.abs(mat).max()):
            raise LossError(f"{name} argument is not symmetric")
        if np.linalg.eigvalsh(mat).min() <= 0:
            raise LossError(f"{name} argument is not positive definite")
    m = k_mat.shape[0]
    _, logdet_k = np.linalg.slogdet(k_mat)
    _, logdet_s = np.linalg.slogdet(sigma)
    return float(-logdet_k + logdet_s + np.trace(np.linalg.solve(sigma, k_mat)) - m)
