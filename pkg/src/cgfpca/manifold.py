"""Geometry of the product of a Stiefel manifold and the SPD cone.

Points are pairs (orth, spd): a K x R matrix with orthonormal columns and an
R x R symmetric positive definite matrix. The module provides the Riemannian
metric (Euclidean on the Stiefel part, affine-invariant on the SPD part),
tangent projection, vector transport, retraction, and small symmetric-matrix
helpers computed by eigendecomposition (R is small throughout).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORTH_TOL = 1e-8
SYM_TOL = 1e-10
REPROJECT_TOL = 1e-6


class ManifoldError(ValueError):
    """Point or tangent violates manifold membership beyond tolerance."""


def sym(a: np.ndarray) -> np.ndarray:
    return (a + a.T) / 2.0


def skew(a: np.ndarray) -> np.ndarray:
    return (a - a.T) / 2.0


def _eigh_apply(w_mat: np.ndarray, fn, min_eig: float | None = None) -> np.ndarray:
    vals, vecs = np.linalg.eigh(sym(w_mat))
    if min_eig is not None and vals.min() <= min_eig:
        raise ManifoldError(f"matrix is not positive definite (min eigenvalue {vals.min():.3e})")
    return (vecs * fn(vals)) @ vecs.T


def spd_sqrt(w_mat: np.ndarray) -> np.ndarray:
    """Symmetric square root of an SPD matrix."""
    return _eigh_apply(w_mat, np.sqrt, min_eig=0.0)


def spd_inv_sqrt(w_mat: np.ndarray) -> np.ndarray:
    """Symmetric inverse square root of an SPD matrix."""
    return _eigh_apply(w_mat, lambda v: 1.0 / np.sqrt(v), min_eig=0.0)


def spd_exp(s_mat: np.ndarray) -> np.ndarray:
    """Matrix exponential of a symmetric matrix."""
    if np.max(np.abs(s_mat - s_mat.T)) > 1e-8 * max(1.0, np.max(np.abs(s_mat))):
        raise ManifoldError("matrix exponential input is not symmetric")
    return _eigh_apply(s_mat, np.exp)


def qr_positive(v_mat: np.ndarray) -> np.ndarray:
    """Q factor of the thin QR factorization with positive diagonal R.

    The positive-diagonal convention makes the factorization (and hence the
    retraction built on it) unique and deterministic.
    """
    q, r = np.linalg.qr(v_mat)
    d = np.diagonal(r)
    if np.any(np.abs(d) < 1e-14 * max(1.0, np.abs(v_mat).max())):
        raise ManifoldError("rank-deficient matrix in QR retraction")
    return q * np.sign(d)


@dataclass(frozen=True)
class ProductPoint:
    """Point (orth, spd) on St(R, K) x S++(R)."""

    orth: np.ndarray
    spd: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.orth.shape

    def validate(self) -> "ProductPoint":
        k, r = self.orth.shape
        err = np.max(np.abs(self.orth.T @ self.orth - np.eye(r)))
        if err > ORTH_TOL:
            raise ManifoldError(f"columns not orthonormal (max deviation {err:.3e})")
        if np.max(np.abs(self.spd - self.spd.T)) > SYM_TOL:
            raise ManifoldError("spd part is not symmetric")
        if np.linalg.eigvalsh(self.spd).min() <= 0:
            raise ManifoldError("spd part is not positive definite")
        return self


@dataclass(frozen=True)
class ProductTangent:
    """Tangent vector (d_orth, d_spd) attached to a ProductPoint.

    d_orth satisfies the Stiefel tangency condition (orth^T d_orth skew);
    d_spd is symmetric.
    """

    d_orth: np.ndarray
    d_spd: np.ndarray
    base: ProductPoint

    def __mul__(self, t: float) -> "ProductTangent":
        return ProductTangent(t * self.d_orth, t * self.d_spd, self.base)

    __rmul__ = __mul__

    def __add__(self, other: "ProductTangent") -> "ProductTangent":
        return ProductTangent(self.d_orth + other.d_orth, self.d_spd + other.d_spd, self.base)

    def __neg__(self) -> "ProductTangent":
        return ProductTangent(-self.d_orth, -self.d_spd, self.base)


def zero_tangent(x: ProductPoint) -> ProductTangent:
    return ProductTangent(np.zeros_like(x.orth), np.zeros_like(x.spd), x)


def project_tangent(x: ProductPoint, z_orth: np.ndarray, z_spd: np.ndarray) -> ProductTangent:
    """Project an ambient pair onto the tangent space at x.

    Stiefel part: (I - U U^T) Z + U skew(U^T Z); SPD part: W sym(Z) W, the
    metric-adjoint projection that turns Euclidean partial derivatives into
    the Riemannian gradient under the affine-invariant metric.
    """
    u = x.orth
    utz = u.T @ z_orth
    d_orth = z_orth - u @ utz + u @ skew(utz)
    d_spd = x.spd @ sym(z_spd) @ x.spd
    return ProductTangent(d_orth, sym(d_spd), x)


def ensure_tangent(xi: ProductTangent) -> ProductTangent:
    """Re-project a mildly drifted tangent vector; error on gross violation.

    Drift below REPROJECT_TOL is repaired silently (long conjugate-gradient
    runs accumulate roundoff); anything larger is a usage error.
    """
    u = xi.base.orth
    t_err = np.max(np.abs(sym(u.T @ xi.d_orth)))
    s_err = np.max(np.abs(xi.d_spd - xi.d_spd.T))
    if max(t_err, s_err) <= ORTH_TOL:
        return xi
    if max(t_err, s_err) > REPROJECT_TOL:
        raise ManifoldError(f"tangent violation {max(t_err, s_err):.3e} exceeds repair threshold")
    utz = u.T @ xi.d_orth
    d_orth = xi.d_orth - u @ utz + u @ skew(utz)
    return ProductTangent(d_orth, sym(xi.d_spd), xi.base)


def metric(x: ProductPoint, xi: ProductTangent, eta: ProductTangent) -> float:
    """Riemannian inner product at x: Frobenius + affine-invariant terms."""
    w_inv = np.linalg.inv(x.spd)
    term_orth = float(np.sum(xi.d_orth * eta.d_orth))
    term_spd = float(np.trace(w_inv @ xi.d_spd @ w_inv @ eta.d_spd))
    return term_orth + term_spd


def norm(x: ProductPoint, xi: ProductTangent) -> float:
    return float(np.sqrt(max(metric(x, xi, xi), 0.0)))


def transport(x: ProductPoint, y: ProductPoint, xi: ProductTangent) -> ProductTangent:
    """Move a tangent vector at x into the tangent space at y.

    Stiefel part by tangent projection at the destination. SPD part by the
    congruence map A xi A with A = W^{1/2} (W^{-1/2} W~ W^{-1/2})^{1/2} W^{1/2};
    symmetric by construction, hence tangent at the destination.
    """
    u_new = y.orth
    utz = u_new.T @ xi.d_orth
    d_orth = xi.d_orth - u_new @ utz + u_new @ skew(utz)

    w_half = spd_sqrt(x.spd)
    w_inv_half = spd_inv_sqrt(x.spd)
    inner = spd_sqrt(sym(w_inv_half @ y.spd @ w_inv_half))
    a_map = w_half @ inner @ w_half
    d_spd = sym(a_map @ xi.d_spd @ a_map)
    return ProductTangent(d_orth, d_spd, y)


def retract(x: ProductPoint, xi: ProductTangent) -> ProductPoint:
    """Map a tangent step back onto the manifold.

    Stiefel part via sign-fixed QR of U + step; SPD part via the exponential
    map W^{1/2} exp(W^{-1/2} step W^{-1/2}) W^{1/2}, re-symmetrized to stop
    roundoff drift.
    """
    orth_new = qr_positive(x.orth + xi.d_orth)
    w_half = spd_sqrt(x.spd)
    w_inv_half = spd_inv_sqrt(x.spd)
    inner = sym(w_inv_half @ xi.d_spd @ w_inv_half)
    spd_new = w_half @ spd_exp(inner) @ w_half
    return ProductPoint(orth_new, sym(spd_new))
