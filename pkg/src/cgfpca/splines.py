"""Orthonormalized B-spline bases on a compact interval.

Provides clamped B-spline bases with equally spaced interior knots, exact
Gram matrices via per-span Gauss-Legendre quadrature, a Cholesky-based
orthonormalizing transform, and roughness-penalty matrices built from
derivative Grams.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import BSpline, splev


class SplineError(ValueError):
    """Invalid basis specification or evaluation request."""


def make_knots(domain, order, num_interior_knots):
    """Build a clamped knot vector with equally spaced interior knots.

    Parameters
    ----------
    domain : tuple of float
        Interval (a, b) with a < b.
    order : int
        Spline order (polynomial degree + 1), at least 2.
    num_interior_knots : int
        Number of interior knots, at least 0.

    Returns
    -------
    ndarray
        Nondecreasing knot vector of length 2*order + num_interior_knots;
        the first and last `order` entries equal a and b respectively.
    """
    a, b = float(domain[0]), float(domain[1])
    if not a < b:
        raise SplineError(f"degenerate domain [{a}, {b}]")
    if order < 2:
        raise SplineError(f"order must be >= 2, got {order}")
    if num_interior_knots < 0:
        raise SplineError(f"num_interior_knots must be >= 0, got {num_interior_knots}")
    interior = np.linspace(a, b, num_interior_knots + 2)[1:-1]
    return np.concatenate([np.full(order, a), interior, np.full(order, b)])


@dataclass(frozen=True)
class BasisSpec:
    """Clamped B-spline basis specification.

    Degrees of freedom K = num_interior_knots + order.
    """

    domain: tuple[float, float]
    order: int = 4
    num_interior_knots: int = 0
    knots: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        knots = make_knots(self.domain, self.order, self.num_interior_knots)
        object.__setattr__(self, "domain", (float(self.domain[0]), float(self.domain[1])))
        object.__setattr__(self, "knots", knots)

    @property
    def dof(self) -> int:
        return self.num_interior_knots + self.order

    def _check_times(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        a, b = self.domain
        if u.size and (u.min() < a or u.max() > b):
            raise SplineError(f"evaluation point outside domain [{a}, {b}]")
        return u


def eval_raw_basis(spec: BasisSpec, u: float) -> np.ndarray:
    """Evaluate all K raw B-spline basis functions at a single point."""
    pts = spec._check_times(u)
    row = BSpline.design_matrix(pts, spec.knots, spec.order - 1).toarray()
    return row[0] if np.isscalar(u) or np.ndim(u) == 0 else row


def _raw_design(spec: BasisSpec, times: np.ndarray, deriv: int = 0) -> np.ndarray:
    """Dense M x K matrix of raw basis values (or derivatives) at `times`."""
    times = spec._check_times(times)
    if times.size == 0:
        return np.zeros((0, spec.dof))
    if deriv == 0:
        return BSpline.design_matrix(times, spec.knots, spec.order - 1).toarray()
    # splev per unit coefficient; only used off the hot path (quadrature setup)
    cols = [
        splev(times, (spec.knots, np.eye(spec.dof)[k], spec.order - 1), der=deriv)
        for k in range(spec.dof)
    ]
    return np.asarray(cols).T


def _span_quadrature(spec: BasisSpec):
    """Gauss-Legendre nodes/weights per knot span, `order` nodes per span.

    Exact for products of basis functions (and their derivatives), which are
    piecewise polynomials of degree <= 2*(order-1) per span.
    """
    nodes, weights = leggauss(spec.order)
    a, b = spec.domain
    edges = np.unique(spec.knots)
    lo, hi = edges[:-1], edges[1:]
    half = (hi - lo) / 2.0
    mid = (hi + lo) / 2.0
    pts = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    wts = (half[:, None] * weights[None, :]).ravel()
    return np.clip(pts, a, b), wts


def gram_matrix(spec: BasisSpec, deriv: int = 0) -> np.ndarray:
    """Exact K x K Gram matrix of the raw basis (or its `deriv`-th derivative)."""
    pts, wts = _span_quadrature(spec)
    B = _raw_design(spec, pts, deriv=deriv)
    G = (B * wts[:, None]).T @ B
    return (G + G.T) / 2.0


@dataclass(frozen=True)
class OrthonormalBasis:
    """B-spline basis transformed so that the L2 Gram is the identity.

    The orthonormalized basis is ``transform @ raw_basis(u)``, with
    `transform` the inverse Cholesky factor of the raw Gram matrix.
    """

    spec: BasisSpec
    transform: np.ndarray
    gram_tolerance: float = 1e-10

    @property
    def dof(self) -> int:
        return self.spec.dof

    @property
    def domain(self) -> tuple[float, float]:
        return self.spec.domain

    def to_dict(self) -> dict:
        a, b = self.spec.domain
        return {
            "domain": [a, b],
            "order": self.spec.order,
            "interior_knots": int(self.spec.num_interior_knots),
            "transform": self.transform.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OrthonormalBasis":
        spec = BasisSpec(tuple(d["domain"]), d["order"], d["interior_knots"])
        return cls(spec=spec, transform=np.asarray(d["transform"], dtype=float))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "OrthonormalBasis":
        return cls.from_dict(json.loads(s))


def orthonormalize(spec: BasisSpec) -> OrthonormalBasis:
    """Orthonormalize the raw basis via the Cholesky factor of its Gram.

    With G = L L^T, the transform T = L^{-1} is lower triangular and the
    transformed basis satisfies ``int b(u) b(u)^T du = I``.
    """
    G = gram_matrix(spec)
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise SplineError("raw Gram matrix is not positive definite; "
                          "basis specification is ill-posed") from exc
    K = spec.dof
    from scipy.linalg import solve_triangular

    T = solve_triangular(L, np.eye(K), lower=True)
    return OrthonormalBasis(spec=spec, transform=T)


@dataclass(frozen=True)
class PenaltyMatrix:
    """Roughness penalty Gram: integral of d-th derivative outer products."""

    derivative_order: int
    gamma: np.ndarray


def penalty_matrix(basis: OrthonormalBasis, d: int = 2) -> PenaltyMatrix:
    """Penalty matrix of the orthonormalized basis for the d-th derivative.

    Returns T @ G_d @ T^T where G_d is the raw derivative Gram; symmetric
    positive semidefinite by construction.
    """
    order = basis.spec.order
    if not 1 <= d <= order - 1:
        raise SplineError(f"derivative order must be in [1, {order - 1}], got {d}")
    G_raw = gram_matrix(basis.spec, deriv=d)
    gamma = basis.transform @ G_raw @ basis.transform.T
    return PenaltyMatrix(derivative_order=d, gamma=(gamma + gamma.T) / 2.0)


def design_matrix(basis: OrthonormalBasis, times) -> np.ndarray:
    """M x K design matrix of the orthonormalized basis at `times`."""
    B_raw = _raw_design(basis.spec, np.asarray(times, dtype=float))
    return B_raw @ basis.transform.T
