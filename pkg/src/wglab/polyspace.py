"""Scalar, edge and vector polynomial bases plus quadrature rules.

Scalar bases are scaled centered monomials ((x-x_T)/h_T)^a ((y-y_T)/h_T)^b
ordered by total degree and then by descending x-exponent; edge bases are
centered arclength monomials ((t - |e|/2)/|e|)^q along the global edge
orientation.  Vector gradient spaces are either both components of P_m or
the Raviart-Thomas enrichment of P_m by the radial homogeneous fields.

Quadrature rules live on reference domains (unit square, unit right
triangle, unit interval) and are mapped affinely per element or edge.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .mesh import Element, EdgeGeometry, RECTANGULAR

FULL_POLY = "P"
RAVIART_THOMAS = "RT"

MAX_EXACTNESS = 40


@dataclass(frozen=True)
class GradientSpace:
    """Descriptor of the local vector space used for weak gradients."""

    family: str
    degree: int

    def __post_init__(self):
        if self.family not in (FULL_POLY, RAVIART_THOMAS):
            raise ValueError(f"unknown gradient family {self.family!r}")
        if self.degree < 0:
            raise ValueError("gradient degree must be nonnegative")

    @property
    def dim(self) -> int:
        m = self.degree
        d = (m + 1) * (m + 2)
        return d if self.family == FULL_POLY else d + (m + 1)

    @property
    def poly_degree(self) -> int:
        """Largest polynomial degree appearing in a component."""
        return self.degree if self.family == FULL_POLY else self.degree + 1

    def __str__(self) -> str:
        return f"{self.family}:{self.degree}"


def parse_gradient_space(text: str) -> GradientSpace:
    """Parse ``"P:2"`` / ``"RT:0"`` descriptors."""
    try:
        family, degree = text.split(":")
        return GradientSpace(family, int(degree))
    except (ValueError, TypeError) as err:
        raise ValueError(f"bad gradient space {text!r}; expected P:<m> or RT:<m>") from err


def dim_scalar(k: int) -> int:
    return (k + 1) * (k + 2) // 2


@lru_cache(maxsize=None)
def scalar_exponents(k: int) -> np.ndarray:
    """(dim, 2) exponent table, total degree then descending x-exponent."""
    exps = [(d - b, b) for d in range(k + 1) for b in range(d + 1)]
    return np.array(exps, dtype=np.int64)


def _powers(t: np.ndarray, kmax: int) -> np.ndarray:
    # t**q for q = 0..kmax, avoiding 0**0 pitfalls; shape (..., kmax+1)
    out = np.ones(t.shape + (kmax + 1,))
    for q in range(1, kmax + 1):
        out[..., q] = out[..., q - 1] * t
    return out


def eval_scalar_basis_many(element: Element, k: int, points: np.ndarray) -> np.ndarray:
    """Values of the dim P_k scaled monomial basis at ``points`` (n, 2)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    X = (pts[:, 0] - element.centroid[0]) / element.diameter
    Y = (pts[:, 1] - element.centroid[1]) / element.diameter
    exps = scalar_exponents(k)
    px, py = _powers(X, k), _powers(Y, k)
    return px[:, exps[:, 0]] * py[:, exps[:, 1]]


def grad_scalar_basis_many(element: Element, k: int, points: np.ndarray) -> np.ndarray:
    """Gradients of the P_k basis, shape (n, dim, 2)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    h = element.diameter
    X = (pts[:, 0] - element.centroid[0]) / h
    Y = (pts[:, 1] - element.centroid[1]) / h
    exps = scalar_exponents(k)
    px, py = _powers(X, k), _powers(Y, k)
    a, b = exps[:, 0], exps[:, 1]
    gx = np.where(a > 0, a * px[:, np.maximum(a - 1, 0)] * py[:, b], 0.0) / h
    gy = np.where(b > 0, b * px[:, a] * py[:, np.maximum(b - 1, 0)], 0.0) / h
    return np.stack([gx, gy], axis=-1)


def eval_scalar_basis(element: Element, k: int, point) -> np.ndarray:
    return eval_scalar_basis_many(element, k, np.asarray(point, dtype=float)[None, :])[0]


def eval_edge_basis_tau(s: int, tau: np.ndarray) -> np.ndarray:
    """Edge basis ((t - |e|/2)/|e|)^q in the unit parameter tau = t/|e|."""
    return _powers(np.asarray(tau, dtype=float) - 0.5, s)


def eval_edge_basis(edge: EdgeGeometry, s: int, point) -> np.ndarray:
    """Edge basis values at a physical point lying on the edge."""
    p = np.asarray(point, dtype=float)
    t = (p - edge.start) @ edge.direction
    off = np.linalg.norm(p - (edge.start + t * edge.direction))
    if off > 1e-12 * max(1.0, edge.length) or t < -1e-12 or t > edge.length + 1e-12:
        raise ValueError(f"point {p} does not lie on the edge")
    return eval_edge_basis_tau(s, np.array([t / edge.length]))[0]


def eval_gradient_basis_many(element: Element, desc: GradientSpace, points: np.ndarray) -> np.ndarray:
    """Vector basis values, shape (n, dim, 2)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m = desc.degree
    phi = eval_scalar_basis_many(element, m, pts)
    n, dim_m = phi.shape
    vals = np.zeros((n, desc.dim, 2))
    vals[:, :dim_m, 0] = phi
    vals[:, dim_m:2 * dim_m, 1] = phi
    if desc.family == RAVIART_THOMAS:
        X = (pts[:, 0] - element.centroid[0]) / element.diameter
        Y = (pts[:, 1] - element.centroid[1]) / element.diameter
        homog = phi[:, dim_m - (m + 1):]  # exact-degree-m tail of the P_m basis
        vals[:, 2 * dim_m:, 0] = X[:, None] * homog
        vals[:, 2 * dim_m:, 1] = Y[:, None] * homog
    return vals


def div_gradient_basis_many(element: Element, desc: GradientSpace, points: np.ndarray) -> np.ndarray:
    """Analytic divergences of the vector basis, shape (n, dim)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    m = desc.degree
    grad = grad_scalar_basis_many(element, m, pts)
    n, dim_m = grad.shape[:2]
    div = np.zeros((n, desc.dim))
    div[:, :dim_m] = grad[:, :, 0]
    div[:, dim_m:2 * dim_m] = grad[:, :, 1]
    if desc.family == RAVIART_THOMAS:
        # div(x~ p) = (2 + m) p / h_T for p homogeneous of degree m
        phi = eval_scalar_basis_many(element, m, pts)
        homog = phi[:, dim_m - (m + 1):]
        div[:, 2 * dim_m:] = (2 + m) / element.diameter * homog
    return div


def eval_gradient_basis(element: Element, desc: GradientSpace, point) -> np.ndarray:
    return eval_gradient_basis_many(element, desc, np.asarray(point, dtype=float)[None, :])[0]


def divergence_gradient_basis(element: Element, desc: GradientSpace, point) -> np.ndarray:
    return div_gradient_basis_many(element, desc, np.asarray(point, dtype=float)[None, :])[0]


# -- quadrature -------------------------------------------------------------

@dataclass(frozen=True)
class QuadRule:
    """Reference-domain rule; weights sum to the reference measure."""

    points: np.ndarray
    weights: np.ndarray
    exactness: int


def _check_exactness(exactness: int) -> None:
    if not 0 <= exactness <= MAX_EXACTNESS:
        raise ValueError(f"quadrature exactness {exactness} outside [0, {MAX_EXACTNESS}]")


@lru_cache(maxsize=None)
def quad_edge(exactness: int) -> QuadRule:
    """Gauss-Legendre rule on [0, 1] exact to the requested degree."""
    _check_exactness(exactness)
    npts = max(1, (exactness + 2) // 2)
    x, w = roots_legendre(npts)
    return QuadRule(points=(x + 1) / 2, weights=w / 2, exactness=exactness)


@lru_cache(maxsize=None)
def quad_element(kind: str, exactness: int) -> QuadRule:
    """Reference rule: tensor Gauss on [0,1]^2 or a collapsed rule on the
    unit right triangle (Gauss-Jacobi in the collapsed direction)."""
    _check_exactness(exactness)
    npts = max(1, (exactness + 2) // 2)
    if kind == RECTANGULAR:
        x, w = roots_legendre(npts)
        x, w = (x + 1) / 2, w / 2
        X, Y = np.meshgrid(x, x, indexing="ij")
        W = np.multiply.outer(w, w)
        return QuadRule(
            points=np.column_stack([X.ravel(), Y.ravel()]),
            weights=W.ravel(),
            exactness=exactness,
        )
    xj, wj = roots_jacobi(npts, 1, 0)
    xi, wi = (xj + 1) / 2, wj / 4          # absorbs the (1 - xi) area factor
    y, wy = roots_legendre(npts)
    y, wy = (y + 1) / 2, wy / 2
    XI, ETA = np.meshgrid(xi, y, indexing="ij")
    W = np.multiply.outer(wi, wy)
    pts = np.column_stack([XI.ravel(), (ETA * (1 - XI)).ravel()])
    return QuadRule(points=pts, weights=W.ravel(), exactness=exactness)


def map_rule_to_element(rule: QuadRule, element: Element):
    """Physical points and weights of a reference rule on ``element``."""
    v = element.vertices
    ref = rule.points
    if element.kind == RECTANGULAR:
        pts = v[0] + np.outer(ref[:, 0], v[1] - v[0]) + np.outer(ref[:, 1], v[3] - v[0])
        jac = element.area
    else:
        pts = v[0] + np.outer(ref[:, 0], v[1] - v[0]) + np.outer(ref[:, 1], v[2] - v[0])
        jac = 2 * element.area
    return pts, rule.weights * jac


def map_rule_to_edge(rule: QuadRule, edge: EdgeGeometry):
    """Physical points, weights and arclengths of an edge rule."""
    t = rule.points * edge.length
    pts = edge.start + np.outer(t, edge.direction)
    return pts, rule.weights * edge.length, t


# -- exactness policy --------------------------------------------------------

def operator_exactness(l: int, s: int, desc: GradientSpace) -> tuple[int, int]:
    """(element, edge) quadrature degrees for assembling the local operators."""
    mg = desc.poly_degree
    elem = 2 * (max(l, mg) + 1)
    edge = max(2 * max(s, mg) + 1, l + s)
    return elem, edge


def data_exactness(l: int, s: int) -> tuple[int, int]:
    """(element, edge) quadrature degrees for data terms and error norms.

    The floor keeps projections of smooth non-polynomial data accurate to
    ~1e-12 relative on the coarsest study meshes, so projection-based
    identities are not quadrature limited.
    """
    return max(2 * (l + 3), 12), max(2 * (s + 3) + 1, 13)
