"""Angular finite elements and assembly of the quadratic pencil (B0, B1, B2).

Unknowns are ordered as in the semi-discrete ansatz ``u = BF(phi)^T U(rho)``:
the first ``n_dof`` entries of ``U`` are nodal values of ``u_1``, the next
``n_dof`` those of ``u_2``. For quadratic elements the degrees of freedom
alternate vertex, midpoint, vertex, ... along the angle.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError
from .geometry import BoundaryShape, DomainSpec
from .material import PiecewiseMaterial, psi_matrices

GAUSS_POINTS = {1: 8, 2: 10}


def _ref_basis(order: int, xi: np.ndarray):
    """Reference Lagrange basis on [0, 1] and its xi-derivative."""
    xi = np.asarray(xi, dtype=float)
    if order == 1:
        val = np.stack([1.0 - xi, xi], axis=-1)
        der = np.stack([-np.ones_like(xi), np.ones_like(xi)], axis=-1)
    elif order == 2:
        val = np.stack([(1 - xi) * (1 - 2 * xi), 4 * xi * (1 - xi), xi * (2 * xi - 1)], axis=-1)
        der = np.stack([4 * xi - 3, 4 - 8 * xi, 4 * xi - 1], axis=-1)
    else:
        raise ConfigurationError(f"element order must be 1 or 2, got {order!r}")
    return val, der


@dataclass(frozen=True)
class AngularMesh:
    """Partition of the angular range with P1 or P2 Lagrange elements."""

    nodes: np.ndarray
    order: int
    periodic: bool

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if self.order not in (1, 2):
            raise ConfigurationError(f"element order must be 1 or 2, got {self.order!r}")
        if nodes.ndim != 1 or nodes.size < 2 or np.any(np.diff(nodes) <= 0):
            raise ConfigurationError("mesh nodes must be strictly increasing")

    @property
    def M(self) -> int:
        return self.nodes.size - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def h(self) -> float:
        return float(self.widths.max())

    @property
    def n_dof(self) -> int:
        n = self.order * self.M
        return n if self.periodic else n + 1

    @property
    def size(self) -> int:
        """Size of the pencil matrices (two displacement components)."""
        return 2 * self.n_dof

    @cached_property
    def connectivity(self) -> np.ndarray:
        p = self.order
        conn = p * np.arange(self.M)[:, None] + np.arange(p + 1)[None, :]
        if self.periodic:
            conn = conn % self.n_dof
        return conn

    @cached_property
    def dof_positions(self) -> np.ndarray:
        if self.order == 1:
            pos = self.nodes
        else:
            mids = 0.5 * (self.nodes[:-1] + self.nodes[1:])
            pos = np.empty(2 * self.M + 1)
            pos[0::2] = self.nodes
            pos[1::2] = mids
        return pos[:-1] if self.periodic else pos

    def locate(self, phi):
        """Element index and reference coordinate for each angle."""
        phi = np.asarray(phi, dtype=float)
        tol = 1e-12 * (1.0 + abs(self.nodes[-1]))
        if np.any(phi < self.nodes[0] - tol) or np.any(phi > self.nodes[-1] + tol):
            from .errors import DomainError

            raise DomainError(f"angles outside mesh range [{self.nodes[0]}, {self.nodes[-1]}]")
        elem = np.clip(np.searchsorted(self.nodes, phi, side="right") - 1, 0, self.M - 1)
        xi = (phi - self.nodes[elem]) / self.widths[elem]
        return elem, np.clip(xi, 0.0, 1.0)

    def local_basis(self, phi):
        """Return (elem, values, phi-derivatives) for the local shape functions."""
        elem, xi = self.locate(phi)
        val, der = _ref_basis(self.order, xi)
        return elem, val, der / self.widths[elem][..., None]

    def basis_matrix(self, phi, derivative: bool = False) -> sp.csr_matrix:
        """Sparse matrix ``S`` with ``S[i, j] = BF_j(phi_i)`` (or its derivative)."""
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        elem, val, der = self.local_basis(phi)
        data = der if derivative else val
        rows = np.repeat(np.arange(phi.size), self.order + 1)
        cols = self.connectivity[elem].reshape(-1)
        return sp.csr_matrix(
            (data.reshape(-1), (rows, cols)), shape=(phi.size, self.n_dof)
        )


def basis_eval(mesh: AngularMesh, phi):
    """Dense values and derivatives of all scalar basis functions at ``phi``.

    Returns arrays of shape ``(len(phi), n_dof)``.
    """
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    return (
        mesh.basis_matrix(phi).toarray(),
        mesh.basis_matrix(phi, derivative=True).toarray(),
    )


def build_mesh(domain: DomainSpec, M: int, order: int = 1, extra_nodes=()) -> AngularMesh:
    """Near-uniform mesh with ``M`` elements honouring all required nodes.

    Required nodes are the range ends, the material interfaces, the boundary
    corners and ``extra_nodes``. Elements are distributed over the gaps
    between required nodes in proportion to gap length (largest remainder,
    at least one per gap) and are uniform inside each gap, so no element is
    wider than twice the uniform width.
    """
    if order not in (1, 2):
        raise ConfigurationError(f"element order must be 1 or 2, got {order!r}")
    shape = domain.boundary
    if M < domain.K:
        raise ConfigurationError(f"M={M} is smaller than the number of sectors K={domain.K}")
    req = np.concatenate(
        [
            [shape.phi_min, shape.phi_max],
            np.asarray(domain.interfaces, dtype=float),
            shape.breakpoints,
            np.asarray(extra_nodes, dtype=float).reshape(-1),
        ]
    )
    req = np.sort(req)
    keep = np.concatenate([[True], np.diff(req) > 1e-12 * shape.span])
    req = req[keep]
    req[-1] = shape.phi_max
    gaps = np.diff(req)
    if gaps.size > M:
        raise ConfigurationError(f"M={M} elements cannot resolve {gaps.size} required gaps")
    ideal = M * gaps / gaps.sum()
    counts = np.maximum(np.floor(ideal).astype(int), 1)
    while counts.sum() > M:
        # remove from the gap whose elements would stay largest in count
        cand = np.where(counts > 1)[0]
        j = cand[np.argmin((ideal - counts)[cand])]
        counts[j] -= 1
    while counts.sum() < M:
        j = np.argmax(ideal - counts)
        counts[j] += 1
    pieces = [np.linspace(a, b, n + 1)[:-1] for a, b, n in zip(req[:-1], req[1:], counts)]
    nodes = np.concatenate(pieces + [[shape.phi_max]])
    return AngularMesh(nodes, order, shape.periodic)


@dataclass(frozen=True)
class SystemMatrices:
    """The pencil of the radial ODE system ``B2 U'' + B1 U' + B0 U = 0``."""

    B0: np.ndarray
    B1: np.ndarray
    B2: np.ndarray

    @property
    def size(self) -> int:
        return self.B2.shape[0]

    def diagnostics(self) -> dict:
        """Structural checks used by tests and reports."""
        eig2 = np.linalg.eigvalsh(self.B2)
        eig0 = np.linalg.eigvalsh(self.B0)
        return {
            "B2_sym": float(np.max(np.abs(self.B2 - self.B2.T))),
            "B0_sym": float(np.max(np.abs(self.B0 - self.B0.T))),
            "B1_antisym": float(np.max(np.abs(self.B1 + self.B1.T))),
            "B2_min_eig": float(eig2[0]),
            "B0_max_eig": float(eig0[-1]),
            "B0_scale": float(np.max(np.abs(eig0))),
        }


def _quadrature(mesh: AngularMesh, n_gauss: int | None):
    nq = n_gauss or GAUSS_POINTS[mesh.order]
    xg, wg = np.polynomial.legendre.leggauss(nq)
    xi = 0.5 * (xg + 1.0)
    w = 0.5 * wg
    phi_q = mesh.nodes[:-1, None] + mesh.widths[:, None] * xi[None, :]
    w_q = mesh.widths[:, None] * w[None, :]
    return xi, phi_q, w_q


def _scatter(n: int, conn: np.ndarray, local: np.ndarray) -> np.ndarray:
    """Add element blocks ``local[e, c, a, d, b]`` into a dense (2n, 2n) matrix."""
    ne, nloc = conn.shape
    idx = (np.arange(2)[None, :, None] * n + conn[:, None, :]).reshape(ne, 2 * nloc)
    rows = np.broadcast_to(idx[:, :, None], (ne, 2 * nloc, 2 * nloc))
    cols = np.broadcast_to(idx[:, None, :], (ne, 2 * nloc, 2 * nloc))
    flat = (rows * (2 * n) + cols).reshape(-1)
    out = np.bincount(flat, weights=local.reshape(-1), minlength=(2 * n) ** 2)
    return out.reshape(2 * n, 2 * n)


def element_coefficients(mesh: AngularMesh, material: PiecewiseMaterial) -> np.ndarray:
    """Tensor coefficients (M, 6) of the sector containing each element."""
    material.check_alignment(mesh.nodes)
    mids = 0.5 * (mesh.nodes[:-1] + mesh.nodes[1:])
    return material.coefficients_at(mids)


def assemble(
    mesh: AngularMesh,
    shape: BoundaryShape,
    material: PiecewiseMaterial,
    n_gauss: int | None = None,
) -> SystemMatrices:
    """Assemble B0, B1, B2 by elementwise Gauss-Legendre quadrature."""
    coeffs = element_coefficients(mesh, material)
    xi, phi_q, w_q = _quadrature(mesh, n_gauss)
    r = shape.radius(phi_q)
    rp = shape.radius_prime(phi_q)
    psi0, psi1, psi2 = psi_matrices(coeffs[:, None, :], r, rp, phi_q)

    N, dNref = _ref_basis(mesh.order, xi)  # (nq, nloc)
    dN = dNref[None, :, :] / mesh.widths[:, None, None]  # (M, nq, nloc)

    # local[e, c, a, d, b]
    b2 = np.einsum("eq,eqcd,qa,qb->ecadb", w_q, psi2, N, N, optimize=True)
    cc = np.einsum("eq,eqcd,qa,eqb->ecadb", w_q, psi1, N, dN, optimize=True)
    kk = np.einsum("eq,eqcd,eqa,eqb->ecadb", w_q, psi0, dN, dN, optimize=True)

    n = mesh.n_dof
    conn = mesh.connectivity
    B2 = _scatter(n, conn, b2)
    C = _scatter(n, conn, cc)
    K = _scatter(n, conn, kk)
    B2 = 0.5 * (B2 + B2.T)
    B0 = -0.5 * (K + K.T)
    B1 = C - C.T
    return SystemMatrices(B0=B0, B1=B1, B2=B2)


def load_vector(mesh: AngularMesh, shape: BoundaryShape, body_force, n_gauss: int | None = None) -> np.ndarray:
    """Projection ``G = int BF(phi) p(phi) r(phi)^2 dphi`` of an angular body force.

    ``body_force`` maps an array of angles to an array ``(2, n)`` holding the
    Cartesian force components; forces constant along rays give a radial
    forcing proportional to ``exp(2 rho)``.
    """
    xi, phi_q, w_q = _quadrature(mesh, n_gauss)
    p = np.asarray(body_force(phi_q.reshape(-1)), dtype=float).reshape(2, *phi_q.shape)
    r2 = shape.radius(phi_q) ** 2
    N, _ = _ref_basis(mesh.order, xi)
    n = mesh.n_dof
    G = np.zeros(2 * n)
    for c in range(2):
        loc = np.einsum("eq,eq,qa->ea", w_q, p[c] * r2, N)
        G[c * n : (c + 1) * n] = np.bincount(
            mesh.connectivity.reshape(-1), weights=loc.reshape(-1), minlength=n
        )
    return G
