"""Elastic coefficient tensors and the curvilinear coefficient matrices.

Coefficients follow the Voigt-like convention used throughout the package::

    (s11, s22, s12) = A @ (e11, e22, 2*e12)

with ``A = [[a11, a12, a13], [a12, a22, a23], [a13, a23, a33]]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AssemblyError, ConfigurationError, InvalidMaterial

COEFF_NAMES = ("a11", "a22", "a33", "a12", "a13", "a23")


def symmetric_eigvals3(mat: np.ndarray) -> np.ndarray:
    """Closed-form eigenvalues of a symmetric 3x3 matrix, ascending.

    Trigonometric solution of the characteristic cubic; no iteration.
    """
    a = np.asarray(mat, dtype=float)
    p1 = a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2
    q = np.trace(a) / 3.0
    if p1 == 0.0:
        return np.sort(np.diag(a))
    p2 = (a[0, 0] - q) ** 2 + (a[1, 1] - q) ** 2 + (a[2, 2] - q) ** 2 + 2.0 * p1
    p = np.sqrt(p2 / 6.0)
    b = (a - q * np.eye(3)) / p
    r = np.clip(np.linalg.det(b) / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    e1 = q + 2.0 * p * np.cos(phi)
    e3 = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    e2 = 3.0 * q - e1 - e3
    return np.array([e3, e2, e1])


@dataclass(frozen=True)
class AnisoTensor:
    """Symmetric positive definite plane elasticity tensor."""

    a11: float
    a22: float
    a33: float
    a12: float
    a13: float
    a23: float

    def __post_init__(self):
        vals = self.as_vector()
        if not np.all(np.isfinite(vals)):
            raise InvalidMaterial(f"non-finite coefficients {tuple(vals)}")
        eig = symmetric_eigvals3(self.matrix)
        tol = 1e-12 * max(abs(np.trace(self.matrix)), 1e-300)
        if eig[0] <= tol:
            raise InvalidMaterial(
                f"tensor {tuple(vals)} is not positive definite (min eigenvalue {eig[0]:.3e})"
            )

    @classmethod
    def from_vector(cls, v: Sequence[float]) -> "AnisoTensor":
        v = [float(x) for x in v]
        if len(v) != 6:
            raise ConfigurationError(f"expected 6 coefficients [a11,a22,a33,a12,a13,a23], got {len(v)}")
        return cls(*v)

    @classmethod
    def from_matrix(cls, m) -> "AnisoTensor":
        m = np.asarray(m, dtype=float)
        if m.shape != (3, 3) or not np.allclose(m, m.T, rtol=0, atol=1e-14 * np.abs(m).max()):
            raise InvalidMaterial("a 3x3 symmetric matrix is required")
        return cls(m[0, 0], m[1, 1], m[2, 2], m[0, 1], m[0, 2], m[1, 2])

    def as_vector(self) -> np.ndarray:
        return np.array([self.a11, self.a22, self.a33, self.a12, self.a13, self.a23])

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.a11, self.a12, self.a13],
                [self.a12, self.a22, self.a23],
                [self.a13, self.a23, self.a33],
            ]
        )

    def scaled(self, c: float) -> "AnisoTensor":
        return AnisoTensor.from_vector(c * self.as_vector())


def isotropic_tensor(lam: float, mu: float) -> AnisoTensor:
    """Tensor of an isotropic material with Lame constants ``lam`` and ``mu``."""
    if not mu > 0:
        raise InvalidMaterial(f"shear modulus must be positive, got mu={mu!r}")
    if lam < 0:
        raise InvalidMaterial(f"lambda must be nonnegative, got {lam!r}")
    return AnisoTensor(2 * mu + lam, 2 * mu + lam, mu, lam, 0.0, 0.0)


def stress_of_strain(t: AnisoTensor, e11, e22, e12):
    """Return ``(s11, s22, s12)`` for strain components (tensor shear ``e12``)."""
    e11, e22, e12 = (np.asarray(v, dtype=float) for v in (e11, e22, e12))
    g = 2.0 * e12
    return (
        t.a11 * e11 + t.a12 * e22 + t.a13 * g,
        t.a12 * e11 + t.a22 * e22 + t.a23 * g,
        t.a13 * e11 + t.a23 * e22 + t.a33 * g,
    )


def _coeffs(t) -> tuple[np.ndarray, ...]:
    if isinstance(t, AnisoTensor):
        return tuple(np.asarray(x) for x in t.as_vector())
    arr = np.asarray(t, dtype=float)
    return tuple(arr[..., i] for i in range(6))


def psi_matrices(t, r, rp, phi):
    """Coefficient matrices of the curvilinear variational form.

    Parameters
    ----------
    t : AnisoTensor or array_like (..., 6)
        Tensor(s); arrays broadcast against ``r``, ``rp`` and ``phi``.
    r, rp, phi : array_like
        Boundary radius, its derivative and the angle.

    Returns
    -------
    psi0, psi1, psi2 : ndarray, shape (..., 2, 2)
        ``psi2`` multiplies (d/drho, d/drho), ``psi1`` (d/drho, d/dphi)
        and ``psi0`` (d/dphi, d/dphi).
    """
    a11, a22, a33, a12, a13, a23 = _coeffs(t)
    r, rp, phi = (np.asarray(v, dtype=float) for v in (r, rp, phi))
    s, c = np.sin(phi), np.cos(phi)
    P = rp * s + r * c
    Q = -rp * c + r * s
    shape = np.broadcast(a11, r, rp, phi).shape

    psi2 = np.empty(shape + (2, 2))
    inv_r2 = 1.0 / (r * r)
    psi2[..., 0, 0] = (a11 * P * P + 2 * a13 * P * Q + a33 * Q * Q) * inv_r2
    psi2[..., 0, 1] = (a13 * P * P + (a33 + a12) * P * Q + a23 * Q * Q) * inv_r2
    psi2[..., 1, 0] = psi2[..., 0, 1]
    psi2[..., 1, 1] = (a33 * P * P + 2 * a23 * P * Q + a22 * Q * Q) * inv_r2

    psi1 = np.empty(shape + (2, 2))
    inv_r = 1.0 / r
    psi1[..., 0, 0] = (-a11 * P * s + a13 * P * c - a13 * Q * s + a33 * Q * c) * inv_r
    psi1[..., 0, 1] = (-a13 * P * s + a12 * P * c - a33 * Q * s + a23 * Q * c) * inv_r
    psi1[..., 1, 0] = (-a13 * P * s + a33 * P * c - a12 * Q * s + a23 * Q * c) * inv_r
    psi1[..., 1, 1] = (-a33 * P * s + a23 * P * c - a23 * Q * s + a22 * Q * c) * inv_r

    psi0 = np.empty(shape + (2, 2))
    psi0[..., 0, 0] = a11 * s * s + a33 * c * c - 2 * a13 * c * s
    psi0[..., 0, 1] = a13 * s * s + a23 * c * c - (a33 + a12) * c * s
    psi0[..., 1, 0] = psi0[..., 0, 1]
    psi0[..., 1, 1] = a33 * s * s + a22 * c * c - 2 * a23 * c * s
    return psi0, psi1, psi2


def project_spd(mat: np.ndarray, floor: float) -> np.ndarray:
    """Clip the eigenvalues of a symmetric matrix from below at ``floor``."""
    sym = 0.5 * (mat + np.swapaxes(mat, -1, -2))
    w, v = np.linalg.eigh(sym)
    if np.all(w >= floor):
        return sym
    w = np.maximum(w, floor)
    return (v * w[..., None, :]) @ np.swapaxes(v, -1, -2)


@dataclass(frozen=True)
class PiecewiseMaterial:
    """Angular sectors ``[start, end)`` each holding a constant tensor."""

    sectors: tuple[tuple[float, float, AnisoTensor], ...]

    def __post_init__(self):
        secs = tuple((float(a), float(b), t) for a, b, t in self.sectors)
        object.__setattr__(self, "sectors", secs)
        if not secs:
            raise ConfigurationError("a material needs at least one sector")
        for (a0, b0, _), (a1, _, _) in zip(secs[:-1], secs[1:]):
            if not np.isclose(b0, a1, rtol=0, atol=1e-12):
                raise ConfigurationError(f"material sectors do not tile the range near {b0!r}")
        for a, b, t in secs:
            if not b > a:
                raise ConfigurationError(f"empty material sector [{a}, {b})")
            if not isinstance(t, AnisoTensor):
                raise ConfigurationError("sector tensors must be AnisoTensor instances")

    @classmethod
    def from_domain(cls, domain, tensors: Sequence[AnisoTensor]) -> "PiecewiseMaterial":
        """One tensor per sector of a :class:`~dmol.geometry.DomainSpec`."""
        secs = domain.sectors
        if len(tensors) != len(secs):
            raise ConfigurationError(f"{len(secs)} sectors but {len(tensors)} tensors")
        return cls(tuple((a, b, t) for (a, b), t in zip(secs, tensors)))

    @classmethod
    def uniform_sectors(cls, phi_min: float, span: float, tensors: Sequence[AnisoTensor]):
        """``len(tensors)`` equal sectors starting at ``phi_min``."""
        m = len(tensors)
        edges = phi_min + span * np.arange(m + 1) / m
        return cls(tuple((edges[i], edges[i + 1], t) for i, t in enumerate(tensors)))

    @classmethod
    def from_vector(cls, edges: Sequence[float], vec) -> "PiecewiseMaterial":
        """Inverse of :meth:`to_vector` given sector edges (length m+1)."""
        edges = np.asarray(edges, dtype=float)
        m = edges.size - 1
        vec = np.asarray(vec, dtype=float).reshape(6, m)
        return cls(tuple((edges[t], edges[t + 1], AnisoTensor.from_vector(vec[:, t])) for t in range(m)))

    @property
    def m(self) -> int:
        return len(self.sectors)

    @property
    def edges(self) -> np.ndarray:
        return np.array([s[0] for s in self.sectors] + [self.sectors[-1][1]])

    @property
    def tensors(self) -> list[AnisoTensor]:
        return [s[2] for s in self.sectors]

    def coefficient_table(self) -> np.ndarray:
        """Array of shape (m, 6)."""
        return np.array([t.as_vector() for t in self.tensors])

    def to_vector(self) -> np.ndarray:
        """Flatten as all a11 over sectors, then a22, a33, a12, a13, a23."""
        return self.coefficient_table().T.reshape(-1)

    def sector_index(self, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        idx = np.searchsorted(self.edges[1:-1], phi, side="right")
        return idx

    def coefficients_at(self, phi) -> np.ndarray:
        return self.coefficient_table()[self.sector_index(phi)]

    def check_alignment(self, nodes: np.ndarray, tol: float = 1e-10):
        """Raise :class:`AssemblyError` unless every sector edge is a mesh node."""
        nodes = np.asarray(nodes)
        for e in self.edges:
            if np.min(np.abs(nodes - e)) > tol:
                raise AssemblyError(f"material sector edge {e!r} is not an angular mesh node")
