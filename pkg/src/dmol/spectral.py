"""Quadratic eigenvalue problem, mode selection and the modal solution.

The radial system ``B2 U'' + B1 U' + B0 U = 0`` is solved by the ansatz
``U = exp(rho * gamma) xi``. Bounded solutions on ``rho < 0`` use the half of
the spectrum with ``Re(gamma) >= 0``; the two zero eigenvalues carry the rigid
translations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import logging

import numpy as np
import scipy.linalg as sla

from .discretization import AngularMesh, SystemMatrices
from .errors import IllConditionedModalBasis, NumericalError, SpectralClassificationError
from .geometry import BoundaryShape, jacobian_rows

RCOND_LIMIT = 1e-12
ACCEPT_RESIDUAL = 1e-8

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RawEigenpairs:
    """All eigenpairs of the linearised pencil (``2 * size`` of them)."""

    gammas: np.ndarray  # (2n,) complex
    xis: np.ndarray  # (n, 2n) complex, unit columns
    method: str = "cholesky"


def _residuals(B: SystemMatrices, gammas, xis) -> np.ndarray:
    g = gammas[None, :]
    res = B.B2 @ xis * g**2 + B.B1 @ xis * g + B.B0 @ xis
    n2 = np.linalg.norm(B.B2, 2)
    n1 = np.linalg.norm(B.B1, 2)
    n0 = np.linalg.norm(B.B0, 2)
    a = np.abs(gammas)
    return np.linalg.norm(res, axis=0) / (
        np.linalg.norm(xis, axis=0) * (n2 * a**2 + n1 * a + n0)
    )


def solve_qep(B: SystemMatrices, method: str = "cholesky", check: bool = True) -> RawEigenpairs:
    """All eigenpairs of ``(gamma^2 B2 + gamma B1 + B0) xi = 0``.

    ``method="companion"`` applies QZ to the block companion pencil
    ``[[0, I], [-B0, -B1]] x = gamma [[I, 0], [0, B2]] x``. The default
    ``"cholesky"`` uses the congruent standard problem obtained from the
    Cholesky factor of ``B2``, which has the same eigenvalues and is several
    times faster.
    """
    n = B.size
    try:
        if method == "cholesky":
            L = sla.cholesky(B.B2, lower=True)

            def congruence(X):
                Y = sla.solve_triangular(L, X, lower=True)
                return sla.solve_triangular(L, Y.T, lower=True).T

            K0 = congruence(B.B0)
            K1 = congruence(B.B1)
            H = np.zeros((2 * n, 2 * n))
            H[:n, n:] = np.eye(n)
            H[n:, :n] = -K0
            H[n:, n:] = -K1
            gammas, V = sla.eig(H, overwrite_a=True, check_finite=False)
            xis = sla.solve_triangular(L, V[:n], lower=True, trans="T")
        elif method == "companion":
            A = np.zeros((2 * n, 2 * n))
            A[:n, n:] = np.eye(n)
            A[n:, :n] = -B.B0
            A[n:, n:] = -B.B1
            Bm = np.zeros((2 * n, 2 * n))
            Bm[:n, :n] = np.eye(n)
            Bm[n:, n:] = B.B2
            gammas, V = sla.eig(A, Bm, check_finite=False)
            xis = V[:n]
        else:
            raise ValueError(f"unknown QEP method {method!r}")
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        d = B.diagnostics()
        raise NumericalError(
            f"eigensolver failed ({exc}); min eig(B2)={d['B2_min_eig']:.3e}, "
            f"|B1+B1^T|={d['B1_antisym']:.1e}"
        ) from exc
    if not np.all(np.isfinite(gammas)):
        raise NumericalError("eigensolver returned non-finite eigenvalues (singular B2?)")
    xis = xis / np.linalg.norm(xis, axis=0)
    if check:
        idx = np.arange(2 * n)
        if n > 512:
            idx = np.random.default_rng(0).choice(2 * n, size=128, replace=False)
        res = _residuals(B, gammas[idx], xis[:, idx])
        if np.max(res) > 1e-8:
            raise NumericalError(f"eigen-residual {np.max(res):.2e} exceeds 1e-8")
    return RawEigenpairs(gammas=gammas, xis=xis, method=method)


@dataclass(frozen=True)
class ModeSet:
    """Retained modes with ``Re(gamma) >= 0``.

    Modes are stored once per real eigenvalue and once per complex-conjugate
    pair (the member with positive imaginary part). ``kinds`` marks each
    stored mode ``"zero"``, ``"real"`` or ``"pair"``; a pair contributes two
    real columns ``Re(exp(rho g) xi)`` and ``Im(exp(rho g) xi)`` to EI(rho).
    """

    gammas: np.ndarray  # (K,) complex
    xis: np.ndarray  # (n, K) complex
    kinds: tuple[str, ...]
    size: int

    @property
    def zero_count(self) -> int:
        return self.kinds.count("zero")

    @property
    def real_count(self) -> int:
        """Number of real eigenvalues (zeros included)."""
        return self.zero_count + self.kinds.count("real")

    @property
    def pair_count(self) -> int:
        return self.kinds.count("pair")

    @property
    def real_gammas(self) -> np.ndarray:
        mask = np.array([k != "pair" for k in self.kinds])
        return self.gammas[mask].real

    def all_gammas(self) -> np.ndarray:
        """The full retained list of ``size`` eigenvalues, conjugates included."""
        out = []
        for g, k in zip(self.gammas, self.kinds):
            out.append(g)
            if k == "pair":
                out.append(np.conj(g))
        return np.array(out)

    def EI(self, rho: float) -> np.ndarray:
        """Real modal matrix whose columns span the bounded solutions at ``rho``."""
        cols = []
        e = np.exp(rho * self.gammas)
        for j, k in enumerate(self.kinds):
            v = e[j] * self.xis[:, j]
            if k == "pair":
                cols.append(v.real)
                cols.append(v.imag)
            else:
                cols.append(v.real)
        return np.column_stack(cols)


def _fix_phase(v: np.ndarray) -> np.ndarray:
    k = np.argmax(np.abs(v))
    w = v * (np.conj(v[k]) / abs(v[k]))
    w = w.real
    return w / np.linalg.norm(w)


def select_and_pair(
    raw: RawEigenpairs,
    tol_zero: float | None = None,
    tol_imag: float = 1e-8,
) -> ModeSet:
    """Keep the bounded half of the spectrum and organise it for EI(rho).

    Eigenvalues with ``|gamma| < tol_zero`` form the zero cluster (the
    defective eigenvalue 0 splits into a small cloud in floating point).
    Its eigenvectors are replaced by an orthonormal basis of their span,
    which is the space of constant displacements. All other eigenvalues
    with positive real part are kept; real ones are sorted ascending and
    complex-conjugate pairs are sorted by ``(Re, |Im|)``.
    """
    gam = raw.gammas
    n = raw.xis.shape[0]
    scale = max(1.0, float(np.max(np.abs(gam))))
    if tol_zero is None:
        tol_zero = 1e-6 * scale
    mag = np.abs(gam)
    zero = mag < tol_zero
    pos = (~zero) & (gam.real > 0)
    n_keep_zero = n - int(pos.sum())
    n_cluster = int(zero.sum())
    if n_keep_zero < 1 or n_keep_zero > n_cluster:
        raise SpectralClassificationError(
            f"expected {n} modes with Re>=0; found {int(pos.sum())} positive and "
            f"{n_cluster} near-zero eigenvalues (tol_zero={tol_zero:.1e}); gap "
            f"{n - int(pos.sum()) - n_cluster}"
        )

    cluster = raw.xis[:, zero]
    U, s, _ = np.linalg.svd(np.hstack([cluster.real, cluster.imag]), full_matrices=False)
    zero_vecs = U[:, :n_keep_zero]

    g_pos = gam[pos]
    x_pos = raw.xis[:, pos]
    is_real = np.abs(g_pos.imag) <= tol_imag * (1.0 + np.abs(g_pos))
    reals = np.sort_complex(g_pos[is_real].real + 0j).real
    order_r = np.argsort(g_pos[is_real].real, kind="stable")
    real_vecs = [_fix_phase(x_pos[:, is_real][:, j]) for j in order_r]

    cplx = g_pos[~is_real]
    cx = x_pos[:, ~is_real]
    upper = cplx.imag > 0
    if upper.sum() != (~upper).sum():
        raise SpectralClassificationError(
            f"complex eigenvalues do not pair up ({int(upper.sum())} vs {int((~upper).sum())})"
        )
    lower_vals = cplx[~upper]
    for g in cplx[upper]:
        if np.min(np.abs(lower_vals - np.conj(g))) > 1e-6 * (1.0 + abs(g)):
            raise SpectralClassificationError(f"no conjugate partner for eigenvalue {g}")
    cu = cplx[upper]
    order_c = np.lexsort((np.abs(cu.imag), cu.real))
    pair_gam = cu[order_c]
    pair_vecs = cx[:, upper][:, order_c]

    gammas = np.concatenate([np.zeros(n_keep_zero), reals, pair_gam]).astype(complex)
    xis = np.column_stack(
        [zero_vecs.astype(complex)]
        + [np.asarray(real_vecs, dtype=complex).reshape(-1, n).T]
        + [pair_vecs]
    )
    kinds = ("zero",) * n_keep_zero + ("real",) * len(reals) + ("pair",) * len(pair_gam)
    total = n_keep_zero + len(reals) + 2 * len(pair_gam)
    if total != n:
        raise SpectralClassificationError(f"retained {total} columns, expected {n}")
    return ModeSet(gammas=gammas, xis=xis, kinds=kinds, size=n)


@dataclass
class ModalSolution:
    """Semi-analytic field ``u(rho, phi) = BF(phi)^T U(rho)``.

    ``U(rho) = Re(V @ exp(rho * gammas)) + exp(2 rho) W`` where ``V`` holds the
    mode vectors scaled by their (complex) expansion coefficients and ``W``
    is the optional particular solution for a body force.
    """

    modes: ModeSet
    alpha: np.ndarray
    mesh: AngularMesh
    shape: BoundaryShape
    particular: np.ndarray | None = None
    rcond: float = 1.0
    V: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        coef = []
        i = 0
        for k in self.modes.kinds:
            if k == "pair":
                coef.append(self.alpha[i] - 1j * self.alpha[i + 1])
                i += 2
            else:
                coef.append(self.alpha[i] + 0j)
                i += 1
        self.V = self.modes.xis * np.array(coef)[None, :]

    # -- radial part --------------------------------------------------------

    @property
    def n_dof(self) -> int:
        return self.mesh.n_dof

    def term_gammas(self) -> np.ndarray:
        g = self.modes.gammas
        if self.particular is not None:
            g = np.append(g, 2.0 + 0j)
        return g

    def term_vectors(self) -> np.ndarray:
        V = self.V
        if self.particular is not None:
            V = np.column_stack([V, self.particular.astype(complex)])
        return V

    def U(self, rho, derivative: int = 0) -> np.ndarray:
        """Nodal vector(s) ``U(rho)`` or its rho-derivatives; shape (n, len(rho))."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        g = self.term_gammas()
        E = np.exp(np.outer(g, rho)) * (g[:, None] ** derivative if derivative else 1.0)
        return (self.term_vectors() @ E).real

    # -- field evaluation ---------------------------------------------------

    def _split(self, U):
        n = self.n_dof
        return U[:n], U[n:]

    def evaluate_grid(self, rho, phi) -> np.ndarray:
        """Field on the tensor grid ``rho x phi``; shape (2, len(rho), len(phi))."""
        S = self.mesh.basis_matrix(np.atleast_1d(phi))
        U1, U2 = self._split(self.U(rho))
        return np.stack([(S @ U1).T, (S @ U2).T])

    def gradient_grid(self, rho, phi) -> np.ndarray:
        """Cartesian gradient on a tensor grid; shape (2, 2, len(rho), len(phi)).

        ``out[c, 0]`` is ``du_c/dx`` and ``out[c, 1]`` is ``du_c/dy``.
        """
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        S = self.mesh.basis_matrix(phi)
        dS = self.mesh.basis_matrix(phi, derivative=True)
        U = self.U(rho)
        dU = self.U(rho, derivative=1)
        J = jacobian_rows(self.shape, rho[:, None], phi[None, :])
        out = np.empty((2, 2, rho.size, phi.size))
        for c, (Uc, dUc) in enumerate(zip(self._split(U), self._split(dU))):
            u_rho = (S @ dUc).T
            u_phi = (dS @ Uc).T
            out[c, 0] = u_rho * J[..., 0, 0] + u_phi * J[..., 1, 0]
            out[c, 1] = u_rho * J[..., 0, 1] + u_phi * J[..., 1, 1]
        return out

    def evaluate(self, rho, phi) -> np.ndarray:
        """Field at paired points; returns shape (2, *broadcast shape)."""
        rho, phi = np.broadcast_arrays(np.asarray(rho, float), np.asarray(phi, float))
        shp = rho.shape
        rho, phi = rho.reshape(-1), phi.reshape(-1)
        S = self.mesh.basis_matrix(phi)
        U1, U2 = self._split(self.U(rho))
        u1 = np.asarray(S.multiply(U1.T).sum(axis=1)).ravel()
        u2 = np.asarray(S.multiply(U2.T).sum(axis=1)).ravel()
        return np.stack([u1.reshape(shp), u2.reshape(shp)])

    def evaluate_gradient(self, rho, phi) -> np.ndarray:
        """Cartesian gradient at paired points; shape (2, 2, *broadcast shape)."""
        rho, phi = np.broadcast_arrays(np.asarray(rho, float), np.asarray(phi, float))
        shp = rho.shape
        rho, phi = rho.reshape(-1), phi.reshape(-1)
        S = self.mesh.basis_matrix(phi)
        dS = self.mesh.basis_matrix(phi, derivative=True)
        U = self.U(rho)
        dU = self.U(rho, derivative=1)
        J = jacobian_rows(self.shape, rho, phi)
        out = np.empty((2, 2, rho.size))
        for c, (Uc, dUc) in enumerate(zip(self._split(U), self._split(dU))):
            u_rho = np.asarray(S.multiply(dUc.T).sum(axis=1)).ravel()
            u_phi = np.asarray(dS.multiply(Uc.T).sum(axis=1)).ravel()
            out[c, 0] = u_rho * J[:, 0, 0] + u_phi * J[:, 1, 0]
            out[c, 1] = u_rho * J[:, 0, 1] + u_phi * J[:, 1, 1]
        return out.reshape((2, 2) + shp)

    # -- separable representation (used by the H1 / energy integrals) -------

    def angular_terms(self, phi):
        """Per-term angular profiles at ``phi``.

        Returns ``(gammas, v, dv)`` with ``v, dv`` of shape (K, 2, len(phi)) so
        that ``u = Re(sum_k exp(gammas[k] rho) v[k])``.
        """
        phi = np.atleast_1d(phi)
        S = self.mesh.basis_matrix(phi)
        dS = self.mesh.basis_matrix(phi, derivative=True)
        V = self.term_vectors()
        n = self.n_dof
        v = np.stack([(S @ V[:n]).T, (S @ V[n:]).T], axis=1)
        dv = np.stack([(dS @ V[:n]).T, (dS @ V[n:]).T], axis=1)
        return self.term_gammas(), v, dv

    def angular_breakpoints(self) -> np.ndarray:
        return self.mesh.nodes

    def to_json(self) -> dict:
        """Plain-data export of the spectrum, coefficients and mesh."""
        return {
            "gammas": [[float(g.real), float(g.imag)] for g in self.modes.all_gammas()],
            "alpha": [float(a) for a in self.alpha],
            "mesh": {
                "nodes": [float(x) for x in self.mesh.nodes],
                "order": int(self.mesh.order),
                "periodic": bool(self.mesh.periodic),
            },
            "shape": self.shape.name,
            "rcond": float(self.rcond),
            "particular": None if self.particular is None else [float(w) for w in self.particular],
        }


def build_modal_solution(
    modes: ModeSet,
    F: np.ndarray,
    mesh: AngularMesh,
    shape: BoundaryShape,
    particular: np.ndarray | None = None,
    rcond_limit: float = RCOND_LIMIT,
    accept_residual: float | None = None,
) -> ModalSolution:
    """Match the boundary data: solve ``EI(0) alpha = F - U_p(0)`` by LU.

    One step of iterative refinement is applied. If the reciprocal condition
    estimate falls below ``rcond_limit`` an :class:`IllConditionedModalBasis`
    is raised, unless ``accept_residual`` is given and the relative residual
    ``|EI(0) alpha - rhs|_inf / |rhs|_inf`` is below it; then the solution is
    kept and a warning logged.
    """
    F = np.asarray(F, dtype=float)
    EI0 = modes.EI(0.0)
    if EI0.shape[0] != EI0.shape[1]:
        raise IllConditionedModalBasis(f"EI(0) is not square: {EI0.shape}")
    rhs = F - particular if particular is not None else F
    lu, piv = sla.lu_factor(EI0, check_finite=False)
    anorm = np.linalg.norm(EI0, 1)
    rcond, info = sla.lapack.dgecon(lu, anorm, norm="1")
    alpha = sla.lu_solve((lu, piv), rhs, check_finite=False)
    alpha += sla.lu_solve((lu, piv), rhs - EI0 @ alpha, check_finite=False)
    if info != 0 or not rcond > rcond_limit:
        scale = max(np.abs(rhs).max(), np.finfo(float).tiny)
        resid = float(np.abs(EI0 @ alpha - rhs).max() / scale)
        if accept_residual is not None and np.isfinite(resid) and resid < accept_residual:
            log.warning("modal matrix EI(0) has rcond=%.2e; boundary residual %.1e accepted", rcond, resid)
        else:
            # columns with the largest mutual overlap are the usual culprits
            G = EI0 / np.linalg.norm(EI0, axis=0)
            C = np.abs(G.T @ G) - np.eye(G.shape[1])
            i, j = np.unravel_index(np.argmax(C), C.shape)
            g = modes.all_gammas()
            raise IllConditionedModalBasis(
                f"modal matrix EI(0) has rcond={rcond:.2e} (residual {resid:.1e}); most parallel "
                f"columns {i} (gamma={g[i]:.6g}) and {j} (gamma={g[j]:.6g}), overlap {C[i, j]:.6f}"
            )
    return ModalSolution(modes, alpha, mesh, shape, particular=particular, rcond=float(rcond))


def singular_profiles(sol: ModalSolution, j: int):
    """Angular profiles of the j-th real mode (zeros first, then ascending).

    Returns ``(gamma, Phi, Psi, alpha)`` where ``Phi`` and ``Psi`` are
    callables and the mode contributes ``alpha * r**gamma * (Phi, Psi)``.
    """
    real_idx = [i for i, k in enumerate(sol.modes.kinds) if k != "pair"]
    if not 0 <= j < len(real_idx):
        raise IndexError(f"mode index {j} out of range (0..{len(real_idx) - 1})")
    col = real_idx[j]
    gamma = float(sol.modes.gammas[col].real)
    xi = sol.modes.xis[:, col].real
    n = sol.n_dof
    mesh, shape = sol.mesh, sol.shape

    def Phi(phi):
        phi = np.atleast_1d(phi)
        return shape.radius(phi) ** (-gamma) * (mesh.basis_matrix(phi) @ xi[:n])

    def Psi(phi):
        phi = np.atleast_1d(phi)
        return shape.radius(phi) ** (-gamma) * (mesh.basis_matrix(phi) @ xi[n:])

    return gamma, Phi, Psi, float(sol.alpha[col_to_alpha(sol.modes, col)])


def col_to_alpha(modes: ModeSet, col: int) -> int:
    """Index into ``alpha`` of the first real column belonging to stored mode ``col``."""
    i = 0
    for k in modes.kinds[:col]:
        i += 2 if k == "pair" else 1
    return i
