"""Star-shaped domains, the logarithmic-polar coordinate map and its Jacobian.

A domain is described by its boundary radius ``r(phi)`` about the origin.
Points are addressed by ``(rho, phi)`` with ``rho <= 0``::

    x = exp(rho) * r(phi) * cos(phi)
    y = exp(rho) * r(phi) * sin(phi)

so the boundary is the line ``rho = 0`` and the origin is ``rho -> -inf``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from .errors import ConfigurationError, DomainError

TWO_PI = 2.0 * np.pi

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Segment:
    """One smooth piece of the boundary radius on ``[phi_start, phi_end]``."""

    phi_start: float
    phi_end: float
    r: ArrayFn
    r_prime: ArrayFn


@dataclass(frozen=True)
class BoundaryShape:
    """Piecewise C1 radial boundary function.

    Parameters
    ----------
    segments : sequence of Segment
        Contiguous pieces covering the angular range in increasing order.
    periodic : bool
        ``True`` for closed domains (range of length 2*pi, the ends are
        identified). ``False`` for slit domains whose two bounding rays are
        traction-free crack faces.
    name : str
        Label used in reports.
    """

    segments: tuple[Segment, ...]
    periodic: bool = True
    name: str = ""
    _starts: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ConfigurationError("a boundary shape needs at least one segment")
        for a, b in zip(segs[:-1], segs[1:]):
            if not np.isclose(a.phi_end, b.phi_start, rtol=0, atol=1e-12):
                raise ConfigurationError(
                    f"segments leave a gap or overlap at phi={a.phi_end!r}/{b.phi_start!r}"
                )
        for s in segs:
            if not s.phi_end > s.phi_start:
                raise ConfigurationError(f"empty segment [{s.phi_start}, {s.phi_end}]")
        span = segs[-1].phi_end - segs[0].phi_start
        if self.periodic and not np.isclose(span, TWO_PI, rtol=0, atol=1e-12):
            raise ConfigurationError(f"periodic shape must span 2*pi, got {span!r}")
        object.__setattr__(self, "_starts", np.array([s.phi_start for s in segs]))
        self._check_invariants()

    # -- basic properties -------------------------------------------------

    @property
    def phi_min(self) -> float:
        return float(self.segments[0].phi_start)

    @property
    def phi_max(self) -> float:
        return float(self.segments[-1].phi_end)

    @property
    def span(self) -> float:
        return self.phi_max - self.phi_min

    @property
    def breakpoints(self) -> np.ndarray:
        """Interior segment joins (corners of the boundary)."""
        return np.array([s.phi_start for s in self.segments[1:]])

    # -- evaluation -------------------------------------------------------

    def check_range(self, phi) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        tol = 1e-12 * (1.0 + abs(self.phi_max))
        if np.any(phi < self.phi_min - tol) or np.any(phi > self.phi_max + tol):
            bad = phi[(phi < self.phi_min - tol) | (phi > self.phi_max + tol)]
            raise DomainError(
                f"phi={bad.ravel()[0]!r} outside [{self.phi_min}, {self.phi_max}]"
            )
        return np.clip(phi, self.phi_min, self.phi_max)

    def segment_index(self, phi) -> np.ndarray:
        """Index of the segment owning each angle (left-closed, last one closed)."""
        phi = self.check_range(phi)
        idx = np.searchsorted(self._starts, phi, side="right") - 1
        return np.clip(idx, 0, len(self.segments) - 1)

    def _piecewise(self, phi, attr: str) -> np.ndarray:
        phi = self.check_range(phi)
        if len(self.segments) == 1:
            return np.asarray(getattr(self.segments[0], attr)(phi), dtype=float) * np.ones_like(phi)
        idx = self.segment_index(phi)
        out = np.empty_like(phi)
        for k, seg in enumerate(self.segments):
            mask = idx == k
            if np.any(mask):
                out[mask] = getattr(seg, attr)(phi[mask])
        return out

    def radius(self, phi) -> np.ndarray:
        return self._piecewise(phi, "r")

    def radius_prime(self, phi) -> np.ndarray:
        return self._piecewise(phi, "r_prime")

    def wrap(self, phi) -> np.ndarray:
        """Map arbitrary angles into the range (periodic shapes only)."""
        phi = np.asarray(phi, dtype=float)
        if not self.periodic:
            return self.check_range(phi)
        return self.phi_min + np.mod(phi - self.phi_min, TWO_PI)

    # -- validation -------------------------------------------------------

    def _check_invariants(self, n_scan: int = 2000, n_fd: int = 100):
        phi = np.linspace(self.phi_min, self.phi_max, n_scan)
        r = self.radius(phi)
        if not np.all(np.isfinite(r)) or np.min(r) <= 0.0:
            raise ConfigurationError(f"boundary radius must be positive, min={np.min(r)!r}")
        if self.periodic:
            r0 = self.segments[0].r(np.array([self.phi_min]))[0]
            r1 = self.segments[-1].r(np.array([self.phi_max]))[0]
            if not np.isclose(r0, r1, rtol=1e-9, atol=0.0):
                raise ConfigurationError(f"periodic radius mismatch {r0!r} vs {r1!r}")
        for seg in self.segments:
            width = seg.phi_end - seg.phi_start
            step = 1e-6 * width
            t = np.linspace(seg.phi_start + 2 * step, seg.phi_end - 2 * step, n_fd)
            fd = (seg.r(t + step) - seg.r(t - step)) / (2 * step)
            exact = seg.r_prime(t)
            scale = np.maximum(np.abs(exact), np.abs(seg.r(t)))
            err = np.max(np.abs(fd - exact) / scale)
            if err > 1e-6:
                raise ConfigurationError(
                    f"r_prime disagrees with a central difference of r on "
                    f"[{seg.phi_start}, {seg.phi_end}] (rel. err {err:.2e})"
                )


@dataclass(frozen=True)
class DomainSpec:
    """A boundary shape split into material sectors by radial interfaces.

    ``interfaces`` are the angles theta_1 < ... < theta_K with theta_1 equal to
    the start of the angular range. Sector k spans (theta_k, theta_{k+1}); the
    last sector ends at the end of the range.
    """

    boundary: BoundaryShape
    interfaces: tuple[float, ...]

    def __post_init__(self):
        th = tuple(float(t) for t in self.interfaces)
        object.__setattr__(self, "interfaces", th)
        if len(th) < 1:
            raise ConfigurationError("at least one interface angle (the range start) is required")
        if any(b <= a for a, b in zip(th[:-1], th[1:])):
            raise ConfigurationError("interface angles must be strictly increasing")
        b = self.boundary
        if not np.isclose(th[0], b.phi_min, rtol=0, atol=1e-12):
            raise ConfigurationError("the first interface must equal the range start")
        if th[-1] >= b.phi_max - 1e-12 and len(th) > 1:
            raise ConfigurationError("interfaces must lie inside the angular range")

    @property
    def sectors(self) -> list[tuple[float, float]]:
        ends = list(self.interfaces[1:]) + [self.boundary.phi_max]
        return list(zip(self.interfaces, ends))

    @property
    def K(self) -> int:
        return len(self.interfaces)


def map_to_cartesian(shape: BoundaryShape, rho, phi):
    """Return ``(x, y)`` for logarithmic-polar coordinates ``(rho, phi)``."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho > 0):
        raise DomainError("rho must be nonpositive")
    phi = shape.check_range(phi)
    rad = np.exp(rho) * shape.radius(phi)
    return rad * np.cos(phi), rad * np.sin(phi)


def inverse_map(shape: BoundaryShape, x, y):
    """Inverse of :func:`map_to_cartesian` for points inside the domain."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    phi = np.arctan2(y, x)
    if shape.periodic:
        phi = shape.wrap(phi)
    else:
        phi = np.clip(phi, shape.phi_min, shape.phi_max)
    rho = np.log(np.hypot(x, y) / shape.radius(phi))
    return rho, phi


def jacobian_rows(shape: BoundaryShape, rho, phi) -> np.ndarray:
    """Matrix ``[[drho/dx, drho/dy], [dphi/dx, dphi/dy]]`` with shape ``(..., 2, 2)``."""
    rho, phi = np.broadcast_arrays(np.asarray(rho, float), np.asarray(phi, float))
    r = shape.radius(phi)
    rp = shape.radius_prime(phi)
    s, c = np.sin(phi), np.cos(phi)
    scale = 1.0 / (np.exp(rho) * r * r)
    out = np.empty(rho.shape + (2, 2))
    out[..., 0, 0] = (rp * s + r * c) * scale
    out[..., 0, 1] = (-rp * c + r * s) * scale
    out[..., 1, 0] = -r * s * scale
    out[..., 1, 1] = r * c * scale
    return out


def forward_derivative(shape: BoundaryShape, rho, phi) -> np.ndarray:
    """Matrix ``[[dx/drho, dx/dphi], [dy/drho, dy/dphi]]`` of the forward map."""
    rho, phi = np.broadcast_arrays(np.asarray(rho, float), np.asarray(phi, float))
    r = shape.radius(phi)
    rp = shape.radius_prime(phi)
    s, c = np.sin(phi), np.cos(phi)
    e = np.exp(rho)
    out = np.empty(rho.shape + (2, 2))
    out[..., 0, 0] = e * r * c
    out[..., 0, 1] = e * (rp * c - r * s)
    out[..., 1, 0] = e * r * s
    out[..., 1, 1] = e * (rp * s + r * c)
    return out


# -- preset shapes ----------------------------------------------------------

def _const(value):
    return lambda p: np.full_like(np.asarray(p, dtype=float), value)


def circle(radius: float = 1.0) -> BoundaryShape:
    return BoundaryShape(
        (Segment(0.0, TWO_PI, _const(radius), _const(0.0)),), periodic=True, name="circle"
    )


def _star(n: int, name: str) -> BoundaryShape:
    def r(p):
        return np.sqrt(2.0 + np.cos(n * p))

    def rp(p):
        return -n * np.sin(n * p) / (2.0 * np.sqrt(2.0 + np.cos(n * p)))

    return BoundaryShape((Segment(0.0, TWO_PI, r, rp),), periodic=True, name=name)


def _rounded_square() -> BoundaryShape:
    def r(p):
        return (np.cos(p) ** 4 + np.sin(p) ** 4) ** -0.5

    def rp(p):
        s, c = np.sin(p), np.cos(p)
        q = c**4 + s**4
        return -0.5 * q**-1.5 * 4.0 * s * c * (s * s - c * c)

    return BoundaryShape((Segment(0.0, TWO_PI, r, rp),), periodic=True, name="roundedSquare")


def _crack_three_piece() -> BoundaryShape:
    # left piece: the line x + y = -1
    def r1(p):
        return -1.0 / (np.sin(p) + np.cos(p))

    def r1p(p):
        return (np.cos(p) - np.sin(p)) / (np.sin(p) + np.cos(p)) ** 2

    def r2(p):
        return 1.0 / (np.sin(p) ** 4 + np.cos(p) ** 4)

    def r2p(p):
        s, c = np.sin(p), np.cos(p)
        return -4.0 * s * c * (s * s - c * c) / (s**4 + c**4) ** 2

    # right piece: the line x - y = -1
    def r3(p):
        return -1.0 / (np.cos(p) - np.sin(p))

    def r3p(p):
        return -(np.sin(p) + np.cos(p)) / (np.cos(p) - np.sin(p)) ** 2

    h = 0.5 * np.pi
    return BoundaryShape(
        (
            Segment(-np.pi, -h, r1, r1p),
            Segment(-h, h, r2, r2p),
            Segment(h, np.pi, r3, r3p),
        ),
        periodic=False,
        name="crack3piece",
    )


_PRESETS = {
    "crack3piece": _crack_three_piece,
    "star5": lambda: _star(5, "star5"),
    "roundedSquare": _rounded_square,
    "star3": lambda: _star(3, "star3"),
    "circle": circle,
}


def preset_shapes(name: str) -> BoundaryShape:
    """Return one of the named example boundaries.

    ``crack3piece`` is a slit domain on (-pi, pi); ``star5``, ``star3``,
    ``roundedSquare`` and ``circle`` are periodic on [0, 2*pi].
    """
    try:
        factory = _PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown shape preset {name!r}; choose from {sorted(_PRESETS)}"
        ) from None
    return factory()


def tabulated_shape(pieces: Sequence[dict], periodic: bool = True, name: str = "tabulated") -> BoundaryShape:
    """Build a shape from tabulated samples.

    Each piece is a mapping with arrays ``phi`` and ``r`` and optionally
    ``r_prime``. Without ``r_prime`` a not-a-knot cubic spline is used;
    with it, a cubic Hermite spline matching the given slopes.
    """
    segs = []
    for i, piece in enumerate(pieces):
        phi = np.asarray(piece["phi"], dtype=float)
        r = np.asarray(piece["r"], dtype=float)
        if phi.ndim != 1 or phi.shape != r.shape or phi.size < 4:
            raise ConfigurationError(f"piece {i}: phi and r must be 1-D arrays of equal length >= 4")
        if "r_prime" in piece and piece["r_prime"] is not None:
            spl = CubicHermiteSpline(phi, r, np.asarray(piece["r_prime"], dtype=float))
        else:
            spl = CubicSpline(phi, r, bc_type="not-a-knot")
        dspl = spl.derivative()
        segs.append(
            Segment(float(phi[0]), float(phi[-1]), lambda p, s=spl: s(p), lambda p, s=dspl: s(p))
        )
    return BoundaryShape(tuple(segs), periodic=periodic, name=name)
