import numpy as np
import pytest

from dmol.errors import DomainError
from dmol.geometry import (
    DomainSpec,
    circle,
    forward_derivative,
    inverse_map,
    jacobian_rows,
    map_to_cartesian,
    preset_shapes,
)


def test_map_examples():
    x, y = map_to_cartesian(circle(), 0.0, 0.0)
    assert (x, y) == pytest.approx((1.0, 0.0))
    x, y = map_to_cartesian(preset_shapes("star5"), 0.0, 0.0)
    assert (x, y) == pytest.approx((np.sqrt(3.0), 0.0))
    x, y = map_to_cartesian(circle(), -30.0, np.pi / 2)
    assert abs(x) < 1e-13 and y == pytest.approx(np.exp(-30.0)) and np.hypot(x, y) < 1e-13


def test_positive_rho_rejected():
    with pytest.raises(DomainError):
        map_to_cartesian(circle(), 0.1, 0.0)


@pytest.mark.parametrize("name", ["star5", "roundedSquare", "star3", "crack3piece"])
def test_round_trip(name, rng):
    shape = preset_shapes(name)
    rho = rng.uniform(-20.0, 0.0, 200)
    phi = shape.phi_min + shape.span * rng.uniform(0.001, 0.999, 200)
    x, y = map_to_cartesian(shape, rho, phi)
    r2, p2 = inverse_map(shape, x, y)
    assert np.allclose(r2, rho, atol=1e-10)
    assert np.allclose(p2, phi, atol=1e-10)


def test_jacobian_examples():
    assert np.allclose(jacobian_rows(circle(), 0.0, 0.0), np.eye(2))
    assert np.allclose(jacobian_rows(circle(), -1.0, 0.0), np.e * np.eye(2))


@pytest.mark.parametrize("name", ["star5", "roundedSquare", "crack3piece"])
def test_jacobian_inverts_numerical_forward_derivative(name, rng):
    # differentiate the forward map numerically and invert it
    shape = preset_shapes(name)
    h = 1e-6
    for _ in range(50):
        rho = rng.uniform(-5.0, -0.01)
        phi = shape.phi_min + shape.span * rng.uniform(0.01, 0.99)
        if shape.breakpoints.size and np.min(np.abs(shape.breakpoints - phi)) < 2 * h:
            continue
        fwd = np.empty((2, 2))
        for k, (dr, dp) in enumerate([(h, 0.0), (0.0, h)]):
            xp, yp = map_to_cartesian(shape, rho + dr, phi + dp)
            xm, ym = map_to_cartesian(shape, rho - dr, phi - dp)
            fwd[:, k] = [(xp - xm) / (2 * h), (yp - ym) / (2 * h)]
        J = jacobian_rows(shape, rho, phi)
        assert np.allclose(J, np.linalg.inv(fwd), rtol=1e-6, atol=1e-6 * np.abs(J).max())
        assert np.allclose(J @ forward_derivative(shape, rho, phi), np.eye(2), atol=1e-12)


def test_preset_values():
    assert preset_shapes("star5").radius(np.pi / 5) == pytest.approx(1.0)
    assert preset_shapes("roundedSquare").radius(np.pi / 4) == pytest.approx(np.sqrt(2.0))
    assert preset_shapes("crack3piece").radius(0.0) == pytest.approx(1.0)


def test_unknown_preset():
    with pytest.raises((KeyError, ValueError)):
        preset_shapes("hexagon")


def test_radius_prime_matches_difference_quotient(rng):
    for name in ("star5", "roundedSquare", "star3"):
        shape = preset_shapes(name)
        phi = rng.uniform(0.1, 6.0, 20)
        h = 1e-6
        fd = (shape.radius(phi + h) - shape.radius(phi - h)) / (2 * h)
        assert np.allclose(shape.radius_prime(phi), fd, rtol=1e-6, atol=1e-8)


def test_domain_sectors_cover_range():
    shape = preset_shapes("star5")
    dom = DomainSpec(shape, (0.0, np.pi / 2, np.pi, 3 * np.pi / 2))
    secs = dom.sectors
    assert len(secs) == 4
    assert sum(b - a for a, b in secs) == pytest.approx(shape.span)
