import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gdelab.errors import PoleProximity, UnknownLabel
from gdelab.state_space import (FreeBasis, ZContour, free_resolvent, projector,
                                squared_resolvent)


def test_basis_rejects_bad_input():
    with pytest.raises(ValueError):
        FreeBasis([1.0])
    with pytest.raises(ValueError):
        FreeBasis([1.0, 0.0])
    with pytest.raises(ValueError):
        FreeBasis([0.0, np.inf])
    with pytest.raises(ValueError):
        FreeBasis(np.arange(10.0), max_dimension=5)


def test_ladder_with_extra_level_is_sorted():
    b = FreeBasis.ladder(4, 1.0, 0.5, extra=[0.2])
    assert np.allclose(b.energies, [0.2, 1.0, 1.5, 2.0, 2.5])
    assert b.dimension == 5
    assert b.gap(0) == pytest.approx(0.8)
    assert b.min_gap() == pytest.approx(0.5)


def test_energies_are_frozen():
    b = FreeBasis([0.0, 1.0])
    with pytest.raises(ValueError):
        b.energies[0] = 3.0


def test_free_resolvent_diagonal():
    b = FreeBasis([0.0, 1.0, 3.0])
    z = 0.5 + 0.25j
    g = free_resolvent(b, z)
    assert np.allclose(g, np.linalg.inv(z * np.eye(3) - np.diag(b.energies)))
    assert np.allclose(squared_resolvent(b, z), g @ g)


def test_resolvent_refuses_points_on_levels():
    b = FreeBasis([0.0, 1.0])
    with pytest.raises(PoleProximity):
        free_resolvent(b, 1.0 + 1e-12j)


def test_projector_pair():
    b = FreeBasis([0.0, 1.0, 2.0])
    p, q = projector(b, 1)
    assert np.allclose(p @ p, p)
    assert np.allclose(p + q, np.eye(3))
    assert np.allclose(p @ q, 0)
    with pytest.raises(UnknownLabel):
        projector(b, 3)


def test_standard_contour_layout():
    b = FreeBasis([0.0, 1.0])
    c = ZContour.standard(b, n_points=20)
    assert len(c) == 20
    assert c.boundary_point == pytest.approx(11j)
    line = c.sample_points[1:]
    assert np.allclose(line.imag, 1e-3)
    assert line.real[0] == pytest.approx(1.25) and line.real[-1] == pytest.approx(-0.25)


def test_contour_rejects_radius_inside_spectrum():
    b = FreeBasis([0.0, 1.0])
    with pytest.raises(ValueError):
        ZContour.standard(b, start_radius=1.2)
    with pytest.raises(ValueError):
        ZContour(5.0, 1e-3, np.array([5j, 0.5 + 1e-4j]))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=8, unique=True),
       st.floats(0.01, 3), st.floats(-6, 6))
def test_resolvent_identity(levels, y, x):
    # G0(z1) - G0(z2) = (z2 - z1) G0(z1) G0(z2)
    b = FreeBasis(sorted(levels))
    z1, z2 = complex(x, y), complex(-x, 2 * y)
    lhs = free_resolvent(b, z1) - free_resolvent(b, z2)
    rhs = (z2 - z1) * free_resolvent(b, z1) @ free_resolvent(b, z2)
    assert np.allclose(lhs, rhs, atol=1e-10 * (1 + np.abs(lhs).max()))
