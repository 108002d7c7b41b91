import numpy as np
import pytest
from scipy.integrate import quad

from gdelab.errors import (DistributionalKernel, LowerHalfPlane, NotInstantaneous,
                           QuadratureFailure)
from gdelab.interactions import (InteractionModel, b_of_z, interaction_matrix,
                                 random_hermitian, read_kernel_csv, schrodinger_kernel,
                                 total_hamiltonian, write_kernel_csv)
from gdelab.state_space import FreeBasis

PHI = np.array([1.0, 1.0]) / np.sqrt(2)


def quad_transform(model, z, i, j):
    """i * int_0^inf exp(i z tau) K_ij(tau) d tau, by adaptive quadrature."""
    def part(tau, which):
        v = 1j * np.exp(1j * z * tau) * schrodinger_kernel(model, tau)[i, j]
        return v.real if which == 0 else v.imag
    re = quad(part, 0, np.inf, args=(0,), epsabs=0, epsrel=1e-12, limit=200)[0]
    im = quad(part, 0, np.inf, args=(1,), epsabs=0, epsrel=1e-12, limit=200)[0]
    return complex(re, im)


def test_instantaneous_b_is_h_everywhere():
    h = np.array([[0.0, 0.3], [0.3, 0.1]])
    m = InteractionModel.instantaneous(h)
    for z in (1j, 5 + 0.1j, -3 + 2j):
        assert np.array_equal(b_of_z(m, z), h)


def test_validation():
    with pytest.raises(ValueError):
        InteractionModel.instantaneous(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        InteractionModel.separable(1.0, np.array([1.0, 1.0]), 0.1)
    with pytest.raises(ValueError):
        InteractionModel.separable(1.0, PHI, -0.1)
    with pytest.raises(ValueError):
        InteractionModel.tabulated(np.array([0.1, 0.2, 0.3]), np.zeros((3, 2, 2)))


def test_separable_closed_form_value():
    m = InteractionModel.separable(1.0, PHI, 1.0)
    assert np.allclose(b_of_z(m, 0.5j), np.outer(PHI, PHI) / 1.5)


@pytest.mark.parametrize("theta", [0.01, 0.1, 1.0])
@pytest.mark.parametrize("z", [0.1j, 1 + 0.5j, -2 + 1j])
def test_closed_form_matches_quadrature_of_kernel(theta, z):
    m = InteractionModel.separable(0.7, PHI, theta)
    ref = quad_transform(m, z, 0, 1)
    assert b_of_z(m, z)[0, 1] == pytest.approx(ref, rel=1e-8)


def test_instantaneous_limit_is_linear_in_theta():
    z_grid = [1j, 2 + 1j, -1 + 0.5j]
    base = InteractionModel.separable(1.0, PHI, 0.0)
    devs = []
    for th in (0.1, 0.01, 0.001):
        m = InteractionModel.separable(1.0, PHI, th)
        d = max(np.linalg.norm(b_of_z(m, z) - b_of_z(base, z)) / (th * abs(z)) for z in z_grid)
        devs.append(max(np.linalg.norm(b_of_z(m, z) - b_of_z(base, z)) for z in z_grid))
        assert d <= 1.0
    assert devs[0] > devs[1] > devs[2]


def test_lower_half_plane_rejected():
    m = InteractionModel.separable(1.0, PHI, 1.0)
    with pytest.raises(LowerHalfPlane):
        b_of_z(m, 1.0 - 0.1j)


def test_kernel_shape_and_errors():
    m = InteractionModel.separable(0.5, PHI, 0.2)
    k = schrodinger_kernel(m, 0.3)
    assert np.allclose(k, -1j * 0.5 / 0.2 * np.exp(-1.5) * np.outer(PHI, PHI))
    with pytest.raises(DistributionalKernel):
        schrodinger_kernel(InteractionModel.separable(0.5, PHI, 0.0), 0.1)
    with pytest.raises(ValueError):
        schrodinger_kernel(m, -1.0)
    # fatter tail for larger theta at fixed tau
    wide = abs(schrodinger_kernel(InteractionModel.separable(1, PHI, 1.0), 0.5)[0, 0])
    narrow = abs(schrodinger_kernel(InteractionModel.separable(1, PHI, 0.1), 0.5)[0, 0])
    assert wide > narrow


def test_total_hamiltonian_only_for_local_models():
    b = FreeBasis([0.0, 1.0])
    m = InteractionModel.separable(0.5, PHI, 0.0)
    assert np.allclose(total_hamiltonian(m, b), np.diag([0.0, 1.0]) + 0.5 * np.outer(PHI, PHI))
    assert np.allclose(interaction_matrix(m), 0.5 * np.outer(PHI, PHI))
    with pytest.raises(NotInstantaneous):
        total_hamiltonian(InteractionModel.separable(0.5, PHI, 0.1), b)


def test_rank_one_detection():
    m = InteractionModel.instantaneous(-0.5 * np.diag([1.0, 0.0]))
    b, phi = m.rank_one()
    assert b == pytest.approx(-0.5)
    assert abs(phi[0]) == pytest.approx(1.0)
    assert InteractionModel.instantaneous(np.diag([1.0, 2.0])).rank_one() is None


def test_random_hermitian_norm():
    h = random_hermitian(np.random.default_rng(3), 6, 0.2)
    assert np.allclose(h, h.conj().T)
    assert np.linalg.norm(h, 2) == pytest.approx(0.2)


def tabulated_exponential(theta=0.2, g=0.4, tmax=12.0, n=6001):
    tau = np.linspace(0, tmax, n)
    k = -1j * g / theta * np.exp(-tau / theta)[:, None, None] * np.outer(PHI, PHI)[None]
    return InteractionModel.tabulated(tau, k)


def test_tabulated_transform_matches_closed_form():
    tab = tabulated_exponential()
    ref = InteractionModel.separable(0.4, PHI, 0.2)
    z = 1 + 1j
    assert np.allclose(b_of_z(tab, z), b_of_z(ref, z), rtol=1e-6, atol=1e-8)
    assert np.allclose(schrodinger_kernel(tab, 0.3), schrodinger_kernel(ref, 0.3), rtol=1e-5)


def test_tabulated_undamped_kernel_fails():
    tab = tabulated_exponential(theta=50.0, tmax=2.0, n=101)
    with pytest.raises(QuadratureFailure):
        b_of_z(tab, 0.01j)


def test_kernel_csv_round_trip(tmp_path):
    tab = tabulated_exponential(n=11)
    path = tmp_path / "k.csv"
    write_kernel_csv(path, tab)
    header = path.read_text().splitlines()[0]
    assert header.startswith("tau,re_00,im_00,re_01")
    back = read_kernel_csv(path)
    assert np.array_equal(back.tau, tab.tau)
    assert np.array_equal(back.kernel_samples, tab.kernel_samples)
