import numpy as np
import pytest
from scipy.linalg import expm

from gdelab.bound_states import (analyse_level, extract_channel, find_pole, fit_decay_rate,
                                 join_green, solve_channel_ode, split_green,
                                 stationarity_diagnostic)
from gdelab.errors import UnknownLabel
from gdelab.gde_energy import solve_t_ode
from gdelab.interactions import InteractionModel, random_hermitian
from gdelab.state_space import FreeBasis, ZContour

from conftest import exact_ground_two_level


def eigen_pairs(basis, hi):
    """Eigenvalues and eigenvectors of H0 + H_I, sorted."""
    return np.linalg.eigh(basis.h0() + hi)


def test_split_join_round_trip():
    rng = np.random.default_rng(0)
    e = np.array([0.0, 0.5, 1.0])
    z = 0.2 + 0.3j
    g = np.linalg.inv(z * np.eye(3) - np.diag(e) - random_hermitian(rng, 3, 0.1))
    c, m = split_green(g, z, e)
    assert np.allclose(join_green(c, m, z, e), g)


def test_two_level_ground_state(two_level, two_level_contour):
    basis, model = two_level
    ch = solve_channel_ode(model, basis, 0, two_level_contour)
    pole = analyse_level(ch, basis)
    assert pole.energy == pytest.approx(exact_ground_two_level(), abs=1e-12)
    assert pole.width == 0.0
    w, v = eigen_pairs(basis, model.h_matrix)
    vec = v[:, 0]
    # the residue of G at the pole is the eigenprojector
    assert np.allclose(np.outer(pole.psi_prime, np.conj(pole.psi)), np.outer(vec, vec.conj()),
                       atol=1e-10)
    assert abs(pole.c0) ** 2 == pytest.approx(abs(vec[0]) ** 2, rel=1e-10)
    assert pole.diagnostics["overlap"] == pytest.approx(1.0, abs=1e-10)
    assert pole.residue_defect < 1e-6
    assert pole.to_dict()["label"] == 0


def test_random_model_all_levels():
    rng = np.random.default_rng(11)
    basis = FreeBasis(np.sort(rng.uniform(0, 1, 6)))
    hi = random_hermitian(rng, 6, 0.2 * basis.min_gap())
    model = InteractionModel.instantaneous(hi)
    contour = ZContour.standard(basis, n_points=60)
    sol = solve_t_ode(model, basis, contour)
    w, v = eigen_pairs(basis, hi)
    for n in range(6):
        ch = extract_channel(sol, basis, n)
        pole = analyse_level(ch, basis)
        assert pole.energy.real == pytest.approx(w[n], abs=1e-10)
        vec = v[:, n]
        assert np.allclose(np.outer(pole.psi_prime, np.conj(pole.psi)),
                           np.outer(vec, vec.conj()), atol=1e-8)


def test_extract_and_direct_channels_agree(two_level, two_level_contour):
    basis, model = two_level
    sol = solve_t_ode(model, basis, two_level_contour)
    a = extract_channel(sol, basis, 1)
    b = solve_channel_ode(model, basis, 1, two_level_contour)
    rel = max(np.linalg.norm(x - y) / np.linalg.norm(x) for x, y in zip(a.c_samples, b.c_samples))
    assert rel < 1e-7
    assert a.provenance != b.provenance
    with pytest.raises(UnknownLabel):
        extract_channel(sol, basis, 2)


def test_broadened_search_extrapolates_to_real_pole(two_level, two_level_contour):
    basis, model = two_level
    ch = solve_channel_ode(model, basis, 1, two_level_contour)
    e = find_pole(ch, basis, broadening=(1e-2, 5e-3, 2.5e-3))
    top = (1 + np.sqrt(1.04)) / 2
    assert abs(e - top) < 1e-6


def test_stationarity_of_eigenstate(two_level, two_level_contour):
    basis, model = two_level
    ch = solve_channel_ode(model, basis, 0, two_level_contour)
    pole = analyse_level(ch, basis)
    h = basis.h0() + model.h_matrix
    state = pole.psi / np.linalg.norm(pole.psi)
    d = stationarity_diagnostic(lambda t: expm(-1j * h * t), pole, np.linspace(0, 10, 11), state)
    assert d < 1e-9


def test_fit_decay_rate_exact_exponential():
    t = np.linspace(0, 3, 31)
    assert fit_decay_rate(t, 0.9 * np.exp(-0.7 * t)) == pytest.approx(0.7, rel=1e-12)


def test_broadened_level_reports_state_difference():
    basis = FreeBasis.ladder(20, 0.0, 0.05, extra=[0.51])
    n = int(np.argmin(np.abs(basis.energies - 0.51)))
    h = np.zeros((21, 21))
    h[n, :] = h[:, n] = 0.03
    h[n, n] = 0.0
    model = InteractionModel.instantaneous(h)
    ch = solve_channel_ode(model, basis, n, ZContour.standard(basis, n_points=20))
    pole = analyse_level(ch, basis, broadening=(0.3, 0.2, 0.15))
    assert pole.width > 0
    # for a decaying level the left and right vectors differ (reported, not bounded)
    assert 0 < pole.diagnostics["psi_difference"] < np.inf
