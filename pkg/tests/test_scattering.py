import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spingp.core import MatrixPotential
from spingp.scattering import (SpectralDepthError, SpectrumError, det_a, find_discrete_spectrum,
                               identity_errors, norming_constants, re_2it_theta, scattering_matrix,
                               scattering_sweep, solve_jost, stationary_point, theta_phase)

from conftest import soliton_potential


@pytest.fixture(scope="module")
def zero(grid):
    return MatrixPotential(grid, np.zeros((grid.n_points, 2, 2)))


@pytest.fixture(scope="module")
def one_soliton(grid):
    return soliton_potential(grid, [0.5 + 1j], [[[1, 0.5j], [0.5j, -0.25]]])


def test_zero_potential_jost(zero):
    for k in (0.7, 0.3 + 0.5j):
        for d in ("minus", "plus"):
            js = solve_jost(zero, k, d)
            ref = np.eye(4)[:, :js.mu.shape[-1]] if js.columns != "right" else np.eye(4)[:, 2:]
            assert np.array_equal(js.mu, np.broadcast_to(ref, js.mu.shape))


def test_jost_determinant_and_unitarity(corpus):
    for Q0 in corpus:
        for k in (-1.3, 0.0, 0.8):
            for d in ("minus", "plus"):
                js = solve_jost(Q0, k, d)
                assert js.det_error() < 1e-8
                assert js.normalization_error() < 1e-6
                m = js.mu
                assert np.abs(np.conj(np.swapaxes(m, 1, 2)) @ m - np.eye(4)).max() < 1e-7


def test_depth_guard(corpus):
    with pytest.raises(SpectralDepthError):
        solve_jost(corpus[0], 0.3 + 1j, "minus", columns="full")


def test_zero_scattering(zero):
    s = scattering_matrix(zero, 0.4)
    assert np.allclose(s.a, np.eye(2), atol=1e-15)
    assert not np.any(np.abs(s.b) > 1e-15)
    assert not np.any(np.abs(s.gamma) > 1e-15)


def test_identities_on_corpus(corpus):
    ks = np.linspace(-8, 8, 401)
    for Q0 in corpus:
        a, b, gam = scattering_sweep(Q0, ks)
        err = identity_errors(a, b, gam)
        assert max(err.values()) < 1e-6, err
        s = scattering_matrix(Q0, 0.25)
        assert max(s.unitarity_error(), s.transpose_error(), s.symmetry_error(), s.normality_error()) < 1e-6


def test_normality_needs_decoupled_data(grid):
    from conftest import GENERIC
    from spingp.core import gaussian_potential
    a, b, gam = scattering_sweep(gaussian_potential(grid, **GENERIC), np.linspace(-8, 8, 401))
    err = identity_errors(a, b, gam)
    assert max(err["unitarity"], err["transpose"], err["symmetry"]) < 1e-6
    assert err["normality"] > 1e-2


def test_reflectionless_soliton(one_soliton):
    _, Q0 = one_soliton
    _, _, gam = scattering_sweep(Q0, np.linspace(-8, 8, 401))
    assert np.abs(gam).max() < 1e-3


def test_det_a_zero_potential(zero):
    for k in (0.0, 1.0 + 0.5j, -2 + 3j):
        assert abs(det_a(zero, k) - 1) < 1e-14


def test_det_a_vanishes_at_pole(grid):
    _, Q0 = soliton_potential(grid, [1j], [[[1, 0], [0, 0]]])
    assert abs(det_a(Q0, 1j)) < 1e-4
    assert abs(det_a(Q0, 0.5 + 1j)) > 0.1


def test_det_a_matches_scattering_matrix(corpus):
    for Q0 in corpus:
        for k in (-0.9, 0.0, 1.7):
            assert abs(det_a(Q0, k) - np.linalg.det(scattering_matrix(Q0, k).a)) < 1e-6


def test_spectrum_empty(zero, corpus):
    assert len(find_discrete_spectrum(zero, (-2, 2, 0.05, 2))) == 0
    assert len(find_discrete_spectrum(corpus[0], (-2, 2, 0.05, 2))) == 0


def test_spectrum_box_guard(zero):
    with pytest.raises(ValueError):
        find_discrete_spectrum(zero, (-2, 2, 1e-4, 2))


def test_one_soliton_round_trip(one_soliton):
    sd, Q0 = one_soliton
    spec = find_discrete_spectrum(Q0, (-2, 2, 0.05, 2))
    assert len(spec) == 1
    assert abs(spec.ks[0] - sd.ks[0]) < 1e-4
    assert spec.diagnostics["local_windings"] == [1]
    nc = norming_constants(Q0, spec.ks)
    assert np.abs(nc.fs[0] - sd.fs[0]).max() < 1e-3
    assert np.array_equal(nc.fs[0], nc.fs[0].T)


def test_two_soliton_spectrum(grid):
    sd, Q0 = soliton_potential(grid, [-1 + 1j, 1 + 0.5j], [[[1, 0], [0, 0]], [[1, 0.5j], [0.5j, -0.25]]])
    spec = find_discrete_spectrum(Q0, (-2, 2, 0.05, 2))
    assert len(spec) == 2
    assert np.abs(np.sort_complex(spec.ks) - np.sort_complex(sd.ks)).max() < 1e-4


def test_norming_rank_one(grid):
    sd, Q0 = soliton_potential(grid, [1j], [[[1, 0], [0, 0]]])
    nc = norming_constants(Q0, [1j])
    assert np.abs(nc.fs[0] - sd.fs[0]).max() < 1e-3


def test_norming_rank_two(grid):
    sd, Q0 = soliton_potential(grid, [1j], [np.eye(2)])
    nc = norming_constants(Q0, [1j])
    f = nc.fs[0]
    assert np.abs(f - f.T).max() < 1e-10
    assert np.abs(np.sort(np.linalg.eigvals(f).real) - [1, 1]).max() < 1e-3


def test_norming_spurious_pole(one_soliton):
    _, Q0 = one_soliton
    with pytest.raises(SpectrumError):
        norming_constants(Q0, [0.3 + 0.7j])


def test_theta_examples():
    assert stationary_point(0.0, 3.0) == 0
    assert re_2it_theta(1.3, 2.0, 5.0) == 0


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-20, 20), st.floats(0.01, 50))
def test_re_2it_theta_identity(kr, ki, x, t):
    k = complex(kr, ki)
    direct = (2j * t * theta_phase(k, x, t)).real
    assert abs(direct - re_2it_theta(k, x, t)) <= 1e-12 * max(1.0, abs(direct), t * abs(k) ** 2 + abs(x * k))
