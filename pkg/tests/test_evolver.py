import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spingp.core import MatrixPotential, SpatialGrid, gaussian_potential
from spingp.evolver import BlowUpError, evolve, exact_nonlinear_step
from spingp.solitons import SolitonData, soliton_field


def test_zero_stays_zero(grid):
    Q0 = MatrixPotential(grid, np.zeros((grid.n_points, 2, 2)))
    tr = evolve(Q0, 1.0, dt=1e-2, store_every=10)
    assert len(tr.times) == 11
    assert tr.times[0] == 0 and abs(tr.times[-1] - 1.0) < 1e-12
    assert not np.any(tr.Q)


def test_nonlinear_step_examples():
    assert not np.any(exact_nonlinear_step(np.zeros((2, 2)), 0.1))
    dt = 0.37
    out = exact_nonlinear_step(np.array([[1, 0], [0, 0]]), dt)
    assert np.allclose(out, [[np.exp(2j * dt), 0], [0, 0]], atol=1e-15)


def test_nonlinear_step_preserves_QQdagger():
    rng = np.random.default_rng(7)
    Q = rng.normal(size=(1000, 2, 2)) + 1j * rng.normal(size=(1000, 2, 2))
    dt = rng.uniform(0, 0.1, size=(1000, 1, 1))
    out = np.array([exact_nonlinear_step(q, d[0, 0]) for q, d in zip(Q, dt)])
    M = Q @ np.conj(np.swapaxes(Q, 1, 2))
    Mo = out @ np.conj(np.swapaxes(out, 1, 2))
    assert np.abs(Mo - M).max() < 1e-12
    # batched call agrees with the per-matrix call
    assert np.allclose(exact_nonlinear_step(Q, 0.05), [exact_nonlinear_step(q, 0.05) for q in Q], atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(1e-4, 1e-1))
def test_nonlinear_step_is_the_flow(seed, dt):
    # two half steps equal one full step, and the derivative at 0 is 2i QQ^dagger Q
    rng = np.random.default_rng(seed)
    Q = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    Q = 0.5 * (Q + Q.T)
    half = exact_nonlinear_step(exact_nonlinear_step(Q, dt / 2), dt / 2)
    assert np.abs(half - exact_nonlinear_step(Q, dt)).max() < 1e-12 * max(1, np.abs(Q).max())
    h = 1e-6
    d = (exact_nonlinear_step(Q, h) - exact_nonlinear_step(Q, -h)) / (2 * h)
    assert np.abs(d - 2j * Q @ Q.conj().T @ Q).max() < 1e-6 * max(1, np.abs(Q).max() ** 3)


def test_one_soliton_matches_closed_form(grid):
    sd = SolitonData([1j], [[[1, 0], [0, 0]]])
    Q0 = MatrixPotential(grid, soliton_field(sd, grid.x, 0.0))
    tr = evolve(Q0, 5.0, dt=2.5e-4, store_every=20000)
    assert np.abs(tr.snapshots[-1].Q - soliton_field(sd, grid.x, 5.0)).max() < 1e-4


def test_gaussian_power_conservation(grid):
    Q0 = gaussian_potential(grid, (0.0, 0.3, 0.0), width=1.0)
    tr = evolve(Q0, 50.0, dt=1e-3, store_every=1000)
    assert tr.power_drift() < 1e-9


def test_self_convergence_order():
    g = SpatialGrid(-40, 40, 1024)
    Q0 = gaussian_potential(g, (0.2, 0.3, -0.1j), width=1.0)
    finals = [evolve(Q0, 5.0, dt=dt, store_every=int(round(5.0 / dt))).snapshots[-1].Q
              for dt in (1e-2, 5e-3, 2.5e-3)]
    e1 = np.abs(finals[0] - finals[1]).max()
    e2 = np.abs(finals[1] - finals[2]).max()
    assert 3.5 <= e1 / e2 <= 4.5


def test_symmetry_and_time_reversal(grid):
    Q0 = gaussian_potential(grid, (0.25, 0.3j, 0.1), width=1.2)
    tr = evolve(Q0, 5.0, dt=1e-3, store_every=1000)
    for s in tr.snapshots:
        assert np.abs(s.Q - np.swapaxes(s.Q, 1, 2)).max() < 1e-12
    back = evolve(tr.snapshots[-1], 0.0, dt=-1e-3, store_every=5000, t_start=5.0)
    assert np.abs(back.snapshots[-1].Q - Q0.Q).max() < 1e-6


def test_guards(grid):
    Q0 = gaussian_potential(grid, (0.0, 0.3, 0.0))
    with pytest.raises(ValueError):
        evolve(Q0, 1.0, dt=0.05, store_every=1)
    with pytest.raises(ValueError):
        evolve(Q0, 1.0, dt=1e-2, store_every=7)
    asym = Q0.Q.copy()
    asym[:, 0, 1] += 0.1
    with pytest.raises(ValueError):
        evolve(MatrixPotential(grid, asym), 1.0, dt=1e-2, store_every=10)
    huge = gaussian_potential(grid, (0.0, 2e6, 0.0))
    with pytest.raises(BlowUpError):
        evolve(huge, 1e-2, dt=1e-2, store_every=1)
