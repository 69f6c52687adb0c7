"""Strang split-step Fourier integrator for iQ_t + Q_xx + 2 Q Q^dagger Q = 0."""
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .core import MatrixPotential, SpatialGrid, total_power

BLOWUP_LIMIT = 1e6
DRIFT_LIMIT = 1e-6


class BlowUpError(RuntimeError):
    pass


class ConservationError(RuntimeError):
    pass


@dataclass
class Trajectory:
    grid: SpatialGrid
    times: np.ndarray
    snapshots: list
    power_ledger: np.ndarray

    @property
    def Q(self):
        """All snapshots stacked, shape (n_times, n_points, 2, 2)."""
        return np.stack([s.Q for s in self.snapshots])

    def power_drift(self):
        p0 = self.power_ledger[0]
        if p0 <= 0:
            return 0.0
        return float(np.abs(self.power_ledger - p0).max() / p0)


def exact_nonlinear_step(Q, dt):
    """exp(2i QQ^dagger dt) Q for a single 2x2 matrix or a stack (..., 2, 2).

    QQ^dagger is constant along iQ_t = -2 QQ^dagger Q, so this is the exact flow."""
    Q = np.asarray(Q, dtype=complex)
    M = Q @ np.conj(np.swapaxes(Q, -1, -2))
    a = M[..., 0, 0].real
    d = M[..., 1, 1].real
    c = M[..., 0, 1]
    m0 = 0.5 * (a + d)
    r = np.sqrt((0.5 * (a - d)) ** 2 + np.abs(c) ** 2)
    phi = 2.0 * dt
    # closed-form spectral decomposition of the Hermitian 2x2 M = m0 I + (M - m0 I)
    cs = np.cos(phi * r)
    sn = phi * np.sinc(phi * r / np.pi)
    ph = np.exp(1j * phi * m0)
    E = np.empty(M.shape, dtype=complex)
    E[..., 0, 0] = ph * (cs + 1j * sn * (a - m0))
    E[..., 1, 1] = ph * (cs + 1j * sn * (d - m0))
    E[..., 0, 1] = ph * 1j * sn * c
    E[..., 1, 0] = ph * 1j * sn * np.conj(c)
    return E @ Q


def _nonlinear_sym(u, dt):
    """Exact nonlinear flow for the symmetric state u = (q1, q0, qm1), shape (3, n)."""
    a, b, c = u
    ab, bb, cb = np.conj(a), np.conj(b), np.conj(c)
    m11 = (a * ab).real + (b * bb).real
    m22 = (b * bb).real + (c * cb).real
    m12 = a * bb + b * cb
    m0 = 0.5 * (m11 + m22)
    dz = 0.5 * (m11 - m22)
    r = np.sqrt(dz * dz + (m12 * np.conj(m12)).real)
    phi = 2.0 * dt
    cs = np.cos(phi * r)
    sn = phi * np.sinc(phi * r / np.pi)
    ph = np.exp(1j * phi * m0)
    e11 = ph * (cs + 1j * sn * dz)
    e22 = ph * (cs - 1j * sn * dz)
    e12 = ph * 1j * sn * m12
    e21 = ph * 1j * sn * np.conj(m12)
    return np.stack([e11 * a + e12 * b, e11 * b + e12 * c, e21 * b + e22 * c])


def _to_state(Q):
    return np.stack([Q[:, 0, 0], 0.5 * (Q[:, 0, 1] + Q[:, 1, 0]), Q[:, 1, 1]])


def _from_state(u):
    Q = np.empty((u.shape[1], 2, 2), dtype=complex)
    Q[:, 0, 0] = u[0]
    Q[:, 0, 1] = u[1]
    Q[:, 1, 0] = u[1]
    Q[:, 1, 1] = u[2]
    return Q


def evolve(Q0: MatrixPotential, t_end, dt=1e-3, store_every=100, dealias=False, t_start=0.0,
           check_drift=True):
    """Integrate from t_start to t_end. A negative dt integrates backwards in time.

    Snapshots are stored every `store_every` steps, including both ends.
    The input must be symmetric (it is the state space of the equation)."""
    grid = Q0.grid
    span = t_end - t_start
    if dt == 0 or span == 0 or np.sign(span) != np.sign(dt):
        raise ValueError("dt must be nonzero and point from t_start towards t_end")
    if abs(dt) > 1e-2:
        raise ValueError(f"|dt| = {abs(dt)} exceeds the stability guard 1e-2")
    n_steps = int(round(span / dt))
    if n_steps < 1 or abs(n_steps * dt - span) > 1e-9 * max(1.0, abs(span)):
        raise ValueError("t_end - t_start must be an integer multiple of dt")
    store_every = int(store_every)
    if store_every < 1 or n_steps % store_every:
        raise ValueError(f"number of steps ({n_steps}) must be a multiple of store_every ({store_every})")
    if not Q0.is_symmetric(tol=1e-12 * max(1.0, np.abs(Q0.Q).max())):
        raise ValueError("initial potential must be symmetric")

    xi = grid.wavenumbers
    half = np.exp(-1j * xi ** 2 * dt / 2)
    full = half * half
    mask = None
    if dealias:
        mask = np.abs(xi) <= (2.0 / 3.0) * np.abs(xi).max()

    p0 = total_power(Q0)
    times = [t_start]
    snaps = [MatrixPotential(grid, Q0.Q.copy())]
    ledger = [p0]

    uh = sfft.fft(_to_state(Q0.Q), axis=1) * half
    for step in range(1, n_steps + 1):
        u = _nonlinear_sym(sfft.ifft(uh, axis=1), dt)
        uh = sfft.fft(u, axis=1)
        if mask is not None:
            uh *= mask
        if step % store_every == 0:
            uh *= half
            u = sfft.ifft(uh, axis=1)
            if not np.all(np.isfinite(u)) or np.abs(u).max() > BLOWUP_LIMIT:
                raise BlowUpError(f"|Q| exceeded {BLOWUP_LIMIT:g} at t = {t_start + step * dt:g}")
            snap = MatrixPotential(grid, _from_state(u))
            p = total_power(snap)
            if check_drift and p0 > 0 and abs(p - p0) / p0 > DRIFT_LIMIT:
                raise ConservationError(f"relative power drift {abs(p - p0) / p0:.3e} at t = {t_start + step * dt:g}")
            times.append(t_start + step * dt)
            snaps.append(snap)
            ledger.append(p)
            if step < n_steps:
                uh *= half
        else:
            uh *= full
    return Trajectory(grid, np.array(times), snaps, np.array(ledger))
