"""Grids, spinor fields, the matrix potential and the PDE-residual oracle."""
import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SpatialGrid:
    x_min: float = -40.0
    x_max: float = 40.0
    n_points: int = 2048

    def __post_init__(self):
        n = int(self.n_points)
        if n < 8 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two >= 8, got {self.n_points}")
        if not self.x_max > self.x_min:
            raise ValueError("x_max must exceed x_min")

    @property
    def length(self):
        return self.x_max - self.x_min

    @property
    def spacing(self):
        return self.length / self.n_points

    @property
    def x(self):
        return self.x_min + self.spacing * np.arange(self.n_points)

    @property
    def wavenumbers(self):
        return 2 * np.pi * np.fft.fftfreq(self.n_points, d=self.spacing)


def _edge_max(grid, *arrays):
    m = max(1, int(np.ceil(0.05 * grid.n_points)))
    return float(max(max(np.abs(a[:m]).max(), np.abs(a[-m:]).max()) for a in arrays))


@dataclass(frozen=True)
class SpinorField:
    grid: SpatialGrid
    q1: np.ndarray
    q0: np.ndarray
    qm1: np.ndarray
    boundary_decay: float = field(init=False)

    def __post_init__(self):
        n = self.grid.n_points
        for name in ("q1", "q0", "qm1"):
            a = np.asarray(getattr(self, name), dtype=complex)
            if a.shape != (n,):
                raise ValueError(f"{name} must have {n} entries, got shape {a.shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} contains non-finite values")
            object.__setattr__(self, name, a)
        object.__setattr__(self, "boundary_decay", _edge_max(self.grid, self.q1, self.q0, self.qm1))


@dataclass(frozen=True)
class MatrixPotential:
    grid: SpatialGrid
    Q: np.ndarray  # shape (n, 2, 2)

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=complex)
        if Q.shape != (self.grid.n_points, 2, 2):
            raise ValueError(f"Q must have shape ({self.grid.n_points}, 2, 2), got {Q.shape}")
        object.__setattr__(self, "Q", Q)

    @property
    def boundary_decay(self):
        return _edge_max(self.grid, self.Q.reshape(len(self.Q), 4))

    def is_symmetric(self, tol=0.0):
        return bool(np.abs(self.Q[:, 0, 1] - self.Q[:, 1, 0]).max() <= tol)


def assemble_Q(f: SpinorField) -> MatrixPotential:
    Q = np.empty((f.grid.n_points, 2, 2), dtype=complex)
    Q[:, 0, 0] = f.q1
    Q[:, 0, 1] = f.q0
    Q[:, 1, 0] = f.q0
    Q[:, 1, 1] = f.qm1
    return MatrixPotential(f.grid, Q)


def disassemble_Q(m: MatrixPotential) -> SpinorField:
    return SpinorField(m.grid, m.Q[:, 0, 0].copy(), m.Q[:, 0, 1].copy(), m.Q[:, 1, 1].copy())


def potential_from_function(grid, func):
    """Sample a callable x -> (n,2,2) array on the grid."""
    return MatrixPotential(grid, func(grid.x))


def gaussian_potential(grid, amplitude=(0.0, 0.3, 0.0), width=1.0, center=0.0, phase_slope=0.0):
    """Q with entries amplitude_j * exp(-((x-c)/w)^2) * exp(i*phase_slope*x).

    amplitude is (q1, q0, qm1)."""
    x = grid.x
    env = np.exp(-(((x - center) / width) ** 2)) * np.exp(1j * phase_slope * x)
    a1, a0, am1 = (complex(v) for v in amplitude)
    return assemble_Q(SpinorField(grid, a1 * env, a0 * env, am1 * env))


def spectral_dxx(grid, Q):
    """Second x-derivative of each matrix entry via FFT; Q has the grid on axis -3."""
    xi = grid.wavenumbers
    Qh = np.fft.fft(Q, axis=-3)
    return np.fft.ifft(-(xi ** 2)[:, None, None] * Qh, axis=-3)


def cubic_term(Q):
    return 2 * Q @ np.conj(np.swapaxes(Q, -1, -2)) @ Q


def pde_residual(traj, index):
    """Sup-norm of iQ_t + Q_xx + 2QQ^dagger Q at snapshot `index`.

    Q_t by central difference between neighbouring snapshots, Q_xx spectrally."""
    times = np.asarray(traj.times, dtype=float)
    if len(times) < 3:
        raise ValueError("trajectory needs at least 3 time samples")
    if index <= 0 or index >= len(times) - 1:
        raise ValueError("index must be interior (not the first or last sample)")
    steps = np.diff(times)
    if np.abs(steps - steps[0]).max() > 1e-9 * max(1.0, abs(steps[0])):
        raise ValueError("time samples are not uniformly spaced")
    dt = steps[0]
    snaps = traj.snapshots
    Qm, Q, Qp = (s.Q if isinstance(s, MatrixPotential) else np.asarray(s)
                 for s in (snaps[index - 1], snaps[index], snaps[index + 1]))
    Qt = (Qp - Qm) / (2 * dt)
    r = 1j * Qt + spectral_dxx(traj.grid, Q) + cubic_term(Q)
    return float(np.abs(r).max())


def total_power(f) -> float:
    """Trapezoid value of the integral of |q1|^2 + 2|q0|^2 + |qm1|^2 over one period of the grid."""
    if isinstance(f, MatrixPotential):
        f = disassemble_Q(f)
    dens = np.abs(f.q1) ** 2 + 2 * np.abs(f.q0) ** 2 + np.abs(f.qm1) ** 2
    # the periodic trapezoid rule closes the last interval back onto x_min
    return float(np.sum(dens) * f.grid.spacing)


CSV_HEADER = ["x", "re_q1", "im_q1", "re_q0", "im_q0", "re_qm1", "im_qm1"]


def write_field_csv(path, f):
    if isinstance(f, MatrixPotential):
        f = disassemble_Q(f)
    cols = [f.grid.x, f.q1.real, f.q1.imag, f.q0.real, f.q0.imag, f.qm1.real, f.qm1.imag]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])


def read_field_csv(path, grid=None):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    x = data[:, 0]
    if grid is None:
        dx = x[1] - x[0]
        grid = SpatialGrid(float(x[0]), float(x[0] + dx * len(x)), len(x))
    return SpinorField(grid, data[:, 1] + 1j * data[:, 2], data[:, 3] + 1j * data[:, 4],
                       data[:, 5] + 1j * data[:, 6])
