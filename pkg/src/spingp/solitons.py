"""Reflectionless N-soliton solutions and cone localization."""
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import sqrtm

EXP_LIMIT = 600.0  # |Re| of exponents handed to exp()
COND_LIMIT = 1e12


class SolitonRangeError(ValueError):
    pass


class ConditioningError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolitonData:
    ks: np.ndarray  # (N,) complex, Im > 0
    fs: np.ndarray  # (N, 2, 2) complex symmetric

    def __post_init__(self):
        ks = np.atleast_1d(np.asarray(self.ks, dtype=complex))
        fs = np.asarray(self.fs, dtype=complex).reshape(len(ks), 2, 2)
        if np.any(ks.imag <= 0):
            raise ValueError("poles must lie in the upper half-plane")
        for i in range(len(ks)):
            for j in range(i + 1, len(ks)):
                if abs(ks[i] - ks[j]) <= 1e-6:
                    raise ValueError("poles must be distinct")
        for f in fs:
            if not np.any(f):
                raise ValueError("norming matrices must be nonzero")
            if np.abs(f - f.T).max() > 1e-10 * max(1.0, np.abs(f).max()):
                raise ValueError("norming matrices must be symmetric")
        object.__setattr__(self, "ks", ks)
        object.__setattr__(self, "fs", fs)

    @classmethod
    def from_poles(cls, poles):
        """poles: iterable of (k, f) pairs."""
        poles = list(poles)
        if not poles:
            return cls.empty()
        return cls(np.array([p[0] for p in poles]), np.array([p[1] for p in poles]))

    @classmethod
    def empty(cls):
        return cls(np.zeros(0, complex), np.zeros((0, 2, 2), complex))

    @property
    def n(self):
        return len(self.ks)

    def subset(self, idx):
        idx = list(idx)
        return SolitonData(self.ks[idx], self.fs[idx])


def theta_exponent(k, x, t):
    """2i t theta(k) = 2i (x k + 2 t k^2)."""
    return 2j * (x * k + 2 * t * k * k)


def _exp_factors(ks, x, t):
    z = theta_exponent(np.asarray(ks)[None, :], np.atleast_1d(x)[:, None], t)
    if np.abs(z.real).max(initial=0.0) > EXP_LIMIT:
        raise SolitonRangeError(
            f"|Re 2it theta| = {np.abs(z.real).max():.1f} exceeds {EXP_LIMIT}; (x, t) out of range for these poles")
    return np.exp(z)


def blaschke(k, delta, poles):
    """prod over j in delta of (k - k_j)/(k - conj(k_j))."""
    poles = np.asarray(poles, dtype=complex)
    out = np.ones_like(np.asarray(k, dtype=complex))
    for j in delta:
        kj = poles[j]
        den = k - np.conj(kj)
        if np.any(np.abs(den) < 1e-14):
            raise ZeroDivisionError(f"k collides with conj pole {np.conj(kj)}")
        out = out * (k - kj) / den
    return out


def _cauchy_blocks(sd):
    """K_jl = -i f_j^dagger / (conj(k_j) - k_l) as a (2N, 2N) array."""
    N = sd.n
    fd = np.conj(np.swapaxes(sd.fs, -1, -2))
    den = np.conj(sd.ks)[:, None] - sd.ks[None, :]
    K = -1j * fd[:, None, :, :] / den[:, :, None, None]
    return K.transpose(0, 2, 1, 3).reshape(2 * N, 2 * N)


def build_system_batch(sd, x, t):
    """A (nx, 2N, 2N) and H (nx, 2N, 2) for every x in the array x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    N = sd.n
    E = _exp_factors(sd.ks, x, t)  # (nx, N)
    Eb = np.repeat(np.conj(E), 2, axis=1)  # h_j^dagger carries conj(E_j)
    K = _cauchy_blocks(sd)
    A = Eb[:, :, None] * K[None]
    fd = np.conj(np.swapaxes(sd.fs, -1, -2)).reshape(2 * N, 2)
    H = -2j * Eb[:, :, None] * fd[None]
    return A, H


def build_system(sd, x, t):
    A, H = build_system_batch(sd, [x], t)
    return A[0], H[0]


@dataclass
class SolveReport:
    log_det_min: float = np.inf  # min of log det(I + A conj(A)); positive means det > 1
    cond_max: float = 0.0
    asym_max: float = 0.0
    extra: dict = field(default_factory=dict)


def symmetric_factor(f, tol=1e-14):
    """B with B @ B.T == f for a complex symmetric 2x2 f (B is 2x1 when f has rank one)."""
    f = np.asarray(f, dtype=complex)
    scale = np.abs(f).max()
    if abs(np.linalg.det(f)) > tol * scale ** 2:
        return sqrtm(f)
    j = int(np.argmax(np.abs(np.diag(f))))
    return (f[:, j] / np.sqrt(f[j, j]))[:, None]


def _reduced_blocks(sd):
    Bs = [symmetric_factor(f) for f in sd.fs]
    owner = np.concatenate([[j] * B.shape[1] for j, B in enumerate(Bs)])
    Bcat = np.concatenate(Bs, axis=1)  # (2, R)
    kr = sd.ks[owner]
    # C_jl = -i B_j^dagger B_l / (conj(k_j) - k_l)
    C = -1j * (np.conj(Bcat).T @ Bcat) / (np.conj(kr)[:, None] - kr[None, :])
    return Bcat, owner, C


def _solve_batch(sd, x, t, report=None):
    """Solve (I + A conj(A)) F = H through F = conj(E) conj(B) Phi.

    With P = conj(E) Phi and W = E conj(C) P the system becomes
    [[conj(E)^-1, C], [-conj(C), E^-1]] [P; W] = [-2i B^dagger; 0] and
    q = sum_j conj(B_j) P_j, which stays well scaled when |E| is huge or tiny."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    Bcat, owner, C = _reduced_blocks(sd)
    R = len(owner)
    E = _exp_factors(sd.ks, x, t)[:, owner]  # (nx, R)
    M = np.zeros((len(x), 2 * R, 2 * R), dtype=complex)
    idx = np.arange(R)
    M[:, idx, idx] = 1.0 / np.conj(E)
    M[:, R + idx, R + idx] = 1.0 / E
    M[:, :R, R:] = C
    M[:, R:, :R] = -np.conj(C)
    rhs = np.zeros((2 * R, 2), dtype=complex)
    rhs[:R] = -2j * np.conj(Bcat).T
    # equilibrate rows and columns before the dense solve
    d = 1.0 / np.sqrt(np.abs(M).max(axis=2))
    Ms = d[:, :, None] * M * d[:, None, :]
    Y = np.linalg.solve(Ms, d[:, :, None] * rhs[None])
    P = d[:, :R, None] * Y[:, :R]
    q = np.conj(Bcat)[None] @ P
    if report is not None:
        report.cond_max = max(report.cond_max, float(np.linalg.cond(Ms).max()))
        A, _ = build_system_batch(sd, x, t)
        # rows where A conj(A) neither overflows nor underflows
        ok = (np.abs(E).max(axis=1) < 1e8) & (np.abs(E).max(axis=1) > 1e-150)
        if np.any(ok):
            lam = np.linalg.eigvals(A[ok] @ np.conj(A[ok]))
            logdet = np.sum(0.5 * np.log1p(2 * lam.real + np.abs(lam) ** 2), axis=1)
            report.log_det_min = min(report.log_det_min, float(logdet.min()))
    return q


def solve_direct(sd, x, t):
    """Plain dense solve of (I + A conj(A)) F = H; q = sum of the 2x2 blocks of F."""
    A, H = build_system(sd, x, t)
    F = np.linalg.solve(np.eye(2 * sd.n) + A @ np.conj(A), H)
    q = F.reshape(sd.n, 2, 2).sum(axis=0)
    return 0.5 * (q + q.T)


def soliton_field(sd, x, t, report=None, check_conditioning=True):
    """Q_sol at every x of the array, shape (nx, 2, 2)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if sd.n == 0:
        return np.zeros((len(x), 2, 2), complex)
    if report is None and check_conditioning:
        report = SolveReport()
    q = _solve_batch(sd, x, t, report)
    asym = np.abs(q[:, 0, 1] - q[:, 1, 0]).max()
    qs = 0.5 * (q + np.swapaxes(q, -1, -2))
    if report is not None:
        report.asym_max = max(report.asym_max, float(asym))
        if check_conditioning and report.cond_max > COND_LIMIT:
            raise ConditioningError(f"condition estimate {report.cond_max:.2e} exceeds {COND_LIMIT:g}")
    return qs


def solve_soliton(sd, x, t, report=None):
    return soliton_field(sd, [x], t, report)[0]


def det_I_plus_AAbar(sd, x, t):
    A, _ = build_system(sd, x, t)
    return np.linalg.det(np.eye(2 * sd.n) + A @ np.conj(A))


def log_det_I_plus_AAbar(sd, x, t):
    """log det(I + A conj(A)) as a sum of log1p over the eigenvalues of A conj(A).

    Stays accurate when A conj(A) is far below machine epsilon. Also returns the eigenvalues."""
    A, _ = build_system(sd, x, t)
    lam = np.linalg.eigvals(A @ np.conj(A))
    # Re log(1 + z) = log1p(2 Re z + |z|^2) / 2 keeps tiny eigenvalues
    return float(np.sum(0.5 * np.log1p(2 * lam.real + np.abs(lam) ** 2))), lam


@dataclass(frozen=True)
class ConeSpec:
    x1: float
    x2: float
    v1: float
    v2: float

    def __post_init__(self):
        if not self.x1 <= self.x2:
            raise ValueError("cone requires x1 <= x2")
        if not self.v1 < self.v2:
            raise ValueError("cone requires v1 < v2")

    @property
    def interval(self):
        return (-self.v2 / 4.0, -self.v1 / 4.0)

    def contains(self, x, t):
        lo = self.x1 + self.v1 * t
        hi = self.x2 + self.v2 * t
        return (np.asarray(x) >= lo) & (np.asarray(x) <= hi)

    def cross_section(self, t, n=201):
        return np.linspace(self.x1 + self.v1 * t, self.x2 + self.v2 * t, n)


@dataclass(frozen=True)
class ConeDecomposition:
    inside: SolitonData
    outside: SolitonData
    delta_minus: tuple
    delta_plus: tuple
    mu_rate: float
    modulated: SolitonData


def polarization_projector(f):
    """Orthogonal projector onto the range of f (I for rank two)."""
    B = symmetric_factor(f)
    if B.shape[1] == 2:
        return np.eye(2)
    u = B[:, 0]
    return np.outer(u, np.conj(u)) / np.vdot(u, u).real


def _matrix_dressing(sd, inside, dminus):
    """Remove the poles of dminus one at a time, dressing the remaining f_l by
    D f_l D^T with D = I + (b_j(k_l) - 1) P_j, P_j the polarization projector of f_j."""
    fs = [f.copy() for f in sd.fs]
    alive = list(range(sd.n))
    for j in dminus:
        P = polarization_projector(fs[j])
        alive.remove(j)
        for l in alive:
            D = np.eye(2) + (blaschke(sd.ks[l], [j], sd.ks) - 1) * P
            fs[l] = D @ fs[l] @ D.T
    return [0.5 * (fs[l] + fs[l].T) for l in inside]


def cone_filter(sd, cone, dressing="scalar"):
    """Split poles by Re k_j against the cone interval and modulate the inside norming constants.

    dressing="scalar" multiplies each inside f_j by a_Delta(k_j)^2 over the poles left of the
    interval. dressing="matrix" uses the projector dressing, which agrees with the scalar rule
    when all polarizations are parallel or the removed f_j have rank two."""
    if dressing not in ("scalar", "matrix"):
        raise ValueError(f"unknown dressing {dressing!r}")
    a, b = cone.interval
    re = sd.ks.real
    inside = [j for j in range(sd.n) if a <= re[j] <= b]
    dminus = tuple(j for j in range(sd.n) if re[j] < a)
    dplus = tuple(j for j in range(sd.n) if re[j] > b)
    outside = sorted(dminus + dplus)
    if outside:
        dist = np.maximum(a - re[outside], re[outside] - b)
        mu = float(np.min(sd.ks.imag[outside] * dist))
    else:
        mu = np.inf
    if dressing == "scalar":
        mod_f = [sd.fs[j] * blaschke(sd.ks[j], dminus, sd.ks) ** 2 for j in inside]
    else:
        mod_f = _matrix_dressing(sd, inside, dminus)
    modulated = SolitonData(sd.ks[inside], np.array(mod_f).reshape(len(inside), 2, 2)) if inside else SolitonData.empty()
    return ConeDecomposition(sd.subset(inside) if inside else SolitonData.empty(),
                             sd.subset(outside) if outside else SolitonData.empty(),
                             dminus, dplus, mu, modulated)


def peak_position(x, amp):
    """Sub-grid location of max(amp) by a parabola through the top three samples."""
    i = int(np.argmax(amp))
    if i == 0 or i == len(amp) - 1:
        return float(x[i])
    y0, y1, y2 = amp[i - 1], amp[i], amp[i + 1]
    den = y0 - 2 * y1 + y2
    off = 0.0 if den == 0 else 0.5 * (y0 - y2) / den
    return float(x[i] + off * (x[1] - x[0]))
