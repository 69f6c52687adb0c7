"""Leading-order long-time asymptotics: nu, chi, delta0, the dispersive amplitude g and the composite prediction."""
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .pcf import rgamma_complex
from .solitons import SolitonData, blaschke, soliton_field

ZERO_GAMMA = 1e-12
DEGENERATE_DET = 1e-8
TAIL_LIMIT = 1e-4


class DegenerateReflectionError(ValueError):
    pass


class TailCoverageError(ValueError):
    pass


@dataclass(frozen=True)
class AsymptoticParams:
    k0: float
    t: float
    nu: float
    chi: complex
    delta0: complex
    gamma_at_k0: np.ndarray
    T0: complex = 1.0 + 0j
    chi_error: float = 0.0


@dataclass(frozen=True)
class LeadingTerm:
    g: np.ndarray


def _L_minus_one(gamma):
    gamma = np.asarray(gamma, dtype=complex)
    fro = np.sum(np.abs(gamma) ** 2, axis=(-2, -1))
    return fro + np.abs(np.linalg.det(gamma)) ** 2


def _L(gamma):
    return 1.0 + _L_minus_one(gamma)


def compute_nu(gamma_k0):
    g = np.asarray(gamma_k0, dtype=complex)
    if not np.all(np.isfinite(g)):
        raise ValueError("gamma(k0) has non-finite entries")
    return float(-np.log1p(_L_minus_one(g)) / (2 * np.pi))


class GammaSamples:
    """gamma sampled on an increasing real k-grid, with spline interpolation of each entry."""

    def __init__(self, ks, gamma):
        ks = np.asarray(ks, dtype=float)
        gamma = np.asarray(gamma, dtype=complex).reshape(len(ks), 2, 2)
        if np.any(np.diff(ks) <= 0):
            raise ValueError("k samples must be strictly increasing")
        self.ks = ks
        self.gamma = gamma
        self._re = CubicSpline(ks, gamma.real.reshape(len(ks), 4))
        self._im = CubicSpline(ks, gamma.imag.reshape(len(ks), 4))
        self._logL = CubicSpline(ks, np.log1p(_L_minus_one(gamma)))

    @classmethod
    def zero(cls, k_max=10.0, n=5):
        ks = np.linspace(-k_max, k_max, n)
        return cls(ks, np.zeros((n, 2, 2), complex))

    def __call__(self, k):
        k = float(k)
        if k < self.ks[0] or k > self.ks[-1]:
            return np.zeros((2, 2), complex)
        return (self._re(k) + 1j * self._im(k)).reshape(2, 2)

    def log_L(self, k):
        if k < self.ks[0] or k > self.ks[-1]:
            return 0.0
        return float(self._logL(k))

    def edge_magnitude(self):
        return float(max(np.abs(self.gamma[0]).max(), np.abs(self.gamma[-1]).max()))

    def is_zero(self):
        return not np.any(np.abs(self.gamma) > ZERO_GAMMA)


def _chi_integral(logw, k0, left):
    """(1/2 pi i) [int_{k0-1}^{k0} (w(xi) - w(k0))/(xi - k0) + int_{left}^{k0-1} w(xi)/(xi - k0)] for a spline w."""
    lk0 = float(logw(k0))
    slope = float(logw(k0, 1))

    def near(xi):
        d = xi - k0
        return slope if abs(d) < 1e-12 else (float(logw(xi)) - lk0) / d

    knots = logw.x
    pts = knots[(knots > k0 - 1) & (knots < k0)]
    i1, e1 = quad(near, k0 - 1, k0, limit=max(50, 4 * len(pts)), points=pts[:: max(1, len(pts) // 40)] if len(pts) else None)
    i2 = e2 = 0.0
    if left < k0 - 1:
        pts2 = knots[(knots > left) & (knots < k0 - 1)]
        i2, e2 = quad(lambda xi: float(logw(xi)) / (xi - k0), left, k0 - 1, limit=max(50, 4 * len(pts2)),
                      points=pts2[:: max(1, len(pts2) // 40)] if len(pts2) else None)
    return complex((i1 + i2) / (2j * np.pi)), float((e1 + e2) / (2 * np.pi))


def _check_tail(samples):
    edge = np.abs(samples.gamma[0]).max()
    if edge > TAIL_LIMIT:
        raise TailCoverageError(f"|gamma| = {edge:.2e} at the left grid edge k = {samples.ks[0]}; widen the k-grid")


def compute_chi(samples: GammaSamples, k0):
    """chi(k0) and a quadrature error estimate.

    The first integral runs over [k0-1, k0] with the log ratio against L(k0), the second over
    (-inf, k0-1] with plain log L; the tail left of the sample grid is dropped."""
    if samples.is_zero():
        return 0j, 0.0
    _check_tail(samples)
    k0 = float(k0)
    if not samples.ks[0] <= k0 <= samples.ks[-1]:
        raise ValueError(f"k0 = {k0} lies outside the sampled k range")
    return _chi_integral(samples._logL, k0, samples.ks[0])


def compute_delta0(t, k0, nu, chi):
    if not t > 0:
        raise ValueError("t must be positive")
    return complex(np.exp(2j * t * k0 * k0) * np.exp(-0.5j * nu * np.log(8 * t)) * np.exp(chi))


def stationary_params(samples: GammaSamples, x, t, sd: SolitonData = None):
    """AsymptoticParams at k0 = -x/(4t)."""
    if not t > 0:
        raise ValueError("t must be positive")
    k0 = -x / (4.0 * t)
    gk = samples(k0)
    nu = compute_nu(gk)
    chi, err = compute_chi(samples, k0)
    d0 = compute_delta0(t, k0, nu, chi)
    T0 = np.exp(chi)
    if sd is not None and sd.n:
        below = [j for j in range(sd.n) if sd.ks[j].real < k0]
        T0 = T0 * complex(blaschke(k0, below, sd.ks))
    return AsymptoticParams(k0, t, nu, chi, d0, gk, complex(T0), err)


def _adjugate_pattern(g):
    return np.array([[-g[1, 1], g[0, 1]], [g[1, 0], -g[0, 0]]])


def _check_degenerate(gk):
    if np.abs(gk).max() < ZERO_GAMMA:
        return True
    if abs(np.linalg.det(-gk)) <= DEGENERATE_DET:
        raise DegenerateReflectionError(
            f"degenerate reflection: |det gamma(k0)| = {abs(np.linalg.det(gk)):.2e} with gamma != 0")
    return False


def leading_term_g(params: AsymptoticParams) -> LeadingTerm:
    gk = np.asarray(params.gamma_at_k0, dtype=complex)
    if _check_degenerate(gk):
        return LeadingTerm(np.zeros((2, 2), complex))
    nu = params.nu
    pref = (np.sqrt(np.pi) * params.delta0 ** 2 * np.exp(-np.pi * nu / 2) * np.exp(-0.75j * np.pi)
            * rgamma_complex(-1j * nu) / np.linalg.det(-gk))
    return LeadingTerm(pref * _adjugate_pattern(gk))


def beta12(gamma_k0, nu):
    gk = np.asarray(gamma_k0, dtype=complex)
    pat = np.array([[-gk[1, 1], np.conj(gk[1, 0])], [np.conj(gk[0, 1]), -np.conj(gk[0, 0])]])
    return (nu * np.sqrt(2 * np.pi) * np.exp(-np.pi * nu / 2) * np.exp(0.75j * np.pi)
            * rgamma_complex(1 - 1j * nu) / np.linalg.det(-gk)) * pat


def beta12_crosscheck(gamma_k0, nu, delta0, t):
    """Amplitude from the local parabolic-cylinder model and its relative gap to leading_term_g."""
    gk = np.asarray(gamma_k0, dtype=complex)
    if _check_degenerate(gk):
        return np.zeros((2, 2), complex), 0.0
    m12 = -1j * delta0 ** 2 * beta12(gk, nu)
    g_alt = 1j / np.sqrt(2) * m12
    params = AsymptoticParams(0.0, t, nu, 0j, delta0, gk)
    g = leading_term_g(params).g
    return g_alt, float(np.linalg.norm(g_alt - g) / np.linalg.norm(g))


def channel_basis(gamma_k0, tol=1e-8):
    """Real orthogonal O with O^T gamma O diagonal, for a symmetric normal gamma(k0)."""
    gk = np.asarray(gamma_k0, dtype=complex)
    # real and imaginary parts commute for symmetric normal gamma; diagonalize a generic combination
    _, O = np.linalg.eigh(gk.real + np.pi / 7 * gk.imag)
    off = abs((O.T @ gk @ O)[0, 1])
    if off > tol * max(1.0, np.abs(gk).max()):
        raise ValueError(f"gamma(k0) is not diagonalized by a real orthogonal basis (off-diagonal {off:.2e})")
    return O


def channel_amplitude(samples: GammaSamples, x, t, basis=None, decouple_tol=1e-6):
    """t^-1/2 times the scalar leading term applied in each channel of a fixed real eigenbasis of gamma.

    Valid for data that split into two scalar problems, Q = O diag(q_a, q_b) O^T with constant O.
    Each channel carries its own nu_i = -log(1 + |r_i|^2)/(2 pi) and chi_i."""
    if samples.is_zero():
        return np.zeros((2, 2), complex)
    _check_tail(samples)
    k0 = -x / (4.0 * t)
    gk = samples(k0)
    if np.abs(gk).max() < ZERO_GAMMA:
        return np.zeros((2, 2), complex)
    O = channel_basis(gk) if basis is None else np.asarray(basis, dtype=float)
    proj = np.einsum("ji,kjl,lm->kim", O, samples.gamma, O)
    leak = np.abs(proj[:, 0, 1]).max()
    if leak > decouple_tol * max(1.0, np.abs(samples.gamma).max()):
        raise ValueError(f"gamma does not decouple in a fixed basis (leak {leak:.2e})")
    rk = O.T @ gk @ O
    out = np.zeros((2, 2), complex)
    for i in range(2):
        r0 = rk[i, i]
        if abs(r0) < ZERO_GAMMA:
            continue
        logw = CubicSpline(samples.ks, np.log1p(np.abs(proj[:, i, i]) ** 2))
        nu = float(-np.log1p(abs(r0) ** 2) / (2 * np.pi))
        chi, _ = _chi_integral(logw, k0, samples.ks[0])
        d0 = compute_delta0(t, k0, nu, chi)
        amp = (np.sqrt(np.pi) * d0 ** 2 * np.exp(-np.pi * nu / 2) * np.exp(-0.75j * np.pi)
               * rgamma_complex(-1j * nu) / (-r0))
        out += amp * np.outer(O[:, i], O[:, i])
    return out / np.sqrt(t)


def dispersive_term(samples: GammaSamples, x, t, sd: SolitonData = None, amplitude="paper"):
    """t^-1/2 g at one (x, t). amplitude="channel" uses channel_amplitude instead of the matrix formula."""
    if samples.is_zero():
        return np.zeros((2, 2), complex)
    if amplitude == "channel":
        return channel_amplitude(samples, x, t)
    if amplitude != "paper":
        raise ValueError(f"unknown amplitude {amplitude!r}")
    p = stationary_params(samples, x, t, sd)
    return leading_term_g(p).g / np.sqrt(t)


def predict(x, t, sd: SolitonData, samples: GammaSamples, amplitude="paper"):
    """Soliton part from (already cone-modulated) data plus the dispersive term, for an array of x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = soliton_field(sd, x, t) if sd.n else np.zeros((len(x), 2, 2), complex)
    if samples.is_zero():
        return out
    return out + np.array([dispersive_term(samples, xv, t, amplitude=amplitude) for xv in x])
