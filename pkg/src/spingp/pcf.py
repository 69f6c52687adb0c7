"""Complex Gamma function and parabolic cylinder functions D_a(zeta)."""
from dataclasses import dataclass

import numpy as np

# Lanczos coefficients, g = 7, n = 9
_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)

SERIES_RADIUS = 8.0
STOKES_BAND = 0.05


def gamma_complex(z):
    """Gamma(z) for complex z by the Lanczos approximation, with reflection for Re z < 1/2."""
    z = complex(z)
    if z.imag == 0 and z.real <= 0 and z.real == int(z.real):
        raise ValueError(f"Gamma has a pole at {z.real:g}")
    if z.real < 0.5:
        return np.pi / (np.sin(np.pi * z) * gamma_complex(1 - z))
    z -= 1
    x = _LANCZOS[0]
    for i in range(1, len(_LANCZOS)):
        x += _LANCZOS[i] / (z + i)
    t = z + _G + 0.5
    return np.sqrt(2 * np.pi) * t ** (z + 0.5) * np.exp(-t) * x


def rgamma_complex(z):
    """1/Gamma(z), zero at the non-positive integers."""
    z = complex(z)
    if z.imag == 0 and z.real <= 0 and z.real == int(z.real):
        return 0j
    return 1.0 / gamma_complex(z)


@dataclass(frozen=True)
class PcfEvaluation:
    a: complex
    zeta: complex
    value: complex
    method: str
    est_error: float


def pcf_origin(a):
    """D_a(0) and D_a'(0)."""
    a = complex(a)
    d0 = 2 ** (a / 2) * np.sqrt(np.pi) * rgamma_complex((1 - a) / 2)
    d1 = -(2 ** ((a + 1) / 2)) * np.sqrt(np.pi) * rgamma_complex(-a / 2)
    return d0, d1


def _w_series(a, zeta, nmax=200, tol=1e-18):
    """w with D_a = exp(-zeta^2/4) w, from w'' - zeta w' + a w = 0; returns w, w', w'', |terms| sum, tail."""
    d0, d1 = pcf_origin(a)
    c = [d0, d1]  # w(0) = D_a(0), w'(0) = D_a'(0)
    w = dw = ddw = 0j
    absum = 0.0
    zp = 1.0 + 0j  # zeta^n
    zp1 = 0j  # zeta^(n-1)
    zp2 = 0j  # zeta^(n-2)
    biggest = 0.0
    last = 0.0
    n = 0
    while n < nmax:
        if n >= 2:
            c.append((n - 2 - a) * c[n - 2] / ((n - 1) * n))
        cn = c[n]
        term = cn * zp
        w += term
        dw += n * cn * zp1
        ddw += n * (n - 1) * cn * zp2
        mag = abs(term)
        absum += mag
        biggest = max(biggest, mag)
        last = mag
        zp2, zp1, zp = zp1, zp, zp * zeta
        n += 1
        if n > 4 and mag < tol * max(biggest, 1e-300) and abs(c[n - 2] * zp2) < tol * max(biggest, 1e-300):
            break
    return w, dw, ddw, absum, last


def _weber_series(a, zeta, nmax=200, tol=1e-18):
    """Direct power series of g'' + (a + 1/2 - zeta^2/4) g = 0; returns D, D', D'', |terms| sum, tail."""
    d0, d1 = pcf_origin(a)
    c = [d0, d1]
    g = dg = ddg = 0j
    absum = biggest = last = 0.0
    zp, zp1, zp2 = 1.0 + 0j, 0j, 0j
    n = 0
    while n < nmax:
        if n >= 2:
            prev2 = c[n - 4] if n >= 4 else 0.0
            c.append((-(a + 0.5) * c[n - 2] + 0.25 * prev2) / (n * (n - 1)))
        cn = c[n]
        term = cn * zp
        g += term
        dg += n * cn * zp1
        ddg += n * (n - 1) * cn * zp2
        mag = abs(term)
        absum += mag
        biggest = max(biggest, mag)
        last = mag
        zp2, zp1, zp = zp1, zp, zp * zeta
        n += 1
        if n > 6 and mag < tol * max(biggest, 1e-300) and abs(c[n - 2] * zp2) < tol * max(biggest, 1e-300):
            break
    return g, dg, ddg, absum, last


def pcf_series(a, zeta, derivatives=False):
    """Power-series evaluation; optionally also D' and D''.

    Two series are summed: the plain one for the Weber equation and exp(-zeta^2/4) times
    the series of w'' - zeta w' + a w = 0. The one with the smaller rounding estimate wins
    (the second terminates for integer a >= 0, the first is better conditioned otherwise)."""
    a, zeta = complex(a), complex(zeta)
    g, dg, ddg, absum_g, tail_g = _weber_series(a, zeta)
    err_g = 4e-16 * absum_g + tail_g
    w, dw, ddw, absum_w, tail_w = _w_series(a, zeta)
    e = np.exp(-zeta * zeta / 4)
    err_w = abs(e) * (4e-16 * absum_w + tail_w)
    if err_w < err_g:
        val, err = e * w, err_w
        d1 = e * (dw - zeta / 2 * w)
        d2 = e * (ddw - zeta * dw + (zeta * zeta / 4 - 0.5) * w)
    else:
        val, err, d1, d2 = g, err_g, dg, ddg
    if not derivatives:
        return val, err
    return val, err, d1, d2


def _asym_sum(p, zeta, sign):
    """sum_s sign^s (p)_{2s} / (s! (2 zeta^2)^s), truncated at the smallest term."""
    z2 = 2 * zeta * zeta
    total = 1.0 + 0j
    term = 1.0 + 0j
    prev = np.inf
    s = 0
    while True:
        nxt = term * sign * (p + 2 * s) * (p + 2 * s + 1) / ((s + 1) * z2)
        if abs(nxt) >= prev or abs(nxt) < 1e-17 * abs(total) or s > 200:
            return total, abs(nxt)
        prev = abs(nxt)
        term = nxt
        total += term
        s += 1


def _asym_branch(a, zeta, branch):
    """branch 0: |arg| small; +1: arg in (pi/4, 5pi/4); -1: arg in (-5pi/4, -pi/4)."""
    lead, err_lead = _asym_sum(-a, zeta, -1)
    base = zeta ** a * np.exp(-zeta * zeta / 4)
    val = base * lead
    err = abs(base) * err_lead
    if branch != 0:
        sub, err_sub = _asym_sum(a + 1, zeta, 1)
        extra = (np.sqrt(2 * np.pi) * rgamma_complex(-a) * np.exp(branch * 1j * np.pi * a)
                 * np.exp(zeta * zeta / 4) * zeta ** (-a - 1))
        val = val - extra * sub
        err += abs(extra) * err_sub
    return val, err


def pcf_asymptotic(a, zeta):
    """Large-|zeta| expansion with sector switching on the rays arg zeta = +-pi/2.

    The extra exp(+zeta^2/4) term is maximally subdominant on those rays; within STOKES_BAND
    of them the two neighbouring expansions are averaged and the spread is added to the error."""
    a, zeta = complex(a), complex(zeta)
    phi = np.angle(zeta)
    side = 1 if phi >= 0 else -1
    off = abs(phi) - np.pi / 2
    if abs(off) <= STOKES_BAND:
        v0, e0 = _asym_branch(a, zeta, 0)
        v1, e1 = _asym_branch(a, zeta, side)
        return 0.5 * (v0 + v1), max(e0, e1) + 0.5 * abs(v0 - v1)
    return _asym_branch(a, zeta, 0 if off < 0 else side)


def pcf_D(a, zeta) -> PcfEvaluation:
    a, zeta = complex(a), complex(zeta)
    if abs(zeta) < SERIES_RADIUS:
        v, e = pcf_series(a, zeta)
        return PcfEvaluation(a, zeta, v, "series", float(e))
    v, e = pcf_asymptotic(a, zeta)
    return PcfEvaluation(a, zeta, v, "asymptotic", float(e))


def pcf_derivative(a, zeta):
    """D_a'(zeta) from the series (|zeta| < 8) or via D_a' = a D_{a-1} - zeta/2 D_a otherwise."""
    a, zeta = complex(a), complex(zeta)
    if abs(zeta) < SERIES_RADIUS:
        return pcf_series(a, zeta, derivatives=True)[2]
    return a * pcf_D(a - 1, zeta).value - zeta / 2 * pcf_D(a, zeta).value


def recurrence_residual(a, zeta):
    v, _, d1, _ = pcf_series(a, zeta, derivatives=True)
    return abs(d1 + zeta / 2 * v - a * pcf_D(a - 1, zeta).value)


def connection_residual(a, zeta):
    lhs = pcf_D(a, zeta).value
    rhs = gamma_complex(a + 1) / np.sqrt(2 * np.pi) * (
        np.exp(0.5j * np.pi * a) * pcf_D(-a - 1, 1j * zeta).value
        + np.exp(-0.5j * np.pi * a) * pcf_D(-a - 1, -1j * zeta).value)
    return abs(lhs - rhs)


def weber_residual(a, zeta):
    v, _, _, d2 = pcf_series(a, zeta, derivatives=True)
    return abs(d2 + (a + 0.5 - zeta * zeta / 4) * v)


def selftest(n=200, seed=0, tol=1e-8):
    """Identity sweeps over random (a, zeta) with |zeta| <= 6, |a| <= 2."""
    rng = np.random.default_rng(seed)
    r = 6 * np.sqrt(rng.random(n))
    zs = r * np.exp(2j * np.pi * rng.random(n))
    ra = 2 * np.sqrt(rng.random(n))
    avals = ra * np.exp(2j * np.pi * rng.random(n))
    # keep a + 1 off the Gamma poles
    avals = np.where(np.abs(avals + 1 - np.round((avals + 1).real)) < 1e-3, avals + 0.01j, avals)
    rec = max(recurrence_residual(a, z) for a, z in zip(avals, zs))
    con = max(connection_residual(a, z) for a, z in zip(avals, zs))
    web = max(weber_residual(a, z) for a, z in zip(avals, zs))
    zg = rng.uniform(-10, 10, n) + 1j * rng.uniform(-10, 10, n)
    gam = max(abs(gamma_complex(z + 1) - z * gamma_complex(z)) / abs(z * gamma_complex(z)) for z in zg)
    rows = [
        ("recurrence", rec, tol),
        ("connection", con, tol),
        ("weber", web, tol),
        ("gamma_recurrence", gam, 1e-12),
    ]
    return [(name, float(v), lim, bool(v < lim)) for name, v, lim in rows]
