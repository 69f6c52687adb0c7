"""Direct scattering: Jost solutions, scattering matrix, reflection coefficient, discrete spectrum."""
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .core import MatrixPotential

SIGMA4 = np.array([1.0, 1.0, -1.0, -1.0])
DEPTH_LIMIT = 50.0
SINGULAR_LIMIT = 1e8


class SpectralDepthError(ValueError):
    pass


class SpectralSingularityError(RuntimeError):
    pass


class SpectrumError(RuntimeError):
    pass


@dataclass
class JostSolution:
    k: complex
    direction: str
    mu: np.ndarray  # (n, 4, 4) for real k, (n, 4, 2) analytic columns otherwise
    columns: str = "full"

    def det_error(self):
        if self.mu.shape[-1] != 4:
            raise ValueError("determinant needs the full Jost matrix")
        return float(np.abs(np.linalg.det(self.mu) - 1).max())

    def normalization_error(self):
        end = 0 if self.direction == "minus" else -1
        ref = np.eye(4)[:, _column_slice(self.columns)]
        return float(np.abs(self.mu[end] - ref).max())


@dataclass
class ScatteringSample:
    k: float
    a: np.ndarray
    b: np.ndarray
    gamma: np.ndarray

    def unitarity_error(self):
        return float(np.abs(self.a.conj().T @ self.a + self.b.conj().T @ self.b - np.eye(2)).max())

    def transpose_error(self):
        return float(np.abs(self.a.T @ self.b - self.b.T @ self.a).max())

    def symmetry_error(self):
        return float(np.abs(self.gamma - self.gamma.T).max())

    def normality_error(self):
        g = self.gamma
        return float(np.abs(g @ g.conj().T - g.conj().T @ g).max())


@dataclass
class DiscreteSpectrum:
    ks: np.ndarray
    fs: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ks = np.atleast_1d(np.asarray(self.ks, dtype=complex))
        for i in range(len(self.ks)):
            for j in range(i + 1, len(self.ks)):
                if abs(self.ks[i] - self.ks[j]) <= 1e-6:
                    raise SpectrumError("eigenvalues are not separated by more than 1e-6")
        if self.fs is not None:
            self.fs = np.asarray(self.fs, dtype=complex).reshape(len(self.ks), 2, 2)
            for f in self.fs:
                if np.abs(f - f.T).max() > 1e-10 * max(1.0, np.abs(f).max()):
                    raise SpectrumError("norming matrix is not symmetric")

    def __len__(self):
        return len(self.ks)


def _column_slice(columns):
    return {"full": slice(0, 4), "left": slice(0, 2), "right": slice(2, 4)}[columns]


def theta_phase(k, x, t):
    return (x / t) * k + 2 * k * k


def stationary_point(x, t):
    return -x / (4.0 * t)


def re_2it_theta(k, x, t):
    """Re(2i t theta) = -8 t Im k (Re k - k0)."""
    k = np.asarray(k, dtype=complex)
    return -8.0 * t * k.imag * (k.real - stationary_point(x, t))


def default_k_grid(k0=None, n=401, k_max=8.0, n_local=65, radius=0.5):
    ks = np.linspace(-k_max, k_max, n)
    if k0 is not None:
        ks = np.union1d(ks, np.linspace(k0 - radius, k0 + radius, n_local))
    return ks


class _Potential:
    """U on a refined copy of the grid (substeps per cell) and at the refined midpoints.

    Values between nodes come from band-limited (FFT) interpolation of Q."""

    def __init__(self, Q0: MatrixPotential, substeps=2, trim_tol=1e-16):
        g = Q0.grid
        m = int(substeps)
        self.grid = g
        self.substeps = m
        self.h = g.spacing / m
        xi = g.wavenumbers
        Qh = sfft.fft(Q0.Q, axis=0)
        shifted = [sfft.ifft(Qh * np.exp(1j * xi * g.spacing * r / (2 * m))[:, None, None], axis=0)
                   for r in range(2 * m)]
        fine = np.stack(shifted[0::2], axis=1).reshape(-1, 2, 2)
        mid = np.stack(shifted[1::2], axis=1).reshape(-1, 2, 2)
        fine[::m] = Q0.Q  # keep the nodes bit-exact
        self.x = g.x_min + self.h * np.arange(len(fine))
        self.U = self._lax(fine)
        self.Umid = self._lax(mid)
        self.last = (g.n_points - 1) * m  # fine index of the last grid node
        # nodes outside [lo, hi] carry |Q| below trim_tol * max|Q| and are treated as vacuum
        amp = np.abs(Q0.Q).max(axis=(1, 2))
        active = np.nonzero(amp > trim_tol * amp.max())[0] if amp.max() > 0 else np.array([], int)
        if len(active):
            self.lo = max(int(active[0]) - 2, 0)
            self.hi = min(int(active[-1]) + 2, g.n_points - 1)
        else:
            self.lo = self.hi = g.n_points // 2

    def fine_index(self, node):
        return int(node) * self.substeps

    @staticmethod
    def _lax(Q):
        n = len(Q)
        U = np.zeros((n, 4, 4), dtype=complex)
        U[:, :2, 2:] = Q
        U[:, 2:, :2] = -np.conj(np.swapaxes(Q, -1, -2))
        return U


def _phase(ks, s, cols):
    """Entry factors of exp(-ik sigma4 s) . exp(ik sigma4 s) restricted to the chosen columns, shape (nk,4,c)."""
    ks = np.asarray(ks)[:, None, None]
    d = SIGMA4[:, None] - SIGMA4[None, cols]
    return np.exp(-1j * ks * s * d[None])


def march(pot, ks, direction="minus", columns="full", record=None):
    """Integrate mu_x = -ik[sigma4, mu] + U mu across the grid for every k in ks.

    Classical RK4 in the local interaction picture of each step (the sigma4 part is exact).
    Only the support of Q is integrated; in the vacuum on either side the solution is the
    exact free evolution. Returns the state at the far end and a dict of states at the
    grid-node indices in `record` (every node when record == 'all', as an array)."""
    ks = np.atleast_1d(np.asarray(ks, dtype=complex))
    cols = np.arange(4)[_column_slice(columns)]
    g = pot.grid
    n_nodes = g.n_points
    m = pot.substeps
    h = pot.h
    lo, hi = pot.lo * m, pot.hi * m
    mu = np.broadcast_to(np.eye(4)[:, cols], (len(ks), 4, len(cols))).astype(complex)
    if direction == "minus":
        order, step, start, stop = range(lo, hi), h, pot.lo, pot.hi
    else:
        order, step, start, stop = range(hi, lo, -1), -h, pot.hi, pot.lo
    ph_half = _phase(ks, step / 2, cols)
    ph_full = ph_half * ph_half
    iph_half = 1.0 / ph_half
    iph_full = 1.0 / ph_full
    want_all = isinstance(record, str) and record == "all"
    rec = {}
    rec_set = set() if record is None or want_all else set(int(r) % n_nodes for r in record)
    out_all = np.empty((n_nodes, len(ks), 4, len(cols)), dtype=complex) if want_all else None

    def store(node, val):
        if want_all:
            out_all[node] = val
        elif node in rec_set:
            rec[node] = val.copy()

    # vacuum before the support: mu is the identity
    before = range(0, start + 1) if direction == "minus" else range(start, n_nodes)
    for node in before:
        store(node, mu)
    U, Um = pot.U, pot.Umid
    for i in order:
        nxt = i + 1 if direction == "minus" else i - 1
        Ua = U[i]
        Ub = Um[i] if direction == "minus" else Um[i - 1]
        Uc = U[nxt]
        k1 = Ua @ mu
        k2 = iph_half * (Ub @ (ph_half * (mu + 0.5 * step * k1)))
        k3 = iph_half * (Ub @ (ph_half * (mu + 0.5 * step * k2)))
        k4 = iph_full * (Uc @ (ph_full * (mu + step * k3)))
        mu = ph_full * (mu + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))
        if nxt % m == 0:
            store(nxt // m, mu)
    # vacuum after the support: free evolution of the stopped state
    after = range(stop + 1, n_nodes) if direction == "minus" else range(stop - 1, -1, -1)
    xs = g.x[stop]
    for node in after:
        if want_all or node in rec_set:
            store(node, _phase(ks, g.x[node] - xs, cols) * mu)
    far = n_nodes - 1 if direction == "minus" else 0
    if far != stop:
        mu = _phase(ks, g.x[far] - xs, cols) * mu
    if want_all:
        return mu, out_all
    return mu, rec


def _analytic_columns(k, direction):
    upper = np.imag(k) >= 0
    if direction == "minus":
        return "left" if upper else "right"
    return "right" if upper else "left"


def solve_jost(Q0: MatrixPotential, k, direction="minus", columns="auto"):
    """Normalized Jost matrix mu_+-(x; k) on every grid node."""
    if direction not in ("minus", "plus"):
        raise ValueError("direction must be 'minus' or 'plus'")
    k = complex(k)
    pot = _Potential(Q0)
    if columns == "auto":
        columns = "full" if k.imag == 0 else _analytic_columns(k, direction)
    if columns == "full" and k.imag != 0 and abs(k.imag) * Q0.grid.length > DEPTH_LIMIT:
        raise SpectralDepthError(
            f"spectral parameter too deep: |Im k| * L = {abs(k.imag) * Q0.grid.length:.1f} > {DEPTH_LIMIT}")
    _, allmu = march(pot, [k], direction, columns, record="all")
    return JostSolution(k, direction, allmu[:, 0], columns)


def _scattering_blocks(pot, ks):
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    mu_end, _ = march(pot, ks, "minus", "full")
    xe = pot.grid.x[-1]
    e = np.exp(1j * ks[:, None] * xe * SIGMA4[None, :])
    S = e[:, :, None] * mu_end / e[:, None, :]
    return S[:, :2, :2], S[:, 2:, :2], S


def scattering_sweep(Q0: MatrixPotential, ks, check=True):
    """a, b, gamma on an array of real k; raises on near-singular a."""
    pot = _Potential(Q0)
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    a, b, _ = _scattering_blocks(pot, ks)
    ainv = np.linalg.inv(a)
    norm = np.linalg.norm(ainv, ord=2, axis=(1, 2))
    if check and np.any(norm > SINGULAR_LIMIT):
        bad = ks[np.argmax(norm)]
        raise SpectralSingularityError(f"|a^-1| = {norm.max():.2e} at k = {bad}: spectral singularity")
    gamma = b @ ainv
    return a, b, gamma


def scattering_matrix(Q0: MatrixPotential, k) -> ScatteringSample:
    a, b, gamma = scattering_sweep(Q0, [float(k)])
    return ScatteringSample(float(k), a[0], b[0], gamma[0])


def identity_errors(a, b, gamma):
    """Max over the sweep of the spectral norms of the unitarity, transpose, symmetry and normality residuals."""
    ah = np.conj(np.swapaxes(a, -1, -2))
    bh = np.conj(np.swapaxes(b, -1, -2))
    gh = np.conj(np.swapaxes(gamma, -1, -2))
    I = np.eye(2)

    def nrm(m):
        return float(np.linalg.norm(m, ord=2, axis=(-2, -1)).max())

    return {
        "unitarity": nrm(ah @ a + bh @ b - I),
        "transpose": nrm(np.swapaxes(a, -1, -2) @ b - np.swapaxes(b, -1, -2) @ a),
        "symmetry": nrm(gamma - np.swapaxes(gamma, -1, -2)),
        "normality": nrm(gamma @ gh - gh @ gamma),
    }


def _check_nodes(grid):
    n = grid.n_points
    i0 = int(np.argmin(np.abs(grid.x)))
    return i0, (i0 + n // 8) % n


def det_a_batch(Q0, ks, pot=None, nodes=None):
    """det[mu_-L, mu_+R] at two grid nodes for every k in ks (Im k >= 0); shape (nk, 2)."""
    pot = pot or _Potential(Q0)
    ks = np.atleast_1d(np.asarray(ks, dtype=complex))
    if np.any(ks.imag < 0):
        raise ValueError("det a is defined for Im k >= 0")
    nodes = nodes or _check_nodes(pot.grid)
    _, left = march(pot, ks, "minus", "left", record=nodes)
    _, right = march(pot, ks, "plus", "right", record=nodes)
    out = np.empty((len(ks), len(nodes)), dtype=complex)
    for i, m in enumerate(nodes):
        out[:, i] = np.linalg.det(np.concatenate([left[m], right[m]], axis=2))
    return out


def det_a(Q0, k, pot=None, tol=1e-7):
    """det a(k) for Im k >= 0 through the Jost columns; x-independence checked at two nodes."""
    v = det_a_batch(Q0, [k], pot)[0]
    if abs(v[0] - v[1]) > tol * max(1.0, abs(v[0])):
        raise SpectrumError(f"det a differs between two x nodes by {abs(v[0] - v[1]):.2e}")
    return complex(v[0])


def _winding(fvals):
    r = fvals[1:] / fvals[:-1]
    return np.angle(r)


def _contour_points(box, spacing):
    x0, x1, y0, y1 = box
    pts = []
    for a, b in [(complex(x0, y0), complex(x1, y0)), (complex(x1, y0), complex(x1, y1)),
                 (complex(x1, y1), complex(x0, y1)), (complex(x0, y1), complex(x0, y0))]:
        m = max(4, int(np.ceil(abs(b - a) / spacing)))
        pts.append(a + (b - a) * np.arange(m) / m)
    pts = np.concatenate(pts)
    return np.append(pts, pts[0])


class _DetCache:
    def __init__(self, Q0):
        self.Q0 = Q0
        self.pot = _Potential(Q0)
        self.calls = 0

    def __call__(self, ks):
        self.calls += len(np.atleast_1d(ks))
        return det_a_batch(self.Q0, ks, self.pot)[:, 0]


def winding_number(F, box, spacing=0.05, max_refine=12, max_step=np.pi / 4):
    """Number of zeros of F inside box = (re0, re1, im0, im1), counted on an adaptively refined contour."""
    z = _contour_points(box, spacing)
    f = F(z)
    for _ in range(max_refine):
        if np.any(np.abs(f) == 0):
            raise SpectrumError("zero on the contour")
        d = np.abs(_winding(f))
        bad = np.nonzero(d > max_step)[0]
        if len(bad) == 0:
            w = _winding(f).sum() / (2 * np.pi)
            n = int(round(w))
            if abs(w - n) > 1e-3:
                raise SpectrumError(f"non-integer winding {w}")
            return n
        mids = 0.5 * (z[bad] + z[bad + 1])
        fm = F(mids)
        z = np.insert(z, bad + 1, mids)
        f = np.insert(f, bad + 1, fm)
    raise SpectrumError("winding ambiguous: contour passes too close to a zero")


def _derivative(F, k, h=1e-5):
    """Central difference with one Richardson step."""
    vals = F(np.array([k + h, k - h, k + h / 2, k - h / 2]))
    d1 = (vals[0] - vals[1]) / (2 * h)
    d2 = (vals[2] - vals[3]) / h
    return (4 * d2 - d1) / 3


def _newton(F, k, tol=1e-10, maxit=60):
    for _ in range(maxit):
        fk = F(np.array([k]))[0]
        if abs(fk) < tol:
            return k, abs(fk)
        k = k - fk / _derivative(F, k)
        if k.imag <= 0:
            raise SpectrumError("Newton iteration left the upper half-plane")
    fk = abs(F(np.array([k]))[0])
    if fk < tol:
        return k, fk
    raise SpectrumError(f"Newton did not reach |det a| < {tol:g} (last {fk:.2e})")


def _quadrants(box, frac):
    x0, x1, y0, y1 = box
    cx = x0 + frac * (x1 - x0)
    cy = y0 + frac * (y1 - y0)
    return [(x0, cx, y0, cy), (cx, x1, y0, cy), (x0, cx, cy, y1), (cx, x1, cy, y1)]


def find_discrete_spectrum(Q0, search_box=(-4.0, 4.0, 1e-3, 4.0), min_size=0.1, max_level=12,
                           spacing=0.05):
    """Zeros of det a inside search_box = (re0, re1, im0, im1).

    Argument-principle counts on recursively quartered boxes, Newton refinement inside
    boxes of winding one, and a final local winding check for simplicity."""
    if search_box[2] < 1e-3:
        raise ValueError("search box must stay at least 1e-3 above the real axis")
    F = _DetCache(Q0)
    diag = {"windings": [], "residuals": [], "levels": 0}
    roots = []

    def count(box):
        sp = min(spacing, 0.25 * min(box[1] - box[0], box[3] - box[2]))
        try:
            return winding_number(F, box, sp)
        except SpectrumError:
            return None

    def visit(box, w, level):
        diag["levels"] = max(diag["levels"], level)
        size = max(box[1] - box[0], box[3] - box[2])
        if w == 1 and size <= min_size:
            k0 = complex(0.5 * (box[0] + box[1]), 0.5 * (box[2] + box[3]))
            k, res = _newton(F, k0)
            roots.append(k)
            diag["residuals"].append(res)
            return
        if level >= max_level:
            if w > 1:
                raise SpectrumError(f"non-simple zero of det a: winding {w} on a minimal box {box}")
            raise SpectrumError("subdivision exceeded the level limit")
        # slightly off-centre cuts; move them if a zero sits on one
        for frac in (0.4937, 0.4371, 0.5613):
            children = _quadrants(box, frac)
            ws = [count(c) for c in children]
            if all(v is not None for v in ws) and sum(ws) == w:
                break
        else:
            raise SpectrumError("winding ambiguous: contour passes too close to a zero")
        diag["windings"].append(ws)
        for c, v in zip(children, ws):
            if v > 0:
                visit(c, v, level + 1)

    w_total = winding_number(F, search_box, spacing)
    diag["total_winding"] = w_total
    if w_total < 0:
        raise SpectrumError("negative winding: det a has poles in the box")
    if w_total > 0:
        visit(search_box, w_total, 0)
    roots = _dedupe(roots)
    if len(roots) != w_total:
        raise SpectrumError(f"argument principle counted {w_total} zeros, Newton found {len(roots)}")
    local = []
    for k in roots:
        r = 1e-3
        wk = winding_number(F, (k.real - r, k.real + r, k.imag - r, k.imag + r), r / 4)
        local.append(wk)
        if wk != 1:
            raise SpectrumError(f"zero at {k} is not simple (local winding {wk})")
    diag["local_windings"] = local
    diag["det_evaluations"] = F.calls
    roots = sorted(roots, key=lambda z: (z.real, z.imag))
    return DiscreteSpectrum(np.array(roots, dtype=complex), None, diag)


def _dedupe(roots, tol=1e-8):
    out = []
    for k in roots:
        if all(abs(k - r) > tol for r in out):
            out.append(k)
    return out


def _select_nodes(grid, Q, k, m=32):
    """m nodes around the bulk of |Q| where exp(2ikx) stays moderate."""
    w = np.sum(np.abs(Q) ** 2, axis=(1, 2))
    xc = float(np.sum(grid.x * w) / np.sum(w)) if w.sum() > 0 else 0.0
    half = min(2.0 / max(k.imag, 1e-3), 0.25 * grid.length)
    xs = np.linspace(xc - half, xc + half, m)
    idx = np.unique(np.clip(np.round((xs - grid.x_min) / grid.spacing).astype(int), 1, grid.n_points - 2))
    return idx


def _residue_contour(pot, k, idx, radius, n=32):
    """Res mu_-L a^-1 at k by the trapezoid rule on a small circle (valid for any simple pole of a^-1)."""
    zs = k + radius * np.exp(2j * np.pi * np.arange(n) / n)
    end, rec = march(pot, zs, "minus", "left", record=list(idx))
    ainv = np.linalg.inv(end[:, :2, :])
    w = radius * np.exp(2j * np.pi * np.arange(n) / n) / n  # dk / (2 pi i) weights
    return {m: np.einsum("z,zij,zjk->ik", w, rec[m], ainv) for m in idx}


def norming_constants(Q0, poles, min_nodes=16, residual_limit=1e-4, symmetry_limit=1e-6, zero_tol=1e-6):
    """Symmetric f_j at each zero k_j from Res mu_-L a^-1 = mu_+R exp(2ikx) f (t = 0).

    The residue is mu_-L adj(a) / (det a)'; when (det a)' vanishes (a^-1 still with a
    simple pole but det a with a double zero, i.e. rank-two f) a contour integral is used."""
    poles = np.atleast_1d(np.asarray(poles, dtype=complex))
    pot = _Potential(Q0)
    F = _DetCache(Q0)
    fs = []
    diag = {"residuals": [], "symmetrization": [], "det_at_pole": [], "residue_route": []}
    for k in poles:
        dval = F(np.array([k]))[0]
        diag["det_at_pole"].append(abs(dval))
        if abs(dval) > zero_tol:
            raise SpectrumError(f"k = {k} is not a zero of det a (|det a| = {abs(dval):.2e})")
        idx = _select_nodes(pot.grid, Q0.Q, k, max(min_nodes, 32))
        dprime = _derivative(F, k)
        left_end, left = march(pot, [k], "minus", "left", record=list(idx))
        _, right = march(pot, [k], "plus", "right", record=list(idx))
        if abs(dprime) > 1e-4:
            a = left_end[0, :2, :]
            adj = np.array([[a[1, 1], -a[0, 1]], [-a[1, 0], a[0, 0]]])
            res_x = {m: left[m][0] @ adj / dprime for m in idx}
            diag["residue_route"].append("derivative")
        else:
            res_x = _residue_contour(pot, k, idx, radius=min(0.05, 0.25 * k.imag))
            diag["residue_route"].append("contour")
        R = np.concatenate([res_x[m] for m in idx])
        P = np.concatenate([right[m][0] * np.exp(2j * k * pot.grid.x[m]) for m in idx])
        f, *_ = np.linalg.lstsq(P, R, rcond=None)
        res = np.linalg.norm(P @ f - R) / max(np.linalg.norm(R), 1e-300)
        diag["residuals"].append(float(res))
        if res > residual_limit:
            raise SpectrumError(f"least-squares residual {res:.2e} at k = {k}: inconsistent pole data")
        fsym = 0.5 * (f + f.T)
        change = float(np.abs(f - fsym).max() / max(1.0, np.abs(f).max()))
        diag["symmetrization"].append(change)
        if change > symmetry_limit:
            raise SpectrumError(f"norming matrix asymmetric by {change:.2e} at k = {k}")
        if diag["residue_route"][-1] == "derivative":
            # a simple zero of det a leaves a rank-one residue; drop the noise in the other direction
            U, sv, Vh = np.linalg.svd(fsym)
            r1 = sv[0] * np.outer(U[:, 0], Vh[0])
            fsym = 0.5 * (r1 + r1.T)
            diag.setdefault("rank_projection", []).append(float(sv[1] / sv[0]))
        fs.append(fsym)
    return DiscreteSpectrum(poles, np.array(fs).reshape(len(poles), 2, 2), diag)
