"""Transfer operators twisted by the holonomy cocycle, norms and decay experiments."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DepthError, NoiseFloorWarning, NonMixingWarning, ShapeError
from .thermo import (
    CodedSystem,
    CylinderFunction,
    NormalizedPotential,
    _gather,
    birkhoff_sums,
    transfer_apply,
)

NOISE_FLOOR = 1e-13
APPLY_BUDGET = 5 * 10**9
B0 = 1.0
B_GRID = (0.0, 0.5, 1.0, 2.0, 5.0, 10.0)
ELL_GRID = (0, 1, 2, 5)


@dataclass(frozen=True)
class TwistRep:
    """rho_b(a_t m_theta) = exp(-i b t) rho(m_theta) with rho(m_theta) = expm(theta A).

    The SO(2) character of index ell has A = -i ell.  ``generator`` may instead
    be any skew-Hermitian matrix with spectrum in iZ.  ``m_dim`` is 0 when M
    is trivial (then only ell = 0 is allowed).
    """

    b: float
    ell: int = 0
    generator: np.ndarray | None = None
    m_dim: int = 1

    def __post_init__(self):
        if self.m_dim == 0 and (self.ell != 0 or self.generator is not None):
            raise ValueError("M is trivial: only the trivial representation exists")
        if self.generator is not None:
            g = np.asarray(self.generator, dtype=complex)
            if np.abs(g + g.conj().T).max() > 1e-12:
                raise ValueError("generator must be skew-Hermitian")
            object.__setattr__(self, "generator", g)

    @property
    def dim(self) -> int:
        return 1 if self.generator is None else self.generator.shape[0]

    @property
    def m_generator(self) -> np.ndarray:
        if self.generator is None:
            return np.array([[-1j * self.ell]])
        return self.generator

    @property
    def trivial(self) -> bool:
        return self.b == 0 and self.ell == 0 and (
            self.generator is None or not np.any(self.generator))

    def in_m0(self, b0: float = B0) -> bool:
        """Membership in the twist set where |b| > b0 or rho is nontrivial."""
        nontrivial = self.ell != 0 or (self.generator is not None and np.any(self.generator))
        return abs(self.b) > b0 or bool(nontrivial)

    def __call__(self, t, theta):
        """rho_b(a_t m_theta) as a matrix."""
        return np.exp(-1j * self.b * t) * linalg.expm(theta * self.m_generator)

    def d_rho(self, t, s):
        """Derivative at the identity in the direction t H0 + s Z (Z the unit generator of m)."""
        return -1j * self.b * t * np.eye(self.dim) + s * self.m_generator

    def rho_norm(self) -> float:
        """sup over unit z in m of the operator norm of d rho(z)."""
        if self.m_dim == 0:
            return 0.0
        return float(np.linalg.norm(self.m_generator, 2))

    def norm(self, samples: int = 4096, numeric: bool = False) -> float:
        """sup over unit z in a + m of ||d rho_b(z)||_op.

        Closed form sqrt(b^2 + ell^2) for characters; otherwise (or with
        ``numeric``) a grid search over directions followed by ternary refinement.
        """
        if self.m_dim == 0:
            return abs(float(self.b))
        if self.generator is None and not numeric:
            return float(np.hypot(self.b, self.ell))
        angles = np.linspace(0, np.pi, samples, endpoint=False)
        vals = [np.linalg.norm(self.d_rho(np.cos(a), np.sin(a)), 2) for a in angles]
        i = int(np.argmax(vals))
        lo, hi = angles[i] - np.pi / samples, angles[i] + np.pi / samples
        for _ in range(60):
            m1, m2 = lo + (hi - lo) / 3, hi - (hi - lo) / 3
            f1 = np.linalg.norm(self.d_rho(np.cos(m1), np.sin(m1)), 2)
            f2 = np.linalg.norm(self.d_rho(np.cos(m2), np.sin(m2)), 2)
            if f1 < f2:
                lo = m1
            else:
                hi = m2
        best = np.linalg.norm(self.d_rho(np.cos(lo), np.sin(lo)), 2)
        return float(max(best, max(vals)))

    def maction_epsilon(self, rng, trials: int = 64, samples: int = 720) -> float:
        """Smallest observed sup_z ||d rho_b(z) omega|| / ||rho_b|| over unit omega."""
        nrm = self.norm()
        if nrm == 0:
            return 0.0
        angles = np.linspace(0, np.pi, samples, endpoint=False)
        dirs = [self.d_rho(np.cos(a), np.sin(a)) if self.m_dim else self.d_rho(1.0, 0.0)
                for a in angles]
        worst = np.inf
        for _ in range(trials):
            w = rng.standard_normal(self.dim) + 1j * rng.standard_normal(self.dim)
            w /= np.linalg.norm(w)
            worst = min(worst, max(np.linalg.norm(d @ w) for d in dirs) / nrm)
        return float(worst)

    def branch_phase(self, tau, theta) -> np.ndarray:
        """rho_b(Phi^-1) for Phi = a_tau m_theta, per branch."""
        tau = np.asarray(tau, dtype=float)
        theta = np.asarray(theta, dtype=float)
        if self.generator is None:
            return np.exp(1j * (self.b * tau + self.ell * theta))
        w, v = np.linalg.eig(self.generator)
        vinv = np.linalg.inv(v)
        rot = np.einsum("ij,nj,jk->nik", v, np.exp(-theta[:, None] * w[None, :]), vinv)
        return np.exp(1j * self.b * tau)[:, None, None] * rot


class TwistedOperator:
    """M H(C) = sum over branches W of exp(f(W)) rho_b(Phi(W)^-1) H(W[:k])."""

    def __init__(self, system: CodedSystem, potential: NormalizedPotential, rep: TwistRep):
        self.system = system
        self.potential = potential
        self.rep = rep
        self.depth = system.depth
        if system.group is not None and system.group.family == "fuchsian" and rep.m_dim:
            if rep.ell != 0 or rep.generator is not None:
                raise ValueError("fuchsian holonomy is trivial; use ell = 0")
        self.base = np.exp(potential.f)
        phase = rep.branch_phase(system.tau, system.angle)
        self.weights = self.base * phase if phase.ndim == 1 else self.base[:, None, None] * phase

    @property
    def nu(self) -> np.ndarray:
        return self.potential.nu_u

    def apply(self, values: np.ndarray) -> np.ndarray:
        s = self.system
        src = values[s.cols]
        if self.weights.ndim == 1:
            contrib = self.weights * src if src.ndim == 1 else self.weights[:, None] * src
        else:
            contrib = np.einsum("nij,nj->ni", self.weights, src)
        return _gather(s.rows, contrib, s.size)

    def l2(self, values) -> float:
        v = np.abs(values) ** 2
        if v.ndim > 1:
            v = v.sum(axis=1)
        return float(np.sqrt(self.nu @ v))


def twisted_apply(op: TwistedOperator, h, k: int = 1) -> CylinderFunction:
    values = h.values if isinstance(h, CylinderFunction) else np.asarray(h)
    if values.shape[0] != op.system.size:
        raise ShapeError("function does not match the operator depth")
    if k * len(op.system.rows) * op.rep.dim ** 2 > APPLY_BUDGET:
        raise DepthError("iteration budget exceeded")
    out = values.astype(complex)
    for _ in range(k):
        out = op.apply(out)
    return CylinderFunction(op.depth, out)


@dataclass
class NormReport:
    sup: float
    c1: float
    norm_1b: float


def _level_structure(partition, level):
    """(canonical depth-k indices, parent ids, parent scales) for one level, cached."""
    cache = partition.__dict__.setdefault("_c1_cache", {})
    if level in cache:
        return cache[level]
    k = partition.depth
    words = partition.subshift.words(level)
    ext = np.column_stack([words] + [words[:, -1:]] * (k - level)) if k > level else words
    canon = partition.index(ext)
    if level == 1:
        parent = np.zeros(len(words), dtype=np.int64)
        if partition.group is not None:
            g = partition.group
            span = np.abs(g.centers[:, None] - g.centers[None, :]) + g.radii[:, None] + g.radii[None, :]
            scale = np.full(len(words), float(span.max()))
        else:
            scale = np.ones(len(words))
    else:
        from .thermo import group_partition, symbolic_partition

        parent_part = (group_partition(partition.group, level - 1) if partition.group is not None
                       else symbolic_partition(partition.subshift, level - 1))
        parent = parent_part.index(words[:, :-1])
        scale = parent_part.diameters[parent]
    cache[level] = (canon, parent, scale)
    return cache[level]


def c1_seminorm(values: np.ndarray, partition, log: bool = False) -> float:
    """Discrete C^1 seminorm of a cylinder function.

    At every level j <= k, sibling cylinders (same length-(j-1) prefix) are
    compared through the depth-k cells sharing their representative, and the
    difference is divided by the diameter of the parent cylinder.
    """
    vals = np.log(values) if log else np.asarray(values)
    if vals.ndim > 1:
        vals = vals.reshape(len(vals), -1)
    worst = 0.0
    for level in range(1, partition.depth + 1):
        canon, parent, scale = _level_structure(partition, level)
        s = vals[canon]
        # words are lexicographic, so siblings are consecutive
        block = int(np.max(np.bincount(parent)))
        for d in range(1, block):
            same = parent[d:] == parent[:-d]
            if not same.any():
                continue
            diff = np.abs(s[d:] - s[:-d])
            if diff.ndim > 1:
                diff = np.linalg.norm(diff, axis=1)
            worst = max(worst, float(np.max(diff[same] / scale[d:][same])))
    return worst


def norm_1b(h, b: float, partition) -> NormReport:
    """||H||_inf + |H|_C1 / max(1, |b|) with the discrete C^1 seminorm."""
    values = h.values if isinstance(h, CylinderFunction) else np.asarray(h)
    if partition.depth < 2:
        raise ValueError("need depth at least 2")
    mag = np.abs(values) if values.ndim == 1 else np.linalg.norm(values, axis=1)
    sup = float(mag.max())
    c1 = c1_seminorm(values, partition)
    return NormReport(sup, c1, sup + c1 / max(1.0, abs(b)))


def _random_start(op: TwistedOperator, rng, mode: str) -> np.ndarray:
    n = op.system.size
    d = op.rep.dim
    if mode == "constant":
        v = np.ones(n, dtype=complex) if d == 1 else np.ones((n, d), dtype=complex) / np.sqrt(d)
    else:
        shape = (n,) if d == 1 else (n, d)
        v = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        if mode == "mean_zero":
            mean = op.nu @ v
            v = v - mean
    scale = norm_1b(v, op.rep.norm() if op.rep.m_dim else abs(op.rep.b), op.system.partition).norm_1b
    return v / scale


def spectral_radius_estimate(op: TwistedOperator, k_max: int = 24, trials: int = 4,
                             rng=None, start: str = "random", fit_from: int | None = None) -> dict:
    """Growth rate of ||M^k H||_2 from a least-squares fit of the log norms.

    Starts are normalized in ||.||_{1,||rho_b||}.  The fit uses k in
    [fit_from, k_max] (default: second half), truncated where a norm falls
    below the noise floor relative to the first iterate.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    fit_from = k_max // 2 if fit_from is None else fit_from
    rates, curves = [], []
    for _ in range(trials):
        v = _random_start(op, rng, start)
        norms = [op.l2(v)]
        for _k in range(k_max):
            v = op.apply(v)
            norms.append(op.l2(v))
        norms = np.array(norms)
        curves.append(norms)
        ks = np.arange(k_max + 1)
        ok = norms > NOISE_FLOOR * max(norms[0], 1e-300)
        limit = np.argmin(ok) if not ok.all() else len(ok)
        if limit <= k_max:
            warnings.warn(f"norms reach the noise floor at k = {limit}", NoiseFloorWarning,
                          stacklevel=2)
        lo = min(fit_from, max(limit - 4, 1))
        sel = (ks >= lo) & (ks < limit)
        if sel.sum() < 2:
            rates.append(0.0)
            continue
        slope = np.polyfit(ks[sel], np.log(norms[sel]), 1)[0]
        rates.append(float(np.exp(slope)))
    rates = np.array(rates)
    return {"rate": float(np.median(rates)), "ci": (float(rates.min()), float(rates.max())),
            "rates": rates, "curves": curves}


def hyperbolicity_constants(system: CodedSystem, max_len: int | None = None) -> dict:
    """c0, kappa1 > kappa2 > 1 with c0/kappa1^j <= |(inverse branch)'| <= 1/(c0 kappa2^j)."""
    max_len = system.depth if max_len is None else max_len
    lo, hi = [], []
    for j in range(1, max_len + 1):
        words = system.subshift.words(j)
        s = birkhoff_sums(system, system.tau, words)
        lo.append(float(s.min()))
        hi.append(float(s.max()))
    lo, hi = np.array(lo), np.array(hi)
    js = np.arange(1, max_len + 1)
    kappa2 = float(np.exp(np.min(lo / js)))
    kappa1 = float(np.exp(np.max(hi / js)))
    # derivative bounds: exp(-hi) <= |d| <= exp(-lo)
    c_upper = np.min(np.exp(lo) / kappa2**js)
    c_lower = np.min(np.exp(-hi) * kappa1**js)
    c0 = float(min(c_upper, c_lower, 0.999))
    return {"c0": c0, "kappa1": kappa1, "kappa2": kappa2}


def sample_cone(system: CodedSystem, B: float, rng, level: float = 1.0, smooth: int = 3):
    """Positive function with discrete log-Lipschitz constant level * B.

    log h is a random combination of smooth functions of the representative
    point, rescaled so its discrete C^1 seminorm equals level * B.
    """
    part = system.partition
    pts = part.reps if part.reps is not None else np.linspace(0, 1, len(part)).astype(complex)
    x, y = pts.real, pts.imag
    field = np.zeros(len(part))
    for _ in range(smooth):
        fx, fy = rng.normal(size=2)
        ph = rng.uniform(0, 2 * np.pi)
        field += np.sin(fx * x + fy * y + ph)
    field -= field.mean()
    lip = c1_seminorm(np.exp(field), part, log=True)
    if lip == 0 or B == 0:
        return np.ones(len(part))
    return np.exp(field * (level * B / lip))


def lasota_yorke_check(system: CodedSystem, potential: NormalizedPotential, B: float, k: int,
                       rng, samples: int = 10, A0: float | None = None,
                       kappa2: float | None = None) -> dict:
    """Log-Lipschitz constant of L^k h for h in the cone K_B against A0 (B / kappa2^k + 1).

    Without ``A0`` it is calibrated on an independent set of draws over
    several (B, k) pairs first; the reported check then uses fresh draws.
    """
    kappa2 = hyperbolicity_constants(system)["kappa2"] if kappa2 is None else kappa2
    if A0 is None:
        A0 = fit_A0(system, potential, rng, kappa2=kappa2)
    worst = 0.0
    for _ in range(samples):
        h = sample_cone(system, B, rng, level=rng.uniform(0.3, 1.0))
        out = h
        for _k in range(k):
            out = transfer_apply(system, potential.f, out).values
        worst = max(worst, c1_seminorm(out, system.partition, log=True))
    bound = A0 * (B / kappa2**k + 1)
    return {"measured": worst, "bound": bound, "A0": A0, "kappa2": kappa2,
            "pass": bool(worst <= bound)}


def fit_A0(system, potential, rng, kappa2, B_values=(1.0, 5.0, 20.0), ks=(1, 2, 3),
           draws: int = 6) -> float:
    """Smallest A0 consistent with calibration draws (with a 10% allowance)."""
    best = 0.0
    for B in B_values:
        for k in ks:
            for _ in range(draws):
                h = sample_cone(system, B, rng, level=1.0)
                out = h
                for _k in range(k):
                    out = transfer_apply(system, potential.f, out).values
                lip = c1_seminorm(out, system.partition, log=True)
                best = max(best, lip / (B / kappa2**k + 1))
    return 1.1 * max(best, 1e-12)


# correlation decay on the suspension --------------------------------------------

def cylinder_roof(system: CodedSystem) -> np.ndarray:
    """Roof per depth-k cylinder, taken at its representative."""
    part = system.partition
    ext = np.column_stack([part.words, part.words[:, -1:]])
    return system.tau[system.child.index(ext)]


def correlation_decay_estimate(system: CodedSystem, potential: NormalizedPotential,
                               phi=None, psi=None, t_max: float = 120.0, dt: float = 0.02,
                               floor: float = 1e-12, t_min: float = 0.0,
                               phi_profile=(0.5, -0.5), psi_profile=(0.5, -0.5)) -> dict:
    """Correlations of the suspension flow by transporting measures.

    Heights are discretized in steps of ``dt`` (roof rounded per cylinder);
    mass leaving the top of a cylinder re-enters the base through the
    normalized transfer operator, which keeps nu_U (x) Lebesgue invariant.
    Observables are A(x) P(s / tau(x)) with A given per cylinder (defaults:
    smooth functions of the representative) and P(u) = sum_m c_m cos(2 pi m u)
    a cosine polynomial; the default profile sin^2(pi u) makes them
    continuous across the roof identification.
    """
    roof = cylinder_roof(system)
    nu = potential.nu_u
    if np.var(roof) < 1e-10 * max(1.0, np.mean(roof) ** 2) or np.ptp(roof) < 1e-10:
        warnings.warn("roof function is constant: the suspension flow is not mixing",
                      NonMixingWarning, stacklevel=2)
    n = system.size
    steps = np.maximum(np.rint(roof / dt).astype(int), 1)
    nmax = int(steps.max())
    pts = system.partition.reps
    if pts is None:
        pts = np.arange(n, dtype=float).astype(complex) / n
    phi = np.cos(2 * pts.real) + 0.5 * np.sin(3 * pts.imag) if phi is None else np.asarray(phi, float)
    psi = np.sin(pts.real + 0.3) + np.cos(2 * pts.imag) if psi is None else np.asarray(psi, float)
    j = np.arange(nmax)
    mask = j[None, :] < steps[:, None]
    u = (j[None, :] + 0.5) / steps[:, None]

    def profile(coef):
        out = sum(c * np.cos(2 * np.pi * m * u) for m, c in enumerate(coef))
        return np.where(mask, out, 0.0)

    obs_phi = np.broadcast_to(phi, (n,))[:, None] * profile(phi_profile)
    obs_psi = np.broadcast_to(psi, (n,))[:, None] * profile(psi_profile)
    stat = np.where(mask, nu[:, None], 0.0)
    stat /= stat.sum()
    m_phi = float((obs_phi * stat).sum())
    m_psi = float((obs_psi * stat).sum())
    mu0 = obs_psi * stat
    n_t = int(round(t_max / dt))
    # inflow history q[t + nmax, C] = mass entering (C, 0) at step t; initial state as virtual inflows
    q = np.zeros((n_t + nmax + 1, n))
    for jj in range(nmax):
        q[nmax - jj, :] = np.where(mask[:, jj], mu0[:, jj], 0.0)
    f = potential.f
    rows, cols = system.rows, system.cols
    ew = np.exp(f)
    nu_safe = np.where(nu > 0, nu, 1.0)
    corr = np.empty(n_t + 1)
    cidx = np.arange(n)
    jidx = np.arange(nmax)
    for t in range(n_t + 1):
        base = t + nmax
        # state at time t: mass at height j came in at step t - j
        hist = q[base - jidx, :].T  # (n, nmax)
        corr[t] = float((obs_phi * np.where(mask, hist, 0.0)).sum()) - m_phi * m_psi
        if t == n_t:
            break
        exits = q[base - steps + 1, cidx]
        dens = exits / nu_safe
        pushed = np.bincount(rows, ew * dens[cols], n)
        q[base + 1, :] = nu * pushed
    times = np.arange(n_t + 1) * dt
    return _fit_decay(times, corr, floor, t_min) | {"roof_var": float(np.var(roof))}


def _fit_decay(times, corr, floor, t_min):
    mag = np.abs(corr)
    env = np.maximum.accumulate(mag[::-1])[::-1]
    above = env > floor
    end = int(np.argmin(above)) if not above.all() else len(env)
    sel = (times >= t_min) & (np.arange(len(times)) < end) & (env > 0)
    out = {"t": times, "corr": corr, "abs_corr": mag, "envelope": env}
    if sel.sum() < 3:
        return out | {"rate": np.nan, "r2": np.nan, "r2_raw": np.nan, "window": (np.nan, np.nan)}
    x = times[sel]
    y = np.log(env[sel])
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    r2 = 1 - resid.var() / y.var() if y.var() > 0 else 0.0
    raw_ok = sel & (mag > 0)
    yr = np.log(mag[raw_ok])
    pr = np.polyfit(times[raw_ok], yr, 1)
    rr = yr - np.polyval(pr, times[raw_ok])
    r2_raw = 1 - rr.var() / yr.var() if yr.var() > 0 else 0.0
    return out | {"rate": float(-slope), "r2": float(r2), "r2_raw": float(r2_raw),
                  "window": (float(x[0]), float(x[-1]))}
