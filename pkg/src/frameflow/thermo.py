"""Symbolic dynamics, cylinder discretization and Ruelle-Perron-Frobenius solving.

Functions are piecewise constant on the depth-k cylinders.  The transfer
operator at depth k is assembled from the depth-(k+1) words ``W = x0 C``: the
branch ``x0`` sends the cylinder ``C = W[1:]`` into ``W[:k]``, so

    (L h)(C) = sum over W with W[1:] = C of exp(f(W)) h(W[:k]).

Potentials are evaluated at canonical representatives: the representative of
a word is its image of the attracting fixed point of its last letter, which
keeps every representative exactly on the limit set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import (
    BracketError,
    ConvergenceError,
    DepthError,
    NormalizationError,
    ShapeError,
)
from .schottky import (
    MAX_WORDS,
    SchottkyGroup,
    _circles_image,
    admissible_words,
    mobius,
    orbit_distance,
)

RPF_TOL = 1e-12
RPF_MAXITER = 10**5


@dataclass(frozen=True, eq=False)
class Subshift:
    """One-sided subshift of finite type with 0/1 transition matrix."""

    transition: np.ndarray
    kappa_metric: float = 0.5

    def __post_init__(self):
        t = np.asarray(self.transition, dtype=int)
        object.__setattr__(self, "transition", t)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ShapeError("transition matrix must be square")
        if not 0 < self.kappa_metric < 1:
            raise ValueError("kappa_metric must lie in (0, 1)")
        if not self.is_primitive():
            raise ValueError("transition matrix must be irreducible and aperiodic")

    @classmethod
    def full(cls, k: int, kappa_metric: float = 0.5) -> "Subshift":
        return cls(np.ones((k, k), dtype=int), kappa_metric)

    @property
    def n_letters(self) -> int:
        return self.transition.shape[0]

    def is_primitive(self) -> bool:
        n = self.transition.shape[0]
        p = (self.transition > 0).astype(float)
        acc = p.copy()
        for _ in range((n - 1) ** 2 + 1):
            if np.all(acc > 0):
                return True
            acc = np.minimum(acc @ p, 1.0)
        return bool(np.all(acc > 0))

    def admissible(self, word) -> bool:
        word = list(word)
        return all(self.transition[a, b] for a, b in zip(word, word[1:]))

    def words(self, depth: int) -> np.ndarray:
        return admissible_words(self.n_letters, self.transition, depth)

    def count(self, depth: int) -> int:
        v = np.ones(self.n_letters, dtype=np.int64)
        for _ in range(depth - 1):
            v = self.transition @ v
        return int(v.sum())

    def perron_value(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.transition))))


def word_codes(words: np.ndarray, n_letters: int) -> np.ndarray:
    codes = np.zeros(len(words), dtype=np.int64)
    for col in range(words.shape[1]):
        codes = codes * n_letters + words[:, col].astype(np.int64)
    return codes


@dataclass(eq=False)
class CylinderPartition:
    """Depth-k cylinders with representatives and diameter bounds.

    For a group, ``centers``/``radii`` describe an exact disk containing each
    cylinder (the image of the terminal letter's disk), so ``diameters`` is
    twice the radius.  Symbolic partitions use kappa_metric**depth instead.
    """

    subshift: Subshift
    depth: int
    words: np.ndarray
    reps: np.ndarray | None = None
    centers: np.ndarray | None = None
    radii: np.ndarray | None = None
    group: SchottkyGroup | None = None
    codes: np.ndarray = field(init=False)

    def __post_init__(self):
        self.codes = word_codes(self.words, self.subshift.n_letters)

    def __len__(self):
        return len(self.words)

    @property
    def diameters(self) -> np.ndarray:
        if self.radii is not None:
            return 2.0 * self.radii
        return np.full(len(self), self.subshift.kappa_metric ** self.depth)

    def index(self, words: np.ndarray) -> np.ndarray:
        codes = word_codes(words, self.subshift.n_letters)
        idx = np.searchsorted(self.codes, codes)
        if np.any(idx >= len(self.codes)) or np.any(self.codes[np.minimum(idx, len(self) - 1)] != codes):
            raise ShapeError("word not in partition")
        return idx

    def refine(self) -> "CylinderPartition":
        """Partition at depth + 1 (children are one-letter extensions)."""
        if self.subshift.count(self.depth + 1) > MAX_WORDS:
            raise DepthError(f"depth {self.depth + 1} exceeds {MAX_WORDS} cylinders")
        t = self.subshift.transition
        n = self.subshift.n_letters
        new_words, new_reps, new_c, new_r = [], [], [], []
        for l in range(n):
            ok = t[l, self.words[:, 0]] == 1
            new_words.append(np.column_stack([np.full(ok.sum(), l, dtype=np.int8),
                                              self.words[ok]]))
            if self.group is not None:
                m = self.group.letters[l]
                new_reps.append(mobius(m, self.reps[ok]))
                c, r = _circles_image(m, self.centers[ok], self.radii[ok])
                new_c.append(c)
                new_r.append(r)
        words = np.vstack(new_words)
        order = np.lexsort(words.T[::-1])
        kw = {}
        if self.group is not None:
            kw = dict(reps=np.concatenate(new_reps)[order],
                      centers=np.concatenate(new_c)[order],
                      radii=np.concatenate(new_r)[order], group=self.group)
        return CylinderPartition(self.subshift, self.depth + 1, words[order], **kw)


def symbolic_partition(subshift: Subshift, depth: int) -> CylinderPartition:
    base = CylinderPartition(subshift, 1, np.arange(subshift.n_letters, dtype=np.int8)[:, None])
    while base.depth < depth:
        base = base.refine()
    return base


def group_partition(group: SchottkyGroup, depth: int) -> CylinderPartition:
    sub = Subshift(group.transition)
    base = CylinderPartition(
        sub, 1, np.arange(group.n_letters, dtype=np.int8)[:, None],
        reps=group.fixed_points.astype(complex), centers=group.centers.copy(),
        radii=group.radii.copy(), group=group,
    )
    while base.depth < depth:
        base = base.refine()
    return base


@dataclass(frozen=True)
class CylinderFunction:
    """Values per depth-k cylinder (scalar or vector valued)."""

    depth: int
    values: np.ndarray

    def __len__(self):
        return self.values.shape[0]


class CodedSystem:
    """Transfer-operator skeleton at a working depth.

    Holds the depth-k partition, the branch incidence (``rows``: target
    cylinder W[1:], ``cols``: source cylinder W[:k]) for every depth-(k+1) word
    W, and the roof and holonomy angle attached to each W.
    """

    def __init__(self, partition: CylinderPartition, child: CylinderPartition,
                 tau: np.ndarray, angle: np.ndarray):
        self.partition = partition
        self.child = child
        self.depth = partition.depth
        self.subshift = partition.subshift
        self.group = partition.group
        self.rows = partition.index(child.words[:, 1:])
        self.cols = partition.index(child.words[:, :-1])
        self.tau = np.asarray(tau, dtype=float)
        self.angle = np.asarray(angle, dtype=float)
        self.size = len(partition)

    @classmethod
    def from_group(cls, group: SchottkyGroup, depth: int) -> "CodedSystem":
        part = group_partition(group, depth)
        child = part.refine()
        # branch x0 evaluated at the representative of W[1:]
        sub_idx = part.index(child.words[:, 1:])
        pts = part.reps[sub_idx]
        der = np.empty(len(child), dtype=complex)
        for l in range(group.n_letters):
            sel = child.words[:, 0] == l
            m = group.letters[l]
            der[sel] = 1.0 / (m[1, 0] * pts[sel] + m[1, 1]) ** 2
        tau = -np.log(np.abs(der))
        angle = np.angle(der) if group.family == "kleinian" else np.zeros(len(child))
        return cls(part, child, tau, angle)

    @classmethod
    def symbolic(cls, subshift: Subshift, depth: int, roof=1.0, angle=0.0) -> "CodedSystem":
        """Abstract system; ``roof``/``angle`` are constants or callables of child words."""
        part = symbolic_partition(subshift, depth)
        child = part.refine()
        tau = roof(child.words) if callable(roof) else np.full(len(child), float(roof))
        ang = angle(child.words) if callable(angle) else np.full(len(child), float(angle))
        return cls(part, child, tau, ang)

    def operator(self, weights_log: np.ndarray) -> sparse.csr_matrix:
        """Sparse matrix of the transfer operator with log-weights per child word."""
        return sparse.csr_matrix(
            (np.exp(weights_log), (self.rows, self.cols)), shape=(self.size, self.size))

    def potential(self, s: float) -> np.ndarray:
        return -s * self.tau


def transfer_apply(system: CodedSystem, f_weights, h) -> CylinderFunction:
    """(L h)(C) = sum over depth-(k+1) words W = x0 C of exp(f(W)) h(W[:k])."""
    values = h.values if isinstance(h, CylinderFunction) else np.asarray(h)
    depth = h.depth if isinstance(h, CylinderFunction) else system.depth
    f = np.asarray(f_weights)
    if depth != system.depth or values.shape[0] != system.size:
        raise ShapeError(f"function of depth {depth} on system of depth {system.depth}")
    if f.shape != (len(system.rows),):
        raise ShapeError(f"need {len(system.rows)} weights, got {f.shape}")
    contrib = np.exp(f) * values[system.cols] if values.ndim == 1 else \
        np.exp(f)[:, None] * values[system.cols]
    return CylinderFunction(system.depth, _gather(system.rows, contrib, system.size))


def _gather(rows, contrib, size):
    if contrib.ndim > 1:
        return np.stack([_gather(rows, contrib[:, i], size) for i in range(contrib.shape[1])],
                        axis=1)
    if np.iscomplexobj(contrib):
        return (np.bincount(rows, contrib.real, size)
                + 1j * np.bincount(rows, contrib.imag, size))
    return np.bincount(rows, contrib, size)


@dataclass
class ThermoSolution:
    """Leading eigen-data of a real transfer operator.

    ``h`` is normalized so that ``nu @ h == 1`` with ``nu`` a probability vector.
    """

    a: float
    lam: float
    h: np.ndarray
    nu: np.ndarray
    iterations: int
    gap: float
    depth: int

    @property
    def log_lambda(self) -> float:
        return float(np.log(self.lam))


def rpf_solve(system: CodedSystem, potential, a: float = 0.0, tol: float = RPF_TOL,
              maxiter: int = RPF_MAXITER) -> ThermoSolution:
    """Power iteration for the eigenfunction and the adjoint eigenmeasure."""
    op = system.operator(np.asarray(potential, dtype=float))
    opt = op.T.tocsr()
    n = system.size
    h = np.ones(n) / n
    nu = np.ones(n) / n
    ratios = []
    prev_dh = None
    lam = 0.0
    for it in range(1, maxiter + 1):
        hn = op @ h
        lam = hn.sum() / h.sum()
        hn /= hn.sum()
        nun = opt @ nu
        nun /= nun.sum()
        dh = np.max(np.abs(hn - h) / hn)
        dn = np.max(np.abs(nun - nu) / np.maximum(nun, 1e-300))
        if prev_dh is not None and prev_dh > 0 and dh > 0:
            ratios.append(dh / prev_dh)
        prev_dh = dh
        h, nu = hn, nun
        if max(dh, dn) <= tol:
            break
    else:
        gap = float(np.median(ratios[-10:])) if ratios else np.nan
        raise ConvergenceError(f"no convergence after {maxiter} iterations", gap=gap)
    lam = float((op @ h).sum() / h.sum())
    h = h / (nu @ h)
    gap = float(np.median(ratios[-5:])) if ratios else 0.0
    return ThermoSolution(a, lam, h, nu, it, gap, system.depth)


def pressure(system: CodedSystem, s: float) -> float:
    """log of the leading eigenvalue for the potential -s * roof."""
    return rpf_solve(system, system.potential(s)).log_lambda


@dataclass
class CriticalExponent:
    delta: float
    lo: float
    hi: float
    depth: int
    bound: float

    def __float__(self):
        return self.delta


def critical_exponent(system: CodedSystem, tol: float = 1e-10,
                      bound: float | None = None) -> CriticalExponent:
    """Root of s -> pressure(s) by bisection on [0, bound].

    ``bound`` defaults to the volume-entropy ceiling of the ambient space (1
    for the hyperbolic plane, 2 for hyperbolic 3-space).
    """
    if bound is None:
        if system.group is None:
            raise ValueError("symbolic systems need an explicit bound")
        bound = float(system.group.hyperbolic_dim - 1)
    lo, hi = 0.0, float(bound)
    p_lo, p_hi = pressure(system, lo), pressure(system, hi)
    if not (p_lo > 0 > p_hi):
        raise BracketError(f"pressure({lo})={p_lo:.3e}, pressure({hi})={p_hi:.3e}: no sign change")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if pressure(system, mid) > 0:
            lo = mid
        else:
            hi = mid
    return CriticalExponent(0.5 * (lo + hi), lo, hi, system.depth, float(bound))


@dataclass
class NormalizedPotential:
    """Normalized weights together with the data that certify them."""

    f: np.ndarray
    a: float
    delta: float
    h0: np.ndarray
    nu_u: np.ndarray
    fixed: np.ndarray
    residual_constant: float
    residual_adjoint: float


def normalize_potential(system: CodedSystem, sol_a: ThermoSolution, sol_0: ThermoSolution,
                        delta: float, check_tol: float = 1e-10) -> NormalizedPotential:
    """f^(a)(W) = -log lam_a - (delta + a) tau(W) + log h0(W[:k]) - log h0(W[1:]).

    The resulting operator fixes h_a / h0; at a = 0 it fixes constants and
    its adjoint fixes nu_U = h0 nu_0, both checked to ``check_tol``.
    """
    if sol_a.depth != system.depth or sol_0.depth != system.depth:
        raise ShapeError("solutions and system have different depths")
    h0 = sol_0.h
    if np.any(h0 <= 0) or not np.all(np.isfinite(h0)):
        raise NormalizationError("reference eigenfunction is not positive")
    a = sol_a.a
    lh0 = np.log(h0)
    f = -np.log(sol_a.lam) - (delta + a) * system.tau + lh0[system.cols] - lh0[system.rows]
    nu_u = h0 * sol_0.nu
    nu_u = nu_u / nu_u.sum()
    fixed = sol_a.h / h0
    one = transfer_apply(system, f, np.ones(system.size)).values
    res_c = float(np.max(np.abs(one - 1.0))) if a == 0 else float(
        np.max(np.abs(transfer_apply(system, f, fixed).values - fixed) / fixed))
    adj = _gather(system.cols, np.exp(f) * nu_u[system.rows], system.size)
    res_a = float(np.max(np.abs(adj - nu_u)) / np.max(nu_u))
    if a == 0 and (res_c > check_tol or res_a > check_tol):
        raise NormalizationError(
            f"normalization residuals {res_c:.2e} (constants) and {res_a:.2e} (adjoint)")
    return NormalizedPotential(f, a, delta, h0, nu_u, fixed, res_c, res_a)


def normalized_family(system: CodedSystem, delta: float, a_values) -> list:
    """Normalized potentials for each a in ``a_values`` (sharing h0 from a = 0)."""
    sol0 = rpf_solve(system, -delta * system.tau, a=0.0)
    out = []
    for a in a_values:
        sol = sol0 if a == 0 else rpf_solve(system, -(delta + a) * system.tau, a=a)
        out.append(normalize_potential(system, sol, sol0, delta))
    return out


def lipschitz_in_a(system: CodedSystem, delta: float, a_values) -> float:
    """Fitted A_f with |f^(a) - f^(0)| <= A_f |a| over the grid."""
    fams = normalized_family(system, delta, [0.0] + [a for a in a_values if a != 0])
    f0 = fams[0].f
    return float(max(np.max(np.abs(p.f - f0)) / abs(p.a) for p in fams[1:]))


def adjoint_apply(system: CodedSystem, f_weights, nu) -> np.ndarray:
    """Action of the transposed operator on a measure given as cylinder weights."""
    return _gather(system.cols, np.exp(np.asarray(f_weights)) * np.asarray(nu)[system.rows],
                   system.size)


def poincare_shell_sums(group: SchottkyGroup, s_values, max_len: int = 12) -> np.ndarray:
    """log of sum over reduced words of length n of exp(-s d(o, g o)), n = 1..max_len.

    Returns an array of shape (len(s_values), max_len).
    """
    s_values = np.atleast_1d(np.asarray(s_values, dtype=float))
    letters = np.stack(group.letters)
    mats = letters.copy()
    last = np.arange(group.n_letters)
    out = np.empty((len(s_values), max_len))
    for n in range(1, max_len + 1):
        if n > 1:
            nxt, nlast = [], []
            for l in range(group.n_letters):
                ok = last != (l ^ 1)
                nxt.append(mats[ok] @ letters[l])
                nlast.append(np.full(ok.sum(), l))
            mats = np.concatenate(nxt)
            last = np.concatenate(nlast)
        d = orbit_distance(mats)
        for i, s in enumerate(s_values):
            x = -s * d
            mx = x.max()
            out[i, n - 1] = mx + np.log(np.sum(np.exp(x - mx)))
    return out


def poincare_check(group: SchottkyGroup, delta: float, offset: float = 0.05,
                   max_len: int = 12, window: int = 6) -> dict:
    """Shell-sum growth slopes just below and above the critical exponent.

    Below ``delta`` the shells grow (the series diverges); above it they shrink
    geometrically (the series converges).  Slopes are least-squares fits of
    log shell sums over the last ``window`` lengths.
    """
    logs = poincare_shell_sums(group, [delta - offset, delta + offset], max_len)
    n = np.arange(1, max_len + 1)[-window:]
    lo_slope = float(np.polyfit(n, logs[0, -window:], 1)[0])
    hi_slope = float(np.polyfit(n, logs[1, -window:], 1)[0])
    partial_lo = np.cumsum(np.exp(logs[0]))
    partial_hi = np.cumsum(np.exp(logs[1]))
    return {"slope_below": lo_slope, "slope_above": hi_slope,
            "partial_below": partial_lo, "partial_above": partial_hi,
            "diverges_below": lo_slope > 0, "converges_above": hi_slope < 0}


def birkhoff_sums(system: CodedSystem, f: np.ndarray, words: np.ndarray) -> np.ndarray:
    """Sum of f along the first len(word) shifts of each word's representative.

    The representative continues the word by repeating its last letter.
    """
    k = system.depth
    length = words.shape[1]
    ext = np.column_stack([words] + [words[:, -1:]] * (k + 1))
    total = np.zeros(len(words))
    for j in range(length):
        total += f[system.child.index(ext[:, j:j + k + 1])]
    return total


def gibbs_constants(system: CodedSystem, norm: NormalizedPotential, max_depth: int = 8) -> dict:
    """min/max over cylinders of nu_U([w]) / exp(S_|w| f^(0)) for each length."""
    out = {}
    k = system.depth
    for length in range(1, min(max_depth, k) + 1):
        words = system.subshift.words(length)
        prefix_idx = np.searchsorted(
            word_codes(words, system.subshift.n_letters),
            word_codes(system.partition.words[:, :length], system.subshift.n_letters))
        mass = np.bincount(prefix_idx, norm.nu_u, len(words))
        ratio = mass / np.exp(birkhoff_sums(system, norm.f, words))
        out[length] = (float(ratio.min()), float(ratio.max()))
    return out


def doubling_constant(system: CodedSystem, nu: np.ndarray, radii, centers=None) -> float:
    """Largest nu(B(x, 2r)) / nu(B(x, r)) over centers and radii on the limit set."""
    pts = system.partition.reps
    if centers is None:
        centers = pts[:: max(1, len(pts) // 200)]
    worst = 1.0
    for c in centers:
        dist = np.abs(pts - c)
        for r in radii:
            small = nu[dist <= r].sum()
            if small > 0:
                worst = max(worst, nu[dist <= 2 * r].sum() / small)
    return float(worst)
