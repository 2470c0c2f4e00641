"""Dolgopyat operators and their ingredients: cones, constants, covers, bumps, NCP and LNIC."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    CoverError,
    DomainError,
    DominationFailure,
    InfeasibleError,
    NoWitness,
    PreconditionError,
    ResolutionError,
)
from .holonomy import TwistRep, c1_seminorm, fit_A0, hyperbolicity_constants
from .nilpotent import GAUGE_CONSTANT, NilModel
from .schottky import MAX_WORDS, _circles_image, _derivative, mobius, ping_pong_check, word_matrix
from .thermo import CodedSystem, CylinderFunction, NormalizedPotential, doubling_constant, group_partition

ETA_TARGET = 0.999
DELTA_GRID = tuple(2.0 ** -k for k in range(1, 11))
FD_STEP = 1e-5


# cones and the strong triangle inequality ---------------------------------------

@dataclass(frozen=True)
class Cone:
    """Positive cylinder functions whose discrete log-Lipschitz constant is at most B."""

    B: float

    def log_lipschitz(self, h, partition) -> float:
        values = h.values if isinstance(h, CylinderFunction) else np.asarray(h, dtype=float)
        return c1_seminorm(values, partition, log=True)

    def contains(self, h, partition, rtol: float = 1e-12) -> bool:
        values = h.values if isinstance(h, CylinderFunction) else np.asarray(h, dtype=float)
        if np.any(values <= 0):
            return False
        return self.log_lipschitz(values, partition) <= self.B * (1 + rtol) + 1e-300


def strong_triangle(w1, w2, alpha: float, L: float) -> dict:
    """||w1 + w2|| against (1 - alpha^2 / (16 L)) ||w1|| + ||w2||.

    Requires the angle between w1 and w2 to be at least alpha and
    ||w1|| <= L ||w2|| with L >= 1.
    """
    w1 = np.asarray(w1)
    w2 = np.asarray(w2)
    if not 0 <= alpha <= np.pi:
        raise PreconditionError("alpha must lie in [0, pi]")
    if L < 1:
        raise PreconditionError("L must be at least 1")
    n1, n2 = float(np.linalg.norm(w1)), float(np.linalg.norm(w2))
    if n2 == 0:
        raise PreconditionError("w2 must be nonzero")
    if n1 > L * n2 * (1 + 1e-12):
        raise PreconditionError(f"||w1|| / ||w2|| = {n1 / n2:.6g} exceeds L = {L}")
    if n1 > 0:
        c = float(np.real(np.vdot(w1, w2))) / (n1 * n2)
        angle = math.acos(max(-1.0, min(1.0, c)))
        if angle < alpha - 1e-12:
            raise PreconditionError(f"angle {angle:.6g} is below alpha = {alpha:.6g}")
    elif alpha > 0:
        raise PreconditionError("angle with a zero vector is undefined")
    lhs = float(np.linalg.norm(w1 + w2))
    rhs = (1 - alpha**2 / (16 * L)) * n1 + n2
    return {"lhs": lhs, "rhs": rhs, "holds": bool(lhs <= rhs * (1 + 1e-12) + 1e-15)}


# constants ---------------------------------------------------------------------

@dataclass(frozen=True)
class MeasuredInputs:
    """Inputs of the constants chain.

    ``maction``, ``lnic`` and ``ncp`` are the measured lower bounds for the
    a+m action, the local non-integrability pairing and the non-concentration
    ratio.  Constants with no Schottky-side definition default to 1; ``m1``
    is the length of the cylinders C_k and ``m0`` the lower bound for m2.
    """

    A0: float = 2.0
    c0: float = 0.5
    kappa1: float = 2.0
    kappa2: float = 1.2
    T0: float = 1.0
    N: int = 4
    maction: float = 1.0
    lnic: float = 0.5
    ncp: float = 0.25
    delta_1rho: float = 1.0
    delta_psi: float = 1.0
    C_phi: float = 1.0
    C_ano: float = 1.0
    C_vit: float = 1.0
    eps_cc: float = 1.0
    delta0: float = 1.0
    C_bp: float = 1.0
    C_exp_bp: float = 1.0
    delta_hat: float = 1.0
    m1: int = 2
    m0: int = 0

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class Inequality:
    name: str
    measured: float
    bound: float
    relation: str
    ok: bool


@dataclass(frozen=True)
class DolgopyatConfig:
    inputs: MeasuredInputs
    b0: float
    E: float
    delta1: float
    eps1: float
    eps2: float
    eps3: float
    eps4: float
    m2: int
    mu: float

    @property
    def m(self) -> int:
        return self.inputs.m1 + self.m2

    @property
    def N(self) -> int:
        return self.inputs.N

    def bounds(self) -> dict:
        """Right-hand sides of the chain given the other constants."""
        i = self.inputs
        if self.delta1 <= 0 or self.eps1 <= 0:
            nan = float("nan")
            b = dict.fromkeys(("eps1", "eps2", "eps3", "eps4", "m2", "mu"), nan)
            b.update(b0=1.0, E=2 * i.A0 / i.delta_1rho,
                     delta1=i.maction * i.lnic * i.ncp * i.delta_psi / 14)
            if self.delta1 > 0:
                b["eps1"] = self._eps1_bound()
            return b
        m2_rhs = max(8 * i.A0, 4 * self.E * i.N * self.eps2 / (i.c0 * math.log(2)),
                     32 * self.E * i.N * self.eps2 / i.c0, 4 * self.E / (i.c0 * self.delta1))
        # arccos(1 - x^2 / 2) = 2 arcsin(x / 2), stable for tiny x; clamp to [-1, 1]
        acos_term = (2 * math.asin(min(1.0, self.delta1 * self.eps1 / 2))) ** 2
        with np.errstate(over="ignore"):
            growth = float(np.exp(2 * self.m2 * i.T0))
        mu_terms = (self.E * self.eps2 / (2 * i.N), 1 / (4 * i.N),
                    acos_term / (16 * 16 * growth * i.N))
        return {
            "b0": 1.0,
            "E": 2 * i.A0 / i.delta_1rho,
            "delta1": i.maction * i.lnic * i.ncp * i.delta_psi / 14,
            "eps1": self._eps1_bound(),
            "eps2": min(i.ncp * self.eps1 / (4 * i.N),
                        self.delta1 * self.eps1 / (4 * i.N * (i.A0 + self.delta1))),
            "eps3": i.c0 * i.kappa2**i.m1 * self.eps2 / 2,
            "eps4": 10 * i.kappa1**i.m1 * self.eps1 / i.c0,
            "m2": m2_rhs,
            "mu": min(mu_terms),
        }

    def _eps1_bound(self) -> float:
        i = self.inputs
        return min(i.C_vit, i.eps_cc, 2 * i.delta0 * i.delta_1rho / i.C_bp,
                   4 * self.delta1 / i.C_bp**2, 4 * self.delta1 * i.delta_1rho / i.C_exp_bp,
                   1 / self.delta1,
                   i.c0 * i.C_ano * i.C_phi * i.delta_hat * math.exp(i.delta_hat)
                   / (5 * i.kappa1**i.m1 * i.delta_1rho))

    def validate(self) -> list:
        """Re-check every link of the chain; returns Inequality records in chain order."""
        b = self.bounds()
        rel = 1e-12
        out = [
            Inequality("b0", self.b0, b["b0"], "=", self.b0 == 1.0),
            Inequality("E", self.E, b["E"], ">", self.E > b["E"]),
            Inequality("delta1", self.delta1, b["delta1"], "<", 0 < self.delta1 < b["delta1"]),
            Inequality("eps1", self.eps1, b["eps1"], "<", 0 < self.eps1 < b["eps1"]),
            Inequality("eps2", self.eps2, b["eps2"], "<", 0 < self.eps2 < b["eps2"]),
            Inequality("eps3", self.eps3, b["eps3"], "=",
                       abs(self.eps3 - b["eps3"]) <= rel * b["eps3"]),
            Inequality("eps4", self.eps4, b["eps4"], "=",
                       abs(self.eps4 - b["eps4"]) <= rel * b["eps4"]),
            Inequality("m2", float(self.inputs.kappa2**self.m2), b["m2"], ">",
                       self.m2 > self.inputs.m0 and self.inputs.kappa2**self.m2 > b["m2"]),
            Inequality("mu", self.mu, b["mu"], "<", 0 < self.mu < b["mu"]),
            Inequality("m", float(self.m), float(self.inputs.m1 + self.m2), "=",
                       self.m == self.inputs.m1 + self.m2),
        ]
        return out

    def first_violation(self):
        for q in self.validate():
            if not q.ok:
                return q
        return None


SAFETY = 0.5
MAX_M2 = 10_000
AMP_CAP = 40.0


def _check_inputs(i: MeasuredInputs):
    positive = ("A0", "c0", "kappa1", "kappa2", "T0", "N", "maction", "lnic", "ncp",
                "delta_1rho", "delta_psi", "C_phi", "C_ano", "C_vit", "eps_cc", "delta0",
                "C_bp", "C_exp_bp", "delta_hat", "m1")
    for name in positive:
        v = getattr(i, name)
        if not (np.isfinite(v) and v > 0):
            raise InfeasibleError(f"input {name} = {v} must be positive", f"{name} > 0")
    if not i.c0 < 1:
        raise InfeasibleError(f"c0 = {i.c0} must lie in (0, 1)", "c0 < 1")
    if not i.kappa2 > 1:
        raise InfeasibleError(f"kappa2 = {i.kappa2} must exceed 1", "kappa2 > 1")
    if not i.kappa1 > i.kappa2:
        raise InfeasibleError(f"kappa1 = {i.kappa1} <= kappa2 = {i.kappa2}", "kappa1 > kappa2")
    if i.m0 < 0:
        raise InfeasibleError(f"m0 = {i.m0} is negative", "m0 >= 0")


def solve_constants(inputs: MeasuredInputs, **overrides) -> DolgopyatConfig:
    """Fix the free constants in dependency order, each at a safety factor of 1/2.

    Lower bounds are doubled and upper bounds halved; eps3 and eps4 are
    determined exactly; m2 is the smallest admissible integer.  ``overrides``
    replaces a constant by a given value (the chain is still re-validated).
    """
    _check_inputs(inputs)
    unknown = set(overrides) - {"E", "delta1", "eps1", "eps2", "m2", "mu"}
    if unknown:
        raise ValueError(f"cannot override {sorted(unknown)}")
    i = inputs
    cfg = DolgopyatConfig(i, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0, 0.0)
    cfg = replace(cfg, E=overrides.get("E", cfg.bounds()["E"] / SAFETY))
    cfg = replace(cfg, delta1=overrides.get("delta1", SAFETY * cfg.bounds()["delta1"]))
    cfg = replace(cfg, eps1=overrides.get("eps1", SAFETY * cfg.bounds()["eps1"]))
    cfg = replace(cfg, eps2=overrides.get("eps2", SAFETY * cfg.bounds()["eps2"]))
    cfg = replace(cfg, eps3=cfg.bounds()["eps3"])
    cfg = replace(cfg, eps4=cfg.bounds()["eps4"])
    if "m2" in overrides:
        m2 = int(overrides["m2"])
    else:
        target = cfg.bounds()["m2"]
        m2 = max(i.m0 + 1, int(math.floor(math.log(target) / math.log(i.kappa2))) + 1)
        while i.kappa2**m2 <= target:
            m2 += 1
        if m2 > MAX_M2:
            raise InfeasibleError(f"m2 = {m2} exceeds {MAX_M2}", "m2")
    cfg = replace(cfg, m2=m2)
    cfg = replace(cfg, mu=overrides.get("mu", SAFETY * cfg.bounds()["mu"]))
    bad = cfg.first_violation()
    if bad is not None:
        raise InfeasibleError(f"{bad.name}: {bad.measured:.6g} {bad.relation} {bad.bound:.6g} "
                              "fails", bad.name)
    return cfg


def random_inputs(rng) -> MeasuredInputs:
    """A random positive input draw with c0 in (0,1) and kappa1 > kappa2 > 1."""
    kappa2 = 1 + rng.uniform(0.05, 10)
    return MeasuredInputs(
        A0=rng.uniform(0.1, 10), c0=rng.uniform(0.05, 0.999), kappa1=kappa2 * rng.uniform(1.01, 5),
        kappa2=kappa2, T0=rng.uniform(0.1, 5), N=int(rng.integers(1, 20)),
        maction=rng.uniform(0.1, 1), lnic=rng.uniform(0.01, 2), ncp=rng.uniform(0.01, 1),
        delta_1rho=rng.uniform(0.1, 1), delta_hat=rng.uniform(0.1, 2), m1=int(rng.integers(1, 4)),
    )


# inverse branches, words and the LNIC cocycle --------------------------------------

DISTINGUISHED = 0  # the Markov piece playing the role of U_1


def _log_derivative(group, word, u):
    """log of the derivative of gamma_word at u (complex; real part is -tau_word)."""
    u = np.asarray(u, dtype=complex)
    m = word_matrix(group, word)
    return np.log(_derivative(m, u))


def _branch_domain_ok(group, word, u) -> np.ndarray:
    """u must lie in a disk of a letter allowed after the last letter of ``word``."""
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    allowed = np.flatnonzero(group.transition[word[-1]])
    inside = np.zeros(u.shape, dtype=bool)
    for l in allowed:
        inside |= np.abs(u - group.centers[l]) < group.radii[l] * (1 + 1e-9)
    return inside


def bp_map(group, alpha0, alphaj, u, u2) -> tuple:
    """Four-fold return cocycle combination in A x M as (time shift, angle)."""
    alpha0 = tuple(int(a) for a in alpha0)
    alphaj = tuple(int(a) for a in alphaj)
    pts = np.array([u, u2], dtype=complex)
    for w in (alpha0, alphaj):
        if not np.all(_branch_domain_ok(group, w, pts)):
            raise DomainError(f"points outside the domain of the branch {w}")
    l0 = _log_derivative(group, alpha0, pts)
    lj = _log_derivative(group, alphaj, pts)
    # Phi(v(u)) = (tau, theta) = (-Re log d, Im log d)
    comb = (l0[0] - l0[1]) - (lj[0] - lj[1])
    dt = float(-comb.real)
    dth = float(comb.imag) if group.family == "kleinian" else 0.0
    dth = (dth + np.pi) % (2 * np.pi) - np.pi
    return dt, dth


def bp_derivative(group, alpha0, alphaj, u, step: float = FD_STEP) -> dict:
    """Real-linear map Z -> d BP_{j,u}(Z) at u by central differences, rows = (t, theta).

    Columns are the chart directions (1 for fuchsian, (1, i) for kleinian).
    Also returns the Richardson discrepancy between steps h and 2h.
    """
    dirs = [1.0] if group.family == "fuchsian" else [1.0, 1j]

    def jac(h):
        cols = []
        for d in dirs:
            p = bp_map(group, alpha0, alphaj, u, u + h * d)
            m = bp_map(group, alpha0, alphaj, u, u - h * d)
            cols.append(((p[0] - m[0]) / (2 * h), (p[1] - m[1]) / (2 * h)))
        return np.array(cols).T

    j1, j2 = jac(step), jac(2 * step)
    rich = (4 * j1 - j2) / 3
    return {"jacobian": rich, "discrepancy": float(np.abs(j1 - j2).max()),
            "scale": float(np.abs(rich).max())}


def section_words(group, length: int, count: int) -> list:
    """``count`` admissible words of the given length ending before the distinguished piece.

    Chosen greedily to maximize the pairwise coding distance 2^-(first
    disagreement), ties broken lexicographically; the first word is alpha_0.
    """
    from .schottky import admissible_words

    words = admissible_words(group.n_letters, group.transition, length)
    words = words[group.transition[words[:, -1], DISTINGUISHED] == 1]
    chosen = [0]
    if count > len(words):
        raise DomainError(f"only {len(words)} section words of length {length}")

    def dist(a, b):
        diff = np.flatnonzero(a != b)
        return 0.0 if len(diff) == 0 else 2.0 ** -int(diff[0])

    while len(chosen) < count:
        best, best_d = None, -1.0
        for i in range(len(words)):
            if i in chosen:
                continue
            d = min(dist(words[i], words[c]) for c in chosen)
            if d > best_d:
                best, best_d = i, d
        chosen.append(best)
    return [tuple(int(x) for x in words[i]) for i in chosen]


def lnic_epsilon(group, words, points, n_omega: int = 64) -> dict:
    """min over unit omega in a+m and base points of max_j,Z |<dBP_j(Z), omega>|."""
    if group.family == "fuchsian":
        omegas = np.array([[1.0, 0.0]])
    else:
        ang = np.linspace(0, np.pi, n_omega, endpoint=False)
        omegas = np.column_stack([np.cos(ang), np.sin(ang)])
    worst, disc = np.inf, 0.0
    for u in points:
        jacs = []
        for w in words[1:]:
            d = bp_derivative(group, words[0], w, u)
            jacs.append(d["jacobian"])
            disc = max(disc, d["discrepancy"] / max(d["scale"], 1e-300))
        # |<J Z, omega>| maximized over unit Z is |J^T omega|
        vals = np.max([np.linalg.norm(omegas @ j, axis=1) for j in jacs], axis=0)
        worst = min(worst, float(vals.min()))
    return {"eps2": worst, "richardson_rel": disc}


# non-concentration ----------------------------------------------------------------

def _chart_array(samples, model: NilModel | None):
    """(n, dim) coordinates in n+ from complex chart points or explicit arrays."""
    s = np.asarray(samples)
    if np.iscomplexobj(s) and s.ndim == 1:
        if model is not None and model.dim_v == 1:
            return s.real[:, None]
        return np.column_stack([s.real, s.imag])
    return np.atleast_2d(s.astype(float))


def ncp_witness_search(samples, x: int, eps: float, w, model: NilModel | None = None,
                       delta_grid=DELTA_GRID) -> dict:
    """Largest delta on the grid with a sample y, eps delta <= gauge(x^-1 y) < eps, and
    |<x^-1 y, w>| >= eps delta.

    ``samples`` are complex chart points (abelian n+ of dimension 1 or 2) or an
    (n, dim_v + dim_z) array for a 2-step model.  Raises NoWitness when no
    grid value admits a witness.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    pts = _chart_array(samples, model)
    dv = pts.shape[1] if model is None else model.dim_v
    w = np.asarray(w, dtype=float)
    if abs(np.linalg.norm(w) - 1) > 1e-10:
        raise PreconditionError("w must be a unit vector")
    p = pts[x]
    v = pts[:, :dv] - p[:dv]
    z = pts[:, dv:] - p[dv:]
    if model is not None and model.dim_z:
        z = z - 0.5 * np.einsum("kij,i,nj->nk", model.omega, p[:dv], pts[:, :dv])
    g = ((v * v).sum(1) ** 2 + GAUGE_CONSTANT * (z * z).sum(1)) ** 0.25
    pair = np.abs(np.column_stack([v, z]) @ w)
    grid = sorted(delta_grid, reverse=True)
    for d in grid:
        ok = (g >= eps * d) & (g < eps) & (pair >= eps * d)
        if ok.any():
            i = int(np.flatnonzero(ok)[np.argmax(pair[ok])])
            return {"delta_best": float(d), "witness": i, "pairing": float(pair[i] / eps),
                    "annulus_count": int(((g >= eps * d) & (g < eps)).sum())}
    in_ring = int(((g >= eps * grid[-1]) & (g < eps)).sum())
    why = "annulus empty" if in_ring == 0 else "all annulus points pair below threshold"
    raise NoWitness(f"no witness down to delta = {grid[-1]:g}: {why}")


def degenerate_cloud(dim: int, w, n: int = 500, rng=None) -> np.ndarray:
    """Points on the hyperplane <., w> = 0 through the origin (plus the origin first)."""
    rng = np.random.default_rng(0) if rng is None else rng
    w = np.asarray(w, dtype=float)
    w = w / np.linalg.norm(w)
    pts = rng.uniform(-1, 1, size=(n, dim))
    pts -= np.outer(pts @ w, w)
    pts[0] = 0
    return pts


def heisenberg_ifs_cloud(model: NilModel, depth: int = 6, ratio: float = 0.3,
                         translations=None) -> np.ndarray:
    """Synthetic self-similar cloud: attractor of x -> c_i * dilate(x) in a 2-step group.

    Default translations sit at the vertices of a simplex in s+ with
    distinct [s+, s+] parts, so the s+ spread is nondegenerate.
    """
    dv, dz = model.dim_v, model.dim_z
    if translations is None:
        k = dv + 1
        vs = np.vstack([np.eye(dv), -np.ones((1, dv)) / np.sqrt(dv)])
        zs = np.outer(np.linspace(-0.5, 0.5, k), np.ones(dz)) if dz else np.zeros((k, 0))
        translations = np.column_stack([vs, zs])
    c = np.asarray(translations, dtype=float)
    pts = np.zeros((1, dv + dz))
    t = -math.log(ratio)
    for _ in range(depth):
        v = pts[:, :dv] * math.exp(-t)
        z = pts[:, dv:] * math.exp(-2 * t)
        new = []
        for ci in c:
            nz = z + ci[dv:]
            if dz:
                nz = nz + 0.5 * np.einsum("kij,i,nj->nk", model.omega, ci[:dv], v)
            new.append(np.column_stack([v + ci[:dv], nz]))
        pts = np.vstack(new)
    return pts


def ring_sample(model_dims: tuple, kappa: float, rng) -> np.ndarray:
    """Random unit vector in n+ = s+ (+) z whose s+ part has norm >= kappa."""
    dv, dz = model_dims
    while True:
        w = rng.standard_normal(dv + dz)
        w /= np.linalg.norm(w)
        if np.linalg.norm(w[:dv]) >= kappa:
            return w


# limit-set samples inside the cylinders C_k ------------------------------------

@dataclass
class CylinderSamples:
    """Limit points (with codes) inside a cylinder, and the largest sample-cylinder diameter."""

    prefix: tuple
    points: np.ndarray
    words: np.ndarray
    resolution: float


def cylinder_samples(group, prefix, target_diameter: float, max_points: int = 400_000):
    """Refine inside C[prefix] until every sample cylinder has diameter < target."""
    prefix = tuple(int(a) for a in prefix)
    m = word_matrix(group, prefix)
    part = group_partition(group, 1)
    while True:
        ok = group.transition[prefix[-1], part.words[:, 0]] == 1
        c, r = _circles_image(m, part.centers[ok], part.radii[ok])
        res = float(2 * r.max())
        if res < target_diameter:
            break
        if part.subshift.count(part.depth + 1) > min(MAX_WORDS, max_points):
            raise CoverError(f"samples too sparse: diameter {res:.3g} at depth "
                             f"{len(prefix) + part.depth} is not below {target_diameter:.3g}")
        part = part.refine()
    pts = mobius(m, part.reps[ok])
    words = np.column_stack([np.tile(np.array(prefix, dtype=np.int8), (ok.sum(), 1)),
                             part.words[ok]])
    return CylinderSamples(prefix, pts, words, res)


def c_k_words(group, m1: int) -> dict:
    """For each letter k the code (0, ..., k) of the cylinder C_k of length m1:
    it starts in the distinguished piece and sigma^m1 maps it onto U_k."""
    from .schottky import admissible_words

    words = admissible_words(group.n_letters, group.transition, m1 + 1)
    words = words[words[:, 0] == DISTINGUISHED]
    out = {}
    for k in range(group.n_letters):
        ok = words[words[:, -1] == k]
        if len(ok) == 0:
            raise DomainError(f"no cylinder of length {m1} leads onto piece {k}")
        out[k] = tuple(int(x) for x in ok[0])
    return out


# Vitali covers --------------------------------------------------------------------

@dataclass
class VitaliCover:
    centers: dict            # k -> (r_k,) complex centers x_{k,r,1}
    center_words: dict       # k -> (r_k, L) codes of the centers
    rho_norm: float
    core: float
    inflated: float
    d_radius: float
    d_inner: float
    d_hat: float
    samples: dict = field(repr=False, default_factory=dict)

    def count(self) -> int:
        return sum(len(c) for c in self.centers.values())

    def certify(self) -> dict:
        """Core disjointness, 5x covering of the samples, and D-hat inside the core."""
        min_gap, worst_cover = np.inf, 0.0
        for k, c in self.centers.items():
            if len(c) > 1:
                tree = cKDTree(np.column_stack([c.real, c.imag]))
                d, _ = tree.query(np.column_stack([c.real, c.imag]), k=2)
                min_gap = min(min_gap, float(d[:, 1].min()))
            s = self.samples.get(k)
            if s is not None and len(s):
                tree = cKDTree(np.column_stack([c.real, c.imag]))
                d, _ = tree.query(np.column_stack([s.real, s.imag]))
                worst_cover = max(worst_cover, float(d.max()))
        return {"disjoint": bool(min_gap >= 2 * self.core), "min_center_gap": min_gap,
                "covering": bool(worst_cover < self.inflated), "max_sample_distance": worst_cover,
                "dhat_in_core": bool(self.d_hat < self.core)}


def _greedy_centers(pts: np.ndarray, radius: float) -> np.ndarray:
    """Indices of a maximal 2r-separated subset, scanning points in lexicographic order."""
    if len(pts) == 0:
        return np.zeros(0, dtype=np.int64)
    xy = np.column_stack([pts.real, pts.imag])
    order = np.lexsort((xy[:, 1], xy[:, 0]))
    tree = cKDTree(xy)
    suppressed = np.zeros(len(pts), dtype=bool)
    keep = []
    for i in order:
        if suppressed[i]:
            continue
        keep.append(i)
        suppressed[tree.query_ball_point(xy[i], 2 * radius * (1 + 1e-9))] = True
    return np.array(keep, dtype=np.int64)


def build_cover(samples, rho_norm: float, config: DolgopyatConfig,
                resolution: float | None = None, words=None) -> VitaliCover:
    """Greedy Vitali cover with cores of radius eps1 / ||rho_b||.

    ``samples`` is an array of chart points or a dict k -> CylinderSamples.
    Kept centers are pairwise >= 2 core radii apart, so every sample lies
    within two core radii of a center; the 5x inflation then covers.
    """
    if rho_norm <= 0:
        raise ValueError("||rho_b|| must be positive")
    core = config.eps1 / rho_norm
    d_r = config.eps2 / rho_norm
    if not isinstance(samples, dict):
        pts = np.atleast_1d(np.asarray(samples, dtype=complex))
        samples = {0: CylinderSamples((), pts, words if words is not None
                                      else np.zeros((len(pts), 0), dtype=np.int8),
                                      0.0 if resolution is None else resolution)}
    centers, cwords, spts = {}, {}, {}
    for k, cs in samples.items():
        res = cs.resolution if resolution is None else resolution
        if len(cs.points) > 1 and res >= d_r / 2:
            raise CoverError(f"sample resolution {res:.3g} is not below {d_r / 2:.3g}")
        idx = _greedy_centers(cs.points, core)
        centers[k] = cs.points[idx]
        cwords[k] = cs.words[idx]
        spts[k] = cs.points
    cover = VitaliCover(centers, cwords, rho_norm, core, 5 * core, d_r, d_r / 2,
                        2 * config.N * d_r, spts)
    cert = cover.certify()
    if not (cert["disjoint"] and cert["covering"]):
        raise CoverError(f"cover certification failed: {cert}")
    return cover


# bumps and beta_J -----------------------------------------------------------------

def smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3 - 2 * t)


@dataclass
class BumpFamily:
    """Radial smoothstep bumps: 1 on the inner half-radius ball, 0 outside the D ball."""

    centers: np.ndarray      # (n_bumps,) chart points
    keys: list               # (k, r, p) per bump
    radius: float
    mu: float
    slope_bound: float
    measured_slope: float

    def psi(self, i: int, pts) -> np.ndarray:
        d = np.abs(np.asarray(pts) - self.centers[i])
        return smoothstep((self.radius - d) / (self.radius / 2))


def build_bumps(cover: VitaliCover, config: DolgopyatConfig, partners: dict | None = None,
                resolution: float | None = None, probe: int = 257) -> BumpFamily:
    """Bumps on D_{k,r,1} (centers) and, if given, D_{k,r,2} (partner points).

    The discrete C^1 seminorm is measured on a radial probe grid whose
    spacing is the sample resolution; ResolutionError when that resolution
    cannot resolve the bump slope (needs diameter < eps2 / (8 ||rho_b||)).
    """
    rho = cover.rho_norm
    res = 0.0 if resolution is None else resolution
    limit = config.eps2 / (8 * rho)
    if res >= limit:
        raise ResolutionError(f"cylinder diameter {res:.3g} is not below {limit:.3g}")
    keys, cent = [], []
    for k, c in cover.centers.items():
        for r, x in enumerate(c):
            keys.append((k, r, 1))
            cent.append(x)
            if partners is not None and (k, r) in partners:
                keys.append((k, r, 2))
                cent.append(partners[(k, r)])
    cent = np.array(cent, dtype=complex)
    radius = cover.d_radius
    fam = BumpFamily(cent, keys, radius, config.mu, 4 * rho / config.eps2, 0.0)
    if len(cent):
        step = max(res, radius / (probe - 1)) if res > 0 else radius / (probe - 1)
        line = cent[0] + np.arange(-1.2 * radius, 1.2 * radius + step, step)
        vals = fam.psi(0, line)
        fam.measured_slope = float(np.max(np.abs(np.diff(vals)) / np.abs(np.diff(line))))
    return fam


# the Dolgopyat operator in point form ----------------------------------------------

class DolgopyatLab:
    """Everything needed to evaluate N_{a,J} h = L^m(beta_J h) on a depth-k grid.

    For each depth-k cylinder C and admissible alpha of length m, the point
    gamma_alpha(u_C) is kept exactly (u_C the representative), together with
    S_m f^(a), the roof and angle sums along alpha.  Functions given as
    callables are evaluated at these points; cylinder functions are read off
    the cylinder alpha C[:k].
    """

    def __init__(self, group, system: CodedSystem, potential: NormalizedPotential,
                 config: DolgopyatConfig, j_m: int | None = None):
        self.group = group
        self.system = system
        self.potential = potential
        self.config = config
        k, m, m1, m2 = system.depth, config.m, config.inputs.m1, config.m2
        self.k, self.m, self.m1, self.m2 = k, m, m1, m2
        if system.subshift.count(k + m) > MAX_WORDS:
            raise ResolutionError(f"depth {k} + m = {m} exceeds the word budget")
        big = group_partition(group, k + m)
        self.words = big.words
        self.points = big.reps
        self.rows = system.partition.index(self.words[:, m:])
        self.cols = system.partition.index(self.words[:, :k])
        wl = np.zeros(len(big))
        ts = np.zeros(len(big))
        an = np.zeros(len(big))
        for j in range(m):
            idx = system.child.index(self.words[:, j:j + k + 1])
            wl += potential.f[idx]
            ts += system.tau[idx]
            an += system.angle[idx]
        self.weight = np.exp(wl)
        self.tau_sum = ts
        self.angle_sum = an
        self.eval_points = system.partition.reps
        # suffix points sigma^m2 (gamma_alpha u_C) for bump evaluation
        suff = group_partition(group, k + m1) if m1 else system.partition
        self.suffix_points = suff.reps[suff.index(self.words[:, m2:])]
        dim_am = 1 if group.family == "fuchsian" else 2
        self.j_m = 2 * dim_am if j_m is None else j_m
        self.sections = section_words(group, m2, self.j_m + 1)
        self.ck = c_k_words(group, m1)
        self._section_codes = {w: np.all(self.words[:, :m2] == np.array(w), axis=1)
                               for w in self.sections}
        # sigma^m2 of the pair point has code alpha[m2:] C, so it lies in C_k when
        # alpha[m2:] and the first letter of C spell the code of C_k
        self._ck_codes = {kk: np.all(self.words[:, m2:m2 + m1 + 1] == np.array(w), axis=1)
                          for kk, w in self.ck.items()}

    # evaluation -------------------------------------------------------------
    def _values(self, h) -> np.ndarray:
        if isinstance(h, CylinderFunction):
            return h.values[self.cols]
        if callable(h):
            return h(self.points)
        h = np.asarray(h)
        if h.shape[0] == self.system.size:
            return h[self.cols]
        if h.shape[0] == len(self.points):
            return h
        raise ValueError("cannot evaluate h")

    def transfer_power(self, h) -> np.ndarray:
        """L^m h on the grid (beta = 1)."""
        return np.bincount(self.rows, self.weight * self._values(h), self.system.size)

    def beta(self, J, bumps: BumpFamily | None, partners_j: dict | None = None) -> np.ndarray:
        """beta_J at the pair points; J is a collection of (k, r, p, l)."""
        out = np.ones(len(self.points))
        if not J or bumps is None:
            return out
        index = {key: i for i, key in enumerate(bumps.keys)}
        for (k, r, p, l) in J:
            j = 0 if l == 1 else (partners_j or {}).get((k, r), 1)
            sel = self._section_codes[self.sections[j]] & self._ck_codes[k]
            if not sel.any():
                continue
            i = index[(k, r, p)]
            out[sel] -= bumps.mu * bumps.psi(i, self.suffix_points[sel])
        return out

    def apply(self, h, J=(), bumps=None, partners_j=None) -> np.ndarray:
        """N_{a,J} h = L^m(beta_J h) on the depth-k grid."""
        vals = self._values(h)
        if np.any(vals <= 0):
            raise ValueError("h must be positive")
        b = self.beta(J, bumps, partners_j)
        return np.bincount(self.rows, self.weight * b * vals, self.system.size)

    def twisted_power(self, H, rep: TwistRep) -> np.ndarray:
        """M^m H on the grid, H a callable returning complex values at points."""
        vals = H(self.points) if callable(H) else np.asarray(H)
        ph = np.exp(1j * (rep.b * self.tau_sum + rep.ell * self.angle_sum))
        c = self.weight * ph * vals
        return (np.bincount(self.rows, c.real, self.system.size)
                + 1j * np.bincount(self.rows, c.imag, self.system.size))

    def l2(self, values) -> float:
        return float(np.sqrt(self.potential.nu_u @ (np.abs(values) ** 2)))

    # per-point branch data for the chi functions ------------------------------
    def branch_data(self, word, pts, codes):
        """(points v(u), exp f_alpha(v(u)), tau and angle sums) for u with given codes."""
        k = self.k
        w = np.array(word, dtype=np.int8)
        if codes.shape[1] < k + 1:
            codes = np.column_stack([codes] + [codes[:, -1:]] * (k + 1 - codes.shape[1]))
        full = np.column_stack([np.tile(w, (len(pts), 1)), codes[:, :k + 1]])
        wl = np.zeros(len(pts))
        ts = np.zeros(len(pts))
        an = np.zeros(len(pts))
        for j in range(len(word)):
            idx = self.system.child.index(full[:, j:j + k + 1])
            wl += self.potential.f[idx]
            ts += self.system.tau[idx]
            an += self.system.angle[idx]
        mat = word_matrix(self.group, word)
        return mobius(mat, pts), np.exp(wl), ts, an


# smooth cone samples ----------------------------------------------------------------

@dataclass
class SmoothField:
    """log h(x) = amp * sum_i sin(Re(conj(a_i) x) + phase_i); Lipschitz <= amp * sum |a_i|."""

    freqs: np.ndarray
    phases: np.ndarray
    amp: float

    def log(self, pts):
        pts = np.asarray(pts, dtype=complex)
        arg = np.real(np.conj(self.freqs)[None, :] * pts[..., None]) + self.phases
        return self.amp * np.sin(arg).sum(-1)

    def __call__(self, pts):
        return np.exp(self.log(pts))

    @property
    def lipschitz(self) -> float:
        return float(self.amp * np.abs(self.freqs).sum())


def sample_field(rng, B: float, level: float, family: str, terms: int = 3) -> SmoothField:
    """Smooth positive field with log-Lipschitz constant exactly level * B (analytic bound)."""
    a = rng.normal(size=terms)
    if family == "kleinian":
        a = a + 1j * rng.normal(size=terms)
    ph = rng.uniform(0, 2 * np.pi, size=terms)
    base = float(np.abs(a).sum())
    if base == 0:
        return SmoothField(a.astype(complex), ph, 0.0)
    amp = level * B / base
    if amp > AMP_CAP:
        # wide cones: raise the frequencies instead so exp(log h) stays finite
        a = a * (amp / AMP_CAP)
        amp = AMP_CAP
    return SmoothField(a.astype(complex), ph, amp)


@dataclass
class SectionField:
    """H(x) = c h(x) exp(i lam Re(conj(e) x)) with |c| < 1, so ||H|| <= h and
    ||dH|| <= (Lip log h + lam) h."""

    h: SmoothField
    c: complex
    lam: float
    e: complex

    def __call__(self, pts, h_values=None):
        pts = np.asarray(pts, dtype=complex)
        hv = self.h(pts) if h_values is None else h_values
        return self.c * hv * np.exp(1j * self.lam * np.real(np.conj(self.e) * pts))


# property checks ----------------------------------------------------------------------

def _worst(current, value):
    """Running maximum in which a non-finite measurement is a failure."""
    return max(current, value) if np.isfinite(value) else np.inf


def _components(centers: np.ndarray, radius: float) -> np.ndarray:
    """Sizes of connected components of a union of equal open balls."""
    n = len(centers)
    if n == 0:
        return np.zeros(0, dtype=int)
    parent = np.arange(n)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    tree = cKDTree(np.column_stack([centers.real, centers.imag]))
    for i, j in tree.query_pairs(2 * radius):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
    roots = np.array([find(i) for i in range(n)])
    return np.bincount(roots)[np.unique(roots)]


def find_partners(lab: DolgopyatLab, cover: VitaliCover, rep: TwistRep, H, samples: dict):
    """Partner points x_{k,r,2} and section indices j_{k,r} from LNIC and NCP.

    For each center, omega is the normalized rho_b(Phi^{alpha0})^{-1} H(v0(x)),
    and a sample in the annulus [s2, s1) maximizing ||d rho_b(dBP_j(z)) omega||
    is chosen among j = 1..j_m.  Returns partners, j-indices and the worst
    achieved pairing relative to the required 7 delta1 eps1.
    """
    cfg = lab.config
    rho = cover.rho_norm
    s1 = cfg.eps1 / (2 * rho)
    s2 = cfg.inputs.ncp * cfg.eps1 / (2 * rho)
    need = 7 * cfg.delta1 * cfg.eps1
    partners, js, worst = {}, {}, np.inf
    jac_cache = lab.__dict__.setdefault("_jac_cache", {})
    for k, cent in cover.centers.items():
        pts = samples[k].points
        tree = cKDTree(np.column_stack([pts.real, pts.imag]))
        for r, x in enumerate(cent):
            cand = np.array(tree.query_ball_point([x.real, x.imag], s1), dtype=np.int64)
            if len(cand) == 0:
                raise DominationFailure(f"no samples near center ({k}, {r})")
            d = np.abs(pts[cand] - x)
            cand = cand[(d >= s2) & (d < s1)]
            if len(cand) == 0:
                raise DominationFailure(f"annulus around ({k}, {r}) holds no limit points "
                                        "(non-concentration fails at this resolution)")
            z = pts[cand] - x
            best = (-1.0, None, None)
            for j in range(1, len(lab.sections)):
                key = (j, complex(x))
                if key not in jac_cache:
                    jac_cache[key] = bp_derivative(lab.group, lab.sections[0], lab.sections[j],
                                                   x)["jacobian"]
                jac = jac_cache[key]
                zc = z.real[None, :] if jac.shape[1] == 1 else np.vstack([z.real, z.imag])
                dt, dth = jac @ zc
                # for characters d rho_b(t, s) omega = -i (b t + ell s) omega
                val = np.abs(rep.b * dt + rep.ell * dth)
                i = int(np.argmax(val))
                if val[i] > best[0]:
                    best = (float(val[i]), j, pts[cand[i]])
            partners[(k, r)] = best[2]
            js[(k, r)] = best[1]
            worst = min(worst, best[0] / need)
    return partners, js, worst


@dataclass
class PropertyRow:
    property: str
    cell: str
    measured: float
    bound: float
    passed: bool


def check_dolgopyat_properties(lab: DolgopyatLab, rep: TwistRep, rng, samples_per_cell: int = 50,
                               cover_samples: dict | None = None, levels=(1 / 3, 2 / 3, 1.0)):
    """Measure cone preservation, eta, beta_J bounds, component sizes, domination and h-trapping."""
    if not rep.in_m0():
        raise ValueError("twist cell lies outside M0(b0)")
    cfg = lab.config
    rho = rep.norm()
    B = cfg.E * rho
    cell = f"b={rep.b:g} ell={rep.ell}"
    fam = lab.group.family
    if cover_samples is None:
        cover_samples = {k: cylinder_samples(lab.group, w, cfg.eps2 / (8 * rho))
                         for k, w in lab.ck.items()}
    res = max(s.resolution for s in cover_samples.values())
    cover = build_cover(cover_samples, rho, cfg)
    cert = cover.certify()
    cone = Cone(B)
    part = lab.system.partition
    pts_all = np.concatenate([s.points for s in cover_samples.values()])
    width = max(s.words.shape[1] for s in cover_samples.values())
    # shallower samples repeat their last letter, as in branch_data
    codes_all = np.vstack([np.column_stack([s.words] + [s.words[:, -1:]] * (width - s.words.shape[1]))
                           for s in cover_samples.values()])
    owner = np.concatenate([np.full(len(s.points), k) for k, s in cover_samples.items()])

    worst_cone, worst_eta, worst_dom = 0.0, 0.0, -np.inf
    beta_min, beta_max, beta_slope = 1.0, 1.0, 0.0
    comp_max, trap_lo, trap_hi = 0, np.inf, 0.0
    worst_pair, failures = np.inf, []
    bumps_slope = None
    for s in range(samples_per_cell):
        level = levels[s % len(levels)]
        hf = sample_field(rng, B, level, fam)
        lam = max(0.0, B - hf.lipschitz) * rng.uniform(0, 1)
        e = np.exp(1j * rng.uniform(0, 2 * np.pi)) if fam == "kleinian" else 1.0
        c = 0.95 * np.exp(1j * rng.uniform(0, 2 * np.pi))
        H = SectionField(hf, c, lam, e)
        partners, js, pair_ratio = find_partners(lab, cover, rep, H, cover_samples)
        worst_pair = min(worst_pair, pair_ratio)
        bumps = build_bumps(cover, cfg, partners, resolution=res)
        bumps_slope = bumps.measured_slope
        # choose J per (k, r) by the chi test on D-hat balls
        J = []
        tree = cKDTree(np.column_stack([pts_all.real, pts_all.imag]))
        for (k, r), xj in js.items():
            chosen = None
            for p, x in ((1, cover.centers[k][r]), (2, partners[(k, r)])):
                ball = np.array(tree.query_ball_point([x.real, x.imag], cover.d_hat),
                                dtype=np.int64)
                ball = ball[owner[ball] == k]
                if len(ball) == 0:
                    ball = np.array([int(np.argmin(np.abs(pts_all - x)))])
                u, cu = pts_all[ball], codes_all[ball]
                v0, e0, t0, a0 = lab.branch_data(lab.sections[0], u, cu)
                vj, ej, tj, aj = lab.branch_data(lab.sections[xj], u, cu)
                h0, hj = hf(v0), hf(vj)
                trap = np.concatenate([h0 / h0.max(), h0.min() / h0, hj / hj.max(),
                                       hj.min() / hj])
                trap_lo = min(trap_lo, float(trap.min()))
                trap_hi = max(trap_hi, float(1 / trap.min()))
                ph0 = np.exp(1j * (rep.b * t0 + rep.ell * a0))
                phj = np.exp(1j * (rep.b * tj + rep.ell * aj))
                num = np.abs(e0 * ph0 * H(v0) + ej * phj * H(vj))
                nmu = cfg.N * cfg.mu
                chi1 = num / ((1 - nmu) * e0 * h0 + ej * hj)
                chi2 = num / (e0 * h0 + (1 - nmu) * ej * hj)
                if chi1.max() <= 1:
                    chosen = (k, r, p, 1)
                elif chi2.max() <= 1:
                    chosen = (k, r, p, 2)
                if chosen:
                    break
            if chosen is None:
                failures.append((k, r))
                continue
            J.append(chosen)
        if failures:
            raise DominationFailure(f"no admissible (p, l) for {failures[:3]}: both chi "
                                    "functions exceed 1 on the D-hat balls")
        h_pairs = hf(lab.points)
        nh = lab.apply(h_pairs, J, bumps, js)
        worst_cone = _worst(worst_cone, cone.log_lipschitz(nh, part))
        hv = hf(lab.eval_points)
        worst_eta = _worst(worst_eta, lab.l2(nh) / lab.l2(hv))
        mh = np.abs(lab.twisted_power(H(lab.points, h_pairs), rep))
        worst_dom = _worst(worst_dom, float(np.max(mh / nh)))
        beta = lab.beta(J, bumps, js)
        beta_min, beta_max = min(beta_min, float(beta.min())), max(beta_max, float(beta.max()))
        # beta on the sample grid around each bump center (slope over the probe line)
        if len(bumps.centers):
            beta_slope = max(beta_slope, bumps.mu * bumps.measured_slope)
        dcent = np.array([bumps.centers[bumps.keys.index((k, r, p))] for (k, r, p, _l) in J])
        sizes = _components(dcent, cover.d_radius)
        comp_max = max(comp_max, int(sizes.max()) if len(sizes) else 0)

    nmu = cfg.N * cfg.mu
    rows = [
        PropertyRow("cover_disjoint", cell, cert["min_center_gap"], 2 * cover.core,
                    cert["disjoint"]),
        PropertyRow("cover_5x", cell, cert["max_sample_distance"], cover.inflated,
                    cert["covering"]),
        PropertyRow("cone_preservation", cell, worst_cone, B, worst_cone <= B),
        PropertyRow("eta", cell, worst_eta, ETA_TARGET, worst_eta <= ETA_TARGET),
        PropertyRow("beta_lower", cell, beta_min, 1 - nmu, beta_min >= 1 - nmu),
        PropertyRow("beta_upper", cell, beta_max, 1.0, beta_max <= 1.0),
        PropertyRow("beta_c1", cell, beta_slope, 4 * nmu * rho / cfg.eps2,
                    beta_slope <= 4 * nmu * rho / cfg.eps2 * (1 + 1e-12)),
        PropertyRow("bump_c1", cell, bumps_slope, 4 * rho / cfg.eps2,
                    bumps_slope <= 4 * rho / cfg.eps2),
        PropertyRow("component_size", cell, float(comp_max), float(cfg.N), comp_max <= cfg.N),
        PropertyRow("domination", cell, worst_dom, 1.0, worst_dom <= 1 + 1e-12),
        PropertyRow("h_trapping", cell, trap_hi, 2.0, trap_hi <= 2.0 and trap_lo >= 0.5),
        PropertyRow("partner_pairing", cell, worst_pair, 1.0, worst_pair >= 1.0),
    ]
    return rows


# measuring the chain inputs -----------------------------------------------------------

def measure_inputs(group, system: CodedSystem, potential: NormalizedPotential, rng,
                   twist_grid=None, m1: int = 2, lnic_length: int = 3,
                   ncp_eps=(2.0**-3, 2.0**-4, 2.0**-5, 2.0**-6, 2.0**-7),
                   ncp_triples: int = 40) -> MeasuredInputs:
    """Measured c0, kappa1, kappa2, A0, T0, N, and the a+m, LNIC and NCP lower bounds."""
    hc = hyperbolicity_constants(system)
    A0 = fit_A0(system, potential, rng, hc["kappa2"])
    T0 = float(system.tau.max())
    nd = doubling_constant(system, potential.nu_u, [1e-3, 1e-2, 1e-1])
    N = max(2, int(math.ceil(nd)))
    m_dim = 1 if group.family == "kleinian" else 0
    grid = twist_grid or [(b, l) for b in (0.0, 0.5, 1.0, 2.0, 5.0, 10.0)
                          for l in ((0, 1, 2, 5) if m_dim else (0,))]
    reps = [TwistRep(b, l, m_dim=m_dim) for b, l in grid]
    reps = [r for r in reps if r.in_m0()]
    maction = min(r.maction_epsilon(rng, trials=8, samples=180) for r in reps)
    dim_am = 1 + m_dim
    words = section_words(group, lnic_length, 2 * dim_am + 1)
    u0 = group.fixed_points[DISTINGUISHED]
    base = [u0] + [mobius(group.letters[DISTINGUISHED], group.fixed_points[l])
                   for l in range(group.n_letters) if group.transition[DISTINGUISHED, l]]
    lnic = lnic_epsilon(group, words, base)["eps2"]
    pts = group_partition(group, 7).reps
    deltas = []
    for _ in range(ncp_triples):
        x = int(rng.integers(len(pts)))
        eps = float(ncp_eps[int(rng.integers(len(ncp_eps)))])
        w = np.array([1.0]) if group.family == "fuchsian" else ring_sample((2, 0), 0.5, rng)
        model = NilModel("abelian_1", np.zeros((0, 1, 1))) if group.family == "fuchsian" else None
        deltas.append(ncp_witness_search(pts, x, eps, w, model)["delta_best"])
    margin = ping_pong_check(group)["margin"]
    return MeasuredInputs(A0=A0, c0=hc["c0"], kappa1=hc["kappa1"], kappa2=hc["kappa2"], T0=T0,
                          N=N, maction=maction, lnic=lnic, ncp=float(min(deltas)),
                          delta_hat=float(margin), m1=m1)
