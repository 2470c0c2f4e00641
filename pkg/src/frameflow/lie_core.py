"""Matrix models of rank-one Lie algebras (plus split sl(3,R)) with restricted roots.

Every model is a real Lie algebra spanned by a deterministic list of complex
matrices.  Elements are passed around as matrices; ``coords`` converts to real
coordinates in the model basis.  The restricted root decomposition is computed
numerically from the Cartan involution and the adjoint action of the
normalized generator ``H0`` of ``a``, never hard-coded.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg

from .errors import DecompositionError, GradingError, ToleranceWarning

FAMILIES = ("so", "su", "sp", "sl3")
SPAN_TOL = 1e-9
RANK_TOL = 1e-8

# quaternion units as 2x2 complex blocks: q = a + b j  ->  [[a, b], [-conj b, conj a]]
_Q1 = np.eye(2, dtype=complex)
_QI = np.array([[1j, 0], [0, -1j]])
_QJ = np.array([[0, 1], [-1, 0]], dtype=complex)
_QK = np.array([[0, 1j], [1j, 0]])


def _units(family):
    """(off-diagonal units, diagonal units, block size) for X = J A, A skew-Hermitian."""
    if family == "so":
        return [np.ones((1, 1))], [], 1
    if family == "su":
        return [np.ones((1, 1), dtype=complex), 1j * np.ones((1, 1))], [], 1
    if family == "sp":
        return [_Q1, _QI, _QJ, _QK], [_QI, _QJ, _QK], 2
    raise ValueError(family)


def _block(p, q, size, s, unit):
    m = np.zeros((size * s, size * s), dtype=complex)
    m[p * s:(p + 1) * s, q * s:(q + 1) * s] = unit
    return m


def _rank_one_basis(family, n):
    off, diag, s = _units(family)
    size = n + 1
    jform = np.kron(np.diag([1.0] * n + [-1.0]), np.eye(s))
    basis = []
    for p in range(size):
        for q in range(p, size):
            if p == q:
                if family == "su":
                    if p < n:
                        d = np.zeros((size, size), dtype=complex)
                        d[p, p], d[p + 1, p + 1] = 1j, -1j
                        basis.append(d)
                    continue
                for u in diag:
                    basis.append(jform @ _block(p, p, size, s, u))
            else:
                for u in off:
                    a = _block(p, q, size, s, u) - _block(q, p, size, s, u.conj().T)
                    basis.append(jform @ a)
    return basis, jform, s


def _sl3_basis():
    basis = []
    for i in range(3):
        for j in range(3):
            if i == j:
                if i < 2:
                    d = np.zeros((3, 3))
                    d[i, i], d[i + 1, i + 1] = 1.0, -1.0
                    basis.append(d)
            else:
                e = np.zeros((3, 3))
                e[i, j] = 1.0
                basis.append(e)
    return basis


def _flat(x):
    x = np.asarray(x)
    return np.concatenate([x.real.ravel(), x.imag.ravel()])


def numerical_rank(mat, tol=RANK_TOL, what="span"):
    """Rank from singular values relative to the largest one.

    Values inside ``[tol/10, 10*tol]`` are ambiguous and trigger a
    ToleranceWarning; they are counted as nonzero only if above ``tol``.
    """
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if mat.size == 0:
        return 0
    sv = linalg.svdvals(mat)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    rel = sv / sv[0]
    ambiguous = (rel > tol / 10) & (rel < tol * 10)
    if np.any(ambiguous):
        warnings.warn(
            f"{what}: singular value ratio {rel[ambiguous].min():.3e} is within 10x of {tol:g}",
            ToleranceWarning,
            stacklevel=2,
        )
    return int(np.sum(rel > tol))


@dataclass
class RootDecomposition:
    """Restricted root decomposition with B_theta-orthonormal subspace bases.

    Bases are stored as coordinate matrices (columns are elements in model
    coordinates).  ``root_spaces`` maps a root, given by its values on the
    orthonormal basis of ``a`` (first entry is the value on H0), to its basis.
    """

    a: np.ndarray
    m: np.ndarray
    g_alpha: np.ndarray
    g_malpha: np.ndarray
    g_2alpha: np.ndarray
    g_m2alpha: np.ndarray
    gram: np.ndarray
    root_spaces: dict = field(default_factory=dict)
    simple_roots: list = field(default_factory=list)

    @property
    def s_plus(self):
        return self.g_malpha

    @property
    def s_minus(self):
        return self.g_alpha

    @property
    def names(self):
        return ("a", "m", "g_alpha", "g_-alpha", "g_2alpha", "g_-2alpha")

    def summands(self):
        return dict(zip(self.names, (self.a, self.m, self.g_alpha, self.g_malpha,
                                     self.g_2alpha, self.g_m2alpha)))

    def projection(self, name):
        """Coordinate projection onto a summand (orthogonal for B_theta)."""
        v = self.summands()[name]
        return v @ v.T @ self.gram

    @cached_property
    def pi(self):
        """Projection onto a + m."""
        v = np.hstack([self.a, self.m])
        return v @ v.T @ self.gram

    def dims(self):
        return {k: v.shape[1] for k, v in self.summands().items()}


class LieAlgebraModel:
    """A real matrix Lie algebra with Cartan involution and normalized H0."""

    def __init__(self, family: str, n: int):
        if family not in FAMILIES:
            raise ValueError(f"unknown family {family!r}")
        if family == "sl3":
            n = 3
            basis = _sl3_basis()
            self.form = None
            self.block = 1
            h0 = np.diag([1.0, 0.0, -1.0])
        else:
            if n < 2:
                raise ValueError("n must be at least 2")
            basis, self.form, self.block = _rank_one_basis(family, n)
            size = (n + 1) * self.block
            h0 = np.zeros((size, size), dtype=complex)
            s = self.block
            h0[0:s, n * s:(n + 1) * s] = np.eye(s)
            h0[n * s:(n + 1) * s, 0:s] = np.eye(s)
        self.family = family
        self.n = n
        self.basis = [np.asarray(b) for b in basis]
        self.dim = len(self.basis)
        self._bmat = np.stack([_flat(b) for b in self.basis], axis=1)
        self._pinv = np.linalg.pinv(self._bmat)
        self.a_generator = self._normalize_h0(h0)

    def __repr__(self):
        return f"LieAlgebraModel({self.family}, n={self.n}, dim={self.dim})"

    # coordinates -------------------------------------------------------
    def coords(self, x) -> np.ndarray:
        """Real coordinates of a matrix in the model basis."""
        v = _flat(x)
        c = self._pinv @ v
        res = np.linalg.norm(self._bmat @ c - v)
        if res > SPAN_TOL * max(1.0, np.linalg.norm(v)):
            raise DecompositionError(f"element not in span (residual {res:.3e})")
        return c

    def element(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        return np.tensordot(c, np.stack(self.basis), axes=(0, 0))

    def random_element(self, rng) -> np.ndarray:
        return self.element(rng.standard_normal(self.dim))

    # structure ---------------------------------------------------------
    def theta(self, x):
        """Cartan involution X -> -X^* (conjugate transpose)."""
        return -np.conj(np.asarray(x)).T

    def bracket(self, x, y):
        self.coords(x)
        self.coords(y)
        return x @ y - y @ x

    @cached_property
    def ad_matrices(self) -> np.ndarray:
        """ad of each basis vector, as coordinate matrices (dim, dim, dim)."""
        out = np.empty((self.dim, self.dim, self.dim))
        for i, bi in enumerate(self.basis):
            for j, bj in enumerate(self.basis):
                out[i, :, j] = self.coords(bi @ bj - bj @ bi)
        return out

    def ad(self, x) -> np.ndarray:
        return np.tensordot(self.coords(x), self.ad_matrices, axes=(0, 0))

    @cached_property
    def killing_gram(self) -> np.ndarray:
        ad = self.ad_matrices
        return np.einsum("iab,jba->ij", ad, ad)

    @cached_property
    def theta_matrix(self) -> np.ndarray:
        return np.stack([self.coords(self.theta(b)) for b in self.basis], axis=1)

    @cached_property
    def b_theta_gram(self) -> np.ndarray:
        g = -self.killing_gram @ self.theta_matrix
        return 0.5 * (g + g.T)

    def killing_form(self, x, y) -> float:
        return float(self.coords(x) @ self.killing_gram @ self.coords(y))

    def b_theta(self, x, y) -> float:
        return float(self.coords(x) @ self.b_theta_gram @ self.coords(y))

    def _normalize_h0(self, h0):
        eig = np.linalg.eigvals(self._ad_raw(h0))
        pos = eig.real[eig.real > 1e-9]
        return h0 / pos.min()

    def _ad_raw(self, x):
        return np.stack([self.coords(x @ b - b @ x) for b in self.basis], axis=1)

    # invariants --------------------------------------------------------
    def membership_residual(self) -> float:
        """Largest violation of the defining relations over the basis."""
        worst = 0.0
        for b in self.basis:
            if self.form is None:
                worst = max(worst, abs(np.trace(b)), float(np.abs(b.imag).max()))
                continue
            worst = max(worst, float(np.abs(b.conj().T @ self.form + self.form @ b).max()))
            if self.family == "su":
                worst = max(worst, abs(np.trace(b)))
            if self.family == "sp":
                jq = np.kron(np.eye(self.n + 1), _QJ)
                worst = max(worst, float(np.abs(b @ jq - jq @ b.conj()).max()))
            if self.family == "so":
                worst = max(worst, float(np.abs(b.imag).max()))
        return worst

    # decomposition -----------------------------------------------------
    @cached_property
    def roots(self) -> RootDecomposition:
        gram = self.b_theta_gram
        chol = np.linalg.cholesky(gram)
        to_orth = chol.T
        from_orth = np.linalg.inv(chol.T)

        def sym(op):
            s = to_orth @ op @ from_orth
            return 0.5 * (s + s.T)

        w, vecs = np.linalg.eigh(sym(self._ad_raw(self.a_generator)))
        grades = np.rint(w)
        if np.max(np.abs(w - grades)) > 1e-8:
            raise GradingError("ad(H0) has non-integral eigenvalues")
        spaces = {}
        for g in (-2, -1, 0, 1, 2):
            spaces[g] = from_orth @ vecs[:, grades == g]
        if sum(v.shape[1] for v in spaces.values()) != self.dim:
            raise GradingError("ad(H0) eigenvalues outside {0, +-1, +-2}")

        # split the centralizer into p (a) and k (m) parts via theta
        z = spaces[0]
        zo = to_orth @ z
        th = sym(self.theta_matrix)
        tw, tv = np.linalg.eigh(zo.T @ th @ zo)
        a = from_orth @ zo @ tv[:, tw < 0]
        m = from_orth @ zo @ tv[:, tw > 0]

        # put H0 first in the orthonormal basis of a
        h = self.coords(self.a_generator)
        h = h / np.sqrt(h @ gram @ h)
        rest = a - np.outer(h, h @ gram @ a)
        if a.shape[1] > 1:
            ro = to_orth @ rest
            u, s, _ = np.linalg.svd(ro, full_matrices=False)
            rest = from_orth @ u[:, s > 1e-8][:, : a.shape[1] - 1]
            a = np.column_stack([h, rest])
        else:
            a = h[:, None]

        ad_a = [self._ad_raw(self.element(a[:, i])) for i in range(a.shape[1])]
        root_spaces = {}
        for g in (-2, -1, 1, 2):
            vo = to_orth @ spaces[g]
            if vo.shape[1] == 0:
                continue
            groups = [(vo, (float(g),))]
            for op in ad_a[1:]:
                new = []
                for sub, key in groups:
                    rw, rv = np.linalg.eigh(sub.T @ sym(op) @ sub)
                    labels = np.round(rw, 6)
                    for lab in np.unique(labels):
                        new.append((sub @ rv[:, labels == lab], key + (float(lab),)))
                groups = new
            for sub, key in groups:
                root_spaces[key] = from_orth @ sub
        positive = [r for r in root_spaces if r[0] > 0]
        sums = {tuple(np.round(np.add(r1, r2), 6)) for r1 in positive for r2 in positive}
        simple = sorted(r for r in positive if tuple(np.round(r, 6)) not in sums)
        return RootDecomposition(
            a=a, m=m, g_alpha=spaces[1], g_malpha=spaces[-1], g_2alpha=spaces[2],
            g_m2alpha=spaces[-2], gram=gram, root_spaces=root_spaces, simple_roots=simple,
        )


def build_model(family: str, n: int = 2) -> LieAlgebraModel:
    """Model of so(n,1), su(n,1), sp(n,1) or sl(3,R) (``n`` ignored for sl3)."""
    return LieAlgebraModel(family, n)


def bracket(model: LieAlgebraModel, x, y):
    """Lie bracket of two elements of the model (matrix commutator)."""
    return model.bracket(x, y)


def killing_form(model: LieAlgebraModel, x, y) -> float:
    return model.killing_form(x, y)


def decompose(model: LieAlgebraModel, x) -> dict:
    """Split ``x`` into its a, m, g_alpha, g_-alpha, g_2alpha, g_-2alpha parts.

    Returns matrices keyed by summand name.
    """
    rd = model.roots
    c = model.coords(x)
    out = {name: model.element(rd.projection(name) @ c) for name in rd.names}
    total = sum(out.values())
    if np.linalg.norm(total - x) > 1e-10 * max(1.0, np.linalg.norm(x)):
        raise DecompositionError("components do not reassemble")
    return out


def _span_of_brackets(model, left, right):
    cols = []
    for i in range(left.shape[1]):
        for j in range(right.shape[1]):
            cols.append(model.coords(model.bracket(model.element(left[:, i]),
                                                   model.element(right[:, j]))))
    if not cols:
        return np.zeros((model.dim, 0))
    return np.stack(cols, axis=1)


def _orth(model, cols):
    """Rescale coordinate columns into B_theta-orthonormal coordinates."""
    chol = np.linalg.cholesky(model.b_theta_gram)
    return chol.T @ cols


def verify_bracket_span(model: LieAlgebraModel, tol: float = RANK_TOL) -> dict:
    """Dimension of span{[y, x]: y in s-, x in s+} against dim(a) + dim(m).

    For higher rank the span is the sum over simple roots of [g_beta, g_-beta].
    """
    rd = model.roots
    if rd.a.shape[1] == 1:
        cols = _span_of_brackets(model, rd.s_minus, rd.s_plus)
    else:
        blocks = []
        for r in rd.simple_roots:
            neg = tuple(-v for v in r)
            neg = next(k for k in rd.root_spaces if np.allclose(k, neg, atol=1e-6))
            blocks.append(_span_of_brackets(model, rd.root_spaces[r], rd.root_spaces[neg]))
        cols = np.hstack(blocks)
    orth = _orth(model, cols)
    achieved = numerical_rank(orth, tol, "bracket span")
    target = rd.a.shape[1] + rd.m.shape[1]
    am = np.hstack([rd.a, rd.m])
    # containment residual: part of the bracket span outside a + m
    outside = cols - am @ (am.T @ rd.gram @ cols)
    scale = max(1.0, float(np.abs(cols).max()) if cols.size else 1.0)
    residual = float(np.abs(outside).max() / scale) if cols.size else 0.0
    return {"achieved_dim": achieved, "target_dim": target, "residual": residual,
            "pass": achieved == target and residual <= tol}


def verify_2alpha_bracket(model: LieAlgebraModel, tol: float = RANK_TOL) -> dict:
    """Check g_2alpha = [g_alpha, g_alpha] by mutual containment of spans."""
    rd = model.roots
    if rd.g_2alpha.shape[1] == 0 and rd.g_alpha.shape[1] > 0 and rd.a.shape[1] == 1:
        return {"skipped": True, "pass": True, "achieved_dim": 0, "target_dim": 0,
                "residual": 0.0}
    cols = _span_of_brackets(model, rd.g_alpha, rd.g_alpha)
    target = rd.g_2alpha
    r_span = numerical_rank(_orth(model, cols), tol, "[g_alpha, g_alpha]")
    r_target = target.shape[1]
    r_joint = numerical_rank(_orth(model, np.hstack([cols, target])), tol, "joint span")
    outside = cols - target @ (target.T @ rd.gram @ cols)
    residual = float(np.abs(outside).max() / max(1.0, np.abs(cols).max()))
    ok = r_span == r_target == r_joint and residual <= tol
    return {"skipped": False, "pass": ok, "achieved_dim": r_span, "target_dim": r_target,
            "residual": residual}


def ad_exp_grading(model: LieAlgebraModel, t: float, tol: float = 1e-8) -> list:
    """Check Ad(exp(t H0)) scales each graded summand by exp(grade * t).

    Returns one record per summand with the expected factor and the worst
    relative error over its basis.
    """
    if abs(t) > 5:
        raise ValueError("|t| must be at most 5")
    rd = model.roots
    g = linalg.expm(t * model.a_generator)
    ginv = linalg.expm(-t * model.a_generator)
    grades = {"a": 0, "m": 0, "g_alpha": 1, "g_-alpha": -1, "g_2alpha": 2, "g_-2alpha": -2}
    report = []
    for name, space in rd.summands().items():
        factor = float(np.exp(grades[name] * t))
        worst = 0.0
        for i in range(space.shape[1]):
            x = model.element(space[:, i])
            y = g @ x @ ginv
            err = np.linalg.norm(y - factor * x) / (factor * np.linalg.norm(x))
            worst = max(worst, float(err))
        if worst > tol:
            raise GradingError(f"{name}: relative error {worst:.3e} exceeds {tol:g}")
        report.append({"summand": name, "dim": space.shape[1], "factor": factor,
                       "rel_error": worst})
    return report


def jacobi_residual(model: LieAlgebraModel, rng, trials: int = 20) -> float:
    worst = 0.0
    for _ in range(trials):
        i, j, k = rng.integers(0, model.dim, size=3)
        x, y, z = model.basis[i], model.basis[j], model.basis[k]

        def br(p, q):
            return p @ q - q @ p

        tot = br(x, br(y, z)) + br(y, br(z, x)) + br(z, br(x, y))
        worst = max(worst, float(np.abs(tot).max()))
    return worst


def theta_flip_residual(model: LieAlgebraModel) -> float:
    """Largest component of theta(x) outside g_-beta, for x in g_beta."""
    rd = model.roots
    worst = 0.0
    for key, space in rd.root_spaces.items():
        opp = next(k for k in rd.root_spaces if np.allclose(k, [-v for v in key], atol=1e-6))
        target = rd.root_spaces[opp]
        for i in range(space.shape[1]):
            c = model.coords(model.theta(model.element(space[:, i])))
            out = c - target @ (target.T @ rd.gram @ c)
            worst = max(worst, float(np.abs(out).max()))
    return worst


def root_additivity_residual(model: LieAlgebraModel) -> float:
    """Largest part of [g_beta, g_gamma] lying outside g_{beta+gamma}.

    The zero root stands for a + m; sums that are not roots must bracket to 0.
    """
    rd = model.roots
    spaces = dict(rd.root_spaces)
    rank = rd.a.shape[1]
    zero = (0.0,) * rank
    spaces[zero] = np.hstack([rd.a, rd.m])

    def lookup(key):
        for k in spaces:
            if np.allclose(k, key, atol=1e-6):
                return spaces[k]
        return np.zeros((model.dim, 0))

    worst = 0.0
    for k1, s1 in spaces.items():
        for k2, s2 in spaces.items():
            cols = _span_of_brackets(model, s1, s2)
            if cols.size == 0:
                continue
            target = lookup(tuple(np.add(k1, k2)))
            out = cols - target @ (target.T @ rd.gram @ cols)
            worst = max(worst, float(np.abs(out).max()))
    return worst


def heisenberg_bracket(x, y, field: str = "C"):
    """Bracket 2 Im<x, y> on K^(n-1), with <x, y> = sum_j x_j conj(y_j).

    ``field`` is "R", "C" or "H".  Quaternion vectors are real arrays of shape
    (n-1, 4) holding (1, i, j, k) components; the result is a quaternion with
    zero real part.  Complex results are returned as purely imaginary numbers.
    """
    if field == "R":
        return 0.0
    if field == "C":
        inner = np.sum(np.asarray(x, dtype=complex) * np.conj(np.asarray(y, dtype=complex)))
        return 2j * inner.imag
    if field == "H":
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        total = np.zeros(4)
        for p, q in zip(x, y):
            total += quat_mul(p, quat_conj(q))
        total[0] = 0.0
        return 2 * total
    raise ValueError(field)


def quat_mul(p, q):
    a1, b1, c1, d1 = p
    a2, b2, c2, d2 = q
    return np.array([
        a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
        a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
        a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
        a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
    ])


def quat_conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def heisenberg_structure(field: str, n: int):
    """Real structure tensor of the bracket on K^(n-1) with values in Im K.

    Returns ``omega`` of shape (dim_z, dim_v, dim_v) such that the z-coordinates
    of [v, w] are ``einsum('kij,i,j', omega, v, w)``.
    """
    k = {"R": 1, "C": 2, "H": 4}[field]
    dim_v = k * (n - 1)
    dim_z = k - 1
    omega = np.zeros((dim_z, dim_v, dim_v))
    if dim_z == 0:
        return omega

    def unpack(vec):
        if field == "C":
            return vec[0::2] + 1j * vec[1::2]
        return vec.reshape(n - 1, 4)

    eye = np.eye(dim_v)
    for i in range(dim_v):
        for j in range(dim_v):
            val = heisenberg_bracket(unpack(eye[i]), unpack(eye[j]), field)
            omega[:, i, j] = [val.imag] if field == "C" else val[1:]
    return omega


def volume_entropy_bound(field: str, n: int) -> int:
    """dim_R(K) n + dim_R(K) - 2, the critical exponent ceiling for H^n_K."""
    k = {"R": 1, "C": 2, "H": 4}[field]
    return k * n + k - 2
