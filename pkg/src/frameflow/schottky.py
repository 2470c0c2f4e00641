"""Fuchsian and Kleinian Schottky groups acting on the Riemann sphere.

Letters are numbered so that letter ``2i`` is generator ``i`` and ``2i + 1`` is
its inverse; ``letter ^ 1`` is therefore the inverse letter.  The disk of a
letter is the region that letter maps the complement of its inverse's disk
into, so points of the limit set in disk ``l`` are coded by words starting
with ``l``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DepthError,
    DomainError,
    InsufficientGenerators,
    NotInLimitChart,
    PingPongError,
    PoleError,
)

DET_TOL = 1e-12
MAX_WORDS = 10**6
CHART_SWAP = 2.0


def mobius(mat, z):
    """Apply a 2x2 matrix to points of the sphere (np.inf stands for infinity).

    Points with |z| > 2 are evaluated in the chart w = 1/z.
    """
    a, b, c, d = mat[0, 0], mat[0, 1], mat[1, 0], mat[1, 1]
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape, dtype=complex)
    inf = ~np.isfinite(z)
    big = (np.abs(z) > CHART_SWAP) & ~inf
    small = ~(big | inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        zs = z[small]
        out[small] = (a * zs + b) / (c * zs + d)
        w = 1.0 / z[big]
        out[big] = (a + b * w) / (c + d * w)
        out[inf] = a / c if c != 0 else np.inf
    out[~np.isfinite(out)] = np.inf
    return out if out.ndim else complex(out)


def mobius_circle(mat, center, radius):
    """Exact image of the circle |z - center| = radius under a Mobius map.

    Returns (center, radius, interior_maps_inside).  The last flag says
    whether the inside of the source circle maps to the inside of the image.
    Raises PoleError if the image is a line (pole on the circle).
    """
    herm = np.array([[1.0, -center], [-np.conj(center), abs(center) ** 2 - radius**2]],
                    dtype=complex)
    inv = np.linalg.inv(mat)
    img = inv.conj().T @ herm @ inv
    lead = img[0, 0].real
    if abs(lead) < 1e-300:
        raise PoleError("circle passes through the pole")
    c = -img[0, 1] / lead
    r2 = abs(c) ** 2 - img[1, 1].real / lead
    return complex(c), float(np.sqrt(max(r2, 0.0))), bool(lead > 0)


def _circles_image(mat, centers, radii):
    """Vectorized image of circles that do not enclose the pole -d/c.

    Writes g(z) = a/c - 1/(c^2 (z - p)) and inverts about the pole, which
    keeps tiny radii accurate.
    """
    a, c, d = mat[0, 0], mat[1, 0], mat[1, 1]
    pole = -d / c
    u0 = np.asarray(centers) - pole
    mod = np.abs(u0)
    power = (mod - radii) * (mod + radii)
    cen = a / c - np.conj(u0) / (c * c * power)
    rad = radii / (abs(c) ** 2 * np.abs(power))
    return cen, rad


def attracting_fixed_point(mat) -> complex:
    """Fixed point at which the derivative has modulus < 1."""
    a, b, c, d = mat[0, 0], mat[0, 1], mat[1, 0], mat[1, 1]
    if abs(c) < 1e-300:
        return np.inf if abs(a) > abs(d) else complex(b / (d - a))
    tr = a + d
    disc = np.sqrt(tr * tr - 4 + 0j)
    best = None
    for s in (1, -1):
        z = (a - d + s * disc) / (2 * c)
        der = abs(1.0 / (c * z + d) ** 2)
        if best is None or der < best[1]:
            best = (complex(z), der)
    return best[0]


def orbit_distance(mats: np.ndarray) -> np.ndarray:
    """Hyperbolic distance d(o, g o) for o = (0, 1) in upper half-space.

    Uses 2 cosh d = ||g||_F^2 for unit-determinant g; ``mats`` has shape (..., 2, 2).
    """
    fro2 = np.sum(np.abs(mats) ** 2, axis=(-2, -1))
    return np.arccosh(np.maximum(fro2 / 2.0, 1.0))


@dataclass(frozen=True)
class BoundaryPoint:
    point: complex
    prefix: tuple = ()


@dataclass(eq=False)
class SchottkyGroup:
    """Generators with per-letter ping-pong disks (center, radius)."""

    family: str
    generators: list
    centers: np.ndarray
    radii: np.ndarray
    name: str = "schottky"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in ("fuchsian", "kleinian"):
            raise ValueError(f"unknown family {self.family!r}")
        if len(self.generators) < 2:
            raise InsufficientGenerators("Schottky groups here need at least 2 generators")
        gens = []
        for g in self.generators:
            g = np.asarray(g, dtype=complex).reshape(2, 2)
            if abs(np.linalg.det(g) - 1) > DET_TOL:
                raise ValueError(f"generator determinant {np.linalg.det(g)} is not 1")
            if self.family == "fuchsian" and np.abs(g.imag).max() > 0:
                raise ValueError("fuchsian generators must be real")
            gens.append(g)
        self.generators = gens
        self.letters = []
        for g in gens:
            self.letters.append(g)
            self.letters.append(np.array([[g[1, 1], -g[0, 1]], [-g[1, 0], g[0, 0]]]))
        self.centers = np.asarray(self.centers, dtype=complex).reshape(-1)
        self.radii = np.asarray(self.radii, dtype=float).reshape(-1)
        if len(self.centers) != self.n_letters or len(self.radii) != self.n_letters:
            raise ValueError("need one disk per letter")
        self.fixed_points = np.array([attracting_fixed_point(m) for m in self.letters])

    @property
    def n_letters(self) -> int:
        return 2 * len(self.generators)

    @property
    def boundary_dim(self) -> int:
        """Real dimension of the boundary sphere minus a point."""
        return 1 if self.family == "fuchsian" else 2

    @property
    def hyperbolic_dim(self) -> int:
        return self.boundary_dim + 1

    @property
    def transition(self) -> np.ndarray:
        n = self.n_letters
        t = np.ones((n, n), dtype=int)
        for i in range(n):
            t[i, i ^ 1] = 0
        return t

    @classmethod
    def from_isometric_circles(cls, family, generators, name="schottky"):
        """Use isometric circles: the disk of g is centered at a/c with radius 1/|c|."""
        gens = [np.asarray(g, dtype=complex).reshape(2, 2) for g in generators]
        centers, radii = [], []
        for g in gens:
            for m in (g, np.array([[g[1, 1], -g[0, 1]], [-g[1, 0], g[0, 0]]])):
                centers.append(m[0, 0] / m[1, 0])
                radii.append(1.0 / abs(m[1, 0]))
        return cls(family, gens, np.array(centers), np.array(radii), name=name)

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "generators": [[[float(x.real), float(x.imag)] for x in g.ravel()]
                           for g in self.generators],
            "disks": [{"center": [float(c.real), float(c.imag)], "radius": float(r)}
                      for c, r in zip(self.centers, self.radii)],
        }

    # geometry ----------------------------------------------------------
    def disk_of(self, xi, tol=1e-12):
        """Letter whose closed disk contains ``xi``, or None."""
        if not np.isfinite(xi):
            return None
        dist = np.abs(self.centers - xi) - self.radii
        idx = int(np.argmin(dist))
        return idx if dist[idx] <= tol * max(1.0, self.radii[idx]) else None


def load_group(path_or_dict) -> SchottkyGroup:
    """Read a group from JSON: {family, generators: [[re, im] x 4], disks: [...]}."""
    if isinstance(path_or_dict, dict):
        data = path_or_dict
        name = data.get("name", "schottky")
    else:
        path = Path(path_or_dict)
        data = json.loads(path.read_text())
        name = data.get("name", path.stem)
    allowed = {"family", "generators", "disks", "name", "description"}
    extra = set(data) - allowed
    if extra:
        raise ValueError(f"unknown keys in group file: {sorted(extra)}")
    for key in ("family", "generators", "disks"):
        if key not in data:
            raise ValueError(f"group file missing {key!r}")
    gens = []
    for g in data["generators"]:
        if len(g) != 4 or any(len(e) != 2 for e in g):
            raise ValueError("each generator must be four [re, im] pairs")
        gens.append(np.array([complex(re, im) for re, im in g]).reshape(2, 2))
    centers, radii = [], []
    for d in data["disks"]:
        if set(d) != {"center", "radius"}:
            raise ValueError("disk entries need exactly 'center' and 'radius'")
        centers.append(complex(*d["center"]))
        radii.append(float(d["radius"]))
        if radii[-1] <= 0:
            raise ValueError("disk radius must be positive")
    return SchottkyGroup(data["family"], gens, np.array(centers), np.array(radii), name=name)


def bundled_group(name: str) -> SchottkyGroup:
    """Load one of the example groups shipped with the package ("fuchsian", "kleinian")."""
    path = Path(__file__).parent / "data" / f"{name}.json"
    return load_group(path)


def ping_pong_check(group: SchottkyGroup, strict: bool = True) -> dict:
    """Certify the ping-pong configuration with exact circle images.

    The margin is the smallest gap between distinct disks and between the image
    of each letter's mapped region and the boundary of its target disk.
    """
    n = group.n_letters
    if n < 4:
        raise InsufficientGenerators("need at least 2 generators")
    margin = np.inf
    worst = None
    for i in range(n):
        for j in range(i + 1, n):
            gap = abs(group.centers[i] - group.centers[j]) - group.radii[i] - group.radii[j]
            if gap < margin:
                margin, worst = gap, (i, j)
    map_gap = np.inf
    for i in range(n):
        src = i ^ 1
        c, r, inside = mobius_circle(group.letters[i], group.centers[src], group.radii[src])
        # the exterior of the source disk must land inside the image circle,
        # which itself must sit in the target disk (equality allowed)
        gap = group.radii[i] - abs(c - group.centers[i]) - r if not inside else -np.inf
        if gap < map_gap:
            map_gap = gap
            if gap < -1e-12 * group.radii[i]:
                margin, worst = min(margin, gap), (i, src)
    ok = bool(margin > 0)
    if strict and not ok:
        raise PingPongError(f"ping-pong fails for letters {worst} (margin {margin:.3e})")
    return {"pass": ok, "margin": float(margin), "mapping_gap": float(map_gap), "pair": worst}


def boundary_map(group: SchottkyGroup, xi):
    """Expanding map: apply the inverse of the letter whose disk contains xi."""
    point = xi.point if isinstance(xi, BoundaryPoint) else xi
    letter = group.disk_of(point)
    if letter is None:
        raise NotInLimitChart(f"{point} lies in no ping-pong disk")
    image = mobius(group.letters[letter ^ 1], point)
    if isinstance(xi, BoundaryPoint):
        return BoundaryPoint(image, xi.prefix[1:]), letter
    return image, letter


def branch_derivative(group: SchottkyGroup, letter: int, xi) -> complex:
    """Complex derivative 1 / (c xi + d)^2 of a letter at xi (chart swap for |xi| > 2)."""
    m = group.letters[letter] if isinstance(letter, (int, np.integer)) else np.asarray(letter)
    return _derivative(m, xi)


def _derivative(m, xi):
    c, d = m[1, 0], m[1, 1]
    xi = np.asarray(xi, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        big = np.abs(xi) > CHART_SWAP
        den = np.where(big, (c + d / np.where(big, xi, 1.0)) * xi, c * xi + d)
    if np.any(den == 0) or np.any(~np.isfinite(den)):
        raise PoleError("derivative evaluated at the pole")
    out = 1.0 / den**2
    return out if out.ndim else complex(out)


def conformal_data(group: SchottkyGroup, letter, xi):
    """(conformal factor |f'|, holonomy angle) of a branch; angle is 0 for fuchsian groups."""
    der = branch_derivative(group, letter, xi)
    ang = np.angle(der) if group.family == "kleinian" else np.zeros_like(np.real(der))
    return np.abs(der), ang


def roof(group: SchottkyGroup, letter, xi):
    """Return time -log|f'(xi)| of the inverse branch ``letter`` at xi."""
    return -np.log(np.abs(branch_derivative(group, letter, xi)))


def word_matrix(group: SchottkyGroup, word) -> np.ndarray:
    m = np.eye(2, dtype=complex)
    for l in word:
        m = m @ group.letters[l]
    return m


def word_count(group: SchottkyGroup, depth: int) -> int:
    n = group.n_letters
    return n * (n - 1) ** (depth - 1)


def admissible_words(n_letters: int, transition: np.ndarray, depth: int) -> np.ndarray:
    """All admissible words of a length in lexicographic order, shape (count, depth)."""
    words = np.arange(n_letters, dtype=np.int8)[:, None]
    for _ in range(depth - 1):
        last = words[:, -1]
        ext = []
        for l in range(n_letters):
            ok = transition[last, l] == 1
            ext.append(np.column_stack([words[ok], np.full(ok.sum(), l, dtype=np.int8)]))
        words = np.vstack(ext)
        order = np.lexsort(words.T[::-1])
        words = words[order]
    return words


def limit_set_sample(group: SchottkyGroup, depth: int, per_word: int = 1) -> list:
    """Points gamma_w(base) for every admissible word w of the given length.

    The base point is the attracting fixed point of the terminal letter; with
    ``per_word > 1`` the fixed points of further letters allowed after the
    terminal letter are used too.  All points lie exactly in the limit set.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if word_count(group, depth) * per_word > MAX_WORDS:
        raise DepthError(f"{word_count(group, depth) * per_word} points exceed {MAX_WORDS}")
    words = admissible_words(group.n_letters, group.transition, depth)
    out = []
    trans = group.transition
    for col in range(per_word):
        bases = []
        for w in words:
            allowed = [w[-1]] + [l for l in range(group.n_letters)
                                 if trans[w[-1], l] and l != w[-1]]
            bases.append(group.fixed_points[allowed[min(col, len(allowed) - 1)]])
        pts = np.array(bases, dtype=complex)
        for pos in range(depth - 1, -1, -1):
            pts = _apply_letters(group, words[:, pos], pts)
        out.extend(BoundaryPoint(complex(p), tuple(int(x) for x in w))
                   for p, w in zip(pts, words))
    return out


def _apply_letters(group, letters, pts):
    res = np.empty_like(pts)
    for l in range(group.n_letters):
        sel = letters == l
        if np.any(sel):
            res[sel] = mobius(group.letters[l], pts[sel])
    return res


def sample_points(group: SchottkyGroup, depth: int) -> np.ndarray:
    return np.array([p.point for p in limit_set_sample(group, depth)])


def busemann(xi, x, y) -> float:
    """Busemann value lim d(xi(t), y) - d(xi(t), x) in upper half-space.

    Points are pairs (boundary coordinate, height > 0); the boundary
    coordinate is real (H^2) or complex (H^3).  ``xi`` is a boundary
    coordinate or np.inf.  With x = (0, h), y = (0, 1) and xi = inf this is log h.
    """
    if isinstance(xi, BoundaryPoint):
        xi = xi.point
    if isinstance(xi, (tuple, list, np.ndarray)):
        raise DomainError("xi must be a boundary point, not an interior point")
    for p in (x, y):
        if len(p) != 2 or not p[1] > 0:
            raise DomainError(f"{p} is not an interior point of upper half-space")
    if not np.isfinite(xi):
        return float(np.log(x[1]) - np.log(y[1]))

    def log_poisson(p):
        return np.log(p[1]) - np.log(abs(complex(p[0]) - complex(xi)) ** 2 + p[1] ** 2)

    return float(log_poisson(x) - log_poisson(y))


def hyperbolic_distance(p, q) -> float:
    num = abs(complex(p[0]) - complex(q[0])) ** 2 + (p[1] - q[1]) ** 2
    return float(np.arccosh(1 + num / (2 * p[1] * q[1])))
