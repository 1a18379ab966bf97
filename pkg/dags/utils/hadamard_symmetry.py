import itertools
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from .errors import ConfigError
from .lattice import LatticeGeometry, PhaseConfig, SiteIndex

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SignMatrix:
    """4x4 matrix with +-1 entries. Rows index matter wires, columns gauge legs."""

    entries: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(int(v) for v in row) for row in self.entries)
        if len(rows) != 4 or any(len(row) != 4 for row in rows):
            raise ConfigError("sign matrix must be 4x4", module="hadamard_symmetry")
        if any(v not in (1, -1) for row in rows for v in row):
            raise ConfigError("sign matrix entries must be +1 or -1", module="hadamard_symmetry")
        object.__setattr__(self, "entries", rows)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "SignMatrix":
        return cls(tuple(tuple(row) for row in rows))

    def as_array(self) -> np.ndarray:
        return np.array(self.entries, dtype=np.int64)


# Diagonal -1, off-diagonal +1.
REFERENCE_W = SignMatrix.from_rows(
    [
        [-1, 1, 1, 1],
        [1, -1, 1, 1],
        [1, 1, -1, 1],
        [1, 1, 1, -1],
    ]
)


@dataclass(frozen=True)
class MonomialMatrix:
    """Signed permutation with dense form M[n, permutation[n]] = signs[n]."""

    permutation: Tuple[int, ...]
    signs: Tuple[int, ...]

    def __post_init__(self):
        perm = tuple(int(v) for v in self.permutation)
        signs = tuple(int(v) for v in self.signs)
        if sorted(perm) != [0, 1, 2, 3]:
            raise ConfigError(f"{perm} is not a permutation of 0..3", module="hadamard_symmetry")
        if len(signs) != 4 or any(v not in (1, -1) for v in signs):
            raise ConfigError(f"monomial signs must be four +-1 values, got {signs}", module="hadamard_symmetry")
        object.__setattr__(self, "permutation", perm)
        object.__setattr__(self, "signs", signs)

    @classmethod
    def identity(cls) -> "MonomialMatrix":
        return cls((0, 1, 2, 3), (1, 1, 1, 1))

    @classmethod
    def diagonal(cls, signs: Sequence[int]) -> "MonomialMatrix":
        return cls((0, 1, 2, 3), tuple(signs))

    @property
    def is_diagonal(self) -> bool:
        return self.permutation == (0, 1, 2, 3)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((4, 4), dtype=np.int64)
        dense[np.arange(4), self.permutation] = self.signs
        return dense

    def compose(self, other: "MonomialMatrix") -> "MonomialMatrix":
        """Matrix product self @ other."""
        perm = tuple(other.permutation[p] for p in self.permutation)
        signs = tuple(s * other.signs[p] for s, p in zip(self.signs, self.permutation))
        return MonomialMatrix(perm, signs)

    def inverse(self) -> "MonomialMatrix":
        perm = [0] * 4
        signs = [1] * 4
        for n, p in enumerate(self.permutation):
            perm[p] = n
            signs[p] = self.signs[n]
        return MonomialMatrix(tuple(perm), tuple(signs))

    def to_dict(self) -> Dict[str, List[int]]:
        return {"permutation": list(self.permutation), "signs": list(self.signs)}


@dataclass(frozen=True)
class AutomorphismPair:
    """Pair (L, R) with L^-1 W R = W. R is diagonal unless built from a full monomial search."""

    left: MonomialMatrix
    right: MonomialMatrix
    diagonal_right: bool = True

    def __post_init__(self):
        if self.diagonal_right and not self.right.is_diagonal:
            raise ConfigError("right factor must be a diagonal sign matrix", module="hadamard_symmetry")

    def compose(self, other: "AutomorphismPair") -> "AutomorphismPair":
        return AutomorphismPair(
            self.left.compose(other.left),
            self.right.compose(other.right),
            self.diagonal_right and other.diagonal_right,
        )

    def inverse(self) -> "AutomorphismPair":
        return AutomorphismPair(self.left.inverse(), self.right.inverse(), self.diagonal_right)

    @property
    def flipped_legs(self) -> Tuple[int, ...]:
        return tuple(i for i, s in enumerate(self.right.signs) if s == -1)

    def to_dict(self) -> Dict[str, Any]:
        return {"left": self.left.to_dict(), "right": self.right.to_dict()}


# L swaps wires 1<->2 and 3<->4 with signs (+,+,-,-); R flips legs 1 and 2.
REFERENCE_PAIR = AutomorphismPair(
    MonomialMatrix((1, 0, 3, 2), (1, 1, -1, -1)),
    MonomialMatrix.diagonal((-1, -1, 1, 1)),
)


def is_hadamard(W: SignMatrix) -> bool:
    """Check W W^T = 4 I."""
    mat = W.as_array()
    return bool(np.array_equal(mat @ mat.T, 4 * np.eye(4, dtype=np.int64)))


def verify_automorphism(W: SignMatrix, pair: AutomorphismPair) -> bool:
    """Check L^-1 W R == W in exact integer arithmetic."""
    lhs = pair.left.inverse().to_dense() @ W.as_array() @ pair.right.to_dense()
    return bool(np.array_equal(lhs, W.as_array()))


def _all_monomials() -> List[MonomialMatrix]:
    return [
        MonomialMatrix(perm, signs)
        for perm in itertools.permutations(range(4))
        for signs in itertools.product((1, -1), repeat=4)
    ]


@lru_cache(maxsize=32)
def _enumerate_cached(W: SignMatrix, diagonal_right: bool) -> Tuple[AutomorphismPair, ...]:
    mat = W.as_array()
    lefts = _all_monomials()
    if diagonal_right:
        rights = [MonomialMatrix.diagonal(s) for s in itertools.product((1, -1), repeat=4)]
    else:
        rights = lefts
    # W R = L W is equivalent to L^-1 W R = W.
    left_images = {left: left.to_dense() @ mat for left in lefts}
    pairs = []
    for right in rights:
        target = mat @ right.to_dense()
        for left, image in left_images.items():
            if np.array_equal(image, target):
                pairs.append(AutomorphismPair(left, right, diagonal_right))
    return tuple(pairs)


def enumerate_automorphism_pairs(W: SignMatrix, diagonal_right: bool = True) -> List[AutomorphismPair]:
    """
    Enumerate all monomial pairs (L, R) that leave W invariant.

    Args:
        W: Hadamard sign matrix
        diagonal_right: Restrict R to diagonal sign matrices (gauge symmetries).
            With False, R ranges over all monomial matrices.

    Returns:
        List of pairs in a deterministic order (closed under composition)
    """
    if not is_hadamard(W):
        raise ConfigError("W is not a Hadamard matrix (W W^T != 4 I)", module="hadamard_symmetry")
    pairs = list(_enumerate_cached(W, diagonal_right))
    logger.info(f"Found {len(pairs)} automorphism pairs (diagonal_right={diagonal_right})")
    return pairs


def is_abelian(pairs: Sequence[AutomorphismPair]) -> bool:
    return all(a.compose(b) == b.compose(a) for a in pairs for b in pairs)


def is_closed(pairs: Sequence[AutomorphismPair]) -> bool:
    members = set(pairs)
    return all(a.compose(b) in members for a in pairs for b in pairs)


def plaquette_pair(W: SignMatrix, legs: Sequence[int]) -> AutomorphismPair:
    """Automorphism pair whose diagonal R is -1 exactly on the given legs."""
    wanted = tuple(-1 if i in set(legs) else 1 for i in range(4))
    for pair in _enumerate_cached(W, True):
        if pair.right.signs == wanted:
            return pair
    raise ConfigError(f"no automorphism of W flips exactly legs {sorted(legs)}", module="hadamard_symmetry")


def apply_gauge_transformation(config: PhaseConfig, site: SiteIndex, pair: AutomorphismPair) -> PhaseConfig:
    """
    Apply a local automorphism at one waffle.

    Gauge legs with R = -1 shift by pi. Matter wires are permuted by L and
    shifted by pi where L carries a -1: phi'_n = phi_{perm[n]} + pi [l_n = -1].
    """
    if not pair.right.is_diagonal:
        raise ConfigError("only diagonal R acts on the gauge phases", module="hadamard_symmetry")
    g = config.geometry
    g._check_range(site, g.n_sites, "site")
    theta = np.array(config.theta)
    phi = np.array(config.phi)

    legs = g.star_table[site]
    theta[legs] += np.pi * (np.array(pair.right.signs) == -1)

    old = config.site_phi(site)
    new = old[list(pair.left.permutation)] + np.pi * (np.array(pair.left.signs) == -1)
    phi[4 * site: 4 * site + 4] = new
    return config.replace(theta=theta, phi=phi)


def plaquette_transformations(g: LatticeGeometry, p: int, W: SignMatrix) -> List[Tuple[SiteIndex, AutomorphismPair]]:
    """Per-corner pairs whose combined action shifts each link of plaquette p by pi once."""
    result = []
    links = set(int(i) for i in g.plaquette_table[p])
    for corner in g.corner_table[p]:
        legs = [leg for leg, link in enumerate(g.star_table[corner]) if int(link) in links]
        result.append((int(corner), plaquette_pair(W, legs)))
    return result


def flat_band_spectrum(W: SignMatrix, tol: float = 1e-9) -> List[Tuple[float, int]]:
    """
    Eigenvalues of the single-waffle tight-binding block [[0, W], [W^T, 0]].

    Returns:
        Sorted list of (eigenvalue, multiplicity)
    """
    mat = W.as_array().astype(float)
    block = np.block([[np.zeros((4, 4)), mat], [mat.T, np.zeros((4, 4))]])
    values = np.linalg.eigvalsh(block)
    levels: List[Tuple[float, int]] = []
    for value in np.sort(values):
        if levels and abs(value - levels[-1][0]) <= tol:
            levels[-1] = (levels[-1][0], levels[-1][1] + 1)
        else:
            levels.append((float(value), 1))
    return [(round(v, 12) + 0.0, m) for v, m in levels]


def serialize_sign_matrix(W: SignMatrix) -> Dict[str, Any]:
    return {"rows": [list(row) for row in W.entries], "is_hadamard": is_hadamard(W)}


def load_sign_matrix(data: Any) -> SignMatrix:
    rows = data["rows"] if isinstance(data, dict) else data
    return SignMatrix.from_rows(rows)


def serialize_pairs(pairs: Sequence[AutomorphismPair]) -> Dict[str, Any]:
    return {"index_base": 0, "n_pairs": len(pairs), "pairs": [pair.to_dict() for pair in pairs]}


def load_pairs(data: Dict[str, Any]) -> List[AutomorphismPair]:
    pairs = []
    for entry in data["pairs"]:
        left = MonomialMatrix(tuple(entry["left"]["permutation"]), tuple(entry["left"]["signs"]))
        right = MonomialMatrix(tuple(entry["right"]["permutation"]), tuple(entry["right"]["signs"]))
        pairs.append(AutomorphismPair(left, right, right.is_diagonal))
    return pairs


def compose_pairs(first: AutomorphismPair, second: AutomorphismPair) -> AutomorphismPair:
    return first.compose(second)


def invert_pair(pair: AutomorphismPair) -> AutomorphismPair:
    return pair.inverse()


def monomial_to_dense(matrix: MonomialMatrix) -> np.ndarray:
    return matrix.to_dense()
