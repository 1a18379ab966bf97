import itertools
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg
from scipy.special import comb

from .classical_energy import CouplingParams, lone_flip_cost, tethered_config
from .errors import ConfigError, NumericalError, SizeGuardError
from .hadamard_symmetry import REFERENCE_W, MonomialMatrix, SignMatrix, plaquette_pair
from .lattice import LatticeGeometry
from .rng import stream

logger = logging.getLogger(__name__)

MAX_SPINS = 24
DENSE_MAX_SPINS = 12
LEVEL_TOL = 1e-9


@dataclass(frozen=True)
class StabilizerModelParams:
    """Star coupling lambda_J and per-plaquette flip amplitudes."""

    lambda_J: float = 1.0
    lambda_flip: Union[float, Mapping[int, float]] = 1.0

    def __post_init__(self):
        if not np.isfinite(self.lambda_J) or self.lambda_J < 0:
            raise ConfigError(f"lambda_J must be finite and >= 0, got {self.lambda_J}", module="effective_quantum")
        values = self.lambda_flip.values() if isinstance(self.lambda_flip, Mapping) else [self.lambda_flip]
        for value in values:
            if not np.isfinite(value) or value < 0:
                raise ConfigError(f"lambda_flip must be finite and >= 0, got {value}", module="effective_quantum")

    def flip(self, p: int) -> float:
        if isinstance(self.lambda_flip, Mapping):
            if p not in self.lambda_flip:
                raise ConfigError(f"no flip amplitude for plaquette {p}", module="effective_quantum")
            return float(self.lambda_flip[p])
        return float(self.lambda_flip)

    @classmethod
    def two_valued(cls, g: LatticeGeometry, lambda_J: float, type_a: float, type_b: float) -> "StabilizerModelParams":
        """Alternating pattern: type_a on plaquettes with x+y even, type_b on the rest."""
        flips = {}
        for p in range(g.n_plaquettes):
            x, y = g.plaquette_coords(p)
            flips[p] = type_a if (x + y) % 2 == 0 else type_b
        return cls(lambda_J, flips)


@dataclass
class SpinOperatorMatrix:
    """Real or complex sparse operator on n_spins qubits; bit k of a basis index is spin k, 0 = up."""

    matrix: sparse.csr_matrix
    n_spins: int
    labels: List[str] = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        diff = self.matrix - self.matrix.conj().T
        return diff.nnz == 0 or float(np.max(np.abs(diff.data))) <= tol

    def to_coo_dict(self) -> Dict[str, Any]:
        coo = self.matrix.tocoo()
        return {
            "shape": list(coo.shape),
            "n_spins": self.n_spins,
            "row": coo.row.tolist(),
            "col": coo.col.tolist(),
            "data": np.real(coo.data).tolist(),
        }

    def __add__(self, other: "SpinOperatorMatrix") -> "SpinOperatorMatrix":
        return SpinOperatorMatrix((self.matrix + other.matrix).tocsr(), self.n_spins, self.labels)


def _check_spins(n_spins: int):
    if n_spins > MAX_SPINS:
        raise SizeGuardError(
            f"{n_spins} spins exceed the 2^{MAX_SPINS} dimension guard", module="effective_quantum"
        )


def _states(n_spins: int) -> np.ndarray:
    return np.arange(1 << n_spins, dtype=np.int64)


def _mask(bits: Sequence[int]) -> int:
    mask = 0
    for b in bits:
        mask |= 1 << int(b)
    return mask


def _parity(states: np.ndarray, bits: Sequence[int]) -> np.ndarray:
    parity = np.zeros_like(states)
    for b in bits:
        parity ^= (states >> int(b)) & 1
    return parity


def z_string(n_spins: int, bits: Sequence[int]) -> SpinOperatorMatrix:
    """Product of sigma^z over the given spins (diagonal)."""
    values = 1 - 2 * _parity(_states(n_spins), bits)
    return SpinOperatorMatrix(sparse.diags(values.astype(float), format="csr"), n_spins)


def x_string(n_spins: int, bits: Sequence[int]) -> SpinOperatorMatrix:
    """Product of sigma^x over the given spins (a permutation)."""
    states = _states(n_spins)
    matrix = sparse.csr_matrix(
        (np.ones(states.size), (states ^ _mask(bits), states)), shape=(states.size, states.size)
    )
    return SpinOperatorMatrix(matrix, n_spins)


def star_operator(g: LatticeGeometry, s: int) -> SpinOperatorMatrix:
    _check_spins(g.n_links)
    return z_string(g.n_links, g.star_table[s])


def plaquette_operator(g: LatticeGeometry, p: int) -> SpinOperatorMatrix:
    _check_spins(g.n_links)
    return x_string(g.n_links, g.plaquette_table[p])


def build_effective_hamiltonian(g: LatticeGeometry, params: StabilizerModelParams) -> SpinOperatorMatrix:
    """
    Toric-code Hamiltonian -lambda_J sum_s prod_{i in s} tau^z_i - sum_p lambda_flip(p) prod_{i in p} tau^x_i.

    Args:
        g: Geometry with at most 24 links
        params: Star and plaquette couplings

    Returns:
        Sparse real Hermitian matrix in the tau^z basis ordered by link index
    """
    _check_spins(g.n_links)
    states = _states(g.n_links)
    diagonal = np.zeros(states.size)
    for legs in g.star_table:
        diagonal -= params.lambda_J * (1 - 2 * _parity(states, legs))
    rows, cols, data = [states], [states], [diagonal]
    for p in range(g.n_plaquettes):
        amplitude = params.flip(p)
        if amplitude == 0:
            continue
        rows.append(states ^ _mask(g.plaquette_table[p]))
        cols.append(states)
        data.append(np.full(states.size, -amplitude))
    matrix = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(states.size, states.size)
    ).tocsr()
    logger.info(f"Built toric Hamiltonian on {g.Lx}x{g.Ly}: dimension {states.size}, nnz {matrix.nnz}")
    return SpinOperatorMatrix(matrix, g.n_links)


def _merge_levels(levels: Mapping[float, int], tol: float = LEVEL_TOL) -> List[Tuple[float, int]]:
    merged: List[Tuple[float, int]] = []
    for energy in sorted(levels):
        if merged and abs(energy - merged[-1][0]) <= tol:
            merged[-1] = (merged[-1][0], merged[-1][1] + levels[energy])
        else:
            merged.append((float(energy), int(levels[energy])))
    return merged


def stabilizer_spectrum_oracle(g: LatticeGeometry, params: StabilizerModelParams) -> List[Tuple[float, int]]:
    """
    Full spectrum of the commuting toric model from violation patterns.

    Star and plaquette eigenvalues are +-1 with an even number of -1 among
    each family on the torus; every pattern carries a fourfold topological
    degeneracy.

    Returns:
        Ascending list of (energy, degeneracy) summing to 2^N_links
    """
    n = g.n_sites
    star_levels: Dict[float, int] = defaultdict(int)
    for m in range(0, n + 1, 2):
        star_levels[round(-params.lambda_J * (n - 2 * m), 12)] += int(comb(n, m, exact=True))
    # (energy, parity of violations) -> count
    plaquette_levels: Dict[Tuple[float, int], int] = {(0.0, 0): 1}
    for p in range(g.n_plaquettes):
        amplitude = params.flip(p)
        updated: Dict[Tuple[float, int], int] = defaultdict(int)
        for (energy, parity), count in plaquette_levels.items():
            updated[(round(energy - amplitude, 12), parity)] += count
            updated[(round(energy + amplitude, 12), parity ^ 1)] += count
        plaquette_levels = updated
    levels: Dict[float, int] = defaultdict(int)
    for e_star, n_star in star_levels.items():
        for (e_plaq, parity), n_plaq in plaquette_levels.items():
            if parity == 0:
                levels[round(e_star + e_plaq, 12)] += 4 * n_star * n_plaq
    spectrum = _merge_levels(levels)
    total = sum(d for _, d in spectrum)
    if total != 2 ** g.n_links:
        raise NumericalError(
            f"oracle spectrum covers {total} states, expected {2 ** g.n_links}", module="effective_quantum"
        )
    return spectrum


def exact_diagonalize(
    H: SpinOperatorMatrix, n_low: int, method: str = "auto", seed: int = 0, tol: float = 0.0
) -> np.ndarray:
    """
    Lowest n_low eigenvalues in ascending order.

    Dense diagonalization up to 12 spins, ARPACK (eigsh, smallest algebraic)
    above. The Lanczos start vector is drawn from a fixed seed. A Krylov
    method resolves one vector per distinct eigenvalue, so degenerate
    multiplicities are only guaranteed by the dense path.

    Raises:
        NumericalError: ARPACK did not converge (details carry residual norms)
    """
    if not H.is_hermitian():
        raise ConfigError("exact_diagonalize needs a Hermitian matrix", module="effective_quantum")
    dim = H.dimension
    if n_low < 1 or n_low > dim:
        raise ConfigError(f"n_low must be in [1, {dim}], got {n_low}", module="effective_quantum")
    if method == "auto":
        method = "dense" if H.n_spins <= DENSE_MAX_SPINS or n_low >= dim - 1 else "sparse"
    if method == "dense":
        values = np.linalg.eigvalsh(H.matrix.toarray())
        return np.sort(values)[:n_low]
    if method != "sparse":
        raise ConfigError(f"unknown diagonalization method '{method}'", module="effective_quantum")

    v0 = stream(seed, 0).standard_normal(dim)
    ncv = min(dim, max(2 * n_low + 1, 20))
    try:
        values = sparse_linalg.eigsh(H.matrix, k=n_low, which="SA", v0=v0, ncv=ncv, tol=tol, return_eigenvectors=False)
    except sparse_linalg.ArpackNoConvergence as exc:
        residuals = [
            float(np.linalg.norm(H.matrix @ exc.eigenvectors[:, k] - exc.eigenvalues[k] * exc.eigenvectors[:, k]))
            for k in range(len(exc.eigenvalues))
        ]
        logger.error(f"eigsh did not converge: {len(exc.eigenvalues)} of {n_low} eigenpairs")
        raise NumericalError(
            f"eigsh did not converge for {n_low} eigenvalues",
            module="effective_quantum",
            details={"converged": np.real(exc.eigenvalues).tolist(), "residual_norms": residuals},
        ) from exc
    return np.sort(np.real(values))


def group_levels(values: Sequence[float], tol: float = 1e-8) -> List[Tuple[float, int]]:
    """Collapse a sorted eigenvalue list into (energy, degeneracy) pairs."""
    levels: List[Tuple[float, int]] = []
    for value in np.sort(np.asarray(values, dtype=float)):
        if levels and abs(value - levels[-1][0]) <= tol:
            levels[-1] = (levels[-1][0], levels[-1][1] + 1)
        else:
            levels.append((float(value), 1))
    return levels


def commutator_norm(A: SpinOperatorMatrix, B: SpinOperatorMatrix) -> float:
    """Frobenius norm of [A, B]."""
    comm = A.matrix @ B.matrix - B.matrix @ A.matrix
    return float(sparse_linalg.norm(comm)) if comm.nnz else 0.0


@dataclass
class WxyCluster:
    """Waffles of a WXY cluster. Spins: 4 matter per site first, then gauge links."""

    sites: List[int]
    links: List[int]
    legs: List[List[int]]
    W: SignMatrix = REFERENCE_W

    @property
    def n_matter(self) -> int:
        return 4 * len(self.sites)

    @property
    def n_spins(self) -> int:
        return self.n_matter + len(self.links)

    def matter_spin(self, k: int, n: int) -> int:
        return 4 * k + n

    def gauge_spin(self, k: int, leg: int) -> int:
        return self.n_matter + self.legs[k][leg]


def wxy_cluster(
    g: Optional[LatticeGeometry] = None, sites: Optional[Sequence[int]] = None, W: SignMatrix = REFERENCE_W
) -> WxyCluster:
    """
    A single waffle (no geometry) or the given sites of a geometry with every incident link.

    Raises:
        SizeGuardError: More than 24 spins
    """
    if g is None:
        cluster = WxyCluster(sites=[0], links=[0, 1, 2, 3], legs=[[0, 1, 2, 3]], W=W)
    else:
        sites = list(range(g.n_sites)) if sites is None else [int(s) for s in sites]
        for s in sites:
            g._check_range(s, g.n_sites, "site")
        links = sorted({int(i) for s in sites for i in g.star_table[s]})
        position = {link: k for k, link in enumerate(links)}
        legs = [[position[int(i)] for i in g.star_table[s]] for s in sites]
        cluster = WxyCluster(sites=sites, links=links, legs=legs, W=W)
    _check_spins(cluster.n_spins)
    return cluster


def wxy_hamiltonian(cluster: WxyCluster, J: float = 1.0, h_mu: float = 0.0, h_sigma: float = 0.0) -> SpinOperatorMatrix:
    """
    H = -J sum_s sum_{n,i} W_ni (mu^x_n sigma^x_i + mu^y_n sigma^y_i) + h_mu sum mu^z + h_sigma sum sigma^z.

    The XY pair term only connects antiparallel spins, with matrix element
    -2 J W_ni between the two flipped states.
    """
    _check_spins(cluster.n_spins)
    n = cluster.n_spins
    states = _states(n)
    W = cluster.W.as_array()
    rows, cols, data = [], [], []
    for k in range(len(cluster.sites)):
        for wire in range(4):
            a = cluster.matter_spin(k, wire)
            for leg in range(4):
                b = cluster.gauge_spin(k, leg)
                differ = ((states >> a) & 1) != ((states >> b) & 1)
                src = states[differ]
                rows.append(src ^ ((1 << a) | (1 << b)))
                cols.append(src)
                data.append(np.full(src.size, -2.0 * J * W[wire, leg]))
    diagonal = np.zeros(states.size)
    for spin in range(n):
        z = 1 - 2 * ((states >> spin) & 1)
        diagonal += (h_mu if spin < cluster.n_matter else h_sigma) * z
    rows.append(states)
    cols.append(states)
    data.append(diagonal)
    matrix = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(states.size, states.size)
    ).tocsr()
    matrix.eliminate_zeros()
    logger.info(f"Built WXY Hamiltonian: {len(cluster.sites)} sites, {n} spins, nnz {matrix.nnz}")
    return SpinOperatorMatrix(matrix, n)


def matter_transformation(cluster: WxyCluster, k: int, left: MonomialMatrix) -> SpinOperatorMatrix:
    """U_L = Q Z_S on the matter spins of cluster site k.

    Q moves spin n to spin perm[n]; Z_S applies mu^z on wires with a -1 sign.
    """
    n = cluster.n_spins
    states = _states(n)
    wires = [cluster.matter_spin(k, w) for w in range(4)]
    signs = 1 - 2 * _parity(states, [wires[w] for w in range(4) if left.signs[w] == -1])
    target = states.copy()
    for w in wires:
        target &= ~(1 << w)
    for w in range(4):
        bit = (states >> wires[w]) & 1
        target |= bit << wires[left.permutation[w]]
    matrix = sparse.csr_matrix((signs.astype(float), (target, states)), shape=(states.size, states.size))
    return SpinOperatorMatrix(matrix, n)


def wxy_gauge_generators(cluster: WxyCluster, max_links: int = 20) -> List[Tuple[Tuple[int, ...], SpinOperatorMatrix]]:
    """
    Local symmetry operators of a WXY cluster.

    One generator per link subset T meeting every cluster site in an even
    number of legs: sigma^z on T times U_L at each site touched by T (with
    the L whose R flips exactly those legs).

    Returns:
        List of (link subset as cluster link ids, operator)
    """
    n_links = len(cluster.links)
    if n_links > max_links:
        raise SizeGuardError(f"{n_links} cluster links exceed generator enumeration limit", module="effective_quantum")
    generators = []
    for size in range(1, n_links + 1):
        for subset in itertools.combinations(range(n_links), size):
            chosen = set(subset)
            per_site = [[leg for leg in range(4) if cluster.legs[k][leg] in chosen] for k in range(len(cluster.sites))]
            if any(len(legs) % 2 for legs in per_site):
                continue
            op = z_string(cluster.n_spins, [cluster.n_matter + i for i in subset])
            for k, legs in enumerate(per_site):
                if legs:
                    pair = plaquette_pair(cluster.W, legs)
                    op = SpinOperatorMatrix((matter_transformation(cluster, k, pair.left).matrix @ op.matrix).tocsr(), op.n_spins)
            generators.append((subset, op))
    logger.info(f"{len(generators)} gauge generators on a {len(cluster.sites)}-site cluster")
    return generators


def total_sz_operator(n_spins: int) -> SpinOperatorMatrix:
    states = _states(n_spins)
    ups = np.zeros(states.size)
    for spin in range(n_spins):
        ups += 0.5 * (1 - 2 * ((states >> spin) & 1))
    return SpinOperatorMatrix(sparse.diags(ups, format="csr"), n_spins)


def check_conserved_plaquettes(
    H: SpinOperatorMatrix, g_or_cluster: Union[LatticeGeometry, WxyCluster]
) -> Dict[str, float]:
    """
    Commutator norms of the local gauge generators.

    For a geometry the generators are the plaquette operators prod tau^x;
    for a WXY cluster they come from wxy_gauge_generators.

    Returns:
        {"max_generator_commutator": max ||[G_p, G_p']||, "max_hamiltonian_commutator": max ||[H, G_p]||}
    """
    if isinstance(g_or_cluster, LatticeGeometry):
        generators = [plaquette_operator(g_or_cluster, p) for p in range(g_or_cluster.n_plaquettes)]
    else:
        generators = [op for _, op in wxy_gauge_generators(g_or_cluster)]
    pair_norm = 0.0
    for a, b in itertools.combinations(generators, 2):
        pair_norm = max(pair_norm, commutator_norm(a, b))
    h_norm = max((commutator_norm(H, op) for op in generators), default=0.0)
    return {
        "n_generators": len(generators),
        "max_generator_commutator": pair_norm,
        "max_hamiltonian_commutator": h_norm,
    }


@dataclass(frozen=True)
class WkbParams:
    """Reduced units with JC = J*C the dimensionless stiffness-capacitance product."""

    J: float = 1.0
    C: float = 1.0
    k: float = 1.0
    K_wkb: float = 1.0

    def __post_init__(self):
        if self.J <= 0 or self.C <= 0 or self.K_wkb <= 0:
            raise ConfigError("J, C and K_wkb must be positive", module="effective_quantum")

    @property
    def JC(self) -> float:
        return self.J * self.C


def wkb_flip_amplitude(params: WkbParams) -> float:
    """lambda_flip = J (JC)^-k exp(-K (JC)^(1/4))."""
    return params.J * params.JC ** (-params.k) * math.exp(-params.K_wkb * params.JC ** 0.25)


def wkb_turnover(params: WkbParams) -> Optional[float]:
    """JC beyond which lambda_flip decreases monotonically; None when it always does."""
    if params.k >= 0:
        return None
    return (4 * -params.k / params.K_wkb) ** 4


def scaling_probe(
    jc_grid: Sequence[float], k: float = 1.0, K_wkb: float = 1.0, J: float = 1.0, amplitudes: Optional[Sequence[float]] = None
) -> Dict[str, float]:
    """
    Fit the exponent of ln(-ln(lambda_flip / (J JC^-k))) against ln JC.

    With amplitudes omitted the closed form is sampled on the grid.
    """
    jc = np.asarray(jc_grid, dtype=float)
    if jc.size < 2 or np.any(jc <= 0):
        raise ConfigError("scaling probe needs at least two positive JC values", module="effective_quantum")
    decades = math.log10(jc.max() / jc.min())
    if decades < 3:
        logger.warning(f"JC grid spans only {decades:.2f} decades")
    if amplitudes is None:
        amplitudes = [wkb_flip_amplitude(WkbParams(J, value / J, k, K_wkb)) for value in jc]
    amplitudes = np.asarray(amplitudes, dtype=float)
    reduced = -np.log(amplitudes / (J * jc ** (-k)))
    slope, intercept = np.polyfit(np.log(jc), np.log(reduced), 1)
    return {"exponent": float(slope), "K_fit": float(math.exp(intercept)), "decades": decades}


def plasma_frequency(J: float, C: float) -> float:
    """Oscillator frequency sqrt(J / C) in reduced units."""
    if J <= 0 or C <= 0:
        raise ConfigError("J and C must be positive", module="effective_quantum")
    return math.sqrt(J / C)


def lambda_j_from_classical(J: float = 1.0) -> float:
    """
    Star-term scale lambda_J from the classical energy of one pi-shifted link.

    The value is the total separation between a uniform ground state and the
    configuration with one link shifted by pi. That shift leaves both endpoint
    stars with an odd number of pi offsets, each costing 4J, so lambda_J = 8J
    is the cost of the defect pair, not of a single star.
    """
    g = LatticeGeometry(2, 2)
    params = CouplingParams(J)
    return lone_flip_cost(tethered_config(g, np.zeros(g.n_links), params), 0, params)
