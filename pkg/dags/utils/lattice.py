import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Tuple

import numpy as np

from .errors import ConfigError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi

# Opaque integer handles; coordinates are recovered through the geometry.
SiteIndex = int
LinkIndex = int
PlaquetteIndex = int

# Leg order of every star, also the column order of W.
LEGS = ("N", "E", "S", "W")


@dataclass(frozen=True)
class LatticeGeometry:
    """Square lattice of waffles on a torus.

    Sites are numbered s = y*Lx + x. Horizontal links h(x, y) join (x, y) to
    (x+1, y) and carry indices 0..N-1; vertical links v(x, y) join (x, y) to
    (x, y+1) and carry indices N..2N-1. Matter wire n of site s is 4*s + n.
    Plaquette p(x, y) has (x, y) as its lower-left corner.
    """

    Lx: int
    Ly: int
    boundary: str = field(default="periodic")

    def __post_init__(self):
        for name, value in (("Lx", self.Lx), ("Ly", self.Ly)):
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise ConfigError(f"{name} must be an integer, got {value!r}", module="lattice")
            if value < 2 or value % 2:
                raise ConfigError(
                    f"{name}={value}: lattice dimensions must be even and at least 2 "
                    f"(the alternating-plaquette crystal needs even sizes)",
                    module="lattice",
                )
        if self.boundary != "periodic":
            raise ConfigError(f"Unsupported boundary '{self.boundary}', only 'periodic'", module="lattice")

    # Counts

    @property
    def n_sites(self) -> int:
        return self.Lx * self.Ly

    @property
    def n_links(self) -> int:
        return 2 * self.n_sites

    @property
    def n_matter(self) -> int:
        return 4 * self.n_sites

    @property
    def n_plaquettes(self) -> int:
        return self.n_sites

    # Coordinates

    def site_index(self, x: int, y: int) -> SiteIndex:
        return (y % self.Ly) * self.Lx + (x % self.Lx)

    def site_coords(self, s: SiteIndex) -> Tuple[int, int]:
        self._check_range(s, self.n_sites, "site")
        return s % self.Lx, s // self.Lx

    def link_index(self, x: int, y: int, direction: str) -> LinkIndex:
        offset = {"h": 0, "v": self.n_sites}[direction]
        return offset + self.site_index(x, y)

    def link_coords(self, i: LinkIndex) -> Tuple[int, int, str]:
        self._check_range(i, self.n_links, "link")
        direction = "h" if i < self.n_sites else "v"
        x, y = self.site_coords(i % self.n_sites)
        return x, y, direction

    def plaquette_index(self, x: int, y: int) -> PlaquetteIndex:
        return self.site_index(x, y)

    def plaquette_coords(self, p: PlaquetteIndex) -> Tuple[int, int]:
        self._check_range(p, self.n_plaquettes, "plaquette")
        return p % self.Lx, p // self.Lx

    def _check_range(self, index: int, size: int, kind: str):
        if not isinstance(index, (int, np.integer)) or not 0 <= index < size:
            raise ConfigError(
                f"{kind} index {index!r} out of range [0, {size}) for {self.Lx}x{self.Ly} lattice",
                module="lattice",
            )

    # Incidence tables

    @cached_property
    def star_table(self) -> np.ndarray:
        """(N_sites, 4) links of every star in N, E, S, W order."""
        table = np.empty((self.n_sites, 4), dtype=np.int64)
        for s in range(self.n_sites):
            x, y = s % self.Lx, s // self.Lx
            table[s] = (
                self.link_index(x, y, "v"),
                self.link_index(x, y, "h"),
                self.link_index(x, y - 1, "v"),
                self.link_index(x - 1, y, "h"),
            )
        table.setflags(write=False)
        return table

    @cached_property
    def plaquette_table(self) -> np.ndarray:
        """(N_plaquettes, 4) links of every plaquette: bottom, right, top, left."""
        table = np.empty((self.n_plaquettes, 4), dtype=np.int64)
        for p in range(self.n_plaquettes):
            x, y = p % self.Lx, p // self.Lx
            table[p] = (
                self.link_index(x, y, "h"),
                self.link_index(x + 1, y, "v"),
                self.link_index(x, y + 1, "h"),
                self.link_index(x, y, "v"),
            )
        table.setflags(write=False)
        return table

    @cached_property
    def corner_table(self) -> np.ndarray:
        """(N_plaquettes, 4) corner sites: (x,y), (x+1,y), (x+1,y+1), (x,y+1)."""
        table = np.empty((self.n_plaquettes, 4), dtype=np.int64)
        for p in range(self.n_plaquettes):
            x, y = p % self.Lx, p // self.Lx
            table[p] = (
                self.site_index(x, y),
                self.site_index(x + 1, y),
                self.site_index(x + 1, y + 1),
                self.site_index(x, y + 1),
            )
        table.setflags(write=False)
        return table

    @cached_property
    def link_endpoints(self) -> np.ndarray:
        """(N_links, 2) sites joined by each link, tail first."""
        ends = np.empty((self.n_links, 2), dtype=np.int64)
        for s in range(self.n_sites):
            x, y = s % self.Lx, s // self.Lx
            ends[self.link_index(x, y, "h")] = (s, self.site_index(x + 1, y))
            ends[self.link_index(x, y, "v")] = (s, self.site_index(x, y + 1))
        ends.setflags(write=False)
        return ends

    @cached_property
    def link_legs(self) -> np.ndarray:
        """(N_links, 2) leg number of the link at its tail and head site."""
        legs = np.empty((self.n_links, 2), dtype=np.int64)
        legs[: self.n_sites] = (1, 3)  # E at the tail, W at the head
        legs[self.n_sites:] = (0, 2)  # N at the tail, S at the head
        legs.setflags(write=False)
        return legs

    @cached_property
    def link_plaquette_table(self) -> np.ndarray:
        """(N_links, 2) plaquettes that contain each link."""
        table = np.empty((self.n_links, 2), dtype=np.int64)
        for s in range(self.n_sites):
            x, y = s % self.Lx, s // self.Lx
            table[self.link_index(x, y, "h")] = (self.plaquette_index(x, y), self.plaquette_index(x, y - 1))
            table[self.link_index(x, y, "v")] = (self.plaquette_index(x, y), self.plaquette_index(x - 1, y))
        table.setflags(write=False)
        return table

    @cached_property
    def link_midpoints(self) -> np.ndarray:
        mids = np.empty((self.n_links, 2), dtype=float)
        for s in range(self.n_sites):
            x, y = s % self.Lx, s // self.Lx
            mids[self.link_index(x, y, "h")] = (x + 0.5, y)
            mids[self.link_index(x, y, "v")] = (x, y + 0.5)
        mids.setflags(write=False)
        return mids

    def leg_of(self, s: SiteIndex, i: LinkIndex) -> int:
        legs = np.flatnonzero(self.star_table[s] == i)
        if legs.size != 1:
            raise ConfigError(f"link {i} is not incident to site {s}", module="lattice")
        return int(legs[0])

    def link_distance(self, i: LinkIndex, j: LinkIndex) -> float:
        """Minimum-image distance between link midpoints."""
        d = np.abs(self.link_midpoints[i] - self.link_midpoints[j])
        d = np.minimum(d, np.array([self.Lx, self.Ly]) - d)
        return float(np.hypot(d[0], d[1]))

    def to_summary(self) -> Dict[str, Any]:
        return {
            "Lx": self.Lx,
            "Ly": self.Ly,
            "boundary": self.boundary,
            "n_sites": self.n_sites,
            "n_links": self.n_links,
            "n_matter": self.n_matter,
            "n_plaquettes": self.n_plaquettes,
            "leg_order": list(LEGS),
            "star_links": self.star_table.tolist(),
            "plaquette_links": self.plaquette_table.tolist(),
            "link_sites": self.link_endpoints.tolist(),
        }


def build_lattice(Lx: int, Ly: int) -> LatticeGeometry:
    """
    Build a periodic waffle lattice.

    Args:
        Lx: Number of sites along x (even, >= 2)
        Ly: Number of sites along y (even, >= 2)

    Returns:
        LatticeGeometry with all incidence tables

    Raises:
        ConfigError: If a dimension is odd or smaller than 2
    """
    g = LatticeGeometry(Lx, Ly)
    logger.info(
        f"Built {Lx}x{Ly} torus: {g.n_sites} sites, {g.n_links} links, "
        f"{g.n_matter} matter wires, {g.n_plaquettes} plaquettes"
    )
    return g


def star_links(g: LatticeGeometry, s: SiteIndex) -> Tuple[LinkIndex, ...]:
    """Links of star s in N, E, S, W order."""
    g._check_range(s, g.n_sites, "site")
    return tuple(int(i) for i in g.star_table[s])


def plaquette_links(g: LatticeGeometry, p: PlaquetteIndex) -> Tuple[LinkIndex, ...]:
    """Links of plaquette p in bottom, right, top, left order."""
    g._check_range(p, g.n_plaquettes, "plaquette")
    return tuple(int(i) for i in g.plaquette_table[p])


def canonical_phases(values) -> np.ndarray:
    """Map phases into [0, 2*pi)."""
    arr = np.mod(np.asarray(values, dtype=float), TWO_PI)
    arr[arr >= TWO_PI] -= TWO_PI
    return arr


@dataclass(frozen=True, eq=False)
class PhaseConfig:
    """Gauge phases theta (per link) and matter phases phi (per matter wire)."""

    geometry: LatticeGeometry
    theta: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        phi = np.asarray(self.phi, dtype=float)
        if theta.shape != (self.geometry.n_links,):
            raise ConfigError(
                f"theta must hold {self.geometry.n_links} link phases, got shape {theta.shape}",
                module="classical_energy",
            )
        if phi.shape != (self.geometry.n_matter,):
            raise ConfigError(
                f"phi must hold {self.geometry.n_matter} matter phases, got shape {phi.shape}",
                module="classical_energy",
            )
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(phi))):
            raise ConfigError("phases must be finite", module="classical_energy")
        theta = canonical_phases(theta)
        phi = canonical_phases(phi)
        theta.setflags(write=False)
        phi.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", phi)

    def site_phi(self, s: SiteIndex) -> np.ndarray:
        return self.phi[4 * s: 4 * s + 4]

    def replace(self, theta=None, phi=None) -> "PhaseConfig":
        return PhaseConfig(
            self.geometry,
            self.theta if theta is None else theta,
            self.phi if phi is None else phi,
        )

    def to_dict(self) -> Dict[str, Any]:
        g = self.geometry
        links = []
        for i, value in enumerate(self.theta):
            x, y, direction = g.link_coords(i)
            links.append({"link": i, "x": x, "y": y, "direction": direction, "theta": float(value)})
        matter = []
        for m, value in enumerate(self.phi):
            x, y = g.site_coords(m // 4)
            matter.append({"matter": m, "x": x, "y": y, "slot": m % 4, "phi": float(value)})
        return {"geometry": {"Lx": g.Lx, "Ly": g.Ly}, "links": links, "matter": matter}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PhaseConfig":
        g = LatticeGeometry(data["geometry"]["Lx"], data["geometry"]["Ly"])
        theta = np.full(g.n_links, np.nan)
        phi = np.full(g.n_matter, np.nan)
        for entry in data["links"]:
            theta[entry["link"]] = entry["theta"]
        for entry in data["matter"]:
            phi[entry["matter"]] = entry["phi"]
        if np.isnan(theta).any() or np.isnan(phi).any():
            raise ConfigError("phase configuration is missing link or matter entries", module="classical_energy")
        return cls(g, theta, phi)


# Pairing ids of the four legs at a waffle: (12)(34), (13)(24), (14)(23).
PAIRING_LABELS = ("(12)(34)", "(13)(24)", "(14)(23)")
PAIRING_PARTNERS = np.array(
    [
        [1, 0, 3, 2],
        [2, 3, 0, 1],
        [3, 2, 1, 0],
    ],
    dtype=np.int64,
)
PAIRING_PAIRS = (((0, 1), (2, 3)), ((0, 2), (1, 3)), ((0, 3), (1, 2)))

LINK_STEP = {"h": (1, 0), "v": (0, 1)}


@dataclass(frozen=True)
class Loop:
    links: Tuple[LinkIndex, ...]
    winding: Tuple[int, int]

    @property
    def length(self) -> int:
        return len(self.links)


def crystal_pairings(g: LatticeGeometry, variant: str = "A") -> np.ndarray:
    """Per-site pairing ids of the alternating-plaquette crystal.

    Variant "A" makes plaquettes with x+y even elementary loops, "B" the others.
    """
    if variant not in ("A", "B"):
        raise ConfigError(f"crystal variant must be 'A' or 'B', got {variant!r}", module="lattice")
    parity = np.array([(s % g.Lx + s // g.Lx) % 2 for s in range(g.n_sites)])
    if variant == "B":
        parity = 1 - parity
    return np.where(parity == 0, 0, 2).astype(np.int64)


def trace_loops(g: LatticeGeometry, pairings) -> List[Loop]:
    """Follow per-site pairings into closed loops; every link ends up in exactly one loop."""
    pairings = np.asarray(pairings, dtype=np.int64)
    if pairings.shape != (g.n_sites,) or pairings.min() < 0 or pairings.max() > 2:
        raise ConfigError("pairings must hold one id in {0, 1, 2} per site", module="lattice")
    seen = np.zeros(g.n_links, dtype=bool)
    loops: List[Loop] = []
    for start in range(g.n_links):
        if seen[start]:
            continue
        links = []
        wx = wy = 0
        link, end = start, 1  # leave through the head
        while True:
            seen[link] = True
            links.append(link)
            _, _, direction = g.link_coords(link)
            dx, dy = LINK_STEP[direction]
            sign = 1 if end == 1 else -1
            wx += sign * dx
            wy += sign * dy
            site = int(g.link_endpoints[link][end])
            leg = int(g.link_legs[link][end])
            out_leg = int(PAIRING_PARTNERS[pairings[site], leg])
            nxt = int(g.star_table[site][out_leg])
            # Enter nxt at this site; leave through its other end.
            if g.link_endpoints[nxt][0] == site and g.link_legs[nxt][0] == out_leg:
                end = 1
            else:
                end = 0
            if nxt == start and end == 1:
                break
            link = nxt
        loops.append(Loop(tuple(links), (wx // g.Lx, wy // g.Ly)))
    logger.debug(f"Traced {len(loops)} loops on {g.Lx}x{g.Ly} lattice")
    return loops
