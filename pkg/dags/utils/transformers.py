import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List

import numpy as np
import pandas as pd

from .circuit_realization import (
    SERIES_MAX_E_LJ,
    SiteCapacitances,
    SquidParams,
    build_capacitance_matrix,
    calibrate_fluxes,
    calibration_round_trip,
    circuit_report,
    compensating_parasitics,
    random_disorder,
    residual_scaling,
    squid_fourier_coefficients,
    squid_harmonic_expansion,
    symmetry_breaking_metric,
    WIRE_LABELS,
)
from .classical_energy import (
    CouplingParams,
    crystal_config,
    flip_path_energy,
    site_minimum_scan,
    tether_agreement,
)
from .effective_quantum import (
    StabilizerModelParams,
    WkbParams,
    build_effective_hamiltonian,
    check_conserved_plaquettes,
    commutator_norm,
    exact_diagonalize,
    group_levels,
    lambda_j_from_classical,
    plasma_frequency,
    scaling_probe,
    stabilizer_spectrum_oracle,
    total_sz_operator,
    wkb_flip_amplitude,
    wkb_turnover,
    wxy_cluster,
    wxy_hamiltonian,
)
from .errors import SizeGuardError
from .hadamard_symmetry import (
    REFERENCE_PAIR,
    REFERENCE_W,
    enumerate_automorphism_pairs,
    flat_band_spectrum,
    is_abelian,
    is_closed,
    is_hadamard,
    load_sign_matrix,
    serialize_pairs,
    serialize_sign_matrix,
    verify_automorphism,
)
from .lattice import build_lattice, crystal_pairings, trace_loops
from .loop_model import (
    count_z2_configs,
    fugacity_integral,
    joint_ground_state_count,
    loop_count_histogram,
    mc_sample_chains,
)
from .rng import stream
from .run_config import RunConfig

logger = logging.getLogger(__name__)


@dataclass
class LabResult:
    """Tables go to CSV, the document to JSON."""

    command: str
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    document: Dict[str, Any] = field(default_factory=dict)


def _signs(values) -> str:
    return " ".join(f"{int(v):+d}" for v in values)


def transform_symmetry(cfg: RunConfig, workers: int = 1) -> LabResult:
    """Automorphism group of the coupling matrix and the flat-band check."""
    p = cfg.params
    W = load_sign_matrix(p["W"]) if "W" in p else REFERENCE_W
    pairs = enumerate_automorphism_pairs(W, diagonal_right=p.get("diagonal_right", True))
    logger.info(f"Enumerated {len(pairs)} automorphism pairs")

    automorphisms = pd.DataFrame(
        {
            "index": range(len(pairs)),
            "left_permutation": [" ".join(str(k) for k in pair.left.permutation) for pair in pairs],
            "left_signs": [_signs(pair.left.signs) for pair in pairs],
            "right_permutation": [" ".join(str(k) for k in pair.right.permutation) for pair in pairs],
            "right_signs": [_signs(pair.right.signs) for pair in pairs],
            "flipped_legs": [" ".join(str(k) for k in pair.flipped_legs) for pair in pairs],
            "verified": [verify_automorphism(W, pair) for pair in pairs],
        }
    )
    hadamard = is_hadamard(W)
    spectrum = flat_band_spectrum(W) if hadamard else []
    flat_band = pd.DataFrame(spectrum, columns=["eigenvalue", "multiplicity"])

    document = {
        "W": serialize_sign_matrix(W),
        "is_hadamard": hadamard,
        "n_pairs": len(pairs),
        "is_closed": is_closed(pairs),
        "is_abelian": is_abelian(pairs),
        "contains_reference_pair": REFERENCE_PAIR in pairs,
        "reference_pair": REFERENCE_PAIR.to_dict(),
        "automorphisms": serialize_pairs(pairs),
        "flat_band": [{"eigenvalue": e, "multiplicity": m} for e, m in spectrum],
    }
    return LabResult("symmetry", {"automorphisms": automorphisms, "flat_band": flat_band}, document)


def _plaquette_of_type(g, even: bool) -> int:
    for p in range(g.n_plaquettes):
        x, y = g.plaquette_coords(p)
        if ((x + y) % 2 == 0) == even:
            return p
    raise SizeGuardError("lattice has no plaquette of the requested type", module="classical_energy")


def transform_classical(cfg: RunConfig, workers: int = 1) -> LabResult:
    """Site minimum bound, tethering cross-check and plaquette flip paths on a crystal ground state."""
    p = cfg.params
    g = build_lattice(*cfg.geometry)
    params = CouplingParams(p["J"])
    seed = cfg.effective_seed

    scan = site_minimum_scan(p["n_samples"], seed, params)
    tether = tether_agreement(p["n_tether"], seed, params) if p["n_tether"] else None

    variant = p["variant"]
    n_loops = len(trace_loops(g, crystal_pairings(g, variant)))
    phases = stream(seed, 2).uniform(0, 2 * np.pi, size=n_loops)
    config = crystal_config(g, variant, phases, params)
    elementary = _plaquette_of_type(g, variant == "A")
    merged = _plaquette_of_type(g, variant != "A")

    rows: List[Dict[str, Any]] = []
    paths = {}
    for kind, plaquette in (("type_a", elementary), ("type_b", merged), ("naive", merged)):
        scan_result = flip_path_energy(config, plaquette, kind, p["n_steps"], params)
        start = float(scan_result.energies[0])
        for record in scan_result.to_records():
            rows.append({"path": kind, "plaquette": plaquette, **record, "excursion": record["energy"] - start})
        paths[kind] = {
            "plaquette": plaquette,
            "max_excursion": scan_result.max_excursion,
            "final_matches_flip": scan_result.final_matches_flip,
        }
        logger.info(f"{kind} path on plaquette {plaquette}: max excursion {scan_result.max_excursion:.3e}")

    lone_flip = lambda_j_from_classical(params.J)
    document = {
        "geometry": g.to_summary(),
        "J": params.J,
        "site_minimum": scan,
        "tethering": tether,
        "crystal_variant": variant,
        "paths": paths,
        # lambda_J is the full lone-flip cost, shared by the two defect stars
        "lone_flip_cost": lone_flip,
        "lambda_J": lone_flip,
        "star_defect_cost": lone_flip / 2,
    }
    return LabResult("classical", {"flip_paths": pd.DataFrame(rows)}, document)


def transform_loops(cfg: RunConfig, workers: int = 1) -> LabResult:
    """Exhaustive loop-covering statistics, Z2 counts and the ring fugacity integral."""
    p = cfg.params
    g = build_lattice(*cfg.geometry)
    enumeration = loop_count_histogram(g, max_argmax=p["max_argmax"])
    n_values = sorted(enumeration.histogram)
    sectors = enumeration.sector_histograms
    histogram = pd.DataFrame(
        {
            "n_loops": n_values,
            "count": [enumeration.histogram[n] for n in n_values],
            "contractible": [sectors.get("contractible", {}).get(n, 0) for n in n_values],
            "winding": [sectors.get("winding", {}).get(n, 0) for n in n_values],
        }
    )

    crystal_loops = {variant: len(trace_loops(g, crystal_pairings(g, variant))) for variant in ("A", "B")}
    try:
        joint = joint_ground_state_count(g, cfg.effective_seed)
    except SizeGuardError as e:
        logger.warning(f"skipping joint ground-state enumeration: {e}")
        joint = None

    fugacity_rows = []
    for ring in p["fugacity_p"]:
        for K in p["fugacity_K"]:
            result = fugacity_integral(ring, float(K), method=p["fugacity_method"], seed=cfg.seed)
            fugacity_rows.append(
                {
                    "p": result.p,
                    "K": result.K,
                    "method": result.method,
                    "value": result.value,
                    "error": result.error,
                    "ratio_to_asymptote": result.ratio_to_asymptote,
                    "ratio_to_gaussian": result.ratio_to_gaussian,
                    "fugacity": result.fugacity,
                    "fugacity_mod_pi": result.fugacity_mod_pi,
                }
            )

    document = {
        "geometry": g.to_summary(),
        "coverings": enumeration.to_dict(),
        "crystal_loops": crystal_loops,
        "crystal_is_argmax": max(crystal_loops.values()) == enumeration.max_loops,
        "z2_configs": count_z2_configs(g),
        "joint": joint,
        "lam": p["lam"],
        "partition_function": enumeration.partition_function(p["lam"]),
    }
    return LabResult("loops", {"loop_histogram": histogram, "fugacity": pd.DataFrame(fugacity_rows)}, document)


def transform_mc(cfg: RunConfig, workers: int = 1) -> LabResult:
    """Independent Metropolis chains; results depend on (seed, chain) only."""
    p = cfg.params
    g = build_lattice(*cfg.geometry)
    results = mc_sample_chains(
        g,
        n_chains=p["n_chains"],
        workers=workers,
        K_eff=p["K_eff"],
        mode=p["mode"],
        steps=p["steps"],
        seed=cfg.seed,
        burn_in=p.get("burn_in"),
        init=p["init"],
        step_width=p["step_width"],
        loop_moves=p["loop_moves"],
        J=p["J"],
    )
    chains = pd.DataFrame(
        [
            {
                "chain": r.chain,
                "K_eff": r.K_eff,
                "mean_loop_length": r.statistics.mean_loop_length,
                "mean_loop_length_sigma": r.mean_loop_length_sigma,
                "n_loops": r.statistics.n_loops,
                "far_correlator": r.far_correlator,
                "far_correlator_sigma": r.far_correlator_sigma,
                "acceptance_link": r.acceptance.get("link", np.nan),
                "acceptance_plaquette": r.acceptance.get("plaquette", np.nan),
                "off_manifold_fraction": r.off_manifold_fraction,
            }
            for r in results
        ]
    )
    series = pd.DataFrame(
        [
            {"chain": r.chain, "sample": k, "n_loops": int(n)}
            for r in results
            for k, n in enumerate(r.n_loops_series)
        ]
    )
    document = {
        "geometry": g.to_summary(),
        "chains": [r.summary() for r in results],
        "pooled_mean_loop_length": float(chains["mean_loop_length"].mean()),
        "pooled_far_correlator": float(chains["far_correlator"].mean()),
    }
    return LabResult("mc", {"mc_chains": chains, "mc_series": series}, document)


def transform_ed(cfg: RunConfig, workers: int = 1) -> LabResult:
    """Low-lying toric-code spectrum against the stabilizer oracle."""
    p = cfg.params
    g = build_lattice(*cfg.geometry)
    if p.get("lambda_flip_b") is not None:
        params = StabilizerModelParams.two_valued(g, p["lambda_J"], p["lambda_flip"], p["lambda_flip_b"])
    else:
        params = StabilizerModelParams(p["lambda_J"], p["lambda_flip"])
    H = build_effective_hamiltonian(g, params)
    n_low = min(p["n_low"], H.dimension)
    values = exact_diagonalize(H, n_low, method=p["method"], seed=cfg.effective_seed)

    levels = stabilizer_spectrum_oracle(g, params)
    oracle = np.repeat([e for e, _ in levels], [d for _, d in levels])
    spectrum = pd.DataFrame({"index": range(n_low), "energy": values, "oracle_energy": oracle[:n_low]})
    conserved = check_conserved_plaquettes(H, g)
    document = {
        "geometry": g.to_summary(),
        "lambda_J": params.lambda_J,
        "n_spins": H.n_spins,
        "dimension": H.dimension,
        "levels": [{"energy": e, "degeneracy": d} for e, d in group_levels(values)],
        "max_oracle_deviation": float(np.max(np.abs(values - oracle[:n_low]))),
        "conserved": conserved,
    }
    return LabResult("ed", {"spectrum": spectrum}, document)


def transform_wxy(cfg: RunConfig, workers: int = 1) -> LabResult:
    """Spin-1/2 array model: gauge generators and low-lying levels."""
    p = cfg.params
    if p["cluster"] == "single":
        cluster = wxy_cluster()
    else:
        cluster = wxy_cluster(build_lattice(*cfg.geometry), sites=[0, 1])
    H = wxy_hamiltonian(cluster, p["J"], p["h_mu"], p["h_sigma"])
    n_low = min(p["n_low"], H.dimension)
    values = exact_diagonalize(H, n_low, seed=cfg.effective_seed)
    document = {
        "cluster": {"sites": cluster.sites, "links": cluster.links, "n_spins": cluster.n_spins},
        "conserved": check_conserved_plaquettes(H, cluster),
        "total_sz_commutator": commutator_norm(H, total_sz_operator(cluster.n_spins)),
        "levels": [{"energy": e, "degeneracy": d} for e, d in group_levels(values)],
    }
    return LabResult("wxy", {"wxy_spectrum": pd.DataFrame({"index": range(n_low), "energy": values})}, document)


def transform_wkb(cfg: RunConfig, workers: int = 1) -> LabResult:
    """Flip amplitude against JC and the fitted exponent of the exponential."""
    p = cfg.params
    jc = np.geomspace(p["jc_min"], p["jc_max"], p["n_points"])
    amplitudes = [wkb_flip_amplitude(WkbParams(p["J"], value / p["J"], p["k"], p["K_wkb"])) for value in jc]
    table = pd.DataFrame(
        {
            "JC": jc,
            "lambda_flip": amplitudes,
            "plasma_frequency": [plasma_frequency(p["J"], value / p["J"]) for value in jc],
        }
    )
    probe = scaling_probe(jc, p["k"], p["K_wkb"], p["J"], amplitudes)
    document = {**probe, "turnover": wkb_turnover(WkbParams(p["J"], 1.0, p["k"], p["K_wkb"]))}
    return LabResult("wkb", {"wkb": table}, document)


def transform_circuit(cfg: RunConfig, workers: int = 1) -> LabResult:
    """SQUID potential series, flux calibration and the single-site capacitance matrix."""
    p = cfg.params
    seed = cfg.effective_seed
    squid = SquidParams(J_w=p["J_w"], J_t=p["d_J"] * p["J_w"], Phi_w=p["Phi_w"], Phi_t=p["Phi_t"], e_LJ=p["e_LJ"])
    sc = SiteCapacitances(**{key: p[key] for key in SiteCapacitances.__dataclass_fields__ if key in p})

    report = circuit_report(squid, sc, p["n_points"])
    fourier = squid_fourier_coefficients(squid, n_harmonics=4, n_points=p["n_points"])
    n_harmonics = len(fourier["cos"])
    if squid.e_LJ <= SERIES_MAX_E_LJ:
        series = squid_harmonic_expansion(squid).fourier()
    else:
        series = {"cos": [np.nan] * n_harmonics, "sin": [np.nan] * n_harmonics}
    fourier_table = pd.DataFrame(
        {
            "harmonic": range(n_harmonics),
            "cos": fourier["cos"],
            "sin": fourier["sin"],
            "series_cos": series["cos"][:n_harmonics],
            "series_sin": series["sin"][:n_harmonics],
        }
    )

    targets = {
        f"n{n}i{i}": (int(REFERENCE_W.entries[n][i]), p["J_w"]) for n in range(4) for i in range(4)
    }
    disorder = random_disorder(targets, p["d_J"], seed, p["disorder_fraction"])
    calibration = calibrate_fluxes(targets, disorder, p["d_J"])
    calibration_table = pd.DataFrame([c.to_dict() for c in calibration.values()])
    round_trip = (
        calibration_round_trip(targets, p["d_J"], p["n_draws"], seed + 1, p["disorder_fraction"])
        if p["n_draws"]
        else None
    )

    Cmat = build_capacitance_matrix(sc)
    capacitance = pd.DataFrame(Cmat, columns=list(WIRE_LABELS))
    capacitance.insert(0, "wire", list(WIRE_LABELS))
    symmetric, added = compensating_parasitics(sc)

    sample = SquidParams(J_w=p["J_w_kelvin"], J_t=p["d_J"] * p["J_w_kelvin"], L_arm=p["L_arm"], energy_unit="kelvin")
    document = {
        **report,
        "residual_scaling": residual_scaling(p["e_grid"], n_points=p["n_points"]),
        "calibration_round_trip": round_trip,
        "compensation": {"added": added, "symmetry_breaking_after": symmetry_breaking_metric(symmetric)},
        "e_LJ_sample": {"J_w_kelvin": p["J_w_kelvin"], "L_arm": p["L_arm"], "e_LJ": sample.e_LJ},
    }
    tables = {
        "squid_fourier": fourier_table,
        "calibration": calibration_table,
        "capacitance_matrix": capacitance,
    }
    return LabResult("circuit", tables, document)


COMMAND_HANDLERS: Dict[str, Callable[[RunConfig, int], LabResult]] = {
    "symmetry": transform_symmetry,
    "classical": transform_classical,
    "loops": transform_loops,
    "mc": transform_mc,
    "ed": transform_ed,
    "wxy": transform_wxy,
    "wkb": transform_wkb,
    "circuit": transform_circuit,
}
