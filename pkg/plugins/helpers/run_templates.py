import copy
from typing import Any, Dict, List, Optional

# Default run documents per laboratory command.
RUN_TEMPLATES: Dict[str, Dict[str, Any]] = {
    "symmetry": {
        "command": "symmetry",
        "params": {"diagonal_right": True},
        "output": {"format": "csv"},
    },
    "classical": {
        "command": "classical",
        "geometry": {"Lx": 4, "Ly": 4},
        "params": {"J": 1.0, "n_samples": 100000, "n_tether": 1000, "n_steps": 64, "variant": "A"},
        "seed": 7,
        "output": {"format": "csv"},
    },
    "loops": {
        "command": "loops",
        "geometry": {"Lx": 4, "Ly": 4},
        "params": {"lam": 1.0, "fugacity_p": [3, 4], "fugacity_K": [25.0, 100.0, 400.0]},
        "seed": 7,
        "output": {"format": "csv"},
    },
    "mc": {
        "command": "mc",
        "geometry": {"Lx": 4, "Ly": 4},
        "params": {"K_eff": 100.0, "steps": 4000, "n_chains": 4, "init": "random"},
        "seed": 7,
        "output": {"format": "csv"},
    },
    "ed": {
        "command": "ed",
        "geometry": {"Lx": 2, "Ly": 2},
        "params": {"lambda_J": 1.0, "lambda_flip": 1.0, "n_low": 16},
        "output": {"format": "csv"},
    },
    "wxy": {
        "command": "wxy",
        "geometry": {"Lx": 2, "Ly": 2},
        "params": {"J": 1.0, "h_mu": 0.1, "h_sigma": 0.1, "cluster": "single", "n_low": 16},
        "output": {"format": "csv"},
    },
    "wkb": {
        "command": "wkb",
        "params": {"J": 1.0, "k": 1.0, "K_wkb": 1.0, "jc_min": 10.0, "jc_max": 10000.0, "n_points": 31},
        "output": {"format": "csv"},
    },
    "circuit": {
        "command": "circuit",
        "params": {"J_w": 1.0, "d_J": 0.1, "e_LJ": 0.01, "n_draws": 1000},
        "seed": 7,
        "output": {"format": "csv"},
    },
}

# Result tables written by each command.
COMMAND_TABLES: Dict[str, List[str]] = {
    "symmetry": ["automorphisms", "flat_band"],
    "classical": ["flip_paths"],
    "loops": ["loop_histogram", "fugacity"],
    "mc": ["mc_chains", "mc_series"],
    "ed": ["spectrum"],
    "wxy": ["wxy_spectrum"],
    "wkb": ["wkb"],
    "circuit": ["squid_fourier", "calibration", "capacitance_matrix"],
}


def build_run_config(command: str, settings: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """
    Build the run document for one command from its template and the DAG settings.

    Args:
        command: Laboratory command
        settings: The `cgs_lab_config` variable (geometry, seeds and params overrides per command)

    Returns:
        Run configuration document

    Raises:
        ValueError: For an unknown command
    """
    if command not in RUN_TEMPLATES:
        raise ValueError(f"Unknown laboratory command: {command}")
    settings = settings or {}
    config = copy.deepcopy(RUN_TEMPLATES[command])

    geometry = settings.get("geometry", {}).get(command)
    if geometry is not None and "geometry" in config:
        config["geometry"] = {"Lx": int(geometry[0]), "Ly": int(geometry[1])}
    seeds = settings.get("seeds", {})
    if command in seeds:
        config["seed"] = int(seeds[command])
    config["params"].update(settings.get("params", {}).get(command, {}))
    return config
