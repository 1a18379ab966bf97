import logging
import os
from typing import Any, Callable, Dict, Tuple

import numpy as np
import pandas as pd
import pandera as pa

from .loaders import file_digest
from .loop_model import ACCEPTANCE_WINDOW

logger = logging.getLogger(__name__)


# Schemas for every emitted table

def get_automorphisms_schema() -> pa.DataFrameSchema:
    return pa.DataFrameSchema({
        'index': pa.Column(pa.Int, pa.Check.ge(0)),
        'left_permutation': pa.Column(pa.String),
        'left_signs': pa.Column(pa.String),
        'right_permutation': pa.Column(pa.String),
        'right_signs': pa.Column(pa.String),
        'flipped_legs': pa.Column(pa.String, nullable=True),
        'verified': pa.Column(pa.Bool),
    }, coerce=True)


def get_flat_band_schema() -> pa.DataFrameSchema:
    return pa.DataFrameSchema({
        'eigenvalue': pa.Column(pa.Float),
        'multiplicity': pa.Column(pa.Int, pa.Check.ge(1)),
    }, coerce=True)


def get_flip_paths_schema() -> pa.DataFrameSchema:
    return pa.DataFrameSchema({
        'path': pa.Column(pa.String, pa.Check.isin(['type_a', 'type_b', 'naive'])),
        'plaquette': pa.Column(pa.Int, pa.Check.ge(0)),
        'step': pa.Column(pa.Int, pa.Check.ge(0)),
        'segment': pa.Column(pa.String),
        'delta_theta': pa.Column(pa.Float),
        'energy': pa.Column(pa.Float),
        'excursion': pa.Column(pa.Float),
    }, coerce=True)


def get_loop_histogram_schema() -> pa.DataFrameSchema:
    return pa.DataFrameSchema({
        'n_loops': pa.Column(pa.Int, pa.Check.ge(1), unique=True),
        'count': pa.Column(pa.Int, pa.Check.ge(1)),
        'contractible': pa.Column(pa.Int, pa.Check.ge(0)),
        'winding': pa.Column(pa.Int, pa.Check.ge(0)),
    }, coerce=True)


def get_fugacity_schema() -> pa.DataFrameSchema:
    return pa.DataFrameSchema({
        'p': pa.Column(pa.Int, pa.Check.ge(3)),
        'K': pa.Column(pa.Float, pa.Check.ge(0)),
        'method': pa.Column(pa.String, pa.Check.isin(['trapezoid', 'bessel', 'monte_carlo'])),
        'value': pa.Column(pa.Float, pa.Check.gt(0)),
        'error': pa.Column(pa.Float, pa.Check.ge(0)),
        'ratio_to_asymptote': pa.Column(pa.Float, nullable=True),
        'ratio_to_gaussian': pa.Column(pa.Float, nullable=True),
        'fugacity': pa.Column(pa.Float, pa.Check.ge(0)),
        'fugacity_mod_pi': pa.Column(pa.Float, pa.Check.ge(0)),
    }, coerce=True)


def get_mc_chains_schema() -> pa.DataFrameSchema:
    return pa.DataFrameSchema({
        'chain': pa.Column(pa.Int, pa.Check.ge(0), unique=True),
        'K_eff': pa.Column(pa.Float, pa.Check.ge(0)),
        'mean_loop_length': pa.Column(pa.Float, pa.Check.ge(2)),
        'mean_loop_length_sigma': pa.Column(pa.Float, pa.Check.ge(0)),
        'n_loops': pa.Column(pa.Float, pa.Check.gt(0)),
        'far_correlator': pa.Column(pa.Float, pa.Check.in_range(-1, 1)),
        'far_correlator_sigma': pa.Column(pa.Float, pa.Check.ge(0)),
        'acceptance_link': pa.Column(pa.Float, pa.Check.in_range(0, 1), nullable=True),
        'acceptance_plaquette': pa.Column(pa.Float, pa.Check.in_range(0, 1), nullable=True),
        'off_manifold_fraction': pa.Column(pa.Float, pa.Check.in_range(0, 1)),
    }, coerce=True)


def get_mc_series_schema() -> pa.DataFrameSchema:
    return pa.DataFrameSchema({
        'chain': pa.Column(pa.Int, pa.Check.ge(0)),
        'sample': pa.Column(pa.Int, pa.Check.ge(0)),
        'n_loops': pa.Column(pa.Int, pa.Check.ge(1)),
    }, coerce=True)


def get_spectrum_schema() -> pa.DataFrameSchema:
    return pa.DataFrameSchema({
        'index': pa.Column(pa.Int, pa.Check.ge(0), unique=True),
        'energy': pa.Column(pa.Float),
        'oracle_energy': pa.Column(pa.Float, nullable=True, required=False),
    }, coerce=True)


def get_wkb_schema() -> pa.DataFrameSchema:
    return pa.DataFrameSchema({
        'JC': pa.Column(pa.Float, pa.Check.gt(0)),
        'lambda_flip': pa.Column(pa.Float, pa.Check.ge(0)),
        'plasma_frequency': pa.Column(pa.Float, pa.Check.gt(0)),
    }, coerce=True)


def get_squid_fourier_schema() -> pa.DataFrameSchema:
    return pa.DataFrameSchema({
        'harmonic': pa.Column(pa.Int, pa.Check.ge(0), unique=True),
        'cos': pa.Column(pa.Float),
        'sin': pa.Column(pa.Float),
        'series_cos': pa.Column(pa.Float, nullable=True),
        'series_sin': pa.Column(pa.Float, nullable=True),
    }, coerce=True)


def get_calibration_schema() -> pa.DataFrameSchema:
    return pa.DataFrameSchema({
        'junction': pa.Column(pa.String, unique=True),
        'sign': pa.Column(pa.Int, pa.Check.isin([-1, 1])),
        'J_target': pa.Column(pa.Float, pa.Check.gt(0)),
        'J_w': pa.Column(pa.Float, pa.Check.gt(0)),
        'J_t': pa.Column(pa.Float, pa.Check.ge(0)),
        'Phi_w': pa.Column(pa.Float, pa.Check.in_range(-0.5, 0.5)),
        'Phi_t': pa.Column(pa.Float, pa.Check.in_range(-0.5, 0.5)),
        'J_eff': pa.Column(pa.Float, pa.Check.gt(0)),
        'Phi_tot': pa.Column(pa.Float, pa.Check.in_range(-0.5, 0.5)),
        'relative_error': pa.Column(pa.Float, pa.Check.ge(0)),
        'offset_error': pa.Column(pa.Float, pa.Check.ge(0)),
        'feasibility_bound': pa.Column(pa.Float, pa.Check.ge(0)),
    }, coerce=True)


def get_capacitance_matrix_schema() -> pa.DataFrameSchema:
    wires = ['m1', 'm2', 'm3', 'm4', 'g1', 'g2', 'g3', 'g4']
    columns = {'wire': pa.Column(pa.String, pa.Check.isin(wires), unique=True)}
    columns.update({wire: pa.Column(pa.Float) for wire in wires})
    return pa.DataFrameSchema(columns, coerce=True)


TABLE_SCHEMAS: Dict[str, Callable[[], pa.DataFrameSchema]] = {
    'automorphisms': get_automorphisms_schema,
    'flat_band': get_flat_band_schema,
    'flip_paths': get_flip_paths_schema,
    'loop_histogram': get_loop_histogram_schema,
    'fugacity': get_fugacity_schema,
    'mc_chains': get_mc_chains_schema,
    'mc_series': get_mc_series_schema,
    'spectrum': get_spectrum_schema,
    'wxy_spectrum': get_spectrum_schema,
    'wkb': get_wkb_schema,
    'squid_fourier': get_squid_fourier_schema,
    'calibration': get_calibration_schema,
    'capacitance_matrix': get_capacitance_matrix_schema,
}


# Table-specific consistency checks. Each appends to the results dict.

def _check_automorphisms(df: pd.DataFrame, results: Dict[str, Any], **kwargs):
    unverified = int((~df['verified'].astype(bool)).sum())
    if unverified:
        results['errors'].append(f"{unverified} automorphism pairs fail L^-1 W R = W")
    results['metrics']['n_pairs'] = len(df)


def _check_flip_paths(df: pd.DataFrame, results: Dict[str, Any], excursion_tol: float = 1e-9, **kwargs):
    for path, group in df.groupby('path'):
        scale = max(1.0, float(np.abs(group['energy']).max()))
        excursion = float(group['excursion'].max())
        results['metrics'][f'{path}_max_excursion'] = excursion
        if path in ('type_a', 'type_b') and excursion > excursion_tol * scale:
            results['errors'].append(f"{path} flip path leaves the ground manifold by {excursion:.3e}")
    if 'naive' in set(df['path']) and results['metrics'].get('naive_max_excursion', 0.0) <= 0:
        results['warnings'].append("naive flip path shows no barrier")


def _check_loop_histogram(df: pd.DataFrame, results: Dict[str, Any], **kwargs):
    mismatch = df[df['count'] != df['contractible'] + df['winding']]
    if not mismatch.empty:
        results['errors'].append(f"sector counts do not add up for n_loops {mismatch['n_loops'].tolist()}")
    results['metrics']['n_coverings'] = int(df['count'].sum())
    results['metrics']['max_loops'] = int(df['n_loops'].max())


def _check_fugacity(df: pd.DataFrame, results: Dict[str, Any], gaussian_tol: float = 0.03, **kwargs):
    stiff = df[(df['K'] >= 100) & df['ratio_to_gaussian'].notna()]
    off = stiff[(stiff['ratio_to_gaussian'] - 1).abs() > gaussian_tol]
    for _, row in off.iterrows():
        results['warnings'].append(
            f"p={row['p']} K={row['K']}: ratio to the Gaussian ring form {row['ratio_to_gaussian']:.4f}"
        )


def _check_mc_chains(df: pd.DataFrame, results: Dict[str, Any], **kwargs):
    low, high = ACCEPTANCE_WINDOW
    for column in ('acceptance_link', 'acceptance_plaquette'):
        rates = df[column].dropna()
        outside = rates[(rates < low) | (rates > high)]
        if not outside.empty:
            results['warnings'].append(f"{column} outside [{low}, {high}] on {len(outside)} chain(s)")
    results['metrics']['mean_loop_length'] = float(df['mean_loop_length'].mean())


def _check_spectrum(df: pd.DataFrame, results: Dict[str, Any], oracle_tol: float = 1e-10, **kwargs):
    energies = df.sort_values('index')['energy'].to_numpy()
    if np.any(np.diff(energies) < -1e-12):
        results['errors'].append("spectrum is not sorted ascending")
    if 'oracle_energy' in df.columns and df['oracle_energy'].notna().any():
        deviation = np.abs(df['energy'] - df['oracle_energy'])
        results['metrics']['max_oracle_deviation'] = float(deviation.max())
        if deviation.iloc[0] > oracle_tol:
            results['errors'].append(f"ground energy differs from the stabilizer oracle by {deviation.iloc[0]:.3e}")
        elif deviation.max() > oracle_tol:
            # iterative solvers resolve one vector per distinct level
            results['warnings'].append(f"excited levels differ from the oracle by up to {deviation.max():.3e}")
    results['metrics']['ground_energy'] = float(energies[0])


def _check_calibration(df: pd.DataFrame, results: Dict[str, Any], calibration_tol: float = 1e-10, **kwargs):
    worst = float(df['relative_error'].max())
    offset = float(df['offset_error'].max())
    results['metrics'].update({'max_relative_error': worst, 'max_offset_error': offset})
    if worst > calibration_tol:
        results['errors'].append(f"calibrated coupling misses its target by {worst:.3e} (relative)")
    if offset > calibration_tol:
        results['errors'].append(f"calibrated phase offset misses 0 or pi by {offset:.3e} flux quanta")


def _check_capacitance_matrix(df: pd.DataFrame, results: Dict[str, Any], **kwargs):
    matrix = df.drop(columns=['wire']).to_numpy(dtype=float)
    scale = float(np.abs(matrix).max()) or 1.0
    if not np.allclose(matrix, matrix.T, rtol=0, atol=1e-12 * scale):
        results['errors'].append("capacitance matrix is not symmetric")
        return
    smallest = float(np.linalg.eigvalsh(matrix).min())
    results['metrics']['min_eigenvalue'] = smallest
    if smallest < -1e-12 * scale:
        results['warnings'].append(f"capacitance matrix has a negative eigenvalue {smallest:.3e}")


TABLE_CHECKS: Dict[str, Callable[..., None]] = {
    'automorphisms': _check_automorphisms,
    'flip_paths': _check_flip_paths,
    'loop_histogram': _check_loop_histogram,
    'fugacity': _check_fugacity,
    'mc_chains': _check_mc_chains,
    'spectrum': _check_spectrum,
    'wxy_spectrum': _check_spectrum,
    'calibration': _check_calibration,
    'capacitance_matrix': _check_capacitance_matrix,
}


def validate_result_table(df: pd.DataFrame, table: str = None, **kwargs) -> Tuple[bool, Dict[str, Any]]:
    """
    Validate one emitted result table.

    Args:
        df: DataFrame to validate
        table: Table name (selects the schema and consistency checks)
        **kwargs: Tolerances forwarded to the table checks

    Returns:
        Tuple of (is_valid, validation_results)
    """
    validation_results = {
        'passed': True,
        'errors': [],
        'warnings': [],
        'metrics': {}
    }

    try:
        if table not in TABLE_SCHEMAS:
            validation_results['passed'] = False
            validation_results['errors'].append(f"Unknown result table: {table}")
            return False, validation_results

        if df.empty and table != 'flat_band':
            validation_results['passed'] = False
            validation_results['errors'].append("DataFrame is empty")
            return False, validation_results

        frame = df.drop(columns=['run_id']) if 'run_id' in df.columns else df
        try:
            frame = TABLE_SCHEMAS[table]().validate(frame)
        except pa.errors.SchemaError as e:
            validation_results['passed'] = False
            validation_results['errors'].append(f"Schema validation failed: {str(e)}")
            return False, validation_results

        if 'run_id' in df.columns and df['run_id'].nunique() != 1:
            validation_results['errors'].append("Table mixes rows from several runs")

        validation_results['metrics']['record_count'] = len(frame)
        check = TABLE_CHECKS.get(table)
        if check is not None and not frame.empty:
            check(frame, validation_results, **kwargs)

        if validation_results['errors']:
            validation_results['passed'] = False
        return validation_results['passed'], validation_results

    except Exception as e:
        validation_results['passed'] = False
        validation_results['errors'].append(f"Validation error: {str(e)}")
        return False, validation_results


def validate_manifest(manifest: Dict[str, Any], out_dir: str = None) -> Tuple[bool, Dict[str, Any]]:
    """
    Validate a run manifest: required fields present and every listed file digest reproducible.

    Args:
        manifest: Manifest document
        out_dir: Directory holding the result files (digests are checked when given)

    Returns:
        Tuple of (is_valid, validation_results)
    """
    validation_results = {
        'passed': True,
        'errors': [],
        'warnings': [],
        'metrics': {}
    }

    try:
        required = ['run_id', 'config', 'artifact_version', 'timestamp', 'seed', 'task_seconds', 'files']
        missing = [key for key in required if key not in manifest]
        if missing:
            validation_results['passed'] = False
            validation_results['errors'].append(f"Manifest is missing fields: {missing}")
            return False, validation_results

        validation_results['metrics'] = {
            'file_count': len(manifest['files']),
            'total_seconds': float(sum(manifest['task_seconds'].values())),
        }
        if out_dir is not None:
            for name, digest in manifest['files'].items():
                path = os.path.join(out_dir, name)
                if not os.path.exists(path):
                    validation_results['errors'].append(f"Result file missing: {name}")
                elif file_digest(path) != digest:
                    validation_results['errors'].append(f"Digest mismatch for {name}")

        if validation_results['errors']:
            validation_results['passed'] = False
        return validation_results['passed'], validation_results

    except Exception as e:
        validation_results['passed'] = False
        validation_results['errors'].append(f"Manifest validation error: {str(e)}")
        return False, validation_results
