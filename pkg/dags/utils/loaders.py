import hashlib
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

ARTIFACT_VERSION = "1.0.0"


def run_id_for(config_document: Dict[str, Any]) -> str:
    """Deterministic run identifier: the first 16 hex digits of the canonical config digest."""
    canonical = json.dumps(config_document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def to_serializable(value: Any) -> Any:
    """
    Convert numpy scalars/arrays, tuples and non-finite floats into plain JSON values.

    NaN and infinities become None so the written documents stay strict JSON.
    """
    if isinstance(value, dict):
        return {str(k): to_serializable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_serializable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_serializable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, (np.complexfloating, complex)):
        return {"re": to_serializable(value.real), "im": to_serializable(value.imag)}
    if isinstance(value, pd.DataFrame):
        return to_serializable(value.to_dict(orient="records"))
    return value


def file_digest(path: str) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            sha.update(chunk)
    return sha.hexdigest()


def write_table(df: pd.DataFrame, path: str, run_id: str) -> str:
    """
    Write a result table as CSV with a leading run_id column.

    Args:
        df: Result table
        path: Target CSV path
        run_id: Manifest reference stamped on every row

    Returns:
        sha256 digest of the written file
    """
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    stamped = df.copy()
    stamped.insert(0, "run_id", run_id)
    stamped.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
    logger.info(f"Wrote {len(stamped)} rows to {path}")
    return file_digest(path)


def write_document(document: Dict[str, Any], path: str, run_id: Optional[str] = None) -> str:
    """
    Write a JSON document (sorted keys, two-space indent, strict JSON).

    Args:
        document: Structured result
        path: Target JSON path
        run_id: Manifest reference added under "run_id" when given

    Returns:
        sha256 digest of the written file
    """
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    payload = to_serializable(document)
    if run_id is not None:
        payload = dict(payload, run_id=run_id)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(payload, handle, sort_keys=True, indent=2, allow_nan=False)
        handle.write("\n")
    logger.info(f"Wrote document to {path}")
    return file_digest(path)


@dataclass
class RunManifest:
    run_id: str
    config: Dict[str, Any]
    seed: Optional[int]
    artifact_version: str = ARTIFACT_VERSION
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    task_seconds: Dict[str, float] = field(default_factory=dict)
    files: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return to_serializable(asdict(self))


def write_manifest(manifest: RunManifest, out_dir: str) -> str:
    """Write `{command}_manifest.json` next to the result files and return its path."""
    path = os.path.join(out_dir, f"{manifest.config['command']}_manifest.json")
    write_document(manifest.to_dict(), path)
    logger.info(f"Run {manifest.run_id}: manifest lists {len(manifest.files)} file(s)")
    return path


def read_manifest(path: str) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)
