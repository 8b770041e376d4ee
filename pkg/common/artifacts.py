"""
Data files and run manifests.

Data files hold numbers only, written with format(x, ".17g"), so identical
inputs give identical bytes. Timestamps and digests live in the JSON manifest
written next to each artifact as ``<stem>.manifest.json``.
"""
import csv
import hashlib
import logging
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

logger = logging.getLogger(__name__)

MANIFEST_SUFFIX = ".manifest.json"


class RunManifest(BaseModel):
    """Provenance record written next to every output set"""

    command: str = Field(..., description="CLI subcommand that produced the artifact")
    problem_digest: str = Field("", description="sha256 of the validated problem")
    parameters: Dict[str, Any] = Field(default_factory=dict, description="Resolved problem parameters")
    overrides: List[str] = Field(default_factory=list, description="--set overrides in the order applied")
    input_digests: Dict[str, str] = Field(default_factory=dict, description="sha256 of each input file")
    outputs: List[str] = Field(default_factory=list, description="Files written by the run")
    steps: Optional[int] = Field(None, description="Time steps taken")
    wall_seconds: Optional[float] = Field(None, description="Wall-clock duration")
    created_at: str = Field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat(), description="UTC creation time"
    )


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    if value is None:
        return ""
    return format(float(value), ".17g")


def ensure_dir(path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Write a header line plus formatted rows with Unix line endings"""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(value) for value in row])
    logger.info(f"Wrote {path}")
    return path


def read_csv(path) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def read_csv_columns(path, required: Sequence[str] = ()) -> Dict[str, np.ndarray]:
    """
    Numeric columns of a CSV file keyed by header name.

    Raises:
        ValueError: a required column is missing or a cell is not numeric
    """
    rows = read_csv(path)
    if not rows:
        raise ValueError(f"{path} has no data rows")
    missing = [name for name in required if name not in rows[0]]
    if missing:
        raise ValueError(f"{path} lacks columns: {', '.join(missing)}")
    return {name: np.array([float(row[name]) for row in rows]) for name in rows[0]}


def write_vector(path, values: Iterable[float]) -> Path:
    """One value per line"""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as handle:
        for value in values:
            handle.write(format_value(value) + "\n")
    logger.info(f"Wrote {path}")
    return path


def read_vector(path) -> np.ndarray:
    """
    Raises:
        ValueError: a line is not a number
    """
    values = []
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                values.append(float(text))
            except ValueError:
                raise ValueError(f"{path}:{number}: not a number: {text!r}")
    return np.array(values)


def file_digest(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def manifest_path(artifact) -> Path:
    """``dir/name.csv`` -> ``dir/name.manifest.json``"""
    artifact = Path(artifact)
    return artifact.with_name(artifact.stem + MANIFEST_SUFFIX)


def write_manifest(artifact, manifest: RunManifest) -> Path:
    path = manifest_path(artifact)
    path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def load_manifest(artifact) -> Optional[RunManifest]:
    """Manifest next to an artifact, or None when there is none"""
    path = manifest_path(artifact)
    if not os.path.exists(path):
        logger.warning(f"No manifest next to {artifact}")
        return None
    return RunManifest.model_validate_json(path.read_text(encoding="utf-8"))
