"""
JSON input readers and canonical report writers.

Input files are UTF-8 JSON with the field names of the documented schemas.
Reports are written canonically (sorted keys, 2-space indent, non-finite
floats as the strings "inf", "-inf" and "nan") so identical analyses
produce identical bytes.
"""

import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, Union

import numpy as np

from src.algorithms.value_methods import FeatureMap, make_feature_map
from src.mdp.model import Mdp, Policy, validate_mdp, validate_policy
from src.utils.errors import MalformedInput, ShapeMismatch, UnknownField

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def read_json(path: PathLike) -> Any:
    """
    Parse a JSON file.

    Raises:
        MalformedInput: the file is missing, unreadable or not valid JSON
    """
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise MalformedInput(f"input file not found: {path}") from e
    except (OSError, UnicodeDecodeError) as e:
        raise MalformedInput(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise MalformedInput(
            f"{path} is not valid JSON", [f"line {e.lineno}, column {e.colno}: {e.msg}"]
        ) from e


def load_mdp(path: PathLike) -> Mdp:
    return validate_mdp(read_json(path))


def load_policy(path: PathLike, n: int, l: int) -> Policy:  # noqa: E741
    return validate_policy(read_json(path), n, l)


def load_features(path: PathLike, n: int) -> FeatureMap:
    """Read {"phi": [[d reals] per state]} and check full column rank."""
    raw = read_json(path)
    if not isinstance(raw, dict):
        raise ShapeMismatch("features data must be a JSON object")
    unknown = sorted(set(raw) - {"phi"})
    if unknown:
        raise UnknownField(f"unknown feature fields: {', '.join(unknown)}", unknown)
    if "phi" not in raw:
        raise ShapeMismatch("missing feature field: phi")
    try:
        phi = np.asarray(raw["phi"], dtype=float)
    except (TypeError, ValueError) as e:
        raise ShapeMismatch(f"phi has the wrong type: {e}") from e
    return make_feature_map(phi, n)


def load_vector(path: PathLike, n: int, key: str = "j0") -> np.ndarray:
    """Read a length-n vector given either as a bare list or as {key: [...]}."""
    raw = read_json(path)
    if isinstance(raw, dict):
        unknown = sorted(set(raw) - {key})
        if unknown:
            raise UnknownField(f"unknown fields: {', '.join(unknown)}", unknown)
        raw = raw.get(key)
    try:
        vec = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as e:
        raise ShapeMismatch(f"{key} has the wrong type: {e}") from e
    if vec.shape != (n,):
        raise ShapeMismatch(f"{key} has shape {vec.shape}, expected ({n},)")
    if not np.all(np.isfinite(vec)):
        raise ShapeMismatch(f"{key} contains non-finite entries")
    return vec


def input_digest(paths: Iterable[PathLike]) -> str:
    """
    sha256 over the raw bytes of the input files, in argument order.

    Raises:
        MalformedInput: an input file is missing or unreadable
    """
    h = hashlib.sha256()
    for path in paths:
        try:
            h.update(Path(path).read_bytes())
        except OSError as e:
            raise MalformedInput(f"cannot read {path}: {e}") from e
    return "sha256:" + h.hexdigest()


def to_jsonable(value: Any) -> Any:
    """Convert numpy values and non-finite floats into plain JSON values."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return value


def canonical_json(value: Any) -> str:
    return json.dumps(to_jsonable(value), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(value: Any, path: PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(value), encoding="utf-8")
    logger.info("Wrote %s", path)


def write_input(value: Dict[str, Any], path: PathLike) -> None:
    """Write an input document (MDP, policy or features) as plain JSON."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(value, indent=2) + "\n", encoding="utf-8")
