"""
Report and trajectory writers
"""

import json
import logging
import os
from pathlib import Path

import numpy as np

# Get or create logger for this module
logger = logging.getLogger(__name__)
# Only set level if not already configured
if not logger.handlers:
    logger.setLevel(logging.INFO)


def to_jsonable(value):
    """
    Convert numpy containers and scalars to plain Python values

    Args:
        value: Any nesting of dicts, lists, tuples, numpy arrays and scalars

    Returns:
        A structure json.dumps accepts
    """
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def render_report(report):
    """
    Serialize a report deterministically

    Args:
        report (dict): Report tree

    Returns:
        str: JSON text with sorted keys, two-space indent and a final newline
    """
    return json.dumps(to_jsonable(report), sort_keys=True, indent=2) + '\n'


def write_report(report, path):
    """
    Write a report as JSON

    Args:
        report (dict): Report tree
        path (str): Destination file

    Returns:
        str: The path written
    """
    directory = os.path.dirname(path)
    if directory:
        Path(directory).mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as handle:
        handle.write(render_report(report))
    logger.info(f"Report written to {path}")
    return path


def write_trajectory(frame, path):
    """
    Write a trajectory table as CSV, or as Parquet for a .parquet path

    Args:
        frame (pd.DataFrame): Columns t, q*, p*, v*
        path (str): Destination file

    Returns:
        str: The path written
    """
    directory = os.path.dirname(path)
    if directory:
        Path(directory).mkdir(parents=True, exist_ok=True)
    if path.endswith('.parquet'):
        frame.to_parquet(path, engine='pyarrow', compression='snappy', index=False)
    else:
        frame.to_csv(path, index=False, lineterminator='\n')
    logger.info(f"Trajectory with {len(frame)} rows written to {path}")
    return path


def drift_path(out_path):
    """Companion path of the drift summary for a trajectory file"""
    return f"{out_path}.drift.json"
