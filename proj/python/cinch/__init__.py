"""Control stack for a two-motor drawstring gripper: codec, simulator, analysis."""

import json as _json

from ._core import (
    AnalysisError,
    ScenarioParseError,
    compute_threshold,
    crc16,
    decode_frames,
    encode_instruction,
    format_percent,
)
from . import _core

__all__ = [
    "AnalysisError",
    "ScenarioParseError",
    "compute_threshold",
    "crc16",
    "decode_frames",
    "encode_instruction",
    "format_percent",
    "rate_table",
    "run_batch",
    "run_scenario",
]


def run_scenario(path=None, *, text=None):
    """Run a scenario file (or YAML text). The telemetry log comes back as JSONL text."""
    if (path is None) == (text is None):
        raise TypeError("pass exactly one of path or text")
    raw = _core.run_scenario_file(str(path)) if path is not None else _core.run_scenario_text(text)
    return _json.loads(raw)


def run_batch(path, *, current_ma=None, current_cap_ma=None, damage_scale=1.0):
    return _json.loads(_core.run_batch(str(path), current_ma, current_cap_ma, damage_scale))


def rate_table(records):
    return _core.rate_table(_json.dumps(list(records)))
