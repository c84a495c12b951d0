"""
Plain-text experiment files.

One `key = value` per line, `#` starts a comment. Matrices are inline and
row-major with rows split by `;`, and list-valued keys either repeat or take a
comma list:

    dim = 2
    alpha = 0.75
    rho = -0.5
    p = 0.7
    beta = 1.0
    t0 = 4.0
    K = 8
    direction = 0.75 0.25 ; 0.25 0.5
    direction = 0.5 0.3 ; 0.5 0.3
    weight = 0.5
    weight = 0.5
    n_list = 64, 256, 1024, 4096
    replicas = 100000
    probe = one
    probe = coord:1
    seed = 7
"""

from logging import getLogger
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from stablelab.ensemble import DirectionSpec, EnsembleSpec
from stablelab.errors import UsageError
from stablelab.heavy_tail import SecondOrderTail
from stablelab.transfer import OperatorConfig
from stablelab.verification import ExperimentConfig, KernelSpec, Probe

logger = getLogger(__name__)

# Keys that may appear more than once; every other key must be unique.
REPEATABLE_KEYS = {"direction", "weight", "tail_weight", "probe"}

_RADIAL_KEYS = {"alpha", "rho", "p", "c", "beta", "t0"}
_KNOWN_KEYS = _RADIAL_KEYS | REPEATABLE_KEYS | {
    "dim",
    "K",
    "switch_threshold",
    "direction_count",
    "K_prime",
    "direction_seed",
    "drift_samples",
    "x0",
    "n_list",
    "t_list",
    "s_grid",
    "y_grid",
    "replicas",
    "kernel",
    "kernel_width",
    "resolution",
    "mc_samples",
    "method",
    "seed",
}

RawConfig = dict[str, list[str]]


def parse_text(text: str, origin: str = "<string>") -> RawConfig:
    """
    Split experiment-file text into key -> list of raw values.

    Raises:
        UsageError: On malformed lines, unknown keys, or repeated unique keys
    """
    raw: RawConfig = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            raise UsageError(f"{origin}:{lineno}: expected 'key = value', got {line!r}")
        if key not in _KNOWN_KEYS:
            raise UsageError(f"{origin}:{lineno}: unknown key {key!r}")
        if key in raw and key not in REPEATABLE_KEYS:
            raise UsageError(f"{origin}:{lineno}: key {key!r} given more than once")
        raw.setdefault(key, []).append(value)
    return raw


def load_raw(path: Path) -> RawConfig:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    return parse_text(path.read_text(encoding="utf-8"), str(path))


def _one(raw: RawConfig, key: str) -> str | None:
    values = raw.get(key)
    return values[0] if values else None


def _number(raw: RawConfig, key: str, kind: type = float) -> Any:
    value = _one(raw, key)
    if value is None:
        return None
    try:
        return kind(value)
    except ValueError:
        raise UsageError(f"{key} must be a {kind.__name__}, got {value!r}") from None


def _number_list(raw: RawConfig, key: str, kind: type = float) -> list | None:
    values = raw.get(key)
    if values is None:
        return None
    items = [item.strip() for value in values for item in value.split(",") if item.strip()]
    try:
        return [kind(item) for item in items]
    except ValueError:
        raise UsageError(f"{key} must be a comma list of {kind.__name__}s, got {values!r}") from None


def parse_matrix(text: str) -> list[list[float]]:
    """'a b ; c d' -> [[a, b], [c, d]]; rows must be square."""
    try:
        rows = [[float(x) for x in row.split()] for row in text.split(";")]
    except ValueError:
        raise UsageError(f"matrix entries must be numbers: {text!r}") from None
    if not rows or any(len(row) != len(rows) for row in rows):
        raise UsageError(f"matrix must be square with rows split by ';': {text!r}")
    return rows


def raw_alpha(raw: RawConfig) -> float:
    alpha = _number(raw, "alpha")
    if alpha is None:
        raise UsageError("missing required key 'alpha'")
    return alpha


def build_config(raw: RawConfig) -> ExperimentConfig:
    """
    Turn raw key-value pairs into a validated `ExperimentConfig`.

    Raises:
        UsageError: For missing keys or values pydantic rejects
        ConditionViolation: When the radial law violates Condition 4 (raised by
            `SecondOrderTail` itself and passed through unchanged)
    """
    for key in ("dim", "alpha", "rho", "p", "t0"):
        if key not in raw:
            raise UsageError(f"missing required key {key!r}")

    radial = {k: _number(raw, k) for k in _RADIAL_KEYS if k in raw}
    directions: dict[str, Any] = {}
    if "direction" in raw:
        directions["matrices"] = [parse_matrix(m) for m in raw["direction"]]
    for key, field in (("weight", "weights"), ("tail_weight", "tail_weights")):
        if key in raw:
            directions[field] = _number_list(raw, key)
    for key, field, kind in (
        ("switch_threshold", "switch_threshold", float),
        ("direction_count", "count", int),
        ("K_prime", "K_prime", float),
        ("direction_seed", "seed", int),
    ):
        if key in raw:
            directions[field] = _number(raw, key, kind)

    ensemble: dict[str, Any] = {"dim": _number(raw, "dim", int)}
    if "K" in raw:
        ensemble["K"] = _number(raw, "K")
    if "drift_samples" in raw:
        ensemble["drift_samples"] = _number(raw, "drift_samples", int)

    experiment: dict[str, Any] = {}
    for key, kind in (("n_list", int), ("t_list", float), ("s_grid", float), ("y_grid", float), ("x0", float)):
        values = _number_list(raw, key, kind)
        if values is not None:
            experiment[key] = tuple(values)
    for key in ("replicas", "seed"):
        if key in raw:
            experiment[key] = _number(raw, key, int)
    if "probe" in raw:
        try:
            experiment["probes"] = tuple(Probe.parse(p) for p in raw["probe"])
        except ValueError as e:
            raise UsageError(str(e)) from None

    kernel: dict[str, Any] = {}
    if "kernel" in raw:
        kernel["kind"] = _one(raw, "kernel")
    if "kernel_width" in raw:
        kernel["width"] = _number(raw, "kernel_width")
    operator: dict[str, Any] = {}
    for key in ("resolution", "mc_samples"):
        if key in raw:
            operator[key] = _number(raw, key, int)
    if "method" in raw:
        operator["method"] = _one(raw, "method")

    try:
        return ExperimentConfig(
            ensemble=EnsembleSpec(
                radial=SecondOrderTail(**radial), directions=DirectionSpec(**directions), **ensemble
            ),
            kernel=KernelSpec(**kernel),
            operator=OperatorConfig(**operator),
            **experiment,
        )
    except ValidationError as e:
        raise UsageError(f"invalid experiment config: {e}") from None


def load_config(path: Path) -> ExperimentConfig:
    config = build_config(load_raw(path))
    logger.info(f"Loaded experiment config from {path} (d={config.ensemble.dim})")
    return config
