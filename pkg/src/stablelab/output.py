"""CSV tables and the run manifest written next to them."""

import csv
import json
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from logging import getLogger
from pathlib import Path
from typing import Any, Iterable, Sequence

from pydantic import BaseModel, Field

from stablelab.executors._common import content_id, file_sha256

logger = getLogger(__name__)

MANIFEST_NAME = "manifest.json"

_VERSIONED_PACKAGES = ("matrix-stable-lab", "numpy", "scipy", "pydantic")


def package_versions() -> dict[str, str]:
    versions = {}
    for name in _VERSIONED_PACKAGES:
        try:
            versions[name] = version(name)
        except PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, complex):
        raise TypeError("complex values must be split into re/im columns before writing")
    if isinstance(value, float) or hasattr(value, "dtype") and value.dtype.kind == "f":
        return format(float(value), ".17g")
    return str(value)


def write_csv(
    path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]], *, comments: Sequence[str] = ()
) -> Path:
    """
    Write a UTF-8 CSV with a header row and '.' decimals (floats in round-trip `.17g`).

    `comments` become leading `# ` lines (operator snapshot metadata).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        for line in comments:
            f.write(f"# {line}\n")
        writer = csv.writer(f)
        writer.writerow(header)
        count = 0
        for row in rows:
            writer.writerow([_format(v) for v in row])
            count += 1
    logger.info(f"Wrote {count} row(s) to {path}")
    return path


def write_plot_data(
    path: Path, xs: Sequence[float], ys: Sequence[float], yerr: Sequence[float] | None = None
) -> Path:
    """(x, y, yerr) columns for plotting any table."""
    errs = yerr if yerr is not None else [0.0] * len(xs)
    return write_csv(path, ["x", "y", "yerr"], zip(xs, ys, errs))


class OutputRecord(BaseModel):
    path: str
    sha256: str


class RunManifest(BaseModel):
    """Provenance of one CLI run: inputs, resolved seed, outputs with content hashes, flags."""

    command: str
    config_path: str | None = None
    config_sha256: str | None = None
    seed: int
    seed_source: str = Field(..., description='"flag" | "env" | "config" | "default"')
    threads: int = 1
    replicas: int | None = None
    n_list: list[int] = Field(default_factory=list, description="Step counts simulated.")
    versions: dict[str, str] = Field(default_factory=package_versions)
    wall_seconds: float | None = None
    started_at: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    outputs: list[OutputRecord] = Field(default_factory=list)
    flags: dict[str, Any] = Field(default_factory=dict)
    results: dict[str, Any] = Field(default_factory=dict)
    status: str = "ok"

    @property
    def underpowered(self) -> bool:
        return bool(self.flags.get("underpowered", False))

    def add_output(self, path: Path) -> None:
        self.outputs.append(OutputRecord(path=str(path), sha256=file_sha256(Path(path))))

    def run_id(self) -> str:
        """Content id over the config hash, seed, and output hashes (independent of timestamps)."""
        return content_id(
            self.command,
            self.config_sha256 or "",
            str(self.seed),
            *(o.sha256 for o in self.outputs),
        )

    def write(self, out_dir: Path) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / MANIFEST_NAME
        data = self.model_dump(mode="json")
        data["run_id"] = self.run_id()
        path.write_text(json.dumps(data, indent=2, sort_keys=True), encoding="utf-8")
        return path
