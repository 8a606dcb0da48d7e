"""
Result files

CSV tables with a fixed 17-significant-digit format, JSON reports, gnuplot
data and scripts, and the staged artifact directory that only appears on
disk once a command has succeeded.
"""

from __future__ import annotations

import json
import logging
import math
import shutil
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.16e"
MANIFEST_NAME = "manifest.json"


def write_csv(frame: pd.DataFrame, path: str | Path) -> Path:
    """Write a table with a header row, '.' decimals and '\\n' line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def _plain(value: Any) -> Any:
    # numpy scalars, complex numbers and non-finite floats are not JSON
    if isinstance(value, dict):
        return {str(key): _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return [_plain(item) for item in value.tolist()]
    if isinstance(value, np.generic):
        return _plain(value.item())
    if isinstance(value, complex):
        return {"re": _plain(value.real), "im": _plain(value.imag)}
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(data: Any, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as f:
        json.dump(_plain(data), f, indent=2, sort_keys=False)
        f.write("\n")
    return path


def write_gnuplot(
    frame: pd.DataFrame,
    path: str | Path,
    *,
    x: str,
    y: str,
    group: Sequence[str],
    title: str = "",
) -> List[Path]:
    """
    Write a gnuplot data file with one block per group and a plotting script.

    Blocks are separated by two blank lines, so that the script addresses them
    with `index`.

    Returns:
        [data path, script path]
    """
    data_path = Path(path).with_suffix(".dat")
    script_path = data_path.with_suffix(".gp")
    data_path.parent.mkdir(parents=True, exist_ok=True)
    blocks = []
    labels = []
    for key, block in frame.groupby(list(group), sort=True):
        keys = key if isinstance(key, tuple) else (key,)
        label = " ".join(f"{name}={value}" for name, value in zip(group, keys))
        labels.append(label)
        rows = [f"# {label}", f"# {x} {y}"]
        rows += [
            f"{FLOAT_FORMAT % a} {FLOAT_FORMAT % b}"
            for a, b in block.sort_values(x)[[x, y]].itertuples(index=False)
        ]
        blocks.append("\n".join(rows))
    with open(data_path, "w", newline="\n") as f:
        f.write("\n\n\n".join(blocks) + "\n")
    lines = [
        f'set title "{title}"',
        f'set xlabel "{x}"',
        f'set ylabel "{y}"',
        "set key off",
    ]
    if labels:
        plots = ", ".join(
            f'"{data_path.name}" index {i} using 1:2 with lines' for i in range(len(labels))
        )
        lines.append(f"plot {plots}")
    with open(script_path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
    return [data_path, script_path]


@dataclass
class RunManifest:
    """
    Summary of one command run.

    Attributes:
        command: Command name
        config: Echo of the configuration used
        version: Package version
        duration: Wall-clock seconds
        checks: Check name → passed
        artifacts: File names written next to the manifest
    """

    command: str
    config: Dict[str, Any]
    version: str
    duration: float = 0.0
    checks: Dict[str, bool] = field(default_factory=dict)
    artifacts: List[str] = field(default_factory=list)


class ArtifactStage:
    """
    Collects output files in a private directory and publishes them at once.

    Nothing reaches the output directory unless commit() is called, so a run
    that fails leaves no partial files behind.
    """

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)
        self.artifacts: List[str] = []
        self._staging: Optional[Path] = None

    def __enter__(self) -> "ArtifactStage":
        self._staging = Path(tempfile.mkdtemp(prefix="andreev_bs-"))
        return self

    def __exit__(self, *exc_info: Any) -> None:
        if self._staging is not None:
            shutil.rmtree(self._staging, ignore_errors=True)
            self._staging = None

    def path(self, name: str) -> Path:
        if self._staging is None:
            raise RuntimeError("ArtifactStage used outside its context")
        return self._staging / name

    def _record(self, *paths: Path) -> None:
        for path in paths:
            if path.name not in self.artifacts:
                self.artifacts.append(path.name)

    def csv(self, name: str, frame: pd.DataFrame) -> None:
        self._record(write_csv(frame, self.path(name)))

    def json(self, name: str, data: Any) -> None:
        self._record(write_json(data, self.path(name)))

    def gnuplot(self, name: str, frame: pd.DataFrame, **kwargs: Any) -> None:
        self._record(*write_gnuplot(frame, self.path(name), **kwargs))

    def commit(self, manifest: RunManifest) -> List[Path]:
        """Write manifest.json and move every artifact into the output directory."""
        manifest.artifacts = list(self.artifacts)
        write_json(asdict(manifest), self.path(MANIFEST_NAME))
        self.out_dir.mkdir(parents=True, exist_ok=True)
        published = []
        for name in self.artifacts + [MANIFEST_NAME]:
            target = self.out_dir / name
            shutil.move(str(self.path(name)), str(target))
            published.append(target)
        logger.info(f"Wrote {len(published)} files to {self.out_dir}")
        return published
