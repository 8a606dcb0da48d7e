"""
Tests for result files and the staged output directory.
"""

import json
import math

import numpy as np
import pandas as pd
import pytest

from andreev_bs.io import ArtifactStage, RunManifest, write_csv, write_gnuplot, write_json


class TestWriters:
    """Test CSV, JSON and gnuplot output."""

    def test_csv_format(self, tmp_path):
        """Header row, full precision and '\\n' line endings."""
        path = write_csv(pd.DataFrame({"x": [0.1, 2.0]}), tmp_path / "sub" / "t.csv")
        text = path.read_bytes().decode()
        assert "\r" not in text
        assert text.splitlines() == ["x", "1.0000000000000001e-01", "2.0000000000000000e+00"]

    def test_json_values(self, tmp_path):
        """numpy scalars, complex numbers and non-finite floats are converted."""
        path = write_json(
            {"a": np.float64(1.5), "b": 1 + 2j, "c": math.inf, "d": np.arange(2)},
            tmp_path / "r.json",
        )
        data = json.loads(path.read_text())
        assert data == {"a": 1.5, "b": {"re": 1.0, "im": 2.0}, "c": "inf", "d": [0, 1]}

    def test_gnuplot_blocks(self, tmp_path):
        """One data block per group, addressed by index in the script."""
        frame = pd.DataFrame(
            {"phi": [0.0, 1.0, 0.0, 1.0], "E": [0.1, 0.2, 0.3, 0.4], "n": [0, 0, 1, 1]}
        )
        data, script = write_gnuplot(frame, tmp_path / "disp", x="phi", y="E", group=["n"])
        assert data.name == "disp.dat" and script.name == "disp.gp"
        blocks = data.read_text().strip().split("\n\n\n")
        assert len(blocks) == 2
        assert blocks[0].splitlines()[0] == "# n=0"
        assert "index 1 using 1:2" in script.read_text()


class TestArtifactStage:
    """Test staged publication of results."""

    def test_commit_publishes(self, tmp_path):
        """Files and manifest appear together on commit."""
        out = tmp_path / "out"
        with ArtifactStage(out) as stage:
            stage.csv("t.csv", pd.DataFrame({"x": [1.0]}))
            stage.json("r.json", {"ok": True})
            assert not out.exists()
            stage.commit(RunManifest(command="test", config={}, version="0"))
        assert sorted(p.name for p in out.iterdir()) == ["manifest.json", "r.json", "t.csv"]
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["artifacts"] == ["t.csv", "r.json"]

    def test_failure_leaves_nothing(self, tmp_path):
        """An exception before commit writes no output."""
        out = tmp_path / "out"
        with pytest.raises(RuntimeError):
            with ArtifactStage(out) as stage:
                stage.csv("t.csv", pd.DataFrame({"x": [1.0]}))
                raise RuntimeError("interrupted")
        assert not out.exists()

    def test_outside_context(self, tmp_path):
        """Paths are only available inside the context."""
        with pytest.raises(RuntimeError):
            ArtifactStage(tmp_path).path("t.csv")
