import json

import numpy as np

from ensemblerl import figures, reports
from ensemblerl.core import SourceDistribution
from ensemblerl.trainer import IterationRecord


def records(n=5):
    return [IterationRecord(i, -100.0 + i, -150.0 + i, 8, 0.01, 0.5)
            for i in range(n)]


class TestCsvWriter:
    def test_lf_endings_and_full_precision(self, tmp_path):
        path = tmp_path / "t.csv"
        reports.write_csv(path, ("a", "b"), [(1, 0.1 + 0.2)])
        raw = path.read_bytes()
        assert b"\r" not in raw
        assert raw == b"a,b\n1,0.30000000000000004\n"

    def test_numpy_floats_formatted_as_plain(self, tmp_path):
        path = tmp_path / "t.csv"
        reports.write_csv(path, ("x",), [(np.float64(1.5),)])
        assert path.read_text() == "x\n1.5\n"

    def test_records_csv(self, tmp_path):
        path = tmp_path / "lc.csv"
        reports.write_records_csv(path, records(3))
        lines = path.read_text().splitlines()
        assert lines[0] == "iteration,mean_return,cvar_threshold,subset_size,policy_kl"
        assert len(lines) == 4
        assert "0.5" not in lines[1].split(",")  # wall clock excluded


class TestMetadata:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "meta.json"
        reports.write_metadata(path, {"env": "pendulum"}, seed=7,
                               extra={"command": "train"})
        meta = json.loads(path.read_text())
        assert meta["seed"] == 7
        assert meta["config"] == {"env": "pendulum"}
        assert meta["command"] == "train"
        assert "version" in meta


class TestFigures:
    def test_learning_curve_png(self, tmp_path):
        out = tmp_path / "curve.png"
        figures.save_learning_curve(records(10), out)
        assert out.stat().st_size > 1000

    def test_grid_figure_1d(self, tmp_path):
        rows = [{"m": 0.4 + 0.2 * i, "mean_return": -100.0 * i,
                 "p10_return": -150.0 * i} for i in range(5)]
        out = tmp_path / "grid1.png"
        figures.save_grid_figure(rows, ["m"], out)
        assert out.stat().st_size > 1000

    def test_grid_figure_2d(self, tmp_path):
        rows = [{"m": m, "l": l, "mean_return": -m * l, "p10_return": -2 * m * l}
                for m in (0.5, 1.0, 1.5) for l in (0.8, 1.2)]
        out = tmp_path / "grid2.png"
        figures.save_grid_figure(rows, ["m", "l"], out)
        assert out.stat().st_size > 1000

    def test_adaptation_figure(self, tmp_path):
        sources = [
            SourceDistribution(("m",), np.array([1.0 + 0.1 * r]),
                               np.array([0.3 / (r + 1)]), np.array([0.4]),
                               np.array([1.6]))
            for r in range(4)
        ]
        out = tmp_path / "adapt.png"
        figures.save_adaptation_figure(sources, [-500.0, -400.0, -300.0], out,
                                       true_params={"m": 1.45})
        assert out.stat().st_size > 1000

    def test_sweep_figure(self, tmp_path):
        rows = [{"epsilon": e, "mean": -300.0, "p10": -500.0, "p90": -200.0}
                for e in (0.1, 0.5, 1.0, "max_lik")]
        out = tmp_path / "sweep.png"
        figures.save_sweep_figure(rows, out)
        assert out.stat().st_size > 1000
