import json
import math

import numpy as np
import pytest

from fdmgdl.metrics import rse
from fdmgdl.report import CurveRow, RunReport


def test_rse_endpoints():
    y = np.random.default_rng(0).standard_normal(50)
    assert rse(y, y) == 0.0
    assert rse(np.zeros_like(y), y) == 1.0
    assert rse(2 * y, y) == 1.0
    z = y + 1j * y[::-1]
    assert rse(np.zeros_like(z), z) == 1.0


def test_rse_matches_direct_sum():
    rng = np.random.default_rng(1)
    y, yh = rng.standard_normal(30), rng.standard_normal(30)
    assert rse(yh, y) == pytest.approx(sum((a - b) ** 2 for a, b in zip(yh, y)) / sum(b * b for b in y), rel=1e-13)


def test_rse_errors():
    with pytest.raises(ValueError):
        rse(np.ones(3), np.zeros(3))
    with pytest.raises(ValueError):
        rse(np.ones(3), np.ones(4))


def test_ac_times_are_prefix_sums():
    walls = [0.5, 1.25, 0.0, 2.0]
    rep = RunReport(grades=[{"grade": i + 1, "wall_time": w} for i, w in enumerate(walls)])
    ac = rep.ac_times()
    assert ac == [0.5, 1.75, 1.75, 3.75]
    assert all(b >= a for a, b in zip(ac, ac[1:]))
    assert [g["ac_time"] for g in rep.to_json_dict()["grades"]] == ac


def test_report_json_round_trip(tmp_path):
    rep = RunReport(config={"method": "mgdl", "seed": 3}, method="mgdl",
                    grades=[{"grade": 1, "loss": 0.1 + 0.2, "wall_time": 1 / 3, "tr_rse": 1e-300}],
                    metrics={"te_rse": 2.0 / 7.0, "count": 4, "bad": math.inf, "nested": {"a": [1.5, 2.5]},
                             "np": np.float64(0.1)},
                    curves=[CurveRow(1, 0, 1.0, 1e-3, 0.1)])
    rep.dump(tmp_path / "r.json")
    back = RunReport.load(tmp_path / "r.json")
    assert back.config == rep.config and back.method == "mgdl"
    assert back.grades == rep.grades
    assert back.metrics["te_rse"] == 2.0 / 7.0 and back.metrics["np"] == 0.1
    assert back.metrics["bad"] == "inf" and back.metrics["nested"] == {"a": [1.5, 2.5]}
    json.loads((tmp_path / "r.json").read_text())
