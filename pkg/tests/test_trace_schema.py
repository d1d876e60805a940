"""Trace CSV column names and order are pinned by golden files."""
from pathlib import Path

import pytest

from fxtadapt.sim import run_closed_loop, scenario_config

GOLDEN = Path(__file__).parent / "golden"


@pytest.mark.parametrize("scenario,golden,horizon", [
    ("gap-full-rank", "gap_columns.txt", 0.05),
    ("gap-rank-deficient", "gap_columns.txt", 0.05),
    ("quad-gust", "quad_columns.txt", 0.2),
    ("quad-constant-noadapt", "quad_columns.txt", 0.2),
])
def test_columns_match_golden(scenario, golden, horizon, tmp_path):
    cfg = scenario_config(scenario)
    cfg.horizon_s = horizon
    trace = run_closed_loop(cfg)
    expected = (GOLDEN / golden).read_text().split()
    assert trace.names == expected
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    assert path.read_text().splitlines()[0].split(",") == expected
