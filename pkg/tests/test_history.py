import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import chain
from graphbo.graph import canonical_key
from graphbo.history import CSV_COLUMNS, SearchHistory, read_history_csv

G = [chain("conv3x3"), chain("conv1x1"), chain("maxpool3x3"), chain("conv3x3", "conv1x1")]


def test_incumbent_tracking():
    h = SearchHistory()
    h.add(0, G[0], 0.3, 0.31, 10.0)
    h.add(0, G[1], 0.2, 0.25, 5.0)
    h.add(1, G[2], 0.2, 0.10, 1.0)  # tie keeps the earlier incumbent
    h.add(1, G[3], 0.4, 0.05, 2.0)
    assert h.best_trace() == [0.3, 0.2, 0.2, 0.2]
    assert h.best_trace("test") == [0.31, 0.25, 0.25, 0.25]
    assert [r.wall_time_s for r in h.records] == [10.0, 15.0, 16.0, 18.0]
    assert [r.n_evals for r in h.records] == [1, 2, 3, 4]
    assert h.best().graph == G[1]
    assert h.observations[2] == (G[2], 0.2)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=40))
def test_best_trace_monotone(vals):
    h = SearchHistory()
    for i, v in enumerate(vals):
        h.add(i, G[i % 4], v, v, 1.0)
    t = h.best_trace()
    assert all(a >= b for a, b in zip(t, t[1:])) and t[-1] == min(vals)


def test_csv_round_trip(tmp_path):
    h = SearchHistory()
    h.add(0, G[0], 0.1 + 0.2, 1 / 3, 0.5)
    path = tmp_path / "h.csv"
    h.write_csv(path)
    assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    (row,) = read_history_csv(path)
    assert row["candidate_key"] == canonical_key(G[0])
    assert float(row["val_error"]) == 0.1 + 0.2 and float(row["test_error"]) == 1 / 3


def test_csv_rejects_foreign_columns(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_history_csv(p)


def test_empty_best_raises():
    with pytest.raises(ValueError):
        SearchHistory().best()
