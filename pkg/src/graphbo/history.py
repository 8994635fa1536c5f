from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

from .graph import LabeledDigraph, canonical_key

CSV_COLUMNS = (
    "iteration",
    "n_evals",
    "candidate_key",
    "val_error",
    "test_error",
    "best_val_error",
    "best_test_error",
    "wall_time_s",
)


@dataclass(frozen=True)
class Record:
    iteration: int
    n_evals: int
    graph: LabeledDigraph
    val_error: float
    test_error: float
    best_val_error: float
    best_test_error: float
    wall_time_s: float

    @property
    def key(self) -> str:
        return canonical_key(self.graph)


@dataclass
class SearchHistory:
    """Every objective evaluation in order.

    ``best_test_error`` is the test error of the incumbent (lowest validation
    error so far, earliest on ties), not the minimum test error seen.
    ``wall_time_s`` accumulates the objective's reported training time, so
    it is reproducible.
    """

    records: list[Record] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def add(self, iteration: int, graph: LabeledDigraph, val: float, test: float, train_time: float) -> Record:
        prev = self.records[-1] if self.records else None
        if prev is None or val < prev.best_val_error:
            best_val, best_test = val, test
        else:
            best_val, best_test = prev.best_val_error, prev.best_test_error
        rec = Record(
            iteration,
            len(self.records) + 1,
            graph,
            float(val),
            float(test),
            float(best_val),
            float(best_test),
            (prev.wall_time_s if prev else 0.0) + float(train_time),
        )
        self.records.append(rec)
        return rec

    @property
    def observations(self) -> list[tuple[LabeledDigraph, float]]:
        return [(r.graph, r.val_error) for r in self.records]

    @property
    def keys(self) -> set[str]:
        return {r.key for r in self.records}

    def best_trace(self, which: str = "val") -> list[float]:
        attr = "best_val_error" if which == "val" else "best_test_error"
        return [getattr(r, attr) for r in self.records]

    def best(self) -> Record:
        i = min(range(len(self.records)), key=lambda j: (self.records[j].val_error, j))
        return self.records[i]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow(
                [
                    r.iteration,
                    r.n_evals,
                    r.key,
                    repr(r.val_error),
                    repr(r.test_error),
                    repr(r.best_val_error),
                    repr(r.best_test_error),
                    repr(r.wall_time_s),
                ]
            )
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def read_history_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if rows and tuple(rows[0].keys()) != CSV_COLUMNS:
        raise ValueError(f"unexpected history columns {list(rows[0].keys())}")
    return rows
