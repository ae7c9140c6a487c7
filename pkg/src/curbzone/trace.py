"""Per-iteration convergence traces shared by the iterative solvers."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field


@dataclass
class Trace:
    """Rows of ``(iteration, objective, cumulative_ms[, extra])``.

    For the heuristics ``objective`` is the best value found so far; for
    column generation it is the restricted-master value.
    """

    extra_field: str | None = None
    objective_field: str = "best_objective"
    rows: list[tuple] = field(default_factory=list)

    def record(self, iteration: int, objective: float, seconds: float, extra=None):
        ms = seconds * 1e3
        if self.rows and ms <= self.rows[-1][2]:
            # clocks can tie at sub-microsecond steps; keep time strictly increasing
            ms = self.rows[-1][2] + 1e-6
        row = (int(iteration), float(objective), ms)
        if self.extra_field is not None:
            row = row + (extra,)
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    @property
    def objectives(self) -> list[float]:
        return [r[1] for r in self.rows]

    @property
    def times_ms(self) -> list[float]:
        return [r[2] for r in self.rows]

    @property
    def header(self) -> list[str]:
        h = ["iteration", self.objective_field]
        if self.extra_field is not None:
            h.append(self.extra_field)
        return h + ["cumulative_ms"]

    def csv_rows(self) -> list[list]:
        out = []
        for r in self.rows:
            line = [r[0], repr(r[1])]
            if self.extra_field is not None:
                line.append(r[3])
            out.append(line + [f"{r[2]:.3f}"])
        return out

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        w.writerows(self.csv_rows())
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self) -> dict:
        return {"fields": self.header, "rows": self.csv_rows()}
