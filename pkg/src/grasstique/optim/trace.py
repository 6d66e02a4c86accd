"""Per-iteration convergence records, optionally streamed to CSV."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

COLUMNS = ("iter", "phi", "relgrad", "step", "evals")


@dataclass
class TraceRow:
    iter: int
    phi: float
    relgrad: float
    step: float
    evals: int


@dataclass
class RunTrace:
    """Rows of ``(iter, phi, relgrad, step, evals)`` plus free-form events.

    With ``path`` set every row is appended and flushed immediately, so a
    killed run still leaves a valid CSV prefix.  ``meta`` is written to a
    ``<path>.meta.json`` sidecar on :meth:`close`.
    """

    path: str | Path | None = None
    meta: dict = field(default_factory=dict)
    rows: list[TraceRow] = field(default_factory=list)
    events: list[tuple[int, str, str]] = field(default_factory=list)

    def __post_init__(self):
        self._fh = None
        self._writer = None
        if self.path is not None:
            self._fh = open(self.path, "w", newline="")
            self._writer = csv.writer(self._fh)
            self._writer.writerow(COLUMNS)
            self._fh.flush()

    def record(self, iter: int, phi: float, relgrad: float, step: float, evals: int) -> None:
        row = TraceRow(int(iter), float(phi), float(relgrad), float(step), int(evals))
        self.rows.append(row)
        if self._writer is not None:
            self._writer.writerow([row.iter, repr(row.phi), repr(row.relgrad), repr(row.step), row.evals])
            self._fh.flush()

    def event(self, iter: int, kind: str, message: str = "") -> None:
        self.events.append((int(iter), kind, message))

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None
            self._writer = None
            side = Path(str(self.path) + ".meta.json")
            payload = dict(self.meta)
            payload["events"] = [list(e) for e in self.events]
            side.write_text(json.dumps(payload, indent=2, default=str))

    # convenience views
    @property
    def phi(self) -> list[float]:
        return [r.phi for r in self.rows]

    @property
    def relgrad(self) -> list[float]:
        return [r.relgrad for r in self.rows]

    @property
    def iterations(self) -> int:
        return self.rows[-1].iter if self.rows else 0

    def first_below(self, tol: float) -> int | None:
        """First iteration whose relative gradient is at most ``tol``."""
        for r in self.rows:
            if not math.isnan(r.relgrad) and r.relgrad <= tol:
                return r.iter
        return None


def read_trace(path) -> list[TraceRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise ValueError(f"{path}: unexpected trace header {reader.fieldnames}")
        return [
            TraceRow(int(r["iter"]), float(r["phi"]), float(r["relgrad"]), float(r["step"]), int(r["evals"]))
            for r in reader
        ]
