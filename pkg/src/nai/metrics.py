"""MAC ledger, phase timers and metric tables."""
from __future__ import annotations

import csv
import io
import statistics
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

PHASES = ("stationary", "propagation", "distance_or_gate", "classification", "sampling")
FP_PHASES = ("propagation", "distance_or_gate")
COLUMNS = ("method", "acc", "mmacs", "fp_mmacs", "time_ms", "fp_time_ms")


def count_spmm(nnz_touched: int, f: int) -> int:
    return int(nnz_touched) * int(f)


def count_dense(rows: int, in_dim: int, out_dim: int) -> int:
    return int(rows) * int(in_dim) * int(out_dim)


def count_stationary(n: int, f: int, batch: int, mode: str = "factorized") -> int:
    """Factorized: aggregate over all nodes then scale per batch node. Naive: dense rows."""
    if mode == "factorized":
        return n * f + batch * f
    if mode == "naive":
        return batch * n * f
    raise ValueError(f"unknown counting mode {mode!r}")


def count_distance(rows: int, f: int) -> int:
    return int(rows) * int(f)


def count_gate(rows: int, f: int) -> int:
    return count_dense(rows, 2 * f, 2)


@dataclass
class MacLedger:
    mode: str = "factorized"
    counts: dict = field(default_factory=lambda: {p: 0 for p in PHASES})
    seconds: dict = field(default_factory=lambda: {p: 0.0 for p in PHASES})

    def add(self, phase: str, macs: int) -> None:
        if phase not in self.counts:
            raise KeyError(phase)
        if macs < 0:
            raise ValueError("MAC counts are nonnegative")
        self.counts[phase] += int(macs)

    @contextmanager
    def timed(self, phase: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[phase] += time.perf_counter() - t0

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def fp_total(self) -> int:
        return sum(self.counts[p] for p in FP_PHASES)

    @property
    def time_total(self) -> float:
        return sum(self.seconds.values())

    @property
    def fp_time(self) -> float:
        return sum(self.seconds[p] for p in FP_PHASES)

    def merge(self, other: MacLedger) -> MacLedger:
        out = MacLedger(self.mode)
        for p in PHASES:
            out.counts[p] = self.counts[p] + other.counts[p]
            out.seconds[p] = self.seconds[p] + other.seconds[p]
        return out


def time_phases(ledger: MacLedger, n_nodes: int):
    """Per-node ``(Time, FP Time)`` in milliseconds."""
    if n_nodes == 0:
        return 0.0, 0.0
    return 1e3 * ledger.time_total / n_nodes, 1e3 * ledger.fp_time / n_nodes


@dataclass
class MetricRow:
    method: str
    acc: float
    mmacs: float
    fp_mmacs: float
    time_ms: float
    fp_time_ms: float

    def as_tuple(self):
        return (self.method, self.acc, self.mmacs, self.fp_mmacs, self.time_ms, self.fp_time_ms)


def report(method: str, ledger: MacLedger, accuracy: float, n_nodes: int,
           time_ms: float | None = None, fp_time_ms: float | None = None) -> MetricRow:
    """One table row; MACs are per-node averages in millions, ACC in percent."""
    t, fp_t = time_phases(ledger, n_nodes)
    per = max(n_nodes, 1)
    return MetricRow(method, 100.0 * accuracy, ledger.total / per / 1e6, ledger.fp_total / per / 1e6,
                     t if time_ms is None else time_ms, fp_t if fp_time_ms is None else fp_time_ms)


def median_timing(run, repeats: int = 5):
    """Run ``run()`` (returning a ledger) ``repeats`` times; median per-phase seconds.

    The first call is a warm-up and is discarded.
    """
    run()
    ledgers = [run() for _ in range(max(repeats, 1))]
    out = MacLedger(ledgers[0].mode)
    out.counts = dict(ledgers[0].counts)
    for p in PHASES:
        out.seconds[p] = statistics.median(l.seconds[p] for l in ledgers)
    return out


def speedup(baseline: float, value: float) -> float:
    return float("inf") if value == 0 else baseline / value


def to_csv(rows, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        m, *vals = r.as_tuple()
        w.writerow([m] + [f"{v:.6g}" for v in vals])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def to_text(rows, baseline: MetricRow | None = None) -> str:
    """Aligned table; with a baseline the ratios are appended in brackets."""
    header = ("method", "ACC", "#mMACs", "#FP mMACs", "Time", "FP Time")
    lines = []
    for r in rows:
        cells = [r.method, f"{r.acc:.2f}"]
        for attr in ("mmacs", "fp_mmacs", "time_ms", "fp_time_ms"):
            v = getattr(r, attr)
            cell = f"{v:.4g}"
            if baseline is not None and r is not baseline:
                cell += f" ({speedup(getattr(baseline, attr), v):.1f}x)"
            cells.append(cell)
        lines.append(cells)
    widths = [max(len(h), *(len(c[i]) for c in lines)) if lines else len(h) for i, h in enumerate(header)]
    fmt = "  ".join(f"{{:<{w}}}" if i == 0 else f"{{:>{w}}}" for i, w in enumerate(widths))
    return "\n".join([fmt.format(*header)] + [fmt.format(*c) for c in lines])
