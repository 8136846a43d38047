"""Coverage report assembly, serialization, and aggregation."""

import csv
import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

SEED_COLUMNS = ("method", "seed", "alpha", "setup", "scenario", "mean_coverage",
                "mean_width", "median_width", "inf_fraction", "ess_median")
GRID_COLUMNS = ("method", "seed", "alpha", "t0", "coverage")


@dataclass
class SeedRow:
    """Per-(method, seed, alpha) aggregate over all evaluation points."""

    method: str
    seed: int
    alpha: float
    setup: int
    scenario: int
    mean_coverage: float
    mean_width: float
    median_width: float
    inf_fraction: float
    ess_median: float


@dataclass
class GridRow:
    """Per-dose coverage for the plot-ready table."""

    method: str
    seed: int
    alpha: float
    t0: float
    coverage: float


def _fmt(v):
    if isinstance(v, float):
        return repr(float(v))  # np.float64 subclasses float but reprs differently
    return str(v)


def _parse_float(s):
    return float(s)


class CoverageReport:
    """Container for benchmark results.

    ``rows`` holds one :class:`SeedRow` per (method, seed, alpha);
    ``grid_rows`` one :class:`GridRow` per (method, seed, alpha, dose);
    ``failed_seeds`` lists seeds excluded from aggregates with their errors.
    """

    def __init__(self, rows=None, grid_rows=None, failed_seeds=None, config=None):
        self.rows = list(rows or [])
        self.grid_rows = list(grid_rows or [])
        self.failed_seeds = list(failed_seeds or [])
        self.config = dict(config or {})

    def __eq__(self, other):
        return isinstance(other, CoverageReport) and self.rows == other.rows \
            and self.grid_rows == other.grid_rows

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(SEED_COLUMNS)
            for row in self.rows:
                d = asdict(row)
                writer.writerow([_fmt(d[c]) for c in SEED_COLUMNS])
            for failed in self.failed_seeds:
                fh.write(f"# failed_seed {failed['seed']}: {failed['error']}\n")

    def grid_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(GRID_COLUMNS)
            for row in self.grid_rows:
                d = asdict(row)
                writer.writerow([_fmt(d[c]) for c in GRID_COLUMNS])

    @classmethod
    def from_csv(cls, path, grid_path=None):
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(line for line in fh if not line.startswith("#"))
            header = next(reader)
            if tuple(header) != SEED_COLUMNS:
                raise ValueError(f"unexpected report header {header!r}")
            for rec in reader:
                d = dict(zip(SEED_COLUMNS, rec))
                rows.append(SeedRow(
                    method=d["method"], seed=int(d["seed"]), alpha=_parse_float(d["alpha"]),
                    setup=int(d["setup"]), scenario=int(d["scenario"]),
                    mean_coverage=_parse_float(d["mean_coverage"]),
                    mean_width=_parse_float(d["mean_width"]),
                    median_width=_parse_float(d["median_width"]),
                    inf_fraction=_parse_float(d["inf_fraction"]),
                    ess_median=_parse_float(d["ess_median"]),
                ))
        grid_rows = []
        if grid_path is not None and os.path.exists(grid_path):
            with open(grid_path, newline="") as fh:
                reader = csv.reader(fh)
                next(reader)
                for rec in reader:
                    d = dict(zip(GRID_COLUMNS, rec))
                    grid_rows.append(GridRow(
                        method=d["method"], seed=int(d["seed"]), alpha=_parse_float(d["alpha"]),
                        t0=_parse_float(d["t0"]), coverage=_parse_float(d["coverage"]),
                    ))
        return cls(rows=rows, grid_rows=grid_rows)

    def to_json(self, path=None):
        payload = {
            "config": self.config,
            "rows": [asdict(r) for r in self.rows],
            "grid_rows": [asdict(r) for r in self.grid_rows],
            "failed_seeds": self.failed_seeds,
        }
        if path is None:
            return json.dumps(payload)
        with open(path, "w") as fh:
            json.dump(payload, fh)
        return None

    @classmethod
    def from_json(cls, source):
        if os.path.exists(source):
            with open(source) as fh:
                payload = json.load(fh)
        else:
            payload = json.loads(source)
        return cls(
            rows=[SeedRow(**r) for r in payload["rows"]],
            grid_rows=[GridRow(**r) for r in payload["grid_rows"]],
            failed_seeds=payload.get("failed_seeds", []),
            config=payload.get("config", {}),
        )

    def coverages(self, method, alpha):
        """Per-seed mean coverages for one method at one alpha, seed-ordered."""
        picked = [r for r in self.rows if r.method == method and r.alpha == alpha]
        return np.asarray([r.mean_coverage for r in sorted(picked, key=lambda r: r.seed)])

    def aggregate(self):
        """Across-seed summaries, one dict per (method, alpha)."""
        out = []
        seen = []
        for row in self.rows:
            key = (row.method, row.alpha)
            if key not in seen:
                seen.append(key)
        for method, alpha in seen:
            picked = [r for r in self.rows if r.method == method and r.alpha == alpha]
            cov = np.asarray([r.mean_coverage for r in picked])
            widths = np.asarray([r.mean_width for r in picked])
            finite = widths[np.isfinite(widths)]
            out.append({
                "method": method,
                "alpha": alpha,
                "n_seeds": len(picked),
                "mean_coverage": float(cov.mean()),
                "coverage_std": float(cov.std(ddof=1)) if len(cov) > 1 else 0.0,
                "coverage_var": float(cov.var(ddof=1)) if len(cov) > 1 else 0.0,
                "mean_width": float(finite.mean()) if len(finite) else math.inf,
                "mean_inf_fraction": float(np.mean([r.inf_fraction for r in picked])),
                "median_ess": float(np.median([r.ess_median for r in picked])),
            })
        return out

    def summary_table(self):
        lines = [f"{'method':<24} {'alpha':>6} {'coverage':>9} {'std':>7} "
                 f"{'width':>10} {'inf%':>6} {'ess':>8}"]
        for agg in self.aggregate():
            width = agg["mean_width"]
            width_s = f"{width:10.3f}" if math.isfinite(width) else f"{'inf':>10}"
            lines.append(
                f"{agg['method']:<24} {agg['alpha']:>6.3g} {agg['mean_coverage']:>9.4f} "
                f"{agg['coverage_std']:>7.4f} {width_s} {100 * agg['mean_inf_fraction']:>5.1f}% "
                f"{agg['median_ess']:>8.1f}"
            )
        if self.failed_seeds:
            lines.append(f"failed seeds: {[f['seed'] for f in self.failed_seeds]}")
        return "\n".join(lines)


def emit_report(report, fmt="csv", out_dir="."):
    """Write the report to disk; returns the written paths.

    ``csv`` writes ``report.csv`` plus the per-dose ``grid_coverage.csv``;
    ``json`` writes ``report.json`` mirroring both tables.
    """
    if fmt not in ("csv", "json"):
        raise ValueError(f"format must be 'csv' or 'json', got {fmt!r}")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    if fmt == "csv":
        path = os.path.join(out_dir, "report.csv")
        report.to_csv(path)
        paths.append(path)
        grid_path = os.path.join(out_dir, "grid_coverage.csv")
        report.grid_to_csv(grid_path)
        paths.append(grid_path)
    else:
        path = os.path.join(out_dir, "report.json")
        report.to_json(path)
        paths.append(path)
    return paths
