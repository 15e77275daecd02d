"""Summary tables, loss curves and configuration-evolution data from run records."""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path
from typing import Sequence

from .records import RunRecord

CLASSIFICATION_METRICS = ("accuracy", "macro_f1", "auc", "test_loss", "val_loss")
REGRESSION_METRICS = ("mae", "mse", "r2", "test_loss", "val_loss")
SUMMARY_HEADER = ("method", "metric", "n", "mean", "std", "single_sample")


class ReportError(ValueError):
    pass


def mean_std(values: Sequence[float]) -> tuple[float, float, bool]:
    """Mean and sample (n-1) standard deviation; n=1 reports std 0 and flags it."""
    n = len(values)
    if n == 0:
        raise ValueError("no values")
    mean = math.fsum(values) / n
    if n == 1:
        return mean, 0.0, True
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var), False


def _metric(rec: RunRecord, name: str) -> float | None:
    if name == "test_loss":
        return rec.final_test_loss
    if name == "val_loss":
        return rec.final_val_loss
    if rec.final_test_metrics is None:
        return None
    return getattr(rec.final_test_metrics, name)


def _task_kind(records: Sequence[RunRecord]) -> str:
    kinds = {r.task.get("kind") for r in records if r.task}
    if len(kinds) > 1:
        raise ReportError(f"records mix task types {sorted(kinds)}; report one task at a time")
    if not kinds:
        raise ReportError("no successful records to report")
    return kinds.pop()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def summary_rows(records: Sequence[RunRecord]) -> list[dict]:
    kind = _task_kind(records)
    names = CLASSIFICATION_METRICS if kind == "classification" else REGRESSION_METRICS
    by_method: dict[str, list[RunRecord]] = defaultdict(list)
    for r in records:
        by_method[r.method].append(r)
    rows = []
    for method in sorted(by_method):
        ok = [r for r in by_method[method] if r.ok]
        for name in names:
            vals = [v for v in (_metric(r, name) for r in ok) if v is not None]
            if not vals:
                continue
            mean, std, single = mean_std(vals)
            rows.append({"method": method, "metric": name, "n": len(vals), "mean": mean, "std": std,
                         "single_sample": single})
    return rows


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row.get(h)) for h in header])


CURVE_HEADER = ("epoch", "train_loss", "val_loss", "test_loss")
EVOLUTION_HEADER = ("method", "seed", "iteration", "epoch", "change", "changed_fields", "adjustments",
                    "success", "val_loss", "rationale")


def curve_rows(rec: RunRecord) -> list[dict]:
    return [{"epoch": h.epoch, "train_loss": h.metrics.train_loss, "val_loss": h.metrics.val_loss,
             "test_loss": h.metrics.test_loss} for h in rec.history]


def evolution_rows(records: Sequence[RunRecord]) -> list[dict]:
    rows = []
    for rec in records:
        for it in rec.iteration_records or ([rec] if rec.method == "lgt" else []):
            for h in it.history:
                rows.append({
                    "method": rec.method, "seed": rec.seed, "iteration": it.iteration_index,
                    "epoch": h.epoch, "change": h.delta_applied.describe(),
                    "changed_fields": ";".join(h.apply_report.changed_fields),
                    "adjustments": len(h.apply_report.entries), "success": h.success_bit,
                    "val_loss": h.metrics.val_loss, "rationale": h.rationales.get("advisor", ""),
                })
    return rows


def render_summary_text(rows: Sequence[dict]) -> str:
    methods = sorted({r["method"] for r in rows})
    metrics = list(dict.fromkeys(r["metric"] for r in rows))
    cell = {(r["method"], r["metric"]): r for r in rows}
    width = max([len("method")] + [len(m) for m in methods])
    head = "method".ljust(width) + "".join(f"  {m:>22}" for m in metrics)
    lines = [head, "-" * len(head)]
    for m in methods:
        parts = []
        for k in metrics:
            r = cell.get((m, k))
            if r is None:
                text = "n/a"
            else:
                text = f"{r['mean']:.4f} ± {r['std']:.4f}" + ("*" if r["single_sample"] else "")
            parts.append(f"  {text:>22}")
        lines.append(m.ljust(width) + "".join(parts))
    if any(r["single_sample"] for r in rows):
        lines.append("* single run: std reported as 0")
    return "\n".join(lines) + "\n"


def emit_report(records: Sequence[RunRecord], out_dir: Path | str) -> dict[str, Path]:
    """Write summary.csv, summary.txt, curves/<method>/seed<n>.csv and config_evolution.csv."""
    if not records:
        raise ReportError("at least one record is required")
    out = Path(out_dir)
    rows = summary_rows(records)
    paths = {"summary_csv": out / "summary.csv", "summary_txt": out / "summary.txt",
             "evolution_csv": out / "config_evolution.csv"}
    _write_csv(paths["summary_csv"], SUMMARY_HEADER, rows)
    paths["summary_txt"].write_text(render_summary_text(rows), encoding="utf-8")
    for rec in records:
        if rec.history:
            _write_csv(out / "curves" / rec.method / f"seed{rec.seed}.csv", CURVE_HEADER, curve_rows(rec))
    _write_csv(paths["evolution_csv"], EVOLUTION_HEADER, evolution_rows(records))
    return paths
