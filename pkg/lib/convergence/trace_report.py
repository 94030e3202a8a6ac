"""Text and CSV exports of iteration traces and incremental-study reports."""
import logging
from typing import List

from tabulate import tabulate

from lib.convergence.convergence_lab import (
    IterationTrace,
    PerturbationReport,
    assumption_flags,
    sign_stability_check,
)
from lib.utils.enums import ReportFormat
from lib.utils.utilities import format_float, render_csv

logger = logging.getLogger(__name__)


def trace_header(trace: IterationTrace) -> List[str]:
    lambdas = [f"lambda_{task + 1}" for task in range(trace.task_count)]
    popcounts = [f"popcount_{task + 1}" for task in range(trace.task_count)]
    return ["step", "mean_l1_diff"] + lambdas + popcounts + ["lambda_order_stable", "masks_overlap"]


def trace_rows(trace: IterationTrace) -> List[List[str]]:
    rows = []
    for step in trace.iterations:
        rows.append(
            [str(step.step), f"{step.mean_l1_diff:.6e}"]
            + [format_float(lam, 12) for lam in step.lambdas]
            + [str(count) for count in step.popcounts]
            + [str(step.lambda_order_stable).lower(), str(step.masks_overlap).lower()]
        )
    return rows


def render_trace(trace: IterationTrace, fmt: ReportFormat = ReportFormat.text) -> str:
    if ReportFormat(fmt) == ReportFormat.csv:
        return render_csv(trace_header(trace), trace_rows(trace))

    flags = assumption_flags(trace)
    stability = sign_stability_check(trace)
    lines = [
        f"tasks {trace.task_count}",
        f"iterations {len(trace.iterations)}",
        f"converged_step {trace.converged_step if trace.converged_step is not None else 'none'}",
        f"lambda_order_stable {str(flags.lambda_order_stable).lower()}",
        f"masks_overlap {str(flags.masks_overlap).lower()}",
    ]
    if stability.passed:
        lines.append("sign_stability pass")
    else:
        v = stability.violation
        lines.append(f"sign_stability fail {v.kind} step={v.step} task={v.task + 1} element={v.element}")
    for step in trace.iterations:
        lambdas = " ".join(format_float(lam, 12) for lam in step.lambdas)
        popcounts = " ".join(str(count) for count in step.popcounts)
        lines.append(f"step {step.step} diff {step.mean_l1_diff:.6e} lambdas {lambdas} popcounts {popcounts}")
    return "\n".join(lines) + "\n"


def render_perturbation_report(report: PerturbationReport, fmt: ReportFormat = ReportFormat.text) -> str:
    header = ["tasks", "mean_diff", "new_task_diff", "mask_changes"]
    rows = [
        [str(row.task_count), f"{row.mean_diff:.6e}", f"{row.new_task_diff:.6e}", str(row.mask_changes)]
        for row in report.rows
    ]
    if ReportFormat(fmt) == ReportFormat.csv:
        return render_csv(header, rows)
    return tabulate(rows, headers=header) + "\n"
