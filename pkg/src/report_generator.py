import json
import sys
from typing import Optional

from pydantic import BaseModel

from src.logging_utils import log_artifact, log_info, log_success, log_warning
from src.stats import BlockCensus, census_frame
from src.utils import ensure_parent, file_digest


def to_json(model) -> str:
    """Stable JSON text: sorted keys, fixed indent, trailing newline."""
    data = model.model_dump(mode='json') if isinstance(model, BaseModel) else model
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(model, path: Optional[str] = None) -> Optional[str]:
    """Writes to `path`, or stdout when no path is given. Returns the file digest."""
    text = to_json(model)
    if path is None or path == '-':
        sys.stdout.write(text)
        return None
    path = ensure_parent(path)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(text)
    digest = file_digest(path)
    log_artifact(path, digest)
    return digest


def write_census_csv(c: BlockCensus, path) -> str:
    path = ensure_parent(path)
    census_frame(c).to_csv(path, index=False, lineterminator='\n')
    digest = file_digest(path)
    log_artifact(path, digest)
    return digest


def summarize_report(report, label: str = 'stream'):
    """One log line per block length, then the verdict."""
    log_info(f"--- {label}: base {report.base}, {report.positions} digits ---")
    if report.selection_count is not None:
        expected = '' if report.expected_density is None else f" (expected {report.expected_density:.4f})"
        log_info(f"  selected {report.selection_count}, density {report.selection_density:.4f}{expected}")
    for j, stats in sorted(report.lengths.items()):
        mark = '' if stats.passed is None else (' ok' if stats.passed else ' FAIL')
        log_info(f"  j={j}: max deviation {stats.max_deviation:.5f} at '{stats.worst_block}', "
                 f"chi2 {stats.chi_square:.2f} ({stats.dof} dof, p={stats.p_value:.3g}){mark}")
    if report.verdict == 'non-normal':
        log_warning(f"{label}: {report.verdict}")
    else:
        log_success(f"{label}: {report.verdict}")


def summarize_cross_check(report):
    worst = max(report.rows, key=lambda row: row.discrepancy, default=None)
    where = '' if worst is None else f" at block '{worst.block}'"
    message = (f"{report.automaton} k={report.k}: max |frequency - visit ratio| = {report.max_discrepancy:.6f}"
               f"{where}, bound {report.bound:.6f}")
    if report.within_bound:
        log_success(message)
    else:
        log_warning(message)
