import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

from ..controller.feedback import HistoryRecord, format_history
from ..errors import EmptyReportError, IoError

logger = logging.getLogger(__name__)

DELIMITER = "\t"
BASE_COLUMNS = ("label", "gamma_mean", "gamma_std", "h_mean", "h_std")

Metric = Union[float, int, str, None]


class ReportFormat(str, enum.Enum):
    DELIMITED_TABLE = "DelimitedTable"
    STRUCTURED_TEXT = "StructuredText"

    @property
    def suffix(self) -> str:
        return ".tsv" if self is ReportFormat.DELIMITED_TABLE else ".txt"


@dataclass(frozen=True)
class ReportRow:
    """
    One configuration's result over its repetitions.

    gamma and h come from the same runs (gamma = 1 - h per run), or are both
    None when the experiment does not measure them.
    """

    label: str
    gamma_mean: Optional[float] = None
    gamma_std: Optional[float] = None
    h_mean: Optional[float] = None
    h_std: Optional[float] = None
    extra: Dict[str, Metric] = field(default_factory=dict)

    @classmethod
    def from_rates(cls, label: str, h_values: Sequence[float], **extra: Metric) -> "ReportRow":
        """Aggregates per-run hallucination rates (population std)."""

        n = len(h_values)
        h_mean = math.fsum(h_values) / n
        gammas = [1.0 - h for h in h_values]
        gamma_mean = math.fsum(gammas) / n

        return cls(
            label=label,
            gamma_mean=gamma_mean,
            gamma_std=_std(gammas, gamma_mean),
            h_mean=h_mean,
            h_std=_std(h_values, h_mean),
            extra=dict(extra),
        )


def _std(values: Sequence[float], mean: float) -> float:
    return math.sqrt(math.fsum((v - mean) ** 2 for v in values) / len(values))


def format_number(value: Metric) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return f"{value:.6g}"
    return str(value)


def _columns(rows: Sequence[ReportRow]) -> List[str]:
    columns = list(BASE_COLUMNS)
    for row in rows:
        for key in row.extra:
            if key not in columns:
                columns.append(key)
    return columns


def render_table(rows: Sequence[ReportRow]) -> str:
    columns = _columns(rows)
    lines = [DELIMITER.join(columns)]
    for row in rows:
        values = {
            "label": row.label,
            "gamma_mean": row.gamma_mean,
            "gamma_std": row.gamma_std,
            "h_mean": row.h_mean,
            "h_std": row.h_std,
        }
        values.update(row.extra)
        lines.append(DELIMITER.join(format_number(values.get(c)) for c in columns))
    return "\n".join(lines) + "\n"


def render_structured(rows: Sequence[ReportRow]) -> str:
    blocks = []
    for row in rows:
        lines = [f"[{row.label}]"]
        if row.gamma_mean is not None:
            lines.append(f"gamma = {format_number(row.gamma_mean)} ± {format_number(row.gamma_std)}")
            lines.append(f"h = {format_number(row.h_mean)} ± {format_number(row.h_std)}")
        lines.extend(f"{key} = {format_number(value)}" for key, value in row.extra.items())
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def emit_report(rows: Sequence[ReportRow], fmt: ReportFormat, path: Union[str, Path]) -> Path:
    """
    Writes ``rows`` in ``fmt`` to ``path``. Column and row order are kept as given.

    :raises EmptyReportError: Without rows; nothing is written.
    :raises IoError: When the file cannot be written.
    """

    if not rows:
        raise EmptyReportError()

    text = render_table(rows) if fmt is ReportFormat.DELIMITED_TABLE else render_structured(rows)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise IoError(path, e)

    logger.info(f"Wrote {len(rows)} row(s) to {path}")
    return path


def _parse_cell(text: str) -> Metric:
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        return text


def load_rows(path: Union[str, Path]) -> List[ReportRow]:
    """Reads a delimited table written by :func:`emit_report`."""

    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise IoError(path, e)

    if not lines:
        raise EmptyReportError()

    columns = lines[0].split(DELIMITER)
    rows = []
    for line in lines[1:]:
        cells = dict(zip(columns, line.split(DELIMITER)))
        extra = {c: _parse_cell(cells.get(c, "")) for c in columns if c not in BASE_COLUMNS}
        rows.append(
            ReportRow(
                label=cells.get("label", ""),
                gamma_mean=_parse_cell(cells.get("gamma_mean", "")),
                gamma_std=_parse_cell(cells.get("gamma_std", "")),
                h_mean=_parse_cell(cells.get("h_mean", "")),
                h_std=_parse_cell(cells.get("h_std", "")),
                extra=extra,
            )
        )
    return rows


def write_trajectory(directory: Union[str, Path], label: str, seed: int, records: Iterable[HistoryRecord]) -> Path:
    path = Path(directory) / f"trajectory_{label}_{seed}.tsv"
    try:
        path.write_text(format_history(records, DELIMITER), encoding="utf-8")
    except OSError as e:
        raise IoError(path, e)
    return path


def load_table(path: Union[str, Path]) -> List[Dict[str, Any]]:
    """Any delimited table with a header line, cells parsed as numbers where possible."""

    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise IoError(path, e)

    if not lines:
        return []
    columns = lines[0].split(DELIMITER)
    return [dict(zip(columns, (_parse_cell(c) for c in line.split(DELIMITER)))) for line in lines[1:]]
