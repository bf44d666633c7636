"""Plain CSV emission and ingestion with ``#`` metadata lines."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

from .errors import DataError
from .medium import ObservablePoint

REQUIRED_COLUMNS = ("N_cm3", "transmission", "slope_rad_per_G")
OPTIONAL_COLUMNS = ("sigma_transmission", "sigma_slope", "gamma_eff")


def format_number(value) -> str:
    """12 significant digits; integers and booleans pass through."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return value
    return format(float(value), ".12g")


def render_csv(columns: Sequence[str], rows: Iterable[Sequence], meta: Optional[Dict[str, str]] = None) -> str:
    buf = io.StringIO()
    for key, value in (meta or {}).items():
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_number(v) for v in row])
    return buf.getvalue()


def emit_csv(path, columns: Sequence[str], rows: Iterable[Sequence], meta: Optional[Dict[str, str]] = None) -> Path:
    path = Path(path)
    path.write_text(render_csv(columns, rows, meta))
    return path


@dataclass(frozen=True)
class ExperimentRow:
    N_cm3: float
    transmission: float
    slope_rad_per_G: float
    sigma_transmission: Optional[float] = None
    sigma_slope: Optional[float] = None
    gamma_eff: Optional[float] = None

    def to_point(self) -> ObservablePoint:
        return ObservablePoint(self.N_cm3, self.transmission, self.slope_rad_per_G, self.gamma_eff)


def rows_to_csv(rows: Sequence[ExperimentRow], meta: Optional[Dict[str, str]] = None) -> str:
    optional = [c for c in OPTIONAL_COLUMNS if any(getattr(r, c) is not None for r in rows)]
    columns = list(REQUIRED_COLUMNS) + optional
    body = [[getattr(r, c) if getattr(r, c) is not None else math.nan for c in columns] for r in rows]
    return render_csv(columns, body, meta)


def _parse_rows(lines: List[str]) -> List[ExperimentRow]:
    header_seen = False
    rows: List[ExperimentRow] = []
    columns: List[str] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cells = next(csv.reader([line]))
        if not header_seen:
            columns = [c.strip() for c in cells]
            missing = [c for c in REQUIRED_COLUMNS if c not in columns]
            if missing:
                raise DataError(f"missing column(s): {', '.join(missing)}", lineno)
            unknown = [c for c in columns if c not in REQUIRED_COLUMNS + OPTIONAL_COLUMNS]
            if unknown:
                raise DataError(f"unknown column(s): {', '.join(unknown)}", lineno)
            header_seen = True
            continue
        if len(cells) != len(columns):
            raise DataError(f"expected {len(columns)} cells, found {len(cells)}", lineno)
        record = {}
        for name, cell in zip(columns, cells):
            try:
                value = float(cell)
            except ValueError:
                raise DataError(f"column {name}: {cell!r} is not numeric", lineno) from None
            if name in OPTIONAL_COLUMNS and math.isnan(value):
                continue
            if not math.isfinite(value):
                raise DataError(f"column {name}: value must be finite", lineno)
            record[name] = value
        if record["N_cm3"] <= 0:
            raise DataError(f"density {record['N_cm3']!r} must be positive", lineno)
        if not 0 < record["transmission"] <= 1:
            raise DataError(f"transmission {record['transmission']!r} outside (0, 1]", lineno)
        for sig in ("sigma_transmission", "sigma_slope"):
            if record.get(sig, 0.0) < 0:
                raise DataError(f"{sig} must be nonnegative", lineno)
        if "gamma_eff" in record and record["gamma_eff"] <= 0:
            raise DataError("gamma_eff must be positive", lineno)
        rows.append(ExperimentRow(**record))
    if not header_seen:
        raise DataError("no header row found")
    return rows


def ingest_csv(path) -> List[ExperimentRow]:
    """Read experiment rows; any invalid row aborts with its line number."""
    return _parse_rows(Path(path).read_text().splitlines())


def ingest_text(text: str) -> List[ExperimentRow]:
    return _parse_rows(text.splitlines())
