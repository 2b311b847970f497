"""Parse, filter, and spatially bin violent-event records from CSV."""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Optional

from .grid import CellId, GridSpec

# Canonical event-type vocabulary. ACLED spellings map onto it below.
EVENT_TYPES = (
    "battle",
    "explosion_remote_violence",
    "violence_against_civilians",
    "riot",
    "protest",
    "strategic_development",
    "other",
)

# Default inclusion set: the three violent event types.
DEFAULT_FILTER = frozenset(
    {"battle", "explosion_remote_violence", "violence_against_civilians"}
)

DEFAULT_SPAN = (1997, 2024)

# Case-insensitive alias table, ACLED spellings as defaults.
DEFAULT_ALIASES: dict[str, str] = {
    "battle": "battle",
    "battles": "battle",
    "explosion_remote_violence": "explosion_remote_violence",
    "explosions/remote violence": "explosion_remote_violence",
    "explosions and remote violence": "explosion_remote_violence",
    "remote violence": "explosion_remote_violence",
    "violence_against_civilians": "violence_against_civilians",
    "violence against civilians": "violence_against_civilians",
    "riot": "riot",
    "riots": "riot",
    "protest": "protest",
    "protests": "protest",
    "strategic_development": "strategic_development",
    "strategic developments": "strategic_development",
}

DEFAULT_COLUMNS: dict[str, str] = {
    "id": "event_id_cnty",
    "date": "event_date",
    "lat": "latitude",
    "lon": "longitude",
    "event_type": "event_type",
}

DATE_FORMATS = ("%Y-%m-%d", "%d %B %Y", "%d-%b-%Y", "%d/%m/%Y", "%Y/%m/%d")


class ParseError(ValueError):
    """Fatal input problem (unreadable or incomplete header)."""


@dataclass(frozen=True)
class EventRecord:
    id: str
    date: dt.date
    year: int
    lon: float
    lat: float
    event_type: str
    cell: Optional[CellId] = None


@dataclass(frozen=True)
class RejectedRow:
    row: int  # 1-based data row number (header not counted)
    reason: str


@dataclass
class EventSet:
    """Filtered, cell-assigned event records plus parse accounting.

    ``records + rejects + excluded`` covers every input data row: rejects are
    malformed or out-of-bounds rows, excluded counts valid rows dropped by the
    event-type filter or the year span.
    """

    records: list[EventRecord]
    grid: GridSpec
    year_min: int
    year_max: int
    rejects: list[RejectedRow] = field(default_factory=list)
    excluded: dict[str, int] = field(default_factory=dict)
    n_input_rows: int = 0

    def __len__(self) -> int:
        return len(self.records)

    def counts_by_cell_year(self) -> dict[tuple[CellId, int], int]:
        counts: dict[tuple[CellId, int], int] = {}
        for rec in self.records:
            key = (rec.cell, rec.year)
            counts[key] = counts.get(key, 0) + 1
        return counts


def normalize_event_type(raw: str, aliases: Mapping[str, str] = DEFAULT_ALIASES) -> str:
    return aliases.get(raw.strip().lower(), "other")


def _parse_date(raw: str) -> dt.date:
    text = raw.strip()
    for fmt in DATE_FORMATS:
        try:
            return dt.datetime.strptime(text, fmt).date()
        except ValueError:
            continue
    raise ValueError(f"unparseable date {raw!r}")


def parse_events(
    stream: IO[str] | Iterable[str],
    grid: GridSpec,
    event_filter: Iterable[str] = DEFAULT_FILTER,
    span: tuple[int, int] = DEFAULT_SPAN,
    columns: Mapping[str, str] = DEFAULT_COLUMNS,
    aliases: Mapping[str, str] = DEFAULT_ALIASES,
) -> EventSet:
    """Parse a CSV stream of event rows into a filtered, cell-assigned EventSet.

    Parameters
    ----------
    stream : text stream with a header row
    grid : grid every retained event is binned into
    event_filter : canonical event types to keep (non-empty)
    span : inclusive (year_min, year_max) retention window
    columns : logical name -> CSV column name mapping; ``date``, ``lat``,
        ``lon`` and ``event_type`` are required, ``id`` optional
    aliases : case-insensitive raw event-type spellings -> canonical types

    Rows that fail to parse (bad date, non-numeric or out-of-bounds
    coordinates) are recorded in the rejects report with row number and
    reason, never silently dropped. Valid rows outside the filter or span
    are tallied in ``excluded``.
    """
    wanted = frozenset(event_filter)
    if not wanted:
        raise ValueError("event_filter must be non-empty")
    year_min, year_max = span
    if year_min > year_max:
        raise ValueError(f"invalid span {span}")

    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty input: no header row") from None

    col_index: dict[str, int] = {}
    missing = []
    for logical in ("date", "lat", "lon", "event_type"):
        name = columns.get(logical)
        if name is None or name not in header:
            missing.append(f"{logical} (column {name!r})")
        else:
            col_index[logical] = header.index(name)
    if missing:
        raise ParseError(f"header is missing required columns: {', '.join(missing)}")
    id_name = columns.get("id")
    id_idx = header.index(id_name) if id_name in header else None

    records: list[EventRecord] = []
    rejects: list[RejectedRow] = []
    excluded = {"event_type_filtered": 0, "out_of_span": 0}
    n_rows = 0

    for row_no, row in enumerate(reader, start=1):
        if not row or all(not f.strip() for f in row):
            continue
        n_rows += 1
        try:
            raw_type = row[col_index["event_type"]]
        except IndexError:
            rejects.append(RejectedRow(row_no, "short row"))
            continue
        etype = normalize_event_type(raw_type, aliases)
        if etype not in wanted:
            excluded["event_type_filtered"] += 1
            continue
        try:
            date = _parse_date(row[col_index["date"]])
        except (ValueError, IndexError) as exc:
            rejects.append(RejectedRow(row_no, str(exc)))
            continue
        if not (year_min <= date.year <= year_max):
            excluded["out_of_span"] += 1
            continue
        try:
            lon = float(row[col_index["lon"]])
            lat = float(row[col_index["lat"]])
        except (ValueError, IndexError):
            rejects.append(RejectedRow(row_no, "non-numeric coordinates"))
            continue
        try:
            cell = grid.cell_of(lon, lat)
        except ValueError as exc:
            rejects.append(RejectedRow(row_no, str(exc)))
            continue
        rec_id = row[id_idx] if id_idx is not None and id_idx < len(row) else f"row{row_no}"
        records.append(
            EventRecord(
                id=rec_id,
                date=date,
                year=date.year,
                lon=lon,
                lat=lat,
                event_type=etype,
                cell=cell,
            )
        )

    return EventSet(
        records=records,
        grid=grid,
        year_min=year_min,
        year_max=year_max,
        rejects=rejects,
        excluded=excluded,
        n_input_rows=n_rows,
    )


def write_rejects_csv(events: EventSet, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["row", "reason"])
    for rej in events.rejects:
        writer.writerow([rej.row, rej.reason])


def write_events_csv(events: EventSet, stream: IO[str]) -> None:
    """Normalized event export (the ingest stage artifact)."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["id", "date", "year", "lon", "lat", "event_type", "cell_col", "cell_row"])
    for rec in events.records:
        writer.writerow(
            [
                rec.id,
                rec.date.isoformat(),
                rec.year,
                repr(rec.lon),
                repr(rec.lat),
                rec.event_type,
                rec.cell.col,
                rec.cell.row,
            ]
        )


def read_events_csv(
    stream: IO[str] | Iterable[str],
    grid: GridSpec,
    span: tuple[int, int],
) -> EventSet:
    """Read back a normalized event export written by write_events_csv."""
    reader = csv.DictReader(stream)
    records = []
    for row in reader:
        records.append(
            EventRecord(
                id=row["id"],
                date=dt.date.fromisoformat(row["date"]),
                year=int(row["year"]),
                lon=float(row["lon"]),
                lat=float(row["lat"]),
                event_type=row["event_type"],
                cell=CellId(int(row["cell_col"]), int(row["cell_row"])),
            )
        )
    return EventSet(
        records=records,
        grid=grid,
        year_min=span[0],
        year_max=span[1],
        n_input_rows=len(records),
    )
