"""CSV ingestion: benchmark records, suite summaries, and lineage series.

Input files are plain UTF-8 CSVs with a header row:

* ``systems.csv``: record_id, suite, date(YYYY-MM), vendor, system, processor,
  cores, freq_mhz, l3_kb, threads_per_core, auto_parallel(0/1), transistors,
  score_speed, score_rate.  Empty cell = missing.
* ``micros.csv``: record_id, micro_name, ratio.
* ``lineage.csv``: processor, genus, parent_genus (empty for root).
"""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, field, replace

__all__ = [
    "DataError",
    "MONTH_ORIGIN",
    "SUITES",
    "SUITE_ORDER",
    "SuiteDefinition",
    "HardwareConfig",
    "BenchmarkRecord",
    "SuiteSummary",
    "LineageSeries",
    "parse_month",
    "format_month",
    "parse_records",
    "parse_records_lenient",
    "summarize",
    "parse_lineage",
    "lineage_series",
]


class DataError(ValueError):
    """Raised when input data violates the declared schema or a precondition."""


# Month 0 of the time scale.
MONTH_ORIGIN = (1995, 8)

SUITE_ORDER = (1995, 2000, 2006, 2017)


def parse_month(text: str) -> int:
    """Parse "YYYY-MM" (or "YYYY-MM-DD", day truncated) to a month index.

    Month 0 is 1995-08; finer-than-month resolution is discarded.
    """
    parts = text.strip().split("-")
    if len(parts) not in (2, 3):
        raise DataError(f"bad date {text!r}: expected YYYY-MM")
    try:
        year, month = int(parts[0]), int(parts[1])
    except ValueError:
        raise DataError(f"bad date {text!r}: expected YYYY-MM") from None
    if not 1 <= month <= 12:
        raise DataError(f"bad date {text!r}: month out of range")
    index = (year - MONTH_ORIGIN[0]) * 12 + (month - MONTH_ORIGIN[1])
    if index < 0:
        raise DataError(f"bad date {text!r}: before {format_month(0)}")
    return index


def format_month(index: int) -> str:
    """Inverse of :func:`parse_month`: month index to "YYYY-MM"."""
    if index < 0:
        raise DataError(f"negative month index {index}")
    year, month = divmod(MONTH_ORIGIN[1] - 1 + index, 12)
    return f"{MONTH_ORIGIN[0] + year:04d}-{month + 1:02d}"


@dataclass(frozen=True)
class SuiteDefinition:
    """A benchmark-suite generation: its micro set and composition constant.

    ``composition_constant`` is the additive constant of the log-scale score
    composition; it is 0 when micro values are already ratios to reference
    times, which is how our inputs are stored.
    """

    suite: int
    micro_names: tuple[str, ...]
    composition_constant: float = 0.0

    @property
    def p(self) -> int:
        return len(self.micro_names)


SUITES: dict[int, SuiteDefinition] = {
    1995: SuiteDefinition(1995, (
        "go", "m88ksim", "gcc", "compress", "li", "ijpeg", "perl", "vortex",
    )),
    2000: SuiteDefinition(2000, (
        "gzip", "vpr", "gcc", "mcf", "crafty", "parser", "eon", "perl",
        "gap", "vortex", "bzip2", "twolf",
    )),
    2006: SuiteDefinition(2006, (
        "perl", "bzip2", "gcc", "mcf", "gobmk", "hmmer", "sjeng",
        "libquantum", "h264ref", "omnetpp", "astar", "xalancbmk",
    )),
    2017: SuiteDefinition(2017, (
        "perl", "gcc", "mcf", "omnetpp", "xalancbmk", "x264", "deepsjeng",
        "leela", "exchange2", "xz",
    )),
}


@dataclass(frozen=True)
class HardwareConfig:
    """Hardware factors of one benchmarked system.  Missing fields are None."""

    cores: int | None = None
    freq_mhz: float | None = None
    l3_kb: float | None = None
    threads_per_core: float | None = None
    auto_parallel: bool | None = None
    transistors: int | None = None


@dataclass(frozen=True)
class BenchmarkRecord:
    """One machine's benchmark result within one suite generation."""

    record_id: str
    suite: int
    date: int  # month index
    system_id: str
    processor: str
    hw: HardwareConfig
    score_speed: float | None = None
    score_rate: float | None = None
    micros: dict[str, float] = field(default_factory=dict)
    # Filled by normalization; None until then.
    score_norm: float | None = None
    micros_norm: dict[str, float] = field(default_factory=dict)

    def with_norm(self, score_norm, micros_norm=None) -> "BenchmarkRecord":
        return replace(self, score_norm=score_norm,
                       micros_norm=dict(micros_norm or {}))


@dataclass(frozen=True)
class SuiteSummary:
    suite: int
    score_kind: str
    score_max: float
    score_mean: float
    score_min: float
    count: int
    mean_cores: float | None
    mean_freq_mhz: float | None
    mean_l3_kb: float | None
    mean_threads_per_core: float | None


@dataclass(frozen=True)
class LineageSeries:
    """Mean log normalized score per generation along one ancestry branch."""

    genus: str
    points: tuple[tuple[int, float], ...]  # (month index, mean log score)


def _system_id(vendor: str, system: str, processor: str) -> str:
    raw = " ".join((vendor, system, processor))
    return " ".join(raw.lower().split())


def _cell(row: dict, name: str, line: int) -> str:
    if name not in row or row[name] is None:
        raise DataError(f"line {line}: missing column {name!r}")
    return row[name].strip()


def _parse_float(row, name, line, *, positive=False, nonnegative=False):
    text = _cell(row, name, line)
    if text == "":
        return None
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"line {line}: column {name!r}: not a number: {text!r}") from None
    if positive and value <= 0:
        raise DataError(f"line {line}: column {name!r}: must be > 0, got {value}")
    if nonnegative and value < 0:
        raise DataError(f"line {line}: column {name!r}: must be >= 0, got {value}")
    return value


def _reader(stream) -> csv.DictReader:
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    if hasattr(stream, "read") and "b" in getattr(stream, "mode", "b"):
        data = stream.read()
        if isinstance(data, bytes):
            stream = io.StringIO(data.decode("utf-8"))
        else:
            stream = io.StringIO(data)
    return csv.DictReader(stream)


def _parse_system_row(row: dict, line: int) -> BenchmarkRecord:
    record_id = _cell(row, "record_id", line)
    if not record_id:
        raise DataError(f"line {line}: column 'record_id': empty")
    suite_text = _cell(row, "suite", line)
    try:
        suite = int(suite_text)
    except ValueError:
        raise DataError(f"line {line}: column 'suite': not an integer: {suite_text!r}") from None
    if suite not in SUITES:
        raise DataError(f"line {line}: column 'suite': unknown suite {suite}")
    try:
        date = parse_month(_cell(row, "date", line))
    except DataError as exc:
        raise DataError(f"line {line}: column 'date': {exc}") from None

    cores = _parse_float(row, "cores", line, positive=True)
    if cores is not None:
        if cores != int(cores):
            raise DataError(f"line {line}: column 'cores': must be an integer count")
        cores = int(cores)
    freq = _parse_float(row, "freq_mhz", line, positive=True)
    l3 = _parse_float(row, "l3_kb", line, nonnegative=True)
    tpc = _parse_float(row, "threads_per_core", line, positive=True)
    if tpc is not None and tpc < 1:
        raise DataError(f"line {line}: column 'threads_per_core': must be >= 1")
    ap_text = _cell(row, "auto_parallel", line)
    if ap_text == "":
        auto_parallel = None
    elif ap_text in ("0", "1"):
        auto_parallel = ap_text == "1"
    else:
        raise DataError(f"line {line}: column 'auto_parallel': expected 0 or 1, got {ap_text!r}")
    transistors = _parse_float(row, "transistors", line, positive=True)
    if transistors is not None:
        transistors = int(transistors)

    score_speed = _parse_float(row, "score_speed", line, positive=True)
    score_rate = _parse_float(row, "score_rate", line, positive=True)
    if score_speed is None and score_rate is None:
        raise DataError(f"line {line}: column 'score_speed': need score_speed or score_rate")

    vendor = _cell(row, "vendor", line)
    system = _cell(row, "system", line)
    processor = _cell(row, "processor", line)
    return BenchmarkRecord(
        record_id=record_id,
        suite=suite,
        date=date,
        system_id=_system_id(vendor, system, processor),
        processor=processor,
        hw=HardwareConfig(cores=cores, freq_mhz=freq, l3_kb=l3,
                          threads_per_core=tpc, auto_parallel=auto_parallel,
                          transistors=transistors),
        score_speed=score_speed,
        score_rate=score_rate,
    )


def parse_records(systems_csv, micros_csv=None,
                  suites: dict[int, SuiteDefinition] | None = None) -> list[BenchmarkRecord]:
    """Parse systems and micros CSV streams into benchmark records.

    Raises :class:`DataError` on the first malformed row, naming the line
    number and column.  Micro rows are joined onto records by record_id;
    micro names must belong to the record's suite.
    """
    records, rejected = parse_records_lenient(systems_csv, micros_csv, suites=suites)
    if rejected:
        raise DataError(rejected[0][1])
    return records


def parse_records_lenient(systems_csv, micros_csv=None,
                          suites: dict[int, SuiteDefinition] | None = None):
    """Like :func:`parse_records` but collects rejected rows instead of raising.

    Returns ``(records, rejected)`` where ``rejected`` is a list of
    ``(line_number, message)``.  Accepted + rejected row counts add up to the
    input row count (header excluded).  A rejected systems row also rejects
    any micro rows referencing it.
    """
    suites = suites or SUITES
    records: dict[str, BenchmarkRecord] = {}
    rejected: list[tuple[int, str]] = []
    order: list[str] = []
    bad_ids: set[str] = set()

    for line, row in enumerate(_reader(systems_csv), start=2):
        try:
            rec = _parse_system_row(row, line)
            if rec.record_id in records:
                raise DataError(f"line {line}: column 'record_id': duplicate id {rec.record_id!r}")
        except DataError as exc:
            rejected.append((line, str(exc)))
            rid = (row.get("record_id") or "").strip()
            if rid:
                bad_ids.add(rid)
            continue
        records[rec.record_id] = rec
        order.append(rec.record_id)

    if micros_csv is not None:
        for line, row in enumerate(_reader(micros_csv), start=2):
            try:
                rid = _cell(row, "record_id", line)
                name = _cell(row, "micro_name", line)
                ratio = _parse_float(row, "ratio", line, positive=True)
                if ratio is None:
                    raise DataError(f"line {line}: column 'ratio': empty")
                if rid not in records:
                    if rid in bad_ids:
                        raise DataError(f"line {line}: record_id {rid!r} was rejected")
                    raise DataError(f"line {line}: record_id {rid!r} not in systems file")
                suite_def = suites[records[rid].suite]
                if name not in suite_def.micro_names:
                    raise DataError(
                        f"line {line}: column 'micro_name': {name!r} is not in "
                        f"suite {suite_def.suite}")
            except DataError as exc:
                rejected.append((line, str(exc)))
                continue
            records[rid].micros[name] = ratio

    return [records[rid] for rid in order], rejected


def _mean_or_none(values) -> float | None:
    values = [v for v in values if v is not None]
    return statistics.fmean(values) if values else None


def summarize(records: list[BenchmarkRecord], suite: int,
              score_kind: str = "speed") -> SuiteSummary:
    """Summary statistics for one suite, mirroring the published data tables.

    Missing hardware fields are excluded from that field's mean.
    """
    if score_kind not in ("speed", "rate"):
        raise DataError(f"score_kind must be 'speed' or 'rate', got {score_kind!r}")
    attr = "score_speed" if score_kind == "speed" else "score_rate"
    rows = [r for r in records if r.suite == suite and getattr(r, attr) is not None]
    if not rows:
        raise DataError(f"no records for suite {suite} with {score_kind} score")
    scores = [getattr(r, attr) for r in rows]
    return SuiteSummary(
        suite=suite,
        score_kind=score_kind,
        score_max=max(scores),
        score_mean=statistics.fmean(scores),
        score_min=min(scores),
        count=len(rows),
        mean_cores=_mean_or_none(r.hw.cores for r in rows),
        mean_freq_mhz=_mean_or_none(r.hw.freq_mhz for r in rows),
        mean_l3_kb=_mean_or_none(r.hw.l3_kb for r in rows),
        mean_threads_per_core=_mean_or_none(r.hw.threads_per_core for r in rows),
    )


def parse_lineage(lineage_csv) -> dict[str, tuple[str, str | None]]:
    """Parse lineage rows to ``processor -> (genus, parent_genus | None)``."""
    out: dict[str, tuple[str, str | None]] = {}
    for line, row in enumerate(_reader(lineage_csv), start=2):
        proc = _cell(row, "processor", line)
        genus = _cell(row, "genus", line)
        parent = _cell(row, "parent_genus", line) or None
        if not proc or not genus:
            raise DataError(f"line {line}: processor and genus are required")
        out[proc] = (genus, parent)
    return out


def lineage_series(lineage_csv, records: list[BenchmarkRecord],
                   max_generations: int = 3):
    """Per-branch generation series of mean log normalized scores.

    Returns ``(series, lag1_correlation)``.  The correlation pools the
    (previous generation mean, next generation mean) pairs across all
    branches; it is None (undefined) when either side has zero variance.
    Records must carry normalized scores (see ``normalize.chain_normalize``).
    """
    lineage = parse_lineage(lineage_csv)
    genus_parent: dict[str, str | None] = {}
    for genus, parent in lineage.values():
        genus_parent.setdefault(genus, parent)

    by_genus: dict[str, list[BenchmarkRecord]] = {}
    for rec in records:
        if rec.processor in lineage and rec.score_norm is not None:
            by_genus.setdefault(lineage[rec.processor][0], []).append(rec)

    def genus_point(genus: str) -> tuple[int, float] | None:
        rows = by_genus.get(genus)
        if not rows:
            return None
        t = round(statistics.fmean(r.date for r in rows))
        return t, statistics.fmean(math.log(r.score_norm) for r in rows)

    # Branch roots: genera that are not anyone's parent (the youngest ends).
    parents = {p for p in genus_parent.values() if p is not None}
    tips = [g for g in sorted(genus_parent) if g not in parents]

    series: list[LineageSeries] = []
    pairs: list[tuple[float, float]] = []
    for tip in tips:
        chain: list[str] = []
        g: str | None = tip
        while g is not None and len(chain) < max_generations:
            chain.append(g)
            g = genus_parent.get(g)
        points = [p for p in (genus_point(g) for g in reversed(chain)) if p is not None]
        if len(points) < 2:
            continue
        points.sort(key=lambda p: p[0])
        if any(points[i][0] >= points[i + 1][0] for i in range(len(points) - 1)):
            raise DataError(f"branch {tip!r}: generation times are not strictly increasing")
        series.append(LineageSeries(genus=tip, points=tuple(points)))
        for (_, a), (_, b) in zip(points, points[1:]):
            pairs.append((a, b))

    if not series:
        raise DataError("insufficient lineage depth: no branch has 2+ generations with data")

    xs = [a for a, _ in pairs]
    ys = [b for _, b in pairs]
    correlation: float | None
    if len(pairs) < 2 or statistics.pvariance(xs) == 0 or statistics.pvariance(ys) == 0:
        correlation = None
    else:
        correlation = statistics.correlation(xs, ys)
    return series, correlation
