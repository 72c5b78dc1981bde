"""Corpus-level tables over feature reports joined with store metadata.

An app counts as obfuscated when class-name obfuscation is flagged. All tables
come from :class:`CorpusAggregate`, whose state merges across partitions, so a
corpus can be ingested in parallel chunks and combined at the end.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .model import FeatureReport

log = logging.getLogger(__name__)

DOWNLOAD_BUCKETS = ("0+", "10+", "100+", "1k+", "10k+", "100k+", "1M+", "10M+", "100M+")
_BUCKET_ALIASES = {
    "1,000+": "1k+", "1000+": "1k+",
    "10,000+": "10k+", "10000+": "10k+",
    "100,000+": "100k+", "100000+": "100k+",
    "1,000,000+": "1M+", "1000000+": "1M+",
    "10,000,000+": "10M+", "10000000+": "10M+",
    "100,000,000+": "100M+", "100000000+": "100M+",
}
ACCOUNT_EDGES = (1, 2, 10, 100, 250, 500)


def normalize_bucket(raw: str) -> str:
    raw = raw.strip()
    bucket = _BUCKET_ALIASES.get(raw, raw)
    if bucket not in DOWNLOAD_BUCKETS:
        raise ValueError(f"unknown downloads bucket {raw!r}")
    return bucket


def parse_date(value) -> dt.date | None:
    if isinstance(value, dt.date):
        return value
    try:
        return dt.date.fromisoformat(str(value).strip())
    except ValueError:
        return None


@dataclass(frozen=True)
class CorpusRecord:
    app_id: str
    report: FeatureReport
    downloads_bucket: str | None = None
    account_id: str | None = None
    last_update: dt.date | str | None = None

    @property
    def has_metadata(self) -> bool:
        return self.downloads_bucket is not None


@dataclass(frozen=True)
class ScopeStat:
    scope: str
    package_count: int
    unique_apps: int


def first_segments(depth: int = 3) -> Callable[[str], str]:
    """Scope = the first ``min(depth, len(segments))`` package segments."""

    def rule(package: str) -> str:
        return ".".join(package.split(".")[:depth])

    return rule


def parent_segments(depth: int = 3) -> Callable[[str], str]:
    """Scope = the parent package, capped at ``depth`` segments (one-segment packages stay).

    This is the default: ``com.google.ads.x`` -> ``com.google.ads`` and
    ``org.fmod.core`` -> ``org.fmod``.
    """

    def rule(package: str) -> str:
        parts = package.split(".")
        return ".".join(parts[: max(1, min(depth, len(parts) - 1))])

    return rule


SCOPE_RULES = {"parent": parent_segments, "prefix": first_segments}


def _pct(num: int, den: int) -> float | None:
    return None if den == 0 else round(100.0 * num / den, 2)


@dataclass
class _Account:
    apps: int = 0
    eligible: int = 0
    flagged: int = 0


@dataclass
class CorpusAggregate:
    scope_rule: Callable[[str], str] = field(default_factory=parent_segments)
    apps: int = 0
    scope_packages: Counter = field(default_factory=Counter)
    scope_apps: dict = field(default_factory=lambda: defaultdict(set))
    # bucket -> [apps, eligible (main view present), flagged]
    buckets: dict = field(default_factory=lambda: defaultdict(lambda: [0, 0, 0]))
    accounts: dict = field(default_factory=lambda: defaultdict(_Account))
    # "YYYY-MM" -> [apps, all flagged, main eligible, main flagged]
    months: dict = field(default_factory=lambda: defaultdict(lambda: [0, 0, 0, 0]))
    skipped_dates: int = 0
    missing_metadata: int = 0
    # package name -> number of apps containing it; per app the obfuscated packages
    package_apps: Counter = field(default_factory=Counter)
    orphan_candidates: dict = field(default_factory=dict)

    def add(self, rec: CorpusRecord) -> None:
        report = rec.report
        self.apps += 1
        obfuscated = [p for p, d in report.packages.items() if d.class_name_obfuscated]
        for pkg in obfuscated:
            scope = self.scope_rule(pkg)
            self.scope_packages[scope] += 1
            self.scope_apps[scope].add(rec.app_id)
        self.package_apps.update(set(report.packages))
        main = report.main_package
        main_flagged = bool(main and main.class_name_obfuscated)
        if main is not None and not main_flagged and obfuscated:
            self.orphan_candidates[rec.app_id] = tuple(obfuscated)

        if not rec.has_metadata:
            self.missing_metadata += 1
            return
        b = self.buckets[normalize_bucket(rec.downloads_bucket)]
        b[0] += 1
        if main is not None:
            b[1] += 1
            b[2] += main_flagged
        if rec.account_id is not None:
            acc = self.accounts[rec.account_id]
            acc.apps += 1
            if main is not None:
                acc.eligible += 1
                acc.flagged += main_flagged
        date = parse_date(rec.last_update) if rec.last_update is not None else None
        if date is None:
            self.skipped_dates += 1
        else:
            m = self.months[f"{date.year:04d}-{date.month:02d}"]
            m[0] += 1
            m[1] += report.all_packages.class_name_obfuscated
            if main is not None:
                m[2] += 1
                m[3] += main_flagged

    def update(self, records: Iterable[CorpusRecord]) -> "CorpusAggregate":
        for rec in records:
            self.add(rec)
        return self

    def merge(self, other: "CorpusAggregate") -> "CorpusAggregate":
        out = CorpusAggregate(self.scope_rule)
        for part in (self, other):
            out.apps += part.apps
            out.scope_packages.update(part.scope_packages)
            for k, v in part.scope_apps.items():
                out.scope_apps[k] |= v
            for k, v in part.buckets.items():
                out.buckets[k] = [a + b for a, b in zip(out.buckets[k], v)]
            for k, v in part.accounts.items():
                acc = out.accounts[k]
                acc.apps += v.apps
                acc.eligible += v.eligible
                acc.flagged += v.flagged
            for k, v in part.months.items():
                out.months[k] = [a + b for a, b in zip(out.months[k], v)]
            out.skipped_dates += part.skipped_dates
            out.missing_metadata += part.missing_metadata
            out.package_apps.update(part.package_apps)
            out.orphan_candidates.update(part.orphan_candidates)
        return out

    # -- tables

    def scope_ranking(self) -> list[ScopeStat]:
        stats = [ScopeStat(s, self.scope_packages[s], len(self.scope_apps[s])) for s in self.scope_packages]
        return sorted(stats, key=lambda s: (-s.unique_apps, -s.package_count, s.scope))

    def download_table(self) -> list[dict]:
        rows = []
        for bucket in DOWNLOAD_BUCKETS:
            if bucket not in self.buckets:
                continue
            total, eligible, flagged = self.buckets[bucket]
            rows.append(
                {
                    "downloads_bucket": bucket,
                    "total_apps": total,
                    "main_package_apps": eligible,
                    "no_main_package": total - eligible,
                    "obfuscated_main": flagged,
                    "percent": _pct(flagged, eligible),
                }
            )
        return rows

    def account_table(self, edges: Sequence[int] = ACCOUNT_EDGES, micro: bool = False) -> list[dict]:
        """Per apps-per-account bucket: label ``1`` is exactly one app, ``N+`` is at least N."""
        rows = []
        for edge in edges:
            label = str(edge) if edge == 1 else f"{edge}+"
            members = [
                a for a in self.accounts.values()
                if a.eligible and (a.apps == edge if edge == 1 else a.apps >= edge)
            ]
            if not members:
                continue
            if micro:
                rate = _pct(sum(a.flagged for a in members), sum(a.eligible for a in members))
            else:
                rate = round(sum(100.0 * a.flagged / a.eligible for a in members) / len(members), 2)
            rows.append({"apps_per_account": label, "unique_accounts": len(members), "percent": rate})
        return rows

    def trend_table(self) -> list[dict]:
        rows = []
        for month in sorted(self.months):
            apps, all_flagged, eligible, main_flagged = self.months[month]
            rows.append(
                {
                    "month": month,
                    "apps": apps,
                    "all_packages_obfuscated": all_flagged,
                    "all_packages_percent": _pct(all_flagged, apps),
                    "main_package_apps": eligible,
                    "main_package_obfuscated": main_flagged,
                    "main_package_percent": _pct(main_flagged, eligible),
                }
            )
        return rows

    def orphan_bound(self) -> dict:
        count = sum(
            1 for pkgs in self.orphan_candidates.values() if any(self.package_apps[p] == 1 for p in pkgs)
        )
        return {"apps": count, "total_apps": self.apps, "percent": _pct(count, self.apps)}


def _aggregate(corpus: Iterable[CorpusRecord], **kwargs) -> CorpusAggregate:
    return CorpusAggregate(**kwargs).update(corpus)


def scope_ranking(corpus: Iterable[CorpusRecord], depth_rule: Callable[[str], str] | None = None) -> list[ScopeStat]:
    return _aggregate(corpus, scope_rule=depth_rule or parent_segments()).scope_ranking()


def rate_by_download_bucket(corpus: Iterable[CorpusRecord]) -> list[dict]:
    return _aggregate(corpus).download_table()


def rate_by_account(corpus: Iterable[CorpusRecord], bucket_edges: Sequence[int] = ACCOUNT_EDGES, micro: bool = False) -> list[dict]:
    return _aggregate(corpus).account_table(bucket_edges, micro)


def trend_by_month(corpus: Iterable[CorpusRecord]) -> tuple[list[dict], int]:
    """Monthly series plus the number of records skipped for an unusable date."""
    agg = _aggregate(corpus)
    return agg.trend_table(), agg.skipped_dates


def orphan_obfuscation_bound(corpus: Iterable[CorpusRecord]) -> dict:
    return _aggregate(corpus).orphan_bound()


# -- I/O --------------------------------------------------------------------

METADATA_COLUMNS = ("app_id", "downloads_bucket", "account_id", "last_update")


@dataclass(frozen=True)
class Metadata:
    downloads_bucket: str
    account_id: str
    last_update: str


def read_metadata(text: str) -> tuple[dict[str, Metadata], int]:
    """Parse the metadata CSV. Returns rows keyed by app id and the count of skipped rows."""
    reader = csv.DictReader(io.StringIO(text))
    missing = set(METADATA_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"metadata CSV lacks columns: {sorted(missing)}")
    rows, skipped = {}, 0
    for i, row in enumerate(reader, 2):
        try:
            if None in row or any(row[c] is None for c in METADATA_COLUMNS) or not row["app_id"]:
                raise ValueError("wrong number of columns")
            bucket = normalize_bucket(row["downloads_bucket"])
        except ValueError as exc:
            log.warning("metadata line %d skipped: %s", i, exc)
            skipped += 1
            continue
        rows[row["app_id"]] = Metadata(bucket, row["account_id"], row["last_update"])
    return rows, skipped


def join(reports: Iterable[FeatureReport], metadata: dict[str, Metadata]) -> list[CorpusRecord]:
    out = []
    for r in reports:
        meta = metadata.get(r.app_id)
        if meta is None:
            log.warning("no metadata for %s; excluded from bucket tables", r.app_id)
            out.append(CorpusRecord(r.app_id, r))
        else:
            out.append(CorpusRecord(r.app_id, r, meta.downloads_bucket, meta.account_id, meta.last_update))
    return out


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str] | None = None) -> str:
    buf = io.StringIO()
    columns = list(columns or (rows[0].keys() if rows else []))
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row[k] is None else f"{row[k]:.2f}" if isinstance(row[k], float) else row[k]) for k in columns})
    return buf.getvalue()


def rows_to_json(rows) -> str:
    return json.dumps(rows, indent=2, sort_keys=True) + "\n"
