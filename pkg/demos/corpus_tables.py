"""Corpus tables over the 20-app fixture: library scopes, download buckets, accounts, months."""

import json
from pathlib import Path

from dexobf.corpus import CorpusAggregate, CorpusRecord, rows_to_csv
from dexobf.model import FeatureReport, PackageDetail, ViewFlags, in_package_subtree

FIXTURE = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "corpus20.json"


def to_record(entry):
    details = {p: PackageDetail(class_name_obfuscated=f, class_count=3) for p, f in entry["packages"].items()}
    main = entry["main"]
    inside = [d.flags() for p, d in details.items() if main and in_package_subtree(p, main)]
    report = FeatureReport(
        entry["app_id"],
        ViewFlags.any_of(d.flags() for d in details.values()),
        ViewFlags.any_of(inside) if inside else None,
        details,
    )
    return CorpusRecord(entry["app_id"], report, entry["bucket"], entry["account"], entry["date"])


records = [to_record(e) for e in json.loads(FIXTURE.read_text())]

# two halves aggregated separately, then merged
half = len(records) // 2
agg = CorpusAggregate().update(records[:half]).merge(CorpusAggregate().update(records[half:]))

print("top obfuscated scopes:")
for s in agg.scope_ranking()[:5]:
    print(f"  {s.scope}: {s.package_count} packages in {s.unique_apps} apps")
print()
print(rows_to_csv(agg.download_table()))
print(rows_to_csv(agg.account_table()))
print(rows_to_csv(agg.trend_table()))
print("orphan bound:", agg.orphan_bound(), f"(dates skipped: {agg.skipped_dates})")
