"""Turn the plain corpus fixture into feature reports and corpus records."""

import json
from pathlib import Path

from dexobf.corpus import CorpusRecord
from dexobf.model import FeatureReport, PackageDetail, ViewFlags, in_package_subtree

FIXTURE = Path(__file__).parent / "fixtures" / "corpus20.json"


def make_report(app_id, packages, main=None):
    details = {p: PackageDetail(class_name_obfuscated=flag, class_count=3) for p, flag in packages.items()}
    inside = [d.flags() for p, d in details.items() if main is not None and in_package_subtree(p, main)]
    return FeatureReport(
        app_id=app_id,
        all_packages=ViewFlags.any_of(d.flags() for d in details.values()),
        main_package=ViewFlags.any_of(inside) if inside else None,
        packages=details,
    )


def record(app_id, packages, main=None, bucket="100+", account=None, date="2016-01-01"):
    return CorpusRecord(app_id, make_report(app_id, packages, main), bucket, account or app_id, date)


def load_fixture():
    entries = json.loads(FIXTURE.read_text())
    return [record(e["app_id"], e["packages"], e["main"], e["bucket"], e["account"], e["date"]) for e in entries]
