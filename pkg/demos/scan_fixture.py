"""Extract a model from the fixture APKs and show what the detector flags.

The debug build keeps line numbers and source files; the stripped build does not.
Both carry a small library package whose names are already short.
"""

from pathlib import Path

from dexobf.detect import analyze
from dexobf.dex import parse_apk

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

for name in ("hello.apk", "hello-stripped.apk"):
    app = parse_apk((FIXTURES / name).read_bytes(), name, "com.dev.app")
    report = analyze(app)
    print(f"== {name}: {len(app.classes)} classes")
    for view, flags in (("all packages", report.all_packages), ("main package", report.main_package)):
        on = [k for k, v in flags.as_dict().items() if v]
        print(f"  {view}: {', '.join(on) or 'nothing flagged'}")
    for pkg, detail in report.packages.items():
        print(f"  {pkg}: classes={detail.class_count} match={detail.class_name_match}")
