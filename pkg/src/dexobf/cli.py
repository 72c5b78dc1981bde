"""Command-line front end: scan, corpus, simulate, eval, grade.

Exit codes: 0 success, 1 input error, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import corpus as corpus_mod
from .detect import DetectorConfig, analyze
from .dex import DEFAULT_MARKERS, DexParseError, open_container, container_to_app, scan_names, scan_tool_markers
from .model import ModelError, app_from_dict, app_to_dict, dumps, load_app, load_report, report_to_dict
from .proguard import GradleParseError, RuleParseError, Rubric, grade, parse_gradle_snippet, parse_rules
from .simulate import SimulationPlan, evaluate, make_eval_corpus, metrics_csv, metrics_rows, simulate, write_manifest

log = logging.getLogger("dexobf")

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2


class InputError(Exception):
    """Bad user input; reported on stderr with exit code 1."""


# -- config -----------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    detector: DetectorConfig = DetectorConfig()
    markers: dict | None = None
    scope_depth: int = 3
    scope_rule: str = "parent"


_RUN_KEYS = {"markers", "scope_depth", "scope_rule"}


def load_config(path: str | None) -> RunConfig:
    """One JSON document: detector keys plus ``markers``, ``scope_depth``, ``scope_rule``."""
    if path is None:
        return RunConfig()
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise InputError(f"{path}: config must be a JSON object")
    run = {k: doc.pop(k) for k in list(doc) if k in _RUN_KEYS}
    try:
        cfg = RunConfig(detector=DetectorConfig.from_dict(doc), **run)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: invalid config: {exc}") from None
    if cfg.scope_rule not in corpus_mod.SCOPE_RULES:
        raise InputError(f"{path}: scope_rule must be one of {sorted(corpus_mod.SCOPE_RULES)}")
    return cfg


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None


def _read_json(path):
    try:
        return json.loads(_read_bytes(path).decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise InputError(f"{path}: not UTF-8: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}: malformed JSON: {exc.msg}") from None


def _write(path: Path, data: bytes | str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data.encode("utf-8") if isinstance(data, str) else data)


# -- scan -------------------------------------------------------------------


def _detect_format(path: str, data: bytes, fmt: str) -> str:
    if fmt != "auto":
        return fmt
    if data[:4] == b"dex\n":
        return "dex"
    if data[:2] == b"PK":
        return "apk"
    if path.lower().endswith(".json") or data.lstrip()[:1] == b"{":
        return "json"
    return "apk"


def scan_one(path: str, fmt: str, main_package: str | None, cfg: RunConfig, keep_model: bool = False) -> dict:
    """Scan one input. Never raises for bad input: errors come back as ``{"error": ...}``."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        return {"input": path, "error": exc.strerror or str(exc)}
    markers = cfg.markers or DEFAULT_MARKERS
    try:
        kind = _detect_format(path, data, fmt)
        if kind == "json":
            app = load_app(data)
            if main_package is not None:
                app = app_from_dict({**app_to_dict(app), "main_package": main_package})
            tool = scan_names((c.qualified_name for c in app.classes), markers)
        else:
            container = open_container(data, path)
            app = container_to_app(container, Path(path).stem, main_package)
            tool = scan_tool_markers(container, markers)
        report = analyze(app, cfg.detector)
    except (DexParseError, ModelError) as exc:
        return {"input": path, "error": str(exc)}
    doc = report_to_dict(report)
    doc["tool_markers"] = {
        "dexprotector_detected": tool.dexprotector_detected,
        "bangcle_detected": tool.bangcle_detected,
        "marker_evidence": list(tool.marker_evidence),
    }
    out = {"input": path, "report": doc}
    if keep_model:
        out["model"] = app_to_dict(app)
    return out


def _scan_job(args):
    return scan_one(*args)


def _map(fn, jobs, workers: int, processes: bool = True):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    pool = ProcessPoolExecutor if processes else ThreadPoolExecutor
    with pool(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


def _unique_stem(path: str, taken: set[str]) -> str:
    stem = Path(path).stem or "input"
    name, i = stem, 2
    while name in taken:
        name, i = f"{stem}-{i}", i + 1
    taken.add(name)
    return name


def cmd_scan(args) -> int:
    cfg = load_config(args.config)
    jobs = [(p, args.format, args.main_package, cfg, bool(args.save_model)) for p in args.paths]
    results = _map(_scan_job, jobs, args.workers)
    taken: set[str] = set()
    errors = []
    for res in results:
        if "error" in res:
            errors.append({"input": res["input"], "error": res["error"]})
            print(f"{res['input']}: error: {res['error']}", file=sys.stderr)
            continue
        stem = _unique_stem(res["input"], taken)
        body = dumps(res["report"])
        if args.out:
            target = Path(args.out) / f"{stem}.json"
            _write(target, body)
            print(f"{res['input']}: {_summary(res['report'])} -> {target}")
        else:
            sys.stdout.write(body.decode("utf-8"))
        if args.save_model:
            _write(Path(args.save_model) / f"{stem}.json", dumps(res["model"]))
    if args.out and errors:
        _write(Path(args.out) / "errors.json", dumps(errors))
    return EXIT_INPUT if errors and len(errors) == len(results) else EXIT_OK


def _summary(doc: dict) -> str:
    def flagged(view):
        return ",".join(k for k, v in view.items() if v) or "none"

    main = doc["main_package"]
    return f"all[{flagged(doc['all_packages'])}] main[{'n/a' if main is None else flagged(main)}]"


# -- corpus -----------------------------------------------------------------


def _load_reports(report_dir: Path) -> list:
    if not report_dir.is_dir():
        raise InputError(f"{report_dir}: not a directory")
    reports = []
    for path in sorted(report_dir.glob("*.json")):
        try:
            reports.append(load_report(path.read_bytes()))
        except (ModelError, OSError) as exc:
            log.warning("%s skipped: %s", path, exc)
    return reports


def cmd_corpus(args) -> int:
    cfg = load_config(args.config)
    depth = args.depth if args.depth is not None else cfg.scope_depth
    rule = corpus_mod.SCOPE_RULES[args.scope_rule or cfg.scope_rule](depth)
    reports = _load_reports(Path(args.report_dir))
    try:
        metadata, bad_rows = corpus_mod.read_metadata(_read_bytes(args.metadata).decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise InputError(f"{args.metadata}: {exc}") from None
    records = corpus_mod.join(reports, metadata)

    # partitions are aggregated independently and merged
    n = max(1, args.workers)
    chunks = [records[i::n] for i in range(n)]
    parts = _map(lambda chunk: corpus_mod.CorpusAggregate(rule).update(chunk), chunks, n, processes=False)
    agg = corpus_mod.CorpusAggregate(rule)
    for part in parts:
        agg = agg.merge(part)

    out = Path(args.out)
    scopes = [{"scope": s.scope, "package_count": s.package_count, "unique_apps": s.unique_apps} for s in agg.scope_ranking()]
    tables = {
        "scope_ranking": (scopes, ["scope", "package_count", "unique_apps"]),
        "downloads": (agg.download_table(), ["downloads_bucket", "total_apps", "main_package_apps", "no_main_package", "obfuscated_main", "percent"]),
        "accounts": (agg.account_table(micro=args.micro), ["apps_per_account", "unique_accounts", "percent"]),
        "trend": (agg.trend_table(), ["month", "apps", "all_packages_obfuscated", "all_packages_percent", "main_package_apps", "main_package_obfuscated", "main_package_percent"]),
        "orphan_bound": ([agg.orphan_bound()], ["apps", "total_apps", "percent"]),
    }
    for name, (rows, columns) in tables.items():
        _write(out / f"{name}.csv", corpus_mod.rows_to_csv(rows, columns))
        _write(out / f"{name}.json", corpus_mod.rows_to_json(rows))
    trend = agg.trend_table()
    for series in ("all_packages", "main_package"):
        two = [{"month": r["month"], "percent": r[f"{series}_percent"]} for r in trend]
        _write(out / f"trend_{series}.csv", corpus_mod.rows_to_csv(two, ["month", "percent"]))
    warnings = {
        "reports": len(reports),
        "metadata_rows_skipped": bad_rows,
        "reports_without_metadata": agg.missing_metadata,
        "unparseable_dates": agg.skipped_dates,
    }
    _write(out / "warnings.json", corpus_mod.rows_to_json(warnings))
    print(f"{len(reports)} reports -> {out} ({', '.join(f'{k}={v}' for k, v in warnings.items())})")
    return EXIT_OK


# -- simulate / eval --------------------------------------------------------


def _load_plan(path: str | None) -> SimulationPlan:
    if path is None:
        return SimulationPlan.full()
    doc = _read_json(path)
    if not isinstance(doc, dict):
        raise InputError(f"{path}: plan must be a JSON object")
    try:
        return SimulationPlan.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: invalid plan: {exc}") from None


def _load_model(path) -> "AppModel":  # noqa: F821
    try:
        return load_app(_read_bytes(path))
    except ModelError as exc:
        raise InputError(f"{path}: {exc}") from None


def cmd_simulate(args) -> int:
    app = _load_model(args.model)
    plan = _load_plan(args.plan)
    sim, rmap = simulate(app, plan)
    body = dumps(app_to_dict(sim))
    if args.out:
        _write(Path(args.out), body)
    else:
        sys.stdout.write(body.decode("utf-8"))
    if args.map:
        _write(Path(args.map), dumps(rmap.to_dict()))
    return EXIT_OK


def cmd_eval(args) -> int:
    plan = _load_plan(args.plan)
    models_dir = Path(args.models_dir)
    paths = sorted(models_dir.glob("*.json")) if models_dir.is_dir() else []
    if not paths:
        raise InputError(f"{models_dir}: no model JSON files found")
    apps = [_load_model(p) for p in paths]
    cfg = load_config(args.config)
    corpus = make_eval_corpus(apps, plan)
    if args.manifest:
        write_manifest(corpus, Path(args.manifest))
    scores = evaluate(corpus, cfg.detector)
    table = metrics_csv(scores)
    if args.out:
        out = Path(args.out)
        _write(out, table)
        _write(out.with_suffix(".json"), dumps(metrics_rows(scores)))
    sys.stdout.write(table)
    return EXIT_OK


# -- grade ------------------------------------------------------------------


def cmd_grade(args) -> int:
    gradle_text = _read_bytes(args.gradle).decode("utf-8", "replace")
    rules_text = _read_bytes(args.rules).decode("utf-8", "replace")
    try:
        build = parse_gradle_snippet(gradle_text, args.build_type)
    except GradleParseError as exc:
        raise InputError(f"{args.gradle}:{exc.line}: {_bare(exc)}") from None
    try:
        rules = parse_rules(rules_text)
    except RuleParseError as exc:
        raise InputError(f"{args.rules}:{exc.line}: {_bare(exc)}") from None
    doc = _read_json(args.rubric)
    try:
        rubric = Rubric.from_dict(doc)
    except (KeyError, TypeError, AttributeError, ValueError) as exc:
        raise InputError(f"{args.rubric}: invalid rubric: {exc!r}") from None
    app = _load_model(args.app) if args.app else None
    result = grade(build, rules, rubric, app, lenient=args.lenient)
    body = dumps(result.to_dict())
    if args.out:
        _write(Path(args.out), body)
    print(result.verdict + (": " + ", ".join(result.reasons) if result.reasons else ""))
    return EXIT_OK


def _bare(exc: RuleParseError) -> str:
    return str(exc).split(": ", 1)[-1]


# -- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dexobf", description="Detect and grade Android name obfuscation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("scan", help="detect obfuscation features in APK, DEX or model JSON files")
    s.add_argument("paths", nargs="+")
    s.add_argument("--main-package")
    s.add_argument("--format", choices=["auto", "apk", "dex", "json"], default="auto")
    s.add_argument("--config", help="JSON config: detector thresholds, markers, scope depth")
    s.add_argument("--out", help="directory for one report JSON per input (default: stdout)")
    s.add_argument("--save-model", metavar="DIR", help="also write the extracted model JSON per input")
    s.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    s.set_defaults(func=cmd_scan)

    c = sub.add_parser("corpus", help="corpus tables from a directory of reports plus metadata CSV")
    c.add_argument("report_dir")
    c.add_argument("metadata")
    c.add_argument("--out", required=True)
    c.add_argument("--depth", type=int)
    c.add_argument("--scope-rule", choices=sorted(corpus_mod.SCOPE_RULES))
    c.add_argument("--micro", action="store_true", help="pool apps per account bucket instead of averaging accounts")
    c.add_argument("--config")
    c.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    c.set_defaults(func=cmd_corpus)

    m = sub.add_parser("simulate", help="apply ProGuard-style transforms to a model JSON")
    m.add_argument("model")
    m.add_argument("--plan", help="plan JSON (default: everything enabled)")
    m.add_argument("--out")
    m.add_argument("--map", help="write the rename map JSON here")
    m.set_defaults(func=cmd_simulate)

    e = sub.add_parser("eval", help="score the detector on originals vs simulated copies")
    e.add_argument("models_dir")
    e.add_argument("plan")
    e.add_argument("--out", help="metrics CSV path (a .json twin is written next to it)")
    e.add_argument("--manifest", metavar="DIR", help="also write the labeled corpus here")
    e.add_argument("--config")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("grade", help="grade a build.gradle snippet and ProGuard rules against a rubric")
    g.add_argument("gradle")
    g.add_argument("rules")
    g.add_argument("rubric")
    g.add_argument("--app", help="model JSON used to spot misspelled class names")
    g.add_argument("--out")
    g.add_argument("--lenient", action="store_true", help="a class-level keep also covers its members")
    g.add_argument("--build-type", default="release")
    g.set_defaults(func=cmd_grade)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception:  # noqa: BLE001
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
