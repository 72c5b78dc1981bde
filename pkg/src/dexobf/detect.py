"""Obfuscation feature detectors.

Names are matched scope by scope: the class names of a package, the method
names of a class, the field names of a class and the sub-package segments of
a package. A scope is consistent with ProGuard when most of its names belong to
the first ``len(scope)`` generated names. Scopes smaller than
``min_scope_size`` get no verdict.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .model import (
    AppModel,
    ClassRecord,
    FeatureReport,
    PackageDetail,
    PackageTree,
    ViewFlags,
    build_package_tree,
    in_package_subtree,
)
from .names import (
    LOWER_CASE,
    MIXED_CASE,
    RenameAlphabet,
    WindowsKeywordSet,
    generated_prefix,
    has_uppercase_single_letter,
    match_scope,
)


@dataclass(frozen=True)
class DetectorConfig:
    min_scope_size: int = 3
    match_threshold: float = 0.5
    evaluate_annotations: bool = True
    alphabet_modes: frozenset[str] = frozenset({MIXED_CASE, LOWER_CASE})
    extra_alphabets: tuple[RenameAlphabet, ...] = ()
    windows_keywords: WindowsKeywordSet = field(default_factory=WindowsKeywordSet)

    def __post_init__(self):
        object.__setattr__(self, "alphabet_modes", frozenset(self.alphabet_modes))
        object.__setattr__(self, "extra_alphabets", tuple(self.extra_alphabets))
        if not 0 < self.match_threshold <= 1:
            raise ValueError("match_threshold must be in (0, 1]")
        if self.min_scope_size < 1:
            raise ValueError("min_scope_size must be >= 1")
        unknown = self.alphabet_modes - {MIXED_CASE, LOWER_CASE}
        if unknown:
            raise ValueError(f"unknown alphabet modes: {sorted(unknown)}")
        if not self.alphabet_modes and not self.extra_alphabets:
            raise ValueError("at least one alphabet is required")

    @classmethod
    def from_dict(cls, doc: dict) -> "DetectorConfig":
        kwargs = dict(doc)
        if "alphabet_modes" in kwargs:
            kwargs["alphabet_modes"] = frozenset(kwargs["alphabet_modes"])
        if "extra_alphabets" in kwargs:
            kwargs["extra_alphabets"] = tuple(RenameAlphabet.custom(w) for w in kwargs["extra_alphabets"])
        if "windows_keywords" in kwargs:
            kwargs["windows_keywords"] = WindowsKeywordSet(frozenset(kwargs["windows_keywords"]))
        return cls(**kwargs)


def candidate_alphabets(names: Iterable[str], cfg: DetectorConfig) -> list[RenameAlphabet]:
    """Alphabets worth trying for a scope.

    Lowercase is always tried; mixed case only once an uppercase one-letter
    name shows up, since that is the only place the two sequences differ early.
    """
    out = []
    if LOWER_CASE in cfg.alphabet_modes:
        out.append(RenameAlphabet.lower_case())
    if MIXED_CASE in cfg.alphabet_modes and (
        LOWER_CASE not in cfg.alphabet_modes or has_uppercase_single_letter(names)
    ):
        out.append(RenameAlphabet.mixed_case())
    out.extend(cfg.extra_alphabets)
    return out


def scope_match(names: Iterable[str], cfg: DetectorConfig) -> float:
    names = set(names)
    return max(match_scope(names, al) for al in candidate_alphabets(names, cfg))


def _matched(names: set[str], cfg: DetectorConfig) -> int:
    return max(len(names & generated_prefix(al, len(names))) for al in candidate_alphabets(names, cfg))


@dataclass(frozen=True)
class ScopeVerdict:
    flagged: bool
    fraction: float | None  # None when the scope is too small to judge
    matched: int = 0


_NO_VERDICT = ScopeVerdict(False, None, 0)


def judge_scope(names: Iterable[str], cfg: DetectorConfig, size: int | None = None) -> ScopeVerdict:
    """Verdict for one scope. ``size`` overrides the scope size used for the minimum check."""
    names = set(names)
    n = len(names) if size is None else size
    if not names or n < cfg.min_scope_size:
        return _NO_VERDICT
    frac = scope_match(names, cfg)
    return ScopeVerdict(frac >= cfg.match_threshold, frac, _matched(names, cfg))


def class_name_scope(classes: Iterable[ClassRecord]) -> set[str]:
    # Inner classes ("Outer$a") are named per outer class; only top-level
    # names share the package scope.
    return {c.simple_name for c in classes if "$" not in c.simple_name}


def detect_class_names(tree: PackageTree, cfg: DetectorConfig = DetectorConfig()) -> dict[str, ScopeVerdict]:
    return {pkg: judge_scope(class_name_scope(classes), cfg) for pkg, classes in tree.items()}


@dataclass(frozen=True)
class MemberVerdicts:
    methods: ScopeVerdict
    fields: ScopeVerdict


def renameable_methods(cls: ClassRecord):
    return [m for m in cls.methods if not m.is_constructor]


def member_verdicts(cls: ClassRecord, cfg: DetectorConfig) -> MemberVerdicts:
    methods = renameable_methods(cls)
    # Scope size counts members, not distinct names: aggressive overloading
    # folds many methods onto very few names.
    return MemberVerdicts(
        methods=judge_scope({m.name for m in methods}, cfg, size=len(methods)),
        fields=judge_scope({f.name for f in cls.fields}, cfg, size=len(cls.fields)),
    )


@dataclass(frozen=True)
class MemberNameResult:
    per_class: dict[str, MemberVerdicts]
    method_packages: dict[str, bool]
    field_packages: dict[str, bool]
    method_flagged: dict[str, int]
    field_flagged: dict[str, int]


def detect_member_names(tree: PackageTree, cfg: DetectorConfig = DetectorConfig()) -> MemberNameResult:
    """Per-class method/field verdicts, aggregated to packages.

    A package is flagged when the share of its classes with a flagged scope
    reaches the match threshold. Classes without a verdict count as unflagged.
    """
    per_class = {}
    mpk, fpk, mcount, fcount = {}, {}, {}, {}
    for pkg, classes in tree.items():
        m_hits = f_hits = 0
        for cls in classes:
            v = member_verdicts(cls, cfg)
            per_class[cls.qualified_name] = v
            m_hits += v.methods.flagged
            f_hits += v.fields.flagged
        n = len(classes)
        mpk[pkg] = m_hits > 0 and m_hits / n >= cfg.match_threshold
        fpk[pkg] = f_hits > 0 and f_hits / n >= cfg.match_threshold
        mcount[pkg], fcount[pkg] = m_hits, f_hits
    return MemberNameResult(per_class, mpk, fpk, mcount, fcount)


def class_overloads(cls: ClassRecord, cfg: DetectorConfig = DetectorConfig()) -> bool:
    methods = renameable_methods(cls)
    names = {m.name for m in methods}
    if not names:
        return False
    prefix = set().union(*(generated_prefix(al, len(names)) for al in candidate_alphabets(names, cfg)))
    signatures: dict[str, set[tuple[str, ...]]] = {}
    for m in methods:
        if m.name in prefix:
            signatures.setdefault(m.name, set()).add(m.param_types)
    return any(len(s) >= 2 for s in signatures.values())


def detect_overloading(tree: PackageTree, cfg: DetectorConfig = DetectorConfig()) -> dict[str, bool]:
    return {cls.qualified_name: class_overloads(cls, cfg) for _, classes in tree.items() for cls in classes}


@dataclass(frozen=True)
class StrippingVerdict:
    debug_info_removed: bool
    source_files_removed: bool
    annotations_removed: bool


def detect_stripping(tree: PackageTree, cfg: DetectorConfig = DetectorConfig()) -> dict[str, StrippingVerdict]:
    out = {}
    for pkg, classes in tree.items():
        coded = [m for c in classes for m in c.methods if m.has_code]
        out[pkg] = StrippingVerdict(
            debug_info_removed=bool(coded) and not any(m.has_line_numbers for m in coded),
            source_files_removed=bool(classes) and all(c.source_file is None for c in classes),
            annotations_removed=cfg.evaluate_annotations
            and bool(classes)
            and not any(c.annotations_present for c in classes),
        )
    return out


def detect_windows_keywords(tree: PackageTree, keywords: WindowsKeywordSet = WindowsKeywordSet()) -> tuple[bool, list[str]]:
    evidence = sorted(
        c.qualified_name for _, classes in tree.items() for c in classes if c.simple_name in keywords
    )
    return bool(evidence), evidence


def _all_prefixes(packages: Iterable[str]) -> set[str]:
    out = {""}
    for p in packages:
        parts = p.split(".") if p else []
        for i in range(1, len(parts)):
            out.add(".".join(parts[:i]))
    return out


def detect_package_names(tree: PackageTree, cfg: DetectorConfig = DetectorConfig()) -> dict[str, bool]:
    """Whether each package's last segment sits in a ProGuard-consistent sibling scope."""
    flagged_parents = {
        parent
        for parent in _all_prefixes(tree.packages())
        if judge_scope(tree.children(parent), cfg).flagged
    }
    out = {}
    for pkg in tree:
        parent, _, last = pkg.rpartition(".")
        if not pkg:
            out[pkg] = False
            continue
        if parent in flagged_parents:
            siblings = tree.children(parent)
            prefix = set().union(*(generated_prefix(al, len(siblings)) for al in candidate_alphabets(siblings, cfg)))
            out[pkg] = last in prefix
        else:
            out[pkg] = False
    return out


def analyze(app: AppModel, cfg: DetectorConfig = DetectorConfig()) -> FeatureReport:
    tree = build_package_tree(app)
    class_names = detect_class_names(tree, cfg)
    members = detect_member_names(tree, cfg)
    overloads = detect_overloading(tree, cfg)
    stripping = detect_stripping(tree, cfg)
    pkg_names = detect_package_names(tree, cfg)
    _, evidence = detect_windows_keywords(tree, cfg.windows_keywords)

    details = {}
    for pkg, classes in tree.items():
        cv = class_names[pkg]
        sv = stripping[pkg]
        n_overloading = sum(overloads[c.qualified_name] for c in classes)
        details[pkg] = PackageDetail(
            class_name_obfuscated=cv.flagged,
            method_name_obfuscated=members.method_packages[pkg],
            field_name_obfuscated=members.field_packages[pkg],
            overloading_detected=n_overloading > 0,
            debug_info_removed=sv.debug_info_removed,
            source_files_removed=sv.source_files_removed,
            annotations_removed=sv.annotations_removed,
            windows_keywords_detected=any(c.simple_name in cfg.windows_keywords for c in classes),
            class_count=len(classes),
            class_name_match=cv.fraction,
            matched_class_names=cv.matched,
            method_flagged_classes=members.method_flagged[pkg],
            field_flagged_classes=members.field_flagged[pkg],
            overloading_classes=n_overloading,
            package_name_obfuscated=pkg_names[pkg],
        )

    main_view = None
    if app.main_package is not None:
        main_details = [d for p, d in details.items() if in_package_subtree(p, app.main_package)]
        if main_details:
            main_view = ViewFlags.any_of(d.flags() for d in main_details)

    return FeatureReport(
        app_id=app.app_id,
        all_packages=ViewFlags.any_of(d.flags() for d in details.values()),
        main_package=main_view,
        packages=details,
        windows_keyword_evidence=evidence,
    )
