"""Labeled ground truth by simulated ProGuard renaming, and confusion scoring."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .model import AppModel, ClassRecord, app_from_dict, app_to_dict, dumps
from .names import RenameAlphabet, nth_name
from .proguard import KeepRule, MemberRef, parse_rules, rule_matches

# Features labeled by a simulation, in the order of the evaluation table.
EVAL_FEATURES = (
    "class_name_obfuscated",
    "method_name_obfuscated",
    "field_name_obfuscated",
    "overloading_detected",
    "debug_info_removed",
    "annotations_removed",
    "source_files_removed",
)

FEATURE_TITLES = {
    "class_name_obfuscated": "Class name obfuscation",
    "method_name_obfuscated": "Method name obfuscation",
    "field_name_obfuscated": "Field name obfuscation",
    "overloading_detected": "Method name overloading",
    "debug_info_removed": "Debug information removed",
    "annotations_removed": "Annotations removed",
    "source_files_removed": "Source files removed",
}

_PLAN_SWITCHES = (
    "rename_classes",
    "rename_methods",
    "rename_fields",
    "overload_aggressively",
    "strip_debug",
    "strip_source",
    "strip_annotations",
)


@dataclass(frozen=True)
class SimulationPlan:
    rename_classes: bool = False
    rename_methods: bool = False
    rename_fields: bool = False
    overload_aggressively: bool = False
    strip_debug: bool = False
    strip_source: bool = False
    strip_annotations: bool = False
    alphabet: RenameAlphabet = field(default_factory=RenameAlphabet.mixed_case)
    keep_rules: tuple[KeepRule, ...] = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "keep_rules", tuple(self.keep_rules))
        if self.overload_aggressively and not self.rename_methods:
            raise ValueError("overload_aggressively requires rename_methods")

    @classmethod
    def full(cls, **overrides) -> "SimulationPlan":
        kwargs = dict(
            rename_classes=True,
            rename_methods=True,
            rename_fields=True,
            overload_aggressively=True,
            strip_debug=True,
            strip_source=True,
            strip_annotations=True,
        )
        kwargs.update(overrides)
        return cls(**kwargs)

    def labels(self) -> dict[str, bool]:
        return {
            "class_name_obfuscated": self.rename_classes,
            "method_name_obfuscated": self.rename_methods,
            "field_name_obfuscated": self.rename_fields,
            "overloading_detected": self.overload_aggressively,
            "debug_info_removed": self.strip_debug,
            "annotations_removed": self.strip_annotations,
            "source_files_removed": self.strip_source,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SimulationPlan":
        kwargs = dict(doc)
        unknown = set(kwargs) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown plan keys: {sorted(unknown)}")
        for key in _PLAN_SWITCHES:
            if key in kwargs and not isinstance(kwargs[key], bool):
                raise ValueError(f"plan key {key!r} must be a boolean")
        alphabet = kwargs.get("alphabet", "mixed_case")
        if isinstance(alphabet, list):
            kwargs["alphabet"] = RenameAlphabet.custom(alphabet)
        else:
            kwargs["alphabet"] = RenameAlphabet.from_mode(alphabet)
        rules = kwargs.get("keep_rules", [])
        if isinstance(rules, str):
            rules = [rules]
        kwargs["keep_rules"] = tuple(r for text in rules for r in parse_rules(text).keep_rules)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        doc = {k: getattr(self, k) for k in _PLAN_SWITCHES}
        doc["alphabet"] = self.alphabet.mode if self.alphabet.mode != "custom" else list(self.alphabet.digits)
        doc["keep_rules"] = [r.text() for r in self.keep_rules]
        doc["seed"] = self.seed
        return doc


@dataclass
class RenameMap:
    classes: dict[str, str] = field(default_factory=dict)
    # (original class, original name, original params) -> new name
    methods: dict[tuple[str, str, tuple[str, ...]], str] = field(default_factory=dict)
    fields: dict[tuple[str, str], str] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "classes": dict(sorted(self.classes.items())),
            "methods": [
                {"class": c, "name": n, "params": list(p), "new_name": v}
                for (c, n, p), v in sorted(self.methods.items())
            ],
            "fields": [{"class": c, "name": n, "new_name": v} for (c, n), v in sorted(self.fields.items())],
            "notes": list(self.notes),
        }


class _NameSource:
    """Hands out generated names in order, skipping reserved ones."""

    def __init__(self, alphabet: RenameAlphabet, reserved: Iterable[str] = ()):
        self.alphabet = alphabet
        self.reserved = set(reserved)
        self.index = 0

    def next(self, on_skip=None) -> str:
        while True:
            name = nth_name(self.alphabet, self.index)
            self.index += 1
            if name not in self.reserved:
                return name
            if on_skip:
                on_skip(name)


def _retype(type_name: str, class_map: Mapping[str, str]) -> str:
    base = type_name.rstrip("[]")
    dims = type_name[len(base):]
    return class_map.get(base, base) + dims


def _kept(rules: Sequence[KeepRule], cls: ClassRecord, member: MemberRef | None = None) -> bool:
    return any(
        r.keeps_names
        and rule_matches(r, cls.qualified_name, member, supertypes=cls.supertypes, is_interface=cls.is_interface)
        for r in rules
    )


def _rename_classes(app: AppModel, plan: SimulationPlan, rmap: RenameMap) -> None:
    by_package: dict[str, list[ClassRecord]] = {}
    for cls in app.classes:
        by_package.setdefault(cls.package, []).append(cls)
    for package, classes in sorted(by_package.items()):
        kept = {c.simple_name for c in classes if _kept(plan.keep_rules, c)}
        # outer name -> renamed outer name; inner classes are named within their outer class
        scopes: dict[str, list[ClassRecord]] = {}
        for c in classes:
            outer, _, _ = c.simple_name.rpartition("$")
            scopes.setdefault(outer, []).append(c)
        renamed_outer: dict[str, str] = {}
        for outer in sorted(scopes, key=lambda o: (o.count("$"), o)):
            members = sorted(scopes[outer], key=lambda c: c.simple_name)
            own = {c.simple_name.rpartition("$")[2] for c in members if c.simple_name in kept}
            source = _NameSource(plan.alphabet, own)
            for c in members:
                last = c.simple_name.rpartition("$")[2]
                new_outer = renamed_outer.get(outer, outer) if outer else ""
                if c.simple_name in kept:
                    new_last = last
                else:
                    new_last = source.next(
                        lambda n, c=c: rmap.notes.append(f"skipped {n!r} for {c.qualified_name}: kept name")
                    )
                new_simple = f"{new_outer}${new_last}" if outer else new_last
                renamed_outer[c.simple_name] = new_simple
                rmap.classes[c.qualified_name] = f"{package}.{new_simple}" if package else new_simple


def _rename_members(cls: ClassRecord, plan: SimulationPlan, rmap: RenameMap, class_map) -> ClassRecord:
    methods = list(cls.methods)
    if plan.rename_methods:
        renameable = sorted(
            (i for i, m in enumerate(methods) if not m.is_constructor),
            key=lambda i: (methods[i].name, methods[i].param_types),
        )
        kept = {
            i for i in renameable
            if _kept(plan.keep_rules, cls, MemberRef(methods[i].name, "method", methods[i].param_types, methods[i].return_type))
        }
        reserved = {methods[i].name for i in kept}
        new_names: dict[int, str] = {}
        if plan.overload_aggressively:
            # earliest generated name not yet used with the same parameter list
            used: dict[str, set[tuple[str, ...]]] = {}
            for i in kept:
                used.setdefault(methods[i].name, set()).add(methods[i].param_types)
            for i in renameable:
                if i in kept:
                    continue
                k = 0
                while methods[i].param_types in used.get(nth_name(plan.alphabet, k), ()):
                    k += 1
                name = nth_name(plan.alphabet, k)
                used.setdefault(name, set()).add(methods[i].param_types)
                new_names[i] = name
        else:
            source = _NameSource(plan.alphabet, reserved)
            for i in renameable:
                if i not in kept:
                    new_names[i] = source.next(
                        lambda n: rmap.notes.append(f"skipped {n!r} in {cls.qualified_name}: kept method name")
                    )
        for i, new in new_names.items():
            m = methods[i]
            rmap.methods[(cls.qualified_name, m.name, m.param_types)] = new
            methods[i] = replace(m, name=new)

    fields = list(cls.fields)
    if plan.rename_fields:
        order = sorted(range(len(fields)), key=lambda i: fields[i].name)
        kept = {i for i in order if _kept(plan.keep_rules, cls, MemberRef(fields[i].name, "field", None, fields[i].type))}
        source = _NameSource(plan.alphabet, {fields[i].name for i in kept})
        for i in order:
            if i in kept:
                continue
            new = source.next(lambda n: rmap.notes.append(f"skipped {n!r} in {cls.qualified_name}: kept field name"))
            rmap.fields[(cls.qualified_name, fields[i].name)] = new
            fields[i] = replace(fields[i], name=new)

    if class_map:
        methods = [
            replace(m, param_types=tuple(_retype(p, class_map) for p in m.param_types),
                    return_type=_retype(m.return_type, class_map))
            for m in methods
        ]
        fields = [replace(f, type=_retype(f.type, class_map)) for f in fields]
    return replace(
        cls,
        methods=tuple(methods),
        fields=tuple(fields),
        supertypes=tuple(_retype(s, class_map) for s in cls.supertypes),
    )


def simulate(app: AppModel, plan: SimulationPlan) -> tuple[AppModel, RenameMap]:
    """Apply a ProGuard-like transformation; class and member order is preserved."""
    rmap = RenameMap()
    if plan.rename_classes:
        _rename_classes(app, plan, rmap)
    class_map = {k: v for k, v in rmap.classes.items() if k != v}
    out = []
    for cls in app.classes:
        new = _rename_members(cls, plan, rmap, class_map)
        new = replace(
            new,
            qualified_name=rmap.classes.get(cls.qualified_name, cls.qualified_name),
            source_file=None if plan.strip_source else new.source_file,
            annotations_present=False if plan.strip_annotations else new.annotations_present,
        )
        if plan.strip_debug:
            new = replace(new, methods=tuple(replace(m, has_line_numbers=False) for m in new.methods))
        out.append(new)
    return replace(app, classes=tuple(out)), rmap


def restore(app: AppModel, rmap: RenameMap) -> AppModel:
    """Undo the renames recorded in ``rmap`` (stripping is not reversible)."""
    inverse = {v: k for k, v in rmap.classes.items()}
    if len(inverse) != len(rmap.classes):
        raise ValueError("class rename map is not injective")
    out = []
    for cls in app.classes:
        old_cls = inverse.get(cls.qualified_name, cls.qualified_name)
        methods_inv = {
            (new, tuple(_retype(p, rmap.classes) for p in params)): name
            for (c, name, params), new in rmap.methods.items()
            if c == old_cls
        }
        fields_inv = {new: name for (c, name), new in rmap.fields.items() if c == old_cls}
        methods = []
        for m in cls.methods:
            params = tuple(_retype(p, inverse) for p in m.param_types)
            name = methods_inv.get((m.name, m.param_types), m.name)
            methods.append(replace(m, name=name, param_types=params, return_type=_retype(m.return_type, inverse)))
        fields = [replace(f, name=fields_inv.get(f.name, f.name), type=_retype(f.type, inverse)) for f in cls.fields]
        out.append(
            replace(
                cls,
                qualified_name=old_cls,
                methods=tuple(methods),
                fields=tuple(fields),
                supertypes=tuple(_retype(s, inverse) for s in cls.supertypes),
            )
        )
    return replace(app, classes=tuple(out))


# -- labeled corpora --------------------------------------------------------


@dataclass(frozen=True)
class LabeledModel:
    model: AppModel
    labels: Mapping[str, bool]
    variant: str  # "original" | "obfuscated"


OBFUSCATED_SUFFIX = "#obfuscated"


def make_eval_corpus(apps: Iterable[AppModel], plan: SimulationPlan) -> list[LabeledModel]:
    """Each app once untouched (all labels negative) and once simulated."""
    negative = {f: False for f in EVAL_FEATURES}
    positive = plan.labels()
    out = []
    for app in apps:
        out.append(LabeledModel(app, negative, "original"))
        sim, _ = simulate(app, plan)
        out.append(LabeledModel(replace(sim, app_id=app.app_id + OBFUSCATED_SUFFIX), positive, "obfuscated"))
    return out


def write_manifest(corpus: Sequence[LabeledModel], directory: Path) -> Path:
    directory = Path(directory)
    (directory / "models").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, item in enumerate(corpus):
        rel = Path("models") / f"{i:05d}.json"
        (directory / rel).write_bytes(dumps(app_to_dict(item.model)))
        entries.append({"model_path": rel.as_posix(), "labels": dict(item.labels)})
    path = directory / "manifest.json"
    path.write_bytes(dumps(entries))
    return path


def read_manifest(path: Path) -> list[LabeledModel]:
    path = Path(path)
    out = []
    for entry in json.loads(path.read_text("utf-8")):
        model = app_from_dict(json.loads((path.parent / entry["model_path"]).read_text("utf-8")))
        labels = entry["labels"]
        variant = "obfuscated" if any(labels.values()) else "original"
        out.append(LabeledModel(model, labels, variant))
    return out


# -- scoring ----------------------------------------------------------------


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)


def mcc(c: ConfusionCounts) -> float:
    """Matthews correlation coefficient; 0 when any marginal is empty."""
    denom = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    if denom == 0:
        return 0.0
    return (c.tp * c.tn - c.fp * c.fn) / math.sqrt(denom)


@dataclass(frozen=True)
class FeatureScore:
    counts: ConfusionCounts
    mcc: float


class ShapeMismatch(ValueError):
    pass


def score(
    predictions: Mapping[str, Mapping[str, bool]],
    labels: Mapping[str, Mapping[str, bool]],
    features: Sequence[str] | None = None,
) -> dict[str, FeatureScore]:
    """Per-feature confusion counts over apps. Both inputs map app id -> feature -> bool."""
    if set(predictions) != set(labels):
        raise ShapeMismatch("predictions and labels cover different apps")
    if features is None:
        features = sorted({f for v in labels.values() for f in v})
    counts = {f: [0, 0, 0, 0] for f in features}
    for app_id, truth in labels.items():
        pred = predictions[app_id]
        for f in features:
            if f not in truth or f not in pred:
                raise ShapeMismatch(f"{app_id}: feature {f!r} missing")
            t, p = bool(truth[f]), bool(pred[f])
            counts[f][(0 if t else 1) if t == p else (2 if p else 3)] += 1
    return {f: FeatureScore(ConfusionCounts(*c), mcc(ConfusionCounts(*c))) for f, c in counts.items()}


def metrics_rows(scores: Mapping[str, FeatureScore]) -> list[dict]:
    return [
        {
            "Feature": FEATURE_TITLES.get(f, f),
            "TP": s.counts.tp,
            "TN": s.counts.tn,
            "FP": s.counts.fp,
            "FN": s.counts.fn,
            "MCC": f"{s.mcc:.3f}",
        }
        for f, s in scores.items()
    ]


def metrics_csv(scores: Mapping[str, FeatureScore]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=["Feature", "TP", "TN", "FP", "FN", "MCC"], lineterminator="\n")
    writer.writeheader()
    writer.writerows(metrics_rows(scores))
    return buf.getvalue()


def evaluate(corpus: Sequence[LabeledModel], cfg=None) -> dict[str, FeatureScore]:
    """Run the detector over a labeled corpus and score the evaluated features."""
    from .detect import DetectorConfig, analyze

    cfg = cfg or DetectorConfig()
    preds, labels = {}, {}
    for item in corpus:
        report = analyze(item.model, cfg)
        preds[item.model.app_id] = report.all_packages.as_dict()
        labels[item.model.app_id] = dict(item.labels)
    return score(preds, labels, EVAL_FEATURES)
