"""Domain types shared by every analysis, plus the canonical JSON form of an app.

Everything here is immutable. Class names use the dot-separated binary form
(``com.foo.Bar$Inner``); the DEX frontend converts descriptors on ingestion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Mapping

FEATURES = (
    "class_name_obfuscated",
    "method_name_obfuscated",
    "field_name_obfuscated",
    "overloading_detected",
    "debug_info_removed",
    "source_files_removed",
    "annotations_removed",
    "windows_keywords_detected",
)

CONSTRUCTOR_NAMES = frozenset({"<init>", "<clinit>"})


class ModelError(ValueError):
    pass


class ParseError(ModelError):
    """Malformed JSON. ``offset`` is a byte offset into the UTF-8 input."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class ValidationError(ModelError):
    """Well-formed JSON that violates the schema or a model invariant."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.message = message
        self.path = path


def split_class_name(qualified_name: str) -> tuple[str, str]:
    package, _, simple = qualified_name.rpartition(".")
    return package, simple


@dataclass(frozen=True)
class MethodRecord:
    name: str
    param_types: tuple[str, ...] = ()
    return_type: str = "void"
    has_code: bool = True
    has_line_numbers: bool = False

    def __post_init__(self):
        object.__setattr__(self, "param_types", tuple(self.param_types))
        if not self.name:
            raise ValidationError("method name must be non-empty")
        if any(not p for p in self.param_types):
            raise ValidationError(f"empty parameter type in method {self.name!r}")
        if self.has_line_numbers and not self.has_code:
            raise ValidationError(f"method {self.name!r} has line numbers but no code")

    @property
    def is_constructor(self) -> bool:
        return self.name in CONSTRUCTOR_NAMES


@dataclass(frozen=True)
class FieldRecord:
    name: str
    type: str = "int"

    def __post_init__(self):
        if not self.name:
            raise ValidationError("field name must be non-empty")


@dataclass(frozen=True)
class ClassRecord:
    qualified_name: str
    is_interface: bool = False
    source_file: str | None = None
    annotations_present: bool = False
    methods: tuple[MethodRecord, ...] = ()
    fields: tuple[FieldRecord, ...] = ()
    # Superclass and implemented interfaces, when known. Only needed for
    # "extends"/"implements" clauses of keep rules.
    supertypes: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "fields", tuple(self.fields))
        object.__setattr__(self, "supertypes", tuple(self.supertypes))
        name = self.qualified_name
        if not name or name.startswith(".") or name.endswith(".") or ".." in name:
            raise ValidationError(f"invalid class name {name!r}")

    @property
    def package(self) -> str:
        return split_class_name(self.qualified_name)[0]

    @property
    def simple_name(self) -> str:
        return split_class_name(self.qualified_name)[1]


@dataclass(frozen=True)
class AppModel:
    app_id: str
    classes: tuple[ClassRecord, ...] = ()
    main_package: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if not self.app_id:
            raise ValidationError("app_id must be non-empty", "$.app_id")
        seen = set()
        for i, cls in enumerate(self.classes):
            if cls.qualified_name in seen:
                raise ValidationError(
                    f"duplicate class {cls.qualified_name!r}", f"$.classes[{i}].qualified_name"
                )
            seen.add(cls.qualified_name)

    def class_names(self) -> list[str]:
        return [c.qualified_name for c in self.classes]


def in_package_subtree(package: str, root: str) -> bool:
    return package == root or package.startswith(root + ".")


class PackageTree:
    """Classes partitioned by package, with prefix (subtree) navigation.

    The default package is the empty string and sits at the root.
    """

    def __init__(self, nodes: Mapping[str, Iterable[ClassRecord]]):
        self._nodes = {pkg: tuple(classes) for pkg, classes in sorted(nodes.items())}

    def __len__(self) -> int:
        return len(self._nodes)

    def __iter__(self) -> Iterator[str]:
        return iter(self._nodes)

    def __contains__(self, package: object) -> bool:
        return package in self._nodes

    def __getitem__(self, package: str) -> tuple[ClassRecord, ...]:
        return self._nodes[package]

    def items(self):
        return self._nodes.items()

    def packages(self) -> list[str]:
        return list(self._nodes)

    def class_count(self) -> int:
        return sum(len(v) for v in self._nodes.values())

    def subtree(self, root: str) -> "PackageTree":
        if root == "":
            return self
        return PackageTree({p: c for p, c in self._nodes.items() if in_package_subtree(p, root)})

    def children(self, package: str) -> set[str]:
        """Names of the immediate sub-package segments below ``package``.

        Intermediate packages without classes count too: ``a.b.c`` makes ``b``
        a child of ``a`` even if ``a.b`` holds nothing.
        """
        out = set()
        prefix = package + "." if package else ""
        for p in self._nodes:
            if p and p.startswith(prefix) and p != package:
                out.add(p[len(prefix):].split(".", 1)[0])
        return out


def build_package_tree(app: AppModel) -> PackageTree:
    nodes: dict[str, list[ClassRecord]] = {}
    for cls in app.classes:
        nodes.setdefault(cls.package, []).append(cls)
    return PackageTree(nodes)


# -- canonical JSON ---------------------------------------------------------


def _require(obj: Mapping[str, Any], key: str, kind, path: str, optional: bool = False):
    if key not in obj:
        if optional:
            return None
        raise ValidationError(f"missing required key {key!r}", path)
    value = obj[key]
    if value is None and optional:
        return None
    # bool is an int subclass; keep the checks strict.
    if kind is bool and not isinstance(value, bool):
        raise ValidationError(f"{key!r} must be a boolean", f"{path}.{key}")
    if kind is not bool and (not isinstance(value, kind) or isinstance(value, bool)):
        raise ValidationError(f"{key!r} must be of type {kind.__name__}", f"{path}.{key}")
    return value


def _str_list(value, path: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise ValidationError("expected a list of strings", path)
    return tuple(value)


def _build(path: str, ctor, **kwargs):
    # Invariant failures raised by the constructors carry no JSON path.
    try:
        return ctor(**kwargs)
    except ValidationError as exc:
        if exc.path != "$":
            raise
        raise ValidationError(exc.message, path) from None


def _object(obj, path: str) -> dict:
    if not isinstance(obj, dict):
        raise ValidationError("expected an object", path)
    return obj


def _method_from_json(obj, path: str) -> MethodRecord:
    obj = _object(obj, path)
    return _build(
        path,
        MethodRecord,
        name=_require(obj, "name", str, path),
        param_types=_str_list(_require(obj, "param_types", list, path), path + ".param_types"),
        return_type=_require(obj, "return_type", str, path),
        has_code=_require(obj, "has_code", bool, path),
        has_line_numbers=_require(obj, "has_line_numbers", bool, path),
    )


def _field_from_json(obj, path: str) -> FieldRecord:
    obj = _object(obj, path)
    return _build(path, FieldRecord, name=_require(obj, "name", str, path), type=_require(obj, "type", str, path))


def _class_from_json(obj, path: str) -> ClassRecord:
    obj = _object(obj, path)
    methods = _require(obj, "methods", list, path)
    fields = _require(obj, "fields", list, path)
    supertypes = obj.get("supertypes")
    return _build(
        path + ".qualified_name",
        ClassRecord,
        qualified_name=_require(obj, "qualified_name", str, path),
        is_interface=_require(obj, "is_interface", bool, path),
        source_file=_require(obj, "source_file", str, path, optional=True),
        annotations_present=_require(obj, "annotations_present", bool, path),
        methods=[_method_from_json(m, f"{path}.methods[{i}]") for i, m in enumerate(methods)],
        fields=[_field_from_json(f, f"{path}.fields[{i}]") for i, f in enumerate(fields)],
        supertypes=_str_list(supertypes, path + ".supertypes") if supertypes is not None else (),
    )


def _decode(data: bytes | str):
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError("invalid UTF-8", exc.start) from None
    else:
        text = data
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ParseError(exc.msg, offset) from None


def app_from_dict(doc) -> AppModel:
    doc = _object(doc, "$")
    classes = _require(doc, "classes", list, "$")
    return _build(
        "$",
        AppModel,
        app_id=_require(doc, "app_id", str, "$"),
        main_package=_require(doc, "main_package", str, "$", optional=True),
        classes=[_class_from_json(c, f"$.classes[{i}]") for i, c in enumerate(classes)],
    )


def load_app(data: bytes | str) -> AppModel:
    return app_from_dict(_decode(data))


def app_to_dict(app: AppModel) -> dict:
    classes = []
    for cls in app.classes:
        entry = {
            "qualified_name": cls.qualified_name,
            "is_interface": cls.is_interface,
            "source_file": cls.source_file,
            "annotations_present": cls.annotations_present,
            "methods": [
                {
                    "name": m.name,
                    "param_types": list(m.param_types),
                    "return_type": m.return_type,
                    "has_code": m.has_code,
                    "has_line_numbers": m.has_line_numbers,
                }
                for m in cls.methods
            ],
            "fields": [{"name": f.name, "type": f.type} for f in cls.fields],
        }
        if cls.supertypes:
            entry["supertypes"] = list(cls.supertypes)
        classes.append(entry)
    return {"app_id": app.app_id, "main_package": app.main_package, "classes": classes}


def dumps(doc) -> bytes:
    return (json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")


def save_app(app: AppModel) -> bytes:
    return dumps(app_to_dict(app))


# -- feature reports --------------------------------------------------------


@dataclass(frozen=True)
class ViewFlags:
    """One boolean per detected feature, for a whole view of an app."""

    class_name_obfuscated: bool = False
    method_name_obfuscated: bool = False
    field_name_obfuscated: bool = False
    overloading_detected: bool = False
    debug_info_removed: bool = False
    source_files_removed: bool = False
    annotations_removed: bool = False
    windows_keywords_detected: bool = False

    def as_dict(self) -> dict[str, bool]:
        return {f: getattr(self, f) for f in FEATURES}

    @classmethod
    def any_of(cls, flags: Iterable["ViewFlags"]) -> "ViewFlags":
        flags = list(flags)
        return cls(**{f: any(getattr(v, f) for v in flags) for f in FEATURES})


@dataclass(frozen=True)
class PackageDetail(ViewFlags):
    class_count: int = 0
    class_name_match: float | None = None  # None: scope below min_scope_size
    matched_class_names: int = 0
    method_flagged_classes: int = 0
    field_flagged_classes: int = 0
    overloading_classes: int = 0
    package_name_obfuscated: bool = False

    def flags(self) -> ViewFlags:
        return ViewFlags(**{f: getattr(self, f) for f in FEATURES})


_DETAIL_EXTRA = (
    "class_count",
    "class_name_match",
    "matched_class_names",
    "method_flagged_classes",
    "field_flagged_classes",
    "overloading_classes",
    "package_name_obfuscated",
)


@dataclass(frozen=True)
class FeatureReport:
    app_id: str
    all_packages: ViewFlags
    main_package: ViewFlags | None
    packages: Mapping[str, PackageDetail] = field(default_factory=dict)
    windows_keyword_evidence: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "windows_keyword_evidence", tuple(self.windows_keyword_evidence))
        object.__setattr__(self, "packages", dict(sorted(self.packages.items())))

    def __hash__(self):
        return hash((self.app_id, self.all_packages, self.main_package, tuple(self.packages.items())))


def report_to_dict(report: FeatureReport) -> dict:
    return {
        "app_id": report.app_id,
        "all_packages": report.all_packages.as_dict(),
        "main_package": report.main_package.as_dict() if report.main_package else None,
        "packages": {
            name: {**d.as_dict(), **{k: getattr(d, k) for k in _DETAIL_EXTRA}}
            for name, d in report.packages.items()
        },
        "windows_keyword_evidence": list(report.windows_keyword_evidence),
    }


def _flags_from_json(obj, path: str) -> dict[str, bool]:
    obj = _object(obj, path)
    return {f: _require(obj, f, bool, path) for f in FEATURES}


def report_from_dict(doc) -> FeatureReport:
    doc = _object(doc, "$")
    main = doc.get("main_package")
    packages = {}
    for name, d in _require(doc, "packages", dict, "$").items():
        path = f"$.packages[{name!r}]"
        flags = _flags_from_json(d, path)
        match = d.get("class_name_match")
        if match is not None and (isinstance(match, bool) or not isinstance(match, (int, float))):
            raise ValidationError("class_name_match must be a number or null", path)
        packages[name] = PackageDetail(
            **flags,
            class_count=_require(d, "class_count", int, path),
            class_name_match=None if match is None else float(match),
            matched_class_names=_require(d, "matched_class_names", int, path),
            method_flagged_classes=_require(d, "method_flagged_classes", int, path),
            field_flagged_classes=_require(d, "field_flagged_classes", int, path),
            overloading_classes=_require(d, "overloading_classes", int, path),
            package_name_obfuscated=_require(d, "package_name_obfuscated", bool, path),
        )
    return FeatureReport(
        app_id=_require(doc, "app_id", str, "$"),
        all_packages=ViewFlags(**_flags_from_json(_require(doc, "all_packages", dict, "$"), "$.all_packages")),
        main_package=None if main is None else ViewFlags(**_flags_from_json(main, "$.main_package")),
        packages=packages,
        windows_keyword_evidence=_str_list(doc.get("windows_keyword_evidence", []), "$.windows_keyword_evidence"),
    )


def save_report(report: FeatureReport) -> bytes:
    return dumps(report_to_dict(report))


def load_report(data: bytes | str) -> FeatureReport:
    return report_from_dict(_decode(data))
