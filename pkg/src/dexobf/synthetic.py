"""Synthetic unobfuscated apps with developer-style identifiers.

Apps are built from word lists so every scope looks like hand-written code.
A small share of apps carries a "math" package whose classes use one-letter
coefficient fields (``a``, ``b``, ``c`` ...), the kind of real code that
collides with ProGuard's field names.
"""

from __future__ import annotations

import random

from .model import AppModel, ClassRecord, FieldRecord, MethodRecord

VENDORS = ["acme", "brightside", "northwind", "kolibri", "tinyforge", "bluefin", "quarry", "lumen", "orbit", "papaya"]
PRODUCTS = ["notes", "weather", "budget", "runner", "reader", "chess", "radio", "scanner", "recipes", "metro"]
SUBPACKAGES = ["ui", "data", "net", "util", "model", "service", "storage", "auth", "sync", "widget", "settings", "media"]
LIBRARIES = ["org.jsonkit.core", "com.squarely.http", "io.pictura.loader", "com.tracker.analytics", "org.greenbus.events"]
NOUNS = ["User", "Account", "Item", "Note", "Photo", "Track", "Session", "Request", "Response", "Cache", "Config",
         "Event", "Record", "Page", "Image", "Message", "Task", "Profile", "Token", "Report", "Entry", "Folder"]
ROLES = ["Manager", "Helper", "Adapter", "Activity", "Fragment", "Service", "Repository", "Controller", "Parser",
         "Builder", "Loader", "Provider", "Validator", "Formatter", "Listener", "Handler", "View", "Store", "Client"]
VERBS = ["get", "set", "load", "save", "update", "remove", "find", "build", "parse", "render", "refresh", "sync",
         "validate", "format", "handle", "open", "close", "create", "fetch", "apply", "reset", "notify"]
FIELD_WORDS = ["count", "name", "title", "size", "index", "state", "listener", "cache", "handler", "context",
               "userId", "timeout", "enabled", "items", "callback", "position", "width", "height", "token", "url"]
TYPES = ["int", "long", "boolean", "double", "java.lang.String", "android.content.Context", "java.util.List",
         "android.view.View", "float", "byte[]"]
MATH_CLASSES = ["Polynomial", "Quadratic", "Cubic", "LinearFit", "Bezier", "Spline", "Conic"]


def _unique(rng: random.Random, make, taken: set, tries: int = 200) -> str:
    for _ in range(tries):
        name = make()
        if name not in taken:
            taken.add(name)
            return name
    i = 2
    base = make()
    while f"{base}{i}" in taken:
        i += 1
    taken.add(f"{base}{i}")
    return f"{base}{i}"


def _methods(rng: random.Random, n: int, interface: bool) -> list[MethodRecord]:
    names: set[str] = set()
    out = [] if interface else [MethodRecord("<init>", (), "void", True, True)]
    for i in range(n):
        name = _unique(rng, lambda: rng.choice(VERBS) + rng.choice(NOUNS), names)
        # the first two signatures differ, so renaming with overloading can collapse them
        params = (TYPES[i % len(TYPES)],) if i < 2 else tuple(rng.sample(TYPES, rng.randint(0, 3)))
        out.append(
            MethodRecord(
                name,
                params,
                rng.choice(["void", "int", "boolean", "java.lang.String"]),
                has_code=not interface,
                has_line_numbers=not interface,
            )
        )
    return out


def _fields(rng: random.Random, n: int, constant: bool) -> list[FieldRecord]:
    names: set[str] = set()
    if constant:
        make = lambda: (rng.choice(FIELD_WORDS) + "_" + rng.choice(NOUNS)).upper()
    else:
        make = lambda: "m" + rng.choice(NOUNS) + rng.choice(FIELD_WORDS).capitalize()
    return [FieldRecord(_unique(rng, make, names), rng.choice(TYPES)) for _ in range(n)]


def _package(rng: random.Random, package: str, n_classes: int, min_members: int, annotation_rate: float):
    taken: set[str] = set()
    classes = []
    for _ in range(n_classes):
        simple = _unique(rng, lambda: rng.choice(NOUNS) + rng.choice(ROLES), taken)
        interface = rng.random() < 0.15
        classes.append(
            ClassRecord(
                qualified_name=f"{package}.{simple}",
                is_interface=interface,
                source_file=f"{simple}.java",
                annotations_present=rng.random() < annotation_rate,
                methods=_methods(rng, rng.randint(min_members, min_members + 3), interface),
                fields=_fields(rng, rng.randint(min_members, min_members + 3), interface),
            )
        )
    return classes


def _math_package(rng: random.Random, package: str, n_classes: int, min_members: int):
    classes = []
    for simple in rng.sample(MATH_CLASSES, n_classes):
        k = rng.randint(min_members, min_members + 2)
        classes.append(
            ClassRecord(
                qualified_name=f"{package}.{simple}",
                source_file=f"{simple}.java",
                annotations_present=True,
                methods=[MethodRecord("<init>", (), "void", True, True)] + _methods(rng, min_members, False)[1:],
                fields=[FieldRecord(chr(ord("a") + j), "double") for j in range(k)],
            )
        )
    return classes


def generate_app(
    rng: random.Random,
    app_id: str,
    *,
    min_packages: int = 5,
    min_classes: int = 5,
    min_members: int = 5,
    library_packages: int = 1,
    math_rate: float = 0.04,
    annotation_rate: float = 0.6,
) -> AppModel:
    main = f"com.{rng.choice(VENDORS)}.{rng.choice(PRODUCTS)}"
    n_own = max(min_packages - library_packages, 1)
    packages = [main] + [f"{main}.{s}" for s in rng.sample(SUBPACKAGES, n_own - 1)]
    packages += rng.sample(LIBRARIES, library_packages)
    classes = []
    for pkg in packages:
        n = rng.randint(min_classes, min_classes + 4)
        classes += _package(rng, pkg, n, min_members, annotation_rate)
    if rng.random() < math_rate:
        classes += _math_package(rng, f"{main}.math", min(min_classes, len(MATH_CLASSES)), min_members)
    return AppModel(app_id=app_id, main_package=main, classes=classes)


def generate_corpus(n: int, seed: int = 0, **kwargs) -> list[AppModel]:
    rng = random.Random(seed)
    return [generate_app(rng, f"synthetic.app{i:04d}", **kwargs) for i in range(n)]
