"""ProGuard configuration: Gradle activation, rule files, keep semantics, grading.

Only the keep family and ``-dontobfuscate`` carry semantics here. Every other
directive is parsed structurally and kept so a rule file can be printed back.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

KEEP_VARIANTS = (
    "keep",
    "keepclassmembers",
    "keepclasseswithmembers",
    "keepnames",
    "keepclassmembernames",
    "keepclasseswithmembernames",
)
CLASS_VARIANTS = {"keep", "keepnames"}
MEMBER_ONLY_VARIANTS = {"keepclassmembers", "keepclassmembernames"}
WITH_MEMBERS_VARIANTS = {"keepclasseswithmembers", "keepclasseswithmembernames"}

# Recognised non-keep options. The value says whether an argument is taken.
KNOWN_OPTIONS = {
    "dontobfuscate": False,
    "dontusemixedcaseclassnames": False,
    "overloadaggressively": False,
    "dontshrink": False,
    "dontoptimize": False,
    "dontpreverify": False,
    "verbose": False,
    "allowaccessmodification": False,
    "mergeinterfacesaggressively": False,
    "useuniqueclassmembernames": False,
    "dontskipnonpubliclibraryclasses": False,
    "dontskipnonpubliclibraryclassmembers": False,
    "skipnonpubliclibraryclasses": False,
    "ignorewarnings": False,
    "keepparameternames": False,
    "forceprocessing": False,
    "android": False,
    "microedition": False,
    "addconfigurationdebugging": False,
    "optimizationpasses": True,
    "printmapping": True,
    "applymapping": True,
    "obfuscationdictionary": True,
    "classobfuscationdictionary": True,
    "packageobfuscationdictionary": True,
    "keepattributes": True,
    "keeppackagenames": True,
    "keepdirectories": True,
    "adaptclassstrings": True,
    "adaptresourcefilenames": True,
    "adaptresourcefilecontents": True,
    "optimizations": True,
    "injars": True,
    "outjars": True,
    "libraryjars": True,
    "include": True,
    "basedirectory": True,
    "printconfiguration": True,
    "printseeds": True,
    "printusage": True,
    "dump": True,
    "dontnote": True,
    "repackageclasses": True,
    "flattenpackagehierarchy": True,
    "renamesourcefileattribute": True,
    "target": True,
    "assumenosideeffects": True,
    "assumevalues": True,
    "whyareyoukeeping": True,
}

CLASS_KEYWORDS = ("class", "interface", "enum", "@interface")
MEMBER_MODIFIERS = frozenset(
    {"public", "private", "protected", "static", "final", "synchronized", "native",
     "abstract", "strictfp", "volatile", "transient", "synthetic", "bridge", "varargs"}
)
CLASS_MODIFIERS = frozenset({"public", "final", "abstract", "synthetic"})
PRIMITIVE_TYPES = frozenset({"boolean", "byte", "short", "char", "int", "long", "float", "double"})


class RuleParseError(ValueError):
    def __init__(self, message: str, line: int, source: str = "rules"):
        super().__init__(f"{source}:{line}: {message}")
        self.line = line
        self.source = source


class GradleParseError(RuleParseError):
    def __init__(self, message: str, line: int):
        super().__init__(message, line, "gradle")


# -- wildcard patterns ------------------------------------------------------


@lru_cache(maxsize=1024)
def _name_regex(pattern: str, separator: str = ".") -> re.Pattern:
    sep = re.escape(separator)
    out, i = [], 0
    while i < len(pattern):
        if pattern.startswith("***", i):
            out.append(".*")
            i += 3
        elif pattern.startswith("**", i):
            out.append(".*")
            i += 2
        elif pattern[i] == "*":
            out.append(f"[^{sep}]*")
            i += 1
        elif pattern[i] == "?":
            out.append(f"[^{sep}]")
            i += 1
        else:
            out.append(re.escape(pattern[i]))
            i += 1
    return re.compile("".join(out) + r"\Z")


def class_pattern_matches(pattern: str, name: str) -> bool:
    """ProGuard class-name filter: ``*`` stays inside a package segment, ``**``
    crosses segments, ``?`` is one character; comma lists with ``!`` negation,
    first match wins. A lone ``*`` means any class, as in ``-keep class *``."""
    for part in (p.strip() for p in pattern.split(",")):
        negated = part.startswith("!")
        if negated:
            part = part[1:]
        if part == "*" or _name_regex(part).match(name):
            return not negated
    return False


def has_wildcard(pattern: str) -> bool:
    return any(ch in pattern for ch in "*?!,")


def type_pattern_matches(pattern: str, type_name: str) -> bool:
    if pattern == "***":
        return True
    if pattern == "%":
        return type_name in PRIMITIVE_TYPES
    return class_pattern_matches(pattern, type_name)


def params_match(patterns: Sequence[str], params: Sequence[str]) -> bool:
    if not patterns:
        return not params
    head, rest = patterns[0], patterns[1:]
    if head == "...":
        return any(params_match(rest, params[i:]) for i in range(len(params) + 1))
    return bool(params) and type_pattern_matches(head, params[0]) and params_match(rest, params[1:])


# -- rules ------------------------------------------------------------------


@dataclass(frozen=True)
class MemberRef:
    """A concrete member to test against rules. ``kind`` None means unknown."""

    name: str
    kind: str | None = None  # "method" | "field" | None
    params: tuple[str, ...] | None = None
    type: str | None = None

    @classmethod
    def parse(cls, text: str) -> "MemberRef":
        text = text.strip()
        if "(" in text:
            name = text[: text.index("(")].split()[-1]
            args = text[text.index("(") + 1 : text.rindex(")")]
            return cls(name, "method", tuple(a.strip() for a in args.split(",") if a.strip()))
        return cls(text)


@dataclass(frozen=True)
class MemberSpec:
    kind: str  # "method" | "field" | "wildcard"
    name: str
    params: tuple[str, ...] | None = None  # None: any parameter list
    type: str | None = None
    modifiers: tuple[str, ...] = ()

    def matches(self, ref: MemberRef) -> bool:
        if self.kind != "wildcard" and ref.kind is not None and ref.kind != self.kind:
            return False
        if not _name_regex(self.name).match(ref.name):
            return False
        if self.params is not None and ref.params is not None and not params_match(self.params, ref.params):
            return False
        if self.type is not None and ref.type is not None and not type_pattern_matches(self.type, ref.type):
            return False
        return True

    def text(self) -> str:
        mods = " ".join(self.modifiers)
        if self.kind == "wildcard":
            body = self.name
        elif self.kind == "method" and self.params is None and self.name == "*":
            body = "<methods>"
        elif self.kind == "field" and self.name == "*" and self.type is None:
            body = "<fields>"
        elif self.kind == "method":
            body = f"{self.name}({','.join(self.params or ())})"
            if self.type:
                body = f"{self.type} {body}"
        else:
            body = f"{self.type} {self.name}" if self.type else self.name
        return f"{mods} {body}".strip()


@dataclass(frozen=True)
class KeepRule:
    variant: str
    class_pattern: str
    class_type: str = "class"
    modifiers: tuple[str, ...] = ()
    options: tuple[str, ...] = ()  # e.g. allowobfuscation, allowshrinking
    annotation: str | None = None
    extends_pattern: str | None = None
    extends_keyword: str = "extends"
    member_specs: tuple[MemberSpec, ...] = ()
    line: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.variant not in KEEP_VARIANTS:
            raise ValueError(f"unknown keep variant {self.variant!r}")
        if not self.class_pattern:
            raise ValueError("empty class pattern")

    @property
    def keeps_names(self) -> bool:
        return "allowobfuscation" not in self.options

    def text(self) -> str:
        head = "-" + self.variant + "".join("," + o for o in self.options)
        parts = [head]
        if self.annotation:
            parts.append("@" + self.annotation)
        parts += list(self.modifiers)
        parts += [self.class_type, self.class_pattern]
        if self.extends_pattern:
            parts += [self.extends_keyword, self.extends_pattern]
        if self.member_specs:
            parts.append("{ " + " ".join(m.text() + ";" for m in self.member_specs) + " }")
        return " ".join(parts)


@dataclass(frozen=True)
class RuleFile:
    keep_rules: tuple[KeepRule, ...] = ()
    flags: dict = field(default_factory=dict)  # option -> argument string or None
    dontwarn: tuple[str, ...] = ()
    unrecognized: tuple[str, ...] = ()

    @property
    def dontobfuscate(self) -> bool:
        return "dontobfuscate" in self.flags


def _split_directives(text: str) -> list[tuple[int, str]]:
    directives: list[tuple[int, list[str]]] = []
    depth = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if depth == 0 and line.startswith("-"):
            directives.append((lineno, [line]))
        elif directives:
            directives[-1][1].append(line)
        else:
            raise RuleParseError(f"text outside any directive: {line!r}", lineno)
        depth += line.count("{") - line.count("}")
        if depth < 0:
            raise RuleParseError("unbalanced '}'", lineno)
    if depth:
        raise RuleParseError("unclosed '{'", directives[-1][0])
    return [(n, " ".join(parts)) for n, parts in directives]


_DIRECTIVE = re.compile(r"-(\w+)((?:\s*,\s*\w+)*)\s*(.*)\Z", re.S)


def _parse_member(text: str, lineno: int) -> MemberSpec:
    tokens = text.split()
    mods = []
    while tokens and (tokens[0].lstrip("!") in MEMBER_MODIFIERS or tokens[0].startswith("@")):
        mods.append(tokens.pop(0))
    rest = " ".join(tokens)
    if not rest:
        raise RuleParseError(f"empty member specification {text!r}", lineno)
    if rest == "<methods>":
        return MemberSpec("method", "*", None, None, tuple(mods))
    if rest == "<fields>":
        return MemberSpec("field", "*", None, None, tuple(mods))
    if rest == "*":
        return MemberSpec("wildcard", "*", None, None, tuple(mods))
    if "(" in rest:
        if not rest.endswith(")"):
            # "return values" clauses are accepted and dropped
            rest = rest[: rest.rindex(")") + 1] if ")" in rest else rest
        if ")" not in rest:
            raise RuleParseError(f"unclosed parameter list in {text!r}", lineno)
        pre = rest[: rest.index("(")].split()
        if not pre:
            raise RuleParseError(f"method without a name in {text!r}", lineno)
        args = rest[rest.index("(") + 1 : rest.rindex(")")]
        params = tuple(a.strip() for a in args.split(",") if a.strip())
        return MemberSpec("method", pre[-1], params, " ".join(pre[:-1]) or None, tuple(mods))
    parts = rest.split()
    return MemberSpec("field", parts[-1], None, " ".join(parts[:-1]) or None, tuple(mods))


def _parse_keep(variant: str, options: tuple[str, ...], spec: str, lineno: int) -> KeepRule:
    body = None
    if "{" in spec:
        head, _, body = spec.partition("{")
        if not body.rstrip().endswith("}"):
            raise RuleParseError("member block not closed", lineno)
        body = body.rstrip()[:-1]
    else:
        head = spec
    tokens = head.split()
    annotation = None
    modifiers = []
    while tokens and tokens[0] not in CLASS_KEYWORDS and tokens[0].lstrip("!") not in CLASS_KEYWORDS:
        tok = tokens.pop(0)
        if tok.startswith("@"):
            annotation = tok[1:]
        elif tok.lstrip("!") in CLASS_MODIFIERS:
            modifiers.append(tok)
        else:
            raise RuleParseError(f"expected class/interface/enum, got {tok!r}", lineno)
    if not tokens:
        raise RuleParseError("missing class keyword in keep rule", lineno)
    class_type = tokens.pop(0)
    name_tokens = []
    while tokens and tokens[0] not in ("extends", "implements"):
        name_tokens.append(tokens.pop(0))
    class_pattern = "".join(name_tokens)
    if not class_pattern:
        raise RuleParseError("missing class name in keep rule", lineno)
    extends_pattern, extends_kw = None, "extends"
    if tokens:
        extends_kw = tokens.pop(0)
        if tokens and tokens[0].startswith("@"):
            tokens.pop(0)
        extends_pattern = "".join(tokens)
        if not extends_pattern:
            raise RuleParseError(f"missing type after {extends_kw!r}", lineno)
    members = ()
    if body is not None:
        members = tuple(_parse_member(m, lineno) for m in body.split(";") if m.strip())
    return KeepRule(
        variant=variant,
        class_pattern=class_pattern,
        class_type=class_type,
        modifiers=tuple(modifiers),
        options=options,
        annotation=annotation,
        extends_pattern=extends_pattern,
        extends_keyword=extends_kw,
        member_specs=members,
        line=lineno,
    )


def parse_rules(text: str) -> RuleFile:
    keep, flags, dontwarn, unknown = [], {}, [], []
    for lineno, directive in _split_directives(text):
        m = _DIRECTIVE.match(directive)
        if not m:
            unknown.append(" ".join(directive.split()))
            continue
        name, opts, rest = m.group(1), m.group(2), m.group(3).strip()
        if name == "keepclassmemebers":  # common misspelling
            name = "keepclassmembers"
        if name in KEEP_VARIANTS:
            options = tuple(o.strip() for o in opts.split(",") if o.strip())
            keep.append(_parse_keep(name, options, rest, lineno))
        elif name == "dontwarn":
            dontwarn.extend([p.strip() for p in rest.split(",") if p.strip()] or ["**"])
        elif name in KNOWN_OPTIONS and not opts:
            flags.setdefault(name, rest or None)
        else:
            unknown.append(" ".join(directive.split()))
    return RuleFile(tuple(keep), flags, tuple(dontwarn), tuple(unknown))


def format_rules(rules: RuleFile) -> str:
    lines = []
    for name, arg in rules.flags.items():
        lines.append(f"-{name}" + (f" {arg}" if arg else ""))
    lines += [f"-dontwarn {p}" for p in rules.dontwarn]
    lines += [r.text() for r in rules.keep_rules]
    lines += list(rules.unrecognized)
    return "\n".join(lines) + "\n"


def rule_matches(
    rule: KeepRule,
    class_name: str,
    member: MemberRef | None = None,
    *,
    supertypes: Iterable[str] = (),
    is_interface: bool | None = None,
    class_members: Sequence[MemberRef] | None = None,
) -> bool:
    """Whether ``rule`` protects ``class_name`` (member None) or the given member of it."""
    if not class_pattern_matches(rule.class_pattern, class_name):
        return False
    if rule.class_type.lstrip("!") == "interface" and is_interface is not None:
        if is_interface == rule.class_type.startswith("!"):
            return False
    if rule.extends_pattern is not None and not any(
        class_pattern_matches(rule.extends_pattern, s) for s in supertypes
    ):
        return False
    if rule.variant in WITH_MEMBERS_VARIANTS and class_members is not None:
        if not all(any(spec.matches(m) for m in class_members) for spec in rule.member_specs):
            return False
    if member is None:
        return rule.variant not in MEMBER_ONLY_VARIANTS
    return any(spec.matches(member) for spec in rule.member_specs)


# -- gradle -----------------------------------------------------------------


@dataclass(frozen=True)
class BuildConfig:
    minify_enabled: bool = False
    proguard_files: tuple[str, ...] = ()
    build_type: str = "release"

    def __post_init__(self):
        object.__setattr__(self, "proguard_files", tuple(self.proguard_files))
        if any(not f for f in self.proguard_files):
            raise ValueError("proguard file names must be non-empty")


_GRADLE_TOKEN = re.compile(
    r"""(?P<nl>\n)|(?P<ws>[ \t\r]+)|(?P<str>'(?:[^'\\\n]|\\.)*'|"(?:[^"\\\n]|\\.)*")"""
    r"""|(?P<word>[A-Za-z_][\w.]*)|(?P<punct>[{}()=,])|(?P<other>.)"""
)


def _strip_comments(text: str) -> str:
    """Blank out // and /* */ comments, keeping strings and line breaks intact."""
    out, i, n = [], 0, len(text)
    quote = None
    while i < n:
        ch = text[i]
        if quote:
            out.append(ch)
            if ch == "\\" and i + 1 < n:
                out.append(text[i + 1])
                i += 1
            elif ch == quote or ch == "\n":
                quote = None
        elif ch in "'\"":
            quote = ch
            out.append(ch)
        elif text.startswith("//", i):
            end = text.find("\n", i)
            i = n if end < 0 else end
            continue
        elif text.startswith("/*", i):
            end = text.find("*/", i + 2)
            end = n if end < 0 else end + 2
            out.append("\n" * text.count("\n", i, end))
            i = end
            continue
        else:
            out.append(ch)
        i += 1
    return "".join(out)


def _gradle_tokens(text: str):
    line = 1
    for m in _GRADLE_TOKEN.finditer(_strip_comments(text)):
        kind = m.lastgroup
        if kind == "nl":
            yield ("nl", "\n", line)
            line += 1
        elif kind == "ws":
            continue
        elif kind == "other" and m.group(0) in "'\"":
            raise GradleParseError("unterminated string", line)
        else:
            yield (kind, m.group(0), line)


@dataclass
class _Block:
    name: str
    statements: list = field(default_factory=list)
    children: list = field(default_factory=list)


def _gradle_tree(text: str) -> _Block:
    root = _Block("")
    stack = [root]
    current: list = []
    paren = 0
    line = 1
    for kind, value, line in _gradle_tokens(text):
        if kind == "nl":
            if paren == 0 and current:
                stack[-1].statements.append(current)
                current = []
            continue
        if value == "(":
            paren += 1
        elif value == ")":
            paren -= 1
        if value == "{":
            strings = [v for k, v, _ in current if k == "str"]
            words = [v for k, v, _ in current if k == "word"]
            name = strings[-1][1:-1] if strings else (words[0] if words else "")
            block = _Block(name)
            stack[-1].children.append(block)
            stack.append(block)
            current = []
            paren = 0
        elif value == "}":
            if len(stack) == 1:
                raise GradleParseError("unbalanced '}'", line)
            if current:
                stack[-1].statements.append(current)
                current = []
            stack.pop()
        else:
            current.append((kind, value, line))
    if len(stack) > 1:
        raise GradleParseError(f"unclosed block {stack[-1].name!r}", line)
    if current:
        root.statements.append(current)
    return root


def _build_type(block: _Block) -> BuildConfig:
    minify, files = False, []
    for stmt in block.statements:
        words = [v for k, v, _ in stmt if k == "word"]
        if not words:
            continue
        key = words[0]
        if key in ("minifyEnabled", "isMinifyEnabled"):
            minify = "true" in words[1:]
        elif key in ("proguardFiles", "proguardFile", "setProguardFiles"):
            files.extend(v[1:-1] for k, v, _ in stmt if k == "str" and len(v) > 2)
    return BuildConfig(minify, tuple(files), block.name)


def parse_build_types(text: str) -> dict[str, BuildConfig]:
    """All build types declared inside ``buildTypes { ... }`` blocks."""
    out = {}

    def walk(block: _Block):
        for child in block.children:
            if child.name == "buildTypes":
                for bt in child.children:
                    out.setdefault(bt.name, _build_type(bt))
            else:
                walk(child)

    walk(_gradle_tree(text))
    return out


def parse_gradle_snippet(text: str, build_type: str = "release") -> BuildConfig:
    return parse_build_types(text).get(build_type, BuildConfig(build_type=build_type))


# -- grading ----------------------------------------------------------------

MISSING_MINIFY = "MISSING_MINIFY"
MISSING_PROGUARD_FILES = "MISSING_PROGUARD_FILES"
DONTOBFUSCATE_PRESENT = "DONTOBFUSCATE_PRESENT"
KEEP_MISSING_TARGET = "KEEP_MISSING_TARGET"
KEEP_COVERS_FORBIDDEN = "KEEP_COVERS_FORBIDDEN"
WILDCARD_TOO_BROAD = "WILDCARD_TOO_BROAD"
CLASS_NAME_MISSPELLED = "CLASS_NAME_MISSPELLED"


@dataclass(frozen=True)
class Target:
    class_name: str
    member: MemberRef | None = None

    @classmethod
    def from_dict(cls, doc: dict) -> "Target":
        member = doc.get("member")
        return cls(doc["class"], MemberRef.parse(member) if member else None)


@dataclass(frozen=True)
class Rubric:
    must_keep: tuple[Target, ...] = ()
    must_obfuscate: tuple[Target, ...] = ()

    @classmethod
    def from_dict(cls, doc: dict) -> "Rubric":
        return cls(
            tuple(Target.from_dict(t) for t in doc.get("must_keep", [])),
            tuple(Target.from_dict(t) for t in doc.get("must_obfuscate", [])),
        )

    @classmethod
    def loads(cls, text: str) -> "Rubric":
        return cls.from_dict(json.loads(text))


TASK1_RUBRIC = Rubric()


@dataclass(frozen=True)
class GradeResult:
    verdict: str
    reasons: tuple[str, ...] = ()

    @property
    def correct(self) -> bool:
        return self.verdict == "correct"

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "reasons": list(self.reasons)}


def edit_distance(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _class_context(app, class_name: str) -> dict:
    """Supertypes, interface flag and members of ``class_name`` when the app knows the class."""
    if app is None:
        return {}
    cls = next((c for c in app.classes if c.qualified_name == class_name), None)
    if cls is None:
        return {}
    members = [MemberRef(m.name, "method", m.param_types, m.return_type) for m in cls.methods]
    members += [MemberRef(f.name, "field", None, f.type) for f in cls.fields]
    return {"supertypes": cls.supertypes, "is_interface": cls.is_interface, "class_members": members}


def _covers(rule: KeepRule, target: Target, lenient: bool, ctx: dict) -> bool:
    if not rule.keeps_names:
        return False
    if target.member is None:
        return rule_matches(rule, target.class_name, **ctx)
    if rule_matches(rule, target.class_name, target.member, **ctx):
        return True
    # lenient: a class-level keep without member specs also counts for the member
    return lenient and not rule.member_specs and rule_matches(rule, target.class_name, **ctx)


def _exposes(rule: KeepRule, target: Target, ctx: dict) -> bool:
    """Whether ``rule`` stops any part of ``target`` from being renamed."""
    if not rule.keeps_names:
        return False
    if rule_matches(rule, target.class_name, **ctx):
        return True
    return target.member is not None and rule_matches(rule, target.class_name, target.member, **ctx)


def grade(
    build: BuildConfig,
    rules: RuleFile,
    rubric: Rubric = TASK1_RUBRIC,
    app=None,
    *,
    lenient: bool = False,
) -> GradeResult:
    """Binary verdict: every checked parameter must be acceptable."""
    reasons: list[str] = []
    if not build.minify_enabled:
        reasons.append(MISSING_MINIFY)
    if not build.proguard_files:
        reasons.append(MISSING_PROGUARD_FILES)
    if rules.dontobfuscate:
        reasons.append(DONTOBFUSCATE_PRESENT)

    for target in rubric.must_keep:
        ctx = _class_context(app, target.class_name)
        if not any(_covers(r, target, lenient, ctx) for r in rules.keep_rules):
            reasons.append(KEEP_MISSING_TARGET)
            break

    offending = [
        r
        for t in rubric.must_obfuscate
        for r in rules.keep_rules
        if _exposes(r, t, _class_context(app, t.class_name))
    ]
    if offending:
        reasons.append(KEEP_COVERS_FORBIDDEN)
        if any(has_wildcard(r.class_pattern) for r in offending):
            reasons.append(WILDCARD_TOO_BROAD)

    if rubric.must_keep:
        universe = app.class_names() if app is not None else [
            t.class_name for t in rubric.must_keep + rubric.must_obfuscate
        ]
        for rule in rules.keep_rules:
            if has_wildcard(rule.class_pattern):
                continue
            if any(class_pattern_matches(rule.class_pattern, n) for n in universe):
                continue
            if any(0 < edit_distance(rule.class_pattern, t.class_name) <= 2 for t in rubric.must_keep):
                reasons.append(CLASS_NAME_MISSPELLED)
                break

    return GradeResult("incorrect" if reasons else "correct", tuple(reasons))
