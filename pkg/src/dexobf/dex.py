"""Minimal DEX / APK reader producing :class:`~dexobf.model.AppModel`.

Only the sections the detectors need are decoded: header, string/type/proto/
field/method ids, class defs, class data, code item headers and as much of each
debug info program as it takes to see whether a line entry is emitted.

Layout follows https://source.android.com/docs/core/runtime/dex-format .
Every malformed input ends in :class:`DexParseError`; nothing else escapes.
"""

from __future__ import annotations

import io
import logging
import re
import struct
import zipfile
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from .model import AppModel, ClassRecord, FieldRecord, MethodRecord, ModelError

log = logging.getLogger(__name__)

DEX_MAGIC = b"dex\n"
SUPPORTED_VERSIONS = frozenset({"035", "036", "037", "038", "039"})
HEADER_SIZE = 0x70
ENDIAN_CONSTANT = 0x12345678
NO_INDEX = 0xFFFFFFFF
ACC_INTERFACE = 0x200
MAX_ENTRY_SIZE = 1 << 30

_CLASSES_DEX = re.compile(r"^classes(\d*)\.dex$")

PRIMITIVES = {
    "V": "void",
    "Z": "boolean",
    "B": "byte",
    "S": "short",
    "C": "char",
    "I": "int",
    "J": "long",
    "F": "float",
    "D": "double",
}
_PRIMITIVE_CODES = {v: k for k, v in PRIMITIVES.items()}

# debug_info_item opcodes
DBG_END_SEQUENCE = 0x00
DBG_ADVANCE_PC = 0x01
DBG_ADVANCE_LINE = 0x02
DBG_START_LOCAL = 0x03
DBG_START_LOCAL_EXTENDED = 0x04
DBG_END_LOCAL = 0x05
DBG_RESTART_LOCAL = 0x06
DBG_SET_PROLOGUE_END = 0x07
DBG_SET_EPILOGUE_BEGIN = 0x08
DBG_SET_FILE = 0x09
DBG_FIRST_SPECIAL = 0x0A


class DexParseError(ValueError):
    def __init__(self, section: str, offset: int, message: str = "truncated or malformed"):
        super().__init__(f"{section} @0x{offset:x}: {message}")
        self.section = section
        self.offset = offset


class UnsupportedDexVersion(DexParseError):
    def __init__(self, version: str):
        super().__init__("header", 4, f"unsupported version {version!r}")
        self.version = version


class NoCodeError(DexParseError):
    def __init__(self):
        super().__init__("zip", 0, "no code: archive holds no classes*.dex entry")


# -- descriptors ------------------------------------------------------------


def descriptor_to_class_name(descriptor: str) -> str:
    """``La/b/C;`` -> ``a.b.C``."""
    if len(descriptor) < 3 or descriptor[0] != "L" or descriptor[-1] != ";":
        raise ValueError(f"not a class descriptor: {descriptor!r}")
    body = descriptor[1:-1]
    if "." in body or ";" in body or any(not seg for seg in body.split("/")):
        raise ValueError(f"not a class descriptor: {descriptor!r}")
    return body.replace("/", ".")


def class_name_to_descriptor(name: str) -> str:
    if not name or "/" in name or ";" in name or any(not seg for seg in name.split(".")):
        raise ValueError(f"not a class name: {name!r}")
    return "L" + name.replace(".", "/") + ";"


def descriptor_to_type_name(descriptor: str) -> str:
    """Any type descriptor to its Java source spelling (``[I`` -> ``int[]``)."""
    dims = len(descriptor) - len(descriptor.lstrip("["))
    base = descriptor[dims:]
    if base in PRIMITIVES:
        if dims and base == "V":
            raise ValueError("array of void")
        name = PRIMITIVES[base]
    else:
        name = descriptor_to_class_name(base)
    return name + "[]" * dims


def type_name_to_descriptor(name: str) -> str:
    dims = 0
    while name.endswith("[]"):
        name = name[:-2]
        dims += 1
    base = _PRIMITIVE_CODES.get(name) or class_name_to_descriptor(name)
    return "[" * dims + base


# -- low level reading ------------------------------------------------------


def decode_mutf8(raw: bytes) -> str:
    """Decode modified UTF-8 (Java/DEX flavour: encoded NUL, CESU surrogates)."""
    text = raw.replace(b"\xc0\x80", b"\x00").decode("utf-8", errors="surrogatepass")
    return text.encode("utf-16-le", errors="surrogatepass").decode("utf-16-le")


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.size = len(data)

    def need(self, offset: int, length: int, section: str):
        if offset < 0 or length < 0 or offset + length > self.size:
            raise DexParseError(section, offset)

    def u2(self, offset: int, section: str) -> int:
        self.need(offset, 2, section)
        return struct.unpack_from("<H", self.data, offset)[0]

    def u4(self, offset: int, section: str) -> int:
        self.need(offset, 4, section)
        return struct.unpack_from("<I", self.data, offset)[0]

    def uleb128(self, offset: int, section: str) -> tuple[int, int]:
        result = 0
        for i in range(5):
            if offset + i >= self.size:
                raise DexParseError(section, offset + i)
            byte = self.data[offset + i]
            result |= (byte & 0x7F) << (7 * i)
            if byte < 0x80:
                return result & 0xFFFFFFFF, offset + i + 1
        raise DexParseError(section, offset, "uleb128 longer than 5 bytes")

    def sleb128(self, offset: int, section: str) -> tuple[int, int]:
        value, end = self.uleb128(offset, section)
        bits = 7 * (end - offset)
        if bits < 32 and value & (1 << (bits - 1)):
            value -= 1 << bits
        elif bits >= 32 and value & 0x80000000:
            value -= 1 << 32
        return value, end


@dataclass(frozen=True)
class DexHeader:
    version: str
    file_size: int
    string_ids: tuple[int, int]
    type_ids: tuple[int, int]
    proto_ids: tuple[int, int]
    field_ids: tuple[int, int]
    method_ids: tuple[int, int]
    class_defs: tuple[int, int]


class DexFile:
    """One parsed DEX image. Table lookups are lazy and cached."""

    def __init__(self, data: bytes):
        self._r = _Reader(data)
        self.header = self._parse_header()
        self._strings: dict[int, str] = {}

    def _parse_header(self) -> DexHeader:
        r = self._r
        r.need(0, 8, "header")
        magic = r.data[:8]
        if magic[:4] != DEX_MAGIC or magic[7] != 0:
            raise DexParseError("header", 0, "bad magic")
        try:
            version = magic[4:7].decode("ascii")
        except UnicodeDecodeError:
            raise UnsupportedDexVersion(repr(magic[4:7])) from None
        if version not in SUPPORTED_VERSIONS:
            raise UnsupportedDexVersion(version)
        r.need(0, HEADER_SIZE, "header")
        if r.u4(40, "header") != ENDIAN_CONSTANT:
            raise DexParseError("header", 40, "unsupported endian tag")
        file_size = r.u4(32, "header")
        if file_size > r.size:
            raise DexParseError("header", 32, f"file_size {file_size} exceeds data length {r.size}")

        def table(off: int, name: str, item_size: int) -> tuple[int, int]:
            count, start = r.u4(off, "header"), r.u4(off + 4, "header")
            if count:
                r.need(start, count * item_size, name)
            return count, start

        return DexHeader(
            version=version,
            file_size=file_size,
            string_ids=table(56, "string_ids", 4),
            type_ids=table(64, "type_ids", 4),
            proto_ids=table(72, "proto_ids", 12),
            field_ids=table(80, "field_ids", 8),
            method_ids=table(88, "method_ids", 8),
            class_defs=table(96, "class_defs", 32),
        )

    @staticmethod
    def _index(table: tuple[int, int], idx: int, section: str, item_size: int) -> int:
        count, start = table
        if idx >= count:
            raise DexParseError(section, start, f"index {idx} out of range ({count})")
        return start + idx * item_size

    def string(self, idx: int) -> str:
        if idx in self._strings:
            return self._strings[idx]
        r = self._r
        data_off = r.u4(self._index(self.header.string_ids, idx, "string_ids", 4), "string_ids")
        _, pos = r.uleb128(data_off, "string_data")
        end = r.data.find(b"\x00", pos)
        if end < 0:
            raise DexParseError("string_data", data_off, "unterminated string")
        try:
            value = decode_mutf8(r.data[pos:end])
        except UnicodeError:
            raise DexParseError("string_data", data_off, "invalid MUTF-8") from None
        self._strings[idx] = value
        return value

    def strings(self) -> Iterator[str]:
        """Every decodable string; undecodable entries are skipped."""
        for i in range(self.header.string_ids[0]):
            try:
                yield self.string(i)
            except DexParseError:
                continue

    def type_descriptor(self, idx: int) -> str:
        off = self._index(self.header.type_ids, idx, "type_ids", 4)
        return self.string(self._r.u4(off, "type_ids"))

    def type_name(self, idx: int) -> str:
        desc = self.type_descriptor(idx)
        try:
            return descriptor_to_type_name(desc)
        except ValueError:
            raise DexParseError("type_ids", self.header.type_ids[1], f"bad descriptor {desc!r}") from None

    def class_name(self, type_idx: int) -> str:
        desc = self.type_descriptor(type_idx)
        try:
            return descriptor_to_class_name(desc)
        except ValueError:
            raise DexParseError("type_ids", self.header.type_ids[1], f"bad class descriptor {desc!r}") from None

    def type_list(self, offset: int, section: str) -> list[int]:
        if offset == 0:
            return []
        r = self._r
        size = r.u4(offset, section)
        r.need(offset + 4, size * 2, section)
        return [r.u2(offset + 4 + 2 * i, section) for i in range(size)]

    def proto(self, idx: int) -> tuple[tuple[str, ...], str]:
        off = self._index(self.header.proto_ids, idx, "proto_ids", 12)
        r = self._r
        return_type = self.type_name(r.u4(off + 4, "proto_ids"))
        params = tuple(self.type_name(t) for t in self.type_list(r.u4(off + 8, "proto_ids"), "type_list"))
        return params, return_type

    def field_id(self, idx: int) -> tuple[str, str]:
        off = self._index(self.header.field_ids, idx, "field_ids", 8)
        r = self._r
        return self.string(r.u4(off + 4, "field_ids")), self.type_name(r.u2(off + 2, "field_ids"))

    def method_id(self, idx: int) -> tuple[str, int]:
        off = self._index(self.header.method_ids, idx, "method_ids", 8)
        r = self._r
        return self.string(r.u4(off + 4, "method_ids")), r.u2(off + 2, "method_ids")

    def _has_line_entries(self, debug_off: int) -> bool:
        r = self._r
        sec = "debug_info"
        _, pos = r.uleb128(debug_off, sec)  # line_start
        n_params, pos = r.uleb128(pos, sec)
        if n_params > r.size - pos:
            raise DexParseError(sec, debug_off, "parameter count exceeds data")
        for _ in range(n_params):
            _, pos = r.uleb128(pos, sec)
        while True:
            r.need(pos, 1, sec)
            op = r.data[pos]
            pos += 1
            if op >= DBG_FIRST_SPECIAL:
                return True
            if op == DBG_END_SEQUENCE:
                return False
            if op in (DBG_ADVANCE_PC, DBG_END_LOCAL, DBG_RESTART_LOCAL, DBG_SET_FILE):
                _, pos = r.uleb128(pos, sec)
            elif op == DBG_ADVANCE_LINE:
                _, pos = r.sleb128(pos, sec)
            elif op == DBG_START_LOCAL:
                for _ in range(3):
                    _, pos = r.uleb128(pos, sec)
            elif op == DBG_START_LOCAL_EXTENDED:
                for _ in range(4):
                    _, pos = r.uleb128(pos, sec)
            # SET_PROLOGUE_END / SET_EPILOGUE_BEGIN take no operands

    def _method_has_lines(self, code_off: int) -> bool:
        r = self._r
        r.need(code_off, 16, "code_item")
        debug_off = r.u4(code_off + 8, "code_item")
        return debug_off != 0 and self._has_line_entries(debug_off)

    def _class_data(self, offset: int, class_desc: str):
        r = self._r
        sec = "class_data"
        sizes = []
        pos = offset
        for _ in range(4):
            n, pos = r.uleb128(pos, sec)
            sizes.append(n)
        if sum(sizes) * 2 > r.size - pos:
            raise DexParseError(sec, offset, f"member counts exceed data for {class_desc}")
        fields = []
        for count in sizes[:2]:
            idx = 0
            for _ in range(count):
                diff, pos = r.uleb128(pos, sec)
                _, pos = r.uleb128(pos, sec)  # access_flags
                idx += diff
                name, ftype = self.field_id(idx)
                fields.append(FieldRecord(name=name, type=ftype))
        methods = []
        for count in sizes[2:]:
            idx = 0
            for _ in range(count):
                diff, pos = r.uleb128(pos, sec)
                _, pos = r.uleb128(pos, sec)  # access_flags
                code_off, pos = r.uleb128(pos, sec)
                idx += diff
                name, proto_idx = self.method_id(idx)
                params, ret = self.proto(proto_idx)
                has_code = code_off != 0
                methods.append(
                    MethodRecord(
                        name=name,
                        param_types=params,
                        return_type=ret,
                        has_code=has_code,
                        has_line_numbers=has_code and self._method_has_lines(code_off),
                    )
                )
        return fields, methods

    def class_count(self) -> int:
        return self.header.class_defs[0]

    def classes(self) -> Iterator[ClassRecord]:
        r = self._r
        sec = "class_defs"
        count, start = self.header.class_defs
        for i in range(count):
            off = start + 32 * i
            class_idx = r.u4(off, sec)
            access = r.u4(off + 4, sec)
            super_idx = r.u4(off + 8, sec)
            interfaces_off = r.u4(off + 12, sec)
            source_idx = r.u4(off + 16, sec)
            annotations_off = r.u4(off + 20, sec)
            class_data_off = r.u4(off + 24, sec)
            name = self.class_name(class_idx)
            supertypes = [] if super_idx == NO_INDEX else [self.class_name(super_idx)]
            supertypes += [self.class_name(t) for t in self.type_list(interfaces_off, "interfaces")]
            try:
                fields, methods = ([], []) if class_data_off == 0 else self._class_data(class_data_off, name)
                record = ClassRecord(
                    qualified_name=name,
                    is_interface=bool(access & ACC_INTERFACE),
                    source_file=None if source_idx == NO_INDEX else self.string(source_idx),
                    annotations_present=annotations_off != 0,
                    methods=methods,
                    fields=fields,
                    supertypes=supertypes,
                )
            except ModelError as exc:
                raise DexParseError(sec, off, str(exc)) from None
            yield record


def parse_dex(data: bytes) -> DexFile:
    return DexFile(bytes(data))


# -- containers -------------------------------------------------------------


@dataclass(frozen=True)
class DexContainer:
    source: str
    dex_entries: tuple[tuple[str, bytes], ...]
    total_bytes: int

    def dex_files(self) -> Iterator[DexFile]:
        for name, data in self.dex_entries:
            try:
                yield DexFile(data)
            except DexParseError as exc:
                raise _in_entry(exc, name) from None


def _in_entry(exc: DexParseError, entry: str) -> DexParseError:
    if isinstance(exc, UnsupportedDexVersion):
        return exc
    return DexParseError(f"{entry}:{exc.section}", exc.offset, str(exc).split(": ", 1)[-1])


def _dex_entry_order(name: str) -> int | None:
    m = _CLASSES_DEX.match(name)
    if not m:
        return None
    return int(m.group(1)) if m.group(1) else 1


def open_container(data: bytes, source: str = "<bytes>") -> DexContainer:
    """Wrap an APK (zip) or a bare DEX stream."""
    data = bytes(data)
    if data[:4] == DEX_MAGIC:
        return DexContainer(source, (("classes.dex", data),), len(data))
    if data[:2] != b"PK":
        raise DexParseError("header", 0, "bad magic: neither DEX nor zip")
    entries = []
    try:
        with zipfile.ZipFile(io.BytesIO(data)) as zf:
            for info in zf.infolist():
                order = _dex_entry_order(info.filename)
                if order is None:
                    continue
                if info.file_size > MAX_ENTRY_SIZE:
                    raise DexParseError("zip", info.header_offset, f"{info.filename} too large")
                entries.append((order, info.filename, zf.read(info)))
    except DexParseError:
        raise
    except (zipfile.BadZipFile, zlib.error, EOFError, NotImplementedError, RuntimeError, ValueError, OSError) as exc:
        raise DexParseError("zip", 0, f"unreadable archive: {exc}") from None
    if not entries:
        raise NoCodeError()
    entries.sort()
    return DexContainer(source, tuple((n, d) for _, n, d in entries), len(data))


def container_to_app(container: DexContainer, app_id: str, main_package: str | None = None) -> AppModel:
    classes: dict[str, ClassRecord] = {}
    for (entry, _), dex in zip(container.dex_entries, container.dex_files()):
        try:
            for cls in dex.classes():
                if cls.qualified_name in classes:
                    log.warning("%s: duplicate class %s in %s, keeping first", app_id, cls.qualified_name, entry)
                    continue
                classes[cls.qualified_name] = cls
        except DexParseError as exc:
            raise _in_entry(exc, entry) from None
    try:
        return AppModel(app_id=app_id, main_package=main_package, classes=list(classes.values()))
    except ModelError as exc:
        raise DexParseError("app", 0, str(exc)) from None


def parse_apk(data: bytes, app_id: str, main_package: str | None = None) -> AppModel:
    """Parse an APK or bare DEX byte stream into an app model."""
    try:
        return container_to_app(open_container(data), app_id, main_package)
    except DexParseError:
        raise
    except (RecursionError, MemoryError, OverflowError) as exc:
        raise DexParseError("input", 0, f"{type(exc).__name__}: {exc}") from None


# -- tool markers -----------------------------------------------------------

DEFAULT_MARKERS: Mapping[str, tuple[str, ...]] = {
    "dexprotector": ("com.dexprotector",),
    "bangcle": ("com.secneo", "com.bangcle"),
}


@dataclass(frozen=True)
class ToolMarkerReport:
    dexprotector_detected: bool = False
    bangcle_detected: bool = False
    marker_evidence: tuple[str, ...] = ()
    families: Mapping[str, tuple[str, ...]] = field(default_factory=dict, compare=False)


def _normalize(name: str) -> str:
    if name.startswith("L") and name.endswith(";"):
        name = name[1:-1]
    return name.replace("/", ".")


def scan_names(names: Iterable[str], markers: Mapping[str, Iterable[str]] = DEFAULT_MARKERS) -> ToolMarkerReport:
    """Check class names (dotted or descriptor form) against marker package prefixes."""
    prefixes = {fam: tuple(p) for fam, p in markers.items()}
    hits: dict[str, set[str]] = {fam: set() for fam in prefixes}
    for raw in names:
        name = _normalize(raw)
        for fam, pre in prefixes.items():
            if any(name == p or name.startswith(p + ".") for p in pre):
                hits[fam].add(name)
    evidence = sorted(set().union(*hits.values())) if hits else []
    return ToolMarkerReport(
        dexprotector_detected=bool(hits.get("dexprotector")),
        bangcle_detected=bool(hits.get("bangcle")),
        marker_evidence=tuple(evidence),
        families={fam: tuple(sorted(h)) for fam, h in hits.items()},
    )


def scan_tool_markers(container: DexContainer, markers: Mapping[str, Iterable[str]] = DEFAULT_MARKERS) -> ToolMarkerReport:
    """Look for packer/protector marker packages in class names and string tables."""

    def names():
        for dex in container.dex_files():
            yield from dex.strings()

    return scan_names(names(), markers)
