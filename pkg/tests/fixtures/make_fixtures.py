"""Regenerate the binary DEX/APK fixtures. Run from the repository root:

    python3 tests/fixtures/make_fixtures.py

The outputs are committed; tests read the files rather than rebuilding them.
"""

import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE.parent))

from dexbuilder import ClassSpec, MethodSpec, build_apk, build_dex  # noqa: E402


def hello_classes(lines):
    return [
        ClassSpec(
            "com.dev.app.MainActivity",
            superclass="android.app.Activity",
            source_file="MainActivity.java" if lines else None,
            annotation="dalvik.annotation.MemberClasses" if lines else None,
            fields=[("counter", "int"), ("title", "java.lang.String")],
            methods=[
                MethodSpec("<init>", lines=lines),
                MethodSpec("onCreate", ("android.os.Bundle",), lines=lines),
                MethodSpec("m", ("int",), lines=lines),
            ],
        ),
        ClassSpec(
            "com.dev.app.util.Helper",
            source_file="Helper.java" if lines else None,
            static_fields=[("INSTANCE", "com.dev.app.util.Helper")],
            methods=[
                MethodSpec("<init>", lines=lines),
                MethodSpec("format", ("long", "int[]"), "java.lang.String", static=True, lines=lines),
            ],
        ),
        ClassSpec(
            "com.dev.app.Listener",
            interface=True,
            superclass="java.lang.Object",
            source_file="Listener.java" if lines else None,
            methods=[MethodSpec("onEvent", ("java.lang.String",), code=False)],
        ),
    ]


def library_classes():
    # an already-obfuscated third-party library
    return [
        ClassSpec(f"com.lib.x.{n}", methods=[MethodSpec("a", ("int",), lines=False), MethodSpec("a", ("double",), lines=False), MethodSpec("b", lines=False)],
                  fields=[("a", "int"), ("b", "int"), ("c", "long")])
        for n in "abc"
    ]


def main():
    debug = build_dex(hello_classes(True) + library_classes())
    stripped = build_dex(hello_classes(False) + library_classes())
    (HERE / "hello.apk").write_bytes(build_apk({"classes.dex": debug, "AndroidManifest.xml": b"\x03\x00\x08\x00"}))
    (HERE / "hello-stripped.apk").write_bytes(build_apk({"classes.dex": stripped}))
    (HERE / "hello.dex").write_bytes(debug)
    protector = build_dex(
        [ClassSpec("com.dexprotector.annotations.ClassEncryption", interface=True), ClassSpec("com.dev.app.Main")],
        extra_strings=("com.secneo.apkwrapper.ApplicationWrapper",),
    )
    (HERE / "protected.dex").write_bytes(protector)


if __name__ == "__main__":
    main()
