"""Grade a few build.gradle and ProGuard rule submissions for the keep/obfuscate task."""

from dexobf.proguard import Rubric, grade, parse_gradle_snippet, parse_rules

GRADLE = """android {
    buildTypes {
        release {
            minifyEnabled true
            proguardFiles 'proguard-rules.pro'
        }
    }
}
"""

RUBRIC = Rubric.from_dict(
    {
        "must_keep": [{"class": "com.task.OpenClass", "member": "doStuff()"}],
        "must_obfuscate": [{"class": "com.task.SecretClass", "member": "doSecretStuff()"}],
    }
)

SUBMISSIONS = {
    "keep the one method": "-keep class com.task.OpenClass { void doStuff(); }",
    "names-only variant": "-keepnames class com.task.OpenClass { void doStuff(); }",
    "forgot the keep": "-dontwarn com.task.**",
    "typo in the package": "-keep class com.tsak.OpenClass { void doStuff(); }",
    "wildcard class": "-keep class com.task.* { *; }",
    "turned it all off": "-keep class com.task.OpenClass { void doStuff(); }\n-dontobfuscate",
}

build = parse_gradle_snippet(GRADLE)
for label, rules in SUBMISSIONS.items():
    result = grade(build, parse_rules(rules), RUBRIC)
    print(f"{label:22} {result.verdict:9} {' '.join(result.reasons)}")
