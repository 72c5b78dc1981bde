"""Static detection of ProGuard-style obfuscation in Android apps."""

from .detect import DetectorConfig, analyze
from .dex import parse_apk, scan_tool_markers
from .model import AppModel, ClassRecord, FeatureReport, FieldRecord, MethodRecord, load_app, save_app, load_report, save_report
from .names import RenameAlphabet, generated_prefix, match_scope, nth_name
from .proguard import grade, parse_gradle_snippet, parse_rules
from .simulate import SimulationPlan, make_eval_corpus, mcc, score, simulate

__version__ = "0.1.0"

__all__ = [
    "AppModel", "ClassRecord", "DetectorConfig", "FeatureReport", "FieldRecord", "MethodRecord",
    "RenameAlphabet", "SimulationPlan", "analyze", "generated_prefix", "grade", "load_app", "load_report",
    "make_eval_corpus", "match_scope", "mcc", "nth_name", "parse_apk", "parse_gradle_snippet", "parse_rules",
    "save_app", "save_report", "scan_tool_markers", "score", "simulate",
]
