import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from dexobf.model import AppModel, ClassRecord, FieldRecord, MethodRecord, load_app
from dexobf.proguard import parse_rules
from dexobf.simulate import (
    EVAL_FEATURES,
    ConfusionCounts,
    SimulationPlan,
    ShapeMismatch,
    evaluate,
    make_eval_corpus,
    mcc,
    metrics_csv,
    read_manifest,
    restore,
    score,
    simulate,
    write_manifest,
)
from dexobf.synthetic import generate_app, generate_corpus

from strategies import app_models

FULL = SimulationPlan.full()


def matrix_app():
    return AppModel(
        "m",
        [
            ClassRecord(
                "p.Matrix",
                source_file="Matrix.java",
                annotations_present=True,
                methods=[MethodRecord("<init>", ("int",), has_line_numbers=True)],
                fields=[FieldRecord("M", "int")],
            )
        ],
    )


def test_matrix_example():
    sim, rmap = simulate(matrix_app(), FULL)
    (cls,) = sim.classes
    assert cls.qualified_name == "p.a"
    assert [f.name for f in cls.fields] == ["a"]
    assert [m.name for m in cls.methods] == ["<init>"]
    assert cls.source_file is None and not cls.annotations_present
    assert not cls.methods[0].has_line_numbers
    assert rmap.classes == {"p.Matrix": "p.a"}


def test_identity_plan():
    app = generate_app(random.Random(1), "x")
    sim, rmap = simulate(app, SimulationPlan())
    assert sim == app and not rmap.classes and not rmap.methods and not rmap.fields


@settings(max_examples=80, deadline=None)
@given(app_models())
def test_identity_plan_property(app):
    assert simulate(app, SimulationPlan())[0] == app


def test_aggressive_overloading_collapses_signatures():
    app = AppModel("x", [ClassRecord("p.K", methods=[MethodRecord("m", ("int",)), MethodRecord("n", ("double",))])])
    sim, _ = simulate(app, SimulationPlan(rename_methods=True, overload_aggressively=True))
    assert [(m.name, m.param_types) for m in sim.classes[0].methods] == [("a", ("int",)), ("a", ("double",))]


def test_same_signature_methods_get_distinct_names():
    app = AppModel("x", [ClassRecord("p.K", methods=[MethodRecord("m", ("int",)), MethodRecord("n", ("int",))])])
    sim, _ = simulate(app, SimulationPlan(rename_methods=True, overload_aggressively=True))
    assert [m.name for m in sim.classes[0].methods] == ["a", "b"]


def test_overloading_requires_method_renaming():
    with pytest.raises(ValueError):
        SimulationPlan(overload_aggressively=True)


def test_renaming_is_sorted_and_per_package():
    app = AppModel("x", [ClassRecord("p.Zeta"), ClassRecord("p.Alpha"), ClassRecord("q.Beta")])
    _, rmap = simulate(app, SimulationPlan(rename_classes=True))
    assert rmap.classes == {"p.Alpha": "p.a", "p.Zeta": "p.b", "q.Beta": "q.a"}


def test_inner_classes_follow_outer():
    app = AppModel("x", [ClassRecord("p.Outer"), ClassRecord("p.Outer$Inner"), ClassRecord("p.Outer$1"), ClassRecord("p.Other")])
    _, rmap = simulate(app, SimulationPlan(rename_classes=True))
    assert rmap.classes["p.Outer"] == "p.b"
    assert rmap.classes["p.Outer$1"] == "p.b$a" and rmap.classes["p.Outer$Inner"] == "p.b$b"


def test_type_references_follow_renamed_classes():
    app = AppModel("x", [
        ClassRecord("p.Model"),
        ClassRecord("p.User", methods=[MethodRecord("load", ("p.Model[]",), "p.Model")], fields=[FieldRecord("model", "p.Model")], supertypes=("p.Model",)),
    ])
    sim, _ = simulate(app, SimulationPlan(rename_classes=True))
    user = sim.classes[1]
    assert user.methods[0].param_types == ("p.a[]",) and user.methods[0].return_type == "p.a"
    assert user.fields[0].type == "p.a" and user.supertypes == ("p.a",)


def test_keep_rule_exempts_and_notes_collision():
    app = AppModel("x", [ClassRecord("p.a"), ClassRecord("p.Other"), ClassRecord("p.Third")])
    plan = SimulationPlan(rename_classes=True, keep_rules=parse_rules("-keep class p.a").keep_rules)
    _, rmap = simulate(app, plan)
    assert rmap.classes["p.a"] == "p.a"
    assert rmap.classes["p.Other"] == "p.b" and rmap.classes["p.Third"] == "p.c"
    assert any("skipped 'a'" in n for n in rmap.notes)


def test_keep_rule_exempts_members():
    app = AppModel("x", [ClassRecord("p.K", methods=[MethodRecord("doStuff"), MethodRecord("b"), MethodRecord("other")])])
    plan = SimulationPlan(rename_methods=True, keep_rules=parse_rules("-keepclassmembers class p.K { void b(); }").keep_rules)
    sim, rmap = simulate(app, plan)
    assert [m.name for m in sim.classes[0].methods] == ["a", "b", "c"]
    assert any("skipped 'b'" in n for n in rmap.notes)


def test_simulate_is_deterministic():
    app = generate_app(random.Random(5), "x")
    assert simulate(app, FULL) == simulate(app, FULL)


@settings(max_examples=80, deadline=None)
@given(app_models(), st.booleans(), st.booleans(), st.booleans())
def test_restore_inverts_renaming(app, c, m, f):
    plan = SimulationPlan(rename_classes=c, rename_methods=m, rename_fields=f)
    sim, rmap = simulate(app, plan)
    assert restore(sim, rmap) == app


def test_restore_on_synthetic_corpus():
    plan = SimulationPlan(rename_classes=True, rename_methods=True, rename_fields=True)
    for app in generate_corpus(10, seed=2):
        sim, rmap = simulate(app, plan)
        assert restore(sim, rmap) == app


def test_plan_from_dict():
    plan = SimulationPlan.from_dict({"rename_classes": True, "alphabet": "lower_case", "keep_rules": ["-keep class a.B"]})
    assert plan.rename_classes and plan.alphabet.mode == "lower_case" and len(plan.keep_rules) == 1
    assert SimulationPlan.from_dict(plan.to_dict()) == plan
    assert SimulationPlan.from_dict({"alphabet": ["x", "y"]}).alphabet.digits == ("x", "y")


@pytest.mark.parametrize("doc", [{"rename_everything": True}, {"rename_classes": "yes"}, {"overload_aggressively": True}, {"alphabet": "klingon"}])
def test_plan_validation(doc):
    with pytest.raises(ValueError):
        SimulationPlan.from_dict(doc)


# -- corpus

def test_eval_corpus_shape():
    apps = generate_corpus(5, seed=1)
    corpus = make_eval_corpus(apps, FULL)
    assert len(corpus) == 10
    assert [c.variant for c in corpus[:2]] == ["original", "obfuscated"]
    assert all(not v for v in corpus[0].labels.values()) and all(corpus[1].labels.values())
    assert make_eval_corpus([], FULL) == []


def test_disabled_feature_is_negative_on_both_versions():
    corpus = make_eval_corpus(generate_corpus(2, seed=1), SimulationPlan.full(rename_fields=False))
    assert not any(c.labels["field_name_obfuscated"] for c in corpus)


def test_manifest_round_trip(tmp_path):
    corpus = make_eval_corpus(generate_corpus(3, seed=4), FULL)
    path = write_manifest(corpus, tmp_path)
    entries = json.loads(path.read_text())
    assert set(entries[0]) == {"model_path", "labels"}
    assert load_app((tmp_path / entries[1]["model_path"]).read_bytes()) == corpus[1].model
    back = read_manifest(path)
    assert [(b.model, dict(b.labels)) for b in back] == [(c.model, dict(c.labels)) for c in corpus]


# -- scoring

@pytest.mark.parametrize(
    "counts,expected",
    [((98, 100, 0, 2), 0.980), ((100, 92, 8, 0), 0.923), ((100, 100, 0, 0), 1.000), ((100, 88, 12, 0), 0.886)],
)
def test_mcc_values(counts, expected):
    assert mcc(ConfusionCounts(*counts)) == pytest.approx(expected, abs=0.0005)


def test_mcc_zero_denominator():
    assert mcc(ConfusionCounts(0, 200, 0, 0)) == 0.0
    assert mcc(ConfusionCounts(0, 0, 0, 0)) == 0.0


counts = st.builds(ConfusionCounts, *(st.integers(0, 300) for _ in range(4)))


@given(counts)
def test_mcc_symmetry(c):
    # relabelling positives as negatives (predictions unchanged) negates MCC
    flipped = ConfusionCounts(tp=c.fn, tn=c.fp, fp=c.tn, fn=c.tp)
    assert mcc(flipped) == pytest.approx(-mcc(c), abs=1e-12)
    assert -1.0 - 1e-12 <= mcc(c) <= 1.0 + 1e-12


@pytest.mark.filterwarnings("ignore::UserWarning")
@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=60))
def test_mcc_agrees_with_reference(pairs):
    sklearn_metrics = pytest.importorskip("sklearn.metrics")
    truth = [t for t, _ in pairs]
    pred = [p for _, p in pairs]
    labels = {str(i): {"f": t} for i, t in enumerate(truth)}
    preds = {str(i): {"f": p} for i, p in enumerate(pred)}
    got = score(preds, labels)["f"].mcc
    assert got == pytest.approx(sklearn_metrics.matthews_corrcoef(truth, pred), abs=1e-9)


def test_score_counts_and_shape_errors():
    labels = {"a": {"f": True}, "b": {"f": False}, "c": {"f": True}, "d": {"f": False}}
    preds = {"a": {"f": True}, "b": {"f": True}, "c": {"f": False}, "d": {"f": False}}
    assert score(preds, labels)["f"].counts == ConfusionCounts(1, 1, 1, 1)
    with pytest.raises(ShapeMismatch):
        score({"a": {"f": True}}, labels)
    with pytest.raises(ShapeMismatch):
        score({k: {} for k in labels}, labels)


def test_metrics_csv_layout():
    scores = score({"a": {"class_name_obfuscated": True}}, {"a": {"class_name_obfuscated": True}})
    assert metrics_csv(scores).splitlines() == ["Feature,TP,TN,FP,FN,MCC", "Class name obfuscation,1,0,0,0,0.000"]


def test_all_features_off_reports_zero_mcc():
    corpus = make_eval_corpus(generate_corpus(4, seed=9), SimulationPlan())
    scores = evaluate(corpus)
    assert all(s.mcc == 0.0 for s in scores.values())
    assert list(scores) == list(EVAL_FEATURES)
