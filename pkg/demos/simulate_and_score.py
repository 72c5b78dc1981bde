"""Build a synthetic corpus, obfuscate a copy of every app, and score the detector."""

import sys

from dexobf.simulate import SimulationPlan, evaluate, make_eval_corpus, metrics_csv, simulate
from dexobf.synthetic import generate_corpus

apps = generate_corpus(100, seed=2024)

sample, _ = simulate(apps[0], SimulationPlan.full())
print("one app before and after renaming:")
for before, after in list(zip(apps[0].classes, sample.classes))[:5]:
    print(f"  {before.qualified_name} -> {after.qualified_name}")

scores = evaluate(make_eval_corpus(apps, SimulationPlan.full()))
sys.stdout.write(metrics_csv(scores))
