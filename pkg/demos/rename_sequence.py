"""Print the start of the rename sequence and score a few package scopes against it."""

from dexobf.names import RenameAlphabet, match_scope, nth_name

alpha = RenameAlphabet.mixed_case()
print("first 60 names:", " ".join(nth_name(alpha, i) for i in range(60)))

for scope in ({"a", "b", "c"}, {"a", "b", "Matrix", "Helper"}, {"Matrix", "Helper", "Adapter"}):
    print(f"{sorted(scope)}: overlap {match_scope(scope, alpha):.2f}")
