# Walkthrough: exact and near duplicate removal on a toy question set.
#
# Run with:  python3 demos/dedup_walkthrough.py

from platy import (
    QuestionRecord,
    exact_duplicates,
    near_duplicates,
    resolve_duplicates,
)

records = [
    QuestionRecord.create(
        instruction="How many edges does a complete graph with 10 vertices have?",
        output="A complete graph with n vertices has n*(n-1)/2 edges, so 45.",
        source="graphs",
    ),
    # word-for-word duplicate up to case/whitespace, with a terser answer
    QuestionRecord.create(
        instruction="How many edges does a COMPLETE graph with 10   vertices have?",
        output="45",
        source="graphs",
    ),
    # near duplicate: one word changed
    QuestionRecord.create(
        instruction="How many edges does a complete graph with 12 vertices have?",
        output="n*(n-1)/2 with n=12 gives 66 edges; here is the full derivation...",
        source="graphs",
    ),
    QuestionRecord.create(
        instruction="Name the capital of France.",
        output="Paris",
        source="trivia",
    ),
]

print(f"{len(records)} records in\n")

groups = exact_duplicates(records)
print(f"exact duplicate groups: {len(groups)}")
for group in groups:
    for rec in group:
        print(f"  {rec.id}  {rec.instruction[:60]!r}")

pairs = near_duplicates(records, threshold=0.80)
print(f"\nnear-duplicate pairs above 0.80 cosine: {len(pairs)}")
for pair in pairs:
    print(f"  {pair.id_a} ~ {pair.id_b}  score={pair.score:.4f}")

# Within each connected component of the duplicate graph, the record with
# the most verbose answer survives (longer answers tend to carry worked
# solutions); ties break on the smaller id.
result = resolve_duplicates(records, groups, pairs)
print(f"\nsurvivors: {len(result.survivors)}, removed: {len(result.removed)}")
for entry in result.log:
    print(f"  removed {entry.removed_id} ({entry.reason}) -> kept {entry.survivor_id}")

print("\nsurviving outputs:")
for rec in result.survivors:
    print(f"  {rec.id}  {rec.output[:60]!r}")
