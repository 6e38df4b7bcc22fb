# Walkthrough: leaderboard averages and base-vs-merged delta tables.
#
# Run with:  python3 demos/delta_reporting.py

from platy import EvalScores, averages_table, delta_table, render
from platy.report import change_in_percent, percent_change

SUITE = ["arc_challenge", "hellaswag", "mmlu", "truthfulqa_mc"]

base = EvalScores("broad-13b", {
    "arc_challenge": 62.03, "hellaswag": 82.27, "mmlu": 57.71, "truthfulqa_mc": 49.61,
})
merged = EvalScores("merged-13b", {
    "arc_challenge": 62.71, "hellaswag": 82.29, "mmlu": 58.30, "truthfulqa_mc": 52.52,
})

print(render(averages_table([base, merged], SUITE)))

# Two delta metrics per cell: merged - base in points, and the relative
# change in percent.  Both are rounded half-up to two decimals at the edge;
# internal math is exact decimal arithmetic.
print(f"truthfulqa_mc: {change_in_percent(49.61, 52.52):+.2f} points, "
      f"{percent_change(49.61, 52.52):+.2f} percent")

table = delta_table(SUITE, [("merged-13b", base, merged)])
print()
print(render(table, "aligned-text"))
print(render(table, "markdown"))
print(render(table, "csv"))
