"""Expected cost of the three smoothers before the click, with crossover times."""

from qsmooth.scenarios import ScenarioConfig, run_scenario

curves, summary = run_scenario(ScenarioConfig(preset="cost-comparison"))
for metric, value in summary.rows:
    print(f"{metric:>32}: {value}")
print("last rows (t, classical, homodyne, adaptive, ordered):")
for row in curves.rows[-300::50]:
    print("  ", row)
