"""Photon-counting unravelling: filtered vs smoothed excited population before a click."""

from qsmooth.scenarios import ScenarioConfig, run_scenario

for preset in ("classical-z", "classical-purity", "classical-cost"):
    [ds] = run_scenario(ScenarioConfig(preset=preset))
    print(f"{preset}: columns {ds.columns}")
    for row in ds.rows[:: len(ds.rows) // 8] + [ds.rows[-1]]:
        print("  " + "  ".join(f"{v:+.5f}" for v in row))
