"""Reproduce the five-vehicle platoon energy comparison and write it to Excel."""

from src.helpers.energy import compare_models
from src.helpers.report import format_table, write_table_to_excel
from src.helpers.scenario import TABLE1_ASSUMPTION, table1
from src.helpers.stability import scenario_stability

scenario = table1()
print(f"Running {scenario.name}: {scenario.n_followers} followers, dt={scenario.dt}, tf={scenario.tf}")
print(f"Assumption: {TABLE1_ASSUMPTION}")

comparison = compare_models(scenario, n_jobs=2)
frame = comparison.to_frame()
print(format_table(frame))

stability = scenario_stability(scenario, comparison.trajectories["proposed"])
ratios = ", ".join(f"{r:.3f}" for r in stability.attenuation_ratios)
print(f"Attenuation ratios after t={stability.t_star:g}: {ratios}")
print(f"String stable: {stability.string_stable}")

output = write_table_to_excel(
    frame,
    "output/table1/comparison.xlsx",
    title="Energy comparison: table1",
    info={"eta": comparison.eta, "baseline": comparison.baseline},
    highlight="pct_change",
)
print(f"Saved to: {output}")
