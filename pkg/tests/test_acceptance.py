"""End-to-end checks on the two-source band scenario."""

from pathlib import Path

import pytest

from aebss import load_ica_config, load_scenario, run_pipeline
from locator import build_prototypes, grnn_locate
from synth_lab import synthesize
from tdoa import delay_from_ccf, max_admissible_delay_samples

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
REFERENCE = str(SCENARIOS / "paper-scenario.json")
TOLERANCE_M = 0.072


def ccf_location(scenario):
    g = scenario.geometry
    syn = synthesize(scenario)
    estimate = delay_from_ccf(syn.record, max_admissible_delay_samples(g))
    return grnn_locate(estimate.delay_seconds, build_prototypes(g, scenario.prototype_spacing_m)).coordinate_m


@pytest.mark.parametrize("active, expected", [(0, 0.1), (1, 0.8)])
def test_ccf_single_source(active, expected):
    scenario = load_scenario(REFERENCE)
    sources = [s.model_copy(update={"active": k == active}) for k, s in enumerate(scenario.sources)]
    assert abs(ccf_location(scenario.model_copy(update={"sources": sources})) - expected) < 0.1


def test_ccf_sees_only_the_stronger_source():
    coordinate = ccf_location(load_scenario(REFERENCE))
    assert abs(coordinate - 0.1) < 0.1
    assert abs(coordinate - 0.8) > 0.3


@pytest.mark.slow
def test_ica_locates_both_sources_over_seeds():
    hits = 0
    for seed in range(1, 6):
        scenario = load_scenario(REFERENCE, seed)
        report = run_pipeline(scenario, load_ica_config(None, seed, fallback=scenario.ica))
        delays = sorted(e["delay_samples"] for e in report["methods"]["ica"])
        located = all(e["error_mm"] <= TOLERANCE_M * 1000 for e in report["methods"]["ica"])
        if located and abs(delays[0] + 320) <= 2 and abs(delays[1] + 40) <= 2:
            hits += 1
    assert hits >= 4
