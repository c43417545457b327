from __future__ import annotations

import numpy as np
import pytest

from copulasim.simharness import (
    GROUP_SIZES,
    OperatingCharacteristic,
    Scenario,
    ScenarioError,
    find_scenario,
    mc_se,
    replicate_seed,
    run_scenario,
    scenario_presets,
    select_rows,
    simulate_replicate,
    with_overrides,
)

PRESETS = scenario_presets()


def test_preset_sizes():
    sizes = {k: len(v) for k, v in PRESETS.items()}
    assert sizes == {"table1": 60, "table2": 60, "table3": 90, "power-binary": 90,
                     "power-continuous": 90, "power-mixed": 90, "binary": 150}


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_every_preset_reproduces_declared_distances(name):
    for s in PRESETS[name]:
        got = s.recomputed_distances()
        assert np.max(np.abs(np.subtract(got, s.d))) <= 5e-3, s.name
        assert s.n_g in GROUP_SIZES


def test_type1_cells_carry_references():
    for name in ("table1", "table2", "table3"):
        assert all(s.reference is not None and s.purpose == "type1" for s in PRESETS[name])
    s = find_scenario("power-binary", epsilon=0.2, d=(0.0, 0.0), n_g=50, rho=0.2)
    assert s.reference == 0.919


def test_inconsistent_scenario_rejected():
    with pytest.raises(ScenarioError):
        Scenario("bad", "bin-bin", ((-1, 2), (-3, 3)), ((-1, 2), (-3, 3)), (0.2, 0.0), 0.2, 0.2, 7)
    with pytest.raises(ValueError):
        Scenario("bad", "bin-bin", ((-1, 2), (-3, 3)), ((-1, 2), (-3, 3)), (0.0, 0.0), 0.2, 0.2, 7,
                 sigma2=0.1)
    with pytest.raises(ValueError):
        Scenario("bad", "cont-cont", ((0, 1), (0, 1)), ((0, 1), (0, 1)), (0.0, 0.0), 0.2, 0.2, 7,
                 sigma2=0.1)


def test_replicate_seeds_distinct_and_stable():
    seeds = [replicate_seed(1, r) for r in range(200)]
    assert len(set(seeds)) == 200
    assert seeds[3] == replicate_seed(1, 3) != replicate_seed(2, 3)


def test_simulated_replicates_reproducible():
    s = find_scenario("table1", n_g=7)
    a, b = simulate_replicate(s, 5), simulate_replicate(s, 5)
    assert np.array_equal(a[0].y1, b[0].y1) and np.array_equal(a[1].y2, b[1].y2)
    assert len(a[0]) == 7 * len(s.doses)


def test_select_rows():
    rows = list(range(10))
    assert select_rows(rows, "1,4-6") == [0, 3, 4, 5]
    assert select_rows(rows, None) == rows
    with pytest.raises(ValueError):
        select_rows(rows, "11")


def test_operating_characteristic_within():
    oc = OperatingCharacteristic("x", 0.05, mc_se(0.05, 200), 200, 10, 0, 0.06)
    assert oc.within()
    assert not OperatingCharacteristic("x", 0.2, mc_se(0.2, 200), 200, 40, 0, 0.05).within()
    assert OperatingCharacteristic("x", 0.2, 0.03, 200, 40, 0, None).within() is None


def test_run_scenario_resume_matches_fresh():
    s = with_overrides(find_scenario("table2", n_g=7), n_replicates=3, n_boot=20)
    seen = []
    fresh = run_scenario(s, on_replicate=lambda r, d: seen.append((r, d)))
    assert [r for r, _ in seen] == [0, 1, 2]
    resumed = run_scenario(s, done=dict(seen[:2]))
    assert (resumed.rate, resumed.n_rejected) == (fresh.rate, fresh.n_rejected)
    assert fresh.n_replicates + fresh.n_failed == 3


def test_threads_do_not_change_rates():
    s = with_overrides(find_scenario("table3", n_g=7), n_replicates=3, n_boot=20)
    one = run_scenario(s, threads=1)
    two = run_scenario(s, threads=3)
    assert (one.rate, one.n_failed) == (two.rate, two.n_failed)


@pytest.mark.slow
def test_rejection_rate_falls_along_distance_ladder():
    """Common seeds: rejection rate is nonincreasing as the true distance grows from 0 to eps."""
    ladder = [find_scenario("power-binary", epsilon=0.2, d=d, n_g=50, rho=0.2)
              for d in ((0.0, 0.0), (0.05, 0.05), (0.1, 0.1))]
    ladder.append(find_scenario("table1", epsilon=0.2, d=(0.2, 0.2), n_g=50, rho=0.2))
    rates = [run_scenario(s).rate for s in ladder]
    print("rates along the ladder:", rates)
    assert all(a >= b for a, b in zip(rates, rates[1:]))
