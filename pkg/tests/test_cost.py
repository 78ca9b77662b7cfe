import random

import pytest
from hypothesis import given, strategies as st

from mfawb.cost import (OP_KINDS, Affine, CostError, CostParseError, MissingParameter, MissingUnitCost,
                        UnitCostTable, cost_report, estimate_time, load_profiles, load_units, measure_primitives,
                        parse_cost, parse_profile_row, parse_units, render_cost_markdown, render_profiles)

# (constant counts, z coefficients, bits, estimated-bits flag, passes, xor-ignored flag)
EXPECTED = {
    "P1woFS": ({"T_h": 326, "T_aed": 1}, {}, 3992, False, 2, False),
    "P1FS": ({"T_h": 328, "T_ecc": 4, "T_aed": 1}, {}, 4748, False, 3, True),
    "P2": ({"T_h": 18, "T_x": 14, "T_fe": 2, "T_ecc": 2}, {}, 1024, False, 1, False),
    "P3": ({"T_me": 4, "T_m": 3, "T_a": 0, "T_h": 26}, {"T_m": 2, "T_a": 2, "T_h": 2}, 2720, False, 4, False),
    "P4": ({"T_h": 26, "T_ed": 2}, {}, 2000, False, 3, False),
    "P5": ({"T_h": 17}, {}, 1312, True, 3, True),
    "P6": ({"T_h": 15, "T_fe": 1, "T_ed": 3}, {}, 2144, False, 2, False),
    "P7": ({"T_h": 4, "T_p": 2}, {}, 640, False, 1, False),
    "P8": ({"T_h": 5, "T_ecc": 2, "T_ed": 8}, {}, 1600, False, 3, False),
    "P9": ({"T_me": 1, "T_h": 7}, {}, 448, True, 1, False),
    "P10": ({"T_h": 10, "T_x": 10, "T_fe": 1}, {}, 896, False, 2, False),
}


@pytest.fixture(scope="module")
def profiles():
    return load_profiles()


def test_profiles_match_frozen_values(profiles):
    assert list(profiles) == list(EXPECTED)
    for pid, (const, zc, bits, est, passes, xor_ignored) in EXPECTED.items():
        p = profiles[pid]
        assert {op: c.const for op, c in p.counts.items()} == const
        assert {op: c.z_coef for op, c in p.counts.items() if c.z_coef} == zc
        assert p.bits == bits and p.passes == passes
        d = p.to_dict()
        assert d["estimated_bits"] == est
        assert d["xor_ignored"] == xor_ignored


def test_fixture_round_trips_exactly(profiles):
    from importlib import resources
    text = resources.files("mfawb").joinpath("data/cost_profiles.txt").read_text()
    rows = [l.strip() for l in text.splitlines() if l.strip() and not l.startswith("#")]
    assert render_profiles(profiles).splitlines() == rows


def test_affine_counts(profiles):
    p3 = profiles["P3"]
    assert p3.needs_z
    assert p3.count_vector(5) == {"T_me": 4, "T_m": 13, "T_a": 10, "T_h": 36}
    with pytest.raises(MissingParameter):
        p3.count_vector()


def test_parse_cost_variants():
    ops, flag = parse_cost("(2z + 3)T_m + (2z)T_a + 7T_h#")
    assert flag == "#"
    assert [o.render() for o in ops] == ["(2z + 3)T_m", "(2z)T_a", "7T_h"]


@pytest.mark.parametrize("row", [
    "P1 | 3T_q | 10 | 1 | - | -",
    "P1 | 3 T_h | 10 | 1 | - | -",
    "P1 | 3T_h | ten | 1 | - | -",
    "P1 | 3T_h | 10 | 1 | fast | -",
    "P1 | 3T_h | 10 | 1 | -",
    "P1 | 03T_h | 10 | 1 | - | -",
])
def test_malformed_rows_rejected(row):
    with pytest.raises(CostParseError):
        parse_profile_row(row)


def test_negative_counts_rejected():
    with pytest.raises(CostError):
        Affine(-1)


def _random_units(rng: random.Random) -> UnitCostTable:
    return UnitCostTable({op: rng.uniform(0.0, 5000.0) for op in OP_KINDS})


def test_estimate_linearity_over_random_unit_tables(profiles):
    rng = random.Random(8)
    for _ in range(100):
        u, v = _random_units(rng), _random_units(rng)
        a, b = rng.uniform(0, 10), rng.uniform(0, 10)
        combo = UnitCostTable({op: a * u.costs[op] + b * v.costs[op] for op in OP_KINDS})
        z = rng.randrange(0, 50)
        for p in profiles.values():
            lhs = estimate_time(p, combo, z)
            rhs = a * estimate_time(p, u, z) + b * estimate_time(p, v, z)
            assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


@given(st.dictionaries(st.sampled_from(OP_KINDS), st.floats(0, 1e4), min_size=len(OP_KINDS)),
       st.floats(0, 100))
def test_estimate_scales_with_units(costs, k):
    p = load_profiles()["P8"]
    u = UnitCostTable(costs)
    assert estimate_time(p, u.scaled(k)) == pytest.approx(k * estimate_time(p, u), rel=1e-9, abs=1e-9)


def test_estimate_is_count_dot_units(profiles):
    units = load_units()
    expect = (326 * 2.0 + 1 * 12.0) / 1000
    assert estimate_time(profiles["P1woFS"], units) == pytest.approx(expect)


def test_missing_unit_cost(profiles):
    with pytest.raises(MissingUnitCost):
        estimate_time(profiles["P2"], UnitCostTable({"T_h": 1.0}))


def test_units_parsing():
    u = parse_units("T_h = 1.5  # hash\n\nT_x=0.25\n")
    assert u.costs == {"T_h": 1.5, "T_x": 0.25}
    assert parse_units(u.render()).costs == u.costs
    with pytest.raises(CostParseError, match=":1:"):
        parse_units("T_h 1.5")
    with pytest.raises(CostParseError):
        parse_units("T_h = fast")
    with pytest.raises(CostError):
        parse_units("T_zz = 1")


def test_cost_report_without_z(profiles):
    rows = cost_report(profiles, load_units())
    p3 = next(r for r in rows if r.profile.protocol == "P3")
    assert p3.estimate_ms is None and p3.note == "needs --z"
    md = render_cost_markdown(rows)
    assert "| P3 |" in md and "needs --z" in md


def test_measure_primitives_requires_enough_trials():
    with pytest.raises(CostError):
        measure_primitives(trials=10)


def test_measure_primitives_covers_every_kind():
    units = measure_primitives(trials=100, sample_ns=20_000)
    assert set(units.costs) == set(OP_KINDS)
    assert all(v > 0 for v in units.costs.values())
