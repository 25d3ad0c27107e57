import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from leakrepump.atomic import (
    BRACKET_MANIFOLD,
    D_MANIFOLD,
    QUBIT_0,
    QUBIT_1,
    LEAK_MINUS,
    LEAK_PLUS,
    AtomicConstants,
    Sublevel,
    SublevelDistribution,
    TransitionGeometry,
    bracket_decay_distribution,
    geometric_factor,
    load_branching_table,
    selection_table,
)
from leakrepump.errors import DomainError

ORTHOGONAL = TransitionGeometry(math.pi / 2, math.pi / 2)
angles = st.floats(-20, 20, allow_nan=False)


def test_orthogonal_geometry_only_drives_delta_m_2():
    assert geometric_factor(2, ORTHOGONAL) == pytest.approx(1 / math.sqrt(6), abs=1e-12)
    assert geometric_factor(-2, ORTHOGONAL) == pytest.approx(1 / math.sqrt(6), abs=1e-12)
    assert geometric_factor(0, ORTHOGONAL) == pytest.approx(0, abs=1e-12)
    assert geometric_factor(1, ORTHOGONAL) == pytest.approx(0, abs=1e-12)


def test_delta_m_0_maximum():
    assert geometric_factor(0, TransitionGeometry(0, math.pi / 4)) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("dm", [3, -3, 7])
def test_bad_delta_m(dm):
    with pytest.raises(DomainError):
        geometric_factor(dm, ORTHOGONAL)


def test_non_finite_angles_rejected():
    with pytest.raises(DomainError):
        TransitionGeometry(float("nan"), 0.0)


def test_selection_table_orthogonal():
    rows = selection_table(ORTHOGONAL, 1e-9)
    assert [dm for dm, _ in rows] == [2, -2]
    assert all(g == pytest.approx(1 / math.sqrt(6)) for _, g in rows)
    assert selection_table(ORTHOGONAL, 1.0) == []


def test_selection_table_one_degree_misalignment():
    # reference values evaluated at 30 digits
    geom = TransitionGeometry(math.pi / 2 - 0.0175, math.pi / 2)
    rows = dict(selection_table(geom, 1e-9))
    assert set(rows) == {2, -2, 1, -1}
    assert rows[1] == pytest.approx(0.00714398042942112317, rel=1e-12)
    assert rows[2] == pytest.approx(0.40818577903975380246, rel=1e-12)
    strengths = [g for _, g in selection_table(geom, 0)]
    assert strengths == sorted(strengths, reverse=True)


def test_selection_table_negative_threshold():
    with pytest.raises(DomainError):
        selection_table(ORTHOGONAL, -1)


def test_bounds_on_grid():
    th, ph = np.meshgrid(np.linspace(0, 2 * np.pi, 100), np.linspace(0, 2 * np.pi, 100))
    for t, p in zip(th.ravel(), ph.ravel()):
        g = TransitionGeometry(t, p)
        assert 0 <= geometric_factor(0, g) <= 0.5
        assert 0 <= geometric_factor(1, g) <= 1 / math.sqrt(6) + 1e-15
        assert 0 <= geometric_factor(2, g) <= 1 / math.sqrt(6) + 1e-15


@given(angles, angles, st.sampled_from([0, 1, 2]))
def test_periodicity(theta, phi, dm):
    g = geometric_factor(dm, TransitionGeometry(theta, phi))
    assert geometric_factor(dm, TransitionGeometry(theta + 2 * math.pi, phi)) == pytest.approx(g, abs=1e-12)
    assert geometric_factor(dm, TransitionGeometry(theta, phi + 2 * math.pi)) == pytest.approx(g, abs=1e-12)


@given(angles, angles, st.sampled_from([1, 2]))
def test_sign_symmetry(theta, phi, dm):
    geom = TransitionGeometry(theta, phi)
    assert geometric_factor(dm, geom) == geometric_factor(-dm, geom)


def test_constants_defaults():
    c = AtomicConstants()
    assert c.delta_hf == pytest.approx(2 * math.pi * 860e6)
    assert c.gamma_D == pytest.approx(1 / 52.7e-3)
    assert c.branch_to_S + c.branch_to_D == 1.0
    assert c.branch_to_D == pytest.approx(0.018)


@pytest.mark.parametrize("kwargs", [{"delta_hf": 0}, {"gamma_D": -1}, {"branch_to_S": 1.5},
                                    {"bracket_lifetime": float("inf")},
                                    {"branch_to_S": 0.9, "branch_to_D": 0.2}])
def test_constants_validation(kwargs):
    with pytest.raises(DomainError):
        AtomicConstants(**kwargs)


def test_m0_source_sends_one_third_to_qubit():
    c = AtomicConstants()
    dist = bracket_decay_distribution(0, c)
    on_s = dist.mass(lambda lv: lv.manifold == "S1/2")
    qubit = dist[QUBIT_0] + dist[QUBIT_1]
    assert on_s == pytest.approx(c.branch_to_S, abs=1e-15)
    assert qubit / on_s == pytest.approx(1 / 3, abs=1e-15)
    assert dist[LEAK_MINUS] == dist[LEAK_PLUS]


@pytest.mark.parametrize("m", [-1, 0, 1])
def test_decay_distributions_normalized(m):
    dist = bracket_decay_distribution(Sublevel(BRACKET_MANIFOLD, 1, m))
    assert math.fsum(dist.weights.values()) == pytest.approx(1, abs=1e-12)
    assert dist.mass(lambda lv: lv.manifold == D_MANIFOLD) == pytest.approx(0.018, abs=1e-15)


def test_stretched_sources_keep_their_m():
    assert bracket_decay_distribution(-1)[LEAK_MINUS] == pytest.approx(0.982 / 3)
    assert bracket_decay_distribution(-1)[LEAK_PLUS] == 0
    assert bracket_decay_distribution(1)[LEAK_PLUS] == pytest.approx(0.982 / 3)


def test_unknown_source():
    with pytest.raises(DomainError):
        bracket_decay_distribution(Sublevel(BRACKET_MANIFOLD, 1, 2))


def test_distribution_validation():
    with pytest.raises(DomainError):
        SublevelDistribution({QUBIT_0: 0.5})
    with pytest.raises(DomainError):
        SublevelDistribution({QUBIT_0: 1.5, QUBIT_1: -0.5})


def test_custom_branching_table(tmp_path):
    table = {
        "3[3/2]1/2 F=1 m=-1": {"S1/2 F=0 m=0": 0.5, "S1/2 F=1 m=0": 0.5},
        "3[3/2]1/2 F=1 m=0": {"S1/2 F=0 m=0": "1/2", "S1/2 F=1 m=0": "1/2"},
        "3[3/2]1/2 F=1 m=1": {"S1/2 F=0 m=0": 1},
    }
    path = tmp_path / "table.json"
    path.write_text(json.dumps(table))
    loaded = load_branching_table(path)
    dist = bracket_decay_distribution(1, AtomicConstants(branch_to_S=1.0), loaded)
    assert dist[QUBIT_0] == 1.0


@pytest.mark.parametrize("table", [
    {"3[3/2]1/2 F=1 m=0": {"S1/2 F=0 m=0": 0.6}},
    {"S1/2 F=1 m=0": {"S1/2 F=0 m=0": 1}},
    {"3[3/2]1/2 F=1 m=0": {"D3/2 F=2 m=0": 1}},
    {"nonsense": {}},
])
def test_bad_branching_tables(tmp_path, table):
    path = tmp_path / "table.json"
    path.write_text(json.dumps(table))
    with pytest.raises(DomainError):
        load_branching_table(path)
