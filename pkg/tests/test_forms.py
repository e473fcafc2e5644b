"""Construction, validation, energy evaluation and the structural checks."""
import numpy as np
import pytest

import critform as cf
from critform.errors import (
    DisconnectedDirichletSpec,
    DomainMismatch,
    FormNotNonnegative,
    NonPositiveMeasure,
    NonSymmetricWeights,
    ParseError,
)

from conftest import active_vector, form_spec


def test_vertices_are_sorted_and_indexed(triangle):
    assert triangle.vertices == ("a", "b", "c")
    assert triangle.index("b") == 1
    with pytest.raises(DomainMismatch):
        triangle.index("zz")


def test_energy_closed_form(two_path):
    # q(f) = (f(a) - f(b))^2
    f = np.array([3.0, 1.0])
    assert cf.evaluate(two_path, f) == pytest.approx(4.0)
    assert cf.evaluate(two_path, [1.0, 1.0]) == pytest.approx(0.0, abs=1e-15)


def test_energy_with_potential_and_measure(triangle):
    f = {"a": 1.0, "b": -2.0, "c": 0.5}
    fv = np.array([1.0, -2.0, 0.5])
    by_hand = (
        1.0 * (1.0 - (-2.0)) ** 2
        + 2.0 * (-2.0 - 0.5) ** 2
        + 0.5 * (1.0 - 0.5) ** 2
        + 0.3 * 1.0**2 * 1.0
        + 0.0
        + 1.1 * 0.5**2 * 0.5
    )
    assert cf.evaluate(triangle, f) == pytest.approx(by_hand, rel=1e-14)
    # bilinear polarization
    g = np.array([0.2, 0.0, -1.0])
    pol = 0.25 * (cf.evaluate(triangle, fv + g) - cf.evaluate(triangle, fv - g))
    assert cf.evaluate_bilinear(triangle, fv, g) == pytest.approx(pol, rel=1e-12)


def test_operator_matches_bilinear_form(triangle):
    rng = np.random.default_rng(7)
    for _ in range(10):
        f = rng.standard_normal(3)
        g = rng.standard_normal(3)
        lhs = cf.evaluate_bilinear(triangle, f, g)
        rhs = float(np.sum(cf.operator_apply(triangle, f) * g * triangle.measure))
        assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_dirichlet_vertices_are_frozen(pinned_path):
    assert pinned_path.dirichlet == frozenset({"0"})
    assert pinned_path.n_active == 3
    with pytest.raises(DomainMismatch):
        cf.evaluate(pinned_path, [1.0, 0.0, 0.0, 0.0])  # nonzero on the boundary


def test_duplicate_edges_must_agree():
    cf.build_form({"vertices": ["a", "b"], "edges": [["a", "b", 2.0], ["b", "a", 2.0]]})
    with pytest.raises(NonSymmetricWeights):
        cf.build_form({"vertices": ["a", "b"], "edges": [["a", "b", 2.0], ["b", "a", 3.0]]})


@pytest.mark.parametrize("bad_edge", [["a", "a", 1.0], ["a", "b", -0.5]])
def test_rejected_edges(bad_edge):
    with pytest.raises(NonSymmetricWeights):
        cf.build_form({"vertices": ["a", "b"], "edges": [bad_edge]})


def test_zero_weight_edges_are_dropped():
    form = cf.build_form({"vertices": ["a", "b"], "edges": [["a", "b", 0.0]]})
    assert form.n_edges == 0
    assert len(cf.irreducible_components(form)) == 2


def test_bad_measures_and_potentials():
    with pytest.raises(NonPositiveMeasure):
        cf.build_form({"vertices": ["a"], "edges": [], "mu": {"a": 0.0}})
    with pytest.raises(NonPositiveMeasure):
        cf.build_form({"vertices": ["a"], "edges": [], "mu": {"a": -1.0}})
    with pytest.raises(ParseError):
        cf.build_form({"vertices": ["a"], "edges": [], "potential": {"a": float("nan")}})
    with pytest.raises(ParseError):
        cf.build_form({"vertices": ["a"], "edges": [], "mu": {"zz": 1.0}})


def test_unknown_spec_keys_rejected():
    with pytest.raises(ParseError):
        cf.build_form({"vertices": ["a"], "edges": [], "weights": {}})


def test_unknown_dirichlet_vertex():
    with pytest.raises(DisconnectedDirichletSpec):
        cf.build_form({"vertices": ["a"], "edges": [], "dirichlet": ["b"]})


def test_indefinite_potential_rejected():
    # c = -10 overwhelms the edge part on a 2-vertex graph
    with pytest.raises(FormNotNonnegative):
        cf.build_form({
            "vertices": ["a", "b"],
            "edges": [["a", "b", 1.0]],
            "potential": {"a": -10.0, "b": 0.0},
        })


def test_signed_but_nonnegative_potential_accepted():
    # ground-state design: h = (1, 2) is annihilated, so the form is >= 0
    # even though c(b) < 0
    form = cf.build_form({
        "vertices": ["a", "b"],
        "edges": [["a", "b", 1.0]],
        "potential": {"a": 1.0, "b": -0.25},
        "mu": {"a": 1.0, "b": 2.0},
    })
    assert cf.evaluate(form, [1.0, 2.0]) == pytest.approx(0.0, abs=1e-12)


def test_first_bd_sweep_nonpositive():
    rng = np.random.default_rng(0)
    for k in range(5):
        form = cf.random_connected_form(12, seed=k, signed_potential=bool(k % 2))
        assert cf.check_first_bd(form, n_samples=50, seed=k) <= 1e-10


def test_lattice_inequality_gap_nonnegative(triangle):
    rng = np.random.default_rng(3)
    for _ in range(50):
        f = rng.standard_normal(3)
        g = rng.standard_normal(3)
        assert cf.check_lattice_inequality(triangle, f, g) >= -1e-10


def test_invariant_set_detection():
    # two components: {a, b} and {c}
    form = cf.build_form({
        "vertices": ["a", "b", "c"],
        "edges": [["a", "b", 1.0]],
    })
    rep = cf.is_invariant_set(form, ["a", "b"])
    assert rep.invariant and rep.crossing_edges == ()
    assert rep.corroboration_gap <= 1e-10

    rep2 = cf.is_invariant_set(form, ["a"])  # cuts the a-b edge
    assert not rep2.invariant
    assert ("a", "b") in rep2.crossing_edges
    # the constructed witness realizes a strict energy increase
    assert rep2.witness_gap > 0


def test_invariant_set_unknown_vertex(triangle):
    with pytest.raises(DomainMismatch):
        cf.is_invariant_set(triangle, ["nope"])


def test_irreducible_components_split():
    form = cf.build_form({
        "vertices": ["a", "b", "c", "d"],
        "edges": [["a", "b", 1.0], ["c", "d", 1.0]],
    })
    comps = cf.irreducible_components(form)
    assert comps == [("a", "b"), ("c", "d")]
    assert not cf.forms.is_irreducible(form)


def test_vertex_function_round_trip(triangle):
    vf = cf.VertexFunction(triangle.vertices, np.array([1.0, 2.0, 3.0]))
    assert cf.forms.as_function(triangle, vf)[1] == 2.0
    assert vf.as_mapping()["c"] == 3.0
    with pytest.raises(DomainMismatch):
        cf.forms.as_function(triangle, np.ones(5))
    with pytest.raises(DomainMismatch):
        cf.VertexFunction.from_mapping(triangle, {"zz": 1.0})


def test_form_spec_round_trip(triangle):
    rebuilt = cf.build_form(form_spec(triangle))
    rng = np.random.default_rng(11)
    f = rng.standard_normal(3)
    assert cf.evaluate(rebuilt, f) == pytest.approx(cf.evaluate(triangle, f), rel=1e-15)


def test_cache_is_per_instance():
    a = cf.path_form(4)
    b = cf.path_form(4)
    _ = a.form_matrix
    assert "form_matrix" not in b._cache
    f = active_vector(b, np.random.default_rng(1))
    assert cf.evaluate(b, f) >= 0
