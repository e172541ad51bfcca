import json

import numpy as np
import pytest
from helpers import brute_force_max_tree, prufer_trees, tau_standard_error

from vinedep import rvine, select
from vinedep.bicop import SECOND_GIVEN_FIRST, CopulaSpec, cdf, density, hfunc, sample
from vinedep.dependence import kendall_tau
from vinedep.errors import DataError, EdgeFitError, VineDepError
from vinedep.marginals import ks_uniform_pvalue, pit_transform
from vinedep.rvine import (
    VineConfig,
    VineEdge,
    VineTree,
    extend_tree,
    fit_sequential,
    proximity_candidates,
    select_first_tree,
    structure_from_first_tree,
    vine_density,
    vine_from_json,
    vine_from_specs,
    vine_loglik,
    vine_simulate,
    vine_to_json,
)

CLAYTON = CopulaSpec("Clayton", 0, (2.0,))
GUMBEL = CopulaSpec("Gumbel", 0, (2.0,))
FRANK = CopulaSpec("Frank", 0, (3.0,))


def three_var_vine(top=CopulaSpec("Independence")):
    structure = structure_from_first_tree(3, [(0, 1), (1, 2)])
    return vine_from_specs(structure, [CLAYTON, GUMBEL, top], names=("a", "b", "c"))


def path_tree(d):
    edges = tuple(VineEdge(1, i, i + 1, (i, i + 1), frozenset()) for i in range(d - 1))
    return VineTree(1, tuple(range(d)), edges)


def test_prufer_enumeration_counts():
    assert [sum(1 for _ in prufer_trees(d)) for d in (2, 3, 4, 5)] == [1, 3, 16, 125]


def test_first_tree_drops_weakest_triangle_edge():
    taus = np.array([[1, 0.5, 0.3], [0.5, 1, 0.2], [0.3, 0.2, 1]])
    tree = select_first_tree(taus)
    assert sorted(e.conditioned for e in tree.edges) == [(0, 1), (0, 2)]


def test_planted_star_matches_bruteforce():
    taus = np.full((4, 4), 0.1)
    taus[2, :] = taus[:, 2] = 0.6
    np.fill_diagonal(taus, 1.0)
    tree = select_first_tree(taus)
    got = sorted(e.conditioned for e in tree.edges)
    assert got == [(0, 2), (1, 2), (2, 3)]
    assert got == brute_force_max_tree(taus - np.eye(4))[0]


def test_first_tree_uses_absolute_tau():
    taus = np.array([[1, -0.7, 0.1], [-0.7, 1, 0.3], [0.1, 0.3, 1]])
    tree = select_first_tree(taus)
    assert sorted(e.conditioned for e in tree.edges) == [(0, 1), (1, 2)]


def test_two_variables_single_edge():
    tree = select_first_tree(np.array([[1, 0.2], [0.2, 1]]))
    assert [e.conditioned for e in tree.edges] == [(0, 1)]


@pytest.mark.parametrize("d", [3, 4, 5])
def test_mst_equals_bruteforce_on_random_matrices(d):
    rng = np.random.default_rng(d)
    for _ in range(30):
        a = rng.uniform(-1, 1, (d, d))
        taus = (a + a.T) / 2
        np.fill_diagonal(taus, 1.0)
        tree = select_first_tree(taus)
        weight = sum(abs(taus[e.conditioned]) for e in tree.edges)
        _, best = brute_force_max_tree(taus - np.eye(d))
        assert weight == pytest.approx(best, abs=1e-12)


def test_proximity_three_variables():
    (e,) = proximity_candidates(path_tree(3))
    assert e.label() == "13|2"


def test_proximity_path_of_four():
    labels = sorted(e.label() for e in proximity_candidates(path_tree(4)))
    assert labels == ["13|2", "24|3"]


def test_proximity_star():
    edges = tuple(VineEdge(1, 0, j, (0, j), frozenset()) for j in (1, 2, 3))
    star = VineTree(1, (0, 1, 2, 3), edges)
    cands = proximity_candidates(star)
    assert {frozenset(e.conditioned) for e in cands} == {
        frozenset(p) for p in [(1, 2), (1, 3), (2, 3)]
    }
    assert all(e.conditioning == frozenset({0}) for e in cands)


def test_extend_tree_forced_for_three_variables():
    u = sample(CLAYTON, 200, seed=0)
    data = np.column_stack([u, np.random.default_rng(0).uniform(size=200)])
    cond = {(j, frozenset()): data[:, j] for j in range(3)}
    prev = path_tree(3)
    for e in prev.edges:
        rvine._push_h(e, CopulaSpec("Independence"), data[:, e.conditioned[0]], data[:, e.conditioned[1]], cond)
    tree = extend_tree(prev, cond)
    assert [e.label() for e in tree.edges] == ["13|2"]


def test_structure_validation_rejects_bad_trees():
    e = VineEdge(1, 0, 1, (0, 1), frozenset())
    with pytest.raises(VineDepError):
        VineTree(1, (0, 1, 2), (e, VineEdge(1, 0, 1, (0, 1), frozenset())))
    with pytest.raises(VineDepError):
        rvine.RVineStructure(3, (path_tree(3),))


def test_edge_labels():
    e = VineEdge(2, 0, 1, (0, 2), frozenset({1}))
    assert e.label() == "13|2"
    assert e.label(("x", "y", "z")) == "x,z|y"
    assert VineEdge(1, 0, 1, (0, 11), frozenset()).label() == "1,12"


def test_fit_recovers_known_vine():
    truth = three_var_vine()
    u = vine_simulate(truth, 5000, seed=1)
    fit = fit_sequential(u)
    first = sorted(e.conditioned for e in fit.structure.trees[0].edges)
    assert first == [(0, 1), (1, 2)]
    taus = [fit.edge_taus[e] for e in fit.structure.edges]
    assert np.allclose(taus, [0.5, 0.5, 0.0], atol=0.03)


def test_independent_columns_fit_near_zero():
    u = np.random.default_rng(2).uniform(size=(1000, 7))
    fit = fit_sequential(u)
    indep = sum(f.spec.family == "Independence" for f in fit.edge_fits.values())
    assert len(fit.edge_fits) == 21
    # each edge rejects with probability ~5% under the null
    assert indep >= 17
    assert abs(fit.total_loglik) < 20


def test_all_independence_vine():
    u = np.random.default_rng(3).uniform(size=(500, 7))
    fit = fit_sequential(u, VineConfig(truncate=0))
    assert all(f.spec.family == "Independence" for f in fit.edge_fits.values())
    assert fit.total_loglik == 0.0
    assert vine_loglik(fit, u) == 0.0
    assert vine_density(fit, np.full(7, 0.3)) == 1.0


def test_two_columns_equal_single_edge_fit():
    x = sample(FRANK, 1000, seed=4)
    fit = fit_sequential(x)
    (e,) = fit.structure.edges
    direct = select.select_family_aic(x[:, 0], x[:, 1], select.default_candidates(kendall_tau(x[:, 0], x[:, 1])))
    assert fit.edge_fits[e] == direct
    assert fit.total_loglik == pytest.approx(direct.loglik)


def test_density_matches_hand_composition():
    vine = three_var_vine(FRANK)
    rng = np.random.default_rng(5)
    for p in rng.uniform(0.05, 0.95, (20, 3)):
        u1, u2, u3 = p
        # F(1|2) = dC12(u1,u2)/du2 and F(3|2) = dC23(u2,u3)/du2, by central differences
        h = 1e-6
        f12 = (cdf(CLAYTON, u1, u2 + h) - cdf(CLAYTON, u1, u2 - h)) / (2 * h)
        f32 = (cdf(GUMBEL, u2 + h, u3) - cdf(GUMBEL, u2 - h, u3)) / (2 * h)
        expected = density(CLAYTON, u1, u2) * density(GUMBEL, u2, u3) * density(FRANK, f12, f32)
        assert vine_density(vine, p) == pytest.approx(expected, rel=1e-5)


def test_density_integrates_to_one():
    vine = three_var_vine(FRANK)
    x, w = np.polynomial.legendre.leggauss(32)
    x, w = 0.5 * (x + 1), 0.5 * w
    grid = np.array(np.meshgrid(x, x, x, indexing="ij")).reshape(3, -1).T
    weights = np.einsum("i,j,k->ijk", w, w, w).ravel()
    dens = np.exp(rvine.pointwise_loglik(vine.structure, vine.specs, grid))
    assert np.sum(weights * dens) == pytest.approx(1.0, abs=5e-3)


def test_density_rejects_points_outside():
    with pytest.raises(DataError):
        vine_density(three_var_vine(), [0.5, 1.0, 0.5])


def test_loglik_identity_on_training_data():
    u = vine_simulate(three_var_vine(FRANK), 2000, seed=6)
    fit = fit_sequential(u)
    assert vine_loglik(fit, u) == pytest.approx(fit.total_loglik, abs=1e-6)


def test_simulate_independence_vine():
    structure = structure_from_first_tree(3, [(0, 1), (0, 2)])
    vine = vine_from_specs(structure, [CopulaSpec("Independence")] * 3)
    u = vine_simulate(vine, 10_000, seed=7)
    for j in range(3):
        assert ks_uniform_pvalue(u[:, j]) > 0.01
    for i, j in [(0, 1), (0, 2), (1, 2)]:
        assert abs(kendall_tau(u[:, i], u[:, j])) < 0.02


def test_simulated_taus_within_three_se():
    vine = three_var_vine(FRANK)
    u = vine_simulate(vine, 10_000, seed=8)
    for e in vine.structure.trees[0].edges:
        i, j = e.conditioned
        se = tau_standard_error(vine.specs[e], u[:, i], u[:, j])
        assert abs(kendall_tau(u[:, i], u[:, j]) - vine.edge_taus[e]) < 3 * se
    # the conditional pair, through the true h-functions
    a = hfunc(CLAYTON, u[:, 0], u[:, 1])
    b = hfunc(GUMBEL, u[:, 2], u[:, 1], SECOND_GIVEN_FIRST)
    se = tau_standard_error(FRANK, a, b)
    assert abs(kendall_tau(a, b) - vine.edge_taus[vine.structure.trees[1].edges[0]]) < 3 * se


def test_simulate_determinism_and_shape():
    vine = three_var_vine(FRANK)
    assert np.array_equal(vine_simulate(vine, 100, seed=3), vine_simulate(vine, 100, seed=3))
    assert vine_simulate(vine, 0, seed=3).shape == (0, 3)
    with pytest.raises(ValueError):
        vine_simulate(vine, -1)


def test_simulate_star_and_dvine_roundtrip():
    rng = np.random.default_rng(9)
    for first in ([(0, 1), (0, 2), (0, 3), (0, 4)], [(0, 1), (1, 2), (2, 3), (3, 4)], [(0, 1), (1, 2), (1, 3), (3, 4)]):
        structure = structure_from_first_tree(5, first)
        specs = [CopulaSpec("Gaussian", 0, (float(r),)) for r in rng.uniform(-0.7, 0.7, len(structure.edges))]
        vine = vine_from_specs(structure, specs)
        u = vine_simulate(vine, 10_000, seed=1)
        refit = fit_sequential(u, VineConfig(families=("Gaussian",)))
        assert abs(refit.total_loglik - vine_loglik(vine, u)) < 30
        for e in structure.trees[0].edges:
            i, j = e.conditioned
            assert abs(kendall_tau(u[:, i], u[:, j]) - vine.edge_taus[e]) < 0.03


def test_json_roundtrip(tmp_path):
    u = vine_simulate(three_var_vine(FRANK), 1000, seed=10)
    fit = fit_sequential(pit_transform(u, ["a", "b", "c"]))
    path = tmp_path / "m.json"
    text = vine_to_json(fit, path)
    back = vine_from_json(path)
    assert back.specs == fit.specs
    assert back.names == ("a", "b", "c")
    assert vine_to_json(back) == text
    obj = json.loads(text)
    assert obj["trees"][1]["edges"][0]["conditioning"] in ([1], [2], [3])


def test_json_malformed_raises_data_error():
    with pytest.raises(DataError):
        vine_from_json('{"d": 3}')
    with pytest.raises(DataError):
        vine_from_json("{not json")


def test_report_and_dot():
    vine = three_var_vine(FRANK)
    rows = rvine.report_rows(vine)
    assert [r[:3] for r in rows] == [["1", "a,b", "Clayton"], ["1", "b,c", "Gumbel"], ["2", "a,c|b", "Frank"]]
    assert rows[0][3] == "0.5"
    assert rvine.report_csv(vine).splitlines()[0] == ",".join(rvine.REPORT_HEADER)
    md = rvine.report_markdown(vine)
    assert md.count("\n") == 2 + 3
    dot = rvine.tree_to_dot(vine, 2)
    assert dot.startswith("graph T2 {") and "13|2 Frank" in dot


def test_truncation_sets_higher_trees_independent():
    u = vine_simulate(three_var_vine(FRANK), 1000, seed=11)
    fit = fit_sequential(u, VineConfig(truncate=1))
    top = fit.structure.trees[1].edges[0]
    assert fit.edge_fits[top].spec.family == "Independence"
    assert fit.edge_fits[fit.structure.trees[0].edges[0]].spec.family != "Independence"


def test_family_restriction():
    u = vine_simulate(three_var_vine(), 1000, seed=12)
    fit = fit_sequential(u, VineConfig(families=("Clayton", "Frank")))
    assert {f.spec.family for f in fit.edge_fits.values()} <= {"Clayton", "Frank", "Independence"}


def test_too_few_rows():
    with pytest.raises(DataError):
        fit_sequential(np.random.default_rng(0).uniform(size=(80, 3)))


def test_edge_failure_names_the_edge(monkeypatch):
    def boom(*a, **k):
        raise select.AllCandidatesFailed("nothing converged")

    monkeypatch.setattr(select, "select_family_aic", boom)
    u = vine_simulate(three_var_vine(), 500, seed=13)
    with pytest.raises(EdgeFitError) as info:
        fit_sequential(u, names=("a", "b", "c"))
    assert "a,b" in str(info.value) or "b,c" in str(info.value)


def test_refit_parameters_keeps_families():
    vine = three_var_vine(FRANK)
    u = vine_simulate(vine, 3000, seed=14)
    refit = rvine.refit_parameters(vine, u)
    assert all(refit.specs[e].family == vine.specs[e].family for e in vine.structure.edges)
    assert refit.total_loglik == pytest.approx(vine_loglik(refit, u))
