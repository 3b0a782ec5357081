import numpy as np
import pytest

from quaydeck.baselines import (
    EvolutionConfig,
    GREEDY_EMPTY_LEG_TREE,
    TreePolicy,
    crowding_distance,
    crossover,
    eval_tree,
    fast_non_dominated_sort,
    moead_run,
    mutate,
    nsga2_run,
    random_tree,
    tchebycheff,
    tree_depth,
    tree_from_text,
    tree_to_text,
    validate_tree,
)
from quaydeck.moo import dominates


def brute_force_ranks(values):
    remaining = set(range(len(values)))
    ranks = {}
    level = 0
    while remaining:
        layer = [
            i for i in remaining
            if not any(dominates(values[j], values[i]) for j in remaining if j != i)
        ]
        for i in layer:
            ranks[i] = level
        remaining -= set(layer)
        level += 1
    return [ranks[i] for i in range(len(values))]


def test_eval_terminal_feature():
    row = np.arange(14.0)
    assert eval_tree(("f", 3), row) == 3.0
    assert eval_tree(("f", 13), row) == 13.0


def test_eval_hand_built_tree():
    # f3 + 2 * f5 on a fixed row
    tree = ("+", ("f", 3), ("*", ("c", 2.0), ("f", 5)))
    row = np.zeros(14)
    row[3], row[5] = 1.25, 3.0
    assert eval_tree(tree, row) == 1.25 + 2.0 * 3.0


def test_protected_division():
    assert eval_tree(("/", ("c", 5.0), ("c", 0.0)), np.zeros(14)) == 1.0
    assert eval_tree(("/", ("c", 5.0), ("c", 1e-12)), np.zeros(14)) == 1.0
    assert eval_tree(("/", ("c", 6.0), ("c", 2.0)), np.zeros(14)) == 3.0


def test_constant_tree_breaks_ties_to_lowest_index():
    policy = TreePolicy(("c", 1.0))
    probs = policy.action_probabilities(np.zeros((4, 14)), [0.5, 0.5])
    assert probs.tolist() == [1.0, 0.0, 0.0, 0.0]


def test_greedy_empty_leg_rule_picks_nearest():
    rows = np.zeros((3, 14))
    rows[:, 3] = [0.5, 0.1, 0.9]
    probs = TreePolicy(GREEDY_EMPTY_LEG_TREE).action_probabilities(rows, None)
    assert probs.tolist() == [0.0, 1.0, 0.0]


def test_tree_text_round_trip():
    tree = ("min", ("+", ("f", 2), ("c", -1.5)), ("/", ("f", 0), ("f", 9)))
    text = tree_to_text(tree)
    assert text == "(min (+ f2 -1.5) (/ f0 f9))"
    assert tree_from_text(text) == tree


def test_random_trees_respect_depth():
    rng = np.random.default_rng(0)
    for _ in range(200):
        tree = random_tree(rng, 6)
        validate_tree(tree, 6)
        assert tree_depth(tree) <= 6


def test_variation_never_exceeds_depth():
    rng = np.random.default_rng(1)
    a = random_tree(rng, 6, full=True)
    b = random_tree(rng, 6, full=True)
    for _ in range(300):
        a2 = crossover(a, b, rng, 6)
        validate_tree(a2, 6)
        b2 = mutate(b, rng, 6)
        validate_tree(b2, 6)
        a, b = a2, b2


def test_fast_sort_matches_brute_force():
    rng = np.random.default_rng(2)
    for _ in range(30):
        n = int(rng.integers(2, 60))
        values = rng.random((n, 2)).round(2)
        _, ranks = fast_non_dominated_sort(values)
        assert ranks.tolist() == brute_force_ranks(values)


def test_fast_sort_fronts_partition():
    rng = np.random.default_rng(3)
    values = rng.random((40, 2))
    fronts, ranks = fast_non_dominated_sort(values)
    flat = sorted(i for f in fronts for i in f)
    assert flat == list(range(40))
    for level, front in enumerate(fronts):
        assert all(ranks[i] == level for i in front)


def test_crowding_boundaries_are_infinite():
    values = np.array([[0.0, 1.0], [0.4, 0.6], [0.7, 0.3], [1.0, 0.0]])
    dist = crowding_distance(values)
    assert dist[0] == np.inf and dist[-1] == np.inf
    assert np.all(np.isfinite(dist[1:-1]))


def test_tchebycheff_matches_hand_value():
    assert tchebycheff([0.3, 0.7], [10.0, 3.0], [0.0, 0.0]) == 3.0
    assert tchebycheff([0.5, 0.5], [2.0, 4.0], [1.0, 1.0]) == 1.5


@pytest.fixture(scope="module")
def smoke_cfg():
    return dict(population=8, generations=2, generation_C=1, final_C=2,
                eval_seed=400, seed=12)


def test_nsga2_smoke_reproducible(micro_instance, smoke_cfg):
    a = nsga2_run(EvolutionConfig(**smoke_cfg), micro_instance)
    b = nsga2_run(EvolutionConfig(**smoke_cfg), micro_instance)
    assert [p.objectives for p in a.front.points] == [p.objectives for p in b.front.points]
    assert [p.label for p in a.front.points] == [p.label for p in b.front.points]


def test_nsga2_front_nondominated(micro_instance, smoke_cfg):
    result = nsga2_run(EvolutionConfig(**smoke_cfg), micro_instance)
    pts = [p.objectives for p in result.front.points]
    for i, a in enumerate(pts):
        for j, b in enumerate(pts):
            if i != j:
                assert not dominates(a, b)
    for ind in result.individuals:
        validate_tree(ind.tree, 6)


def test_moead_smoke_archive_nondominated(micro_instance, smoke_cfg):
    cfg = EvolutionConfig(neighborhood=4, **{**smoke_cfg, "population": 10,
                                             "generations": 3})
    result = moead_run(cfg, micro_instance)
    pts = [p.objectives for p in result.front.points]
    assert pts
    for i, a in enumerate(pts):
        for j, b in enumerate(pts):
            if i != j:
                assert not dominates(a, b)


def test_moead_global_neighborhood_degenerate(micro_instance, smoke_cfg):
    cfg = EvolutionConfig(neighborhood=10_000, **smoke_cfg)
    result = moead_run(cfg, micro_instance)  # T clamps to the population
    assert result.front.points


def test_moead_reproducible(micro_instance, smoke_cfg):
    cfg = EvolutionConfig(neighborhood=4, **smoke_cfg)
    a = moead_run(cfg, micro_instance)
    b = moead_run(cfg, micro_instance)
    assert [p.objectives for p in a.front.points] == [p.objectives for p in b.front.points]


def test_config_validation():
    with pytest.raises(ValueError):
        EvolutionConfig(population=7)
    with pytest.raises(ValueError):
        EvolutionConfig(generations=-1)
