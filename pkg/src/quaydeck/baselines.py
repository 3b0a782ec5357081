"""Evolved arithmetic-tree dispatching rules: NSGA-II and MOEA/D benchmarks.

A rule is a binary expression tree over the 14 per-crane observation
features plus ephemeral constants; dispatching picks the crane with the
lowest rule score (ties to the lowest crane index). Trees are represented
as nested tuples: ("+", left, right), ("f", 3), ("c", 1.25). Division is
protected, so evaluation is total.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env import FeatureScales
from .instance import TerminalInstance
from .moo import ParetoSet, PolicyPoint, evaluate_policy, nondominated_indices

OPERATORS = ("+", "-", "*", "/", "min", "max")
FEATURE_COUNT = 14
DIV_GUARD = 1e-9


# -- tree primitives ---------------------------------------------------------

def eval_tree(tree, row) -> float:
    kind = tree[0]
    if kind == "f":
        return float(row[tree[1]])
    if kind == "c":
        return tree[1]
    a = eval_tree(tree[1], row)
    b = eval_tree(tree[2], row)
    if kind == "+":
        return a + b
    if kind == "-":
        return a - b
    if kind == "*":
        return a * b
    if kind == "/":
        return a / b if abs(b) >= DIV_GUARD else 1.0
    if kind == "min":
        return min(a, b)
    if kind == "max":
        return max(a, b)
    raise ValueError(f"unknown node kind {kind!r}")


def tree_depth(tree) -> int:
    if tree[0] in ("f", "c"):
        return 1
    return 1 + max(tree_depth(tree[1]), tree_depth(tree[2]))


def tree_size(tree) -> int:
    if tree[0] in ("f", "c"):
        return 1
    return 1 + tree_size(tree[1]) + tree_size(tree[2])


def validate_tree(tree, max_depth: int) -> None:
    kind = tree[0]
    if kind in ("f", "c"):
        if kind == "f" and not (0 <= tree[1] < FEATURE_COUNT):
            raise ValueError(f"feature index {tree[1]} out of range")
        if kind == "c" and not np.isfinite(tree[1]):
            raise ValueError("non-finite constant")
    elif kind in OPERATORS:
        if len(tree) != 3:
            raise ValueError(f"operator {kind!r} needs two children")
        validate_tree(tree[1], max_depth)
        validate_tree(tree[2], max_depth)
    else:
        raise ValueError(f"unknown node kind {kind!r}")
    if tree_depth(tree) > max_depth:
        raise ValueError(f"tree exceeds depth {max_depth}")


def tree_to_text(tree) -> str:
    kind = tree[0]
    if kind == "f":
        return f"f{tree[1]}"
    if kind == "c":
        return repr(tree[1])
    return f"({kind} {tree_to_text(tree[1])} {tree_to_text(tree[2])})"


def tree_from_text(text: str):
    tokens = text.replace("(", " ( ").replace(")", " ) ").split()

    def parse(pos):
        tok = tokens[pos]
        if tok == "(":
            op = tokens[pos + 1]
            if op not in OPERATORS:
                raise ValueError(f"unknown operator {op!r}")
            left, pos = parse(pos + 2)
            right, pos = parse(pos)
            if tokens[pos] != ")":
                raise ValueError("unbalanced parentheses")
            return (op, left, right), pos + 1
        if tok.startswith("f") and tok[1:].isdigit():
            return ("f", int(tok[1:])), pos + 1
        return ("c", float(tok)), pos + 1

    tree, pos = parse(0)
    if pos != len(tokens):
        raise ValueError("trailing tokens in tree text")
    return tree


def random_tree(rng: np.random.Generator, max_depth: int,
                const_range=(-2.0, 2.0), full: bool = False):
    """Grow (or full) method; depth counts levels, a bare terminal is 1."""
    if max_depth <= 1 or (not full and rng.random() < 0.3):
        if rng.random() < 0.8:
            return ("f", int(rng.integers(FEATURE_COUNT)))
        return ("c", float(np.round(rng.uniform(*const_range), 4)))
    op = OPERATORS[int(rng.integers(len(OPERATORS)))]
    return (
        op,
        random_tree(rng, max_depth - 1, const_range, full),
        random_tree(rng, max_depth - 1, const_range, full),
    )


def _get_subtree(tree, index):
    """Preorder node lookup; returns (subtree, depth_of_node)."""
    stack = [(tree, 1)]
    count = 0
    while stack:
        node, depth = stack.pop(0)
        if count == index:
            return node, depth
        count += 1
        if node[0] not in ("f", "c"):
            stack.insert(0, (node[2], depth + 1))
            stack.insert(0, (node[1], depth + 1))
    raise IndexError(index)


def _replace_subtree(tree, index, replacement):
    counter = [0]

    def walk(node):
        if counter[0] == index:
            counter[0] += 1
            return replacement
        counter[0] += 1
        if node[0] in ("f", "c"):
            return node
        left = walk(node[1])
        right = walk(node[2])
        return (node[0], left, right)

    return walk(tree)


def crossover(a, b, rng: np.random.Generator, max_depth: int):
    """Swap a random subtree of b into a random point of a; retries keep the
    child within the depth cap, falling back to a copy of the first parent."""
    for _ in range(8):
        ia = int(rng.integers(tree_size(a)))
        ib = int(rng.integers(tree_size(b)))
        donor, _ = _get_subtree(b, ib)
        child = _replace_subtree(a, ia, donor)
        if tree_depth(child) <= max_depth:
            return child
    return a


def mutate(tree, rng: np.random.Generator, max_depth: int, const_range=(-2.0, 2.0)):
    for _ in range(8):
        idx = int(rng.integers(tree_size(tree)))
        _, depth = _get_subtree(tree, idx)
        budget = max(max_depth - depth + 1, 1)
        child = _replace_subtree(tree, idx, random_tree(rng, budget, const_range))
        if tree_depth(child) <= max_depth:
            return child
    return tree


class TreePolicy:
    """Tree-as-dispatcher: lowest score wins, preference is ignored."""

    def __init__(self, tree):
        self.tree = tree

    def action_probabilities(self, rows, preference) -> np.ndarray:
        scores = np.empty(rows.shape[0])
        for i in range(rows.shape[0]):
            s = eval_tree(self.tree, rows[i])
            scores[i] = np.inf if np.isnan(s) else s
        probs = np.zeros(rows.shape[0])
        probs[int(np.argmin(scores))] = 1.0
        return probs


GREEDY_EMPTY_LEG_TREE = ("f", 3)  # the shortest-empty-leg dispatch rule


# -- shared evolution scaffolding ---------------------------------------------

@dataclass
class EvolutionConfig:
    population: int = 16
    generations: int = 5
    p_crossover: float = 0.5
    p_mutation: float = 0.5
    max_depth: int = 6
    const_range: tuple[float, float] = (-2.0, 2.0)
    generation_C: int = 4     # seeds per fitness evaluation during evolution
    final_C: int = 16         # re-evaluation of the returned front
    eval_seed: int = 9000
    neighborhood: int = 20    # MOEA/D only
    seed: int = 0

    def __post_init__(self):
        if self.population < 2 or self.population % 2:
            raise ValueError("population must be even and at least 2")
        if self.generations < 0:
            raise ValueError("generations must be non-negative")


@dataclass
class Individual:
    tree: tuple
    fitness: tuple[float, float] | None = None
    rank: int = 0
    crowding: float = 0.0


@dataclass
class EvolutionResult:
    front: ParetoSet
    individuals: list[Individual] = field(default_factory=list)


def _fitness(tree, inst, C, seed, scales) -> tuple[float, float]:
    point = evaluate_policy(TreePolicy(tree), [0.5, 0.5], inst, C, seed, scales)
    return point.objectives


def _final_front(individuals, inst, cfg, scales, label) -> EvolutionResult:
    values = np.array([ind.fitness for ind in individuals])
    keep = nondominated_indices(values)
    finals = []
    points = []
    for i in keep:
        tree = individuals[i].tree
        fit = _fitness(tree, inst, cfg.final_C, cfg.eval_seed, scales)
        finals.append(Individual(tree, fit))
    front_keep = nondominated_indices(np.array([ind.fitness for ind in finals]))
    finals = [finals[i] for i in front_keep]
    for ind in finals:
        points.append(PolicyPoint((0.5, 0.5), ind.fitness,
                                  f"{label}:{tree_to_text(ind.tree)}"))
    return EvolutionResult(ParetoSet(points), finals)


# -- NSGA-II -------------------------------------------------------------------

def fast_non_dominated_sort(values: np.ndarray) -> tuple[list[list[int]], np.ndarray]:
    """Deb's O(M N^2) layering; returns (fronts, rank per individual)."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    dominated_by: list[list[int]] = [[] for _ in range(n)]
    domination_count = np.zeros(n, dtype=int)
    for p in range(n):
        vp = values[p]
        for q in range(p + 1, n):
            vq = values[q]
            if np.all(vp <= vq) and np.any(vp < vq):
                dominated_by[p].append(q)
                domination_count[q] += 1
            elif np.all(vq <= vp) and np.any(vq < vp):
                dominated_by[q].append(p)
                domination_count[p] += 1
    ranks = np.zeros(n, dtype=int)
    current = [i for i in range(n) if domination_count[i] == 0]
    fronts = []
    level = 0
    while current:
        fronts.append(current)
        nxt = []
        for p in current:
            for q in dominated_by[p]:
                domination_count[q] -= 1
                if domination_count[q] == 0:
                    ranks[q] = level + 1
                    nxt.append(q)
        current = nxt
        level += 1
    return fronts, ranks


def crowding_distance(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    n = len(values)
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for j in range(values.shape[1]):
        order = np.argsort(values[:, j], kind="stable")
        lo, hi = values[order[0], j], values[order[-1], j]
        dist[order[0]] = dist[order[-1]] = np.inf
        if hi == lo:
            continue
        for k in range(1, n - 1):
            dist[order[k]] += (values[order[k + 1], j] - values[order[k - 1], j]) / (hi - lo)
    return dist


def _tournament(pop, rng) -> Individual:
    a, b = rng.integers(len(pop)), rng.integers(len(pop))
    ia, ib = pop[int(a)], pop[int(b)]
    if ia.rank != ib.rank:
        return ia if ia.rank < ib.rank else ib
    if ia.crowding != ib.crowding:
        return ia if ia.crowding > ib.crowding else ib
    return ia


def _rank_population(pop) -> None:
    values = np.array([ind.fitness for ind in pop])
    fronts, ranks = fast_non_dominated_sort(values)
    for ind, r in zip(pop, ranks):
        ind.rank = int(r)
    for front in fronts:
        dists = crowding_distance(values[front])
        for i, d in zip(front, dists):
            pop[i].crowding = float(d)


def _init_population(cfg: EvolutionConfig, rng) -> list[tuple]:
    trees = []
    depths = list(range(2, cfg.max_depth + 1))
    for i in range(cfg.population):
        depth = depths[i % len(depths)]
        trees.append(random_tree(rng, depth, cfg.const_range, full=bool(i % 2)))
    return trees


def _offspring(parent_a, parent_b, cfg: EvolutionConfig, rng) -> tuple:
    child = parent_a
    if rng.random() < cfg.p_crossover:
        child = crossover(parent_a, parent_b, rng, cfg.max_depth)
    if rng.random() < cfg.p_mutation:
        child = mutate(child, rng, cfg.max_depth, cfg.const_range)
    validate_tree(child, cfg.max_depth)
    return child


def nsga2_run(cfg: EvolutionConfig, inst: TerminalInstance,
              scales: FeatureScales | None = None, progress=None) -> EvolutionResult:
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 101)))
    pop = [
        Individual(t, _fitness(t, inst, cfg.generation_C, cfg.eval_seed, scales))
        for t in _init_population(cfg, rng)
    ]
    _rank_population(pop)
    for gen in range(cfg.generations):
        children = []
        while len(children) < cfg.population:
            pa, pb = _tournament(pop, rng), _tournament(pop, rng)
            tree = _offspring(pa.tree, pb.tree, cfg, rng)
            children.append(
                Individual(tree, _fitness(tree, inst, cfg.generation_C,
                                          cfg.eval_seed, scales))
            )
        union = pop + children
        values = np.array([ind.fitness for ind in union])
        fronts, _ranks = fast_non_dominated_sort(values)
        survivors: list[Individual] = []
        for front in fronts:
            if len(survivors) + len(front) <= cfg.population:
                survivors.extend(union[i] for i in front)
            else:
                dists = crowding_distance(values[front])
                order = np.argsort(-dists, kind="stable")
                room = cfg.population - len(survivors)
                survivors.extend(union[front[i]] for i in order[:room])
            if len(survivors) >= cfg.population:
                break
        pop = survivors
        _rank_population(pop)
        if progress is not None:
            progress({"generation": gen + 1, "method": "nsga2"})
    return _final_front(pop, inst, cfg, scales, "nsga2")


# -- MOEA/D --------------------------------------------------------------------

def tchebycheff(weights, costs, ideal) -> float:
    w = np.asarray(weights, dtype=float)
    c = np.asarray(costs, dtype=float)
    z = np.asarray(ideal, dtype=float)
    return float(np.max(w * np.abs(c - z)))


def moead_run(cfg: EvolutionConfig, inst: TerminalInstance,
              scales: FeatureScales | None = None, progress=None) -> EvolutionResult:
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 202)))
    m = cfg.population
    weights = np.array([[1.0 - i / (m - 1), i / (m - 1)] for i in range(m)])
    # Weight-vector corners would zero out an objective; nudge off the axes so
    # every subproblem still sees both costs.
    weights = np.clip(weights, 1e-6, None)
    dists = np.linalg.norm(weights[:, None, :] - weights[None, :, :], axis=-1)
    t_size = min(cfg.neighborhood, m)
    neighbors = np.argsort(dists, axis=1, kind="stable")[:, :t_size]

    pop = [
        Individual(t, _fitness(t, inst, cfg.generation_C, cfg.eval_seed, scales))
        for t in _init_population(cfg, rng)
    ]
    ideal = np.min([ind.fitness for ind in pop], axis=0)
    archive: list[Individual] = list(pop)
    for gen in range(cfg.generations):
        for i in range(m):
            hood = neighbors[i]
            pa = pop[int(hood[rng.integers(t_size)])]
            pb = pop[int(hood[rng.integers(t_size)])]
            tree = _offspring(pa.tree, pb.tree, cfg, rng)
            fit = _fitness(tree, inst, cfg.generation_C, cfg.eval_seed, scales)
            child = Individual(tree, fit)
            archive.append(child)
            ideal = np.minimum(ideal, fit)
            for j in hood:
                if tchebycheff(weights[j], fit, ideal) < tchebycheff(
                    weights[j], pop[int(j)].fitness, ideal
                ):
                    pop[int(j)] = child
        if progress is not None:
            progress({"generation": gen + 1, "method": "moead"})
    return _final_front(archive, inst, cfg, scales, "moead")
