import numpy as np
import pytest

from latentfoil.optimizer import (EaConfig, EvaluationError, OptProblem, constrained_dominates,
                                  crowding_distance, domination_matrix, fast_nondominated_sort,
                                  ga_minimize, nsga2, polynomial_mutation, sbx_crossover,
                                  write_history_csv)
from oracles import brute_force_fronts, zdt1, zdt1_front_distance


def sphere(x):
    return np.sum(x ** 2, axis=1, keepdims=True)


# ---------------------------------------------------------------- dominance

def test_constrained_dominance_examples():
    assert constrained_dominates([5, 5], 0.0, [1, 1], 0.3)
    assert constrained_dominates([1, 1], 0.0, [2, 2], 0.0)
    assert not constrained_dominates([2, 2], 0.0, [1, 1], 0.0)
    assert not constrained_dominates([1, 3], 0.0, [3, 1], 0.0)
    assert not constrained_dominates([3, 1], 0.0, [1, 3], 0.0)
    assert constrained_dominates([9, 9], 0.1, [0, 0], 0.2)
    assert not constrained_dominates([1, 1], 0.0, [1, 1], 0.0)


def test_domination_matrix_agrees_with_pairwise_rule():
    rng = np.random.default_rng(0)
    f = rng.integers(0, 4, size=(40, 2)).astype(float)
    cv = np.where(rng.random(40) < 0.3, rng.integers(0, 3, 40) * 0.5, 0.0)
    d = domination_matrix(f, cv)
    for i in range(40):
        for j in range(40):
            assert d[i, j] == constrained_dominates(f[i], cv[i], f[j], cv[j])


def test_sort_examples():
    fronts = fast_nondominated_sort(np.array([[1.0, 1.0], [2.0, 2.0]]))
    assert [list(fr) for fr in fronts] == [[0], [1]]
    t = np.linspace(0, 1, 9)
    antichain = np.column_stack([t, 1 - t])
    assert len(fast_nondominated_sort(antichain)) == 1


@pytest.mark.parametrize("seed", range(50))
def test_sort_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 201))
    m = int(rng.integers(2, 4))
    # coarse values so that ties and duplicates occur
    f = rng.integers(0, 12, size=(n, m)).astype(float) if seed % 2 else rng.random((n, m))
    fronts = [sorted(fr.tolist()) for fr in fast_nondominated_sort(f)]
    assert fronts == brute_force_fronts(f)


def test_infeasible_points_rank_by_violation():
    f = np.array([[0.0, 0.0], [5.0, 5.0], [1.0, 1.0]])
    cv = np.array([0.5, 0.0, 0.1])
    fronts = [fr.tolist() for fr in fast_nondominated_sort(f, cv)]
    assert fronts == [[1], [2], [0]]


def test_crowding_examples():
    assert np.all(np.isinf(crowding_distance(np.array([[0.0, 1.0], [1.0, 0.0]]))))
    d = crowding_distance(np.array([[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]]))
    assert np.isinf(d[0]) and np.isinf(d[2]) and d[1] == pytest.approx(2.0)
    dup = crowding_distance(np.array([[0.3, 0.3]] * 4))
    assert np.all(~np.isnan(dup))
    assert np.all(np.isfinite(dup[1:3]))


# ---------------------------------------------------------------- variation

def test_operators_respect_bounds():
    rng = np.random.default_rng(0)
    bounds = np.array([[-1.0, 1.0], [0.0, 1e-3], [5.0, 6.0]])
    for _ in range(20):
        p1 = rng.uniform(bounds[:, 0], bounds[:, 1], size=(50, 3))
        p2 = np.where(rng.random((50, 3)) < 0.5, bounds[:, 0], bounds[:, 1])
        c1, c2 = sbx_crossover(p1, p2, bounds, 15.0, 0.9, rng)
        m = polynomial_mutation(c1, bounds, 20.0, 1.0, rng)
        for v in (c1, c2, m):
            assert np.all(v >= bounds[:, 0]) and np.all(v <= bounds[:, 1])


def test_sbx_without_crossover_copies_parents():
    rng = np.random.default_rng(1)
    bounds = np.array([[0.0, 1.0]] * 3)
    p1, p2 = np.array([[0.1, 0.2, 0.3]]), np.array([[0.9, 0.8, 0.7]])
    c1, c2 = sbx_crossover(p1, p2, bounds, 15.0, 0.0, rng)
    assert np.array_equal(c1, p1) and np.array_equal(c2, p2)


# ---------------------------------------------------------------- GA

def test_ga_sphere():
    prob = OptProblem(np.array([[-5.0, 5.0]] * 2), sphere)
    res = ga_minimize(prob, EaConfig(seed=1))
    assert res.value < 1e-3 and res.feasible


def test_ga_constrained_sphere():
    # the evaluator also reports x1 so the constraint can read it
    prob = OptProblem(np.array([[-5.0, 5.0]] * 2),
                      lambda x: np.column_stack([sphere(x)[:, 0], x[:, 0]]),
                      constraints=[lambda out: 1.0 - out[:, 1]])
    res = ga_minimize(prob, EaConfig(seed=2))
    assert res.feasible and abs(res.x[0] - 1.0) < 0.02


def test_ga_maximize_sense():
    bounds = np.array([[-5.0, 5.0]] * 2)
    a = ga_minimize(OptProblem(bounds, sphere), EaConfig(seed=3))
    b = ga_minimize(OptProblem(bounds, lambda x: -sphere(x), [(0, "maximize")]), EaConfig(seed=3))
    assert np.array_equal(a.x, b.x) and b.value == -a.value


def test_ga_deterministic_and_monotone():
    prob = OptProblem(np.array([[-5.0, 5.0]] * 3), sphere)
    cfg = EaConfig(population=20, generations=30, seed=7)
    a, b = ga_minimize(prob, cfg), ga_minimize(prob, cfg)
    assert np.array_equal(a.x, b.x) and a.history == b.history
    best = [h["best_0"] for h in a.history]
    assert all(y <= x for x, y in zip(best, best[1:]))
    assert a.evaluations == 20 * 31


def test_ga_returns_least_violating_when_infeasible():
    prob = OptProblem(np.array([[0.0, 1.0]]), lambda x: np.column_stack([x[:, 0], x[:, 0]]),
                      constraints=[lambda out: 2.0 - out[:, 1]])
    res = ga_minimize(prob, EaConfig(population=20, generations=40, seed=0))
    assert not res.feasible and res.x[0] > 0.99 and res.violation < 1.01


def test_evaluator_failures_abort():
    def bad(x):
        out = sphere(x)
        out[: int(0.6 * len(x))] = np.nan
        return out
    with pytest.raises(EvaluationError):
        ga_minimize(OptProblem(np.array([[-1.0, 1.0]]), bad), EaConfig(population=10))


def test_some_evaluator_failures_tolerated():
    def flaky(x):
        out = sphere(x)
        out[::5] = np.nan
        return out
    res = ga_minimize(OptProblem(np.array([[-1.0, 1.0]] * 2), flaky),
                      EaConfig(population=20, generations=20))
    assert np.isfinite(res.value)


def test_problem_validation():
    with pytest.raises(ValueError):
        OptProblem(np.array([[1.0, 0.0]]), sphere)
    with pytest.raises(ValueError):
        OptProblem(np.array([[0.0, 1.0]]), sphere, [(0, "largest")])
    with pytest.raises(ValueError):
        EaConfig(population=7)
    with pytest.raises(ValueError):
        ga_minimize(OptProblem(np.array([[0.0, 1.0]]), lambda x: np.hstack([x, x]),
                               [(0, "minimize"), (1, "minimize")]))


# ---------------------------------------------------------------- NSGA-II

def test_zdt1_front():
    prob = OptProblem(np.array([[0.0, 1.0]] * 30), zdt1, [(0, "minimize"), (1, "minimize")])
    res = nsga2(prob, EaConfig(seed=0))
    assert np.mean(zdt1_front_distance(res.f)) < 0.05


def test_linear_front_spans_range():
    prob = OptProblem(np.array([[0.0, 1.0]]), lambda x: np.column_stack([x[:, 0], 1 - x[:, 0]]),
                      [(0, "minimize"), (1, "minimize")])
    res = nsga2(prob, EaConfig(seed=0, generations=50))
    assert len(np.unique(res.x[:, 0])) >= 50
    assert res.f[0, 0] < 0.01 and res.f[-1, 0] > 0.99


def test_single_point_feasible_region_collapses():
    prob = OptProblem(np.array([[0.0, 1.0]] * 2),
                      lambda x: np.column_stack([x[:, 0], x[:, 1], x[:, 0], x[:, 1]]),
                      [(0, "minimize"), (1, "maximize")],
                      [lambda o: o[:, 2] - 0.3, lambda o: 0.3 - o[:, 2],
                       lambda o: o[:, 3] - 0.6, lambda o: 0.6 - o[:, 3]])
    res = nsga2(prob, EaConfig(seed=0, generations=100))
    assert len(res) == 1
    np.testing.assert_allclose(res.x[0], [0.3, 0.6], atol=1e-3)


def test_pareto_set_is_mutually_nondominated_and_in_bounds():
    bounds = np.array([[0.0, 1.0]] * 5)
    prob = OptProblem(bounds, zdt1, [(0, "minimize"), (1, "minimize")],
                      [lambda o: 0.2 - o[:, 0]])
    res = nsga2(prob, EaConfig(population=40, generations=60, seed=3))
    assert res.feasible
    fmin = res.f  # both objectives are minimized, so user sense equals internal
    for i in range(len(res)):
        for j in range(len(res)):
            assert not constrained_dominates(fmin[i], res.cv[i], fmin[j], res.cv[j])
    assert np.all(res.x >= 0) and np.all(res.x <= 1)
    assert np.all(np.diff(res.f[:, 0]) >= 0)


def test_nsga2_maximize_reports_user_sense_and_is_deterministic():
    prob = OptProblem(np.array([[0.0, 1.0]]), lambda x: np.column_stack([x[:, 0], 1 - x[:, 0]]),
                      [(0, "maximize"), (1, "maximize")])
    cfg = EaConfig(population=20, generations=20, seed=5)
    a, b = nsga2(prob, cfg), nsga2(prob, cfg)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.f, b.f)
    np.testing.assert_allclose(a.f[:, 0], a.x[:, 0])


def test_history_csv(tmp_path):
    res = ga_minimize(OptProblem(np.array([[-1.0, 1.0]]), sphere),
                      EaConfig(population=10, generations=3))
    write_history_csv(res.history, tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "generation,best_0,mean_0,feasible_fraction" and len(lines) == 5
