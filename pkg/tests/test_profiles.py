import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eager_reserves.algorithms import brute_force_optimum
from eager_reserves.auction import (
    PLUS_INFINITY,
    Auction,
    Dataset,
    ReserveGrid,
    ReserveVector,
    build_reserve_grids,
    esp_revenue,
    total_revenue,
    zero_reserve_revenue,
)
from eager_reserves.errors import SizeLimitError, StructuralError, ValidationError
from eager_reserves.profiles import (
    B0,
    B00,
    ZERO_PROFILE,
    LpSolution,
    Profile,
    associated_profile,
    build_profile_lp,
    check_lp_feasibility,
    count_valid_profiles,
    enumerate_valid_profiles,
    integral_embedding,
    profile_revenue,
    solve_profile_lp,
    validate_profile,
)

from oracles import valid_profiles_loop, vertex_enumeration

A53 = Auction("a", {0: 5.0, 1: 3.0})
G53 = ReserveGrid(((0.0, 3.0, 5.0, PLUS_INFINITY), (0.0, 3.0, PLUS_INFINITY)))


def as_tuples(profiles):
    return {(p.b1, p.b2, p.r1, p.r2, p.revenue) for p in profiles}


def random_instance(seed, n=3, m=5, levels=5):
    rng = np.random.default_rng(seed)
    auctions = []
    for i in range(m):
        bids = {b: float(rng.integers(1, levels + 1)) for b in range(n) if rng.random() < 0.85}
        auctions.append(Auction(f"a{i}", bids, float(rng.integers(1, 3))))
    return Dataset(tuple(auctions), n)


# -- enumeration -----------------------------------------------------------


def test_enumeration_example():
    got = as_tuples(enumerate_valid_profiles(A53, G53))
    assert (0, 1, 5.0, 3.0, 5.0) in got
    assert (1, B0, 3.0, 0.0, 3.0) in got
    assert (B0, B00, 0.0, 0.0, 0.0) in got
    assert got == valid_profiles_loop(A53.bids, [list(g) for g in G53.per_buyer])


def test_enumeration_single_bidder():
    a = Auction("s", {0: 7.0})
    g = ReserveGrid(((0.0, 7.0, PLUS_INFINITY),))
    assert as_tuples(enumerate_valid_profiles(a, g)) == {
        (0, B0, 0.0, 0.0, 0.0), (0, B0, 7.0, 0.0, 7.0), (B0, B00, 0.0, 0.0, 0.0)}


def test_enumeration_all_zero_bids():
    a = Auction("z", {})
    g = ReserveGrid(((0.0, PLUS_INFINITY), (0.0, PLUS_INFINITY)))
    assert all(p.revenue == 0 for p in enumerate_valid_profiles(a, g))


def test_equal_bids_both_orders():
    a = Auction("e", {0: 2.0, 1: 2.0})
    g = ReserveGrid(((0.0, 2.0, PLUS_INFINITY),) * 2)
    got = as_tuples(enumerate_valid_profiles(a, g))
    assert (0, 1, 2.0, 0.0, 2.0) in got and (1, 0, 2.0, 0.0, 2.0) in got


@pytest.mark.parametrize("seed", range(25))
def test_enumeration_matches_oracle(seed):
    ds = random_instance(seed, n=3, m=3)
    for mode in ("own_bids", "shared_bids"):
        grid = build_reserve_grids(ds, mode)
        for a in ds.auctions:
            profiles = enumerate_valid_profiles(a, grid)
            assert len(profiles) == len(set(profiles)) == count_valid_profiles(a, grid)
            assert as_tuples(profiles) == valid_profiles_loop(a.bids, [list(g) for g in grid.per_buyer])
            for p in profiles:
                validate_profile(a, p, grid)
                assert profile_revenue(a, p) == p.revenue


@pytest.mark.parametrize("p, expected", [
    (Profile(0, 1, 4.0, 1.0), 4.0),
    (Profile(0, 1, 0.0, 3.0), 3.0),
    (ZERO_PROFILE, 0.0),
])
def test_profile_revenue_examples(p, expected):
    assert profile_revenue(A53, p) == expected


@pytest.mark.parametrize("p, word", [
    (Profile(1, 0, 0.0, 0.0), "b1 must be >="),
    (Profile(0, 1, 6.0, 0.0), "b1 does not clear"),
    (Profile(0, 1, 0.0, 4.0), "b2 does not clear"),
    (Profile(0, B0, 1.0, 1.0), "aux buyer"),
    (Profile(0, 0, 1.0, 1.0), "must differ"),
    (Profile(0, 2, 1.0, 0.0), "no positive bid"),
])
def test_invalid_profiles_name_condition(p, word):
    with pytest.raises(ValidationError, match=word):
        profile_revenue(A53, p)


@pytest.mark.parametrize("r, expected, rev", [
    ({0: 4, 1: 0}, Profile(0, 1, 4.0, 0.0), 4.0),
    ({0: 6, 1: 0}, Profile(1, B0, 0.0, 0.0), 0.0),
    ({0: 6, 1: 4}, ZERO_PROFILE, 0.0),
])
def test_associated_profile_examples(r, expected, rev):
    p = associated_profile(A53, ReserveVector(r))
    assert p == expected
    assert p.revenue == rev


@given(st.dictionaries(st.integers(0, 3), st.integers(1, 5), max_size=4),
       st.lists(st.sampled_from([0.0, 1.0, 2.0, 3.0, 4.0, 5.0, PLUS_INFINITY]), min_size=4, max_size=4))
@settings(max_examples=200, deadline=None)
def test_association_consistency(bids, reserves):
    a = Auction("a", {b: float(v) for b, v in bids.items()})
    r = ReserveVector(dict(enumerate(reserves)))
    p = associated_profile(a, r)
    assert profile_revenue(a, p) == esp_revenue(a, r)


# -- model -----------------------------------------------------------------


def test_model_counts_match_enumeration():
    ds = Dataset((A53,), 2)
    grid = build_reserve_grids(ds, "own_bids")
    m = build_profile_lp(ds, grid)
    profiles = valid_profiles_loop(A53.bids, [list(g) for g in grid.per_buyer])
    assert m.n_s == len(profiles)
    assert m.n_vars == len(profiles) + sum(len(g) for g in grid.per_buyer)
    coupled = {(b, r) for (b1, b2, r1, r2, _) in profiles for b, r in ((b1, r1), (b2, r2)) if b >= 0}
    assert m.n_rows == 1 + len(coupled) + ds.n
    assert m.A.shape == (m.n_rows, m.n_vars)
    assert sorted(m.kinds.tolist()).count("E") == ds.n


def test_model_structure_invariants():
    ds = random_instance(3)
    m = build_profile_lp(ds, build_reserve_grids(ds, "own_bids"))
    A = m.A.tocsc()
    auction_rows = [i for i, lab in enumerate(m.row_labels) if lab[0] == "auction"]
    for j in range(m.n_s):
        rows = A.indices[A.indptr[j]:A.indptr[j + 1]]
        assert sum(r in auction_rows for r in rows) == 1
    A = m.A.tocsr()
    for i, lab in enumerate(m.row_labels):
        if lab[0] == "couple":
            cols = A.indices[A.indptr[i]:A.indptr[i + 1]]
            assert sum(c >= m.n_s for c in cols) == 1
    names = m.column_names()
    assert len(set(names)) == len(names)


def test_lp_optimum_single_auction():
    ds = Dataset((A53,), 2)
    grid = build_reserve_grids(ds, "own_bids")
    sol, report, model = solve_profile_lp(ds, grid)
    assert sol.objective == pytest.approx(5.0, abs=1e-9)
    top = max(sol.s_values.items(), key=lambda kv: kv[1])
    assert top[0][1].r1 == 5.0 and top[0][1].b1 == 0 and top[1] == pytest.approx(1.0)
    # vertex enumeration on the tiny model
    status, value = vertex_enumeration(model.c, model.A.toarray(), model.rhs, model.kinds)
    assert status == "optimal" and value == pytest.approx(5.0, abs=1e-9)


def test_all_zero_dataset_optimum():
    ds = Dataset((Auction("a", {}), Auction("b", {})), 2)
    sol, _, _ = solve_profile_lp(ds, build_reserve_grids(ds, "own_bids"))
    assert sol.objective == 0.0


def test_size_limit():
    ds = random_instance(1)
    with pytest.raises(SizeLimitError, match="coarser"):
        build_profile_lp(ds, build_reserve_grids(ds, "own_bids"), max_variables=10)


# -- feasibility and embedding ---------------------------------------------


@pytest.mark.parametrize("seed", range(10))
def test_integral_embedding_feasible(seed):
    ds = random_instance(seed)
    grid = build_reserve_grids(ds, "own_bids")
    rng = np.random.default_rng(seed)
    r = ReserveVector({b: float(rng.choice(grid.for_buyer(b))) for b in ds.buyers})
    sol = integral_embedding(ds, r, grid)
    rep = check_lp_feasibility(ds, grid, sol, tol=0.0)
    assert rep.feasible and rep.max_residual == 0.0
    assert sol.objective == pytest.approx(total_revenue(ds, r), abs=1e-12)


def test_integral_embedding_zero_reserves():
    ds = random_instance(2)
    grid = build_reserve_grids(ds, "own_bids")
    assert integral_embedding(ds, ReserveVector.zeros(ds.n), grid).objective == pytest.approx(zero_reserve_revenue(ds))


def test_integral_embedding_off_grid():
    ds = Dataset((A53,), 2)
    with pytest.raises(ValidationError):
        integral_embedding(ds, ReserveVector({0: 4.5, 1: 0.0}), build_reserve_grids(ds, "own_bids"))


def test_infeasible_q_row_named():
    ds = Dataset((A53,), 2)
    grid = build_reserve_grids(ds, "own_bids")
    sol = integral_embedding(ds, ReserveVector.zeros(2), grid)
    sol.q_values[1] = {0.0: 0.9}
    rep = check_lp_feasibility(ds, grid, sol)
    assert not rep.feasible
    assert any("buyer 1" in name for name in rep.violated_rows)


def test_structural_mismatch():
    ds = Dataset((A53,), 2)
    grid = build_reserve_grids(ds, "own_bids")
    bad = LpSolution({("nope", ZERO_PROFILE): 1.0}, {0: {0.0: 1.0}, 1: {0.0: 1.0}}, 0.0)
    with pytest.raises(StructuralError):
        check_lp_feasibility(ds, grid, bad)
    bad = LpSolution({}, {0: {1.5: 1.0}, 1: {0.0: 1.0}}, 0.0)
    with pytest.raises(StructuralError):
        check_lp_feasibility(ds, grid, bad)


@pytest.mark.parametrize("seed", range(8))
def test_relaxation_and_solver_feasibility(seed):
    ds = random_instance(100 + seed)
    grid = build_reserve_grids(ds, "own_bids")
    sol, report, _ = solve_profile_lp(ds, grid)
    assert check_lp_feasibility(ds, grid, sol, tol=1e-7).feasible
    bf = brute_force_optimum(ds, grid)
    assert sol.objective >= bf.value - 1e-9 * (1 + abs(bf.value))
    # brute-force optimum embedded is feasible with objective ESP*
    emb = integral_embedding(ds, bf.reserves, grid)
    assert emb.objective == pytest.approx(bf.value, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_grid_monotonicity(seed):
    ds = random_instance(200 + seed)
    small = build_reserve_grids(ds, "own_bids")
    big = build_reserve_grids(ds, "shared_bids")
    lo, _, _ = solve_profile_lp(ds, small)
    hi, _, _ = solve_profile_lp(ds, big)
    assert hi.objective >= lo.objective - 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_warm_start_same_optimum(seed):
    ds = random_instance(300 + seed)
    grid = build_reserve_grids(ds, "own_bids")
    cold, _, _ = solve_profile_lp(ds, grid)
    warm, _, _ = solve_profile_lp(ds, grid, warm_start=brute_force_optimum(ds, grid).reserves)
    assert warm.objective == pytest.approx(cold.objective, abs=1e-9)


def test_solution_json_round_trip():
    ds = random_instance(7)
    grid = build_reserve_grids(ds, "own_bids")
    sol, _, model = solve_profile_lp(ds, grid)
    text = sol.dumps()
    back = LpSolution.from_json(json.loads(text), ds)
    assert back.s_values == sol.s_values
    assert back.q_values == sol.q_values
    assert back.objective == pytest.approx(sol.objective, abs=1e-12)
    assert np.array_equal(model.vector_from_solution(back), model.vector_from_solution(sol))
    obj = json.loads(text)
    assert set(obj) == {"objective", "q", "s"}
    assert all(set(e) == {"auction", "b1", "b2", "r1", "r2", "value"} for e in obj["s"])


def test_solution_json_aux_labels_and_inf():
    ds = Dataset((A53,), 2)
    grid = build_reserve_grids(ds, "own_bids")
    sol = integral_embedding(ds, ReserveVector({0: PLUS_INFINITY, 1: PLUS_INFINITY}), grid)
    obj = sol.to_json()
    assert obj["s"][0]["b1"] == "b0" and obj["s"][0]["b2"] == "b00"
    assert obj["q"]["0"] == {"inf": 1.0}
    back = LpSolution.from_json(obj, ds)
    assert back.q_values[0] == {math.inf: 1.0}


def test_solution_json_revenue_mismatch_is_structural():
    ds = Dataset((A53,), 2)
    obj = {"objective": 1, "q": {}, "s": [{"auction": "a", "b1": "1", "b2": "0", "r1": 0, "r2": 0, "value": 1}]}
    with pytest.raises(StructuralError):
        LpSolution.from_json(obj, ds)
