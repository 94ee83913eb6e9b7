import pytest
from hypothesis import given, settings, strategies as st

from marksat.formula import (Clause, CnfFormula, ComponentTooLarge, DimacsError, FormulaError,
                             PartialAssignment, all_components, components_touching, emit_dimacs,
                             generate_random, iter_assignments, parse_dimacs, simplify)
from marksat.rng import RandomSource


def test_parse_single_clause():
    f = parse_dimacs("p cnf 2 1\n1 -2 0")
    assert f.num_vars == 2 and f.num_clauses == 1
    assert f.clauses[0].literals == [(0, 1), (1, 0)]
    assert f.width_min == f.width_max == 2 and f.max_degree == 1


def test_parse_empty_formula():
    f = parse_dimacs(b"c nothing here\np cnf 3 0\n")
    assert f.num_vars == 3 and f.num_clauses == 0


@pytest.mark.parametrize("text", [
    "p cnf 2 1\n1 1 0",
    "p cnf 2 1\n1 -1 0",
    "1 2 0",
    "p cnf 2 1\n1 3 0",
    "p cnf x 1\n1 0",
    "p cnf 2 1\n1 a 0",
    "p cnf 2 1\np cnf 2 1\n",
])
def test_parse_rejects_malformed(text):
    with pytest.raises(DimacsError):
        parse_dimacs(text)


def test_clause_spanning_lines_and_count_mismatch_warns(caplog):
    f = parse_dimacs("p cnf 3 2\n1 2\n3 0\n")
    assert f.num_clauses == 1 and f.clauses[0].to_dimacs() == [1, 2, 3]
    assert "declares 2 clauses" in caplog.text


def test_clause_rejects_repeated_variable():
    with pytest.raises(FormulaError):
        Clause((0, 0), (1, 1))


def test_emit_round_trips_bit_exactly():
    text = "c hello\np cnf 4 2\n-3 1 4 0\n2 -4 0\n"
    f = parse_dimacs(text)
    assert emit_dimacs(f, ["hello"]) == text


def test_degree_and_occurrences():
    f = CnfFormula.from_dimacs_clauses(4, [[1, 2], [-1, 3], [1, -4]])
    assert f.max_degree == 3
    assert list(f.occurrences[0]) == [0, 1, 2]
    assert f.is_uniform and f.width_min == 2


def test_generate_edge_cases():
    assert generate_random(10, 0, 3, 2, RandomSource(1)).num_clauses == 0
    f = generate_random(4, 1, 4, 1, RandomSource(1))
    assert sorted(f.clauses[0].variables) == [0, 1, 2, 3]
    a = generate_random(20, 10, 4, 3, RandomSource(7))
    b = generate_random(20, 10, 4, 3, RandomSource(7))
    assert emit_dimacs(a) == emit_dimacs(b)
    with pytest.raises(FormulaError):
        generate_random(4, 3, 4, 2, RandomSource(1))


@settings(max_examples=50, deadline=None)
@given(st.integers(4, 20), st.integers(2, 4), st.integers(1, 3), st.integers(0, 10_000))
def test_generated_formula_invariants(n, k, d, seed):
    m = n * d // k
    f = generate_random(n, m, k, d, RandomSource(seed))
    assert f.num_clauses == m
    assert f.max_degree <= d
    for c in f.clauses:
        assert len(set(c.variables)) == k
        assert all(0 <= v < n for v in c.variables)
    true_degree = max((sum(v in c.variables for c in f.clauses) for v in range(n)), default=0)
    assert f.max_degree == true_degree


def test_simplify_examples():
    f = parse_dimacs("p cnf 2 1\n1 -2 0")
    assert simplify(f, PartialAssignment.from_mapping(2, {0: 1})).residual_clauses == []
    assert simplify(f, PartialAssignment.from_mapping(2, {0: 0})).residual_clauses == [(0, ((1, 0),))]
    g = parse_dimacs("p cnf 2 1\n1 2 0")
    sf = simplify(g, PartialAssignment.from_mapping(2, {0: 0, 1: 0}))
    assert sf.residual_clauses == [(0, ())] and sf.is_falsified()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 1))
def test_simplify_invariants(seed, frac):
    r = RandomSource(seed)
    f = generate_random(12, 6, 3, 2, r)
    assigned = {v: r.bit() for v in range(12) if r.random() < frac}
    sf = simplify(f, PartialAssignment.from_mapping(12, assigned))
    for cid, lits in sf.residual_clauses:
        assert not f.clauses[cid].satisfied_by(sf.x.values)
        assert all(v not in assigned for v, _ in lits)


def test_components_examples():
    empty = simplify(CnfFormula(3, []), PartialAssignment.empty(3))
    assert components_touching(empty, {1}) == [all_components(empty)[1]]
    assert components_touching(empty, {1})[0].vars == {1}
    f = parse_dimacs("p cnf 4 2\n1 2 0\n3 4 0")
    comps = components_touching(simplify(f, PartialAssignment.empty(4)), {0})
    assert len(comps) == 1 and comps[0].clause_ids == {0} and comps[0].vars == {0, 1}
    chain = parse_dimacs("p cnf 6 5\n1 2 0\n2 3 0\n3 4 0\n4 5 0\n5 6 0")
    sf = simplify(chain, PartialAssignment.empty(6))
    with pytest.raises(ComponentTooLarge):
        components_touching(sf, {0}, edge_cap=3)
    assert len(components_touching(sf, {0}, edge_cap=5)[0].clause_ids) == 5


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_components_are_connected_and_cover_their_clauses(seed):
    r = RandomSource(seed)
    f = generate_random(14, 6, 3, 2, r)
    assigned = {v: r.bit() for v in range(14) if r.random() < 0.3}
    sf = simplify(f, PartialAssignment.from_mapping(14, assigned))
    comps = all_components(sf)
    assert set().union(*(c.vars for c in comps)) == sf.free_vars
    for comp in comps:
        lit_vars = {v for cid in comp.clause_ids for v, _ in sf.residual(cid)}
        assert lit_vars <= comp.vars
        if comp.clause_ids:
            assert lit_vars == comp.vars
        # connectivity: grow from one clause through shared free variables
        ids = set(comp.clause_ids)
        if ids:
            reached = {min(ids)}
            frontier = set(v for v, _ in sf.residual(min(ids)))
            changed = True
            while changed:
                changed = False
                for cid in ids - reached:
                    if frontier & {v for v, _ in sf.residual(cid)}:
                        reached.add(cid)
                        frontier |= {v for v, _ in sf.residual(cid)}
                        changed = True
            assert reached == ids


def test_partial_assignment_domain():
    x = PartialAssignment.from_mapping(5, {1: 0, 3: 1})
    assert x.domain == frozenset(x.assigned) == {1, 3}
    with pytest.raises(FormulaError):
        PartialAssignment.from_mapping(2, {5: 1})


def test_iter_assignments_order():
    assert list(iter_assignments(2)) == [[0, 0], [1, 0], [0, 1], [1, 1]]
