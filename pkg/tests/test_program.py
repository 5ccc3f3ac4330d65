import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpcompose.program import (
    ALL_KINDS,
    ARITY,
    BINARY_OPS,
    DEPTH_LIMIT,
    TERMINALS,
    UNARY_OPS,
    Node,
    ProgramSyntaxError,
    depth,
    evaluate,
    format_program,
    iter_nodes,
    parse_program,
    random_tree,
    ramped_half_and_half,
    read_program_file,
    replace_at,
    semantically_equivalent,
    size,
    subtree_at,
    to_dot,
    write_program_file,
)

RULE = "add(ARG2,sub(ARG1,ARG0))"


def chain(n, op="neg"):
    tree = Node("ARG0")
    for _ in range(n):
        tree = Node(op, (tree,))
    return tree


# per-component scalar oracles, independent of numpy
def _scalar_norm(w):
    peak = max(abs(x) for x in w)
    return [0.0 if peak == 0 else x / peak for x in w]


def _scalar_log1p_norm(w):
    out = []
    for x in _scalar_norm(w):
        out.append(-math.inf if x == -1.0 else math.log1p(x))
    return out


SCALAR_UNARY = {
    "neg": lambda w: [-x for x in w],
    "diff": lambda w: [1.0 + x for x in w],
    "abs": lambda w: [abs(x) for x in w],
    "cos": lambda w: [math.cos(x) for x in w],
    "sin": lambda w: [math.sin(x) for x in w],
    "roll": lambda w: w[1:] + w[:1],
    "rint": lambda w: [float(round(x)) for x in w],  # Python round() is half-to-even
    "half": lambda w: [x / 2 for x in w],
    "norm": _scalar_norm,
    "log1p": _scalar_log1p_norm,
}

SCALAR_BINARY = {
    "add": lambda w, v: [x + y for x, y in zip(w, v)],
    "sub": lambda w, v: [x - y for x, y in zip(w, v)],
    "mul": lambda w, v: [x * y for x, y in zip(w, v)],
    "safeDiv": lambda w, v: [0.0 if y == 0 else x / y for x, y in zip(w, v)],
}


def oracle_inputs(rng, n=1000):
    """Random vectors mixing negatives, exact zeros and large magnitudes."""
    for _ in range(n):
        dim = int(rng.integers(1, 12))
        w = rng.standard_normal(dim) * 10.0 ** rng.integers(-3, 4, size=dim)
        w[rng.random(dim) < 0.15] = 0.0
        w[rng.random(dim) < 0.05] = 1e6 * rng.standard_normal()
        yield w


def assert_close(got, want, tol=1e-12):
    got = np.asarray(got)
    want = np.asarray(want, dtype=float)
    assert got.shape == want.shape
    same_inf = np.isinf(want) & (got == want)
    finite = np.isfinite(want)
    assert np.all(same_inf | finite)
    err = np.abs(got[finite] - want[finite])
    scale = np.maximum(1.0, np.abs(want[finite]))
    assert np.all(err <= tol * scale), (got, want)


@pytest.mark.parametrize("op", UNARY_OPS)
def test_unary_operator_matches_scalar_oracle(op):
    rng = np.random.default_rng(100 + UNARY_OPS.index(op))
    tree = parse_program(f"{op}(ARG0)")
    for w in oracle_inputs(rng):
        z = np.zeros_like(w)
        assert_close(evaluate(tree, (w, z, z)), SCALAR_UNARY[op](w.tolist()))


@pytest.mark.parametrize("op", BINARY_OPS)
def test_binary_operator_matches_scalar_oracle(op):
    rng = np.random.default_rng(len(op))
    tree = parse_program(f"{op}(ARG0,ARG1)")
    for w in oracle_inputs(rng):
        v = rng.standard_normal(w.shape) * 10.0 ** rng.integers(-3, 4, size=w.shape)
        v[rng.random(w.shape) < 0.2] = 0.0
        assert_close(evaluate(tree, (w, v, np.zeros_like(w))), SCALAR_BINARY[op](w.tolist(), v.tolist()))


def test_rule_example():
    out = evaluate(parse_program(RULE), ([1.0, 0.0], [0.0, 1.0], [2.0, 2.0]))
    np.testing.assert_array_equal(out, [1.0, 3.0])


def test_safe_div_example():
    out = evaluate(parse_program("safeDiv(ARG0,ARG1)"), ([4.0, 5.0, 6.0], [2.0, 0.0, 3.0], [0.0, 0.0, 0.0]))
    np.testing.assert_array_equal(out, [2.0, 0.0, 2.0])


def test_roll_example():
    out = evaluate(parse_program("roll(ARG0)"), ([1.0, 2.0, 3.0], [0.0] * 3, [0.0] * 3))
    np.testing.assert_array_equal(out, [2.0, 3.0, 1.0])


def test_log1p_of_zero_vector():
    out = evaluate(parse_program("log1p(ARG0)"), ([0.0, 0.0], [0.0, 0.0], [0.0, 0.0]))
    np.testing.assert_array_equal(out, [0.0, 0.0])


def test_rint_half_even_and_trunc_mode():
    a = [1.5, -0.5, 2.3]
    want = [float(round(x)) for x in a]
    assert want == [2.0, 0.0, 2.0]
    np.testing.assert_array_equal(evaluate(parse_program("rint(ARG0)"), (a, a, a)), want)
    np.testing.assert_array_equal(evaluate(parse_program("rint(ARG0)"), (a, a, a), rint_mode="trunc"), [1.0, 0.0, 2.0])


def test_log1p_may_emit_minus_inf():
    out = evaluate(parse_program("log1p(ARG0)"), ([-2.0, 1.0], [0.0, 0.0], [0.0, 0.0]))
    assert out[0] == -math.inf
    assert out[1] == pytest.approx(math.log(1.5))


def test_evaluate_dimension_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        evaluate(parse_program(RULE), ([1.0], [1.0, 2.0], [1.0]))


def test_evaluate_batched_rows_match_single():
    rng = np.random.default_rng(3)
    args = rng.standard_normal((3, 5, 7))
    tree = parse_program("log1p(add(roll(norm(ARG0)),mul(ARG1,safeDiv(ARG2,rint(ARG0)))))")
    batch = evaluate(tree, args)
    for i in range(5):
        np.testing.assert_array_equal(batch[i], evaluate(tree, args[:, i]))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=10),
       st.lists(st.sampled_from([0.0, 1.0, -2.5, 1e-300]), min_size=1, max_size=10))
def test_safe_div_zero_divisor_is_finite(w, v):
    n = min(len(w), len(v))
    w, v = np.array(w[:n]), np.array(v[:n])
    out = evaluate(parse_program("safeDiv(ARG0,ARG1)"), (w, v, w))
    assert np.all(out[v == 0] == 0.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e12, 1e12), min_size=1, max_size=12))
def test_norm_range_and_peak(w):
    w = np.array(w)
    out = evaluate(parse_program("norm(ARG0)"), (w, w, w))
    assert np.all(np.abs(out) <= 1.0)
    if np.any(w != 0):
        peak = np.argmax(np.abs(w))
        assert abs(out[peak]) == 1.0
    else:
        assert np.all(out == 0.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=12))
def test_roll_is_a_cyclic_bijection(w):
    w = np.array(w)
    tree = Node("ARG0")
    for _ in range(len(w)):
        tree = Node("roll", (tree,))
    np.testing.assert_array_equal(evaluate(tree, (w, w, w)), w)
    once = evaluate(parse_program("roll(ARG0)"), (w, w, w))
    assert sorted(once.tolist()) == sorted(w.tolist())


def test_evaluate_is_repeatable():
    rng = np.random.default_rng(8)
    args = rng.standard_normal((3, 16))
    trees = ramped_half_and_half(rng, 50)
    for tree in trees:
        # assert_array_equal treats NaN == NaN
        np.testing.assert_array_equal(evaluate(tree, args), evaluate(tree, args))


# --- structure ----------------------------------------------------------------

def test_depth_and_size():
    assert depth(Node("ARG0")) == 0 and size(Node("ARG0")) == 1
    rule = parse_program(RULE)
    assert depth(rule) == 2 and size(rule) == 5
    assert depth(chain(10)) == 10 <= DEPTH_LIMIT
    assert depth(chain(11)) == 11 > DEPTH_LIMIT


def test_node_validates_arity():
    with pytest.raises(ValueError):
        Node("add", (Node("ARG0"),))
    with pytest.raises(ValueError):
        Node("const")


def test_operator_table():
    assert len(BINARY_OPS) == 4 and len(UNARY_OPS) == 10 and len(TERMINALS) == 3
    assert all(ARITY[o] == 2 for o in BINARY_OPS)
    assert all(ARITY[o] == 1 for o in UNARY_OPS)


def test_subtree_and_replace():
    rule = parse_program(RULE)
    assert [format_program(n) for n, _ in iter_nodes(rule)] == [
        RULE, "ARG2", "sub(ARG1,ARG0)", "ARG1", "ARG0"]
    sub, d = subtree_at(rule, 2)
    assert format_program(sub) == "sub(ARG1,ARG0)" and d == 1
    assert format_program(replace_at(rule, 4, Node("ARG2"))) == "add(ARG2,sub(ARG1,ARG2))"
    assert replace_at(rule, 0, Node("ARG1")) == Node("ARG1")


# --- text form ----------------------------------------------------------------

def test_parse_and_format_rule():
    tree = parse_program(RULE)
    assert tree == Node("add", (Node("ARG2"), Node("sub", (Node("ARG1"), Node("ARG0")))))
    assert format_program(tree) == RULE


def test_parse_is_case_and_space_tolerant():
    assert parse_program("ADD( arg2 , SUB(ARG1,ARG0) )") == parse_program(RULE)
    assert format_program(parse_program("SAFEDIV(arg0, Log1P(arg1))")) == "safeDiv(ARG0,log1p(ARG1))"
    assert parse_program("saveDiv(ARG0,ARG1)") == parse_program("safeDiv(ARG0,ARG1)")


@pytest.mark.parametrize(
    "text, offset, message",
    [
        ("add(ARG0)", 8, "argument"),
        ("add(ARG0,ARG1,ARG2)", 13, "argument"),
        ("foo(ARG0)", 0, "unknown"),
        ("add(ARG0,ARG1", 13, "expected"),
        ("add(ARG0,ARG1))", 14, "trailing"),
        ("ARG0(ARG1)", 4, "terminal"),
        ("neg(ARG0 ARG1)", 9, "expected"),
        ("", 0, "expected"),
        ("add(ARG0;ARG1)", 8, "character"),
    ],
)
def test_parse_errors_report_offset(text, offset, message):
    with pytest.raises(ProgramSyntaxError, match=message) as info:
        parse_program(text)
    assert info.value.offset == offset


def trees(max_leaves=30):
    leaves = st.sampled_from(TERMINALS).map(Node)
    return st.recursive(
        leaves,
        lambda kids: st.one_of(
            st.tuples(st.sampled_from(UNARY_OPS), kids).map(lambda t: Node(t[0], (t[1],))),
            st.tuples(st.sampled_from(BINARY_OPS), kids, kids).map(lambda t: Node(t[0], (t[1], t[2]))),
        ),
        max_leaves=max_leaves,
    )


@settings(max_examples=300, deadline=None)
@given(trees())
def test_parse_format_round_trip(tree):
    text = format_program(tree)
    assert parse_program(text) == tree
    assert format_program(parse_program(text.upper())) == text


def test_round_trip_random_trees():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        tree = random_tree(rng, 0, 6, "grow" if rng.random() < 0.5 else "full")
        assert parse_program(format_program(tree)) == tree


def test_program_file_io(tmp_path):
    path = tmp_path / "progs.txt"
    write_program_file(path, [parse_program(RULE), Node("ARG2")], header="best programs\nrun 3")
    with open(path, "a") as fh:
        fh.write("add(ARG0)\n\n")
    entries = read_program_file(path)
    assert [n for n, _ in entries] == [3, 4, 5]
    assert entries[0][1] == parse_program(RULE)
    assert isinstance(entries[2][1], ProgramSyntaxError)


def test_to_dot():
    dot = to_dot(parse_program(RULE))
    assert dot.count("[label=") == 5
    assert dot.count("->") == 4
    assert 'n0 [label="add"]' in dot


# --- random generation ----------------------------------------------------------

def test_full_depth_one():
    rng = np.random.default_rng(0)
    for _ in range(50):
        tree = random_tree(rng, 1, 1, "full")
        assert tree.op in ARITY and ARITY[tree.op] > 0
        assert all(c.op in TERMINALS for c in tree.children)
        assert depth(tree) == 1


def test_full_leaves_all_at_target_depth():
    rng = np.random.default_rng(1)
    for _ in range(200):
        tree = random_tree(rng, 2, 5, "full")
        leaf_depths = {d for n, d in iter_nodes(tree) if not n.children}
        assert len(leaf_depths) == 1 and leaf_depths == {depth(tree)}


def test_grow_zero_depth_is_terminal():
    rng = np.random.default_rng(2)
    assert all(random_tree(rng, 0, 0, "grow").op in TERMINALS for _ in range(20))


def test_random_tree_statistical_smoke():
    rng = np.random.default_rng(12345)
    seen = set()
    for i in range(10_000):
        tree = random_tree(rng, 0, 4, "grow" if i % 2 else "full")
        assert depth(tree) <= 4
        seen.update(n.op for n, _ in iter_nodes(tree))
    assert seen == set(ALL_KINDS)


def test_random_tree_rejects_bad_range():
    with pytest.raises(ValueError):
        random_tree(np.random.default_rng(0), 3, 2, "grow")
    with pytest.raises(ValueError):
        random_tree(np.random.default_rng(0), 0, 11, "grow")


# --- equivalence ----------------------------------------------------------------

def test_equivalence_commutativity_and_asymmetry():
    rng = np.random.default_rng(0)
    assert semantically_equivalent(parse_program("add(ARG0,ARG1)"), parse_program("add(ARG1,ARG0)"), 200, 1e-9, rng)
    assert not semantically_equivalent(parse_program("sub(ARG0,ARG1)"), parse_program("sub(ARG1,ARG0)"), 200, 1e-9, rng)


def test_equivalence_compares_nonfinite_positions():
    a = parse_program("log1p(neg(abs(norm(ARG0))))")
    b = parse_program("log1p(neg(abs(norm(ARG1))))")
    assert semantically_equivalent(a, a)
    assert not semantically_equivalent(a, b)
    assert not semantically_equivalent(a, parse_program("neg(ARG0)"))
