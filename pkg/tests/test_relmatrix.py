import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sncm.relmatrix import (HierarchyError, HierarchyNode, build_relationship_matrix,
                            load_hierarchy, parse_hierarchy_text, read_R_csv, simulation_R,
                            simulation_tree, validate_relationship_matrix, write_R_csv)

WEAK = math.exp(1 / 3) / 20
HIGH = math.exp(2 / 3) / 5
MODERATE = math.exp(2 / 3) / 10
VERY_HIGH = math.exp(1) / 5


@pytest.fixture(scope="module")
def R_sim():
    return simulation_R()


def test_simulation_matrix_shape_and_values(R_sim):
    assert R_sim.shape == (300, 300)
    vals = set(np.round(np.unique(R_sim), 12))
    assert vals == set(np.round([0.0, WEAK, HIGH, MODERATE, VERY_HIGH], 12))


def test_simulation_matrix_documented_strengths(R_sim):
    # indices are zero-based: "predictors 1-5" are 0..4
    assert R_sim[0, 4] == pytest.approx(WEAK) and WEAK == pytest.approx(0.07, abs=0.005)
    assert R_sim[5, 6] == pytest.approx(HIGH) and HIGH == pytest.approx(0.39, abs=0.005)
    assert R_sim[14, 15] == pytest.approx(MODERATE) and MODERATE == pytest.approx(0.19, abs=0.005)
    assert R_sim[15, 16] == pytest.approx(VERY_HIGH) and VERY_HIGH == pytest.approx(0.54, abs=0.005)
    assert R_sim[15, 19] == pytest.approx(VERY_HIGH)
    assert R_sim[0, 20] == 0.0 and R_sim[19, 20] == 0.0


def test_simulation_matrix_is_block_diagonal(R_sim):
    blocks = np.arange(300) // 20
    off = blocks[:, None] != blocks[None, :]
    assert np.all(R_sim[off] == 0.0)
    for b in range(15):
        sl = slice(20 * b, 20 * b + 20)
        np.testing.assert_array_equal(R_sim[sl, sl], R_sim[:20, :20])


def test_duplicate_membership_is_structural_error():
    tree = HierarchyNode("root", [HierarchyNode("a", members=[0, 1]),
                                  HierarchyNode("b", members=[1, 2])])
    with pytest.raises(HierarchyError):
        build_relationship_matrix(tree)


def test_noncontiguous_indices_and_empty_groups_rejected():
    with pytest.raises(HierarchyError):
        build_relationship_matrix(HierarchyNode("root", [HierarchyNode("a", members=[0, 2])]))
    with pytest.raises(HierarchyError):
        build_relationship_matrix(HierarchyNode("root", [HierarchyNode("a", members=[0, 1]),
                                                         HierarchyNode("empty")]))


# ---------------------------------------------------------------------------
# random trees


@st.composite
def trees(draw):
    """Random hierarchy over 0..p-1 with leaves at varying depths."""
    p = draw(st.integers(2, 14))
    perm = draw(st.permutations(range(p)))
    counter = iter(perm)
    remaining = [p]

    def node(name, depth):
        n = HierarchyNode(name)
        k_direct = draw(st.integers(0, min(remaining[0], 3))) if depth > 0 else 0
        for _ in range(k_direct):
            n.members.append(next(counter))
        remaining[0] -= k_direct
        if depth < 3:
            n_children = draw(st.integers(0, 2 if remaining[0] else 0))
            for c in range(n_children):
                if remaining[0] == 0:
                    break
                n.children.append(node(f"{name}.{c}", depth + 1))
        if not n.members and not n.children:
            n.members.append(next(counter))
            remaining[0] -= 1
        return n

    root = HierarchyNode("root")
    while remaining[0]:
        root.children.append(node(f"g{len(root.children)}", 1))
    return root


@given(trees())
@settings(max_examples=80, deadline=None)
def test_built_matrix_satisfies_invariants(tree):
    R = build_relationship_matrix(tree)
    p = R.shape[0]
    assert R.shape == (p, p)
    np.testing.assert_array_equal(R, R.T)
    assert np.all(np.diag(R) == 0.0)
    assert np.all(R >= 0.0)
    validate_relationship_matrix(R)


def _relabel(node, perm):
    return HierarchyNode(node.name, [_relabel(c, perm) for c in node.children],
                         [int(perm[m]) for m in node.members])


@given(trees(), st.randoms(use_true_random=False))
@settings(max_examples=60, deadline=None)
def test_relabeling_is_equivariant(tree, rnd):
    R = build_relationship_matrix(tree)
    p = R.shape[0]
    perm = list(range(p))
    rnd.shuffle(perm)
    R2 = build_relationship_matrix(_relabel(tree, perm))
    perm = np.array(perm)
    np.testing.assert_array_equal(R2[np.ix_(perm, perm)], R)


# ---------------------------------------------------------------------------
# file formats


def test_text_hierarchy_matches_programmatic_tree(tmp_path):
    text = """
# block 1 of the simulation design, zero-based
block1: 0 1 2 3 4
  a: 5 6 7 8 9
  b: 10, 11, 12, 13, 14
    b1: 15 16 17 18 19
block2: 20 21
"""
    path = tmp_path / "tree.txt"
    path.write_text(text)
    R = build_relationship_matrix(load_hierarchy(path))
    np.testing.assert_allclose(R[:20, :20], simulation_R(1)[:20, :20], rtol=0, atol=0)
    assert R[20, 21] == pytest.approx(math.exp(1 / 3) / 2)


def test_json_hierarchy_round_trip(tmp_path):
    tree = simulation_tree(2)
    path = tmp_path / "tree.json"
    path.write_text(json.dumps(tree.to_dict()))
    np.testing.assert_array_equal(build_relationship_matrix(load_hierarchy(path)),
                                  simulation_R(2))


def test_bad_member_list_is_reported():
    with pytest.raises(HierarchyError, match="line 1"):
        parse_hierarchy_text("grp: 1 x 2")


def test_R_csv_round_trip_is_exact(tmp_path, R_sim):
    path = tmp_path / "R.csv"
    names = [f"v{j}" for j in range(300)]
    write_R_csv(path, R_sim, names)
    R2, names2 = read_R_csv(path)
    np.testing.assert_array_equal(R2, R_sim)
    assert names2 == names


@pytest.mark.parametrize("bad", [
    np.array([[0.0, 1.0], [0.5, 0.0]]),
    np.array([[1.0, 0.2], [0.2, 0.0]]),
    np.array([[0.0, -0.2], [-0.2, 0.0]]),
    np.array([[0.0, np.nan], [np.nan, 0.0]]),
    np.zeros((2, 3)),
])
def test_validation_rejects_bad_matrices(bad):
    with pytest.raises(ValueError):
        validate_relationship_matrix(bad)
