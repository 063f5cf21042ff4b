import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbar.errors import DataError
from nbar.trees import (
    BinaryTreeData,
    collect_pairs,
    full_tree_size,
    generation_size,
    index_to_path,
    path_to_index,
    read_tree_csv,
)

paths = st.text(alphabet="01", min_size=0, max_size=20)


def test_full_tree_size_values():
    assert full_tree_size(0) == 1
    assert full_tree_size(9) == 1023
    assert full_tree_size(14) == 32767
    with pytest.raises(ValueError):
        full_tree_size(-1)


def test_generation_size():
    assert [generation_size(m) for m in range(4)] == [1, 2, 4, 8]


@given(paths)
def test_path_index_round_trip(path):
    assert index_to_path(path_to_index(path)) == path


@given(paths.filter(lambda p: len(p) < 20))
def test_children_are_heap_children(path):
    i = path_to_index(path)
    assert path_to_index(path + "0") == 2 * i + 1
    assert path_to_index(path + "1") == 2 * i + 2


def test_known_indices():
    assert path_to_index("") == 0
    assert path_to_index("0") == 1
    assert path_to_index("1") == 2
    assert path_to_index("01") == 4


def _full_random_tree(depth, seed=0, storage="auto"):
    rng = np.random.default_rng(seed)
    dense = rng.normal(size=full_tree_size(depth))
    return BinaryTreeData.from_dense(dense, depth), dense


def test_collect_pairs_single_pair():
    tree = BinaryTreeData.from_mapping({"": 0.0, "0": 2.0, "1": -1.0})
    assert collect_pairs(tree, 0, 0).tolist() == [[0.0, 2.0]]
    assert collect_pairs(tree, 1, 0).tolist() == [[0.0, -1.0]]


def test_collect_pairs_missing_child():
    tree = BinaryTreeData.from_mapping({"": 0.0, "1": -1.0}, depth=1)
    assert collect_pairs(tree, 0, 0).size == 0
    assert collect_pairs(tree, 1, 0).shape == (1, 2)


def test_full_tree_pair_counts():
    tree, _ = _full_random_tree(3)
    # parents over T_2 for a depth-3 tree
    assert collect_pairs(tree, 0, 2).shape == (7, 2)
    assert collect_pairs(tree, 1, 2).shape == (7, 2)
    assert tree.pair_counts() == (7, 7)


def test_pairs_breadth_first_order_and_values():
    tree, dense = _full_random_tree(3)
    parents, children = tree.pairs(0, 2)
    assert np.array_equal(parents, dense[:7])
    assert np.array_equal(children, dense[2 * np.arange(7) + 1])


@given(st.integers(min_value=7, max_value=14))
@settings(max_examples=20, deadline=None)
def test_removing_leaf_removes_one_pair(leaf_index):
    depth = 3
    tree, dense = _full_random_tree(depth)
    dense2 = dense.copy()
    dense2[leaf_index] = np.nan
    pruned = BinaryTreeData.from_dense(dense2, depth)
    n0 = collect_pairs(pruned, 0, depth - 1).shape[0]
    n1 = collect_pairs(pruned, 1, depth - 1).shape[0]
    if leaf_index % 2 == 1:  # a type-0 child
        assert (n0, n1) == (6, 7)
    else:
        assert (n0, n1) == (7, 6)


def test_values_up_to_counts():
    tree, _ = _full_random_tree(4)
    for m in range(5):
        assert tree.values_up_to(m).size == full_tree_size(m)
    assert tree.is_full()


def test_generation_values_and_pairs():
    tree = BinaryTreeData.from_mapping(
        {"": 1.0, "0": 2.0, "1": 3.0, "00": 4.0, "11": 5.0})
    idx, vals = tree.generation_values(1)
    assert vals.tolist() == [2.0, 3.0]
    parents, children = tree.generation_pairs(0, 1)
    assert parents.tolist() == [2.0] and children.tolist() == [4.0]
    parents, children = tree.generation_pairs(1, 1)
    assert parents.tolist() == [3.0] and children.tolist() == [5.0]


def test_twin_pairs():
    tree = BinaryTreeData.from_mapping(
        {"": 1.0, "0": 2.0, "1": 3.0, "00": 4.0, "01": 5.0, "10": 6.0})
    parents, c0, c1 = tree.twin_pairs(1)
    # only the root has both children; node "0" misses child "01"? no: "0"->"00","01" both there
    assert parents.tolist() == [1.0, 2.0]
    assert c0.tolist() == [2.0, 4.0]
    assert c1.tolist() == [3.0, 5.0]


def test_sparse_dense_backends_agree():
    rng = np.random.default_rng(5)
    mapping = {}
    for m in range(5):
        for idx in range(2 ** m):
            if rng.random() > 0.3:
                mapping[format(idx, f"0{m}b") if m else ""] = rng.normal()
    dense = BinaryTreeData.from_mapping(mapping, depth=4, storage="dense")
    sparse = BinaryTreeData.from_mapping(mapping, depth=4, storage="sparse")
    assert dense.n_observed == sparse.n_observed
    for m in range(4):
        assert np.array_equal(dense.values_up_to(m), sparse.values_up_to(m))
        for iota in (0, 1):
            pd_, cd = dense.pairs(iota, 3)
            ps, cs = sparse.pairs(iota, 3)
            assert np.array_equal(pd_, ps) and np.array_equal(cd, cs)
            gd = dense.generation_pairs(iota, m)
            gs = sparse.generation_pairs(iota, m)
            assert np.array_equal(gd[0], gs[0]) and np.array_equal(gd[1], gs[1])
    td = dense.twin_pairs(3)
    ts = sparse.twin_pairs(3)
    for a, b in zip(td, ts):
        assert np.array_equal(a, b)


def test_duplicate_node_rejected():
    with pytest.raises(DataError, match="duplicate"):
        BinaryTreeData(1, np.array([0, 1, 1]), np.array([1.0, 2.0, 3.0]))


def test_malformed_path_rejected():
    with pytest.raises(DataError, match="malformed"):
        BinaryTreeData.from_mapping({"0x1": 1.0})


def test_depth_limit_enforced():
    with pytest.raises(DataError, match="depth limit"):
        BinaryTreeData.from_mapping({"0" * 31: 1.0})


def test_csv_round_trip(tmp_path):
    tree = BinaryTreeData.from_mapping(
        {"": 0.5, "0": -1.25, "11": 3.75e-3}, depth=2)
    path = tmp_path / "tree.csv"
    tree.to_csv(path)
    text = path.read_text()
    assert text.startswith("node,value\n")
    back = read_tree_csv(path)
    assert back.depth == 2
    assert dict(back.items()) == dict(tree.items())


def test_csv_errors_carry_line_numbers(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("node,value\n0,1.0\n0x,2.0\n")
    with pytest.raises(DataError, match=":3"):
        read_tree_csv(bad)
    dup = tmp_path / "dup.csv"
    dup.write_text("node,value\n0,1.0\n0,2.0\n")
    with pytest.raises(DataError, match="duplicate"):
        read_tree_csv(dup)
    header = tmp_path / "head.csv"
    header.write_text("a,b\n")
    with pytest.raises(DataError, match="header"):
        read_tree_csv(header)
