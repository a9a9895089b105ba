import numpy as np
import pytest

from hifi.arch import (
    VGG16_GROUPS,
    ArchConfig,
    BackboneSpec,
    HierarchySpec,
    build_network,
    forward,
    preset,
    receptive_field,
)
from hifi.autodiff import Graph
from hifi.errors import ArgumentError, GraphError

from oracles import conv2d_loops, maxpool_loops


def net_for(name, groups=None, **kw):
    bb = BackboneSpec(groups=groups) if groups else BackboneSpec()
    return build_network(ArchConfig(backbone=bb, hierarchy=preset(name, len(bb.groups)), **kw), seed=0)


def count_ops(net, op):
    return sum(1 for n in net.graph.nodes if n.op == op)


# ---------------------------------------------------------------- structure


def test_backbone_counts():
    net = net_for("hifi1")
    assert count_ops(net, "pool") == 4
    assert sum(1 for n in net.graph.nodes if n.op == "conv" and n.name.startswith("conv")) == 10
    assert [len(g) for g in net.groups] == [2] * 5


def test_group_resolutions():
    net = net_for("hifi1")
    vals = net.graph.run({"image": np.zeros((1, 1, 48, 48))})
    for g, layers in enumerate(net.groups, start=1):
        assert vals[layers[-1]].shape[2:] == (48 // 2 ** (g - 1),) * 2


@pytest.mark.parametrize("name,sos,levels", [
    ("hifi1", 4, [5, 4]),
    ("hifi2", 7, [5, 4, 3]),
    ("fsds", 5, [5]),
    ("kfuse-1", 5, [5]),
    ("direct-fuse", 1, [5, 1]),
    ("kfuse-5", 1, [5, 1]),
    ("kfuse-3", 3, [5, 3]),
    ("srn", 5, [5, 5]),
])
def test_side_output_counts(name, sos, levels):
    net = net_for(name)
    assert len(net.side_outputs) == sos
    assert [len(lv) for lv in net.levels] == levels


def test_hifi1_matches_explicit_spec():
    a = net_for("hifi1")
    b = build_network(ArchConfig(hierarchy=HierarchySpec(fan_in=2, depth=1)), seed=0)
    assert a.structure_hash() == b.structure_hash()
    assert net_for("direct-fuse").structure_hash() == net_for("kfuse-5").structure_hash()
    assert net_for("fsds").structure_hash() == net_for("kfuse-1").structure_hash()


def test_structure_hash_is_pure_and_discriminating():
    assert net_for("hifi2").structure_hash() == net_for("hifi2").structure_hash()
    assert net_for("hifi1").structure_hash() != net_for("hifi2").structure_hash()
    assert net_for("hifi1").structure_hash() != net_for("hifi1", branch_channels=8).structure_hash()


def test_level_node_counts_follow_recurrence():
    for k in range(2, 6):
        for depth in range(1, 7 - k):
            h = HierarchySpec(fan_in=k, depth=depth)
            try:
                h.check(5)
            except ArgumentError:
                continue
            net = build_network(ArchConfig(hierarchy=h), seed=0)
            sizes = [len(lv) for lv in net.levels]
            assert all(b == a - k + 1 for a, b in zip(sizes, sizes[1:]))
            assert len(net.side_outputs) == sum(sizes[1:])


@pytest.mark.parametrize("k,depth", [(6, 1), (3, 3), (2, 5)])
def test_hierarchy_bounds(k, depth):
    with pytest.raises(ArgumentError):
        HierarchySpec(fan_in=k, depth=depth).check(5)


def test_k1_forces_level0_sideoutputs():
    assert HierarchySpec(fan_in=1, depth=0).level0_sideoutputs


def test_bad_specs():
    with pytest.raises(ArgumentError):
        BackboneSpec(groups=((2, 16),))
    with pytest.raises(ArgumentError):
        BackboneSpec(kernel=4)
    with pytest.raises(ArgumentError):
        preset("hifi9")
    with pytest.raises(ArgumentError):
        preset("kfuse-6")


def test_side_output_metadata():
    net = net_for("hifi2")
    for so in net.side_outputs:
        assert so.class_count == so.deepest_group
        assert so.receptive_field == net.ladder[so.deepest_group - 1]
        n_ch = net.graph.params[f"{so.name}.w"].data.shape[0]
        assert n_ch == so.class_count + 1
    # level-1 SO fed by groups 2 and 3 -> 4 channels
    so = next(s for s in net.side_outputs if s.level == 1 and s.deepest_group == 3)
    assert net.graph.params[f"{so.name}.w"].data.shape[0] == 4


def test_side_outputs_upsample_to_input_exactly():
    net = net_for("hifi2")
    for size in (48, 50, 37):
        sides, fused = forward(net, np.random.default_rng(size).random((size, size + 3)))
        for p in sides + [fused]:
            assert p.shape[2:] == (size, size + 3)
            assert np.allclose(p.data.sum(axis=1), 1.0, atol=1e-9)


def test_srn_supervision_stays_per_group():
    net = net_for("srn")
    assert [so.class_count for so in net.side_outputs] == [1, 2, 3, 4, 5]


# ---------------------------------------------------------------- receptive fields


def _chain(*ops):
    g = Graph()
    x = g.input("x")
    h = x
    for op in ops:
        if op == "conv":
            w = g.param(f"w{len(g.nodes)}", np.zeros((1, 1, 3, 3)))
            h = g.add("conv", [h, w], kernel=3, stride=1, pad=1)
        else:
            h = g.add("pool", [h])
    return g, h


def test_rf_two_convs():
    g, h = _chain("conv", "conv")
    assert receptive_field(g, h) == 5


def test_rf_conv_pool_conv():
    g, h = _chain("conv", "pool", "conv")
    assert receptive_field(g, h) == 8


def test_rf_vgg_ladder():
    net = net_for("hifi1", groups=VGG16_GROUPS, branch_channels=2)
    assert net.ladder == (5, 14, 40, 92, 196)
    assert [so.receptive_field for so in net.side_outputs] == [14, 40, 92, 196]


def test_rf_mini_ladder():
    assert net_for("fsds").ladder == (5, 14, 32, 68, 140)


def test_rf_non_decreasing_with_level_and_group():
    net = net_for("hifi2")
    by_level = {}
    for so in net.side_outputs:
        by_level.setdefault(so.level, []).append(so.receptive_field)
    for rs in by_level.values():
        assert rs == sorted(rs)
    assert min(by_level[2]) >= min(by_level[1])


def test_rf_unreachable_node():
    g = Graph()
    g.input("x")
    p = g.param("w", np.zeros(3))
    with pytest.raises(GraphError):
        receptive_field(g, p)
    with pytest.raises(GraphError):
        receptive_field(g, 99)


# ---------------------------------------------------------------- numerics


def test_backbone_matches_manual_composition():
    net = build_network(ArchConfig(backbone=BackboneSpec(groups=((2, 2), (1, 3))),
                                   hierarchy=preset("hifi1", 2), branch_channels=2), seed=1)
    x = np.random.default_rng(0).random((1, 1, 8, 8))
    vals = net.graph.run({"image": x})
    p = {k: t.data for k, t in net.graph.params.items()}
    h = np.maximum(conv2d_loops(x, p["conv1_1.w"], p["conv1_1.b"], pad=1), 0)
    h = np.maximum(conv2d_loops(h, p["conv1_2.w"], p["conv1_2.b"], pad=1), 0)
    assert np.abs(vals[net.groups[0][-1]].data - h).max() < 1e-12
    h = maxpool_loops(h)
    h = np.maximum(conv2d_loops(h, p["conv2_1.w"], p["conv2_1.b"], pad=1), 0)
    assert np.abs(vals[net.groups[1][-1]].data - h).max() < 1e-12


def test_level0_single_branch_ablation():
    net = build_network(ArchConfig(backbone=BackboneSpec(groups=((3, 4), (2, 4))),
                                   hierarchy=preset("hifi1", 2), branch_channels=3), seed=2)
    x = np.random.default_rng(1).random((1, 1, 12, 12))
    for name in ("branch1_1", "branch1_3"):
        net.graph.params[f"{name}.w"].data[...] = 0
        net.graph.params[f"{name}.b"].data[...] = 0
    vals = net.graph.run({"image": x})
    level0 = vals[net.levels[0][0].node].data
    only = vals[net.graph.find("branch1_2")].data
    assert np.array_equal(level0, only)


def test_forward_is_deterministic_per_seed():
    img = np.random.default_rng(3).random((40, 40))
    a = forward(net_for("hifi1"), img)[1].data
    b = forward(net_for("hifi1"), img)[1].data
    assert a.tobytes() == b.tobytes()
    c = forward(build_network(ArchConfig(), seed=1), img)[1].data
    assert not np.array_equal(a, c)
