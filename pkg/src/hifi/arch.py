"""Backbone + hierarchical integration graph builder and receptive-field bookkeeping."""

import re
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Graph
from .errors import ArgumentError, GraphError

VGG16_GROUPS = ((2, 64), (2, 128), (3, 256), (3, 512), (3, 512))
MINI_GROUPS = ((2, 16), (2, 32), (2, 32), (2, 32), (2, 32))


@dataclass(frozen=True)
class BackboneSpec:
    groups: tuple = MINI_GROUPS  # (conv_count, channels) per group
    kernel: int = 3
    in_channels: int = 1

    def __post_init__(self):
        if len(self.groups) < 2:
            raise ArgumentError(f"backbone needs >= 2 groups, got {len(self.groups)}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ArgumentError(f"backbone kernel must be odd, got {self.kernel}")
        for convs, ch in self.groups:
            if convs < 1 or ch < 1:
                raise ArgumentError(f"invalid group (convs={convs}, channels={ch})")


@dataclass(frozen=True)
class HierarchySpec:
    fan_in: int = 2  # K: consecutive feature levels fused per step
    depth: int = 1  # L: integration levels above the raw group features
    level0_sideoutputs: bool = False
    topology: str = "hifi"  # or "srn" (deep-to-shallow residual chain)

    def __post_init__(self):
        if self.fan_in < 1 or self.depth < 0:
            raise ArgumentError(f"need fan_in >= 1 and depth >= 0, got K={self.fan_in}, L={self.depth}")
        if self.fan_in == 1 and not self.level0_sideoutputs:
            object.__setattr__(self, "level0_sideoutputs", True)
        if self.topology not in ("hifi", "srn"):
            raise ArgumentError(f"unknown topology {self.topology!r}")

    def check(self, n_groups):
        if self.topology == "srn":
            return
        count = n_groups
        for level in range(1, self.depth + 1):
            if self.fan_in > count:
                raise ArgumentError(
                    f"K={self.fan_in}, L={self.depth} leaves no node at level {level} "
                    f"(level {level - 1} has {count} nodes)")
            count = count - self.fan_in + 1
        if self.depth == 0 and not self.level0_sideoutputs:
            raise ArgumentError("depth 0 without level-0 side-outputs has nothing to supervise")


def preset(name, n_groups=5):
    """Hierarchy preset by name: fsds, srn, hifi1, hifi2, direct-fuse, kfuse-<K>."""
    if name == "fsds":
        return HierarchySpec(fan_in=1, depth=0, level0_sideoutputs=True)
    if name == "srn":
        return HierarchySpec(fan_in=2, depth=1, topology="srn")
    if name == "hifi1":
        return HierarchySpec(fan_in=2, depth=1)
    if name == "hifi2":
        return HierarchySpec(fan_in=2, depth=2)
    if name == "direct-fuse":
        return HierarchySpec(fan_in=n_groups, depth=1)
    m = re.fullmatch(r"kfuse-(\d+)", name)
    if m:
        k = int(m.group(1))
        if not 1 <= k <= n_groups:
            raise ArgumentError(f"{name}: K must be in 1..{n_groups}")
        if k == 1:
            return HierarchySpec(fan_in=1, depth=0, level0_sideoutputs=True)
        return HierarchySpec(fan_in=k, depth=1)
    raise ArgumentError(f"unknown architecture preset {name!r}")


PRESET_NAMES = ("fsds", "srn", "hifi1", "hifi2", "direct-fuse", "kfuse-<K>")


@dataclass(frozen=True)
class FeatureNode:
    """An integration-tree node: graph id, covered groups [lo, hi] (1-based), and stride."""

    node: int
    lo: int
    hi: int
    stride: int
    level: int
    scale_group: int = 0  # class index used for supervision; defaults to hi

    @property
    def supervision_group(self):
        return self.scale_group or self.hi


@dataclass(frozen=True)
class SideOutputNode:
    node: int  # softmax probabilities at native resolution
    upsampled: int  # same probabilities at input resolution
    deepest_group: int
    receptive_field: int
    class_count: int
    output_stride: int
    level: int
    name: str


class _Init:
    def __init__(self, seed):
        self.rng = np.random.default_rng(seed)

    def conv(self, out_ch, in_ch, k):
        fan_in = in_ch * k * k
        return self.rng.standard_normal((out_ch, in_ch, k, k)) * np.sqrt(2.0 / fan_in)


def _conv(graph, init, x, name, in_ch, out_ch, k, bias=True):
    w = graph.param(f"{name}.w", init.conv(out_ch, in_ch, k))
    inputs = [x, w]
    if bias:
        inputs.append(graph.param(f"{name}.b", np.zeros(out_ch)))
    return graph.add("conv", inputs, name=name, kernel=k, stride=1, pad=k // 2)


def build_backbone(graph, spec, x, init):
    """Conv(+ReLU) groups separated by stride-2 max-pools.

    Returns one list of ReLU node ids per group (every conv layer of the group).
    """
    groups = []
    ch = spec.in_channels
    h = x
    for g, (convs, out_ch) in enumerate(spec.groups, start=1):
        if g > 1:
            h = graph.add("pool", [h], name=f"pool{g - 1}")
        layers = []
        for i in range(1, convs + 1):
            c = _conv(graph, init, h, f"conv{g}_{i}", ch, out_ch, spec.kernel)
            h = graph.add("relu", [c], name=f"relu{g}_{i}")
            ch = out_ch
            layers.append(h)
        groups.append(layers)
    return groups


def branch_level0(graph, groups, backbone, init, channels=16, bias=True):
    """(1x1) branch from every conv layer of a group, summed into one feature per group."""
    level0 = []
    for g, layers in enumerate(groups, start=1):
        in_ch = backbone.groups[g - 1][1]
        branches = [_conv(graph, init, layer, f"branch{g}_{i}", in_ch, channels, 1, bias)
                    for i, layer in enumerate(layers, start=1)]
        node = graph.add("sum", branches, name=f"level0_{g}")
        level0.append(FeatureNode(node, g, g, 2 ** (g - 1), 0))
    return level0


def _integrate(graph, init, members, name, channels, bias, level):
    base = members[0]
    terms = []
    for j, mem in enumerate(members):
        a = _conv(graph, init, mem.node, f"{name}.adapt{j}", channels, channels, 1, bias)
        if mem.stride != base.stride:
            a = graph.add("upsample", [a, base.node], name=f"{name}.up{j}",
                          factor=mem.stride // base.stride)
        terms.append(a)
    node = graph.add("sum", terms, name=name)
    return FeatureNode(node, min(m.lo for m in members), max(m.hi for m in members),
                       base.stride, level)


def build_hierarchy(graph, level0, spec, init, channels=16, bias=True):
    """Recursive K-way integration of neighbouring levels.

    Level l node i sums the adapted level l-1 nodes i..i+K-1, deeper ones
    bilinearly upsampled to the shallowest member's resolution.
    """
    spec.check(len(level0))
    if spec.topology == "srn":
        return [level0, _build_srn(graph, level0, init, channels, bias)]
    levels = [list(level0)]
    for level in range(1, spec.depth + 1):
        prev = levels[-1]
        cur = []
        for i in range(len(prev) - spec.fan_in + 1):
            cur.append(_integrate(graph, init, prev[i:i + spec.fan_in], f"L{level}_{i + 1}",
                                  channels, bias, level))
        levels.append(cur)
    return levels


def _build_srn(graph, level0, init, channels, bias):
    # deep-to-shallow chain: R_B = F_B, R_i = F_i + up(R_{i+1}); supervision stays at group i
    chain = [None] * len(level0)
    deeper = None
    for i in range(len(level0) - 1, -1, -1):
        f = level0[i]
        members = [f] if deeper is None else [f, deeper]
        node = _integrate(graph, init, members, f"srn_{i + 1}", channels, bias, 1)
        chain[i] = FeatureNode(node.node, node.lo, node.hi, node.stride, 1, scale_group=f.hi)
        deeper = chain[i]
    return chain


def supervised_nodes(levels, spec):
    nodes = []
    if spec.level0_sideoutputs:
        nodes.extend(levels[0])
    for lv in levels[1:]:
        nodes.extend(lv)
    return nodes


def attach_side_outputs(graph, nodes, x, init, channels=16, bias=True):
    """(1x1) conv to K^m+1 channels + channel softmax on each supervised node."""
    sos = []
    for idx, fn in enumerate(nodes, start=1):
        m = fn.supervision_group
        name = f"so{idx}"
        logits = _conv(graph, init, fn.node, name, channels, m + 1, 1, bias)
        prob = graph.add("softmax", [logits], name=f"{name}.prob")
        up = graph.add("upsample", [prob, x], name=f"{name}.up", factor=fn.stride)
        sos.append(SideOutputNode(prob, up, fn.hi, receptive_field(graph, prob), m, fn.stride,
                                  fn.level, name))
    return sos


def receptive_field(graph, node):
    """Receptive field in input pixels via r <- r + (k-1)*j, j <- j*s; sums take the max."""
    memo = {}

    def rf(i):
        if i in memo:
            return memo[i]
        n = graph.nodes[i]
        if n.op == "input":
            res = (1, 1.0)
        elif n.op == "param":
            res = None
        elif n.op == "conv":
            r = rf(n.inputs[0])
            res = None if r is None else (r[0] + (n.attr("kernel") - 1) * r[1], r[1] * n.attr("stride", 1))
        elif n.op == "pool":
            r = rf(n.inputs[0])
            res = None if r is None else (r[0] + r[1], r[1] * 2)
        elif n.op == "upsample":
            r = rf(n.inputs[0])
            res = None if r is None else (r[0], r[1] / n.attr("factor"))
        elif n.op in ("sum", "fuse"):
            rs = [r for r in (rf(j) for j in n.inputs) if r is not None]
            res = (max(r[0] for r in rs), min(r[1] for r in rs)) if rs else None
        else:
            res = rf(n.inputs[0]) if n.inputs else None
        memo[i] = res
        return res

    if not 0 <= node < len(graph.nodes):
        raise GraphError(f"node {node} not in graph")
    res = rf(node)
    if res is None:
        raise GraphError(f"node {node} ({graph.nodes[node].name}) is not reachable from the input")
    return int(res[0])


@dataclass(frozen=True)
class ArchConfig:
    backbone: BackboneSpec = field(default_factory=BackboneSpec)
    hierarchy: HierarchySpec = field(default_factory=HierarchySpec)
    branch_channels: int = 16
    bias: bool = True
    fuse_init: float = 1.0


@dataclass
class Network:
    config: ArchConfig
    graph: Graph
    input: int
    groups: list
    levels: list
    side_outputs: list
    fused: int
    fuse_logits: int

    @property
    def ladder(self):
        """Receptive fields of the backbone groups; class m covers scales in (r_{m-1}, r_m]."""
        rs = sorted({receptive_field(self.graph, layers[-1]) for layers in self.groups})
        return tuple(rs)

    @property
    def num_classes(self):
        return max(so.class_count for so in self.side_outputs)

    def structure_hash(self):
        return self.graph.structure_hash()


def build_network(config=None, seed=0):
    config = config or ArchConfig()
    init = _Init(seed)
    graph = Graph()
    x = graph.input("image")
    groups = build_backbone(graph, config.backbone, x, init)
    level0 = branch_level0(graph, groups, config.backbone, init, config.branch_channels, config.bias)
    levels = build_hierarchy(graph, level0, config.hierarchy, init, config.branch_channels, config.bias)
    nodes = supervised_nodes(levels, config.hierarchy)
    sos = attach_side_outputs(graph, nodes, x, init, config.branch_channels, config.bias)
    # each class k is averaged over the side-outputs that can predict it
    counts = np.zeros(max(so.class_count for so in sos) + 1)
    for so in sos:
        counts[:so.class_count + 1] += 1
    weights = [graph.param(f"fuse.w{i}", config.fuse_init / counts[:so.class_count + 1])
               for i, so in enumerate(sos, start=1)]
    fuse_logits = graph.add("fuse", [so.upsampled for so in sos] + weights, name="fuse")
    fused = graph.add("softmax", [fuse_logits], name="fused")
    return Network(config, graph, x, groups, levels, sos, fused, fuse_logits)


def forward(net, image):
    """Run the network on a (H, W) or (C, H, W) image in [0, 1].

    Returns ``(side_probs, fused_probs)`` as Tensors at input resolution.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[None]
    feed = (img - 0.5)[None]
    outs = [so.upsampled for so in net.side_outputs] + [net.fused]
    values = net.graph.run({"image": feed}, outputs=outs)
    return [values[so.upsampled] for so in net.side_outputs], values[net.fused]
