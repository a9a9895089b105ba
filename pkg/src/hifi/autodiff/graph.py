import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..errors import ArgumentError, GraphError
from . import ops
from .tensor import Tensor


@dataclass(frozen=True)
class Node:
    id: int
    op: str
    inputs: tuple
    attrs: tuple = ()
    name: str = ""

    def attr(self, key, default=None):
        return dict(self.attrs).get(key, default)


@dataclass
class Graph:
    """Static op records in topological order plus named parameter tensors.

    ``run`` replays the records on a fresh tape, so gradients flow into the
    persistent parameter tensors held in ``params``.
    """

    nodes: list = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def add(self, op, inputs=(), name="", **attrs):
        inputs = tuple(int(i) for i in inputs)
        for i in inputs:
            if not 0 <= i < len(self.nodes):
                raise GraphError(f"node {name or op} references unknown input {i}")
        node = Node(len(self.nodes), op, inputs, tuple(sorted(attrs.items())), name)
        self.nodes.append(node)
        return node.id

    def input(self, name):
        return self.add("input", name=name)

    def param(self, name, value):
        if name in self.params:
            raise GraphError(f"duplicate parameter name {name!r}")
        self.params[name] = Tensor(np.array(value, dtype=np.float64), requires_grad=True, op="param")
        return self.add("param", name=name, shape=tuple(np.shape(value)))

    def find(self, name):
        for node in self.nodes:
            if node.name == name:
                return node.id
        raise GraphError(f"no node named {name!r}")

    def consumers(self, node_id):
        return [n.id for n in self.nodes if node_id in n.inputs]

    def structure_hash(self):
        h = hashlib.sha256()
        for n in self.nodes:
            h.update(repr((n.id, n.op, n.inputs, n.attrs, n.name)).encode())
        for name in sorted(self.params):
            h.update(repr((name, self.params[name].shape)).encode())
        return h.hexdigest()

    def zero_grad(self):
        for t in self.params.values():
            t.zero_grad()

    def run(self, feeds, outputs=None):
        """Evaluate the graph. ``feeds`` maps input-node names to arrays.

        Returns a dict node id -> Tensor for ``outputs`` (default: all nodes).
        """
        values = {}
        for node in self.nodes:
            values[node.id] = _execute(self, node, values, feeds)
        if outputs is None:
            return values
        return {i: values[i] for i in outputs}


def _execute(graph, node, values, feeds):
    args = [values[i] for i in node.inputs]
    op = node.op
    if op == "input":
        if node.name not in feeds:
            raise ArgumentError(f"missing feed for input {node.name!r}")
        return Tensor(feeds[node.name], requires_grad=False, op="input")
    if op == "param":
        return graph.params[node.name]
    if op == "conv":
        return ops.conv2d(*args, stride=node.attr("stride", 1), pad=node.attr("pad", 0))
    if op == "relu":
        return ops.relu(args[0])
    if op == "pool":
        return ops.maxpool2(args[0])
    if op == "upsample":
        # second input only supplies the target spatial size
        x, ref = args
        factor = node.attr("factor")
        if factor > 1:
            x = ops.upsample_bilinear(x, factor)
        return ops.crop(x, ref.shape[2], ref.shape[3])
    if op == "sum":
        return ops.eltwise_sum(args)
    if op == "softmax":
        return ops.softmax_channels(args[0])
    if op == "fuse":
        k = len(args) // 2
        return ops.class_weighted_sum(args[:k], args[k:])
    raise GraphError(f"unknown op {op!r} at node {node.id}")
