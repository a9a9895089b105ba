import numpy as np

from ..errors import ArgumentError


class Tensor:
    """A float64 array plus the bookkeeping needed for reverse-mode differentiation.

    ``grad`` is allocated lazily on the first accumulation and always has the
    same shape as ``data``.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def accumulate(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True).reshape(self.data.shape)
        else:
            self.grad += g


def make_result(data, parents, backward, op):
    """Wrap an op output; the backward closure is kept only if some input needs grad."""
    needs = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs, _parents=tuple(parents) if needs else (),
                  _backward=backward if needs else None, op=op)


def _topological(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Populate ``.grad`` on every tensor that requires it, seeded with d(loss)/d(loss) = 1.

    Gradients accumulate (``+=``), so a tensor feeding several branches receives
    the sum of the branch contributions. Returns ``{id(tensor): grad}`` for leaves.
    """
    if loss.data.size != 1:
        raise ArgumentError(f"backward needs a scalar loss, got shape {loss.shape}")
    loss.grad = np.ones_like(loss.data)
    order = _topological(loss)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    return {id(t): t.grad for t in order if not t._parents and t.requires_grad}
