"""Binary model files: magic, embedded config text, named float64 tensors.

Layout (little-endian)::

    b"SKM1\\n"
    u32 config_len, config_len bytes of UTF-8 config text
    u32 tensor_count
    per tensor: u16 name_len, name, u8 ndim, ndim x u32 dims, prod(dims) x f64
"""

import struct

import numpy as np

from .arch import build_network
from .config import Config, parse_config
from .errors import ConfigError, FormatError

MAGIC = b"SKM1\n"


def dump_model(net, cfg):
    out = [MAGIC]
    text = cfg.to_text().encode("utf-8")
    out.append(struct.pack("<I", len(text)) + text)
    params = net.graph.params
    out.append(struct.pack("<I", len(params)))
    for name, t in params.items():
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", t.data.ndim))
        out.append(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
        out.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return b"".join(out)


def save_model(path, net, cfg):
    with open(path, "wb") as f:
        f.write(dump_model(net, cfg))


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated model file while reading {what}", self.pos)
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def parse_model(buf):
    """Rebuild the network described by ``buf``; returns ``(net, cfg)``."""
    if buf[:len(MAGIC)] != MAGIC:
        raise FormatError(f"bad model magic {bytes(buf[:len(MAGIC)])!r}", 0)
    r = _Reader(buf)
    r.pos = len(MAGIC)
    (n,) = r.unpack("<I", "config length")
    cfg_at = r.pos
    try:
        cfg = parse_config(r.take(n, "config").decode("utf-8"), Config())
    except (UnicodeDecodeError, ConfigError) as e:
        raise FormatError(f"embedded config is invalid: {e}", cfg_at) from None
    net = build_network(cfg.arch_config(), seed=cfg.seed)
    params = net.graph.params
    (count,) = r.unpack("<I", "tensor count")
    if count != len(params):
        raise FormatError(f"model has {count} tensors, architecture expects {len(params)}", r.pos - 4)
    seen = set()
    for _ in range(count):
        at = r.pos
        (ln,) = r.unpack("<H", "name length")
        name = r.take(ln, "name").decode("utf-8", errors="replace")
        (ndim,) = r.unpack("<B", "rank")
        shape = r.unpack(f"<{ndim}I", "shape")
        if name not in params or name in seen:
            raise FormatError(f"unexpected tensor {name!r}", at)
        if shape != params[name].data.shape:
            raise FormatError(f"tensor {name!r} has shape {shape}, architecture expects "
                              f"{params[name].data.shape}", at)
        size = int(np.prod(shape, dtype=np.int64)) * 8
        params[name].data[...] = np.frombuffer(r.take(size, name), dtype="<f8").reshape(shape)
        seen.add(name)
    if r.pos != len(buf):
        raise FormatError("trailing bytes after model tensors", r.pos)
    return net, cfg


def load_model(path):
    with open(path, "rb") as f:
        return parse_model(f.read())
