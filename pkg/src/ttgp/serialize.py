"""TT file formats.

Binary layout (little endian)::

    b"TTv1"                      format tag
    uint32  d
    uint64  mode_sizes[d]
    uint64  ranks[d + 1]
    float64 core values          core 0 first; each core linearized
                                 with the first index fastest

The JSON mirror carries the same field names with cores as nested
``r0 x n x r1`` arrays.
"""

import json
import struct

import numpy as np

from .errors import ParseError, UnsupportedVersionError
from .tt import TensorTrain, check_ranks

FORMAT_TAG = b"TTv1"


def tt_serialize(tt):
    parts = [
        FORMAT_TAG,
        struct.pack("<I", tt.d),
        np.asarray(tt.mode_sizes, dtype="<u8").tobytes(),
        np.asarray(tt.ranks, dtype="<u8").tobytes(),
    ]
    parts.extend(np.asarray(c, dtype="<f8").ravel(order="F").tobytes() for c in tt.cores)
    return b"".join(parts)


def _take(buf, offset, nbytes, what):
    if offset + nbytes > len(buf):
        raise ParseError(
            f"truncated input: expected {nbytes} bytes for {what}, "
            f"{len(buf) - offset} available",
            offset,
        )
    return buf[offset:offset + nbytes], offset + nbytes


def tt_deserialize(data):
    buf = bytes(data)
    tag, off = _take(buf, 0, 4, "format tag")
    if tag != FORMAT_TAG:
        if tag[:2] == b"TT":
            raise UnsupportedVersionError(f"unsupported format tag {tag!r}", 0)
        raise ParseError(f"not a TT file (tag {tag!r})", 0)
    raw, off = _take(buf, off, 4, "order d")
    (d,) = struct.unpack("<I", raw)
    if d < 1:
        raise ParseError("order d must be >= 1", 4)
    raw, off_r = _take(buf, off, 8 * d, "mode sizes")
    modes = np.frombuffer(raw, dtype="<u8").astype(np.int64)
    raw, off2 = _take(buf, off_r, 8 * (d + 1), "ranks")
    ranks = np.frombuffer(raw, dtype="<u8").astype(np.int64)
    try:
        check_ranks(modes, ranks)
    except ValueError as exc:
        raise ParseError(str(exc), off_r) from None
    cores = []
    off = off2
    for k in range(d):
        shape = (int(ranks[k]), int(modes[k]), int(ranks[k + 1]))
        count = shape[0] * shape[1] * shape[2]
        raw, off = _take(buf, off, 8 * count, f"core {k}")
        cores.append(np.frombuffer(raw, dtype="<f8").reshape(shape, order="F").astype(np.float64))
    if off != len(buf):
        raise ParseError(f"{len(buf) - off} trailing bytes after last core", off)
    return TensorTrain(tuple(cores))


def tt_to_json(tt):
    doc = {
        "format_tag": FORMAT_TAG.decode(),
        "d": tt.d,
        "mode_sizes": list(tt.mode_sizes),
        "ranks": list(tt.ranks),
        "cores": [c.tolist() for c in tt.cores],
    }
    return json.dumps(doc)


def tt_from_json(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.pos) from None
    tag = doc.get("format_tag")
    if tag != FORMAT_TAG.decode():
        if isinstance(tag, str) and tag.startswith("TT"):
            raise UnsupportedVersionError(f"unsupported format tag {tag!r}")
        raise ParseError(f"missing or invalid format_tag {tag!r}")
    try:
        cores = tuple(np.asarray(c, dtype=np.float64) for c in doc["cores"])
        tt = TensorTrain(cores)
    except (KeyError, ValueError) as exc:
        raise ParseError(f"invalid TT document: {exc}") from None
    if list(tt.mode_sizes) != list(doc.get("mode_sizes", [])) or list(tt.ranks) != list(
        doc.get("ranks", [])
    ) or tt.d != doc.get("d"):
        raise ParseError("header fields disagree with core shapes")
    return tt


def save_tt(tt, path):
    """Write ``tt`` to ``path``; ``.json`` selects the JSON mirror."""
    path = str(path)
    if path.endswith(".json"):
        with open(path, "w") as fh:
            fh.write(tt_to_json(tt))
    else:
        with open(path, "wb") as fh:
            fh.write(tt_serialize(tt))


def load_tt(path):
    path = str(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:1] == b"{":
        return tt_from_json(data.decode())
    return tt_deserialize(data)
