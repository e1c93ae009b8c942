"""Header + float32 container files.

Layout: an 8-byte little-endian unsigned integer holding the byte length of
a JSON header, the header itself (UTF-8), then the raw little-endian float32
arrays concatenated in index-table order.  The header's ``"arrays"`` key is
the index table: a list of ``{"name", "shape", "offset"}`` entries with
offsets relative to the start of the payload section.  Headers are written
with sorted keys so identical inputs produce byte-identical files.
"""

import json

import numpy as np

from .errors import FormatError


def write_container(path, header, arrays):
    """Write ``arrays`` (iterable of ``(name, ndarray)``) with ``header``.

    ``header`` must be JSON-serializable and not contain an ``"arrays"`` key;
    arrays are cast to little-endian float32.
    """
    if "arrays" in header:
        raise ValueError("header must not predefine 'arrays'")
    table = []
    payloads = []
    offset = 0
    for name, arr in arrays:
        data = np.ascontiguousarray(arr, dtype="<f4")
        table.append({"name": name, "shape": list(data.shape), "offset": offset})
        payloads.append(data.tobytes())
        offset += len(payloads[-1])
    full = dict(header)
    full["arrays"] = table
    blob = json.dumps(full, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        for chunk in payloads:
            fh.write(chunk)


def read_container(path):
    """Read a container file; returns ``(header, {name: float32 array})``.

    The returned header no longer carries the ``"arrays"`` table.
    """
    with open(path, "rb") as fh:
        prefix = fh.read(8)
        if len(prefix) != 8:
            raise FormatError("container shorter than its length prefix", offset=0)
        header_len = int.from_bytes(prefix, "little")
        blob = fh.read(header_len)
        if len(blob) != header_len:
            raise FormatError("truncated container header", offset=8 + len(blob))
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"invalid container header: {exc}", offset=8) from exc
        payload = fh.read()
    table = header.pop("arrays", None)
    if table is None:
        raise FormatError("container header lacks an index table")
    arrays = {}
    for entry in table:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        start = entry["offset"]
        end = start + 4 * count
        if end > len(payload):
            raise FormatError(
                f"payload for {entry['name']!r} out of bounds",
                offset=8 + header_len + start,
            )
        arr = np.frombuffer(payload[start:end], dtype="<f4").reshape(shape)
        arrays[entry["name"]] = arr
    return header, arrays
