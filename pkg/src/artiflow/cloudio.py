"""Point-cloud / flow files: a columnar binary format and a CSV debug dump.

Binary layout (all little-endian)::

    b"ACLD1\\n"
    uint32 header length, then a UTF-8 JSON header
    float64 xyz columns (N x 3, row-major)
    optional float64 flow (N x 3)
    optional int32 label index into header["labels"]
    optional uint8 part mask

The header lists which optional columns follow, in that order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .flow import FlowField
from .geom import PointCloud

MAGIC = b"ACLD1\n"


def encode_cloud(cloud: PointCloud, flow: FlowField | None = None, meta: dict | None = None) -> bytes:
    n = len(cloud)
    if flow is not None and len(flow) != n:
        raise ValueError("flow and cloud lengths differ")
    columns = ["xyz"]
    blobs = [np.ascontiguousarray(cloud.points, dtype="<f8").tobytes()]
    header: dict = {"n": n}
    if flow is not None:
        columns.append("flow")
        blobs.append(np.ascontiguousarray(flow.vectors, dtype="<f8").tobytes())
        header["target_joint"] = flow.target_joint
    if cloud.link_labels is not None:
        names, index = np.unique(cloud.link_labels, return_inverse=True)
        columns.append("label")
        header["labels"] = [str(x) for x in names]
        blobs.append(index.astype("<i4").tobytes())
    if cloud.part_mask is not None:
        columns.append("mask")
        blobs.append(cloud.part_mask.astype(np.uint8).tobytes())
    header["columns"] = columns
    if meta:
        header["meta"] = meta
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<I", len(head)) + head + b"".join(blobs)


def decode_cloud(data: bytes) -> tuple[PointCloud, FlowField | None, dict]:
    if not data.startswith(MAGIC):
        raise ValueError("not a cloud file (bad magic)")
    off = len(MAGIC)
    if len(data) < off + 4:
        raise ValueError("truncated cloud file")
    (hlen,) = struct.unpack_from("<I", data, off)
    off += 4
    if len(data) < off + hlen:
        raise ValueError("truncated cloud file")
    header = json.loads(data[off : off + hlen].decode("utf-8"))
    off += hlen
    n = header["n"]

    def take(dtype, count):
        nonlocal off
        size = np.dtype(dtype).itemsize * count
        if off + size > len(data):
            raise ValueError("truncated cloud file")
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=off)
        off += size
        return arr

    points = flow = labels = mask = None
    for col in header["columns"]:
        if col == "xyz":
            points = take("<f8", 3 * n).reshape(n, 3).copy()
        elif col == "flow":
            flow = take("<f8", 3 * n).reshape(n, 3).copy()
        elif col == "label":
            labels = np.array(header["labels"])[take("<i4", n)] if n else np.array([], dtype=str)
        elif col == "mask":
            mask = take("u1", n).astype(bool)
        else:
            raise ValueError(f"unknown column {col!r}")
    if off != len(data):
        raise ValueError("trailing bytes in cloud file")
    cloud = PointCloud(points, link_labels=labels, part_mask=mask)
    field = FlowField(flow, header.get("target_joint", "")) if flow is not None else None
    return cloud, field, header.get("meta", {})


def write_cloud(path, cloud: PointCloud, flow: FlowField | None = None, meta: dict | None = None) -> Path:
    path = Path(path)
    path.write_bytes(encode_cloud(cloud, flow, meta))
    return path


def read_cloud(path) -> tuple[PointCloud, FlowField | None, dict]:
    return decode_cloud(Path(path).read_bytes())


def cloud_to_csv(cloud: PointCloud, flow: FlowField | None = None) -> str:
    cols = ["x", "y", "z"]
    if flow is not None:
        cols += ["fx", "fy", "fz"]
    if cloud.link_labels is not None:
        cols.append("link")
    if cloud.part_mask is not None:
        cols.append("mask")
    rows = [",".join(cols)]
    for i in range(len(cloud)):
        vals = [repr(float(v)) for v in cloud.points[i]]
        if flow is not None:
            vals += [repr(float(v)) for v in flow.vectors[i]]
        if cloud.link_labels is not None:
            vals.append(str(cloud.link_labels[i]))
        if cloud.part_mask is not None:
            vals.append(str(int(cloud.part_mask[i])))
        rows.append(",".join(vals))
    return "\n".join(rows) + "\n"
