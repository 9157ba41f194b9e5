"""Binary model snapshots.

Layout (all integers little-endian)::

    8 bytes   magic  b"ASMLSNAP"
    4 bytes   format version (uint32)
    8 bytes   header length H (uint64)
    H bytes   UTF-8 JSON header: config, training config, assembly records,
              and an array table {name: [dtype, shape, byte offset]}
    ...       raw array bytes, offsets relative to the end of the header

Arrays are stored verbatim, so weights round-trip bit-exactly.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from .dynamics import ConvergenceTrace
from .graph import Area, Fiber, ModelConfig, SparseWeights
from .learning import AssemblyRecord, TrainConfig, TrainedModel

MAGIC = b"ASMLSNAP"
VERSION = 1


class SnapshotError(ValueError):
    pass


def _weights_arrays(prefix, w: SparseWeights):
    return {f"{prefix}.indptr": w.indptr.astype("<i8"), f"{prefix}.indices": w.indices.astype("<i4"),
            f"{prefix}.data": w.data.astype("<f8"), f"{prefix}.baseline": w.baseline.astype("<f8")}


def save_model(path, model: TrainedModel) -> None:
    arrays = {}
    arrays.update(_weights_arrays("fiber", model.fiber.weights))
    arrays.update(_weights_arrays("recurrent", model.area.recurrent))
    arrays["area.firing"] = np.asarray(model.area.firing, dtype="<i8")
    arrays["area.ever_fired"] = model.area.ever_fired.astype("u1")
    table, blobs, offset = {}, [], 0
    for name, arr in arrays.items():
        raw = np.ascontiguousarray(arr).tobytes()
        table[name] = [arr.dtype.str, list(arr.shape), offset]
        blobs.append(raw)
        offset += len(raw)
    header = {
        "config": model.config.to_dict(),
        "train": model.train.to_dict() if model.train else None,
        "homeostasis_applied": model.homeostasis_applied,
        "area": {"n": model.area.n, "k": model.area.k, "inhibited": model.area.inhibited},
        "fiber": {"n_src": model.fiber.n_src, "n_tgt": model.fiber.n_tgt},
        "assemblies": [dict(a.to_dict(), prev_overlap=list(a.trace.prev_overlap),
                            caps=[[int(i) for i in c] for c in a.caps]) for a in model.assemblies],
        "arrays": table,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", VERSION, len(hbytes)))
        f.write(hbytes)
        for raw in blobs:
            f.write(raw)


def load_model(path) -> TrainedModel:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] != MAGIC:
        raise SnapshotError(f"{path}: not a model snapshot")
    version, hlen = struct.unpack("<IQ", blob[8:20])
    if version != VERSION:
        raise SnapshotError(f"{path}: unsupported snapshot version {version}")
    header = json.loads(blob[20:20 + hlen].decode("utf-8"))
    body = memoryview(blob)[20 + hlen:]

    def arr(name):
        dtype, shape, off = header["arrays"][name]
        count = int(np.prod(shape)) if shape else 1
        size = np.dtype(dtype).itemsize * count
        if off + size > len(body):
            raise SnapshotError(f"{path}: truncated array {name}")
        return np.frombuffer(body[off:off + size], dtype=dtype).reshape(shape).copy()

    def weights(prefix, n_src, n_tgt):
        w = SparseWeights(n_src, n_tgt, arr(f"{prefix}.indptr"), arr(f"{prefix}.indices"),
                          arr(f"{prefix}.data").astype(np.float64))
        w.baseline = arr(f"{prefix}.baseline").astype(np.float64)
        return w

    cfg = ModelConfig(**header["config"])
    a = header["area"]
    area = Area(n=a["n"], k=a["k"], recurrent=weights("recurrent", a["n"], a["n"]),
                firing=arr("area.firing").astype(np.int64), inhibited=a["inhibited"],
                ever_fired=arr("area.ever_fired").astype(bool))
    fh = header["fiber"]
    fiber = Fiber(weights("fiber", fh["n_src"], fh["n_tgt"]))
    records = []
    for rec in header["assemblies"]:
        trace = ConvergenceTrace(first_timers=list(rec["first_timers"]), prev_overlap=list(rec["prev_overlap"]))
        records.append(AssemblyRecord(label=rec["label"], core_estimate=np.array(rec["core_estimate"], dtype=np.int64),
                                      support=np.array(rec["support"], dtype=np.int64),
                                      gamma_measured=rec["gamma_measured"], trace=trace,
                                      caps=[np.array(c, dtype=np.int64) for c in rec["caps"]]))
    train = TrainConfig(**header["train"]) if header["train"] else None
    return TrainedModel(config=cfg, area=area, fiber=fiber, assemblies=records, train=train,
                        homeostasis_applied=header["homeostasis_applied"])
