"""Synthetic benchmark generation and file I/O.

The generator plants latent cluster prototypes on the unit sphere, derives
item and query features from them, and rotates the item features by a fixed
angle. That rotation is the misalignment the training stage has to repair:
queries and items carry the same semantics in rotated subspaces.

File formats (all integers little-endian):
  vectors  "SCIV" | version u32 | dim u32 | count u64 | f32 row-major payload
           (ids, when present, live in a sibling <path>.ids file, u64/row)
  model    "SCIM" | version u32 | arch u8 | normalize u8 | input u32 |
           output u32 | hidden u32 | params f32 (query tower then item
           tower, each W / or W1,b1,W2,b2)
  qrels    TSV query_id \t item_id \t grade
  runs     TSV query_id \t rank \t item_id \t score
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from . import encoder
from .core import make_rng
from .errors import CorruptFile, DuplicateQrel, ParseError
from .training import TripletBatch

_VEC_MAGIC = b"SCIV"
_MODEL_MAGIC = b"SCIM"
_VERSION = 1


@dataclass
class SyntheticSpec:
    n_items: int
    n_queries: int
    input_dim: int
    n_latent_clusters: int
    tower_misalignment: float  # rotation angle in radians, [0, pi]
    noise_sigma: float
    seed: int

    def __post_init__(self):
        if self.n_items < self.n_latent_clusters:
            raise ValueError("need at least one item per latent cluster")
        if not 0.0 <= self.tower_misalignment <= np.pi:
            raise ValueError("misalignment angle must lie in [0, pi]")
        if self.noise_sigma < 0.0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass
class SyntheticData:
    item_ids: np.ndarray
    item_features: np.ndarray
    query_ids: np.ndarray
    query_features: np.ndarray
    triplets: list        # list of TripletBatch
    qrels: dict           # query_id -> {item_id: grade}
    item_labels: np.ndarray
    query_labels: np.ndarray


def rotation_matrix(dim: int, angle: float) -> np.ndarray:
    """Orthogonal rotation by `angle` in each disjoint coordinate plane
    (0,1), (2,3), ...; the last axis is untouched for odd dims."""
    rot = np.eye(dim)
    c, s = np.cos(angle), np.sin(angle)
    for p in range(0, dim - 1, 2):
        rot[p, p] = c
        rot[p, p + 1] = -s
        rot[p + 1, p] = s
        rot[p + 1, p + 1] = c
    return rot


def standard_benchmark(seed: int) -> SyntheticSpec:
    """The misaligned desk-scale benchmark used throughout the test suite."""
    return SyntheticSpec(n_items=2000, n_queries=200, input_dim=16,
                         n_latent_clusters=8, tower_misalignment=0.8,
                         noise_sigma=0.1, seed=seed)


def gen_synthetic(spec: SyntheticSpec, triplets_per_query: int = 4,
                  batch_size: int = 64) -> SyntheticData:
    """Deterministic corpus, triplet batches and qrels from a seed.

    Relevance comes from latent cluster identity, independent of any model:
    every item sharing the query's latent cluster is relevant (grade 1).
    """
    rng = make_rng(spec.seed)
    d = spec.input_dim
    k = spec.n_latent_clusters

    protos = rng.normal(size=(k, d))
    protos /= np.linalg.norm(protos, axis=1, keepdims=True)

    item_labels = rng.permutation(np.arange(spec.n_items) % k)
    query_labels = rng.permutation(np.arange(spec.n_queries) % k)

    item_latent = protos[item_labels] + \
        spec.noise_sigma * rng.normal(size=(spec.n_items, d))
    query_latent = protos[query_labels] + \
        spec.noise_sigma * rng.normal(size=(spec.n_queries, d))

    rot = rotation_matrix(d, spec.tower_misalignment)
    item_features = (item_latent @ rot.T).astype(np.float32)
    query_features = query_latent.astype(np.float32)

    item_ids = np.arange(spec.n_items, dtype=np.uint64)
    query_ids = np.arange(spec.n_queries, dtype=np.uint64)

    qrels = {}
    for q in range(spec.n_queries):
        members = np.flatnonzero(item_labels == query_labels[q])
        qrels[int(q)] = {int(i): 1 for i in members}

    # Triplets: positive from the query's cluster, negative from another.
    q_feats, pos_feats, neg_feats = [], [], []
    for q in range(spec.n_queries):
        members = np.flatnonzero(item_labels == query_labels[q])
        others = np.flatnonzero(item_labels != query_labels[q])
        for _ in range(triplets_per_query):
            pos = members[int(rng.integers(0, len(members)))]
            neg = others[int(rng.integers(0, len(others)))]
            q_feats.append(query_features[q])
            pos_feats.append(item_features[pos])
            neg_feats.append(item_features[neg])
    triplets = []
    for start in range(0, len(q_feats), batch_size):
        stop = start + batch_size
        triplets.append(TripletBatch(np.asarray(q_feats[start:stop]),
                                     np.asarray(pos_feats[start:stop]),
                                     np.asarray(neg_feats[start:stop])))

    return SyntheticData(item_ids, item_features, query_ids, query_features,
                         triplets, qrels, item_labels, query_labels)


# ---------------------------------------------------------------------------
# Vector files


def write_vectors(path, vectors, ids=None) -> None:
    x = np.asarray(vectors, dtype=np.float32)
    if x.ndim != 2:
        raise ValueError("expected a 2-D array of vectors")
    with open(path, "wb") as fh:
        fh.write(_VEC_MAGIC)
        fh.write(struct.pack("<IIQ", _VERSION, x.shape[1], x.shape[0]))
        fh.write(x.astype("<f4").tobytes())
    if ids is not None:
        ids = np.asarray(ids, dtype=np.uint64)
        if len(ids) != x.shape[0]:
            raise ValueError("ids length must match row count")
        with open(str(path) + ".ids", "wb") as fh:
            fh.write(ids.astype("<u8").tobytes())


def read_vectors(path):
    with open(path, "rb") as fh:
        data = fh.read()
    header_end = 4 + 4 + 4 + 8
    if len(data) < header_end:
        raise CorruptFile(0, "file shorter than header")
    if data[:4] != _VEC_MAGIC:
        raise CorruptFile(0, "bad magic")
    version, dim, count = struct.unpack("<IIQ", data[4:header_end])
    if version != _VERSION:
        raise CorruptFile(4, "unsupported version")
    payload = data[header_end:]
    if len(payload) != dim * count * 4:
        raise CorruptFile(header_end, "payload length does not match header")
    vectors = np.frombuffer(payload, dtype="<f4").reshape(count, dim).copy()
    ids_path = str(path) + ".ids"
    if os.path.exists(ids_path):
        with open(ids_path, "rb") as fh:
            raw = fh.read()
        if len(raw) != count * 8:
            raise CorruptFile(0, "ids file length does not match vector count")
        ids = np.frombuffer(raw, dtype="<u8").copy()
    else:
        ids = np.arange(count, dtype=np.uint64)
    return vectors, ids


# ---------------------------------------------------------------------------
# Model files

_ARCH_TAGS = {encoder.LINEAR: 0, encoder.MLP1: 1}


def save_model(path, model: encoder.DualTowerModel) -> None:
    parts = [_MODEL_MAGIC, struct.pack("<I", _VERSION),
             bytes([_ARCH_TAGS[model.arch], int(model.normalize_output)]),
             struct.pack("<III", model.input_dim, model.output_dim,
                         model.hidden_dim)]
    for params in (model.params_q, model.params_i):
        for name in model.param_names():
            parts.append(params[name].astype("<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_model(path) -> encoder.DualTowerModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 22:
        raise CorruptFile(0, "file shorter than header")
    if data[:4] != _MODEL_MAGIC:
        raise CorruptFile(0, "bad magic")
    version, = struct.unpack("<I", data[4:8])
    if version != _VERSION:
        raise CorruptFile(4, "unsupported version")
    arch_tag, norm = data[8], data[9]
    archs = {v: k for k, v in _ARCH_TAGS.items()}
    if arch_tag not in archs:
        raise CorruptFile(8, "unknown arch tag")
    arch = archs[arch_tag]
    input_dim, output_dim, hidden_dim = struct.unpack("<III", data[10:22])
    if arch == encoder.LINEAR:
        shapes = {"W": (output_dim, input_dim)}
    else:
        shapes = {"W1": (hidden_dim, input_dim), "b1": (hidden_dim,),
                  "W2": (output_dim, hidden_dim), "b2": (output_dim,)}
    offset = 22
    towers = []
    for _ in range(2):
        params = {}
        for name, shape in shapes.items():
            size = int(np.prod(shape)) * 4
            if offset + size > len(data):
                raise CorruptFile(offset, "truncated parameter block")
            params[name] = np.frombuffer(
                data[offset:offset + size], dtype="<f4").reshape(shape).copy()
            offset += size
        towers.append(params)
    if offset != len(data):
        raise CorruptFile(offset, "trailing bytes")
    return encoder.DualTowerModel(arch, input_dim, output_dim, hidden_dim,
                                  bool(norm), towers[0], towers[1])


# ---------------------------------------------------------------------------
# Qrels, runs, history


def write_qrels(path, qrels) -> None:
    with open(path, "w") as fh:
        for qid in sorted(qrels):
            for item in sorted(qrels[qid]):
                fh.write(f"{qid}\t{item}\t{qrels[qid][item]}\n")


def read_qrels(path):
    qrels = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ParseError(lineno, "expected 3 tab-separated fields")
            try:
                qid, item, grade = int(fields[0]), int(fields[1]), int(fields[2])
            except ValueError:
                raise ParseError(lineno, "non-integer field") from None
            if qid in qrels and item in qrels[qid]:
                raise DuplicateQrel(lineno)
            qrels.setdefault(qid, {})[item] = grade
    return qrels


def write_run(path, run_rows) -> None:
    """run_rows: iterable of (query_id, rank, item_id, score)."""
    with open(path, "w") as fh:
        for qid, rank, item, score in run_rows:
            fh.write(f"{qid}\t{rank}\t{item}\t{score:.6g}\n")


def read_run(path):
    run = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise ParseError(lineno, "expected 4 tab-separated fields")
            try:
                qid, rank, item = int(fields[0]), int(fields[1]), int(fields[2])
                float(fields[3])
            except ValueError:
                raise ParseError(lineno, "malformed field") from None
            run.setdefault(qid, []).append((rank, item))
    return {qid: [item for _, item in sorted(pairs)] for qid, pairs in run.items()}


def write_history_csv(path, history) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,loss_original,loss_swap,loss_total\n")
        for epoch, l_o, l_s, l_t in history:
            fh.write(f"{epoch},{l_o:.6g},{l_s:.6g},{l_t:.6g}\n")
