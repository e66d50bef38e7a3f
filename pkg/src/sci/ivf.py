"""IVF-Flat and IVF-PQ indexes in two build modes.

Standard mode clusters and stores item-tower embeddings only. The
consistency-oriented mode (CI) clusters items by their query-tower
embeddings (structural vectors), while fine payloads come from the item
tower (representation vectors); PQ residuals mix the two spaces: the
representation vector minus the structurally assigned centroid.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import encoder
from .clustering import Centroids, assign, assign_batch, kmeans
from .core import pairwise_sq_dists
from .errors import (CorruptIndex, DimensionMismatch, DuplicateItem,
                     TooFewPoints)
from .quantization import (PqCodebook, adc_distances_batch, adc_table,
                           pq_encode_batch, pq_train)

FLAT = "flat"
PQ = "pq"
STANDARD = "standard"
CI = "ci"
RESIDUAL_REPR = "repr"
RESIDUAL_STRUCT = "struct"

_MAGIC = b"SCIX"
_VERSION = 1


@dataclass
class IvfIndex:
    variant: str
    mode: str
    dim: int
    nlist: int
    centroids: Centroids
    list_ids: list          # per cluster: (len,) uint64 array
    list_payload: list      # per cluster: (len, dim) f32 or (len, m) uint8
    n_items: int
    codebook: PqCodebook | None = None
    residual_space: str = RESIDUAL_REPR
    mean_reconstruction_error: float | None = field(default=None, compare=False)


@dataclass
class SearchResult:
    ranked: list            # [(item_id, score)], ascending squared distance
    probed_clusters: list


def compute_residual(e_struct, e_repr, centroids: Centroids):
    """Assign by the structural vector, subtract the centroid from the
    representation vector."""
    e_struct = np.asarray(e_struct, dtype=np.float32)
    e_repr = np.asarray(e_repr, dtype=np.float32)
    if e_struct.shape != e_repr.shape:
        raise DimensionMismatch(f"{e_struct.shape} vs {e_repr.shape}")
    cid, _ = assign(centroids, e_struct)
    r = e_repr.astype(np.float64) - centroids.centers[cid].astype(np.float64)
    return cid, r.astype(np.float32)


def build(model, items, mode: str, variant: str, nlist: int, rng,
          pq_m: int = 8, pq_ksub: int = 16,
          residual_space: str = RESIDUAL_REPR) -> IvfIndex:
    """Build an index over (item_id, feature) pairs. Deterministic given rng."""
    if mode not in (STANDARD, CI):
        raise ValueError(f"unknown mode {mode!r}")
    if variant not in (FLAT, PQ):
        raise ValueError(f"unknown variant {variant!r}")
    if residual_space not in (RESIDUAL_REPR, RESIDUAL_STRUCT):
        raise ValueError(f"unknown residual_space {residual_space!r}")
    ids = np.asarray([i for i, _ in items], dtype=np.uint64)
    feats = np.asarray([f for _, f in items], dtype=np.float32)
    if len(np.unique(ids)) != len(ids):
        raise DuplicateItem("item ids must be unique")
    n = len(ids)
    if n < nlist:
        raise TooFewPoints(f"{n} items for nlist={nlist}")

    e_repr = encoder.encode_batch(model, encoder.ITEM, feats)
    if mode == CI:
        e_struct = encoder.encode_batch(model, encoder.QUERY, feats)
    else:
        e_struct = e_repr

    centroids = kmeans(e_struct, nlist, rng=rng)
    labels, _ = assign_batch(centroids, e_struct)

    codebook = None
    codes = None
    mean_recon = None
    if variant == PQ:
        base = e_repr if residual_space == RESIDUAL_REPR else e_struct
        residuals = (base.astype(np.float64) -
                     centroids.centers[labels].astype(np.float64)).astype(np.float32)
        codebook = pq_train(residuals, pq_m, pq_ksub, rng)
        codes = pq_encode_batch(codebook, residuals)
        recon = codebook.codebooks[
            np.arange(pq_m)[None, :], codes.astype(np.intp)].reshape(n, -1)
        diff = residuals.astype(np.float64) - recon.astype(np.float64)
        mean_recon = float(np.mean(np.einsum("ij,ij->i", diff, diff)))

    list_ids = []
    list_payload = []
    for j in range(nlist):
        members = np.flatnonzero(labels == j)
        list_ids.append(ids[members])
        if variant == FLAT:
            list_payload.append(e_repr[members])
        else:
            list_payload.append(codes[members])

    return IvfIndex(variant, mode, int(e_repr.shape[1]), nlist, centroids,
                    list_ids, list_payload, n, codebook, residual_space,
                    mean_recon)


def search(index: IvfIndex, model, query_feature, nprobe: int, k: int) -> SearchResult:
    """Probe the nprobe nearest coarse clusters, score their members, return
    the k best by ascending squared distance (ties by ascending item id)."""
    if k < 1 or nprobe < 1:
        raise ValueError("k and nprobe must be >= 1")
    e_q = encoder.encode(model, encoder.QUERY, query_feature)
    c_dists = pairwise_sq_dists(e_q.reshape(1, -1), index.centroids.centers)[0]
    n_probe = min(nprobe, index.nlist)
    probed = np.lexsort((np.arange(index.nlist), c_dists))[:n_probe]

    all_ids = []
    all_dists = []
    for j in probed:
        ids = index.list_ids[j]
        if len(ids) == 0:
            continue
        if index.variant == FLAT:
            d = pairwise_sq_dists(index.list_payload[j],
                                  e_q.reshape(1, -1))[:, 0]
        else:
            qr = e_q.astype(np.float64) - \
                index.centroids.centers[j].astype(np.float64)
            table = adc_table(index.codebook, qr.astype(np.float32))
            d = adc_distances_batch(table, index.list_payload[j])
        all_ids.append(ids)
        all_dists.append(d)

    if not all_ids:
        return SearchResult([], [int(j) for j in probed])
    ids = np.concatenate(all_ids)
    dists = np.concatenate(all_dists)
    order = np.lexsort((ids, dists))[:k]
    ranked = [(int(ids[i]), float(dists[i])) for i in order]
    return SearchResult(ranked, [int(j) for j in probed])


# ---------------------------------------------------------------------------
# Serialization. Layout (all integers little-endian):
#   "SCIX" | version u32 | variant u8 | mode u8 | pq_m u8 (0 for flat) |
#   residual_space u8 | dim u32 | nlist u32 | n_items u64 |
#   centroid block: centers f32[nlist*dim], inertia f64, iterations u32 |
#   per cluster: count u64, ids u64[count], payload
#     (flat: f32[count*dim]; pq: u8[count*pq_m]) |
#   pq only: ksub u32, codebooks f32[m*ksub*sub_dim], train_mse f64[m]

_VARIANT_TAGS = {FLAT: 0, PQ: 1}
_MODE_TAGS = {STANDARD: 0, CI: 1}
_RESID_TAGS = {RESIDUAL_REPR: 0, RESIDUAL_STRUCT: 1}


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise CorruptIndex(self.offset, "truncated")
        out = self.data[self.offset:self.offset + n]
        self.offset += n
        return out

    def u8(self):
        return self.take(1)[0]

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def u64(self):
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self):
        return struct.unpack("<d", self.take(8))[0]

    def f32_array(self, count, shape):
        raw = self.take(4 * count)
        return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()


def save(index: IvfIndex, path) -> None:
    pq_m = index.codebook.m if index.variant == PQ else 0
    parts = [_MAGIC, struct.pack("<I", _VERSION),
             bytes([_VARIANT_TAGS[index.variant],
                    _MODE_TAGS[index.mode],
                    pq_m,
                    _RESID_TAGS[index.residual_space]]),
             struct.pack("<II", index.dim, index.nlist),
             struct.pack("<Q", index.n_items),
             index.centroids.centers.astype("<f4").tobytes(),
             struct.pack("<d", index.centroids.inertia),
             struct.pack("<I", index.centroids.iterations_run)]
    for j in range(index.nlist):
        ids = index.list_ids[j]
        parts.append(struct.pack("<Q", len(ids)))
        parts.append(ids.astype("<u8").tobytes())
        if index.variant == FLAT:
            parts.append(index.list_payload[j].astype("<f4").tobytes())
        else:
            parts.append(index.list_payload[j].astype(np.uint8).tobytes())
    if index.variant == PQ:
        cb = index.codebook
        parts.append(struct.pack("<I", cb.ksub))
        parts.append(cb.codebooks.astype("<f4").tobytes())
        parts.append(cb.train_mse.astype("<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load(path) -> IvfIndex:
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if len(r.data) < 4 or r.take(4) != _MAGIC:
        raise CorruptIndex(0, "bad magic")
    if r.u32() != _VERSION:
        raise CorruptIndex(4, "unsupported version")
    tag_offset = r.offset
    variant_tag, mode_tag, pq_m, space_tag = (r.u8(), r.u8(), r.u8(), r.u8())
    variants = {v: k for k, v in _VARIANT_TAGS.items()}
    modes = {v: k for k, v in _MODE_TAGS.items()}
    spaces = {v: k for k, v in _RESID_TAGS.items()}
    if variant_tag not in variants or mode_tag not in modes \
            or space_tag not in spaces:
        raise CorruptIndex(tag_offset, "unknown variant/mode/space tag")
    variant = variants[variant_tag]
    mode = modes[mode_tag]
    residual_space = spaces[space_tag]
    dim = r.u32()
    nlist = r.u32()
    n_items = r.u64()
    centers = r.f32_array(nlist * dim, (nlist, dim))
    centroids = Centroids(centers, r.f64(), r.u32())

    if variant == PQ and (pq_m == 0 or dim % pq_m != 0):
        raise CorruptIndex(tag_offset, f"bad PQ sub-quantizer count {pq_m}")
    list_ids = []
    list_payload = []
    for _ in range(nlist):
        count = r.u64()
        list_ids.append(np.frombuffer(r.take(8 * count), dtype="<u8").copy())
        if variant == FLAT:
            list_payload.append(r.f32_array(count * dim, (count, dim)))
        else:
            codes = np.frombuffer(r.take(pq_m * count), dtype=np.uint8)
            list_payload.append(codes.reshape(count, pq_m).copy())
    if sum(len(i) for i in list_ids) != n_items:
        raise CorruptIndex(r.offset, "n_items does not match list sizes")

    codebook = None
    if variant == PQ:
        ksub = r.u32()
        if not 1 <= ksub <= 256:
            raise CorruptIndex(r.offset - 4, f"bad ksub {ksub}")
        sub_dim = dim // pq_m
        codebooks = r.f32_array(pq_m * ksub * sub_dim, (pq_m, ksub, sub_dim))
        train_mse = np.frombuffer(r.take(8 * pq_m), dtype="<f8").copy()
        codebook = PqCodebook(pq_m, sub_dim, ksub, codebooks, train_mse)
    if r.offset != len(r.data):
        raise CorruptIndex(r.offset, "trailing bytes")
    return IvfIndex(variant, mode, dim, nlist, centroids, list_ids,
                    list_payload, n_items, codebook, residual_space)
