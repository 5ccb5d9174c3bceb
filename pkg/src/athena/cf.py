"""Collaborative filtering over implicit feedback events.

Events aggregate into a capped user-item score matrix, which is mean
centered per user and factorized with the truncated SVD from
:mod:`athena.linalg`. This module also owns the on-disk model bundle: one
versioned file holding the factors, index maps, and the TF-IDF model, with
a bit-exact round trip.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .catalog import ActivityEvent, EventKind
from .cbf import TfIdfModel
from .linalg import SparseMatrix, SvdFactors, mean_center_rows, truncated_svd

DEFAULT_MAX_RANK = 20


class EmptyMatrixError(ValueError):
    """Training requested on a matrix with no stored entries."""


class UnknownUserError(KeyError):
    """User id absent from the trained model."""


@dataclass(frozen=True)
class EventWeights:
    """Per-kind score contributions; the sum per (user, item) is capped."""

    search: float = 1.0
    view: float = 1.0
    like: float = 3.0
    cap: float = 5.0

    def of(self, kind: EventKind) -> float:
        return {EventKind.SEARCH: self.search, EventKind.VIEW: self.view, EventKind.LIKE: self.like}[kind]

    def validate(self) -> None:
        if min(self.search, self.view, self.like) <= 0 or self.cap <= 0:
            raise ValueError("event weights and cap must be strictly positive")

    def to_obj(self) -> dict:
        return {"search": self.search, "view": self.view, "like": self.like, "cap": self.cap}


@dataclass(frozen=True)
class InteractionMatrix:
    matrix: SparseMatrix
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    user_row: dict[str, int]
    item_col: dict[str, int]
    seen: tuple[frozenset[int], ...]  # per user row: columns with stored entries

    @property
    def density(self) -> float:
        cells = self.matrix.n_rows * self.matrix.n_cols
        return self.matrix.nnz / cells if cells else 0.0


def build_interaction_matrix(
    events: Iterable[ActivityEvent],
    weights: EventWeights = EventWeights(),
    user_ids: Optional[Sequence[str]] = None,
    item_ids: Optional[Sequence[str]] = None,
) -> InteractionMatrix:
    """Aggregate events into the capped score matrix.

    ``user_ids``/``item_ids`` fix the index maps (so users or items without
    events keep a slot); by default the ids observed in the events are used,
    in first-appearance order.
    """
    weights.validate()
    events = list(events)
    if user_ids is None:
        user_ids = list(dict.fromkeys(e.user_id for e in events))
    if item_ids is None:
        item_ids = list(dict.fromkeys(e.item_id for e in events))
    user_row = {u: i for i, u in enumerate(user_ids)}
    item_col = {t: j for j, t in enumerate(item_ids)}

    cells: dict[tuple[int, int], float] = {}
    for ev in events:
        key = (user_row[ev.user_id], item_col[ev.item_id])
        cells[key] = cells.get(key, 0.0) + weights.of(ev.kind)
    entries = [(i, j, min(v, weights.cap)) for (i, j), v in cells.items()]
    matrix = SparseMatrix.from_entries(len(user_ids), len(item_ids), entries)

    seen: list[set[int]] = [set() for _ in user_ids]
    for (i, j) in cells:
        seen[i].add(j)
    return InteractionMatrix(
        matrix=matrix,
        user_ids=tuple(user_ids),
        item_ids=tuple(item_ids),
        user_row=user_row,
        item_col=item_col,
        seen=tuple(frozenset(s) for s in seen),
    )


def default_rank(n_rows: int, n_cols: int) -> int:
    return max(1, min(DEFAULT_MAX_RANK, min(n_rows, n_cols) - 1))


@dataclass(frozen=True)
class CfModel:
    factors: SvdFactors
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    user_row: dict[str, int]
    item_col: dict[str, int]
    seen: tuple[frozenset[int], ...]
    k: int
    trained_at: float

    def predict_row(self, user_id: str) -> np.ndarray:
        """Predicted scores for every item column."""
        row = self.user_row.get(user_id)
        if row is None:
            raise UnknownUserError(user_id)
        f = self.factors
        return f.row_means[row] + (f.U[row] * f.sigma) @ f.Vt


def train_cf(m: InteractionMatrix, k: Optional[int] = None, trained_at: float = 0.0) -> CfModel:
    """Mean-center, factorize at (clamped) rank k, attach the row means."""
    if m.matrix.nnz == 0:
        raise EmptyMatrixError("interaction matrix has no stored entries")
    max_k = min(m.matrix.n_rows, m.matrix.n_cols)
    if k is None:
        k = default_rank(m.matrix.n_rows, m.matrix.n_cols)
    k = max(1, min(k, max_k))
    centered, means = mean_center_rows(m.matrix)
    factors = truncated_svd(centered, k).with_row_means(means)
    return CfModel(
        factors=factors,
        user_ids=m.user_ids,
        item_ids=m.item_ids,
        user_row=m.user_row,
        item_col=m.item_col,
        seen=m.seen,
        k=k,
        trained_at=trained_at,
    )


def top_n_cf(model: CfModel, user_id: str, n: int, exclude_seen: bool = True) -> list[tuple[str, float]]:
    """Highest-predicted items for the user; ties break on ascending item id."""
    if n < 1:
        raise ValueError("n must be >= 1")
    scores = model.predict_row(user_id)
    skip = model.seen[model.user_row[user_id]] if exclude_seen else frozenset()
    ranked = sorted(
        ((model.item_ids[j], float(scores[j])) for j in range(len(model.item_ids)) if j not in skip),
        key=lambda pair: (-pair[1], pair[0]),
    )
    return ranked[:n]


# --- model bundle -----------------------------------------------------------------
#
# Layout: magic, u32 header length, UTF-8 JSON header, then named sections
# (u32 name length, name bytes, u64 payload length, payload). Float arrays
# are raw little-endian float64; index maps travel as JSON (ints and strings
# only), so the whole file round-trips bit for bit.

BUNDLE_MAGIC = b"ATHENAMB"
BUNDLE_FORMAT_VERSION = 1


class BundleFormatError(ValueError):
    """Model bundle file is malformed or has an unsupported version."""


def _pack_section(name: str, payload: bytes) -> bytes:
    raw_name = name.encode("ascii")
    return struct.pack("<I", len(raw_name)) + raw_name + struct.pack("<Q", len(payload)) + payload


def _f64_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def _read_exact(fh, count: int) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise BundleFormatError("truncated bundle file")
    return data


def save_bundle(
    path,
    cf_model: CfModel,
    tfidf: TfIdfModel,
    fingerprint: str,
) -> None:
    header = json.dumps(
        {
            "format_version": BUNDLE_FORMAT_VERSION,
            "k": cf_model.k,
            "trained_at": cf_model.trained_at,
            "fingerprint": fingerprint,
        },
        sort_keys=True,
    ).encode("utf-8")

    f = cf_model.factors
    m, k = f.U.shape
    n = f.Vt.shape[1]
    factors = struct.pack("<QQQ", m, n, k)
    factors += _f64_bytes(f.U) + _f64_bytes(f.sigma) + _f64_bytes(f.Vt) + _f64_bytes(f.row_means)

    cf_index = json.dumps(
        {
            "user_ids": list(cf_model.user_ids),
            "item_ids": list(cf_model.item_ids),
            "seen": [sorted(s) for s in cf_model.seen],
        },
        sort_keys=True,
    ).encode("utf-8")

    tfidf_index = json.dumps(
        {
            "vocabulary": tfidf.vocabulary,
            "doc_freq": tfidf.doc_freq.tolist(),
            "n_docs": tfidf.n_docs,
            "item_ids": list(tfidf.item_ids),
            "offsets": tfidf.offsets.tolist(),
            "term_idx": tfidf.term_idx.tolist(),
        },
        sort_keys=True,
    ).encode("utf-8")

    blob = io.BytesIO()
    blob.write(BUNDLE_MAGIC)
    blob.write(struct.pack("<I", len(header)))
    blob.write(header)
    blob.write(_pack_section("factors", factors))
    blob.write(_pack_section("cf_index", cf_index))
    blob.write(_pack_section("tfidf_index", tfidf_index))
    blob.write(_pack_section("tfidf_weights", _f64_bytes(tfidf.weights)))
    with open(path, "wb") as fh:
        fh.write(blob.getvalue())


def load_bundle(path) -> tuple[CfModel, TfIdfModel, dict]:
    """Read a bundle back; returns (cf_model, tfidf_model, header)."""
    with open(path, "rb") as fh:
        if _read_exact(fh, len(BUNDLE_MAGIC)) != BUNDLE_MAGIC:
            raise BundleFormatError("not a model bundle (bad magic)")
        (header_len,) = struct.unpack("<I", _read_exact(fh, 4))
        header = json.loads(_read_exact(fh, header_len).decode("utf-8"))
        if header.get("format_version") != BUNDLE_FORMAT_VERSION:
            raise BundleFormatError(f"unsupported format_version {header.get('format_version')!r}")
        sections: dict[str, bytes] = {}
        while True:
            head = fh.read(4)
            if not head:
                break
            (name_len,) = struct.unpack("<I", head)
            name = _read_exact(fh, name_len).decode("ascii")
            (payload_len,) = struct.unpack("<Q", _read_exact(fh, 8))
            sections[name] = _read_exact(fh, payload_len)

    for required in ("factors", "cf_index", "tfidf_index", "tfidf_weights"):
        if required not in sections:
            raise BundleFormatError(f"missing section {required!r}")

    raw = sections["factors"]
    m, n, k = struct.unpack_from("<QQQ", raw)
    cursor = 24
    def take(count):
        nonlocal cursor
        out = np.frombuffer(raw, dtype="<f8", count=count, offset=cursor).copy()
        cursor += count * 8
        return out

    U = take(m * k).reshape(m, k)
    sigma = take(k)
    Vt = take(k * n).reshape(k, n)
    row_means = take(m)
    factors = SvdFactors(U, sigma, Vt, row_means)

    cf_index = json.loads(sections["cf_index"].decode("utf-8"))
    user_ids = tuple(cf_index["user_ids"])
    item_ids = tuple(cf_index["item_ids"])
    cf_model = CfModel(
        factors=factors,
        user_ids=user_ids,
        item_ids=item_ids,
        user_row={u: i for i, u in enumerate(user_ids)},
        item_col={t: j for j, t in enumerate(item_ids)},
        seen=tuple(frozenset(s) for s in cf_index["seen"]),
        k=int(k),
        trained_at=float(header["trained_at"]),
    )

    ti = json.loads(sections["tfidf_index"].decode("utf-8"))
    weights = np.frombuffer(sections["tfidf_weights"], dtype="<f8").copy()
    offsets = np.array(ti["offsets"], dtype=np.int64)
    n_docs = int(ti["n_docs"])
    norms = np.sqrt(
        np.bincount(
            np.repeat(np.arange(n_docs), np.diff(offsets)),
            weights=weights**2,
            minlength=n_docs,
        )
    )
    tfidf = TfIdfModel(
        vocabulary={t: int(i) for t, i in ti["vocabulary"].items()},
        doc_freq=np.array(ti["doc_freq"], dtype=np.int64),
        n_docs=n_docs,
        item_ids=tuple(ti["item_ids"]),
        item_row={t: r for r, t in enumerate(ti["item_ids"])},
        offsets=offsets,
        term_idx=np.array(ti["term_idx"], dtype=np.int64),
        weights=weights,
        norms=norms,
    )
    return cf_model, tfidf, header
