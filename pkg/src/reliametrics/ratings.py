"""Sparse user-item rating storage, dataset loaders, synthetic generators.

The matrix type is immutable after construction: downstream code (splitting,
neighborhood models, resampling) reads it concurrently without locks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

FORMATS = ("ml1m-double-colon", "ml100k-tab", "generic-csv")

_CSV_HEADER = "user,item,rating"


class RatingsMatrix:
    """Sparse user x item rating store.

    Entries are kept in canonical order (ascending user id, then ascending
    item id); internal indices 0..n-1 follow the sorted external ids, so
    results never depend on input order.  Absence of a cell means the user
    has not voted on the item.

    Parameters
    ----------
    triples : iterable of (user, item, rating)
        External ids may be ints or strings, but must be of one type.
    scale : (float, float)
        Inclusive rating bounds; every rating must fall inside.
    """

    def __init__(self, triples: Iterable[tuple], scale: tuple[float, float] = (1.0, 5.0)):
        lo, hi = float(scale[0]), float(scale[1])
        if not lo < hi:
            raise ValueError(f"invalid rating scale ({lo}, {hi})")
        self.scale = (lo, hi)

        seen: dict[tuple, float] = {}
        for user, item, rating in triples:
            rating = float(rating)
            if not math.isfinite(rating):
                raise ValueError(f"non-finite rating for ({user!r}, {item!r})")
            if not lo <= rating <= hi:
                raise ValueError(
                    f"rating {rating} for ({user!r}, {item!r}) outside scale [{lo}, {hi}]"
                )
            key = (user, item)
            if key in seen:
                raise ValueError(f"duplicate rating for ({user!r}, {item!r})")
            seen[key] = rating

        self.users: tuple = tuple(sorted({u for u, _ in seen}))
        self.items: tuple = tuple(sorted({i for _, i in seen}))
        self.user_index: dict = {u: j for j, u in enumerate(self.users)}
        self.item_index: dict = {i: j for j, i in enumerate(self.items)}

        n = len(seen)
        u_idx = np.empty(n, dtype=np.int64)
        i_idx = np.empty(n, dtype=np.int64)
        vals = np.empty(n, dtype=np.float64)
        for j, ((user, item), rating) in enumerate(sorted(seen.items())):
            u_idx[j] = self.user_index[user]
            i_idx[j] = self.item_index[item]
            vals[j] = rating
        self._u = u_idx
        self._i = i_idx
        self._r = vals

        # CSR-like user slices (entries already user-major)
        self._uptr = np.searchsorted(u_idx, np.arange(len(self.users) + 1))
        # CSC-like item view
        order = np.lexsort((u_idx, i_idx))
        self._by_item_u = u_idx[order]
        self._by_item_r = vals[order]
        self._iptr = np.searchsorted(i_idx[order], np.arange(len(self.items) + 1))

        self._entries: dict | None = None

    # -- basic facts ------------------------------------------------------

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def num_items(self) -> int:
        return len(self.items)

    @property
    def num_ratings(self) -> int:
        return len(self._r)

    @property
    def entries(self) -> dict:
        """Read-only ``{(user, item): rating}`` view (materialized lazily)."""
        if self._entries is None:
            self._entries = {
                (self.users[u], self.items[i]): r
                for u, i, r in zip(self._u, self._i, self._r)
            }
        return self._entries

    def iter_triples(self) -> Iterator[tuple]:
        """Yield (user, item, rating) in canonical order."""
        for u, i, r in zip(self._u, self._i, self._r):
            yield self.users[u], self.items[i], float(r)

    def rating(self, user, item) -> float | None:
        """Stored rating for the cell, or None if the user has not voted."""
        ui = self.user_index.get(user)
        ii = self.item_index.get(item)
        if ui is None or ii is None:
            return None
        lo, hi = self._uptr[ui], self._uptr[ui + 1]
        pos = lo + np.searchsorted(self._i[lo:hi], ii)
        if pos < hi and self._i[pos] == ii:
            return float(self._r[pos])
        return None

    def user_ratings(self, user) -> dict:
        """All ratings of one user as ``{item: rating}``."""
        ui = self.user_index[user]
        lo, hi = self._uptr[ui], self._uptr[ui + 1]
        return {
            self.items[i]: float(r) for i, r in zip(self._i[lo:hi], self._r[lo:hi])
        }

    def item_ratings(self, item) -> dict:
        """All ratings received by one item as ``{user: rating}``."""
        ii = self.item_index[item]
        lo, hi = self._iptr[ii], self._iptr[ii + 1]
        return {
            self.users[u]: float(r)
            for u, r in zip(self._by_item_u[lo:hi], self._by_item_r[lo:hi])
        }

    # -- internal index-level views (used by the model/measure modules) ----

    def user_slice(self, ui: int) -> tuple[np.ndarray, np.ndarray]:
        """(item indices, ratings) of internal user ``ui``, item-sorted."""
        lo, hi = self._uptr[ui], self._uptr[ui + 1]
        return self._i[lo:hi], self._r[lo:hi]

    def item_slice(self, ii: int) -> tuple[np.ndarray, np.ndarray]:
        """(user indices, ratings) of internal item ``ii``, user-sorted."""
        lo, hi = self._iptr[ii], self._iptr[ii + 1]
        return self._by_item_u[lo:hi], self._by_item_r[lo:hi]

    def user_counts(self) -> np.ndarray:
        return np.diff(self._uptr)

    def item_counts(self) -> np.ndarray:
        return np.diff(self._iptr)

    def user_means(self) -> np.ndarray:
        """Per-user mean rating over the stored entries."""
        counts = self.user_counts()
        sums = np.add.reduceat(self._r, self._uptr[:-1]) if len(self._r) else np.zeros(0)
        return sums / counts

    def csr(self):
        """The ratings as a ``scipy.sparse.csr_matrix`` (users x items)."""
        from scipy.sparse import csr_matrix

        return csr_matrix(
            (self._r, self._i, self._uptr), shape=(self.num_users, self.num_items)
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, RatingsMatrix):
            return NotImplemented
        return (
            self.scale == other.scale
            and self.users == other.users
            and self.items == other.items
            and np.array_equal(self._u, other._u)
            and np.array_equal(self._i, other._i)
            and np.array_equal(self._r, other._r)
        )

    def __repr__(self) -> str:
        return (
            f"RatingsMatrix({self.num_users} users, {self.num_items} items, "
            f"{self.num_ratings} ratings, scale={self.scale})"
        )


@dataclass(frozen=True)
class DatasetMeta:
    """Headline facts of a dataset, derived from the matrix itself."""

    name: str
    num_users: int
    num_items: int
    num_ratings: int
    scale: tuple[float, float]

    @classmethod
    def from_matrix(cls, name: str, matrix: RatingsMatrix) -> "DatasetMeta":
        return cls(name, matrix.num_users, matrix.num_items, matrix.num_ratings,
                   matrix.scale)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def _parse_line(line: str, fmt: str, lineno: int) -> tuple:
    if fmt == "ml1m-double-colon":
        parts = line.split("::")
        want = 4
    elif fmt == "ml100k-tab":
        parts = line.split("\t")
        want = 4
    else:
        parts = line.split(",")
        want = 3
    if len(parts) != want:
        raise ValueError(f"line {lineno}: expected {want} fields, got {len(parts)}: {line!r}")
    try:
        if fmt == "generic-csv":
            user: object = parts[0].strip()
            item: object = parts[1].strip()
            if user == "" or item == "":
                raise ValueError("empty id")
        else:
            user = int(parts[0])
            item = int(parts[1])
        rating = float(parts[2])
    except ValueError as exc:
        raise ValueError(f"line {lineno}: malformed record {line!r}") from exc
    return user, item, rating


def load_movielens(path, fmt: str, scale: tuple[float, float] = (1.0, 5.0)) -> RatingsMatrix:
    """Load a ratings file into a :class:`RatingsMatrix`.

    Parameters
    ----------
    path : str or Path
    fmt : str
        One of ``ml1m-double-colon`` (``user::item::rating::timestamp``),
        ``ml100k-tab`` (``user<TAB>item<TAB>rating<TAB>timestamp``) or
        ``generic-csv`` (``user,item,rating`` with that exact header).
    scale : (float, float)
        Expected rating bounds; out-of-scale records are an error.

    Timestamps are parsed and discarded.  Duplicate (user, item) records
    and malformed lines raise ``ValueError`` with the offending line
    number.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    start = 1
    if fmt == "generic-csv" and lines:
        if lines[0].strip() != _CSV_HEADER:
            raise ValueError(f"line 1: expected header {_CSV_HEADER!r}, got {lines[0]!r}")
        start = 2
        lines = lines[1:]

    triples = []
    for offset, line in enumerate(lines):
        if not line.strip():
            continue
        triples.append(_parse_line(line, fmt, start + offset))
    try:
        return RatingsMatrix(triples, scale=scale)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc


def save_ratings(matrix: RatingsMatrix, path, fmt: str) -> None:
    """Write the matrix in one of the supported layouts (timestamps as 0)."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    lines = []
    if fmt == "generic-csv":
        lines.append(_CSV_HEADER)
    for user, item, rating in matrix.iter_triples():
        r = f"{rating:g}"
        if fmt == "ml1m-double-colon":
            lines.append(f"{user}::{item}::{r}::0")
        elif fmt == "ml100k-tab":
            lines.append(f"{user}\t{item}\t{r}\t0")
        else:
            lines.append(f"{user},{item},{r}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

def generate_synthetic(
    num_users: int,
    num_items: int,
    density: float,
    noise: float,
    seed: int,
    scale: tuple[float, float] = (1.0, 5.0),
) -> RatingsMatrix:
    """Random rating matrix from a latent user-preference + item-quality model.

    Each cell is filled independently with probability ``density``; the
    raw value is mid-scale plus a user bias, an item quality offset and
    ``noise`` times a standard normal draw, rounded to the nearest integer
    and clamped into the scale.  Bit-reproducible for a fixed seed.
    """
    if num_users < 1 or num_items < 1:
        raise ValueError("num_users and num_items must be positive")
    if not 0.0 < density <= 1.0:
        raise ValueError("density must be in (0, 1]")
    if density * num_users * num_items < 1.0:
        raise ValueError("expected cell count below 1; increase density or dimensions")
    if noise < 0.0:
        raise ValueError("noise must be nonnegative")

    rng = np.random.default_rng(seed)
    lo, hi = float(scale[0]), float(scale[1])
    mid = 0.5 * (lo + hi)
    user_bias = rng.normal(0.0, 0.8, size=num_users)
    item_quality = rng.normal(0.0, 0.8, size=num_items)
    raw = mid + user_bias[:, None] + item_quality[None, :]
    if noise > 0.0:
        raw = raw + noise * rng.standard_normal((num_users, num_items))
    mask = rng.random((num_users, num_items)) < density
    values = np.clip(np.rint(raw), lo, hi)

    uu, ii = np.nonzero(mask)
    triples = [(int(u) + 1, int(i) + 1, float(values[u, i])) for u, i in zip(uu, ii)]
    return RatingsMatrix(triples, scale=scale)


def generate_longtail(
    num_users: int,
    num_items: int,
    num_ratings: int,
    noise: float = 0.6,
    seed: int = 0,
    scale: tuple[float, float] = (1.0, 5.0),
) -> RatingsMatrix:
    """Benchmark-scale rating matrix with skewed popularity and activity.

    Unlike :func:`generate_synthetic`, cells are not filled uniformly:
    item popularity follows a power law and user activity a lognormal,
    mimicking public movie-rating datasets.  Ratings come from a latent
    model with a low-rank taste term, so neighborhood methods find real
    structure, plus per-cell noise.  Exactly ``num_ratings`` distinct
    cells are produced.  Bit-reproducible for a fixed seed.
    """
    if num_users < 1 or num_items < 1:
        raise ValueError("num_users and num_items must be positive")
    if not 1 <= num_ratings <= num_users * num_items:
        raise ValueError("num_ratings must be in [1, num_users * num_items]")

    rng = np.random.default_rng(seed)
    lo, hi = float(scale[0]), float(scale[1])

    # popularity / activity profiles
    item_weight = (np.arange(1, num_items + 1)) ** -0.8
    rng.shuffle(item_weight)
    user_weight = rng.lognormal(mean=0.0, sigma=1.0, size=num_users)

    # how many ratings each user contributes (at least 1 where possible)
    user_quota = rng.multinomial(num_ratings, user_weight / user_weight.sum())
    user_quota = np.minimum(user_quota, num_items)
    shortfall = num_ratings - int(user_quota.sum())
    while shortfall > 0:
        room = np.nonzero(user_quota < num_items)[0]
        take = room[rng.integers(0, len(room), size=min(shortfall, len(room)))]
        np.add.at(user_quota, take, 1)
        user_quota = np.minimum(user_quota, num_items)
        shortfall = num_ratings - int(user_quota.sum())

    # latent structure
    rank = 4
    user_bias = rng.normal(0.0, 0.45, size=num_users)
    item_quality = rng.normal(0.0, 0.5, size=num_items)
    user_taste = rng.normal(0.0, 1.0, size=(num_users, rank))
    item_taste = rng.normal(0.0, 0.55, size=(num_items, rank)) / math.sqrt(rank)
    base = 0.5 * (lo + hi) + 0.6

    log_w = np.log(item_weight)
    triples = []
    for u in range(num_users):
        q = int(user_quota[u])
        if q == 0:
            continue
        # Gumbel top-k draws q distinct items with popularity-proportional odds
        keys = log_w + rng.gumbel(size=num_items)
        picked = np.argpartition(-keys, q - 1)[:q]
        raw = (
            base
            + user_bias[u]
            + item_quality[picked]
            + item_taste[picked] @ user_taste[u]
            + noise * rng.standard_normal(q)
        )
        vals = np.clip(np.rint(raw), lo, hi)
        for i, v in zip(sorted(int(x) for x in picked), vals[np.argsort(picked, kind="stable")]):
            triples.append((u + 1, i + 1, float(v)))
    return RatingsMatrix(triples, scale=scale)
