"""Numeric rank of update matrices and per-adapter rank reports."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np

from dualora import binarize
from dualora.adapters import Adapter, LoraAdapter, Variant
from dualora.matrix import Matrix, relu

# numpy.linalg.matrix_rank convention: sigma > eps * max(d, k) * sigma_max
MACHINE_EPS = float(np.finfo(np.float64).eps)

CSV_COLUMNS = ("label", "d", "k", "r1", "r2", "rank_BA", "rank_relu_BA", "rank_sign_DC", "rank_delta")


def singular_values(m: Matrix) -> np.ndarray:
    """Descending singular values (LAPACK divide-and-conquer SVD via numpy)."""
    return np.linalg.svd(np.asarray(m, dtype=np.float64), compute_uv=False)


def numeric_rank(m: Matrix, rel_tol: float = MACHINE_EPS) -> int:
    if not rel_tol > 0:
        raise ValueError(f"rel_tol must be positive, got {rel_tol}")
    s = singular_values(m)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rel_tol * max(m.shape) * s[0]))


@dataclass(frozen=True)
class RankRow:
    label: str
    d: int
    k: int
    r1: int
    r2: int
    rank_BA: int
    rank_relu_BA: int
    rank_sign_DC: int
    rank_delta: int

    @property
    def lora_rank_bound(self) -> int:
        return self.r1


@dataclass
class RankReport:
    rows: list[RankRow]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            d = asdict(row)
            writer.writerow([d[c] for c in CSV_COLUMNS])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RankReport":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected rank CSV header {reader.fieldnames}")
        rows = [RankRow(label=r["label"], **{c: int(r[c]) for c in CSV_COLUMNS[1:]}) for r in reader]
        return cls(rows)


def rank_row(adapter: Adapter, label: str, rel_tol: float = MACHINE_EPS) -> RankRow:
    d, k = adapter.shape
    ba = adapter.B @ adapter.A
    rank_ba = numeric_rank(ba, rel_tol)
    delta_rank = numeric_rank(adapter.delta(), rel_tol)
    if isinstance(adapter, LoraAdapter):
        # no activation or direction group; the columns repeat the plain product
        return RankRow(label, d, k, adapter.r, 0, rank_ba, rank_ba, 0, delta_rank)
    if adapter.variant is Variant.FIXED_BINARY:
        direction = adapter.W_b
    else:
        direction = binarize.sign(adapter.D @ adapter.C)
    return RankRow(
        label, d, k, adapter.r1, adapter.r2 if adapter.variant is not Variant.FIXED_BINARY else 0,
        rank_ba, numeric_rank(relu(ba), rel_tol), numeric_rank(direction, rel_tol), delta_rank,
    )


def rank_report(adapters: Sequence[Adapter] | Iterable[tuple[str, Adapter]],
                rel_tol: float = MACHINE_EPS) -> RankReport:
    """Ranks of BA, ReLU(BA), Sign(DC) and the full update for each adapter.

    Accepts bare adapters (labelled ``layer0``, ``layer1``, ...) or
    ``(label, adapter)`` pairs. The update is taken as the adapter currently
    stands, warm-up factor included.
    """
    items = list(adapters)
    if not items:
        raise ValueError("rank_report needs at least one adapter")
    rows = []
    for i, item in enumerate(items):
        label, adapter = item if isinstance(item, tuple) else (f"layer{i}", item)
        rows.append(rank_row(adapter, label, rel_tol))
    return RankReport(rows)


def hadamard_rank_bound_holds(x: Matrix, y: Matrix, rel_tol: float = MACHINE_EPS) -> bool:
    bound = min(numeric_rank(x, rel_tol) * numeric_rank(y, rel_tol), min(x.shape))
    return numeric_rank(x * y, rel_tol) <= bound


__all__ = [
    "CSV_COLUMNS", "MACHINE_EPS", "RankReport", "RankRow", "hadamard_rank_bound_holds",
    "numeric_rank", "rank_report", "rank_row", "singular_values",
]
