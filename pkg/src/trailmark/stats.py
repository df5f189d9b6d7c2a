"""Scoring scales, rater agreement, contingency tables and the Mann-Whitney U test."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateData, LengthMismatch, NoMajority, OutOfRange
from .trajectory_io import NEG, POS, SIGN_CLASSES, ZERO, normalize_sign

EXACT_MAX_N = 12


def collapse_11_to_5(score: int) -> int:
    """Map the 11-point scale (-5..+5) onto the 5-point scale (-2..+2).

    -5,-4 -> -2;  -3,-2 -> -1;  -1,0,+1 -> 0;  +2,+3 -> +1;  +4,+5 -> +2
    """
    if isinstance(score, bool) or int(score) != score or not -5 <= score <= 5:
        raise OutOfRange(f"11-point score {score!r} outside -5..+5")
    score = int(score)
    magnitude = abs(score) // 2  # 0,1 -> 0; 2,3 -> 1; 4,5 -> 2
    return magnitude if score >= 0 else -magnitude


def collapse_5_to_sign(score: int) -> str:
    if isinstance(score, bool) or int(score) != score or not -2 <= score <= 2:
        raise OutOfRange(f"5-point score {score!r} outside -2..+2")
    if score < 0:
        return NEG
    return POS if score > 0 else ZERO


def majority_vote(signs: Sequence[str]) -> str:
    """Return the class chosen by at least two of the three raters."""
    if len(signs) != 3:
        raise ValueError("majority_vote needs exactly three ratings")
    counts = Counter(normalize_sign(s) for s in signs)
    label, votes = counts.most_common(1)[0]
    if votes < 2:
        raise NoMajority(f"all three ratings differ: {tuple(signs)}")
    return label


def percent_agreement(panel) -> float:
    """Mean over subjects of the fraction of agreeing rater pairs."""
    panel = [[normalize_sign(s) for s in row] for row in panel]
    if not panel:
        raise ValueError("panel is empty")
    total = 0.0
    for row in panel:
        r = len(row)
        if r < 2:
            raise ValueError("each subject needs at least two ratings")
        pairs = sum(c * (c - 1) // 2 for c in Counter(row).values())
        total += pairs / (r * (r - 1) // 2)
    return total / len(panel)


def free_marginal_kappa(observed_agreement: float, q: int) -> float:
    """Free-marginal multi-rater kappa, chance agreement 1/q."""
    if q < 2:
        raise ValueError("q must be at least 2")
    chance = 1.0 / q
    return (observed_agreement - chance) / (1.0 - chance)


# ---------------------------------------------------------------------------
# Mann-Whitney U
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UTestResult:
    U: float
    z: float
    p_two_sided: float
    method: str
    n1: int
    n2: int


def midranks(values):
    """1-based ranks with ties sharing the mean of their positions."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_u_distribution(doubled_ranks, n1):
    """Counts of each doubled rank-sum over all size-n1 subsets.

    ``doubled_ranks`` are integers (2 x midrank), so sums index an array.
    Returns ``counts[j]`` for rank-sum ``j`` in doubled units.
    """
    total = int(sum(doubled_ranks))
    # table[c, s]: number of c-subsets of the items seen so far with doubled sum s
    table = np.zeros((n1 + 1, total + 1), dtype=object)
    table[0, 0] = 1
    for r in doubled_ranks:
        r = int(r)
        for c in range(n1, 0, -1):
            table[c, r:] = table[c, r:] + table[c - 1, : total + 1 - r]
    return table[n1]


def mann_whitney(a, b, method: str = "auto") -> UTestResult:
    """Two-sided Mann-Whitney U test of ``a`` against ``b``.

    ``U`` counts pairs with ``a_i > b_j`` plus half the ties.  With
    ``n1 + n2 <= 12`` (``method="auto"``) the p-value is exact, from the
    permutation distribution of the tie-aware rank sum; otherwise a normal
    approximation with tie-corrected variance and no continuity correction.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    n1, n2 = len(a), len(b)
    if n1 < 1 or n2 < 1:
        raise ValueError("both samples need at least one value")
    pooled = np.concatenate([a, b])
    if np.all(pooled == pooled[0]):
        raise DegenerateData("all values are tied")
    n = n1 + n2
    ranks = midranks(pooled)
    rank_sum_a = ranks[:n1].sum()
    u = rank_sum_a - n1 * (n1 + 1) / 2.0
    mean_u = n1 * n2 / 2.0

    _, tie_counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(tie_counts.astype(float) ** 3 - tie_counts))
    var = (n1 * n2 / 12.0) * ((n + 1) - tie_term / (n * (n - 1)))
    z = (u - mean_u) / math.sqrt(var)

    if method == "auto":
        method = "exact" if n <= EXACT_MAX_N else "normal"
    if method == "exact":
        doubled = np.rint(2 * ranks).astype(np.int64)
        counts = _exact_u_distribution(doubled, n1)
        offset = n1 * (n1 + 1)  # doubled rank-sum -> doubled U
        dev_obs = abs(2 * u - 2 * mean_u)
        extreme = 0
        for s in np.nonzero(counts)[0]:
            if abs((s - offset) - 2 * mean_u) >= dev_obs - 1e-9:
                extreme += counts[s]
        p = float(extreme) / math.comb(n, n1)
    elif method == "normal":
        p = math.erfc(abs(z) / math.sqrt(2.0))
    else:
        raise ValueError(f"unknown method {method!r}")
    return UTestResult(float(u), float(z), min(1.0, p), method, n1, n2)


# ---------------------------------------------------------------------------
# contingency tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CrossTab:
    row_labels: tuple
    col_labels: tuple
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def row_totals(self):
        return self.counts.sum(axis=1)

    @property
    def col_totals(self):
        return self.counts.sum(axis=0)

    @property
    def purity(self) -> float:
        """Share of samples that carry their cluster's majority label."""
        return float(self.counts.max(axis=1).sum()) / self.total

    def to_dict(self) -> dict:
        return {
            "clusters": [int(r) for r in self.row_labels],
            "labels": list(self.col_labels),
            "counts": self.counts.astype(int).tolist(),
            "cluster_totals": self.row_totals.astype(int).tolist(),
            "label_totals": self.col_totals.astype(int).tolist(),
            "total": self.total,
            "purity": self.purity,
        }


def cross_tab(assignments, labels) -> CrossTab:
    """Cluster-by-label contingency counts.

    Labels are ordered by the canonical sign order when they are sign
    classes, otherwise sorted.
    """
    assignments = list(assignments)
    labels = list(labels)
    if len(assignments) != len(labels):
        raise LengthMismatch(f"{len(assignments)} assignments vs {len(labels)} labels")
    if not assignments:
        raise ValueError("cross_tab needs at least one sample")
    rows = sorted(set(assignments))
    present = set(labels)
    if present <= set(SIGN_CLASSES):
        cols = [s for s in SIGN_CLASSES if s in present]
    else:
        cols = sorted(present)
    counts = np.zeros((len(rows), len(cols)), dtype=np.int64)
    r_index = {r: i for i, r in enumerate(rows)}
    c_index = {c: j for j, c in enumerate(cols)}
    for a, lab in zip(assignments, labels):
        counts[r_index[a], c_index[lab]] += 1
    return CrossTab(tuple(rows), tuple(cols), counts)
