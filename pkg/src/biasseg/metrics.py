"""Segmentation quality metrics and label matching.

For a region r, with A the truth pixel set and B the prediction:
FPR = |B \\ A| / (|I| - |A|), FNR = |A \\ B| / |A|,
DSC = 2 |A and B| / (|A| + |B|).  Since a solver's region indices carry
no semantics, predictions are aligned to the truth by the permutation
maximizing total DSC (exhaustive for up to four regions, greedy beyond).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .imagegrid import LabelMap

#: Up to this many regions the matcher searches all permutations.
EXHAUSTIVE_MATCH_LIMIT = 4


@dataclass(frozen=True)
class RegionReport:
    """Counts and ratios for one region."""

    region: int
    truth_size: int
    pred_size: int
    n_false_pos: int
    n_false_neg: int
    fpr: float
    fnr: float
    dsc: float


def _region_masks(pred: LabelMap, truth: LabelMap, region: int):
    if pred.labels.shape != truth.labels.shape:
        raise ValueError("prediction and truth grids differ")
    return pred.labels == region, truth.labels == region


def fpr(pred: LabelMap, truth: LabelMap, region: int) -> float:
    """False positive ratio of one region."""
    b, a = _region_masks(pred, truth, region)
    total = a.size
    a_size = int(a.sum())
    if a_size == total:
        raise ZeroDivisionError("truth region covers the whole image, FPR undefined")
    return float((b & ~a).sum() / (total - a_size))


def fnr(pred: LabelMap, truth: LabelMap, region: int) -> float:
    """False negative ratio of one region."""
    b, a = _region_masks(pred, truth, region)
    a_size = int(a.sum())
    if a_size == 0:
        raise ZeroDivisionError("empty truth region, FNR undefined")
    return float((a & ~b).sum() / a_size)


def dsc(pred: LabelMap, truth: LabelMap, region: int) -> float:
    """Dice similarity coefficient of one region."""
    b, a = _region_masks(pred, truth, region)
    denom = int(a.sum()) + int(b.sum())
    if denom == 0:
        raise ZeroDivisionError("both regions empty, DSC undefined")
    return float(2.0 * (a & b).sum() / denom)


def _dsc_table(pred: LabelMap, truth: LabelMap, n_regions: int) -> np.ndarray:
    """DSC of every (pred label, truth label) pair; both-empty pairs score 1."""
    table = np.ones((n_regions, n_regions))
    for p in range(1, n_regions + 1):
        b = pred.labels == p
        for t in range(1, n_regions + 1):
            a = truth.labels == t
            denom = int(a.sum()) + int(b.sum())
            if denom:
                table[p - 1, t - 1] = 2.0 * (a & b).sum() / denom
    return table


def match_labels(pred: LabelMap, truth: LabelMap, n_regions: int) -> tuple:
    """Permutation aligning predicted labels to truth labels.

    Returns ``mapping`` with ``mapping[k-1]`` the truth label assigned to
    predicted label k.  Up to four regions the total-DSC optimum over all
    permutations is returned; beyond that a greedy pass assigns pairs in
    descending DSC order.  Ties break toward lower label indices either
    way, so the result is deterministic.
    """
    if pred.labels.shape != truth.labels.shape:
        raise ValueError("prediction and truth grids differ")
    table = _dsc_table(pred, truth, n_regions)
    if n_regions <= EXHAUSTIVE_MATCH_LIMIT:
        best, best_score = None, -1.0
        for perm in permutations(range(n_regions)):
            score = sum(table[p, perm[p]] for p in range(n_regions))
            if score > best_score:
                best, best_score = perm, score
        return tuple(t + 1 for t in best)
    mapping = [0] * n_regions
    free_pred = set(range(n_regions))
    free_truth = set(range(n_regions))
    while free_pred:
        best = max(
            ((table[p, t], -p, -t) for p in free_pred for t in free_truth),
        )
        p, t = -best[1], -best[2]
        mapping[p] = t + 1
        free_pred.remove(p)
        free_truth.remove(t)
    return tuple(mapping)


def relabel(pred: LabelMap, mapping: tuple) -> LabelMap:
    """Apply a label mapping from :func:`match_labels`."""
    lut = np.zeros(len(mapping) + 1, dtype=np.int32)
    for k, t in enumerate(mapping, start=1):
        lut[k] = t
    return LabelMap(lut[pred.labels])


def region_report(pred: LabelMap, truth: LabelMap, n_regions: int) -> list[RegionReport]:
    """Per-region metrics; regions empty in the truth are skipped."""
    reports = []
    total = truth.labels.size
    for r in range(1, n_regions + 1):
        b, a = _region_masks(pred, truth, r)
        a_size, b_size = int(a.sum()), int(b.sum())
        if a_size == 0:
            continue
        nfp = int((b & ~a).sum())
        nfn = int((a & ~b).sum())
        reports.append(
            RegionReport(
                region=r,
                truth_size=a_size,
                pred_size=b_size,
                n_false_pos=nfp,
                n_false_neg=nfn,
                fpr=nfp / (total - a_size) if a_size < total else float("nan"),
                fnr=nfn / a_size,
                dsc=2.0 * (a & b).sum() / (a_size + b_size),
            )
        )
    return reports


def write_report_csv(reports: list[RegionReport], path) -> None:
    """Columns: region, truth_size, pred_size, NFP, NFN, FPR, FNR, DSC."""
    with open(path, "w", newline="") as fh:
        fh.write("region,truth_size,pred_size,nfp,nfn,fpr,fnr,dsc\n")
        for r in reports:
            fh.write(
                f"{r.region},{r.truth_size},{r.pred_size},{r.n_false_pos},"
                f"{r.n_false_neg},{r.fpr:.17g},{r.fnr:.17g},{r.dsc:.17g}\n"
            )
