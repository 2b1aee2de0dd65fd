"""Detection / segmentation / classification / counting metrics.

Operates on pairs of instance label maps plus optional per-instance type
tables. Empty-image conventions follow the CoNIC-style handling and are
documented per function.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .grid import instance_centroids


@dataclass
class MatchResult:
    pairs: list  # (gt_id, pred_id, score); score = IoU or centroid distance
    unmatched_gt: list
    unmatched_pred: list

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fp(self) -> int:
        return len(self.unmatched_pred)

    @property
    def fn(self) -> int:
        return len(self.unmatched_gt)


def _instance_ids(labels: np.ndarray) -> np.ndarray:
    ids = np.unique(labels)
    return ids[ids > 0]


def _pair_intersections(gt: np.ndarray, pred: np.ndarray):
    """Intersection pixel counts for every overlapping (gt, pred) id pair."""
    both = (gt > 0) & (pred > 0)
    if not both.any():
        return {}
    g = gt[both].astype(np.int64)
    p = pred[both].astype(np.int64)
    m = int(pred.max()) + 1
    keys, counts = np.unique(g * m + p, return_counts=True)
    return {(int(k // m), int(k % m)): int(c) for k, c in zip(keys, counts)}


def _areas(labels: np.ndarray) -> dict:
    ids, counts = np.unique(labels[labels > 0], return_counts=True)
    return {int(i): int(c) for i, c in zip(ids, counts)}


def dice_fg(gt: np.ndarray, pred: np.ndarray) -> float:
    """Foreground Dice over binarized maps; both empty -> 1."""
    if gt.shape != pred.shape:
        raise ValueError("label map shapes differ")
    a = gt > 0
    b = pred > 0
    denom = a.sum() + b.sum()
    if denom == 0:
        return 1.0
    return float(2.0 * (a & b).sum() / denom)


def aji(gt: np.ndarray, pred: np.ndarray) -> float:
    """Aggregated Jaccard Index (Kumar), greedy over GT ids ascending.

    Each GT instance picks its best-IoU predicted instance (predictions
    may be reused across GT instances, per the reference definition);
    the areas of predictions never used go to the denominator. Both
    maps empty -> 1.
    """
    if gt.shape != pred.shape:
        raise ValueError("label map shapes differ")
    gt_ids = _instance_ids(gt)
    pred_ids = _instance_ids(pred)
    if gt_ids.size == 0 and pred_ids.size == 0:
        return 1.0
    if gt_ids.size == 0 or pred_ids.size == 0:
        return 0.0
    inter = _pair_intersections(gt, pred)
    ga = _areas(gt)
    pa = _areas(pred)
    used = set()
    num = 0
    den = 0
    for g in gt_ids:
        g = int(g)
        best_iou = -1.0
        best_p = None
        for (gg, p), i in inter.items():
            if gg != g:
                continue
            iou = i / (ga[g] + pa[p] - i)
            if iou > best_iou or (iou == best_iou and (best_p is None or p < best_p)):
                best_iou = iou
                best_p = p
        if best_p is None:
            den += ga[g]
        else:
            i = inter[(g, best_p)]
            num += i
            den += ga[g] + pa[best_p] - i
            used.add(best_p)
    for p in pred_ids:
        if int(p) not in used:
            den += pa[int(p)]
    return float(num / den) if den > 0 else 1.0


def match_by_centroid(gt: np.ndarray, pred: np.ndarray, radius: float) -> MatchResult:
    """Optimal one-to-one centroid assignment within a distance radius.

    Maximizes the number of matched pairs with centroid distance <=
    radius, breaking ties by minimum total distance (Hungarian on the
    thresholded bipartite graph).
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    gc = instance_centroids(gt)
    pc = instance_centroids(pred)
    if not gc or not pc:
        return MatchResult([], [c.id for c in gc], [c.id for c in pc])
    d = np.empty((len(gc), len(pc)))
    for i, g in enumerate(gc):
        for j, p in enumerate(pc):
            d[i, j] = np.hypot(g.row - p.row, g.col - p.col)
    # an inadmissible pair must cost more than any full set of admissible ones
    big = radius * (len(gc) + len(pc) + 1) + 1.0
    cost = np.where(d <= radius, d, big)
    ri, ci = linear_sum_assignment(cost)
    pairs = []
    matched_g, matched_p = set(), set()
    for i, j in zip(ri, ci):
        if d[i, j] <= radius:
            pairs.append((gc[i].id, pc[j].id, float(d[i, j])))
            matched_g.add(gc[i].id)
            matched_p.add(pc[j].id)
    return MatchResult(
        pairs,
        [c.id for c in gc if c.id not in matched_g],
        [c.id for c in pc if c.id not in matched_p],
    )


def prf1(match: MatchResult) -> tuple[float, float, float]:
    """Precision/recall/F1 from a match; vacuous ratios default to 1."""
    tp, fp, fn = match.tp, match.fp, match.fn
    p = tp / (tp + fp) if tp + fp > 0 else 1.0
    r = tp / (tp + fn) if tp + fn > 0 else 1.0
    f1 = tp / (tp + 0.5 * (fp + fn)) if tp + fp + fn > 0 else 1.0
    return p, r, f1


def match_by_iou(gt: np.ndarray, pred: np.ndarray, tau: float = 0.5) -> MatchResult:
    """Pairs with IoU strictly above tau (one-to-one at tau >= 0.5)."""
    if gt.shape != pred.shape:
        raise ValueError("label map shapes differ")
    inter = _pair_intersections(gt, pred)
    ga = _areas(gt)
    pa = _areas(pred)
    pairs = []
    matched_g, matched_p = set(), set()
    for (g, p), i in sorted(inter.items()):
        iou = i / (ga[g] + pa[p] - i)
        if iou > tau:
            if g in matched_g or p in matched_p:
                raise AssertionError("IoU matching above 0.5 must be one-to-one")
            pairs.append((g, p, float(iou)))
            matched_g.add(g)
            matched_p.add(p)
    return MatchResult(
        pairs,
        [int(g) for g in _instance_ids(gt) if int(g) not in matched_g],
        [int(p) for p in _instance_ids(pred) if int(p) not in matched_p],
    )


def pq_from_counts(tp: int, fp: int, fn: int, iou_sum: float) -> tuple[float, float, float]:
    """(dq, sq, pq) from pooled counts; empty-empty -> (1,1,1)."""
    if tp == 0:
        return (1.0, 1.0, 1.0) if fp == 0 and fn == 0 else (0.0, 0.0, 0.0)
    dq = tp / (tp + 0.5 * (fp + fn))
    sq = iou_sum / tp
    return dq, sq, dq * sq


def pq(gt: np.ndarray, pred: np.ndarray) -> tuple[float, float, float]:
    """Panoptic quality of one image pair: (dq, sq, pq)."""
    m = match_by_iou(gt, pred)
    return pq_from_counts(m.tp, m.fp, m.fn, sum(s for _, _, s in m.pairs))


def _restrict_to_class(labels: np.ndarray, types: dict, cls: int) -> np.ndarray:
    """Zero out instances whose type differs from cls."""
    keep = {i for i, t in types.items() if t == cls}
    out = np.where(np.isin(labels, list(keep)), labels, 0) if keep else np.zeros_like(labels)
    return out


def pq_plus_per_class(dataset: list, cls: int) -> Optional[float]:
    """Dataset-pooled PQ for one class (CoNIC's PQ+).

    dataset items are (gt, pred, gt_types, pred_types) with types as
    {instance id: type id}. TP/FP/FN and the IoU sum are pooled across
    images before the PQ formula. Returns None when the class is absent
    from both GT and predictions everywhere.
    """
    tp = fp = fn = 0
    iou_sum = 0.0
    seen = False
    for gt, pred, gt_types, pred_types in dataset:
        g = _restrict_to_class(gt, gt_types, cls)
        p = _restrict_to_class(pred, pred_types, cls)
        if g.max() > 0 or p.max() > 0:
            seen = True
        m = match_by_iou(g, p)
        tp += m.tp
        fp += m.fp
        fn += m.fn
        iou_sum += sum(s for _, _, s in m.pairs)
    if not seen:
        return None
    return pq_from_counts(tp, fp, fn, iou_sum)[2]


def mpq_plus(dataset: list, classes: list) -> tuple[float, dict]:
    """Mean of PQ+ over classes present somewhere in the dataset."""
    per_class = {}
    for cls in classes:
        v = pq_plus_per_class(dataset, cls)
        if v is not None:
            per_class[cls] = v
    mean = float(np.mean(list(per_class.values()))) if per_class else 1.0
    return mean, per_class


def mpq_pannuke(dataset: list, classes: list) -> tuple[float, float]:
    """PanNuke-style (mPQ, bPQ) with tissue-first averaging.

    dataset items are (gt, pred, gt_types, pred_types, tissue). Per
    image: mPQ averages PQ over classes present in the GT, bPQ treats
    all instances as one class. Scores average per tissue, then across
    tissues.
    """
    per_tissue_m = {}
    per_tissue_b = {}
    for gt, pred, gt_types, pred_types, tissue in dataset:
        present = sorted({t for t in gt_types.values() if t in classes})
        if present:
            vals = []
            for cls in present:
                g = _restrict_to_class(gt, gt_types, cls)
                p = _restrict_to_class(pred, pred_types, cls)
                vals.append(pq(g, p)[2])
            img_mpq = float(np.mean(vals))
        else:
            img_mpq = pq(gt, pred)[2]  # empty GT: falls back to binary convention
        img_bpq = pq(gt, pred)[2]
        per_tissue_m.setdefault(tissue, []).append(img_mpq)
        per_tissue_b.setdefault(tissue, []).append(img_bpq)
    mpq = float(np.mean([np.mean(v) for v in per_tissue_m.values()]))
    bpq = float(np.mean([np.mean(v) for v in per_tissue_b.values()]))
    return mpq, bpq


def r2_counts(true: np.ndarray, pred: np.ndarray, identity_line: bool = False) -> float:
    """Coefficient of determination of predicted vs true counts.

    Default fits an OLS line predicted ~ true and reports 1 - RSS/TSS of
    that fit; identity_line=True instead measures residuals about the
    line predicted = true. 2-D inputs (images x classes) average the
    per-class values.
    """
    true = np.asarray(true, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if true.shape != pred.shape:
        raise ValueError("count array shapes differ")
    if true.ndim == 2:
        return float(np.mean([
            r2_counts(true[:, k], pred[:, k], identity_line) for k in range(true.shape[1])
        ]))
    if identity_line:
        tss = ((pred - pred.mean()) ** 2).sum()
        rss = ((pred - true) ** 2).sum()
        if tss == 0:
            return 1.0 if rss == 0 else 0.0
        return float(1.0 - rss / tss)
    var_t = ((true - true.mean()) ** 2).sum()
    if var_t == 0:
        return 1.0 if np.array_equal(true, pred) else 0.0
    slope = ((true - true.mean()) * (pred - pred.mean())).sum() / var_t
    fit = pred.mean() + slope * (true - true.mean())
    tss = ((pred - pred.mean()) ** 2).sum()
    rss = ((pred - fit) ** 2).sum()
    if tss == 0:
        return 1.0
    return float(1.0 - rss / tss)


def evaluate_pair(gt: np.ndarray, pred: np.ndarray, match_radius: float) -> dict:
    """All per-image scalar metrics for one (gt, pred) pair."""
    m = match_by_centroid(gt, pred, match_radius)
    p, r, f1 = prf1(m)
    dq, sq, pq_v = pq(gt, pred)
    return {
        "dice": dice_fg(gt, pred),
        "aji": aji(gt, pred),
        "p": p,
        "r": r,
        "f1": f1,
        "tp": m.tp,
        "fp": m.fp,
        "fn": m.fn,
        "dq": dq,
        "sq": sq,
        "pq": pq_v,
    }
