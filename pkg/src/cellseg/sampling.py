"""Class-imbalance oversampling plans and the per-epoch batch count.

Minority classes (everything except the class with the most cells) each
receive n_extra = round(alpha_t * beta_t / max beta * N_train) extra
images, beta_t = sqrt(C_train / C_t); extra images are drawn with
replacement with probability proportional to the class's cell share per
image.
"""

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np


@dataclass
class DatasetManifest:
    image_ids: list
    classes: list
    counts: np.ndarray  # (n_images, n_classes) non-negative ints

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (len(self.image_ids), len(self.classes)):
            raise ValueError("counts shape does not match image_ids x classes")
        if (self.counts < 0).any():
            raise ValueError("cell counts must be non-negative")
        if self.counts.sum() == 0:
            raise ValueError("manifest has no cells in any class")

    @property
    def n_images(self) -> int:
        return len(self.image_ids)

    def class_totals(self) -> dict:
        return {c: int(t) for c, t in zip(self.classes, self.counts.sum(axis=0))}


def load_manifest_csv(path) -> DatasetManifest:
    """CSV with header image_id,<class>,<class>,... and integer counts."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if not header or header[0] != "image_id":
            raise ValueError(f"{path}: first CSV column must be 'image_id'")
        classes = header[1:]
        ids, rows = [], []
        for row in reader:
            ids.append(row[0])
            rows.append([int(x) for x in row[1:]])
    return DatasetManifest(ids, classes, np.array(rows, dtype=np.int64))


@dataclass
class ClassPlan:
    alpha: float
    beta: float
    n_extra: int


@dataclass
class OversamplePlan:
    majority_class: str
    per_class: dict  # minority class -> ClassPlan
    n_train: int

    @property
    def total_extra(self) -> int:
        return sum(p.n_extra for p in self.per_class.values())

    @property
    def total_images(self) -> int:
        return self.n_train + self.total_extra


def oversample_counts(manifest: DatasetManifest, alphas) -> OversamplePlan:
    """Per-minority-class oversampling counts (nearest-integer rounding).

    alphas is either a scalar or {class: alpha}. The majority class (most
    cells overall) is excluded; a minority class with zero cells is an
    error.
    """
    totals = manifest.class_totals()
    c_train = sum(totals.values())
    majority = max(totals, key=lambda c: (totals[c], c))
    minority = [c for c in manifest.classes if c != majority]
    for c in minority:
        if totals[c] == 0:
            raise ValueError(f"minority class {c!r} has zero cells; cannot oversample")

    if isinstance(alphas, dict):
        missing = [c for c in minority if c not in alphas]
        if missing:
            raise ValueError(f"missing alpha for classes: {missing}")
        alpha = {c: float(alphas[c]) for c in minority}
    else:
        alpha = {c: float(alphas) for c in minority}

    beta = {c: math.sqrt(c_train / totals[c]) for c in minority}
    beta_max = max(beta.values())
    per_class = {
        c: ClassPlan(
            alpha=alpha[c],
            beta=beta[c],
            n_extra=round(alpha[c] * beta[c] / beta_max * manifest.n_images),
        )
        for c in minority
    }
    return OversamplePlan(majority, per_class, manifest.n_images)


def sample_extra_images(manifest: DatasetManifest, plan: OversamplePlan, seed: int) -> dict:
    """Draw the extra image multiset per minority class, reproducibly.

    Uses a single PCG64 stream seeded with `seed`; classes are processed
    in manifest order. Within a class, image probability is its share of
    that class's cells.
    """
    rng = np.random.default_rng(seed)
    out = {}
    ids = np.array(manifest.image_ids, dtype=object)
    for ci, c in enumerate(manifest.classes):
        if c not in plan.per_class:
            continue
        cls_counts = manifest.counts[:, ci].astype(np.float64)
        p = cls_counts / cls_counts.sum()
        n = plan.per_class[c].n_extra
        out[c] = list(rng.choice(ids, size=n, replace=True, p=p)) if n > 0 else []
    return out


def epoch_batch_count(n_train: int, n_batch: int, image_height: int = 256) -> int:
    """ceil(n_train / n_batch * (H/256)^2), computed exactly."""
    if n_train < 1 or n_batch < 1 or image_height < 256:
        raise ValueError("need n_train >= 1, n_batch >= 1, image_height >= 256")
    value = Fraction(n_train, n_batch) * Fraction(image_height, 256) ** 2
    return math.ceil(value)
