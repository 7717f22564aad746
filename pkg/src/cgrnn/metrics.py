"""Equal error rate per tag and averaged over the label alphabet."""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError, UndefinedMetricError
from .labels import TAG_ORDER


def _validate(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"{s.size} scores for {y.size} labels")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be binary")
    y = y.astype(bool)
    if y.all() or not y.any():
        raise UndefinedMetricError("EER needs at least one positive and one negative label")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    return s, y


def operating_points(scores, labels):
    """(FPR, FNR) at every distinct threshold, strictest first.

    A chunk is called positive when its score is >= the threshold.  The
    first point is the reject-all operating point (FPR 0, FNR 1).
    """
    s, y = _validate(scores, labels)
    levels, inverse = np.unique(s, return_inverse=True)
    pos_at = np.bincount(inverse, weights=y, minlength=levels.size)[::-1]
    neg_at = np.bincount(inverse, weights=~y, minlength=levels.size)[::-1]
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    pos_ge = np.concatenate([[0], np.cumsum(pos_at)])
    neg_ge = np.concatenate([[0], np.cumsum(neg_at)])
    fpr = neg_ge / n_neg
    fnr = (n_pos - pos_ge) / n_pos
    return fpr, fnr


def crossing(fpr, fnr) -> float:
    """Value where the curve meets FNR = FPR, linear between adjacent points."""
    below = np.nonzero(fnr <= fpr)[0]
    k = int(below[0])
    if fnr[k] == fpr[k] or k == 0:
        return float(fpr[k])
    d0 = fnr[k - 1] - fpr[k - 1]
    d1 = fnr[k] - fpr[k]
    a = d0 / (d0 - d1)
    return float(fpr[k - 1] + a * (fpr[k] - fpr[k - 1]))


def _lower_hull(x, y):
    hull = []
    for p in zip(x, y):
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    return np.array(hull)


def compute_eer(scores, labels, method: str = "sweep") -> float:
    """Equal error rate of binary ``labels`` ranked by ``scores``.

    ``method='sweep'`` interpolates between adjacent threshold operating
    points.  ``method='rocch'`` uses the ROC convex hull instead, which is
    never larger.
    """
    fpr, fnr = operating_points(scores, labels)
    if method == "sweep":
        return crossing(fpr, fnr)
    if method == "rocch":
        hull = _lower_hull(fpr, fnr)
        return crossing(hull[:, 0], hull[:, 1])
    raise ValueError(f"unknown EER method {method!r}")


@dataclass
class EERReport:
    per_tag: dict[str, float | None]
    average: float

    @classmethod
    def from_scores(cls, scores, references, tags=TAG_ORDER, method="sweep"):
        """One EER per column; single-class tags are reported as undefined."""
        scores = np.atleast_2d(scores)
        references = np.atleast_2d(references)
        per_tag = {}
        for i, tag in enumerate(tags):
            try:
                per_tag[tag] = compute_eer(scores[:, i], references[:, i], method)
            except UndefinedMetricError:
                warnings.warn(f"tag '{tag}' has a single class in this split; EER undefined")
                per_tag[tag] = None
        defined = [v for v in per_tag.values() if v is not None]
        average = float(np.mean(defined)) if defined else float("nan")
        return cls(per_tag, average)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["tag", "eer"])
        for tag, value in self.per_tag.items():
            writer.writerow([tag, "" if value is None else f"{value:.6f}"])
        writer.writerow(["ave", f"{self.average:.6f}"])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"per_tag": self.per_tag, "average": self.average})

    def table(self, label="") -> str:
        header = f"{'':<10}" + "".join(f"{t:>7}" for t in self.per_tag) + f"{'ave':>7}"
        cells = "".join(f"{'--':>7}" if v is None else f"{v:7.3f}" for v in self.per_tag.values())
        return header + "\n" + f"{label:<10}" + cells + f"{self.average:7.3f}"


def average_reports(reports) -> EERReport:
    """Per-tag mean across folds (undefined entries skipped)."""
    if not reports:
        raise DataError("no reports to average")
    tags = list(reports[0].per_tag)
    per_tag = {}
    for tag in tags:
        vals = [r.per_tag[tag] for r in reports if r.per_tag[tag] is not None]
        per_tag[tag] = float(np.mean(vals)) if vals else None
    defined = [v for v in per_tag.values() if v is not None]
    return EERReport(per_tag, float(np.mean(defined)) if defined else float("nan"))


def evaluate(checkpoint, manifest, loader=None, batch_size=16) -> EERReport:
    """Score every chunk of ``manifest`` with ``checkpoint`` and report EER per tag."""
    from .pipeline import FeatureLoader, predict

    ids = [e.chunk_id for e in manifest]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate chunk ids in evaluation manifest")
    loader = loader or FeatureLoader()
    probs = predict(checkpoint, manifest, loader, batch_size=batch_size)
    refs = np.stack([e.labels.vector() for e in manifest])
    return EERReport.from_scores(probs, refs)
