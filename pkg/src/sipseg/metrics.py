"""Segmentation evaluation: confusion matrix, per-class and aggregate
metrics, ROC / precision-recall sweeps, PSNR and SSIM.

Per-class metrics reduce the 4x4 confusion matrix one-vs-rest:
tp = pixels of the class predicted as it, fp = other pixels predicted as
it, fn = its pixels predicted otherwise, tn = the rest.  Ratios with a
zero denominator evaluate to 1 when the complementary error count is
zero (nothing could have gone wrong) and to 0 otherwise; error rates
evaluate to 0.  Every such event is counted and reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError
from .imgcore import CLASS_NAMES, NUM_CLASSES, require_same_shape, validate_gray, validate_labels

CURVE_STEP = 0.003


def confusion_matrix(gt: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """K x K counts; entry (g, p) = pixels of true class g predicted p."""
    g = validate_labels(gt)
    p = validate_labels(pred)
    require_same_shape(g, p)
    flat = g.astype(np.int64).ravel() * NUM_CLASSES + p.astype(np.int64).ravel()
    return np.bincount(flat, minlength=NUM_CLASSES * NUM_CLASSES).reshape(NUM_CLASSES, NUM_CLASSES)


def one_vs_rest(cm: np.ndarray, cls: int) -> tuple[int, int, int, int]:
    """(tp, fp, fn, tn) for one class."""
    tp = int(cm[cls, cls])
    fp = int(cm[:, cls].sum() - cm[cls, cls])
    fn = int(cm[cls, :].sum() - cm[cls, cls])
    tn = int(cm.sum() - tp - fp - fn)
    return tp, fp, fn, tn


@dataclass(frozen=True)
class ClassReport:
    accuracy: float
    precision: float
    recall: float
    specificity: float
    npv: float
    iou: float
    dice: float
    f1: float
    fpr: float
    fnr: float
    nice2: float

    def to_json_dict(self) -> dict:
        return {
            "A": self.accuracy,
            "P": self.precision,
            "R": self.recall,
            "S": self.specificity,
            "NPV": self.npv,
            "IoU": self.iou,
            "Dice": self.dice,
            "F1": self.f1,
            "FPR": self.fpr,
            "FNR": self.fnr,
            "N2": self.nice2,
        }


class _Degenerate:
    """Counter for zero-denominator events."""

    def __init__(self) -> None:
        self.count = 0

    def ratio(self, num: float, den: float, perfect: bool) -> float:
        if den > 0:
            return num / den
        self.count += 1
        return 1.0 if perfect else 0.0


def _class_report(tp: int, fp: int, fn: int, tn: int, deg: _Degenerate) -> ClassReport:
    total = tp + fp + fn + tn
    precision = deg.ratio(tp, tp + fp, perfect=fn == 0)
    recall = deg.ratio(tp, tp + fn, perfect=fp == 0)
    # specificity recalls true negatives against negative outcomes that
    # include the false negatives; npv is measured against false positives
    specificity = deg.ratio(tn, tn + fn, perfect=fp == 0)
    npv = deg.ratio(tn, tn + fp, perfect=fn == 0)
    fpr = deg.ratio(fp, fp + tn, perfect=False)
    fnr = deg.ratio(fn, fn + tp, perfect=False)
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return ClassReport(
        accuracy=(tp + tn) / total,
        precision=precision,
        recall=recall,
        specificity=specificity,
        npv=npv,
        iou=deg.ratio(tp, tp + fp + fn, perfect=True),
        dice=deg.ratio(2 * tp, 2 * tp + fp + fn, perfect=True),
        f1=f1,
        fpr=fpr,
        fnr=fnr,
        nice2=(fpr + fnr) / 2.0,
    )


def class_metrics(cm: np.ndarray) -> tuple[list[ClassReport], int]:
    """Per-class reports plus the number of zero-denominator events."""
    if cm.sum() == 0:
        raise ShapeMismatchError("empty confusion matrix")
    deg = _Degenerate()
    reports = [_class_report(*one_vs_rest(cm, c), deg) for c in range(NUM_CLASSES)]
    return reports, deg.count


@dataclass(frozen=True)
class AggregateReport:
    mean_accuracy: float  # mean over images of the per-image mean class recall
    global_accuracy: float  # mean over images of class-averaged one-vs-rest accuracy
    mean_iou: float
    fw_iou: float  # per-class IoU weighted by ground-truth pixel share
    mean_dice: float
    nice1: float  # mean fraction of disagreeing pixels
    nice2: float  # mean of the per-class (FPR + FNR) / 2
    skipped_terms: int  # class terms dropped from per-image means (absent classes)

    def to_json_dict(self) -> dict:
        return {
            "MA": self.mean_accuracy,
            "GA": self.global_accuracy,
            "MIoU": self.mean_iou,
            "FWIoU": self.fw_iou,
            "Dice": self.mean_dice,
            "Nice1": self.nice1,
            # undefined (all class terms degenerate) serializes as null
            "Nice2": None if math.isnan(self.nice2) else self.nice2,
        }


def _mean_present(values: list[float]) -> float:
    return sum(values) / len(values)


def aggregate_metrics(cms: list[np.ndarray]) -> AggregateReport:
    """Aggregate per-image confusion matrices.

    Per-image means skip classes whose defining denominator is zero
    (class absent); the skip count is surfaced in the report.
    """
    if not cms:
        raise ShapeMismatchError("need at least one confusion matrix")
    skipped = 0
    per_image = {"ma": [], "ga": [], "miou": [], "fwiou": [], "dice": [], "nice1": [], "nice2": []}
    for cm in cms:
        total = int(cm.sum())
        recalls, accs, ious, dices, nice2s = [], [], [], [], []
        fw = 0.0
        for c in range(NUM_CLASSES):
            tp, fp, fn, tn = one_vs_rest(cm, c)
            accs.append((tp + tn) / total)
            if tp + fn > 0:
                recalls.append(tp / (tp + fn))
            else:
                skipped += 1
            if tp + fp + fn > 0:
                iou = tp / (tp + fp + fn)
                ious.append(iou)
                dices.append(2 * tp / (2 * tp + fp + fn))
            else:
                skipped += 1
                iou = 0.0
            fw += (tp + fn) / total * iou
            if fp + tn > 0 and fn + tp > 0:
                nice2s.append((fp / (fp + tn) + fn / (fn + tp)) / 2.0)
            else:
                skipped += 1
        per_image["ma"].append(_mean_present(recalls))
        per_image["ga"].append(_mean_present(accs))
        per_image["miou"].append(_mean_present(ious))
        per_image["fwiou"].append(fw)
        per_image["dice"].append(_mean_present(dices))
        per_image["nice1"].append((total - int(np.trace(cm))) / total)
        if nice2s:
            per_image["nice2"].append(_mean_present(nice2s))
    return AggregateReport(
        mean_accuracy=_mean_present(per_image["ma"]),
        global_accuracy=_mean_present(per_image["ga"]),
        mean_iou=_mean_present(per_image["miou"]),
        fw_iou=_mean_present(per_image["fwiou"]),
        mean_dice=_mean_present(per_image["dice"]),
        nice1=_mean_present(per_image["nice1"]),
        nice2=_mean_present(per_image["nice2"]) if per_image["nice2"] else float("nan"),
        skipped_terms=skipped,
    )


# ---------------------------------------------------------------------------
# threshold sweeps

def threshold_grid(step: float = CURVE_STEP) -> np.ndarray:
    """Thresholds 0, step, 2*step, ... plus the inclusive endpoint 1.0."""
    return np.concatenate([np.arange(0.0, 1.0, step), [1.0]])


@dataclass(frozen=True)
class CurveResult:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    auc: float
    defined: bool


def _trapezoid(x: np.ndarray, y: np.ndarray) -> float:
    return float(((x[1:] - x[:-1]) * (y[1:] + y[:-1]) / 2.0).sum())


def curves_and_auc(gt: np.ndarray, prob: np.ndarray, step: float = CURVE_STEP) -> dict[str, CurveResult]:
    """Per-class ROC and precision-recall sweeps over a fixed grid.

    A pixel counts as predicted-positive for class c at threshold t when
    prob[c] >= t.  AUC integrates TPR over FPR (trapezoid, sorted by
    FPR).  Classes with no positive or no negative ground-truth pixels
    are flagged undefined.
    """
    lab = validate_labels(gt)
    p = np.asarray(prob, dtype=np.float64)
    if p.ndim != 3 or p.shape[0] != NUM_CLASSES or p.shape[1:] != lab.shape:
        raise ShapeMismatchError(f"prob must be (K, H, W) matching labels, got {p.shape}")
    taus = threshold_grid(step)
    results: dict[str, CurveResult] = {}
    for c, name in enumerate(CLASS_NAMES):
        pos = (lab == c).ravel()
        scores = p[c].ravel()
        n_pos = int(pos.sum())
        n_neg = pos.size - n_pos
        # number of scores >= tau via bin counts over the grid
        idx = np.searchsorted(taus, scores, side="right") - 1
        pos_hist = np.bincount(idx[pos], minlength=taus.size)
        neg_hist = np.bincount(idx[~pos], minlength=taus.size)
        tp = pos_hist[::-1].cumsum()[::-1].astype(np.float64)
        fp = neg_hist[::-1].cumsum()[::-1].astype(np.float64)
        if n_pos == 0 or n_neg == 0:
            nanv = np.full(taus.size, np.nan)
            results[name] = CurveResult(taus, nanv, nanv, nanv, nanv, float("nan"), False)
            continue
        tpr = tp / n_pos
        fpr = fp / n_neg
        predicted = tp + fp
        precision = np.where(predicted > 0, tp / np.where(predicted > 0, predicted, 1.0), 1.0)
        order = np.argsort(fpr, kind="stable")
        results[name] = CurveResult(
            thresholds=taus,
            fpr=fpr,
            tpr=tpr,
            precision=precision,
            recall=tpr,
            auc=_trapezoid(fpr[order], tpr[order]),
            defined=True,
        )
    return results


# ---------------------------------------------------------------------------
# reference image quality

def psnr(ref: np.ndarray, img: np.ndarray) -> float:
    """10*log10(1/MSE) on the [0,1] scale; +inf for identical images."""
    a = validate_gray(ref)
    b = validate_gray(img)
    require_same_shape(a, b)
    mse = float(((a - b) ** 2).mean())
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _ssim_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    xs = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(xs**2) / (2.0 * sigma * sigma))
    k = np.outer(g, g)
    return k / k.sum()


def _filter_valid(img: np.ndarray, window: np.ndarray) -> np.ndarray:
    """2-D correlation against the window, valid positions only."""
    kh, kw = window.shape
    h, w = img.shape
    out = np.zeros((h - kh + 1, w - kw + 1))
    for dy in range(kh):
        for dx in range(kw):
            out += window[dy, dx] * img[dy : dy + h - kh + 1, dx : dx + w - kw + 1]
    return out


def ssim(ref: np.ndarray, img: np.ndarray) -> float:
    """Single-scale structural similarity, 11x11 Gaussian window, sigma
    1.5, stabilizers (0.01)^2 and (0.03)^2 on the unit intensity range."""
    a = validate_gray(ref)
    b = validate_gray(img)
    require_same_shape(a, b)
    if min(a.shape) < 11:
        raise ShapeMismatchError("ssim needs at least 11x11 images")
    win = _ssim_window()
    c1, c2 = 0.01**2, 0.03**2
    mu_a = _filter_valid(a, win)
    mu_b = _filter_valid(b, win)
    var_a = _filter_valid(a * a, win) - mu_a**2
    var_b = _filter_valid(b * b, win) - mu_b**2
    cov = _filter_valid(a * b, win) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float((num / den).mean())


# ---------------------------------------------------------------------------
# report assembly

def evaluation_report(pairs: list[tuple[np.ndarray, np.ndarray]]) -> dict:
    """Full JSON-ready report for (ground truth, prediction) label pairs."""
    cms = [confusion_matrix(gt, pred) for gt, pred in pairs]
    total_cm = np.sum(cms, axis=0)
    reports, degenerate = class_metrics(total_cm)
    aggregate = aggregate_metrics(cms)
    return {
        "per_class": {name: rep.to_json_dict() for name, rep in zip(CLASS_NAMES, reports)},
        "aggregate": aggregate.to_json_dict(),
        "meta": {
            "images": len(pairs),
            "pixels": int(total_cm.sum()),
            "degenerate_events": degenerate + aggregate.skipped_terms,
        },
    }
