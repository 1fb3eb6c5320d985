"""Occupancy metrics: IoU, F-score, voxel accuracy, Chamfer-L2.

All comparisons binarize at 0.5.  Chamfer is the symmetric mean of squared
nearest-neighbour distances between occupied-voxel center sets, computed
by brute force in voxel-length^2 units; it is an error on empty sets
rather than silently defined.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DataError

THRESHOLD = 0.5


@dataclass
class MetricSet:
    iou: float
    f_score: float
    accuracy: float
    chamfer_l2: float | None = None

    def as_dict(self):
        out = {"iou": self.iou, "f_score": self.f_score,
               "accuracy": self.accuracy}
        if self.chamfer_l2 is not None:
            out["chamfer_l2"] = self.chamfer_l2
        return out


def _binarize(volume):
    arr = np.asarray(volume)
    if arr.ndim == 4:
        arr = arr[0] if arr.shape[0] == 1 else arr.max(axis=0)
    return arr > THRESHOLD


def occupied_points(volume) -> np.ndarray:
    """Centers of occupied voxels as an (n, 3) float array of indices."""
    return np.argwhere(_binarize(volume)).astype(np.float64)


def iou(pred, target) -> float:
    p, t = _binarize(pred), _binarize(target)
    union = np.logical_or(p, t).sum()
    if union == 0:
        return 1.0  # both empty: perfect agreement
    return float(np.logical_and(p, t).sum() / union)


def f_score(pred, target) -> float:
    p, t = _binarize(pred), _binarize(target)
    tp = np.logical_and(p, t).sum()
    if p.sum() == 0 and t.sum() == 0:
        return 1.0
    if tp == 0:
        return 0.0
    precision = tp / p.sum()
    recall = tp / t.sum()
    return float(2 * precision * recall / (precision + recall))


def voxel_accuracy(pred, target) -> float:
    p, t = _binarize(pred), _binarize(target)
    return float((p == t).mean())


def chamfer_l2(pred, target, chunk=1024) -> float:
    """Brute-force symmetric mean squared nearest-neighbour distance."""
    a = occupied_points(pred)
    b = occupied_points(target)
    if len(a) == 0 or len(b) == 0:
        raise DataError("chamfer distance is undefined for an empty voxel set")

    def directed(src, dst):
        mins = np.empty(len(src))
        for lo in range(0, len(src), chunk):
            block = src[lo:lo + chunk]
            d2 = ((block[:, None, :] - dst[None, :, :]) ** 2).sum(axis=2)
            mins[lo:lo + len(block)] = d2.min(axis=1)
        return mins.mean()

    return float(0.5 * (directed(a, b) + directed(b, a)))


def _to_array(volume):
    # accepts ndarray, Tensor, or VoxelGrid
    while hasattr(volume, "data"):
        volume = volume.data
    return np.asarray(volume)


def metric_suite(pred, target, with_chamfer=True) -> MetricSet:
    """All dense-task metrics for one prediction/target pair."""
    pred = _to_array(pred)
    target = _to_array(target)
    if pred.shape != target.shape:
        raise DataError(f"metric_suite: shape mismatch {pred.shape} vs {target.shape}")
    result = MetricSet(iou=iou(pred, target), f_score=f_score(pred, target),
                       accuracy=voxel_accuracy(pred, target))
    if with_chamfer:
        result.chamfer_l2 = chamfer_l2(pred, target)
    return result


def classification_accuracy(pred_labels, true_labels) -> float:
    pred_labels = np.asarray(pred_labels)
    true_labels = np.asarray(true_labels)
    if pred_labels.shape != true_labels.shape:
        raise DataError(f"label sets differ in size: {pred_labels.shape} "
                        f"vs {true_labels.shape}")
    if pred_labels.size == 0:
        raise DataError("cannot score an empty label set")
    return float((pred_labels == true_labels).mean())
