"""Training loop, Adam optimizer, evaluation, checkpoints.

Completion trains voxel-wise binary cross-entropy on logits against the
full (unoccluded) shape; classification trains softmax cross-entropy on a
pooled head.  Runs are deterministic for a given seed; a non-finite loss
aborts with a NumericError rather than training through garbage.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import engine as E
from .config import ModelConfig, config_from_dict
from .errors import DataError, NumericError
from .metrics import THRESHOLD, classification_accuracy, metric_suite
from .models import build_model, param_dict

CHECKPOINT_MAGIC = b"TPC1"


@dataclass
class TrainConfig:
    epochs: int = 12
    batch_size: int = 8
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def validate(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        return self


class Adam:
    def __init__(self, params: dict, cfg: TrainConfig):
        self.cfg = cfg
        self.params = params
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self):
        c = self.cfg
        self.t += 1
        bias1 = 1.0 - c.beta1 ** self.t
        bias2 = 1.0 - c.beta2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= c.beta1
            m += (1 - c.beta1) * g
            v *= c.beta2
            v += (1 - c.beta2) * (g * g)
            p.data -= c.lr * (m / bias1) / (np.sqrt(v / bias2) + c.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()


def _completion_target(sample):
    return sample.target.data.data


def _sample_loss(model, sample, task):
    if task == "classify":
        logits = model(sample.volume.data)
        return E.softmax_cross_entropy(logits, sample.label)
    logits = model(sample.volume.data)
    target = E.Tensor(_completion_target(sample), dtype=logits.dtype)
    return E.bce_with_logits_mean(logits, target)


def predict_label(model, volume) -> int:
    return int(np.argmax(model(volume.data).data))


def evaluate(model, samples, task, with_chamfer=False) -> dict:
    """Mean metrics over a sample list (chamfer only where defined)."""
    if not samples:
        raise DataError("cannot evaluate on an empty dataset")
    if task == "classify":
        preds = [predict_label(model, s.volume) for s in samples]
        acc = classification_accuracy(preds, [s.label for s in samples])
        return {"accuracy": acc}
    ious, fs, chams, skipped = [], [], [], 0
    for s in samples:
        logits = model(s.volume.data).data
        pred = logits >= 0.0  # sigmoid(logit) >= 0.5
        target = _completion_target(s) > THRESHOLD
        m = metric_suite(pred, target, with_chamfer=False)
        ious.append(m.iou)
        fs.append(m.f_score)
        if with_chamfer:
            if pred.any() and target.any():
                chams.append(metric_suite(pred, target).chamfer_l2)
            else:
                skipped += 1
    out = {"iou": float(np.mean(ious)), "f_score": float(np.mean(fs))}
    if with_chamfer:
        out["chamfer_l2"] = float(np.mean(chams)) if chams else float("nan")
        out["chamfer_skipped"] = skipped
    return out


@dataclass
class TrainResult:
    model_cfg: ModelConfig
    train_cfg: TrainConfig
    best_params: dict            # name -> ndarray snapshot
    best_metric: float
    best_epoch: int
    history: list = field(default_factory=list)  # (epoch, split, metric, value)

    def history_csv(self) -> str:
        lines = ["epoch,split,metric,value"]
        for epoch, split, metric, value in self.history:
            lines.append(f"{epoch},{split},{metric},{value:.6f}")
        return "\n".join(lines) + "\n"


def train_model(model_cfg: ModelConfig, train_set, val_set,
                train_cfg: TrainConfig | None = None,
                log=None) -> TrainResult:
    train_cfg = (train_cfg or TrainConfig()).validate()
    model = build_model(model_cfg)
    params = param_dict(model)
    opt = Adam(params, train_cfg)
    rng = np.random.default_rng(train_cfg.seed)
    task = model_cfg.task
    key_metric = "accuracy" if task == "classify" else "iou"

    history = []
    best_metric = -1.0
    best_epoch = -1
    best_params = {k: p.data.copy() for k, p in params.items()}

    step = 0
    for epoch in range(train_cfg.epochs):
        order = rng.permutation(len(train_set))
        epoch_loss = 0.0
        for lo in range(0, len(order), train_cfg.batch_size):
            batch = [train_set[i] for i in order[lo:lo + train_cfg.batch_size]]
            opt.zero_grad()
            with E.Tape() as tape:
                total = _sample_loss(model, batch[0], task)
                for sample in batch[1:]:
                    total = E.add(total, _sample_loss(model, sample, task))
                loss = E.scale(total, 1.0 / len(batch))
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(f"non-finite loss {value} at step {step}")
            tape.backward(loss)
            opt.step()
            epoch_loss += value * len(batch)
            step += 1
        epoch_loss /= len(train_set)
        history.append((epoch, "train", "loss", epoch_loss))

        scores = evaluate(model, val_set, task)
        for metric, value in scores.items():
            history.append((epoch, "val", metric, float(value)))
        score = scores[key_metric]
        if score > best_metric:
            best_metric = score
            best_epoch = epoch
            best_params = {k: p.data.copy() for k, p in params.items()}
        if log:
            shown = ", ".join(f"{k}={v:.4f}" for k, v in scores.items())
            log(f"epoch {epoch}: train_loss={epoch_loss:.4f} {shown}")

    return TrainResult(model_cfg=model_cfg, train_cfg=train_cfg,
                       best_params=best_params, best_metric=best_metric,
                       best_epoch=best_epoch, history=history)


def restore_model(model_cfg: ModelConfig, saved: dict):
    """Build a model and load a parameter snapshot into it."""
    model = build_model(model_cfg)
    params = param_dict(model)
    missing = set(params) - set(saved)
    extra = set(saved) - set(params)
    if missing or extra:
        raise DataError(f"checkpoint does not match model: missing={sorted(missing)} "
                        f"extra={sorted(extra)}")
    for name, tensor in params.items():
        arr = np.asarray(saved[name])
        if arr.shape != tensor.data.shape:
            raise DataError(f"checkpoint param {name} has shape {arr.shape}, "
                            f"model expects {tensor.data.shape}")
        tensor.data = arr.astype(tensor.data.dtype)
    return model


# ---------------------------------------------------------------------------
# Checkpoint container: fixed little-endian layout, byte-identical per run.

def save_checkpoint(path, model_cfg: ModelConfig, params: dict, meta=None):
    entries = []
    blobs = []
    for name, arr in params.items():
        arr = np.asarray(arr.data if isinstance(arr, E.Tensor) else arr)
        blob = np.ascontiguousarray(arr, dtype=np.float32).tobytes()
        entries.append({"name": name, "shape": list(arr.shape)})
        blobs.append(blob)
    header = json.dumps({"config": model_cfg.to_dict(), "params": entries,
                         "meta": meta or {}}, sort_keys=True).encode()
    try:
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            for blob in blobs:
                fh.write(blob)
    except OSError as exc:
        raise DataError(f"cannot write checkpoint {path}: {exc}") from None


def load_checkpoint(path):
    """Returns (model_cfg, params dict of float32 arrays, meta)."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from None
    if raw[:4] != CHECKPOINT_MAGIC:
        raise DataError(f"{path} is not a checkpoint file")
    (hlen,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8:8 + hlen].decode())
    cfg = config_from_dict(header["config"])
    offset = 8 + hlen
    params = {}
    for entry in header["params"]:
        n = int(np.prod(entry["shape"])) if entry["shape"] else 1
        blob = raw[offset:offset + 4 * n]
        if len(blob) != 4 * n:
            raise DataError(f"checkpoint {path} is truncated")
        params[entry["name"]] = np.frombuffer(blob, dtype="<f4").reshape(
            entry["shape"]).copy()
        offset += 4 * n
    if offset != len(raw):
        raise DataError(f"checkpoint {path} has trailing bytes")
    return cfg, params, header.get("meta", {})
