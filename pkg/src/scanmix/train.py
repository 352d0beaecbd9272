"""Teacher-student training on range images.

One iteration consumes a labeled batch and an unlabeled batch of equal
size: every labeled/unlabeled pair is blended area-wise in point space,
the student predicts on labeled + unlabeled + blended inputs, the teacher
predicts on labeled + unlabeled, pseudo-labels gate on a confidence
threshold, and the loss combines supervised, blended, and teacher-
consistency terms. Only the student receives gradients; the teacher
tracks it by exponential moving average.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
import struct

import numpy as np

from .cloud import PointCloud, strip_labels
from .errors import TrainingDiverged
from .mixing import (
    ORDER_ODD_EVEN,
    ORDER_SHUFFLED,
    drop_even_areas,
    mix_scans,
    mixed_labels,
)
from .nn import SegModel, backward, forward_logits, sgd_step, softmax, softmax_backward
from .partition import (
    KIND_INCLINATION,
    KIND_RANDOM_AREA,
    KIND_RANDOM_POINT,
    assign_areas,
    partition_spec,
    sample_num_areas,
)
from .rangeview import label_image, point_labels_from_image, range_features, range_project
from .sensor import SensorConfig


@dataclass(frozen=True)
class Hyperparams:
    threshold: float = 0.9       # pseudo-label confidence gate
    lambda_mix: float = 1.0
    lambda_mt: float = 1.0
    ema_decay: float = 0.95
    lr: float = 0.1
    batch: int = 2
    m_lo: int = 2
    m_hi: int = 6

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must be in (0, 1]")
        if self.lambda_mix < 0 or self.lambda_mt < 0:
            raise ValueError("loss weights must be non-negative")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ValueError("ema_decay must be in [0, 1)")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if not 1 <= self.m_lo <= self.m_hi:
            raise ValueError("bad m range")


@dataclass(frozen=True)
class MixStrategy:
    """Which partition feeds the blend, and in which interleaving order."""

    partition_kind: str = KIND_INCLINATION
    order: str = ORDER_ODD_EVEN
    cutout: bool = False


@dataclass
class TrainState:
    student: SegModel
    teacher: SegModel
    step: int
    hyper: Hyperparams


@dataclass(frozen=True)
class LossBreakdown:
    step: int
    l_sup: float
    l_mix: float
    l_mt: float
    total: float


def init_train_state(model: SegModel, hyper: Hyperparams) -> TrainState:
    return TrainState(student=model, teacher=model.copy(), step=0, hyper=hyper)


def ce_loss(probs: np.ndarray, target: np.ndarray, ignored_id: int = 0):
    """Mean cross-entropy over non-ignored pixels, with dL/dlogits.

    probs: (..., K, h, w) softmax outputs; target: (..., h, w) class ids.
    The gradient uses the fused softmax form (p - onehot) / count. An
    all-ignored target yields loss 0 and a zero gradient.
    """
    probs = np.asarray(probs, np.float64)
    target = np.asarray(target)
    k = probs.shape[-3]
    valid = target != ignored_id
    count = int(valid.sum())
    dlogits = np.zeros_like(probs)
    if count == 0:
        return 0.0, dlogits
    tgt = np.where(valid, target, 0)
    onehot = np.moveaxis(np.eye(k)[tgt], -1, -3)
    p_true = np.take_along_axis(probs, np.expand_dims(tgt, -3), axis=-3).squeeze(-3)
    # log(0) = -inf is deliberate: a float-zero probability on the truth is
    # a diverged model, and the caller turns the inf into TrainingDiverged.
    with np.errstate(divide="ignore"):
        loss = float(-np.log(p_true)[valid].sum() / count)
    dlogits = (probs - onehot) * np.expand_dims(valid, -3) / count
    return loss, dlogits


def mt_loss(student_probs: np.ndarray, teacher_probs: np.ndarray, mask: np.ndarray):
    """Mean squared probability-vector gap over masked pixels.

    Returns the loss and its gradient w.r.t. the student logits; the
    teacher side is treated as a constant.
    """
    student_probs = np.asarray(student_probs, np.float64)
    teacher_probs = np.asarray(teacher_probs, np.float64)
    mask = np.asarray(mask, bool)
    count = int(mask.sum())
    if count == 0:
        return 0.0, np.zeros_like(student_probs)
    diff = (student_probs - teacher_probs) * np.expand_dims(mask, -3)
    loss = float((diff**2).sum() / count)
    dprobs = 2.0 * diff / count
    return loss, softmax_backward(student_probs, dprobs)


def pseudo_label(teacher_probs: np.ndarray, threshold: float, ignored_id: int = 0) -> np.ndarray:
    """Argmax labels where confidence clears the threshold, else ignored."""
    probs = np.asarray(teacher_probs, np.float64)
    conf = probs.max(axis=-3)
    labels = probs.argmax(axis=-3).astype(np.int32)  # ties: smallest class id
    labels[conf < threshold] = ignored_id
    return labels


def ema_update(teacher: SegModel, student: SegModel, decay: float) -> None:
    """teacher <- decay * teacher + (1 - decay) * student, elementwise."""
    for t, s in zip(teacher.parameters(), student.parameters()):
        t *= decay
        t += (1.0 - decay) * s


def _mix_spec_for(strategy: MixStrategy, m: int, config: SensorConfig, rng):
    if strategy.partition_kind == KIND_INCLINATION:
        return partition_spec(KIND_INCLINATION, m, config.incl_lo, config.incl_up)
    if strategy.partition_kind == KIND_RANDOM_AREA:
        seed = int(rng.integers(2**63))
        return partition_spec(KIND_RANDOM_AREA, m, 0.0, config.max_range, seed)
    if strategy.partition_kind == KIND_RANDOM_POINT:
        seed = int(rng.integers(2**63))
        return partition_spec(KIND_RANDOM_POINT, m, 0.0, 1.0, seed)
    raise ValueError(f"unsupported training partition kind {strategy.partition_kind!r}")


def train_iteration(
    state: TrainState,
    labeled_batch: list[PointCloud],
    unlabeled_batch: list[PointCloud],
    config: SensorConfig,
    step_rng: np.random.Generator,
    strategy: MixStrategy = MixStrategy(),
    ignored_id: int = 0,
) -> LossBreakdown:
    """Run one training iteration in place; returns the loss breakdown."""
    hp = state.hyper
    b = len(labeled_batch)
    if b != len(unlabeled_batch) or b < 1:
        raise ValueError("labeled and unlabeled batches must be non-empty and equal-sized")
    if any(not c.has_labels for c in labeled_batch):
        raise ValueError("labeled batch must carry labels")

    # Blend the data pairs first (geometry only; labels are blended later,
    # after the teacher has produced pseudo-labels).
    mixes = []
    mix_clouds = []
    for lab, unl in zip(labeled_batch, unlabeled_batch):
        if strategy.cutout:
            m = sample_num_areas(step_rng, hp.m_lo, hp.m_hi)
            spec = partition_spec(KIND_INCLINATION, m, config.incl_lo, config.incl_up)
            mixes.append((spec, None))
            mix_clouds.extend([drop_even_areas(strip_labels(lab), spec),
                               drop_even_areas(strip_labels(unl), spec)])
        else:
            m = sample_num_areas(step_rng, hp.m_lo, hp.m_hi)
            spec = _mix_spec_for(strategy, m, config, step_rng)
            shuffle_seed = (
                int(step_rng.integers(2**63)) if strategy.order == ORDER_SHUFFLED else None
            )
            result = mix_scans(
                strip_labels(lab), strip_labels(unl), spec, strategy.order, shuffle_seed
            )
            mixes.append((spec, result))
            mix_clouds.extend([result.mixed_a, result.mixed_b])

    lab_imgs = [range_project(strip_labels(c), config, ignored_id=ignored_id) for c in labeled_batch]
    unl_imgs = [range_project(c, config, ignored_id=ignored_id) for c in unlabeled_batch]
    mix_imgs = [range_project(c, config, ignored_id=ignored_id) for c in mix_clouds]

    feats = np.stack([range_features(i, config) for i in lab_imgs + unl_imgs + mix_imgs])
    logits, cache = forward_logits(state.student, feats)
    probs = softmax(logits)
    s_l, s_u, s_mix = probs[:b], probs[b : 2 * b], probs[2 * b :]

    teacher_feats = feats[: 2 * b]
    t_logits, _ = forward_logits(state.teacher, teacher_feats)
    t_probs = softmax(t_logits)

    pseudo_imgs = pseudo_label(t_probs[b : 2 * b], hp.threshold, ignored_id)

    # Blend the labels through the recorded provenance (same areas as the
    # data blend), then rasterize them with each blended image's survivors.
    mix_targets = []
    for i, (lab, unl) in enumerate(zip(labeled_batch, unlabeled_batch)):
        point_pseudo = point_labels_from_image(unl, pseudo_imgs[i], config, ignored_id)
        spec, result = mixes[i]
        if result is None:  # cutout keeps only the odd areas of each scan
            ya = drop_even_areas(lab, spec).labels
            keep = assign_areas(unl, spec).area_of % 2 == 1
            yb = point_pseudo[keep]
            mix_targets.extend([ya, yb])
        else:
            ya, yb = mixed_labels(result, lab.labels, point_pseudo)
            mix_targets.extend([ya, yb])
    mix_label_imgs = np.stack(
        [label_image(img, tgt, ignored_id) for img, tgt in zip(mix_imgs, mix_targets)]
    )
    sup_label_imgs = np.stack(
        [label_image(img, c.labels, ignored_id) for img, c in zip(lab_imgs, labeled_batch)]
    )

    l_sup, d_sup = ce_loss(s_l, sup_label_imgs, ignored_id)
    l_mix, d_mix = ce_loss(s_mix, mix_label_imgs, ignored_id)
    occ_mask = np.stack([(i.point_index >= 0) for i in lab_imgs + unl_imgs])
    l_mt, d_mt = mt_loss(probs[: 2 * b], t_probs, occ_mask)

    total = l_sup + hp.lambda_mix * l_mix + hp.lambda_mt * l_mt
    if not np.isfinite(total):
        raise TrainingDiverged(state.step, total)

    dlogits = np.zeros_like(probs)
    dlogits[:b] = d_sup + hp.lambda_mt * d_mt[:b]
    dlogits[b : 2 * b] = hp.lambda_mt * d_mt[b:]
    dlogits[2 * b :] = hp.lambda_mix * d_mix

    grads = backward(state.student, cache, dlogits)
    sgd_step(state.student, grads, hp.lr)
    ema_update(state.teacher, state.student, hp.ema_decay)
    state.step += 1
    return LossBreakdown(state.step, l_sup, l_mix, l_mt, total)


@dataclass(frozen=True)
class EvalResult:
    iou: dict[int, float]
    miou: float
    confusion: np.ndarray  # (K, K) truth x prediction over evaluated pixels


def iou_from_confusion(confusion: np.ndarray, ignored_id: int = 0) -> tuple[dict[int, float], float]:
    """Per-class IoU = TP/(TP+FP+FN); mean over classes present in truth."""
    k = confusion.shape[0]
    iou = {}
    for c in range(k):
        truth_count = confusion[c].sum()
        if c == ignored_id or truth_count == 0:
            continue
        tp = confusion[c, c]
        denom = truth_count + confusion[:, c].sum() - tp
        iou[c] = float(tp / denom) if denom else 0.0
    miou = float(np.mean(list(iou.values()))) if iou else 0.0
    return iou, miou


def predict_image(model: SegModel, cloud: PointCloud, config: SensorConfig, ignored_id: int = 0):
    """Project a cloud and return (image, per-pixel argmax prediction)."""
    img = range_project(cloud, config, ignored_id=ignored_id)
    feats = range_features(img, config)
    probs = softmax(forward_logits(model, feats)[0])
    return img, probs.argmax(axis=0)


def evaluate(
    model: SegModel,
    clouds: list[PointCloud],
    config: SensorConfig,
    ignored_id: int = 0,
) -> EvalResult:
    """Per-class IoU and mean IoU over all pixels with non-ignored truth."""
    k = model.k_classes
    confusion = np.zeros((k, k), np.int64)
    for cloud in clouds:
        if not cloud.has_labels:
            raise ValueError("evaluation needs labeled clouds")
        img, pred = predict_image(model, cloud, config, ignored_id)
        truth = img.labels
        valid = truth != ignored_id
        confusion += np.bincount(
            truth[valid].astype(np.int64) * k + pred[valid], minlength=k * k
        ).reshape(k, k)
    iou, miou = iou_from_confusion(confusion, ignored_id)
    return EvalResult(iou, miou, confusion)


_CKPT_MAGIC = b"SXCK"
_CKPT_VERSION = 1


def save_checkpoint(path: str | Path, state: TrainState) -> None:
    """Versioned binary dump: step plus named flat float64 arrays."""
    arrays: list[tuple[str, np.ndarray]] = []
    for tag, model in (("student", state.student), ("teacher", state.teacher)):
        for i, (w, bias) in enumerate(zip(model.weights, model.biases)):
            arrays.append((f"{tag}.w{i}", w))
            arrays.append((f"{tag}.b{i}", bias))
    chunks = [_CKPT_MAGIC, struct.pack("<IQI", _CKPT_VERSION, state.step, len(arrays))]
    for name, arr in arrays:
        nb = name.encode()
        chunks.append(struct.pack("<I", len(nb)) + nb)
        chunks.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, "<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> tuple[SegModel, SegModel, int]:
    data = Path(path).read_bytes()
    if data[:4] != _CKPT_MAGIC:
        raise ValueError("not a checkpoint file")
    version, step, n_arrays = struct.unpack_from("<IQI", data, 4)
    if version != _CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 4 + struct.calcsize("<IQI")
    named: dict[str, np.ndarray] = {}
    for _ in range(n_arrays):
        (nlen,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off : off + nlen].decode()
        off += nlen
        (ndim,) = struct.unpack_from("<I", data, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}Q", data, off)
        off += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, "<f8", count=size, offset=off).reshape(shape).copy()
        off += 8 * size
        named[name] = arr
    models = []
    for tag in ("student", "teacher"):
        ws, bs = [], []
        i = 0
        while f"{tag}.w{i}" in named:
            ws.append(named[f"{tag}.w{i}"])
            bs.append(named[f"{tag}.b{i}"])
            i += 1
        models.append(SegModel(ws, bs))
    return models[0], models[1], int(step)
