"""Experiment orchestration: dataset files, training runs, ablation grids,
and error-map rendering.

Everything here is a deterministic function of (data, config, seed); the
pairing schedule is derived statelessly from (seed, epoch), so resuming
from a checkpoint replays the exact trajectory a fresh run would produce.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .cloud import PointCloud
from .labels import LabelMap, label_map_from_json, label_map_to_json
from .mixing import ORDER_ODD_EVEN, ORDER_REVERSED, ORDER_SHUFFLED
from .nn import SegModel, backward, forward_logits, init_model, sgd_step, softmax
from .partition import KIND_INCLINATION, KIND_RANDOM_AREA, KIND_RANDOM_POINT
from .pnm import ERROR_CORRECT_BEV, ERROR_CORRECT_RV, error_rgb_from_masks
from .rangeview import label_image, range_features, range_project
from .scan_io import load_labels, load_scan, save_labels, save_scan
from .sensor import SensorConfig
from .synth import SceneParams, SynthDataset, default_label_map, make_dataset
from .train import (
    Hyperparams,
    LossBreakdown,
    MixStrategy,
    TrainState,
    ce_loss,
    ema_update,
    evaluate,
    init_train_state,
    predict_image,
    save_checkpoint,
    train_iteration,
)
STRATEGIES: dict[str, MixStrategy] = {
    "beam": MixStrategy(KIND_INCLINATION, ORDER_ODD_EVEN),
    "reversed": MixStrategy(KIND_INCLINATION, ORDER_REVERSED),
    "shuffled": MixStrategy(KIND_INCLINATION, ORDER_SHUFFLED),
    "cutmix": MixStrategy(KIND_RANDOM_AREA, ORDER_ODD_EVEN),
    "mixup": MixStrategy(KIND_RANDOM_POINT, ORDER_ODD_EVEN),
    "cutout": MixStrategy(KIND_INCLINATION, ORDER_ODD_EVEN, cutout=True),
}


# --- dataset files ------------------------------------------------------------


def save_dataset(ds: SynthDataset, root: str | Path) -> list[Path]:
    """Write a dataset tree: labeled/, unlabeled/, unlabeled_truth/, eval/.

    unlabeled_truth/ is the sealed ground truth for the unlabeled split;
    training must never read it.
    """
    root = Path(root)
    written = []

    def put(subdir, clouds, labels_from=None):
        d = root / subdir
        d.mkdir(parents=True, exist_ok=True)
        for i, cloud in enumerate(clouds):
            scan_path = d / f"{i:06d}.bin"
            save_scan(scan_path, cloud)
            written.append(scan_path)
            labels = cloud.labels if labels_from is None else labels_from[i]
            if labels is not None:
                label_path = d / f"{i:06d}.label"
                save_labels(label_path, labels)
                written.append(label_path)

    put("labeled", ds.labeled)
    put("unlabeled", ds.unlabeled)
    truth_dir = root / "unlabeled_truth"
    truth_dir.mkdir(parents=True, exist_ok=True)
    for i, labels in enumerate(ds.unlabeled_truth):
        p = truth_dir / f"{i:06d}.label"
        save_labels(p, labels)
        written.append(p)
    put("eval", ds.eval)
    lm_path = root / "labelmap.json"
    lm_path.write_text(label_map_to_json(ds.label_map))
    written.append(lm_path)
    return written


def load_split(root: str | Path, subdir: str, label_map: LabelMap) -> list[PointCloud]:
    d = Path(root) / subdir
    clouds = []
    for scan_path in sorted(d.glob("*.bin")):
        cloud = load_scan(scan_path)
        label_path = scan_path.with_suffix(".label")
        if label_path.exists():
            from .cloud import attach_labels

            cloud = attach_labels(cloud, load_labels(label_path, label_map))
        clouds.append(cloud)
    return clouds


def load_dataset(root: str | Path) -> SynthDataset:
    root = Path(root)
    label_map = label_map_from_json((root / "labelmap.json").read_text())
    labeled = load_split(root, "labeled", label_map)
    unlabeled = load_split(root, "unlabeled", label_map)
    truth = [
        load_labels(p, label_map) for p in sorted((root / "unlabeled_truth").glob("*.label"))
    ]
    evals = load_split(root, "eval", label_map)
    return SynthDataset(labeled, unlabeled, truth, evals, label_map)


# --- training runs ------------------------------------------------------------


@dataclass
class RunResult:
    losses: list[LossBreakdown]
    eval_history: list[tuple[int, float]]  # (step, teacher mIoU)
    teacher_eval: object
    student_eval: object
    state: TrainState


def _batch_indices(seed: int, step: int, batch: int, n_labeled: int, n_unlabeled: int):
    """Epoch-shuffled unlabeled order, each paired with a random labeled scan.

    Stateless in (seed, step): resuming at any step reproduces the schedule.
    """
    lab_idx, unl_idx = [], []
    for j in range(batch):
        g = step * batch + j
        epoch, off = divmod(g, n_unlabeled)
        perm = np.random.default_rng((seed, 101, epoch)).permutation(n_unlabeled)
        partners = np.random.default_rng((seed, 202, epoch)).integers(0, n_labeled, n_unlabeled)
        unl_idx.append(int(perm[off]))
        lab_idx.append(int(partners[off]))
    return lab_idx, unl_idx


def _supervised_iteration(state: TrainState, batch: list[PointCloud], config: SensorConfig,
                          ignored_id: int) -> LossBreakdown:
    # Fast path for the sup-only baseline: identical update to the full
    # iteration with both extra loss weights at zero, minus dead forwards.
    imgs = [range_project(c, config, ignored_id=ignored_id) for c in batch]
    feats = np.stack([range_features(i, config) for i in imgs])
    targets = np.stack([label_image(i, c.labels, ignored_id) for i, c in zip(imgs, batch)])
    logits, cache = forward_logits(state.student, feats)
    loss, dlogits = ce_loss(softmax(logits), targets, ignored_id)
    from .errors import TrainingDiverged

    if not np.isfinite(loss):
        raise TrainingDiverged(state.step, loss)
    sgd_step(state.student, backward(state.student, cache, dlogits), state.hyper.lr)
    ema_update(state.teacher, state.student, state.hyper.ema_decay)
    state.step += 1
    return LossBreakdown(state.step, loss, 0.0, 0.0, loss)


def run_training(
    ds: SynthDataset,
    config: SensorConfig,
    hyper: Hyperparams,
    *,
    channels=(8, 16),
    iterations: int = 300,
    seed: int = 0,
    strategy: str = "beam",
    eval_every: int = 0,
    checkpoint_every: int = 0,
    out_dir: str | Path | None = None,
    state: TrainState | None = None,
) -> RunResult:
    """Train for `iterations` steps and evaluate teacher and student.

    strategy "sup_only" trains on the labeled split alone; every other
    name selects a blend strategy from STRATEGIES. Pass `state` to resume:
    the schedule depends only on (seed, step), so the trajectory continues
    exactly where the checkpoint left off.
    """
    ignored_id = ds.label_map.ignored_id
    k = ds.label_map.k
    sup_only = strategy == "sup_only"
    if not sup_only and strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if not ds.labeled:
        raise ValueError("dataset has no labeled scans")
    if not sup_only and not ds.unlabeled:
        raise ValueError("semi-supervised training needs unlabeled scans")
    if state is None:
        state = init_train_state(init_model(k, tuple(channels), seed=seed), hyper)
    mix_strategy = STRATEGIES.get(strategy, STRATEGIES["beam"])

    losses: list[LossBreakdown] = []
    eval_history: list[tuple[int, float]] = []
    out_dir = Path(out_dir) if out_dir is not None else None
    while state.step < iterations:
        step = state.step
        if sup_only:
            rng_l = np.random.default_rng((seed, 303, step))
            batch_idx = rng_l.integers(0, len(ds.labeled), hyper.batch)
            out = _supervised_iteration(
                state, [ds.labeled[i] for i in batch_idx], config, ignored_id
            )
        else:
            lab_idx, unl_idx = _batch_indices(
                seed, step, hyper.batch, len(ds.labeled), len(ds.unlabeled)
            )
            step_rng = np.random.default_rng((seed, 404, step))
            out = train_iteration(
                state,
                [ds.labeled[i] for i in lab_idx],
                [ds.unlabeled[i] for i in unl_idx],
                config,
                step_rng,
                strategy=mix_strategy,
                ignored_id=ignored_id,
            )
        losses.append(out)
        if eval_every and state.step % eval_every == 0 and ds.eval:
            eval_history.append((state.step, evaluate(state.teacher, ds.eval, config, ignored_id).miou))
        if checkpoint_every and out_dir and state.step % checkpoint_every == 0:
            save_checkpoint(out_dir / f"step{state.step:06d}.ckpt", state)

    teacher_eval = evaluate(state.teacher, ds.eval, config, ignored_id) if ds.eval else None
    student_eval = evaluate(state.student, ds.eval, config, ignored_id) if ds.eval else None
    return RunResult(losses, eval_history, teacher_eval, student_eval, state)


def losses_csv(losses: list[LossBreakdown]) -> str:
    lines = ["step,l_sup,l_mix,l_mt,total"]
    for row in losses:
        lines.append(
            f"{row.step},{row.l_sup:.10g},{row.l_mix:.10g},{row.l_mt:.10g},{row.total:.10g}"
        )
    return "\n".join(lines) + "\n"


def eval_json(result, label_map: LabelMap) -> str:
    doc = {
        "miou": result.miou,
        "iou": {label_map.name(c): v for c, v in sorted(result.iou.items())},
    }
    return json.dumps(doc, indent=2)


# --- ablation grid ------------------------------------------------------------


def ablation_grid(
    params: SceneParams,
    config: SensorConfig,
    hyper: Hyperparams,
    *,
    strategies: list[str],
    seeds: list[int],
    sweep_m: list[int] = (),
    sweep_ema: list[float] = (),
    sweep_t: list[float] = (),
    n_scans: int = 100,
    n_eval: int = 20,
    labeled_fraction: float = 0.1,
    iterations: int = 300,
    channels=(8, 16),
) -> list[dict]:
    """mIoU per (cell, seed). Datasets are shared across cells per seed so
    every comparison within a seed is paired."""
    rows = []
    for seed in seeds:
        ds = make_dataset(n_scans, params, config, labeled_fraction, seed, n_eval)

        def cell(cell_type, name, value, run_hyper, strategy):
            result = run_training(
                ds,
                config,
                run_hyper,
                channels=channels,
                iterations=iterations,
                seed=seed,
                strategy=strategy,
            )
            rows.append(
                {
                    "cell": cell_type,
                    "name": name,
                    "value": value,
                    "seed": seed,
                    "miou_teacher": result.teacher_eval.miou,
                    "miou_student": result.student_eval.miou,
                }
            )

        for strategy in strategies:
            run_hyper = hyper
            if strategy == "sup_only":
                run_hyper = replace(hyper, lambda_mix=0.0, lambda_mt=0.0)
            cell("strategy", strategy, strategy, run_hyper, strategy)
        for m in sweep_m:
            cell("sweep_m", "m", m, replace(hyper, m_lo=m, m_hi=m), "beam")
        for decay in sweep_ema:
            cell("sweep_ema", "ema_decay", decay, replace(hyper, ema_decay=decay), "beam")
        for t in sweep_t:
            cell("sweep_T", "T", t, replace(hyper, threshold=t), "beam")
    return rows


def ablation_csv(rows: list[dict]) -> str:
    lines = ["cell,name,value,seed,miou_teacher,miou_student"]
    for r in rows:
        lines.append(
            f"{r['cell']},{r['name']},{r['value']},{r['seed']},"
            f"{r['miou_teacher']:.6f},{r['miou_student']:.6f}"
        )
    return "\n".join(lines) + "\n"


# --- error maps ---------------------------------------------------------------


@dataclass(frozen=True)
class ErrorMaps:
    bev: np.ndarray        # (size, size, 3) uint8
    rangeview: np.ndarray  # (h, w, 3) uint8
    correct_pixels: int
    wrong_pixels: int


def render_error_maps(
    model: SegModel,
    cloud: PointCloud,
    config: SensorConfig,
    ignored_id: int = 0,
    bev_size: int = 200,
    bev_extent: float = 25.0,
) -> ErrorMaps:
    """Correct/incorrect maps in bird's-eye and range view.

    The range view paints evaluated pixels (non-ignored truth) gray when
    the prediction matches and red otherwise; its pixel counts equal the
    scan's confusion totals. The BEV rasterizes points into a square
    2*bev_extent meters across, red wherever any wrong point lands.
    """
    if not cloud.has_labels:
        raise ValueError("error maps need a labeled scan")
    img, pred = predict_image(model, cloud, config, ignored_id)
    valid = img.labels != ignored_id
    correct = valid & (pred == img.labels)
    wrong = valid & (pred != img.labels)
    rv = error_rgb_from_masks(correct, wrong, ERROR_CORRECT_RV)

    # Per-point correctness from each point's pixel; points outside the
    # extent or with ignored truth are skipped.
    from .rangeview import point_pixels

    rows, cols, ok, _ = point_pixels(cloud, config, img.h, img.w)
    point_pred = np.full(cloud.n, -1, np.int64)
    point_pred[ok] = pred[rows[ok], cols[ok]]
    truth = cloud.labels
    evaluable = ok & (truth != ignored_id)
    cell = np.floor(
        (cloud.coords[:, :2] + bev_extent) / (2 * bev_extent) * bev_size
    ).astype(np.int64)
    inside = evaluable & np.all((cell >= 0) & (cell < bev_size), axis=1)
    good = np.zeros((bev_size, bev_size), bool)
    bad = np.zeros((bev_size, bev_size), bool)
    pt_ok = point_pred == truth
    good[cell[inside & pt_ok, 1], cell[inside & pt_ok, 0]] = True
    bad[cell[inside & ~pt_ok, 1], cell[inside & ~pt_ok, 0]] = True
    good &= ~bad  # wrong wins, regardless of point order
    bev = error_rgb_from_masks(good, bad, ERROR_CORRECT_BEV)
    return ErrorMaps(bev, rv, int(correct.sum()), int(wrong.sum()))
