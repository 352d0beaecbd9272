"""Command-line pipeline.

Subcommands: stats, entropy-report, mix, project, voxelize, synth, train,
eval, ablate, error-map. Every command is deterministic given (config,
seed), writes its outputs under --out, and finishes by writing a manifest
recording the config hash, package version, and output file hashes.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cloud import attach_labels
from .config import (
    config_hash,
    hyper_from_config,
    load_config,
    partition_from_config,
    scene_params_from_config,
    sensor_from_config,
)
from .errors import ConfigError
from .experiments import (
    STRATEGIES,
    ablation_csv,
    ablation_grid,
    eval_json,
    load_dataset,
    losses_csv,
    render_error_maps,
    run_training,
    save_dataset,
)
from .labels import label_map_from_json
from .mixing import mix_scans
from .partition import partition_spec, spec_from_json
from .pnm import (
    encode_pgm,
    encode_ppm,
    heatmap_to_rgb,
    labels_to_rgb,
    range_to_gray,
)
from .prior import accumulate_histogram, partition_entropy_report
from .rangeview import range_project
from .scan_io import load_labels, load_scan, save_labels, save_scan
from .synth import default_label_map, make_dataset
from .train import evaluate, load_checkpoint, save_checkpoint
from .voxel import CylinderBounds, cylindrical_voxelize, voxel_csv


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Outputs:
    """Collects written files and renders the run manifest."""

    def __init__(self, out_dir: Path, command: str, cfg: dict):
        self.out_dir = out_dir
        self.command = command
        self.cfg = cfg
        self.paths: list[Path] = []
        out_dir.mkdir(parents=True, exist_ok=True)

    def write_bytes(self, name: str, data: bytes) -> Path:
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        self.paths.append(path)
        return path

    def write_text(self, name: str, text: str) -> Path:
        return self.write_bytes(name, text.encode())

    def add(self, *paths: Path) -> None:
        self.paths.extend(paths)

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "version": __version__,
            "seed": self.cfg["seed"],
            "config_sha256": config_hash(self.cfg),
            "outputs": {
                str(p.relative_to(self.out_dir)): _sha256(p) for p in sorted(set(self.paths))
            },
        }
        (self.out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _load_scan_args(args, label_map):
    cloud = load_scan(args.scan)
    if getattr(args, "labels", None):
        cloud = attach_labels(cloud, load_labels(args.labels, label_map))
    return cloud


def _label_map_arg(args):
    if getattr(args, "labelmap", None):
        return label_map_from_json(Path(args.labelmap).read_text())
    return default_label_map()


def _synth_dataset(cfg):
    params = scene_params_from_config(cfg)
    sensor = sensor_from_config(cfg)
    return make_dataset(
        cfg["synth"]["n_scans"],
        params,
        sensor,
        cfg["split"]["labeled_fraction"],
        cfg["split"]["seed"],
        cfg["synth"]["n_eval"],
    )


def _training_dataset(cfg):
    if cfg["data"]["train_dir"]:
        return load_dataset(cfg["data"]["train_dir"])
    return _synth_dataset(cfg)


def cmd_stats(args, cfg, out: Outputs) -> None:
    label_map = _label_map_arg(args)
    cloud = _load_scan_args(args, label_map)
    doc = {
        "points": cloud.n,
        "coord_min": cloud.coords.min(axis=0).tolist() if cloud.n else None,
        "coord_max": cloud.coords.max(axis=0).tolist() if cloud.n else None,
        "intensity_min": float(cloud.intensity.min()) if cloud.n else None,
        "intensity_max": float(cloud.intensity.max()) if cloud.n else None,
    }
    if cloud.has_labels:
        counts = np.bincount(cloud.labels, minlength=label_map.k)
        doc["class_counts"] = {
            label_map.name(c): int(n) for c, n in enumerate(counts) if n
        }
    out.write_text("stats.json", json.dumps(doc, indent=2) + "\n")


def cmd_entropy_report(args, cfg, out: Outputs) -> None:
    sensor = sensor_from_config(cfg)
    ds = _training_dataset(cfg)
    clouds = ds.labeled + ds.eval
    if not clouds:
        raise ValueError("no labeled scans available for the report")
    m = cfg["partition"]["m"]
    specs = [
        partition_spec("inclination", m, sensor.incl_lo, sensor.incl_up),
        partition_spec("azimuth", m, -180.0, 180.0),
        partition_spec("radius", m, 0.0, sensor.max_range),
    ]
    rows = partition_entropy_report(clouds, specs, ds.label_map.k, ds.label_map.ignored_id)
    lines = ["partition_kind,m,H_conditional_nats,H_marginal_nats"]
    for r in rows:
        lines.append(
            f"{r['kind']},{r['m']},{r['h_conditional_nats']:.9f},{r['h_class_nats']:.9f}"
        )
    out.write_text("entropy.csv", "\n".join(lines) + "\n")
    hist = accumulate_histogram(clouds, specs[0], ds.label_map.k, ds.label_map.ignored_id)
    out.write_bytes("area_class_heatmap.ppm", encode_ppm(heatmap_to_rgb(hist.counts)))


def cmd_mix(args, cfg, out: Outputs) -> None:
    label_map = _label_map_arg(args)
    a = attach_labels(load_scan(args.scan_a), load_labels(args.labels_a, label_map))
    b = attach_labels(load_scan(args.scan_b), load_labels(args.labels_b, label_map))
    if args.spec:
        spec = spec_from_json(Path(args.spec).read_text())
    else:
        spec = partition_from_config(cfg, sensor_from_config(cfg))
    result = mix_scans(a, b, spec)
    for tag, mixed, prov in (
        ("a", result.mixed_a, result.provenance_a),
        ("b", result.mixed_b, result.provenance_b),
    ):
        save_scan(out.out_dir / f"mixed_{tag}.bin", mixed)
        save_labels(out.out_dir / f"mixed_{tag}.label", mixed.labels)
        out.add(out.out_dir / f"mixed_{tag}.bin", out.out_dir / f"mixed_{tag}.label")
        lines = ["position,source,original_index"]
        for i, (src, idx) in enumerate(zip(prov.source, prov.index)):
            lines.append(f"{i},{int(src)},{int(idx)}")
        out.write_text(f"provenance_{tag}.csv", "\n".join(lines) + "\n")


def cmd_project(args, cfg, out: Outputs) -> None:
    label_map = _label_map_arg(args)
    sensor = sensor_from_config(cfg)
    cloud = _load_scan_args(args, label_map)
    img = range_project(cloud, sensor, ignored_id=label_map.ignored_id)
    out.write_bytes("range.pgm", encode_pgm(range_to_gray(img.ranges, sensor.max_range)))
    if cloud.has_labels:
        out.write_bytes("labels.ppm", encode_ppm(labels_to_rgb(img.labels, label_map)))
    out.write_text(
        "projection.json",
        json.dumps(
            {"occupied": img.occupied, "shadowed": img.shadowed, "dropped": img.dropped},
            indent=2,
        )
        + "\n",
    )


def cmd_voxelize(args, cfg, out: Outputs) -> None:
    label_map = _label_map_arg(args)
    sensor = sensor_from_config(cfg)
    cloud = _load_scan_args(args, label_map)
    bounds = CylinderBounds(rho=(0.0, sensor.max_range), z=(args.z_min, args.z_max))
    grid = cylindrical_voxelize(
        cloud, (args.n_rho, args.n_az, args.n_z), bounds, label_map.ignored_id
    )
    out.write_text("voxels.csv", voxel_csv(grid))


def cmd_synth(args, cfg, out: Outputs) -> None:
    ds = _synth_dataset(cfg)
    out.add(*save_dataset(ds, out.out_dir))


def cmd_train(args, cfg, out: Outputs) -> None:
    sensor = sensor_from_config(cfg)
    hyper = hyper_from_config(cfg)
    ds = _training_dataset(cfg)
    strategy = cfg["train"]["strategy"]
    if strategy == "sup_only":
        hyper = _zero_weights(hyper)
    state = None
    iterations = cfg["train"]["iterations"]
    if args.resume:
        student, teacher, step = load_checkpoint(args.resume)
        from .train import TrainState

        state = TrainState(student, teacher, step, hyper)
    result = run_training(
        ds,
        sensor,
        hyper,
        channels=tuple(cfg["model"]["channels"]),
        iterations=iterations,
        seed=cfg["seed"],
        strategy=strategy,
        eval_every=cfg["train"]["eval_every"],
        checkpoint_every=cfg["train"]["checkpoint_every"],
        out_dir=out.out_dir,
        state=state,
    )
    out.write_text("losses.csv", losses_csv(result.losses))
    if result.teacher_eval is not None:
        out.write_text("iou_teacher.json", eval_json(result.teacher_eval, ds.label_map) + "\n")
        out.write_text("iou_student.json", eval_json(result.student_eval, ds.label_map) + "\n")
    save_checkpoint(out.out_dir / "final.ckpt", result.state)
    out.add(out.out_dir / "final.ckpt")
    out.add(*out.out_dir.glob("step*.ckpt"))


def _zero_weights(hyper):
    import dataclasses

    return dataclasses.replace(hyper, lambda_mix=0.0, lambda_mt=0.0)


def cmd_eval(args, cfg, out: Outputs) -> None:
    sensor = sensor_from_config(cfg)
    ds = _training_dataset(cfg)
    student, teacher, _ = load_checkpoint(args.checkpoint)
    model = student if args.student else teacher
    if not ds.eval:
        raise ValueError("no eval scans available")
    result = evaluate(model, ds.eval, sensor, ds.label_map.ignored_id)
    out.write_text("iou.json", eval_json(result, ds.label_map) + "\n")


def cmd_ablate(args, cfg, out: Outputs) -> None:
    rows = ablation_grid(
        scene_params_from_config(cfg),
        sensor_from_config(cfg),
        hyper_from_config(cfg),
        strategies=cfg["ablate"]["strategies"],
        seeds=cfg["ablate"]["seeds"],
        sweep_m=cfg["ablate"]["sweep_m"],
        sweep_ema=cfg["ablate"]["sweep_ema"],
        sweep_t=cfg["ablate"]["sweep_t"],
        n_scans=cfg["synth"]["n_scans"],
        n_eval=cfg["synth"]["n_eval"],
        labeled_fraction=cfg["split"]["labeled_fraction"],
        iterations=cfg["train"]["iterations"],
        channels=tuple(cfg["model"]["channels"]),
    )
    out.write_text("ablate.csv", ablation_csv(rows))


def cmd_error_map(args, cfg, out: Outputs) -> None:
    label_map = _label_map_arg(args)
    sensor = sensor_from_config(cfg)
    cloud = attach_labels(load_scan(args.scan), load_labels(args.labels, label_map))
    student, teacher, _ = load_checkpoint(args.checkpoint)
    maps = render_error_maps(teacher, cloud, sensor, label_map.ignored_id)
    out.write_bytes("error_bev.ppm", encode_ppm(maps.bev))
    out.write_bytes("error_rangeview.ppm", encode_ppm(maps.rangeview))
    out.write_text(
        "error_counts.json",
        json.dumps({"correct": maps.correct_pixels, "wrong": maps.wrong_pixels}, indent=2) + "\n",
    )


_COMMANDS = {
    "stats": cmd_stats,
    "entropy-report": cmd_entropy_report,
    "mix": cmd_mix,
    "project": cmd_project,
    "voxelize": cmd_voxelize,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "error-map": cmd_error_map,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scanmix", description="LiDAR scan-mixing pipeline"
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="run config JSON")
        p.add_argument("--seed", type=int, help="override config seed")
        p.add_argument("--out", help="output directory (default from config)")

    for name in ("stats", "project"):
        p = sub.add_parser(name)
        common(p)
        p.add_argument("--scan", required=True)
        p.add_argument("--labels")
        p.add_argument("--labelmap")
    p = sub.add_parser("entropy-report")
    common(p)
    p = sub.add_parser("mix")
    common(p)
    p.add_argument("--scan-a", required=True)
    p.add_argument("--labels-a", required=True)
    p.add_argument("--scan-b", required=True)
    p.add_argument("--labels-b", required=True)
    p.add_argument("--spec", help="partition spec JSON file")
    p.add_argument("--labelmap")
    p = sub.add_parser("voxelize")
    common(p)
    p.add_argument("--scan", required=True)
    p.add_argument("--labels")
    p.add_argument("--labelmap")
    p.add_argument("--n-rho", type=int, default=240)
    p.add_argument("--n-az", type=int, default=180)
    p.add_argument("--n-z", type=int, default=20)
    p.add_argument("--z-min", type=float, default=-3.0)
    p.add_argument("--z-max", type=float, default=9.0)
    p = sub.add_parser("synth")
    common(p)
    p = sub.add_parser("train")
    common(p)
    p.add_argument("--resume", help="checkpoint to resume from")
    p = sub.add_parser("eval")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--student", action="store_true", help="evaluate the student net")
    p = sub.add_parser("ablate")
    common(p)
    p = sub.add_parser("error-map")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scan", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--labelmap")
    return parser


def _split_overrides(argv):
    """Peel off dotted overrides like --hyper.T 0.8 before argparse runs."""
    plain, overrides = [], []
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg.startswith("--") and "." in arg.split("=", 1)[0]:
            if "=" in arg:
                key, value = arg[2:].split("=", 1)
                overrides.append((key, value))
                i += 1
            else:
                if i + 1 >= len(argv):
                    raise ConfigError(f"override {arg} is missing a value")
                overrides.append((arg[2:], argv[i + 1]))
                i += 2
        else:
            plain.append(arg)
            i += 1
    return plain, overrides


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        plain, overrides = _split_overrides(argv)
        args = build_parser().parse_args(plain)
        cfg = load_config(args.config, overrides)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.out is not None:
            cfg["out"] = args.out
        out = Outputs(Path(cfg["out"]), args.command, cfg)
        _COMMANDS[args.command](args, cfg, out)
        out.finish()
        return 0
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run())
