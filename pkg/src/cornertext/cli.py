"""Command-line frontend.

Subcommands: ``synth`` (oracle scenes), ``encode-targets`` (ground truth to
training targets), ``detect`` (corner sets or raw maps to detections),
``loss`` (objective report for a dumped batch), ``eval`` (precision /
recall / F-measure).

Exit codes: 0 success, 1 validation error, 2 I/O error. A JSON config file
(``--config``) mirrors the dataclass defaults; unknown keys are rejected
and command-line flags override file values.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import losses, metrics, overlay, pipeline, synth, targets, tensorio
from .errors import ConfigError, DegenerateGeometry, FormatError, InvalidBox, SynthError
from .geometry import min_area_rect
from .pipeline import Detection, PipelineConfig
from .synth import SynthConfig
from .targets import CornerType, DefaultBoxConfig

DEFAULT_CONFIG: dict = {
    "pipeline": {
        "corner_score_threshold": 0.5,
        "corner_nms_iou": 0.3,
        "min_short_side": 5.0,
        "ss_ratio_max": 1.5,
        "grid_order": 2,
        "tau": 0.6,
        "final_nms_iou": 0.3,
        "threads": 1,
    },
    "default_boxes": {
        "input_size": [512, 512],
        "layers": {name: {"stride": targets.DEFAULT_STRIDES[name],
                          "scales": list(targets.DEFAULT_SCALES[name])}
                   for name in targets.DEFAULT_STRIDES},
    },
    "synth": {
        "image_size": [512, 512],
        "box_count": [1, 6],
        "theta_range_deg": [-80.0, 80.0],
        "short_side_range": [8.0, 32.0],
        "aspect_range": [1.0, 4.0],
        "min_separation": 24.0,
        "jitter_sigma": 0.0,
        "score_noise": 0.0,
        "drop_prob": 0.0,
        "spurious_rate": 0.0,
        "seg_flip_rate": 0.0,
        "grid_order": 2,
    },
}


def load_run_config(path: str | Path | None) -> dict:
    """Defaults deep-merged with the JSON config file; unknown keys fail."""
    merged = json.loads(json.dumps(DEFAULT_CONFIG))
    if path is None:
        return merged
    try:
        user = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path!s} is not valid JSON: {exc.msg} (line {exc.lineno})") from exc
    if not isinstance(user, dict):
        raise ConfigError(f"config file {path!s} must hold a JSON object")
    for section, values in user.items():
        if section not in merged:
            raise ConfigError(f"unknown config section {section!r} in {path!s}")
        if not isinstance(values, dict):
            raise ConfigError(f"config section {section!r} in {path!s} must be an object")
        for key, value in values.items():
            if key not in merged[section]:
                raise ConfigError(f"unknown config key {section}.{key} in {path!s}")
            if section == "default_boxes" and key == "layers":
                merged[section][key] = _validated_layers(value, path)
            else:
                merged[section][key] = value
    return merged


def _validated_layers(layers, path) -> dict:
    if not isinstance(layers, dict) or not layers:
        raise ConfigError(f"default_boxes.layers in {path!s} must be a non-empty object")
    out = {}
    for name, entry in layers.items():
        if not isinstance(entry, dict) or set(entry) != {"stride", "scales"}:
            raise ConfigError(f"layer {name!r} in {path!s} needs exactly 'stride' and 'scales'")
        out[name] = {"stride": int(entry["stride"]), "scales": [float(s) for s in entry["scales"]]}
    return out


def build_pipeline_config(cfg: dict, args: argparse.Namespace) -> PipelineConfig:
    section = dict(cfg["pipeline"])
    for flag in ("tau", "threads"):
        value = getattr(args, flag, None)
        if value is not None:
            section[flag] = value
    return PipelineConfig(**section)


def build_box_config(cfg: dict) -> DefaultBoxConfig:
    section = cfg["default_boxes"]
    layers = section["layers"]
    return DefaultBoxConfig(
        input_size=tuple(int(v) for v in section["input_size"]),
        strides={name: int(entry["stride"]) for name, entry in layers.items()},
        scales={name: tuple(entry["scales"]) for name, entry in layers.items()},
    )


def build_synth_config(cfg: dict) -> SynthConfig:
    section = dict(cfg["synth"])
    kwargs = {
        "image_size": tuple(int(v) for v in section.pop("image_size")),
        "box_count": tuple(int(v) for v in section.pop("box_count")),
        "theta_range_deg": tuple(float(v) for v in section.pop("theta_range_deg")),
        "short_side_range": tuple(float(v) for v in section.pop("short_side_range")),
        "aspect_range": tuple(float(v) for v in section.pop("aspect_range")),
    }
    kwargs.update({k: type(SynthConfig.__dataclass_fields__[k].default)(v) for k, v in section.items()})
    return SynthConfig(**kwargs)


def _cmd_synth(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    scfg = build_synth_config(cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scene = synth.generate_scene(scfg, args.seed)
    scene = synth.corrupt(scene, scfg, args.seed + 1)
    tensorio.write_boxes(scene.annotation.boxes, out_dir / "gt.jsonl")
    corners = [det for t in CornerType for det in scene.corner_sets[t]]
    tensorio.write_corners(corners, out_dir / "corners.jsonl")
    tensorio.write_tensor(scene.masks, out_dir / "masks.cft")
    print(f"wrote {len(scene.annotation.boxes)} boxes, {len(corners)} corners to {out_dir}")
    return 0


def _cmd_encode_targets(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    box_cfg = build_box_config(cfg)
    grid = int(cfg["pipeline"]["grid_order"])
    records = tensorio.read_boxes(args.gt)
    rects = [min_area_rect(r.rect.corners) for r in records]

    squares = []
    gt_index = []
    for i, rect in enumerate(rects):
        for sq in targets.corner_squares(rect):
            squares.append(sq)
            gt_index.append(i)

    boxes = targets.generate_default_boxes(box_cfg)
    result = targets.match(boxes, squares)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tensorio.write_corners(squares, out_dir / "corner_squares.jsonl")
    tensorio.write_tensor(targets.ps_masks(rects, grid, box_cfg.input_size), out_dir / "masks.cft")
    match_rows = []
    for m in result.positives:
        box = boxes[m.box_index]
        off = targets.encode_offsets(box, squares[m.square_index])
        match_rows.append({
            "box_index": m.box_index, "layer": box.layer, "row": box.row, "col": box.col,
            "scale": box.side, "corner_type": m.corner_type.name,
            "gt_index": gt_index[m.square_index], "iou": round(m.iou, 6),
            "dx": round(off.dx, 6), "dy": round(off.dy, 6), "dss": round(off.dss, 6),
        })
    tensorio.write_matches(match_rows, out_dir / "matches.jsonl")
    print(f"wrote {len(match_rows)} positive matches over {len(boxes)} default boxes to {out_dir}")
    return 0


def _read_layer_maps(maps_dir: Path, box_cfg: DefaultBoxConfig):
    score_maps, offset_maps = {}, {}
    for name in box_cfg.strides:
        score_maps[name] = tensorio.read_tensor(maps_dir / f"scores_{name}.cft")
        offset_maps[name] = tensorio.read_tensor(maps_dir / f"offsets_{name}.cft")
    return score_maps, offset_maps


def _cmd_detect(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    pcfg = build_pipeline_config(cfg, args)
    seg = tensorio.read_tensor(args.seg)
    if args.corners is not None:
        dets = tensorio.read_corners(args.corners)
        corner_sets = {t: pipeline.nms_corner_squares(
            [d for d in dets if d.corner_type == t and d.score > pcfg.corner_score_threshold],
            pcfg.corner_nms_iou) for t in CornerType}
    else:
        box_cfg = build_box_config(cfg)
        score_maps, offset_maps = _read_layer_maps(Path(args.maps), box_cfg)
        corner_sets = pipeline.decode_corners(score_maps, offset_maps, box_cfg, pcfg)
    detections = pipeline.detect(corner_sets, seg, pcfg)
    tensorio.write_boxes([tensorio.BoxRecord(d.rect, d.score) for d in detections], args.out)
    if args.overlay:
        gt = [r.rect for r in tensorio.read_boxes(args.gt)] if args.gt else []
        _, h, w = seg.shape
        Path(args.overlay).write_text(overlay.render_svg(w, h, gt, detections), encoding="utf-8")
    print(f"wrote {len(detections)} detections to {args.out}")
    return 0


def _read_jsonl(path: Path, keys: tuple[str, ...]):
    rows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        try:
            obj = json.loads(line)
            rows.append([obj[k] for k in keys])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise FormatError(f"bad record in {path!s}: {exc}", line=lineno) from exc
    return rows


def _cmd_loss(args: argparse.Namespace) -> int:
    batch_dir = Path(args.batch_dir)
    conf_rows = _read_jsonl(batch_dir / "conf.jsonl", ("p", "y"))
    if not conf_rows:
        raise FormatError(f"empty confidence batch in {batch_dir / 'conf.jsonl'}")
    conf = losses.ConfBatch(np.array([r[0] for r in conf_rows], dtype=np.float64),
                            np.array([r[1] for r in conf_rows], dtype=np.int64))
    loc_rows = _read_jsonl(batch_dir / "loc.jsonl", ("p", "y"))
    loc = losses.LocBatch(np.array([r[0] for r in loc_rows], dtype=np.float64).reshape(-1, 4),
                          np.array([r[1] for r in loc_rows], dtype=np.float64).reshape(-1, 4))
    seg_pred = tensorio.read_tensor(batch_dir / "seg_pred.cft")
    seg_label = tensorio.read_tensor(batch_dir / "seg_label.cft")
    seg = losses.SegBatch(seg_pred.astype(np.float64), seg_label.astype(np.float64))

    per_sample = losses.cross_entropy_per_sample(conf.scores, conf.labels)
    selection = losses.ohem_select(per_sample, conf.labels)
    conf_value, _ = losses.conf_loss(conf, selection)
    loc_value, _ = losses.loc_loss(loc)
    seg_value, _ = losses.dice_loss(seg)
    n_positive = int(np.sum(conf.labels == 1))
    n_pixels = int(seg_label.shape[1] * seg_label.shape[2])
    weights = losses.LossWeights(lambda1=args.lambda1, lambda2=args.lambda2,
                                 n_positive=n_positive, n_seg_pixels=n_pixels)
    total = losses.total_loss(conf_value, loc_value, seg_value, weights)
    print(f"n_positive: {n_positive}")
    print(f"n_seg_pixels: {n_pixels}")
    print(f"ohem_selected: {len(selection)}")
    print(f"conf: {conf_value:.6f}")
    print(f"loc: {loc_value:.6f}")
    print(f"seg_dice: {seg_value:.6f}")
    print(f"conf_term: {total.conf_term:.6f}")
    print(f"loc_term: {total.loc_term:.6f}")
    print(f"seg_term: {total.seg_term:.6f}")
    print(f"total: {total.total:.6f}")
    if total.zero_positive:
        print("warning: batch has no positive boxes; detection terms set to 0")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    det_records = tensorio.read_boxes(args.det)
    gt_records = tensorio.read_boxes(args.gt)
    detections = [Detection(r.rect, r.score if r.score is not None else 1.0) for r in det_records]
    assignment = metrics.match_detections(detections, [r.rect for r in gt_records], args.iou)
    rep = metrics.report(assignment)
    if args.json:
        print(json.dumps({
            "true_positives": rep.true_positives, "false_positives": rep.false_positives,
            "false_negatives": rep.false_negatives, "precision": rep.precision,
            "recall": rep.recall, "f_measure": rep.f_measure,
        }, sort_keys=True))
    else:
        print(f"tp: {rep.true_positives}  fp: {rep.false_positives}  fn: {rep.false_negatives}")
        print(f"precision: {rep.precision:.6f}")
        print(f"recall: {rep.recall:.6f}")
        print(f"f_measure: {rep.f_measure:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cornertext",
        description="Corner-based oriented text detection: targets, losses, inference, evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("synth", formatter_class=fmt,
                       help="generate a synthetic oracle scene (boxes, corners, masks)")
    p.add_argument("--config", default=None, help="JSON run config (defaults used when omitted)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed; all outputs derive from it")
    p.add_argument("--out-dir", required=True, help="directory for gt.jsonl, corners.jsonl, masks.cft")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("encode-targets", formatter_class=fmt,
                       help="turn ground-truth boxes into corner squares, masks and matched offsets")
    p.add_argument("--gt", required=True, help="ground-truth box file (JSON-lines)")
    p.add_argument("--config", default=None, help="JSON run config")
    p.add_argument("--out-dir", required=True,
                   help="directory for corner_squares.jsonl, masks.cft, matches.jsonl")
    p.set_defaults(func=_cmd_encode_targets)

    p = sub.add_parser("detect", formatter_class=fmt,
                       help="run grouping, position-sensitive scoring and NMS")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--corners", default=None, help="corner-detection file (JSON-lines)")
    src.add_argument("--maps", default=None,
                     help="directory of per-layer scores_<layer>.cft / offsets_<layer>.cft tensors")
    p.add_argument("--seg", required=True, help="segmentation map tensor (grid_order^2 channels)")
    p.add_argument("--config", default=None, help="JSON run config")
    p.add_argument("--out", required=True, help="output detections file (JSON-lines with scores)")
    p.add_argument("--overlay", default=None, help="optional SVG overlay path")
    p.add_argument("--gt", default=None, help="ground-truth boxes drawn green in the overlay")
    p.add_argument("--tau", type=float, default=None,
                   help="segmentation score threshold (default 0.6 from config)")
    p.add_argument("--threads", type=int, default=None,
                   help="parallelize candidate scoring only (default 1)")
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("loss", formatter_class=fmt,
                       help="objective report for a dumped batch directory")
    p.add_argument("--batch-dir", required=True,
                   help="directory holding conf.jsonl, loc.jsonl, seg_pred.cft, seg_label.cft")
    p.add_argument("--lambda1", type=float, default=1.0, help="offset-term balance factor")
    p.add_argument("--lambda2", type=float, default=10.0, help="segmentation-term balance factor")
    p.set_defaults(func=_cmd_loss)

    p = sub.add_parser("eval", formatter_class=fmt,
                       help="precision/recall/F-measure of detections against ground truth")
    p.add_argument("--det", required=True, help="detections file (JSON-lines)")
    p.add_argument("--gt", required=True, help="ground-truth box file (JSON-lines)")
    p.add_argument("--iou", type=float, default=0.5, help="rotated-IoU match threshold")
    p.add_argument("--json", action="store_true", help="emit the report as JSON")
    p.set_defaults(func=_cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, NotADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, ConfigError, InvalidBox, DegenerateGeometry, SynthError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
