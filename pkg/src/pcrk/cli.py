"""Command-line front end.

Exit codes: 0 success, 2 usage or input error, 3 runtime/numerical failure.
Every command accepts ``--config FILE`` with ``key = value`` lines; flags on
the command line override file values and unknown keys are rejected. The
resolved configuration is written to ``run_config.txt`` in the output
directory so a run can be replayed.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import DivergenceError, PcrkError
from .geom import seeded_rng

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


class InputError(Exception):
    """Bad arguments or unreadable inputs (exit 2)."""


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text):
    return None if str(text).strip().lower() in ("", "none") else int(text)


# config keys per command: name -> (parser, default, help)
FIT_KEYS = {
    "target": (str, None, "ground-truth point cloud (.xyz/.ply)"),
    "mask": (str, "", "optional silhouette mask (.pgm); needs --camera"),
    "camera": (str, "", "camera file (fx, fy, cx, cy, R, t)"),
    "n": (int, 1024, "number of free points"),
    "iters": (int, 1000, "maximum Adam iterations"),
    "lr": (float, 1e-4, "Adam learning rate"),
    "adam_eps": (float, 1e-6, "Adam epsilon"),
    "beta1": (float, 0.9, "Adam beta1"),
    "beta2": (float, 0.999, "Adam beta2"),
    "w_rec": (float, 1.0, "weight of the 3-D Chamfer term"),
    "w_silhouette": (float, 1e-9, "weight of the silhouette term"),
    "w_proj": (float, 1e-10, "weight of the orthographic projection term"),
    "views": (str, "ortho-xy,ortho-xz", "comma-separated projection views, or 'none'"),
    "init": (str, "sphere", "initialization: sphere, cube or cloud"),
    "patience": (int, 100, "stop after this many iterations without progress (0 = never)"),
    "rel_tol": (float, 1e-9, "relative improvement that counts as progress"),
    "seed": (int, 0, "random seed"),
}
REFINE_KEYS = {
    "input": (str, None, "point cloud to refine"),
    "knn": (int, 6, "neighbours for normal estimation"),
    "smooth_iters": (int, 5, "curvature-flow iterations"),
    "smooth_step": (float, 0.1, "dimensionless smoothing step"),
    "grid": (int, 64, "implicit grid resolution along the longest axis"),
    "support_factor": (float, 3.0, "support radius as a multiple of point scale"),
    "min_component_faces": (int, 20, "drop mesh components with fewer faces"),
    "resample": (_opt_int, None, "output point count (default: input count)"),
    "emit_mesh": (_bool, False, "also write fitted.obj and smoothed.obj"),
    "seed": (int, 0, "random seed"),
}
EVAL_KEYS = {
    "pred": (str, "", "predicted cloud (single-pair mode)"),
    "gt": (str, "", "ground-truth cloud (single-pair mode)"),
    "pairs": (str, "", "CSV listing with columns sample_id,pred,gt"),
    "protocol": (str, "viewer", "viewer, object or pix3d"),
    "n": (_opt_int, None, "sample count (default 2466 viewer, 1024 object/pix3d)"),
    "pre_rotation": (str, "", "3x3 rotation file applied to ground truth (pix3d)"),
    "squared_cd": (_bool, True, "use squared distances in Chamfer"),
    "icp_iters": (int, 100, "ICP iteration cap"),
    "icp_tol": (float, 1e-9, "ICP residual-improvement tolerance"),
    "scale": (float, 1.0, "display multiplier for reported CD/EMD"),
    "seed": (int, 0, "random seed"),
}
SYNTH_KEYS = {
    "dataset": (str, None, "directory of image_*.ppm with matching mask_*.pgm"),
    "backgrounds": (str, "", "directory of background *.ppm images"),
    "count": (int, 10, "number of samples to generate"),
    "p_occlude": (float, 0.5, "probability of pasting an occluder"),
    "p_background": (float, 0.5, "probability of replacing the background"),
    "max_attempts": (int, 50, "paste redraws before giving up"),
    "seed": (int, 0, "random seed"),
}


def _add_keys(parser, keys):
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--out", required=True, help="output directory")
    for name, (conv, default, help_text) in keys.items():
        flag = "--" + name.replace("_", "-")
        if conv is _bool:
            parser.add_argument(flag, dest=name, default=None, action=argparse.BooleanOptionalAction, help=help_text)
        else:
            if default not in (None, "") and "default" not in help_text:
                help_text = f"{help_text} (default: {default})"
            parser.add_argument(flag, dest=name, default=None, help=help_text)


def read_config_file(path) -> dict:
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def resolve_config(args, keys) -> dict:
    raw = {name: default for name, (_, default, _) in keys.items()}
    sources = []
    if args.config:
        sources.append(read_config_file(args.config))
    sources.append({k: getattr(args, k) for k in keys if getattr(args, k) is not None})
    for src in sources:
        unknown = set(src) - set(keys)
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(sorted(unknown))}")
        raw.update(src)
    resolved = {}
    for name, (conv, default, _) in keys.items():
        value = raw[name]
        if value is None:
            if default is None and conv is not _opt_int:
                raise InputError(f"missing required setting --{name.replace('_', '-')}")
            resolved[name] = None
            continue
        try:
            resolved[name] = conv(value)
        except (TypeError, ValueError):
            raise InputError(f"bad value for {name}: {value!r}") from None
    return resolved


def write_run_config(out: Path, command: str, cfg: dict) -> None:
    lines = [f"command = {command}"]
    for key in sorted(cfg):
        value = cfg[key]
        lines.append(f"{key} = {'' if value is None else value!r}" if isinstance(value, float)
                     else f"{key} = {'' if value is None else value}")
    (out / "run_config.txt").write_text("\n".join(lines) + "\n")


def _outdir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc}") from None
    return out


def _load(fn, *args):
    try:
        return fn(*args)
    except (OSError, PcrkError, ValueError) as exc:
        raise InputError(str(exc)) from None


# --- commands -----------------------------------------------------------------

def cmd_fit(args) -> int:
    from .fitter import FitConfig, fit
    from .losses import LossWeights
    from .projection import view_from_name

    cfg = resolve_config(args, FIT_KEYS)
    out = _outdir(args.out)
    target = _load(io.read_cloud, cfg["target"])
    mask = _load(io.read_mask, cfg["mask"]) if cfg["mask"] else None
    cam = _load(io.read_camera, cfg["camera"]) if cfg["camera"] else None
    if mask is not None and cam is None:
        raise InputError("--mask requires --camera")
    views = () if cfg["views"].strip().lower() == "none" else tuple(
        _load(view_from_name, v.strip()) for v in cfg["views"].split(",") if v.strip())
    try:
        fcfg = FitConfig(
            n_coarse=cfg["n"], learning_rate=cfg["lr"], adam_eps=cfg["adam_eps"],
            adam_beta1=cfg["beta1"], adam_beta2=cfg["beta2"], max_iters=cfg["iters"],
            weights=LossWeights(cfg["w_rec"], cfg["w_silhouette"], cfg["w_proj"]),
            seed=cfg["seed"], init=cfg["init"], views=views,
            patience=cfg["patience"], rel_tol=cfg["rel_tol"])
    except PcrkError as exc:
        raise InputError(str(exc)) from None
    write_run_config(out, "fit", cfg)
    try:
        trace = fit(target, mask, cam, fcfg)
    except DivergenceError as exc:
        if exc.points is not None:
            io.write_xyz(out / "last_finite.xyz", exc.points)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    io.write_xyz(out / "final.xyz", trace.points)
    trace.write_csv(out / "trace.csv")
    print(f"iterations={len(trace)} initial={trace.totals[0]:.6g} best={min(trace.totals):.6g}")
    return EXIT_OK


def cmd_refine(args) -> int:
    from .refine import RefineConfig, refine_pipeline

    cfg = resolve_config(args, REFINE_KEYS)
    out = _outdir(args.out)
    cloud = _load(io.read_cloud, cfg["input"])
    try:
        rcfg = RefineConfig(
            knn_for_normals=cfg["knn"], smooth_iters=cfg["smooth_iters"], smooth_step=cfg["smooth_step"],
            grid_resolution=cfg["grid"], support_radius_factor=cfg["support_factor"],
            min_component_faces=cfg["min_component_faces"], resample_count=cfg["resample"])
    except PcrkError as exc:
        raise InputError(str(exc)) from None
    write_run_config(out, "refine", cfg)
    result = refine_pipeline(cloud, rcfg, seeded_rng(cfg["seed"]), return_meshes=True)
    io.write_xyz(out / "refined.xyz", result.points)
    if cfg["emit_mesh"]:
        io.write_obj(out / "fitted.obj", result.fitted)
        io.write_obj(out / "smoothed.obj", result.smoothed)
    print(f"points={len(result.points)} radius={result.radius:.6g}")
    return EXIT_OK


def _read_pairs(path):
    base = Path(path).parent
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows or [c.strip() for c in rows[0]] != ["sample_id", "pred", "gt"]:
        raise InputError(f"{path}: expected header 'sample_id,pred,gt'")
    ids, pairs = [], []
    for lineno, row in enumerate(rows[1:], 2):
        if len(row) != 3:
            raise InputError(f"{path}:{lineno}: expected 3 columns")
        sid, pred, gt = (c.strip() for c in row)
        ids.append(sid)
        pairs.append((_load(io.read_cloud, base / pred), _load(io.read_cloud, base / gt)))
    if not pairs:
        raise InputError(f"{path}: no pairs listed")
    return ids, pairs


def cmd_eval(args) -> int:
    from .evalharness import Protocol, evaluate_batch

    cfg = resolve_config(args, EVAL_KEYS)
    out = _outdir(args.out)
    if cfg["pairs"]:
        ids, pairs = _read_pairs(cfg["pairs"])
    elif cfg["pred"] and cfg["gt"]:
        ids = [Path(cfg["pred"]).stem]
        pairs = [(_load(io.read_cloud, cfg["pred"]), _load(io.read_cloud, cfg["gt"]))]
    else:
        raise InputError("give --pairs or both --pred and --gt")
    kind = cfg["protocol"]
    n = cfg["n"] if cfg["n"] is not None else {"viewer": 2466, "object": 1024, "pix3d": 1024}.get(kind)
    rot = _load(io.read_matrix, cfg["pre_rotation"]) if cfg["pre_rotation"] else np.eye(3)
    try:
        proto = Protocol(kind, n, rot, squared_cd=cfg["squared_cd"],
                         icp_max_iters=cfg["icp_iters"], icp_tol=cfg["icp_tol"])
    except PcrkError as exc:
        raise InputError(str(exc)) from None
    write_run_config(out, "eval", cfg)
    report = evaluate_batch(pairs, proto, seeded_rng(cfg["seed"]), ids=ids)
    report.write_csv(out / "report.csv", scale=cfg["scale"])
    for sid, msg in report.failures:
        print(f"failed {sid}: {msg}", file=sys.stderr)
    print(report.summary(cfg["scale"]))
    return EXIT_OK if report.records else EXIT_RUNTIME


def _load_dataset(directory):
    d = Path(directory)
    images = sorted(d.glob("image_*.ppm"))
    if not images:
        raise InputError(f"{d}: no image_*.ppm files")
    items = []
    for img in images:
        mask = d / img.name.replace("image_", "mask_").replace(".ppm", ".pgm")
        if not mask.exists():
            raise InputError(f"{img}: missing mask {mask.name}")
        items.append((_load(io.read_ppm, img), _load(io.read_mask, mask)))
    return items


def cmd_synth_occ(args) -> int:
    from .occlusion import check_sample, compose_sample

    cfg = resolve_config(args, SYNTH_KEYS)
    out = _outdir(args.out)
    dataset = _load_dataset(cfg["dataset"])
    backgrounds = []
    if cfg["backgrounds"]:
        backgrounds = [_load(io.read_ppm, p) for p in sorted(Path(cfg["backgrounds"]).glob("*.ppm"))]
    p_bg = cfg["p_background"] if backgrounds else 0.0
    if cfg["p_occlude"] > 0 and len(dataset) < 2:
        raise InputError("occlusion needs at least two dataset images")
    write_run_config(out, "synth-occ", cfg)
    lines = ["sample_id source_id donor_id paste_row paste_col occluded_fraction"]
    for i in range(cfg["count"]):
        rng = seeded_rng(cfg["seed"] + i)
        src = i % len(dataset)
        donor_ids = [j for j in range(len(dataset)) if j != src]
        image, mask = dataset[src]
        sample = compose_sample(image, mask, [dataset[j] for j in donor_ids], backgrounds, rng,
                                cfg["p_occlude"], p_bg, cfg["max_attempts"])
        problems = check_sample(sample, image)
        if problems:
            print(f"error: sample {i}: {'; '.join(problems)}", file=sys.stderr)
            return EXIT_RUNTIME
        io.write_ppm(out / f"image_{i:05d}.ppm", sample.image)
        io.write_mask(out / f"visible_{i:05d}.pgm", sample.visible_mask)
        io.write_mask(out / f"full_{i:05d}.pgm", sample.full_mask)
        donor = "-" if sample.donor_index is None else str(donor_ids[sample.donor_index])
        row, col = ("-", "-") if sample.paste_offset is None else map(str, sample.paste_offset)
        lines.append(f"{i} {src} {donor} {row} {col} {sample.occluded_fraction:.6f}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")
    print(f"samples={cfg['count']}")
    return EXIT_OK


def cmd_project(args) -> int:
    from .projection import project, view_from_name

    cloud = _load(io.read_cloud, args.input)
    cam = _load(io.read_camera, args.camera) if args.camera else None
    if args.view == "perspective" and cam is None:
        raise InputError("perspective view needs --camera")
    view = _load(view_from_name, args.view, cam)
    uv = project(cloud, view)
    if args.out:
        io.write_points2d(args.out, uv)
    else:
        np.savetxt(sys.stdout, uv, fmt=io.FLOAT_FMT)
    return EXIT_OK


def cmd_metrics(args) -> int:
    from . import metrics

    if args.metric == "iou":
        a, b = _load(io.read_mask, args.a), _load(io.read_mask, args.b)
        if a.shape != b.shape:
            raise InputError("mask sizes differ")
        print(f"{metrics.iou(a, b):.6g}")
        return EXIT_OK
    P, Q = _load(io.read_cloud, args.a), _load(io.read_cloud, args.b)
    if len(P) == 0 or len(Q) == 0:
        raise InputError("empty point cloud")
    if args.metric == "chamfer":
        value = metrics.chamfer(P, Q, squared=not args.unsquared)
    else:
        if len(P) != len(Q):
            raise InputError("EMD needs clouds of equal size")
        value = metrics.emd_exact(P, Q) if args.exact else metrics.emd_approx(P, Q, args.epsilon)
    print(f"{value:.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcrk", description="Point cloud reconstruction toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="optimize a point set against a target cloud")
    _add_keys(p, FIT_KEYS)
    p.set_defaults(func=cmd_fit, parser=p)

    p = sub.add_parser("refine", help="surface-based refinement of a point cloud")
    _add_keys(p, REFINE_KEYS)
    p.set_defaults(func=cmd_refine, parser=p)

    p = sub.add_parser("eval", help="evaluate predictions against ground truth")
    _add_keys(p, EVAL_KEYS)
    p.set_defaults(func=cmd_eval, parser=p)

    p = sub.add_parser("synth-occ", help="generate cut-and-paste occlusion samples")
    _add_keys(p, SYNTH_KEYS)
    p.set_defaults(func=cmd_synth_occ, parser=p)

    p = sub.add_parser("project", help="project a cloud to 2-D")
    p.add_argument("input")
    p.add_argument("--view", default="ortho-yz", choices=["perspective", "ortho-xy", "ortho-yz", "ortho-xz"])
    p.add_argument("--camera", help="camera file for perspective views")
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_project, parser=p)

    p = sub.add_parser("metrics", help="one-shot chamfer / emd / iou between files")
    p.add_argument("metric", choices=["chamfer", "emd", "iou"])
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--unsquared", action="store_true", help="Chamfer with plain distances")
    p.add_argument("--exact", action="store_true", help="exact EMD (small clouds)")
    p.add_argument("--epsilon", type=float, default=1e-3, help="auction EMD tolerance")
    p.set_defaults(func=cmd_metrics, parser=p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        args.parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PcrkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
