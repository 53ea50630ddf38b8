"""Command-line entry point.

Exit codes: 0 success, 1 internal error, 2 bad input or configuration.
Verbosity follows the ``ROVES_LOG`` environment variable (DEBUG, INFO,
WARNING, ...). Stage timings go to stderr; output files carry no
timestamps, so identical inputs give byte-identical outputs.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import colorxfer, gaussians, halfcar, heightfield, images, lift, metrics, pose
from .config import ConfigError, PipelineConfig, apply_overrides, load_config
from .fixtures import FixtureSpec, write_fixtures

log = logging.getLogger("roves")

# runtime-breakdown rows; True marks model-inference stages that run outside this package
STAGES = (
    ("Texture extraction", True),
    ("Depth estimation", True),
    ("Point cloud generation", False),
    ("Statistical Lab color transfer (optional)", False),
    ("Gaussian primitive initialization and scene merging", False),
    ("Vehicle-dynamics solving and pose correction", False),
)
_EXTERNAL = dict(STAGES)


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        self.stage = stage
        self.exc = exc
        super().__init__(f"{stage}: {exc}")


class Timings:
    def __init__(self):
        self.rows: list[tuple[str, float | None]] = []

    @contextmanager
    def stage(self, name: str):
        if _EXTERNAL.get(name, True):
            raise KeyError(f"not an implemented pipeline stage: {name!r}")
        t0 = time.perf_counter()
        try:
            yield
        except (KeyboardInterrupt, StageError):
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc
        self.rows.append((name, time.perf_counter() - t0))

    def external(self, name: str):
        if not _EXTERNAL.get(name, False):
            raise KeyError(f"not an external pipeline stage: {name!r}")
        self.rows.append((name, None))

    def report(self, stream=sys.stderr):
        total = 0.0
        for name, dt in self.rows:
            if dt is None:
                print(f"  {name:<55s} (external)", file=stream)
            else:
                total += dt
                print(f"  {name:<55s} {dt:8.3f} s", file=stream)
        print(f"  {'Total (implemented stages)':<55s} {total:8.3f} s", file=stream)


# -- shared steps ------------------------------------------------------------------


def _lift(cfg: PipelineConfig) -> lift.LocalPointCloud:
    texture = images.read_rgb(cfg.input_path("texture"))
    mask = images.read_mask(cfg.input_path("mask"))
    depth = images.read_depth(cfg.input_path("depth"))
    return lift.lift_depth(
        lift.MaskedDepth(depth, mask), cfg.dims, texture,
        stride=cfg.stride, invert=cfg.invert_depth, clip_percentiles=cfg.clip_percentiles,
    )


def _place(cfg: PipelineConfig, local: lift.PointCloud) -> lift.PointCloud:
    return lift.to_world(local, lift.yaw_rotation(cfg.yaw), cfg.translation)


def _reference_colors(cfg: PipelineConfig, world: lift.PointCloud, background: gaussians.GaussianCloud | None):
    if cfg.transfer_source == "img":
        ref = images.read_rgb(cfg.input_path("reference"))
        if cfg.paths.get("reference_mask") is not None:
            return ref[images.read_mask(cfg.input_path("reference_mask"))]
        return ref.reshape(-1, 3)
    # point-cloud reference: background primitives around (not under) the insertion
    if background is None:
        raise ConfigError("transfer.source 'pc' needs paths.background")
    lo = world.points[:, :2].min(axis=0)
    hi = world.points[:, :2].max(axis=0)
    xy = background.xyz[:, :2].astype(np.float64)
    near = np.all((xy >= lo - 1.0) & (xy <= hi + 1.0), axis=1)
    under = np.all((xy >= lo) & (xy <= hi), axis=1)
    sel = near & ~under
    if sel.sum() < 2:
        raise ValueError("too few background primitives around the insertion for a point-cloud reference")
    return np.clip(background.subset(sel).rgb(), 0.0, 1.0)


# -- subcommands -----------------------------------------------------------------------


def cmd_fixtures(args, cfg=None) -> int:
    out = Path(args.out or "fixtures")
    spec = FixtureSpec(seed=args.seed, amplitude=args.amplitude)
    try:
        files = write_fixtures(out, spec)
    except OSError as exc:
        raise ConfigError(f"cannot write fixtures to {out}: {exc}") from exc
    for name, path in files.items():
        print(f"{name}: {path}")
    return 0


def cmd_lift(args, cfg: PipelineConfig) -> int:
    t = Timings()
    t.external("Texture extraction")
    t.external("Depth estimation")
    with t.stage("Point cloud generation"):
        cloud = _lift(cfg)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    lift.write_ascii_ply(cloud, out / "points.ply")
    print(f"wrote {len(cloud)} points to {out / 'points.ply'}")
    t.report()
    return 0


def run_insert(cfg: PipelineConfig, timings: Timings | None = None) -> dict:
    t = timings or Timings()
    t.external("Texture extraction")
    t.external("Depth estimation")
    with t.stage("Point cloud generation"):
        local = _lift(cfg)
        world = _place(cfg, local)
    background = gaussians.load_ply(cfg.input_path("background"))
    if cfg.transfer_enabled:
        with t.stage("Statistical Lab color transfer (optional)"):
            ref = _reference_colors(cfg, world, background)
            colors = colorxfer.harmonize(world.colors, ref, cfg.transfer, space=cfg.transfer_space,
                                         clip_source=cfg.clip_source)
            world = lift.PointCloud(world.points, colors)
    with t.stage("Gaussian primitive initialization and scene merging"):
        inserted = gaussians.make_primitives(world, cfg.scale)
        merged = gaussians.merge(background, inserted, cfg.margin, height_band=cfg.height_band)
        out = cfg.output_dir
        out.mkdir(parents=True, exist_ok=True)
        cfg.path("inserted").parent.mkdir(parents=True, exist_ok=True)
        gaussians.save_ply(inserted, cfg.path("inserted"))
        gaussians.save_ply(merged, out / "scene_edited.ply")
    return {"inserted": len(inserted), "background": len(background), "merged": len(merged),
            "removed": len(background) + len(inserted) - len(merged)}


def cmd_insert(args, cfg: PipelineConfig) -> int:
    t = Timings()
    info = run_insert(cfg, t)
    print(f"inserted {info['inserted']} primitives, replaced {info['removed']} of {info['background']}; "
          f"scene now has {info['merged']} -> {cfg.output_dir / 'scene_edited.ply'}")
    t.report()
    return 0


def cmd_transfer(args, cfg: PipelineConfig | None) -> int:
    tcfg = cfg.transfer if cfg else colorxfer.TransferConfig()
    if args.lam is not None or args.beta is not None:
        tcfg = colorxfer.TransferConfig(args.lam if args.lam is not None else tcfg.lam,
                                        args.beta if args.beta is not None else tcfg.beta)
    space = cfg.transfer_space if cfg else "lab"
    clip_source = cfg.clip_source if cfg else False
    src = Path(args.source) if args.source else (cfg.output_dir / "inserted.ply" if cfg else None)
    ref_path = Path(args.reference) if args.reference else (cfg.input_path("reference") if cfg else None)
    if src is None or ref_path is None:
        raise ConfigError("transfer needs --source and --reference (or a config providing them)")
    for p in (src, ref_path):
        if not p.exists():
            raise FileNotFoundError(f"input file not found: {p}")
    ref = images.read_rgb(ref_path)
    ref_mask_path = Path(args.reference_mask) if args.reference_mask else (
        cfg.paths.get("reference_mask") if cfg else None)
    ref_colors = ref[images.read_mask(ref_mask_path)] if ref_mask_path else ref.reshape(-1, 3)
    out = Path(args.out) if args.out else (cfg.output_dir if cfg else Path("."))
    out.mkdir(parents=True, exist_ok=True)
    t = Timings()
    with t.stage("Statistical Lab color transfer (optional)"):
        if src.suffix.lower() == ".ply":
            cloud = gaussians.load_ply(src)
            new = colorxfer.harmonize(np.clip(cloud.rgb(), 0, 1), ref_colors, tcfg, space=space, clip_source=clip_source)
            dest = out / "transferred.ply"
            gaussians.save_ply(cloud.with_rgb(new), dest)
        else:
            img = images.read_rgb(src)
            new = colorxfer.harmonize(img, ref_colors, tcfg, space=space, clip_source=clip_source)
            dest = out / "transferred.png"
            images.write_rgb(dest, new)
    print(f"wrote {dest}")
    t.report()
    return 0


def build_field(cfg: PipelineConfig) -> tuple[heightfield.HeightField, heightfield.GroundPlane]:
    background = gaussians.load_ply(cfg.input_path("background"))
    plane = heightfield.fit_ground_plane(background.xyz.astype(np.float64))
    src = cfg.input_path("inserted")
    if src.suffix.lower() == ".ply" and open(src, "rb").read(40).find(b"format ascii") >= 0:
        pts = lift.read_ascii_ply(src).points
    else:
        pts = gaussians.load_ply(src).xyz.astype(np.float64)
    return heightfield.build_heightfield(pts, plane, cfg.cell_size, cfg.hf_mode), plane


def cmd_heightfield(args, cfg: PipelineConfig) -> int:
    field, plane = build_field(cfg)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    field.save(out / "heightfield.bin")
    field.save_pgm(out / "heightfield.pgm")
    ny, nx = field.shape
    print(f"height field {nx}x{ny} cells @ {field.cell_size:g} m, residual range "
          f"[{field.residuals.min():.4g}, {field.residuals.max():.4g}] m -> {out / 'heightfield.bin'}")
    return 0


def _selected(seqs: dict, ids) -> dict:
    if not ids:
        return seqs
    missing = [v for v in ids if v not in seqs]
    if missing:
        raise ConfigError(f"vehicle ids not in pose file: {missing}")
    return {v: seqs[v] for v in ids}


def _provenance(cfg: PipelineConfig, sims: dict[str, halfcar.SimulationResult]) -> dict:
    sim_cfg = {
        "dt": cfg.dt,
        "t_end": cfg.t_end,
        "cell_size": cfg.cell_size,
        "mode": cfg.hf_mode,
        "vehicles": {vid: s.params.to_dict() if s.params else None for vid, s in sorted(sims.items())},
        "correction": asdict(cfg.correction),
    }
    return {"sim_config_sha256": pose.config_hash(sim_cfg), "sim_config": sim_cfg}


def run_simulate(cfg: PipelineConfig, vehicle_ids=None, timings: Timings | None = None) -> dict:
    t = timings or Timings()
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    seqs = _selected(pose.load_poses(cfg.input_path("poses")), vehicle_ids)
    with t.stage("Vehicle-dynamics solving and pose correction"):
        if cfg.paths.get("heightfield") is not None:
            field = heightfield.HeightField.load(cfg.input_path("heightfield"))
            background = gaussians.load_ply(cfg.input_path("background"))
            plane = heightfield.fit_ground_plane(background.xyz.astype(np.float64))
        else:
            field, plane = build_field(cfg)
        sims: dict[str, halfcar.SimulationResult] = {}
        corrected: dict[str, pose.PoseSequence] = {}
        for vid, seq in seqs.items():
            if len(seq) == 0:
                corrected[vid] = seq
                continue
            params = cfg.params_for(vid)
            traj = seq.trajectory(plane)
            t_end = cfg.t_end if cfg.t_end is not None else float(seq.t[-1])
            if t_end <= seq.t[0]:
                t_end = float(seq.t[0]) + cfg.dt
            exc = heightfield.excitation_along(field, traj, params, cfg.dt, t_end)
            sim = halfcar.simulate(halfcar.HalfCarState(), exc, params, t_end, cfg.dt, t_start=float(seq.t[0]))
            sims[vid] = sim
            sim.to_csv(out / f"sim_{vid}.csv")
            corr = pose.sample_correction(sim, seq.t)
            corr.to_csv(out / f"corrections_{vid}.csv")
            corrected[vid] = pose.apply_correction(seq, corr, cfg.correction)
        pose.save_poses(out / "poses_corrected.json", corrected, _provenance(cfg, sims))
    return {"sims": sims, "corrected": corrected}


def cmd_simulate(args, cfg: PipelineConfig) -> int:
    t = Timings()
    res = run_simulate(cfg, args.vehicle, t)
    for vid, sim in res["sims"].items():
        print(f"{vid}: peak |z_s| {np.abs(sim.z_s).max() * 1e3:.2f} mm, "
              f"peak |theta| {np.degrees(np.abs(sim.theta).max()):.3f} deg over {len(sim)} steps")
    print(f"corrected poses -> {cfg.output_dir / 'poses_corrected.json'}")
    t.report()
    return 0


def run_correct_poses(cfg: PipelineConfig, vehicle_ids=None, sim_path=None) -> dict[str, pose.PoseSequence]:
    seqs = _selected(pose.load_poses(cfg.input_path("poses")), vehicle_ids)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    if sim_path is not None and len(seqs) != 1:
        raise ConfigError("--sim applies to exactly one --vehicle")
    corrected = {}
    digests = {}
    for vid, seq in seqs.items():
        path = Path(sim_path) if sim_path is not None else out / f"sim_{vid}.csv"
        if not path.exists():
            raise FileNotFoundError(f"simulation file for {vid!r} not found: {path}")
        digests[vid] = hashlib.sha256(path.read_bytes()).hexdigest()
        sim = halfcar.SimulationResult.from_csv(path)
        if len(seq) == 0:
            corrected[vid] = seq
            continue
        # CSV values carry 9 significant digits, so allow matching slack at the ends
        corr = pose.sample_correction(sim, seq.t, tol=1e-6)
        corrected[vid] = pose.apply_correction(seq, corr, cfg.correction)
    prov = {"sim_files_sha256": digests, "correction": asdict(cfg.correction)}
    pose.save_poses(out / "poses_corrected.json", corrected, prov)
    return corrected


def cmd_correct_poses(args, cfg: PipelineConfig) -> int:
    corrected = run_correct_poses(cfg, args.vehicle, args.sim)
    print(f"corrected {len(corrected)} pose sequence(s) -> {cfg.output_dir / 'poses_corrected.json'}")
    return 0


def _read_csv_columns(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    header = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float).reshape(-1, len(header))
    return {h: data[:, i] for i, h in enumerate(header)}


def metrics_report(a: Path, b: Path, mask_a=None, mask_b=None, columns=None) -> dict:
    if a.suffix.lower() == ".csv" and b.suffix.lower() == ".csv":
        ca, cb = _read_csv_columns(a), _read_csv_columns(b)
        names = columns or [c for c in ca if c in cb and c != "t"]
        report = {}
        for c in names:
            if c not in ca or c not in cb:
                raise ValueError(f"column {c!r} missing from one of the CSV files")
            peak, trough = metrics.extrema_errors(ca[c], cb[c])
            report[c] = {"rmse": metrics.rmse(ca[c], cb[c]), "extrema_error": max(peak, trough),
                         "peak_error": peak, "trough_error": trough}
        return report
    ia, ib = images.read_rgb(a), images.read_rgb(b)
    ma = images.read_mask(mask_a) if mask_a else None
    mb = images.read_mask(mask_b) if mask_b else None
    report = {
        "laplacian_variance": [metrics.laplacian_variance(ia), metrics.laplacian_variance(ib)],
        "tenengrad": [metrics.tenengrad(ia), metrics.tenengrad(ib)],
        "ciede2000": metrics.region_ciede2000(ia, ib, ma, mb, mode="mean-lab"),
    }
    sa = ia[ma] if ma is not None else ia.reshape(-1, 3)
    sb = ib[mb] if mb is not None else ib.reshape(-1, 3)
    if sa.shape == sb.shape:
        report["ciede2000_per_pixel"] = metrics.region_ciede2000(ia, ib, ma, mb, mode="per-pixel")
    return report


def cmd_metrics(args, cfg=None) -> int:
    a, b = Path(args.a), Path(args.b)
    for p in (a, b, *(Path(m) for m in (args.mask_a, args.mask_b) if m)):
        if not p.exists():
            raise FileNotFoundError(f"input file not found: {p}")
    print(json.dumps(metrics_report(a, b, args.mask_a, args.mask_b, args.column), indent=2, sort_keys=True))
    return 0


# -- argument parsing --------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, config_required: bool = True):
    p.add_argument("--config", required=config_required, help="pipeline config JSON")
    p.add_argument("--sigma", type=float, help="global Gaussian scale factor in (0, 1]")
    p.add_argument("--beta", type=float, help="colour blend weight in [0, 1]")
    p.add_argument("--lambda", dest="lam", type=float, help="lightness shift weight in [0, 1]")
    p.add_argument("--dt", type=float, help="integration step (s)")
    p.add_argument("--cell-size", type=float, help="height-field cell size (m)")
    p.add_argument("--preset", choices=sorted(halfcar.PRESETS), help="default vehicle parameter preset")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roves", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixtures", help="write deterministic synthetic inputs")
    p.add_argument("--out", help="output directory (default: fixtures)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--amplitude", type=float, default=0.07, help="hump height (m)")
    p.set_defaults(func=cmd_fixtures, needs_config=False)

    for name, func, helptext in (
        ("lift", cmd_lift, "masked depth + texture -> local point cloud (ASCII PLY)"),
        ("insert", cmd_insert, "lift, recolour, initialise and merge new primitives"),
        ("heightfield", cmd_heightfield, "build the road height field from inserted primitives"),
    ):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.set_defaults(func=func, needs_config=True)

    p = sub.add_parser("transfer", help="statistical colour transfer of a PLY or PNG toward a reference")
    _common(p, config_required=False)
    p.add_argument("--source", help="Gaussian PLY or PNG to recolour")
    p.add_argument("--reference", help="reference road patch PNG")
    p.add_argument("--reference-mask", help="optional mask PNG for the reference")
    p.set_defaults(func=cmd_transfer, needs_config=False)

    for name, func, helptext in (
        ("simulate", cmd_simulate, "height field -> excitation -> half-car RK4 -> corrected poses"),
        ("correct-poses", cmd_correct_poses, "apply an existing simulation CSV to pose sequences"),
    ):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--vehicle", action="append", help="vehicle id to process (repeatable; default all)")
        if name == "correct-poses":
            p.add_argument("--sim", help="simulation CSV (with a single --vehicle)")
        p.set_defaults(func=func, needs_config=True)

    p = sub.add_parser("metrics", help="compare two CSV series or two PNG images; prints JSON")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--mask-a")
    p.add_argument("--mask-b")
    p.add_argument("--column", action="append", help="CSV column to compare (repeatable; default all shared)")
    p.set_defaults(func=cmd_metrics, needs_config=False)
    return parser


def _configure_logging():
    level = os.environ.get("ROVES_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = None
        if getattr(args, "config", None):
            cfg = load_config(args.config)
            cfg = apply_overrides(cfg, sigma=args.sigma, beta=args.beta, lam=args.lam, dt=args.dt,
                                  cell_size=args.cell_size, preset_name=args.preset, out=args.out)
        return args.func(args, cfg)
    except StageError as exc:
        inner = exc.exc
        code = 2 if isinstance(inner, (FileNotFoundError, ValueError)) else 1
        print(f"error in stage '{exc.stage}': {inner}", file=sys.stderr)
        if code == 1:
            log.exception("internal error")
        return code
    except (FileNotFoundError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
