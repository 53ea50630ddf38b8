"""Pipeline configuration (JSON) and its validation.

Schema (all sections optional except ``paths``; relative paths resolve
against the config file's directory)::

    {
      "paths": {"texture", "mask", "depth", "background", "poses",
                "reference", "reference_mask", "inserted", "heightfield",
                "output_dir"},
      "dims": {"L_x", "L_y", "L_z"},
      "placement": {"translation": [x, y, z], "yaw": rad},
      "lift": {"stride": 1, "invert_depth": false, "clip_percentiles": null},
      "scale": {"sigma": 0.01, "epsilon": 1e-7, "k": 1},
      "transfer": {"enabled": true, "lambda": 0.2, "beta": 0.75,
                   "source": "img" | "pc", "space": "lab" | "rgb",
                   "clip_source": false},
      "merge": {"margin": 0.02, "height_band": null},
      "heightfield": {"cell_size": 0.05, "mode": "max" | "min"},
      "vehicle": {"preset": "ego"} | {"params": {...}},
      "vehicles": {"<vehicle id>": {"preset": ...} | {"params": {...}}},
      "sim": {"dt": 0.001, "t_end": null},
      "frame_rate": 10,
      "correction": {"up": [0, 0, 1], "lateral_axis": [0, 1, 0], "pivot": [0, 0, 0]}
    }

Path existence is checked by each subcommand for the inputs it reads.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .colorxfer import TransferConfig
from .gaussians import DEFAULT_MARGIN, ScaleConfig
from .halfcar import DEFAULT_DT, VehicleParams, preset
from .heightfield import DEFAULT_CELL_SIZE
from .lift import TargetDims
from .pose import CorrectionFrame

DEFAULT_FRAME_RATE = 10.0

_SECTIONS = {"paths", "dims", "placement", "lift", "scale", "transfer", "merge", "heightfield",
             "vehicle", "vehicles", "sim", "frame_rate", "correction"}
_PATH_KEYS = ("texture", "mask", "depth", "background", "poses", "reference", "reference_mask",
              "inserted", "heightfield", "output_dir")


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    paths: dict[str, Path | None]
    dims: TargetDims = TargetDims(0.4, 3.5, 0.07)
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    yaw: float = 0.0
    stride: int = 1
    invert_depth: bool = False
    clip_percentiles: tuple[float, float] | None = None
    scale: ScaleConfig = ScaleConfig()
    transfer: TransferConfig = TransferConfig()
    transfer_enabled: bool = True
    transfer_source: str = "img"
    transfer_space: str = "lab"
    clip_source: bool = False
    margin: float = DEFAULT_MARGIN
    height_band: tuple[float, float] | None = None
    cell_size: float = DEFAULT_CELL_SIZE
    hf_mode: str = "max"
    vehicle: VehicleParams = preset("ego")
    vehicle_name: str = "ego"
    vehicles: dict[str, VehicleParams] = field(default_factory=dict)
    dt: float = DEFAULT_DT
    t_end: float | None = None
    frame_rate: float = DEFAULT_FRAME_RATE
    correction: CorrectionFrame = CorrectionFrame()
    raw: dict = field(default_factory=dict)

    @property
    def output_dir(self) -> Path:
        return self.paths["output_dir"] or Path("out")

    def path(self, key: str) -> Path:
        p = self.paths.get(key)
        if p is None and key == "inserted":
            return self.output_dir / "inserted.ply"
        if p is None:
            raise ConfigError(f"config does not set paths.{key}")
        return p

    def input_path(self, key: str) -> Path:
        p = self.path(key)
        if not p.exists():
            raise FileNotFoundError(f"input file for paths.{key} not found: {p}")
        return p

    def params_for(self, vehicle_id: str) -> VehicleParams:
        return self.vehicles.get(vehicle_id, self.vehicle)


def _vehicle(spec, where: str) -> tuple[VehicleParams, str]:
    if not isinstance(spec, dict):
        raise ConfigError(f"{where} must be an object")
    if "preset" in spec and "params" in spec:
        raise ConfigError(f"{where}: give either 'preset' or 'params', not both")
    if "params" in spec:
        return VehicleParams.from_dict(spec["params"]), "custom"
    name = spec.get("preset", "ego")
    return preset(name), name


def _pair(v, where):
    if v is None:
        return None
    if not (isinstance(v, (list, tuple)) and len(v) == 2):
        raise ConfigError(f"{where} must be a two-element list")
    return float(v[0]), float(v[1])


def _vec3(v, where):
    if not (isinstance(v, (list, tuple)) and len(v) == 3):
        raise ConfigError(f"{where} must be a three-element list")
    return tuple(float(x) for x in v)


def from_dict(doc: dict, base_dir: Path | None = None) -> PipelineConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(doc) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    raw_paths = doc.get("paths", {})
    bad = set(raw_paths) - set(_PATH_KEYS)
    if bad:
        raise ConfigError(f"unknown paths keys: {sorted(bad)}")
    paths = {k: (None if raw_paths.get(k) is None else base / raw_paths[k]) for k in _PATH_KEYS}
    try:
        cfg = PipelineConfig(paths=paths, raw=doc)
        if "dims" in doc:
            d = doc["dims"]
            cfg.dims = TargetDims(float(d["L_x"]), float(d["L_y"]), float(d["L_z"]))
        pl = doc.get("placement", {})
        if "translation" in pl:
            cfg.translation = _vec3(pl["translation"], "placement.translation")
        cfg.yaw = float(pl.get("yaw", 0.0))
        lf = doc.get("lift", {})
        cfg.stride = int(lf.get("stride", 1))
        cfg.invert_depth = bool(lf.get("invert_depth", False))
        cfg.clip_percentiles = _pair(lf.get("clip_percentiles"), "lift.clip_percentiles")
        sc = doc.get("scale", {})
        cfg.scale = ScaleConfig(float(sc.get("sigma", 0.01)), float(sc.get("epsilon", 1e-7)), int(sc.get("k", 1)))
        tr = doc.get("transfer", {})
        cfg.transfer = TransferConfig(float(tr.get("lambda", 0.2)), float(tr.get("beta", 0.75)))
        cfg.transfer_enabled = bool(tr.get("enabled", True))
        cfg.transfer_source = tr.get("source", "img")
        cfg.transfer_space = tr.get("space", "lab")
        cfg.clip_source = bool(tr.get("clip_source", False))
        if cfg.transfer_source not in ("img", "pc"):
            raise ConfigError("transfer.source must be 'img' or 'pc'")
        if cfg.transfer_space not in ("lab", "rgb"):
            raise ConfigError("transfer.space must be 'lab' or 'rgb'")
        mg = doc.get("merge", {})
        cfg.margin = float(mg.get("margin", DEFAULT_MARGIN))
        cfg.height_band = _pair(mg.get("height_band"), "merge.height_band")
        hf = doc.get("heightfield", {})
        cfg.cell_size = float(hf.get("cell_size", DEFAULT_CELL_SIZE))
        cfg.hf_mode = hf.get("mode", "max")
        if cfg.hf_mode not in ("max", "min"):
            raise ConfigError("heightfield.mode must be 'max' or 'min'")
        if not cfg.cell_size > 0:
            raise ConfigError("heightfield.cell_size must be > 0")
        if "vehicle" in doc:
            cfg.vehicle, cfg.vehicle_name = _vehicle(doc["vehicle"], "vehicle")
        cfg.vehicles = {vid: _vehicle(spec, f"vehicles.{vid}")[0] for vid, spec in doc.get("vehicles", {}).items()}
        sim = doc.get("sim", {})
        cfg.dt = float(sim.get("dt", DEFAULT_DT))
        cfg.t_end = None if sim.get("t_end") is None else float(sim["t_end"])
        if not cfg.dt > 0:
            raise ConfigError("sim.dt must be > 0")
        cfg.frame_rate = float(doc.get("frame_rate", DEFAULT_FRAME_RATE))
        if not cfg.frame_rate > 0:
            raise ConfigError("frame_rate must be > 0")
        co = doc.get("correction", {})
        cfg.correction = CorrectionFrame(
            up=_vec3(co.get("up", [0, 0, 1]), "correction.up"),
            lateral_axis=_vec3(co.get("lateral_axis", [0, 1, 0]), "correction.lateral_axis"),
            pivot=_vec3(co.get("pivot", [0, 0, 0]), "correction.pivot"),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    return cfg


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return from_dict(doc, path.parent)


def apply_overrides(cfg: PipelineConfig, *, sigma=None, beta=None, lam=None, dt=None,
                    cell_size=None, preset_name=None, out=None) -> PipelineConfig:
    """Command-line flags take precedence over config values."""
    try:
        if sigma is not None:
            cfg.scale = replace(cfg.scale, sigma=sigma)
        if beta is not None:
            cfg.transfer = replace(cfg.transfer, beta=beta)
        if lam is not None:
            cfg.transfer = replace(cfg.transfer, lam=lam)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if dt is not None:
        if not dt > 0:
            raise ConfigError("--dt must be > 0")
        cfg.dt = dt
    if cell_size is not None:
        if not cell_size > 0:
            raise ConfigError("--cell-size must be > 0")
        cfg.cell_size = cell_size
    if preset_name is not None:
        try:
            cfg.vehicle = preset(preset_name)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        cfg.vehicle_name = preset_name
    if out is not None:
        cfg.paths["output_dir"] = Path(out)
    return cfg
