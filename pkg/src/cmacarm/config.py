"""Experiment and robot configuration files.

Both files are YAML.  The robot file holds per-link records plus the
gravity orientation; the experiment file references the robot file and
fixes the encoder layouts, Golgi constants, training schedule, and dataset
sampling spec.  A complete annotated example lives in the repository under
``configs/``.
"""

import os
from dataclasses import dataclass

import numpy as np
import yaml

from .dynamics import LinkParams, RobotModel
from .encoding import BasisLayout
from .golgi import GolgiParams
from .network import TrainingConfig

LINK_FIELDS = ("mass", "length", "com_distance", "inertia_com",
               "fric_dynamic", "fric_static")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration input."""


def _load_yaml(path):
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML parse failure: {exc}")
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return doc


def build_planar_model(path):
    """Load a robot file into a validated RobotModel."""
    doc = _load_yaml(path)
    raw_links = doc.get("links")
    if not raw_links:
        raise ConfigError(f"{path}: 'links' must list at least one link")
    links = []
    for i, rec in enumerate(raw_links):
        if not isinstance(rec, dict):
            raise ConfigError(f"{path}: link {i}: expected a mapping")
        unknown = set(rec) - set(LINK_FIELDS)
        if unknown:
            raise ConfigError(f"{path}: link {i}: unknown fields {sorted(unknown)}")
        missing = {"mass", "length", "com_distance", "inertia_com"} - set(rec)
        if missing:
            raise ConfigError(f"{path}: link {i}: missing fields {sorted(missing)}")
        try:
            links.append(LinkParams(**{k: float(v) for k, v in rec.items()}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: link {i}: {exc}")
    try:
        return RobotModel(links=tuple(links),
                          gravity_mag=float(doc.get("gravity_mag", 9.81)),
                          base_tilt=float(doc.get("base_tilt", 0.0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}")


@dataclass(frozen=True)
class DatasetSpec:
    count: int = 10000
    seed: int = 42
    holdout: float = 0.2
    qd_max: float = 3.0
    qdd_max: float = 5.0
    wrench_max: float = 5.0

    def __post_init__(self):
        if self.count < 0:
            raise ConfigError("dataset count must be >= 0")
        if not 0 <= self.holdout < 1:
            raise ConfigError("holdout must be in [0, 1)")

    def to_dict(self):
        return {"count": self.count, "seed": self.seed,
                "holdout": self.holdout, "qd_max": self.qd_max,
                "qdd_max": self.qdd_max, "wrench_max": self.wrench_max}


@dataclass(frozen=True)
class ExperimentConfig:
    robot_path: str
    model: RobotModel
    position_layout: BasisLayout
    speed_layout: BasisLayout
    golgi: GolgiParams
    training: TrainingConfig
    dataset: DatasetSpec
    output_dir: str


def _layout_from(doc, section, path, default_ranges=None):
    sec = doc.get(section)
    if sec is None:
        raise ConfigError(f"{path}: missing '{section}' section")
    try:
        return BasisLayout(
            ranges=tuple(tuple(r) for r in sec.get("ranges", default_ranges)),
            tilings=int(sec.get("tilings", 8)),
            cells_per_dim=sec.get("cells_per_dim", 10)
            if np.isscalar(sec.get("cells_per_dim", 10))
            else tuple(sec["cells_per_dim"]),
            offsets=tuple(sec["offsets"]) if "offsets" in sec else None,
            field_shape=sec.get("field_shape", "rectangular"),
            combine=sec.get("combine", "product"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {section}: {exc}")


def load_experiment(path):
    """Load the single experiment file that drives every subcommand."""
    doc = _load_yaml(path)
    base = os.path.dirname(os.path.abspath(path))
    robot_rel = doc.get("robot")
    if not robot_rel:
        raise ConfigError(f"{path}: missing 'robot' file reference")
    robot_path = os.path.join(base, robot_rel)
    model = build_planar_model(robot_path)

    pos = _layout_from(doc, "layout", path)
    if pos.dims != model.n:
        raise ConfigError(f"{path}: layout has {pos.dims} dims "
                          f"but robot has {model.n} joints")
    spd = _layout_from(doc, "speed_layout", path)
    if spd.dims != 1:
        raise ConfigError(f"{path}: speed_layout must be 1-dimensional")

    try:
        golgi = GolgiParams(**{**doc.get("golgi", {}),
                               "p_syn": pos.size})
        training = TrainingConfig(**doc.get("training", {}))
        dataset = DatasetSpec(**doc.get("dataset", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}")

    out_dir = doc.get("output_dir", "out")
    if not os.path.isabs(out_dir):
        out_dir = os.path.join(base, out_dir)
    return ExperimentConfig(robot_path=robot_path, model=model,
                            position_layout=pos, speed_layout=spd,
                            golgi=golgi, training=training, dataset=dataset,
                            output_dir=out_dir)
