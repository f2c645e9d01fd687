"""Run configuration files.

A config is a YAML mapping with four blocks::

    experiment: dense
    output_dir: runs/dense
    simulation:
      object: builtin          # or {amplitude: amp.png, phase: phase.png}
      object_size: 128
      probe_size: 128
      probe_radius: 50
      step: 35
      scans_per_axis: 4
      flux: 1.0e8              # null for noise-free data
      noise_seed: 0
      phase_scale: 1.0
    algorithm:
      name: sirdr
      sigma: 0.5
      tau: 0.1
      beta_O: 0.9
      beta_P_start: 1.0
      beta_P_end: 0.1
      epochs: 300
      shuffle_seed: 0
      init: ones               # or random
      init_seed: 0
    sparsity:
      keep_fraction: 1.0
      subset_seed: 0

Relative file paths are resolved against the config file's directory.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .errors import ConfigError, PtysolveError
from .recon import AlgoParams, Algorithm


@dataclass
class SimulationConfig:
    object: str = "builtin"
    amplitude_image: Optional[Path] = None
    phase_image: Optional[Path] = None
    object_size: int = 128
    probe_size: int = 128
    probe_radius: float = 50.0
    step: int = 35
    scans_per_axis: int = 4
    flux: Optional[float] = 1e8
    noise_seed: int = 0
    phase_scale: float = 1.0


@dataclass
class AlgorithmConfig:
    name: str = "sirdr"
    sigma: float = 0.5
    tau: float = 0.1
    beta_O: float = 0.9
    beta_P_start: float = 1.0
    beta_P_end: float = 0.1
    epochs: int = 100
    shuffle_seed: int = 0
    init: str = "ones"
    init_seed: int = 0

    def params(self, algorithm=None):
        return AlgoParams(
            algorithm=Algorithm.parse(algorithm or self.name),
            sigma=self.sigma, tau=self.tau, beta_O=self.beta_O,
            beta_P_start=self.beta_P_start, beta_P_end=self.beta_P_end,
            epochs=self.epochs, shuffle_seed=self.shuffle_seed,
        )


@dataclass
class SparsityConfig:
    keep_fraction: float = 1.0
    subset_seed: int = 0


@dataclass
class RunConfig:
    experiment: str = "experiment"
    output_dir: Path = Path("runs/experiment")
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    algorithm: AlgorithmConfig = field(default_factory=AlgorithmConfig)
    sparsity: SparsityConfig = field(default_factory=SparsityConfig)

    def with_overrides(self, *, out=None, seed=None, algorithm=None, epochs=None):
        """Copy with CLI flag overrides applied; ``seed`` sets every seed at once."""
        cfg = dataclasses.replace(
            self,
            simulation=dataclasses.replace(self.simulation),
            algorithm=dataclasses.replace(self.algorithm),
            sparsity=dataclasses.replace(self.sparsity),
        )
        if out is not None:
            cfg.output_dir = Path(out)
        if seed is not None:
            cfg.simulation.noise_seed = seed
            cfg.sparsity.subset_seed = seed
            cfg.algorithm.shuffle_seed = seed
            cfg.algorithm.init_seed = seed
        if algorithm is not None:
            cfg.algorithm.name = Algorithm.parse(algorithm).value
        if epochs is not None:
            cfg.algorithm.epochs = epochs
        cfg.validate()
        return cfg

    def validate(self):
        sim, alg, sp = self.simulation, self.algorithm, self.sparsity
        positive = [
            ("simulation.object_size", sim.object_size),
            ("simulation.probe_size", sim.probe_size),
            ("simulation.probe_radius", sim.probe_radius),
            ("simulation.step", sim.step),
            ("simulation.scans_per_axis", sim.scans_per_axis),
            ("algorithm.epochs", alg.epochs),
        ]
        for path, value in positive:
            if value <= 0:
                raise ConfigError(path, f"must be positive, got {value}")
        if sim.flux is not None and sim.flux <= 0:
            raise ConfigError("simulation.flux", f"must be positive or null, got {sim.flux}")
        if not 0 < sp.keep_fraction <= 1:
            raise ConfigError("sparsity.keep_fraction", f"must lie in (0, 1], got {sp.keep_fraction}")
        if alg.init not in ("ones", "random"):
            raise ConfigError("algorithm.init", f"must be 'ones' or 'random', got {alg.init!r}")
        try:
            Algorithm.parse(alg.name)
        except PtysolveError as exc:
            raise ConfigError("algorithm.name", str(exc)) from None
        try:
            alg.params()
        except PtysolveError as exc:
            raise ConfigError("algorithm", str(exc)) from None
        if sim.object == "images":
            for path, img in (("simulation.object.amplitude", sim.amplitude_image),
                              ("simulation.object.phase", sim.phase_image)):
                if img is None or not Path(img).is_file():
                    raise ConfigError(path, f"image file not found: {img}")
        return self


def _coerce(block_cls, data, prefix):
    if data is None:
        return block_cls()
    if not isinstance(data, dict):
        raise ConfigError(prefix, "expected a mapping")
    known = {f.name: f for f in dataclasses.fields(block_cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{prefix}.{key}", "unknown field")
        default = known[key].default
        try:
            if value is None or default is None or isinstance(default, str):
                kwargs[key] = value
            elif isinstance(default, bool):
                kwargs[key] = bool(value)
            elif isinstance(default, int):
                if isinstance(value, float) and not value.is_integer():
                    raise ValueError(f"expected an integer, got {value}")
                kwargs[key] = int(value)
            elif isinstance(default, float):
                kwargs[key] = float(value)
            else:
                kwargs[key] = value
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{prefix}.{key}", str(exc)) from None
    return block_cls(**kwargs)


def parse_config(data, base_dir=Path(".")):
    """Build a validated :class:`RunConfig` from an already-parsed mapping."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a mapping")
    unknown = set(data) - {"experiment", "output_dir", "simulation", "algorithm", "sparsity"}
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown top-level field")
    base_dir = Path(base_dir)

    sim_data = dict(data.get("simulation") or {})
    obj = sim_data.pop("object", "builtin")
    amp_img = phase_img = None
    if isinstance(obj, dict):
        extra = set(obj) - {"amplitude", "phase"}
        if extra:
            raise ConfigError(f"simulation.object.{sorted(extra)[0]}", "unknown field")
        if "amplitude" not in obj or "phase" not in obj:
            raise ConfigError("simulation.object", "needs both 'amplitude' and 'phase' images")
        amp_img = base_dir / obj["amplitude"]
        phase_img = base_dir / obj["phase"]
        obj = "images"
    elif obj != "builtin":
        raise ConfigError("simulation.object", f"expected 'builtin' or an image mapping, got {obj!r}")
    sim = _coerce(SimulationConfig, sim_data, "simulation")
    sim.object, sim.amplitude_image, sim.phase_image = obj, amp_img, phase_img

    cfg = RunConfig(
        experiment=str(data.get("experiment", "experiment")),
        output_dir=base_dir / str(data.get("output_dir", f"runs/{data.get('experiment', 'experiment')}")),
        simulation=sim,
        algorithm=_coerce(AlgorithmConfig, data.get("algorithm"), "algorithm"),
        sparsity=_coerce(SparsityConfig, data.get("sparsity"), "sparsity"),
    )
    return cfg.validate()


def load_config(path):
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"invalid YAML: {exc}") from None
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from None
    return parse_config(data or {}, base_dir=path.parent)
