"""Command-line pipeline: simulate -> reconstruct -> score, plus compare.

Usage::

    ptysolve simulate    --config run.yaml [--out DIR] [--seed N]
    ptysolve reconstruct --config run.yaml [--algorithm epie|rpie|sirdr] [--epochs K]
    ptysolve score       --config run.yaml
    ptysolve compare     --config run.yaml

Output layout under the run directory::

    stack/                 meta.json + patterns.bin (the measured data)
    truth/                 ground-truth object/probe (simulated runs only)
    recon_<algo>/          object, probe, trace.csv, summary.json
    score_<algo>.json
    compare/               report.json, report.txt, grid.png
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .errors import ConfigError, DivergenceError, PtysolveError
from .io import (
    amplitude_to_uint8,
    atomic_write_text,
    export_field_images,
    load_field,
    load_grayscale,
    load_stack,
    phase_to_uint8,
    save_png,
    save_stack,
)
from .metrics import (
    aligned_object_error,
    coverage_mask,
    normalize_probe_energy,
    r_factor,
    r_noise,
)
from .recon import Algorithm, initial_object, run_reconstruction
from .sim import make_circular_probe, overlap_fraction, simulate_experiment

log = logging.getLogger("ptysolve")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


# --------------------------------------------------------------------------
# artifact helpers


def _write_json(path, payload):
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _save_fields(directory, fields, extra=None):
    directory = Path(directory)
    index = dict(extra or {})
    for name, value in fields.items():
        export_field_images(value, directory / name)
        index[name] = list(value.shape)
    _write_json(directory / "fields.json", index)


def _load_fields(directory):
    directory = Path(directory)
    index = json.loads((directory / "fields.json").read_text())
    out = {}
    for name in ("object", "probe"):
        if name in index:
            out[name] = load_field(directory / f"{name}_field.bin", tuple(index[name]))
    return out, index


def simulate(cfg):
    sim, sp = cfg.simulation, cfg.sparsity
    amp = phase = None
    if sim.object == "images":
        shape = (sim.object_size, sim.object_size)
        amp = load_grayscale(sim.amplitude_image, shape)
        phase = load_grayscale(sim.phase_image, shape)
    return simulate_experiment(
        amp, phase,
        object_size=sim.object_size, probe_size=sim.probe_size,
        probe_radius=sim.probe_radius, step=sim.step,
        scans_per_axis=sim.scans_per_axis, flux=sim.flux,
        noise_seed=sim.noise_seed, phase_scale=sim.phase_scale,
        keep_fraction=sp.keep_fraction, subset_seed=sp.subset_seed,
    )


def _ensure_stack(cfg):
    stack_dir = cfg.output_dir / "stack"
    if not (stack_dir / "meta.json").is_file():
        cmd_simulate(cfg)
    return load_stack(stack_dir)


def _run_one(cfg, stack, algorithm):
    alg = cfg.algorithm
    params = alg.params(algorithm)
    obj0 = initial_object(stack.geometry.object_shape, alg.init, alg.init_seed)
    probe0 = make_circular_probe(stack.geometry.probe_rows, stack.probe_radius)
    state = run_reconstruction(stack, params, init=(obj0, probe0))

    out = cfg.output_dir / f"recon_{params.algorithm.value}"
    _save_fields(out, {"object": state.obj, "probe": state.probe})
    state.trace.to_csv(out / "trace.csv")
    z_digest = None
    if state.z_store is not None:
        z_digest = hashlib.sha256(np.ascontiguousarray(state.z_store).tobytes()).hexdigest()
    _write_json(out / "summary.json", {
        "algorithm": params.algorithm.value,
        "epochs": state.epoch,
        "final_r_factor": state.trace.records[-1][1],
        "seconds": state.trace.records[-1][2],
        "z_store_sha256": z_digest,
        "params": {k: (v.value if isinstance(v, Algorithm) else v)
                   for k, v in vars(params).items()},
    })
    return state


def _score(cfg, stack, algorithm):
    recon_dir = cfg.output_dir / f"recon_{algorithm}"
    fields, _ = _load_fields(recon_dir)
    obj, probe = fields["object"], fields["probe"]
    report = {
        "algorithm": algorithm,
        "r_factor": r_factor(obj, probe, stack),
        "overlap_fraction": overlap_fraction(cfg.simulation.probe_radius, cfg.simulation.step),
        "r_noise": None,
        "aligned_error": None,
        "aligned_phase": None,
    }
    truth_dir = cfg.output_dir / "truth"
    if (truth_dir / "fields.json").is_file():
        truth, _ = _load_fields(truth_dir)
        report["r_noise"] = r_noise((truth["object"], truth["probe"]), stack)
        reference = make_circular_probe(stack.geometry.probe_rows, stack.probe_radius)
        obj_n, _ = normalize_probe_energy(obj, probe, reference)
        mask = coverage_mask(reference, stack.geometry)
        err, phase = aligned_object_error(obj_n, truth["object"], mask)
        report["aligned_error"], report["aligned_phase"] = err, phase
    _write_json(cfg.output_dir / f"score_{algorithm}.json", report)
    return report


# --------------------------------------------------------------------------
# commands


def cmd_simulate(cfg):
    ex = simulate(cfg)
    save_stack(ex.stack, cfg.output_dir / "stack")
    r = ex.truth_region
    _save_fields(cfg.output_dir / "truth", {"object": ex.obj, "probe": ex.probe},
                 extra={"truth_region": [r.row_offset, r.col_offset, r.height, r.width]})
    log.info("simulated %d patterns into %s", len(ex.stack), cfg.output_dir)
    return EXIT_OK


def cmd_reconstruct(cfg):
    stack = _ensure_stack(cfg)
    state = _run_one(cfg, stack, cfg.algorithm.name)
    log.info("%s: %d epochs, final R_F %.4g", cfg.algorithm.name, state.epoch,
             state.trace.records[-1][1])
    return EXIT_OK


def cmd_score(cfg):
    stack = load_stack(cfg.output_dir / "stack")
    report = _score(cfg, stack, Algorithm.parse(cfg.algorithm.name).value)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def _grid_image(fields):
    tiles = [np.hstack([amplitude_to_uint8(f) for f in fields]),
             np.hstack([phase_to_uint8(f) for f in fields])]
    return np.vstack(tiles)


def cmd_compare(cfg):
    stack = _ensure_stack(cfg)
    reports, objects = {}, []
    for algo in Algorithm:
        _run_one(cfg, stack, algo.value)
        reports[algo.value] = _score(cfg, stack, algo.value)
        fields, _ = _load_fields(cfg.output_dir / f"recon_{algo.value}")
        objects.append(fields["object"])
    out = cfg.output_dir / "compare"
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "report.json", {"experiment": cfg.experiment, "results": reports})
    lines = [f"{'algorithm':<10}{'R_F':>10}{'aligned_error':>16}"]
    for name, rep in reports.items():
        err = rep["aligned_error"]
        err_s = "n/a" if err is None else f"{err:.4f}"
        lines.append(f"{name:<10}{rep['r_factor']:>10.4f}{err_s:>16}")
    text = "\n".join(lines) + "\n"
    atomic_write_text(out / "report.txt", text)
    save_png(out / "grid.png", _grid_image(objects))
    print(text, end="")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "score": cmd_score,
    "compare": cmd_compare,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="ptysolve", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="YAML run configuration")
        p.add_argument("--out", type=Path, help="override output_dir")
        p.add_argument("--seed", type=int, help="override every seed in the config")
        p.add_argument("--algorithm", choices=[a.value for a in Algorithm])
        p.add_argument("--epochs", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config).with_overrides(
            out=args.out, seed=args.seed, algorithm=args.algorithm, epochs=args.epochs
        )
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"ptysolve: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"ptysolve: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (PtysolveError, OSError) as exc:
        print(f"ptysolve: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
