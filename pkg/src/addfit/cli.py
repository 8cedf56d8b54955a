"""Batch command-line front end.

Subcommands cover the whole pipeline on files::

    addfit simulate  --config run.toml          # synthetic dataset + truth
    addfit cmif      dataset.csv                # mode indicator + mode seeds
    addfit identify  dataset.csv --modes modes.json --rigid-body
    addfit validate  model.json dataset.csv     # cost and error metrics

Common flags (accepted by every subcommand): ``--config`` (TOML or JSON),
``--seed`` (overrides the configured seed), ``--format csv|json`` (dataset
files), ``--out-dir``. Exit codes: 0 success, 2 input error,
3 non-convergence (artifacts are still written).

All outputs are deterministic for a given config and seed: floats are
printed with 17 significant digits and key order is fixed, so repeated
runs produce byte-identical files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._jsonutil import dumps, format_float, write_json
from .cmif import PeakOptions, compute_cmif, detect_peaks, export_cmif_csv, with_peaks
from .errors import AddfitError, DivergenceError
from .estimator import (
    EstimationOptions,
    cost,
    estimate,
    init_numerators,
    report_to_json,
)
from .frf import FrfDataset, band_select, delay_compensate, load_frf, save_frf
from .model import (
    ModalSpec,
    ScalarDenominator,
    check_stability,
    eval_model,
    load_model,
    modal_to_submodel,
    save_model,
)
from .synth import GridSpec, NoiseSpec, SynthSpec, build_truth, simulate_frf
from .weighting import identity_weighting, inverse_magnitude_weighting

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NOCONV = 3

DEFAULT_SYNTH = {
    "n_u": 2,
    "n_y": 2,
    "rigid_body": [[40.0, 8.0], [8.0, 30.0]],
    "modes": [
        {"f_hz": 150.0, "zeta": 0.01, "residue": [[1.0, 0.4], [0.4, 0.8]]},
        {"f_hz": 350.0, "zeta": 0.01, "residue": [[-0.6, 1.0], [1.0, 0.5]]},
    ],
    "grid": {"f_start_hz": 1.0, "f_stop_hz": 500.0, "n": 800, "spacing": "log"},
    "noise": {"kind": "none", "snr_db": 40.0},
    "delay": 0.0,
    "seed": 0,
}

DEFAULT_FRF = {"delay": 0.0, "weighting": "inverse_magnitude"}
DEFAULT_CMIF = {"window": 2, "prominence_ratio": 10.0, "default_zeta": 0.01, "tracks": 1}
DEFAULT_IO = {"out_dir": ".", "format": "csv"}


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise AddfitError(f"config file not found: {path}")
    text = p.read_bytes()
    if p.suffix.lower() == ".json":
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise AddfitError(f"{path}: invalid JSON config ({exc})") from exc
    try:
        import tomllib  # Python >= 3.11
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        return tomllib.loads(text.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise AddfitError(f"{path}: invalid TOML config ({exc})") from exc


def _merged(defaults: dict, overrides: dict, applied: list, section: str) -> dict:
    out = dict(defaults)
    missing = [k for k in defaults if k not in overrides]
    unknown = [k for k in overrides if k not in defaults]
    if unknown:
        raise AddfitError(f"unknown keys in [{section}]: {sorted(unknown)}")
    for k in missing:
        applied.append(f"{section}.{k}")
    out.update(overrides)
    return out


def _synth_spec(config: dict, seed_override: int | None, applied: list) -> SynthSpec:
    section = config.get("synth", {})
    if not section:
        applied.append("synth (entire section)")
    raw = _merged(DEFAULT_SYNTH, section, applied, "synth")
    seed = seed_override if seed_override is not None else int(raw["seed"])
    grid = _merged(DEFAULT_SYNTH["grid"], raw["grid"], applied, "synth.grid")
    noise = _merged(DEFAULT_SYNTH["noise"], raw["noise"], applied, "synth.noise")
    modes = tuple(
        ModalSpec(
            omega=2.0 * np.pi * float(m["f_hz"]),
            zeta=float(m["zeta"]),
            residue=np.asarray(m["residue"], dtype=float),
        )
        for m in raw["modes"]
    )
    rigid = raw["rigid_body"]
    return SynthSpec(
        n_u=int(raw["n_u"]),
        n_y=int(raw["n_y"]),
        grid=GridSpec(
            f_start=float(grid["f_start_hz"]),
            f_stop=float(grid["f_stop_hz"]),
            n=int(grid["n"]),
            spacing=str(grid["spacing"]),
        ),
        modes=modes,
        rigid_body=None if rigid is None else np.asarray(rigid, dtype=float),
        noise=NoiseSpec(kind=str(noise["kind"]), snr_db=float(noise["snr_db"])),
        delay=float(raw["delay"]),
        seed=seed,
    )


def _spec_digest(config: dict, seed: int) -> str:
    doc = dict(config.get("synth", {}))
    doc["seed"] = seed
    return hashlib.sha256(dumps(_plainify(doc)).encode()).hexdigest()


def _plainify(obj):
    if isinstance(obj, dict):
        return {k: _plainify(obj[k]) for k in sorted(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plainify(v) for v in obj]
    if isinstance(obj, (int, bool, str)) or obj is None:
        return obj
    return float(obj)


def _out_dir(config: dict, args) -> Path:
    io_cfg = config.get("io", {})
    out = args.out_dir or io_cfg.get("out_dir", DEFAULT_IO["out_dir"])
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _dataset_format(config: dict, args) -> str:
    fmt = args.format or config.get("io", {}).get("format", DEFAULT_IO["format"])
    if fmt not in ("csv", "json"):
        raise AddfitError(f"unknown dataset format {fmt!r}")
    return fmt


def _build_weighting(dataset, config: dict):
    frf_cfg = {**DEFAULT_FRF, **config.get("frf", {})}
    kind = frf_cfg.get("weighting", "inverse_magnitude")
    if kind == "identity":
        return identity_weighting(dataset.n_u, dataset.n_y, dataset.n_points)
    if kind == "inverse_magnitude":
        floor = frf_cfg.get("floor")
        return inverse_magnitude_weighting(dataset, floor=floor)
    raise AddfitError(f"unknown weighting kind {kind!r}")


def _preprocess(dataset, config: dict):
    frf_cfg = config.get("frf", {})
    tau = float(frf_cfg.get("delay", 0.0))
    if tau:
        dataset = delay_compensate(dataset, tau)
    f_min = frf_cfg.get("f_min_hz")
    f_max = frf_cfg.get("f_max_hz")
    if f_min is not None or f_max is not None:
        lo = float(f_min) if f_min is not None else 0.0
        hi = float(f_max) if f_max is not None else float("inf")
        dataset = band_select(dataset, lo, hi)
    return dataset


def _peak_options(config: dict) -> PeakOptions:
    cfg = {**DEFAULT_CMIF, **config.get("cmif", {})}
    return PeakOptions(
        window=int(cfg["window"]),
        prominence_ratio=float(cfg["prominence_ratio"]),
        default_zeta=float(cfg["default_zeta"]),
        tracks=int(cfg["tracks"]),
    )


def _estimation_options(config: dict, args) -> EstimationOptions:
    cfg = dict(config.get("estimator", {}))
    if getattr(args, "max_iterations", None) is not None:
        cfg["max_iterations"] = args.max_iterations
    if getattr(args, "instrument", None) is not None:
        cfg["instrument"] = args.instrument
    try:
        return EstimationOptions.from_mapping(cfg)
    except (ValueError, TypeError) as exc:
        raise AddfitError(f"bad [estimator] options: {exc}") from exc


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args, config: dict) -> int:
    applied: list = []
    spec = _synth_spec(config, args.seed, applied)
    dataset = simulate_frf(spec)
    truth = build_truth(spec)
    fmt = _dataset_format(config, args)
    out = _out_dir(config, args)

    dataset_path = out / f"dataset.{fmt}"
    truth_path = out / "truth_model.json"
    save_frf(dataset, dataset_path, fmt)
    save_model(truth, truth_path)
    manifest = {
        "command": "simulate",
        "seed": spec.seed,
        "spec_sha256": _spec_digest(config, spec.seed),
        "defaults_applied": applied,
        "outputs": {"dataset": dataset_path.name, "truth_model": truth_path.name},
    }
    write_json(out / "simulate_manifest.json", manifest)
    print(f"wrote {dataset_path} ({dataset.n_points} points, "
          f"{dataset.n_y}x{dataset.n_u}) and {truth_path}")
    return EXIT_OK


def cmd_cmif(args, config: dict) -> int:
    dataset = load_frf(args.dataset, args.format)
    dataset = _preprocess(dataset, config)
    opts = _peak_options(config)
    result = with_peaks(compute_cmif(dataset), opts)
    out = _out_dir(config, args)
    export_cmif_csv(result, out / "cmif.csv")

    modes = [
        {"f_hz": float(result.freq_hz[p.index]), "zeta": opts.default_zeta}
        for p in result.peaks
    ]
    write_json(out / "modes.json", {"modes": modes})
    print(f"{len(modes)} modes detected")
    if modes:
        print(f"{'idx':>4} {'f_hz':>12} {'zeta_init':>10}")
        for i, m in enumerate(modes, start=1):
            print(f"{i:>4} {m['f_hz']:>12.6g} {m['zeta']:>10.4g}")
    return EXIT_OK


def _initial_model(args, config: dict, dataset):
    if args.init_model:
        return load_model(args.init_model)
    if not args.modes:
        raise AddfitError("identify needs --modes or --init-model")
    with open(args.modes, encoding="utf-8") as fh:
        doc = json.load(fh)
    mode_list = doc["modes"] if isinstance(doc, dict) else doc
    if not mode_list and not args.rigid_body:
        raise AddfitError("mode list is empty and --rigid-body not given")
    dens = []
    if args.rigid_body:
        dens.append((2, ScalarDenominator(np.zeros(0)), 0))
    for entry in mode_list:
        spec = ModalSpec(
            omega=2.0 * np.pi * float(entry["f_hz"]),
            zeta=float(entry["zeta"]),
            residue=np.zeros((dataset.n_y, dataset.n_u)),
        )
        dens.append((0, modal_to_submodel(spec).den, 0))
    return init_numerators(dataset, dens)


def _write_residual_csv(path, dataset, model) -> None:
    response = dataset.response
    fit = eval_model(model, dataset.omega)
    lines = ["freq_hz,out,in,data_abs,model_abs,residual_abs"]
    for k in range(dataset.n_points):
        f = format_float(dataset.freq_hz[k])
        for i in range(dataset.n_u):
            for o in range(dataset.n_y):
                lines.append(
                    f"{f},{o + 1},{i + 1},"
                    f"{format_float(abs(response[k, o, i]))},"
                    f"{format_float(abs(fit[k, o, i]))},"
                    f"{format_float(abs(response[k, o, i] - fit[k, o, i]))}"
                )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def cmd_identify(args, config: dict) -> int:
    dataset = load_frf(args.dataset, args.format)
    dataset = _preprocess(dataset, config)
    weighting = _build_weighting(dataset, config)
    initial = _initial_model(args, config, dataset)
    options = _estimation_options(config, args)

    try:
        model, report = estimate(dataset, weighting, initial, options)
    except DivergenceError as exc:
        report = exc.report
        model = initial
        print(f"identification diverged: {exc}", file=sys.stderr)

    out = _out_dir(config, args)
    save_model(model, out / "model.json")
    write_json(out / "report.json", report_to_json(report))
    _write_residual_csv(out / "residuals.csv", dataset, model)

    final_cost = report.cost[-1] if report.cost else float("nan")
    print(
        f"iterations={report.iterations} converged={report.converged} "
        f"reason={report.reason} cost={final_cost:.6g}"
    )
    return EXIT_OK if report.converged else EXIT_NOCONV


def cmd_validate(args, config: dict) -> int:
    model = load_model(args.model)
    dataset = load_frf(args.dataset, args.format)
    dataset = _preprocess(dataset, config)
    if (dataset.n_y, dataset.n_u) != (model.n_y, model.n_u):
        raise AddfitError(
            f"dimension mismatch: dataset {dataset.n_y}x{dataset.n_u}, "
            f"model {model.n_y}x{model.n_u}"
        )
    if args.weighting == "identity":
        weighting = identity_weighting(dataset.n_u, dataset.n_y, dataset.n_points)
    else:
        weighting = inverse_magnitude_weighting(dataset, floor=args.floor)

    fit = eval_model(model, dataset.omega)
    err = dataset.response - fit
    rel_rms = np.sqrt(
        np.sum(np.abs(err) ** 2, axis=0) / np.sum(np.abs(dataset.response) ** 2, axis=0)
    )
    metrics = {
        "cost": cost(dataset, weighting, model),
        "weighting": args.weighting,
        "relative_rms": [[float(x) for x in row] for row in rel_rms],
        "stable": [bool(check_stability(s.den)[0]) for s in model.submodels],
    }
    out = _out_dir(config, args)
    write_json(out / "metrics.json", metrics)
    print(dumps(metrics, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML or JSON run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument(
        "--format", choices=("csv", "json"), help="dataset file format"
    )
    common.add_argument("--out-dir", metavar="DIR", help="directory for output files")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="addfit",
        description="Identify additive MIMO transfer-function models from FRF data.",
    )
    parser.add_argument("--version", action="version", version=f"addfit {__version__}")
    common = _common_parser()
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser(
        "simulate", parents=[common], help="generate a synthetic dataset and truth model"
    )

    p_cmif = sub.add_parser(
        "cmif", parents=[common], help="mode indicator function and mode seeds"
    )
    p_cmif.add_argument("dataset", help="FRF dataset file")

    p_id = sub.add_parser(
        "identify", parents=[common], help="fit an additive model to a dataset"
    )
    p_id.add_argument("dataset", help="FRF dataset file")
    p_id.add_argument("--modes", metavar="PATH", help="mode list JSON (from 'cmif')")
    p_id.add_argument("--init-model", metavar="PATH", help="explicit initial model JSON")
    p_id.add_argument(
        "--rigid-body", action="store_true",
        help="include a double-integrator rigid-body submodel",
    )
    p_id.add_argument("--max-iterations", type=int, metavar="M")
    p_id.add_argument("--instrument", choices=("riv", "sk"))

    p_val = sub.add_parser(
        "validate", parents=[common], help="evaluate a model against a dataset"
    )
    p_val.add_argument("model", help="model JSON file")
    p_val.add_argument("dataset", help="FRF dataset file")
    p_val.add_argument(
        "--weighting", choices=("identity", "inverse_magnitude"),
        default="identity",
    )
    p_val.add_argument("--floor", type=float, default=None)
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "cmif": cmd_cmif,
    "identify": cmd_identify,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        return COMMANDS[args.command](args, config)
    except (AddfitError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
