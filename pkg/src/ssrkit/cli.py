"""Command-line front end: simulate, train, reconstruct, evaluate, baselines, demo.

Settings come from an optional JSON config; command-line flags override it.
Everything a command writes goes under the output directory::

    ms.bin / ms.json            simulated MS cube
    srf.csv, split.json         SRF used and overlap manifest
    dictionary/                 d_h, d_m, x (cube format) + manifest.json
    dstep_trace.csv, sstep_trace.csv
    reconstruction.bin          HS estimate over the MS-only pixels, clamped to [0, 1]
    codes.bin                   S-Step codes
    report.json [report.csv]    evaluation
    baselines/                  baseline cubes + table.json / table.csv

Exit codes: 0 ok, 2 input validation, 3 solver divergence, 4 I/O.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import apply_regression, fit_regression, ms_dictionary_baseline, pwc
from .datamodel import (
    CubeFormatError,
    OverlapSplit,
    SpectralCube,
    Srf,
    box_srf,
    load_cube,
    load_labels_csv,
    load_matrix_csv,
    load_matrix_cube,
    load_srf_csv,
    save_cube,
    save_labels_csv,
    save_matrix_csv,
    save_matrix_cube,
    simulate_ms,
    split_overlap,
    write_pgm,
)
from .dictlearn import DictionaryPair, DStepParams, run_dstep
from .evalkit import classification_scores, fclsu, nn_classify, recon_metrics, unmix_scores
from .numkit import FactorizationError
from .sparsecode import SStepParams, jslol_pipeline, reconstruct, run_sstep
from .synthetic import planted_scene
from .trace import SolverDivergence

log = logging.getLogger("ssrkit")

EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3
EXIT_IO = 4

BASELINE_NAMES = ("pwc", "regression", "ms_dictionary")


class ValidationError(ValueError):
    pass


@dataclass
class RunConfig:
    hs_cube: str | None = None
    ms_cube: str | None = None
    srf_csv: str | None = None
    ms_channels: int = 4
    labels_csv: str | None = None
    endmembers_csv: str | None = None
    abundances_cube: str | None = None
    estimate_cube: str | None = None
    out_dir: str = "out"
    overlap: tuple[int, int] | None = None
    dstep: DStepParams = field(default_factory=DStepParams)
    sstep: SStepParams = field(default_factory=SStepParams)
    baselines: dict[str, bool] = field(default_factory=lambda: {name: True for name in BASELINE_NAMES})
    ridge: float = 1e-6
    atom_budget: int | None = None
    seed: int = 0
    threads: int | None = None
    dump_bands: list[int] = field(default_factory=list)
    csv: bool = False

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        unknown = set(doc) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "dstep" in doc:
                doc["dstep"] = DStepParams(**doc["dstep"])
            if "sstep" in doc:
                doc["sstep"] = SStepParams(**doc["sstep"])
        except TypeError as exc:
            raise ValidationError(f"bad solver parameters: {exc}") from exc
        if doc.get("overlap") is not None:
            doc["overlap"] = tuple(int(c) for c in doc["overlap"])
        if "baselines" in doc:
            merged = {name: True for name in BASELINE_NAMES}
            merged.update({k: bool(v) for k, v in doc["baselines"].items()})
            doc["baselines"] = merged
        return cls(**doc)

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["overlap"] = list(self.overlap) if self.overlap else None
        return doc

    @property
    def out(self) -> Path:
        return Path(self.out_dir)

    def require(self, *names: str) -> None:
        for name in names:
            value = getattr(self, name)
            if value is None:
                raise ValidationError(f"missing required setting {name}")
            if name.endswith(("_cube", "_csv")) and not Path(value).exists():
                raise ValidationError(f"input file not found {name}={value}")


# --- shared steps --------------------------------------------------------------


def _load_srf(cfg: RunConfig, bands: int) -> Srf:
    if cfg.srf_csv:
        srf = load_srf_csv(cfg.srf_csv)
        if srf.p != bands:
            raise ValidationError(f"SRF has {srf.p} columns but the HS cube has {bands} bands")
        return srf
    return box_srf(bands, cfg.ms_channels)


def _ms_cube(cfg: RunConfig, hs: SpectralCube) -> SpectralCube:
    if cfg.ms_cube:
        return load_cube(cfg.ms_cube)
    simulated = cfg.out / "ms.bin"
    if simulated.exists():
        return load_cube(simulated)
    return simulate_ms(hs, _load_srf(cfg, hs.bands))


def _load_split(cfg: RunConfig) -> tuple[SpectralCube, OverlapSplit]:
    cfg.require("hs_cube", "overlap")
    hs = load_cube(cfg.hs_cube)
    ms = _ms_cube(cfg, hs)
    return hs, split_overlap(hs, ms, cfg.overlap)


def _dstep_params(cfg: RunConfig) -> DStepParams:
    return dataclasses.replace(cfg.dstep, seed=cfg.seed)


def _write_json(doc, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_row_csv(row: dict, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(row))
        w.writeheader()
        w.writerow(row)


def _flatten(doc: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in doc.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, name + "."))
        elif isinstance(value, list):
            continue
        else:
            flat[name] = value
    return flat


# --- commands --------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> dict:
    cfg.require("hs_cube", "overlap")
    hs = load_cube(cfg.hs_cube)
    srf = _load_srf(cfg, hs.bands)
    ms = simulate_ms(hs, srf)
    split = split_overlap(hs, ms, cfg.overlap)
    save_cube(ms, cfg.out / "ms.bin")
    save_matrix_csv(srf.matrix, cfg.out / "srf.csv")
    manifest = {
        "height": hs.height,
        "width": hs.width,
        "P": hs.bands,
        "Q": srf.q,
        "overlap": list(split.overlap),
        "N": split.n,
        "N1": split.n1,
    }
    _write_json(manifest, cfg.out / "split.json")
    print(f"simulated {srf.q}-channel MS cube; N={split.n} N1={split.n1}")
    return manifest


def save_dictionary(dictionary: DictionaryPair, x: np.ndarray, params: DStepParams, trace, folder: Path) -> None:
    save_matrix_cube(dictionary.d_h, folder / "d_h.bin")
    save_matrix_cube(dictionary.d_m, folder / "d_m.bin")
    save_matrix_cube(x, folder / "x.bin")
    manifest = {
        "P": dictionary.d_h.shape[0],
        "Q": dictionary.d_m.shape[0],
        "L": dictionary.size,
        "params": params.to_dict(),
        "trace": trace.summary(),
    }
    _write_json(manifest, folder / "manifest.json")


def load_dictionary(folder: Path) -> DictionaryPair:
    if not (folder / "d_h.bin").exists():
        raise ValidationError(f"no trained dictionary in {folder}; run train first")
    return DictionaryPair(load_matrix_cube(folder / "d_h.bin"), load_matrix_cube(folder / "d_m.bin"))


def cmd_train(cfg: RunConfig) -> dict:
    _, split = _load_split(cfg)
    params = _dstep_params(cfg)
    dictionary, x, trace = run_dstep(split, params)
    save_dictionary(dictionary, x, params, trace, cfg.out / "dictionary")
    trace.to_csv(cfg.out / "dstep_trace.csv")
    summary = trace.summary()
    res = summary.get("final_residuals", {})
    print(
        f"D-Step: {summary['iterations']} iterations, L={dictionary.size}, "
        + ", ".join(f"{k}={v:.3e}" for k, v in res.items())
    )
    return summary


def cmd_reconstruct(cfg: RunConfig) -> SpectralCube:
    _, split = _load_split(cfg)
    dictionary = load_dictionary(cfg.out / "dictionary")
    if dictionary.d_m.shape[0] != split.q or dictionary.d_h.shape[0] != split.p:
        raise ValidationError("dictionary shape does not match the input cubes")
    if split.n1 == 0:
        log.warning("no pixels outside the overlap; writing an empty reconstruction")
        y = np.zeros((dictionary.size, 0))
        estimate = np.zeros((split.p, 0))
    else:
        y, trace = run_sstep(split.m_out, dictionary.d_m, cfg.sstep)
        trace.to_csv(cfg.out / "sstep_trace.csv")
        estimate = reconstruct(dictionary.d_h, y)
        print(f"S-Step: {len(trace)} iterations, residual={trace.residuals['o_y'][-1]:.3e}")
    cube = split.out_cube(np.clip(estimate, 0.0, 1.0))
    save_cube(cube, cfg.out / "reconstruction.bin")
    save_matrix_cube(y, cfg.out / "codes.bin")
    for band in cfg.dump_bands:
        if cube.width and 0 <= band < cube.bands:
            (cfg.out / "bands").mkdir(parents=True, exist_ok=True)
            write_pgm(cube.data[band], cfg.out / "bands" / f"band_{band:03d}.pgm")
    return cube


def evaluate_estimate(cfg: RunConfig, hs: SpectralCube, split: OverlapSplit, estimate: np.ndarray) -> dict:
    """Reconstruction metrics plus optional classification and unmixing reports."""
    report: dict = {}
    if split.n1 == 0:
        log.warning("no pixels outside the overlap; nothing to evaluate")
        return report
    report["reconstruction"] = recon_metrics(split.h_out_ref, estimate, (split.height, split.out_width)).to_dict()

    if cfg.labels_csv:
        cfg.require("labels_csv")
        labels = load_labels_csv(cfg.labels_csv, hs.height, hs.width)
        train, test = labels.indices(labels.TRAIN), labels.indices(labels.TEST)
        if train.size == 0 or test.size == 0:
            raise ValidationError("label file needs both train and test pixels")
        flat_labels = labels.labels.ravel()
        product = split.assemble(split.h_in, estimate)
        reference = hs.pixels()
        for name, cube_pixels in (("classification", product), ("classification_reference", reference)):
            pred = nn_classify(cube_pixels[:, train], flat_labels[train], cube_pixels[:, test])
            report[name] = classification_scores(pred, flat_labels[test]).to_dict()
    else:
        log.warning("no labels file given; skipping classification")

    if cfg.endmembers_csv and cfg.abundances_cube:
        cfg.require("endmembers_csv", "abundances_cube")
        endmembers = load_matrix_csv(cfg.endmembers_csv)
        if endmembers.shape[0] != split.p:
            raise ValidationError(f"endmembers have {endmembers.shape[0]} bands, cube has {split.p}")
        truth = load_cube(cfg.abundances_cube).pixels()[:, split.out_index]
        abund = fclsu(estimate, endmembers)
        report["unmixing"] = unmix_scores(abund, truth, estimate, endmembers).to_dict()
    else:
        log.warning("endmembers or abundances not given; skipping unmixing")
    return report


def _emit_report(cfg: RunConfig, report: dict, name: str = "report") -> None:
    _write_json(report, cfg.out / f"{name}.json")
    if cfg.csv:
        _write_row_csv(_flatten(report), cfg.out / f"{name}.csv")


def cmd_evaluate(cfg: RunConfig) -> dict:
    hs, split = _load_split(cfg)
    path = Path(cfg.estimate_cube) if cfg.estimate_cube else cfg.out / "reconstruction.bin"
    if not path.exists():
        raise ValidationError(f"estimate cube not found {path}")
    cube = load_cube(path)
    if (cube.bands, cube.height, cube.width) != (split.p, split.height, split.out_width):
        raise ValidationError("estimate cube geometry does not match the MS-only region")
    report = evaluate_estimate(cfg, hs, split, cube.pixels())
    _emit_report(cfg, report)
    if "reconstruction" in report:
        rec = report["reconstruction"]
        print(" ".join(f"{k}={v:.6g}" for k, v in rec.items()))
    return report


def cmd_baselines(cfg: RunConfig) -> list[dict]:
    """Run J-SLoL and every enabled baseline on one split; rank them by RMSE."""
    _, split = _load_split(cfg)
    if split.n1 == 0:
        raise ValidationError("no pixels outside the overlap to compare on")
    estimates: dict[str, np.ndarray] = {}
    estimates["jslol"] = jslol_pipeline(split, _dstep_params(cfg), cfg.sstep).estimate
    if cfg.baselines.get("pwc", True):
        estimates["pwc"] = pwc(split)
    if cfg.baselines.get("regression", True):
        estimates["regression"] = apply_regression(fit_regression(split, cfg.ridge), split.m_out)
    if cfg.baselines.get("ms_dictionary", True):
        estimates["ms_dictionary"] = ms_dictionary_baseline(split, cfg.sstep, cfg.atom_budget, cfg.seed).estimate

    rows = []
    for name, est in estimates.items():
        if name != "jslol":
            save_cube(split.out_cube(np.clip(est, 0.0, 1.0)), cfg.out / "baselines" / f"{name}.bin")
        rows.append({"method": name, **recon_metrics(split.h_out_ref, est).to_dict()})
    rows.sort(key=lambda r: r["rmse"])
    for rank, row in enumerate(rows, start=1):
        row["rank"] = rank
    _write_json(rows, cfg.out / "baselines" / "table.json")
    with open(cfg.out / "baselines" / "table.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["rank", "method", "rmse", "psnr", "sad", "ssim", "ergas"])
        w.writeheader()
        w.writerows(rows)
    for row in rows:
        print(f"{row['rank']:>2} {row['method']:<14} rmse={row['rmse']:.6f} psnr={row['psnr']:.3f}")
    return rows


DEMO_DSTEP = {"gamma": 1e-3, "dict_size": 30}


def cmd_demo(cfg: RunConfig) -> dict:
    """Planted synthetic scene through every command."""
    scene = planted_scene(seed=cfg.seed)
    inputs = cfg.out / "inputs"
    save_cube(scene.hs, inputs / "hs.bin")
    save_matrix_csv(scene.srf.matrix, inputs / "srf.csv")
    save_labels_csv(scene.labels, inputs / "labels.csv")
    save_matrix_csv(scene.base, inputs / "endmembers.csv")
    save_cube(SpectralCube.from_pixels(scene.abundances, scene.hs.height, scene.hs.width), inputs / "abundances.bin")

    dstep = cfg.dstep if cfg.dstep != DStepParams() else DStepParams(**DEMO_DSTEP)
    run = dataclasses.replace(
        cfg,
        hs_cube=str(inputs / "hs.bin"),
        srf_csv=str(inputs / "srf.csv"),
        labels_csv=str(inputs / "labels.csv"),
        endmembers_csv=str(inputs / "endmembers.csv"),
        abundances_cube=str(inputs / "abundances.bin"),
        overlap=scene.overlap,
        dstep=dstep,
        csv=True,
    )
    _write_json(run.to_dict(), cfg.out / "config.json")
    cmd_simulate(run)
    cmd_train(run)
    cmd_reconstruct(run)
    report = cmd_evaluate(run)
    report["baselines"] = cmd_baselines(run)
    _write_json(report, cfg.out / "demo_report.json")
    return report


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "reconstruct": cmd_reconstruct,
    "evaluate": cmd_evaluate,
    "baselines": cmd_baselines,
    "demo": cmd_demo,
}


# --- argument handling -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", dest="out_dir", help="output directory")
    common.add_argument("--threads", type=int, help="BLAS thread count")
    common.add_argument("--strict-paper-thresholds", action="store_true", default=None,
                        help="use beta/mu for the SVT step and alpha/mu for the l1 prox")
    common.add_argument("--csv", action="store_true", default=None, help="also write one-row CSV reports")
    common.add_argument("--hs", dest="hs_cube")
    common.add_argument("--ms", dest="ms_cube")
    common.add_argument("--srf", dest="srf_csv")
    common.add_argument("--ms-channels", type=int)
    common.add_argument("--labels", dest="labels_csv")
    common.add_argument("--endmembers", dest="endmembers_csv")
    common.add_argument("--abundances", dest="abundances_cube")
    common.add_argument("--estimate", dest="estimate_cube")
    common.add_argument("--overlap", type=int, nargs=2, metavar=("START", "STOP"))
    common.add_argument("--dict-size", type=int)
    common.add_argument("--dstep-iters", type=int)
    common.add_argument("--sstep-iters", type=int)
    for name in ("alpha", "beta", "gamma", "eta", "ridge"):
        common.add_argument(f"--{name}", type=float)
    common.add_argument("--atom-budget", type=int)
    common.add_argument("--no-baseline", action="append", choices=BASELINE_NAMES, default=[])
    common.add_argument("--dump-band", dest="dump_bands", type=int, action="append")

    parser = argparse.ArgumentParser(prog="ssr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or name).splitlines()[0])
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then command-line flags."""
    cfg = RunConfig()
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ValidationError(f"config file not found {path}")
        try:
            cfg = RunConfig.from_dict(json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from exc

    plain = {}
    for name in ("seed", "out_dir", "threads", "csv", "hs_cube", "ms_cube", "srf_csv", "ms_channels",
                 "labels_csv", "endmembers_csv", "abundances_cube", "estimate_cube", "ridge",
                 "atom_budget", "dump_bands"):
        value = getattr(args, name)
        if value is not None:
            plain[name] = value
    if args.overlap is not None:
        plain["overlap"] = tuple(args.overlap)
    if args.no_baseline:
        plain["baselines"] = {k: (v and k not in args.no_baseline) for k, v in cfg.baselines.items()}

    dstep = {}
    for flag, key in (("alpha", "alpha"), ("beta", "beta"), ("gamma", "gamma"), ("dict_size", "dict_size"),
                      ("dstep_iters", "max_iter"), ("strict_paper_thresholds", "strict_paper")):
        value = getattr(args, flag)
        if value is not None:
            dstep[key] = value
    sstep = {}
    for flag, key in (("eta", "eta"), ("sstep_iters", "max_iter")):
        value = getattr(args, flag)
        if value is not None:
            sstep[key] = value
    if dstep:
        plain["dstep"] = dataclasses.replace(cfg.dstep, **dstep)
    if sstep:
        plain["sstep"] = dataclasses.replace(cfg.sstep, **sstep)
    return dataclasses.replace(cfg, **plain)


def _configure_logging() -> None:
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    level = levels.get(os.environ.get("SSR_LOG_LEVEL", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _fail(code: int, kind: str, exc: BaseException) -> int:
    reason = " ".join(str(exc).split())
    print(json.dumps({"error": kind, "code": code, "reason": reason}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        cfg.out.mkdir(parents=True, exist_ok=True)
        if cfg.threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=cfg.threads):
                COMMANDS[args.command](cfg)
        else:
            COMMANDS[args.command](cfg)
    except (SolverDivergence, FactorizationError) as exc:
        return _fail(EXIT_DIVERGENCE, "divergence", exc)
    except (ValidationError, CubeFormatError, ValueError, TypeError) as exc:
        return _fail(EXIT_VALIDATION, "validation", exc)
    except OSError as exc:
        return _fail(EXIT_IO, "io", exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
