"""Command line interface: ``specrich {preprocess,evaluate,synth,report}``.

Every subcommand accepts ``--config FILE`` holding ``key = value`` lines
whose keys are the long option names with dashes replaced by underscores.
Options given on the command line override the config file.  The only
environment variable consulted is ``SPECRICH_THREADS`` (default thread
count).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import __version__, _backend, dimred, regress, serialize, spectra, synth
from . import evaluation as ev
from .config import as_bool, as_floats, as_ints, format_kv, read_kv
from .errors import DataError, SpecrichError

log = logging.getLogger("specrich")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_provenance(out_dir: Path, command: str, settings: dict, inputs: dict, extra: dict | None = None):
    record = {
        "command": command,
        "specrich_version": __version__,
        "backend": _backend.BACKEND,
        "settings": settings,
        "inputs": {name: {"path": str(p), "sha256": _sha256(p)} for name, p in inputs.items() if p},
    }
    if extra:
        record.update(extra)
    (out_dir / "provenance.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _merge(args, parser_defaults: dict) -> dict:
    """Defaults < config file < explicit flags."""
    settings = dict(parser_defaults)
    if getattr(args, "config", None):
        cfg = read_kv(args.config)
        unknown = set(cfg) - set(parser_defaults)
        if unknown:
            raise DataError(f"{args.config}: unknown keys {', '.join(sorted(unknown))}")
        settings.update(cfg)
    for key in parser_defaults:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise DataError(f"output directory {out} is not writable")
    return out


def _existing(path, what):
    if path in (None, "", "none"):
        return None
    if not Path(path).exists():
        raise DataError(f"{what} file {path} does not exist")
    return path


# ---------------------------------------------------------------------------
# preprocess
# ---------------------------------------------------------------------------

PREPROCESS_DEFAULTS = {
    "spectra": None,
    "richness": None,
    "flags": None,
    "target_grid": "default",
    "removal": "default",
    "source_fwhm": None,
    "resample": "true",
    "normalize": "true",
    "truncate": "3.0",
    "tolerance": str(spectra.DEFAULT_BAND_TOL_NM),
    "out": None,
}


def cmd_preprocess(settings: dict) -> int:
    spectra_path = _existing(settings["spectra"], "spectra")
    richness_path = _existing(settings["richness"], "richness")
    if not spectra_path or not richness_path:
        raise DataError("preprocess needs --spectra and --richness")
    flags_path = _existing(settings["flags"], "flags")
    out = _out_dir(settings["out"] or "preprocessed")

    source_fwhm = float(settings["source_fwhm"]) if settings["source_fwhm"] else None
    table = spectra.load_table(spectra_path, richness_path, source_fwhm)
    cloud = spectra.read_flags_csv(flags_path) if flags_path else None
    if cloud is not None and set(cloud) - set(table.ids):
        raise DataError("flags file contains ids absent from the spectra file")

    target = None
    grid_path = None
    if as_bool(str(settings["resample"]), "resample"):
        tg = settings["target_grid"]
        if tg == "default":
            target = spectra.default_target_grid()
        else:
            grid_path = _existing(tg, "target grid")
            target = spectra.read_grid_file(tg, default_fwhm=10.0)
    rm = settings["removal"]
    removal_path = None
    if rm == "default":
        removal = spectra.default_removed_bands()
    elif rm in ("", "none"):
        removal = []
    else:
        removal_path = _existing(rm, "removal list")
        removal = spectra.read_wavelength_list(rm)

    truncate = settings["truncate"]
    truncate = None if str(truncate).lower() == "none" else float(truncate)
    processed, counts = spectra.preprocess(
        table, cloud=cloud, target=target, removal=removal,
        tolerance=float(settings["tolerance"]), truncate=truncate,
        normalize=as_bool(str(settings["normalize"]), "normalize"),
    )
    spectra.write_spectra_csv(out / "spectra.csv", processed)
    spectra.write_richness_csv(out / "richness.csv", processed)
    _write_provenance(
        out, "preprocess", settings,
        {"spectra": spectra_path, "richness": richness_path, "flags": flags_path,
         "target_grid": grid_path, "removal": removal_path},
        {"counts": counts, "bands_retained": counts["bands_retained"]},
    )
    print(f"preprocess: {counts['samples_out']} samples, bands {counts['bands_in']} -> "
          f"{counts['bands_resampled']} -> {counts['bands_retained']}, wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

EVALUATE_DEFAULTS = {
    "spectra": None,
    "richness": None,
    "pairs": "all",
    "repetitions": "10",
    "seed": "0",
    "k_grid": "1-10",
    "sigma2_grid": "1e-3 1e-2 1e-1 1 1e1 1e2 1e3",
    "length_scale_grid": "1e-2 1e-1 1 1e1 1e2",
    "noise_grid": "1e-3 1e-2 1e-1 1 1e1",
    "scale_grids": "true",
    "selection": "nested",
    "inner_repetitions": "5",
    "threads": None,
    "save_models": "false",
    "out": None,
}


def _cv_config(settings) -> ev.CvConfig:
    threads = settings["threads"] or os.environ.get("SPECRICH_THREADS") or "1"
    return ev.CvConfig(
        repetitions=int(settings["repetitions"]),
        rng_seed=int(settings["seed"]),
        k_grid=tuple(as_ints(settings["k_grid"], "k_grid")),
        sigma2_grid=tuple(as_floats(settings["sigma2_grid"], "sigma2_grid")),
        length_scale_grid=tuple(as_floats(settings["length_scale_grid"], "length_scale_grid")),
        noise_grid=tuple(as_floats(settings["noise_grid"], "noise_grid")),
        scale_grids=as_bool(str(settings["scale_grids"]), "scale_grids"),
        selection_mode=settings["selection"],
        inner_repetitions=int(settings["inner_repetitions"]),
        n_jobs=int(threads),
    )


def _parse_pairs(text: str):
    if text.strip().lower() == "all":
        return list(ev.ALL_PAIRS)
    return [ev.parse_pair(p) for p in text.replace(",", " ").split()]


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _save_final_models(out: Path, table, pair, config):
    """Select hyperparameters on the whole table and persist the fitted models."""
    choice = ev.grid_search(table.X, table.y, pair, config, seed=(config.rng_seed, 0, 2))
    dr = dimred.fit(pair[0], table.X, table.y, choice.k)
    Z = dimred.transform(dr, table.X)
    model = regress.fit(pair[1], Z, table.y, choice.resolve(Z, table.y, config))
    stem = f"{pair[0]}_{pair[1]}"
    serialize.save_model(dr, out / f"{stem}.dimred.txt")
    serialize.save_model(model, out / f"{stem}.regressor.txt")


def cmd_evaluate(settings: dict) -> int:
    spectra_path = _existing(settings["spectra"], "spectra")
    richness_path = _existing(settings["richness"], "richness")
    if not spectra_path or not richness_path:
        raise DataError("evaluate needs --spectra and --richness")
    out = _out_dir(settings["out"] or "evaluation")
    table = spectra.load_table(spectra_path, richness_path)
    config = _cv_config(settings)
    pairs = _parse_pairs(settings["pairs"])
    save = as_bool(str(settings["save_models"]), "save_models")

    reports, failures = [], []
    for pair in pairs:
        try:
            rep = ev.run_cv(table, pair, config)
            if save:
                _save_final_models(out, table, pair, config)
        except SpecrichError as exc:
            failures.append((pair, str(exc)))
            print(f"evaluate: {pair[0]}+{pair[1]} failed: {exc}", file=sys.stderr)
            continue
        reports.append(rep)

    if reports:
        tab = ev.report_table(reports)
        (out / "report.csv").write_text(tab.to_csv(), encoding="utf-8")
        (out / "report.txt").write_text(tab.to_text(), encoding="utf-8")
        ordered = sorted(reports, key=lambda r: ev._row_order(r.method_pair))
        _write_csv(out / "rounds.csv", ev.ROUND_COLUMNS,
                   [row for r in ordered for row in ev.rounds_csv_rows(r)])
        _write_csv(out / "predictions.csv", ev.PREDICTION_COLUMNS,
                   [row for r in ordered for row in ev.prediction_csv_rows(r, table.ids, table.y)])
        print(tab.to_text(), end="")
    if failures:
        (out / "failures.txt").write_text(
            "".join(f"{d}:{r}\t{msg}\n" for (d, r), msg in failures), encoding="utf-8")
    _write_provenance(out, "evaluate", settings, {"spectra": spectra_path, "richness": richness_path},
                      {"pairs_failed": [f"{d}:{r}" for (d, r), _ in failures]})
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

SYNTH_DEFAULTS = {"scene": "benchmark", "seed": None, "out": None}


def cmd_synth(settings: dict) -> int:
    scene = settings["scene"]
    if scene == "benchmark":
        spec = synth.benchmark_scene(int(settings["seed"]) if settings["seed"] else None)
        scene_path = None
    else:
        scene_path = _existing(scene, "scene spec")
        cfg = read_kv(scene_path)
        if settings["seed"]:
            cfg["rng_seed"] = str(settings["seed"])
        spec = synth.scene_from_config(cfg)
    out = _out_dir(settings["out"] or "synthetic")
    table = synth.generate(spec)
    spectra.write_spectra_csv(out / "spectra.csv", table)
    spectra.write_richness_csv(out / "richness.csv", table)
    (out / "scene.cfg").write_text(format_kv(synth.scene_to_config(spec), "resolved scene spec"), encoding="utf-8")
    _write_provenance(out, "synth", settings, {"scene": scene_path}, {
        "rng_seed": spec.rng_seed,
        "oracle_correlation": synth.oracle_correlation(spec),
        "noise_sd_richness": synth.richness_noise_sd(spec),
        "spectral_clamps": table.meta["spectral_clamps"],
        "richness_clamps": table.meta["richness_clamps"],
    })
    print(f"synth: {table.n_samples} samples x {table.n_bands} bands (seed {spec.rng_seed}), wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

REPORT_DEFAULTS = {"rounds": None, "predictions": None, "out": None}


def cmd_report(settings: dict) -> int:
    rounds_path = _existing(settings["rounds"], "rounds log")
    if not rounds_path:
        raise DataError("report needs --rounds")
    pred_path = _existing(settings["predictions"], "predictions log")
    if pred_path is None and (Path(rounds_path).parent / "predictions.csv").exists():
        pred_path = str(Path(rounds_path).parent / "predictions.csv")
    out = _out_dir(settings["out"] or Path(rounds_path).parent)

    r_vals, e_vals = defaultdict(list), defaultdict(list)
    with open(rounds_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != ev.ROUND_COLUMNS:
            raise DataError(f"{rounds_path}: header must be {','.join(ev.ROUND_COLUMNS)}")
        for row in reader:
            pair = (row["dimred"], row["regressor"])
            r_vals[pair].append(float(row["r"]))
            e_vals[pair].append(float(row["rmse"]))

    pooled = {}
    if pred_path:
        by_rep = defaultdict(lambda: ([], []))
        with open(pred_path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                key = (row["dimred"], row["regressor"], int(row["repetition"]))
                by_rep[key][0].append(float(row["prediction"]))
                by_rep[key][1].append(float(row["truth"]))
        grouped = defaultdict(list)
        for (d, r, _), (p, t) in sorted(by_rep.items()):
            grouped[(d, r)].append((np.array(p), np.array(t)))
        pooled = {pair: ev.pooled_metrics(v) for pair, v in grouped.items()}

    rows = []
    for pair in r_vals:
        s = ev.summarize(r_vals[pair], e_vals[pair])
        pm = pooled.get(pair, {"r": float("nan"), "rmse": float("nan")})
        rows.append(ev.ReportRow(pair[0], pair[1], s["r_mean"], s["r_std"], s["rmse_mean"], s["rmse_std"],
                                 pm["r"], pm["rmse"]))
    tab = ev.build_table(rows)
    (out / "report.csv").write_text(tab.to_csv(), encoding="utf-8")
    (out / "report.txt").write_text(tab.to_text(), encoding="utf-8")
    if Path(out) != Path(rounds_path).parent:
        _write_provenance(Path(out), "report", settings, {"rounds": rounds_path, "predictions": pred_path})
    print(tab.to_text(), end="")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specrich", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"specrich {__version__} ({_backend.BACKEND} kernels)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="filter clouds, resample, remove bands, mean-normalize")
    p.add_argument("--config")
    p.add_argument("--spectra", help="spectra CSV (id,<center_1>,...)")
    p.add_argument("--richness", help="richness CSV (id,richness)")
    p.add_argument("--flags", help="optional flags CSV (id,cloud)")
    p.add_argument("--target-grid", dest="target_grid", help="grid file ('center [fwhm]' per line) or 'default'")
    p.add_argument("--removal", help="wavelength list file, 'default' or 'none'")
    p.add_argument("--source-fwhm", dest="source_fwhm", help="FWHM of the input bands in nm")
    p.add_argument("--no-resample", dest="resample", action="store_const", const="false")
    p.add_argument("--no-normalize", dest="normalize", action="store_const", const="false")
    p.add_argument("--truncate", help="Gaussian support in sigmas, or 'none'")
    p.add_argument("--tolerance", help="band matching tolerance in nm")
    p.add_argument("--out")
    p.set_defaults(func=cmd_preprocess, defaults=PREPROCESS_DEFAULTS)

    p = sub.add_parser("evaluate", help="repeated two-fold CV for method pairs")
    p.add_argument("--config")
    p.add_argument("--spectra")
    p.add_argument("--richness")
    p.add_argument("--pairs", help="'all' or e.g. 'PLS:GPR,PCA:OLSR'")
    p.add_argument("--repetitions")
    p.add_argument("--seed")
    p.add_argument("--k-grid", dest="k_grid", help="e.g. '1-10' or '1,2,4'")
    p.add_argument("--sigma2-grid", dest="sigma2_grid")
    p.add_argument("--length-scale-grid", dest="length_scale_grid")
    p.add_argument("--noise-grid", dest="noise_grid")
    p.add_argument("--no-scale-grids", dest="scale_grids", action="store_const", const="false")
    p.add_argument("--selection", choices=("nested", "pooled"))
    p.add_argument("--inner-repetitions", dest="inner_repetitions")
    p.add_argument("--threads", help="worker threads (default: $SPECRICH_THREADS or 1)")
    p.add_argument("--save-models", dest="save_models", action="store_const", const="true",
                   help="also fit each pair on all samples and write model files")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate, defaults=EVALUATE_DEFAULTS)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("scene", nargs="?", default=None, help="scene spec file or 'benchmark'")
    p.add_argument("--config")
    p.add_argument("--seed")
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth, defaults=SYNTH_DEFAULTS)

    p = sub.add_parser("report", help="re-render report tables from logs")
    p.add_argument("--config")
    p.add_argument("--rounds", help="rounds.csv written by evaluate")
    p.add_argument("--predictions", help="predictions.csv (for pooled metrics)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report, defaults=REPORT_DEFAULTS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = _merge(args, args.defaults)
        return args.func(settings)
    except SpecrichError as exc:
        print(f"specrich {args.command}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"specrich {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
