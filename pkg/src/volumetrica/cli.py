"""Command-line orchestration.

Commands: phantom, parse, ingest, estimate, train, eval, compare,
stats. Exit codes: 0 success, 1 runtime/model failure, 2 usage or
configuration error. Every report embeds the tool version, the seed,
a config hash, and input checksums; reports carry no timestamps so a
fixed seed reproduces identical bytes.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from volumetrica import __version__, dicomlite
from volumetrica import io as vio
from volumetrica.estimators import (
    METHODS,
    EstimateCase,
    EstimateReport,
    area_based_estimate,
    discrepancy,
    estimate_all,
    ml_estimate,
    regression_estimate,
    spherical_estimate,
)
from volumetrica.geometry import max_equivalent_diameter
from volumetrica.grid import BinaryMask, VoxelGrid
from volumetrica.nn.inference import (
    dice,
    extract_tumor_mask,
    mask_training_target,
    prepare_input,
)
from volumetrica.nn.network import build_segmenter_3d, load_network, predict, save_network
from volumetrica.nn.training import (
    TrainConfig,
    TrainingDivergedError,
    fit_target_to_output,
    train,
)
from volumetrica.phantoms import ShapeOutOfBoundsError, load_phantom_config, make_phantom
from volumetrica.stats.report import build_stats_report
from volumetrica.stats.resample import cv_volume_error, kfold

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    return int(os.environ.get("VOLUMETRICA_SEED", "0"))


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


# ---------------------------------------------------------------- phantom

def cmd_phantom(args) -> int:
    seed = _seed(args)
    try:
        spec_doc = json.loads(Path(args.spec).read_text())
    except OSError as exc:
        return _fail(EXIT_USAGE, f"cannot read spec: {exc}")
    except json.JSONDecodeError as exc:
        return _fail(EXIT_USAGE, f"spec is not valid JSON: {exc}")

    entries = spec_doc["cohort"] if isinstance(spec_doc, dict) and "cohort" in spec_doc else [spec_doc]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cases = []
    try:
        for i, entry in enumerate(entries):
            entry = dict(entry)
            entry.setdefault("seed", seed + i)
            spec, dims, spacing = load_phantom_config(entry)
            grid, mask, volume = make_phantom(spec, dims, spacing)
            case_id = entry.get("id", f"case_{i:03d}")
            grid_path = out / f"{case_id}_grid.volv"
            mask_path = out / f"{case_id}_mask.volv"
            vio.write_volume(grid_path, grid)
            vio.write_volume(mask_path, mask)
            cases.append(
                {
                    "id": case_id,
                    "grid": grid_path.name,
                    "mask": mask_path.name,
                    "analytic_volume_mm3": volume,
                    "shape": spec.kind,
                    "seed": entry["seed"],
                }
            )
    except (ShapeOutOfBoundsError, ValueError, KeyError, TypeError) as exc:
        return _fail(EXIT_USAGE, f"invalid phantom config: {exc}")

    payload = {"cases": cases}
    envelope = vio.report_envelope(
        "phantom_manifest", payload, seed, {"spec": entries}, inputs=[args.spec]
    )
    vio.dump_json(out / "manifest.json", envelope)
    print(f"wrote {len(cases)} phantom(s) to {out}")
    return EXIT_OK


def _load_manifest_cases(manifest_path) -> tuple[list[EstimateCase], list[float], int]:
    doc = vio.read_cohort_manifest(manifest_path)
    base = Path(manifest_path).parent
    cases, truths = [], []
    for entry in doc["cases"]:
        grid = vio.read_volume(base / entry["grid"])
        mask = vio.read_volume(base / entry["mask"])
        if not isinstance(grid, VoxelGrid) or not isinstance(mask, BinaryMask):
            raise UsageError(f"case {entry['id']}: grid/mask containers are swapped")
        truth = float(entry["analytic_volume_mm3"])
        cases.append(EstimateCase(entry["id"], grid, mask, truth))
        truths.append(truth)
    if not cases:
        raise UsageError("manifest lists no cases")
    return cases, truths, int(doc.get("seed", 0))


# ------------------------------------------------------------- parse/ingest

def cmd_parse(args) -> int:
    try:
        raw = Path(args.input).read_bytes()
    except OSError as exc:
        return _fail(EXIT_USAGE, f"cannot read input: {exc}")
    try:
        ds = dicomlite.parse_file(raw)
    except dicomlite.DicomParseError as exc:
        return _fail(EXIT_RUNTIME, f"parse failed: {exc}")
    import struct

    elements = []
    for el in ds.sorted_elements():
        item = {
            "tag": f"{el.tag[0]:04X},{el.tag[1]:04X}",
            "vr": el.vr,
            "length": len(el.value),
        }
        if el.vr in ("IS", "DS", "CS", "UI", "LO"):
            item["value"] = ds.text(el.tag)
        elif el.vr == "US" and len(el.value) >= 2:
            item["value"] = ds.ushort(el.tag)
        elif el.vr == "UL" and len(el.value) >= 4:
            item["value"] = struct.unpack("<I", el.value[:4])[0]
        elements.append(item)
    payload = {
        "transfer_syntax": ds.transfer_syntax,
        "conformant": ds.conformant,
        "element_count": len(elements),
        "elements": elements,
    }
    envelope = vio.report_envelope("dicom_parse", payload, _seed(args), {"input": str(args.input)},
                                   inputs=[args.input])
    _write_report(args.out, envelope)
    return EXIT_OK


def cmd_ingest(args) -> int:
    src = Path(args.input)
    if not src.is_dir():
        return _fail(EXIT_USAGE, f"{src} is not a directory")
    files = sorted(p for p in src.iterdir() if p.suffix.lower() == ".dcm" or p.is_file())
    datasets = []
    skipped = []
    for p in files:
        try:
            datasets.append(dicomlite.parse_file(p.read_bytes()))
        except dicomlite.DicomParseError as exc:
            skipped.append(f"{p.name}: {exc}")
    try:
        grid, geometry = dicomlite.read_series(datasets)
    except dicomlite.NoValidImagesError as exc:
        return _fail(EXIT_RUNTIME, str(exc))
    except dicomlite.GeometryMismatchError as exc:
        return _fail(EXIT_RUNTIME, f"inconsistent series: {exc}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vio.write_volume(out / "grid.volv", grid)
    payload = {
        "rows": geometry.rows,
        "cols": geometry.cols,
        "pixel_spacing_mm": list(geometry.pixel_spacing),
        "slice_thickness_mm": geometry.slice_thickness,
        "slice_count": len(geometry.slice_order),
        "slice_order": [[int(i), float(k)] for i, k in geometry.slice_order],
        "uniform_z": geometry.uniform_z,
        "warnings": list(geometry.warnings) + skipped,
    }
    envelope = vio.report_envelope("ingest", payload, _seed(args), {"input": str(src)},
                                   inputs=files)
    vio.dump_json(out / "geometry.json", envelope)
    print(f"ingested {len(geometry.slice_order)} slice(s) into {out}")
    return EXIT_OK


# ---------------------------------------------------------------- estimate

def _series_report(series, methods, manual_radius: float | None = None) -> EstimateReport:
    import time

    report = EstimateReport(case_id="series")
    report.metadata = {
        "slice_count": len(series),
        "thickness_mm": series.thickness,
        "source": "slice-area series",
    }
    for method in methods:
        start = time.perf_counter()
        try:
            if method == "spherical":
                r = manual_radius if manual_radius is not None else max_equivalent_diameter(series) / 2.0
                report.metadata["spherical_radius_mm"] = r
                report.metadata["spherical_radius_source"] = (
                    "manual" if manual_radius is not None else "max-slice-area"
                )
                report.volumes[method] = spherical_estimate(r)
            elif method == "area_based":
                report.volumes[method] = area_based_estimate(series)
            elif method == "regression":
                volume, fit = regression_estimate(series)
                report.volumes[method] = volume
                report.metadata["regression_fit"] = fit.to_dict()
            elif method == "ml":
                raise ValueError("ml needs voxel input, not an area series")
            else:
                raise ValueError(f"unknown method {method!r}")
        except Exception as exc:
            report.errors[method] = f"{type(exc).__name__}: {exc}"
        report.seconds[method] = time.perf_counter() - start
    return report


def _parse_methods(arg: str | None, have_model: bool) -> tuple[str, ...]:
    if arg in (None, "all"):
        return METHODS if have_model else tuple(m for m in METHODS if m != "ml")
    methods = tuple(m.strip() for m in arg.split(",") if m.strip())
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r} (choose from {', '.join(METHODS)})")
    return methods


def cmd_estimate(args) -> int:
    src = Path(args.input)
    if not src.exists():
        return _fail(EXIT_USAGE, f"input {src} does not exist")
    network = None
    if args.model:
        try:
            network = load_network(args.model)
        except (OSError, ValueError) as exc:
            return _fail(EXIT_USAGE, f"cannot load model: {exc}")
    try:
        methods = _parse_methods(args.methods, network is not None)
    except UsageError as exc:
        return _fail(EXIT_USAGE, str(exc))

    inputs = [src]
    try:
        if src.suffix.lower() == ".csv":
            series = vio.read_series_csv(src)
            report = _series_report(series, methods, manual_radius=args.radius)
        else:
            case = _load_single_case(src, args)
            report = estimate_all(case, network=network, threshold=args.threshold,
                                  methods=methods, manual_radius=args.radius)
    except (OSError, ValueError) as exc:
        return _fail(EXIT_USAGE, f"unreadable input: {exc}")

    config = {
        "input": str(src),
        "methods": list(methods),
        "threshold": args.threshold,
        "radius": args.radius,
        "model": str(args.model) if args.model else None,
    }
    envelope = vio.report_envelope("estimate", report.to_dict(), _seed(args), config, inputs)
    if args.format == "csv":
        lines = ["method,volume_mm3,seconds,error"]
        for m in methods:
            vol = report.volumes.get(m, "")
            err = report.errors.get(m, "")
            lines.append(f"{m},{vol},{report.seconds.get(m, '')},{err}")
        _write_text(args.out, "\n".join(lines) + "\n")
    else:
        _write_report(args.out, envelope)
    if not report.volumes:
        return _fail(EXIT_RUNTIME, "all methods failed: " + "; ".join(report.errors.values()))
    return EXIT_OK


def _load_single_case(src: Path, args) -> EstimateCase:
    if src.is_dir():
        manifest = src / "manifest.json"
        if manifest.exists():
            cases, _, _ = _load_manifest_cases(manifest)
            if len(cases) != 1:
                raise UsageError(
                    f"{manifest} lists {len(cases)} cases; use `compare` for cohorts"
                )
            return cases[0]
        # a directory of DICOM slices
        datasets = []
        for p in sorted(src.iterdir()):
            if p.is_file():
                try:
                    datasets.append(dicomlite.parse_file(p.read_bytes()))
                except dicomlite.DicomParseError:
                    continue
        grid, _ = dicomlite.read_series(datasets)
        mask = _mask_for(grid, args)
        return EstimateCase(src.name, grid, mask)
    if src.suffix.lower() == ".volv":
        volume = vio.read_volume(src)
        if isinstance(volume, BinaryMask):
            grid = VoxelGrid(volume.data.astype(np.float64), volume.spacing)
            return EstimateCase(src.stem, grid, volume)
        return EstimateCase(src.stem, volume, _mask_for(volume, args))
    raise UsageError(f"cannot interpret input {src}")


def _mask_for(grid: VoxelGrid, args) -> BinaryMask:
    if args.mask:
        mask = vio.read_volume(args.mask)
        if not isinstance(mask, BinaryMask):
            raise UsageError(f"{args.mask} is not a mask container")
        return mask
    # no segmentation supplied: binarize the intensities
    return BinaryMask(grid.data > 0.5, grid.spacing)


# ------------------------------------------------------------- train/eval

def cmd_train(args) -> int:
    seed = _seed(args)
    try:
        cases, _, _ = _load_manifest_cases(args.cohort)
    except (OSError, ValueError, UsageError, KeyError) as exc:
        return _fail(EXIT_USAGE, f"cannot load cohort: {exc}")
    net = build_segmenter_3d(seed=seed)
    target_shape = net.input_shape[:-1]
    training_cases = [
        (prepare_input(c.grid, target_shape), mask_training_target(c.mask, target_shape))
        for c in cases
    ]
    config = TrainConfig(
        epochs=args.epochs, loss=args.loss, optimizer=args.optimizer,
        learning_rate=args.lr, seed=seed,
    )
    try:
        log = train(net, training_cases, config)
    except TrainingDivergedError as exc:
        return _fail(EXIT_RUNTIME, str(exc))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_network(net, out / "net.vnet")
    _write_text(out / "loss.csv", log.to_csv())
    payload = {
        "epochs": config.epochs,
        "cases": len(cases),
        "final_loss": log.losses[-1],
        "first_loss": log.losses[0],
        "parameters": net.param_count(),
        "model": "net.vnet",
    }
    envelope = vio.report_envelope(
        "train", payload, seed,
        {"epochs": args.epochs, "loss": args.loss, "optimizer": args.optimizer, "lr": args.lr},
        inputs=[args.cohort],
    )
    vio.dump_json(out / "train_report.json", envelope)
    print(f"trained {config.epochs} epochs; loss {log.losses[0]:.4f} -> {log.losses[-1]:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    seed = _seed(args)
    try:
        cases, truths, _ = _load_manifest_cases(args.cohort)
        network = load_network(args.model)
    except (OSError, ValueError, UsageError, KeyError) as exc:
        return _fail(EXIT_USAGE, str(exc))
    rows = []
    target_shape = network.input_shape[:-1]
    for case, truth in zip(cases, truths):
        pred = predict(network, prepare_input(case.grid, target_shape))
        pred_mask = extract_tumor_mask(pred, args.threshold)
        volume = ml_estimate(case.grid, network, args.threshold)
        ref = fit_target_to_output(network, mask_training_target(case.mask, target_shape))
        ref_mask = extract_tumor_mask(ref, 0.5)
        rows.append(
            {
                "case_id": case.case_id,
                "volume_mm3": volume,
                "analytic_volume_mm3": truth,
                "rel_error": abs(volume - truth) / truth,
                "dice": dice(pred_mask, ref_mask),
            }
        )
    payload = {
        "cases": rows,
        "mean_rel_error": float(np.mean([r["rel_error"] for r in rows])),
        "mean_dice": float(np.mean([r["dice"] for r in rows])),
    }
    envelope = vio.report_envelope(
        "eval", payload, seed, {"threshold": args.threshold}, inputs=[args.cohort, args.model]
    )
    if args.format == "csv":
        lines = ["case_id,volume_mm3,analytic_volume_mm3,rel_error,dice"]
        lines.extend(
            f"{r['case_id']},{r['volume_mm3']!r},{r['analytic_volume_mm3']!r},"
            f"{r['rel_error']!r},{r['dice']!r}"
            for r in rows
        )
        _write_text(args.out, "\n".join(lines) + "\n")
    else:
        _write_report(args.out, envelope)
    return EXIT_OK


# ---------------------------------------------------------- compare/stats

def cmd_compare(args) -> int:
    seed = _seed(args)
    try:
        cases, _, _ = _load_manifest_cases(args.cohort)
        network = load_network(args.model) if args.model else None
    except (OSError, ValueError, UsageError, KeyError) as exc:
        return _fail(EXIT_USAGE, str(exc))
    methods = METHODS if network is not None else tuple(m for m in METHODS if m != "ml")
    reports = [
        estimate_all(c, network=network, threshold=args.threshold, methods=methods)
        for c in cases
    ]
    matrix = discrepancy(reports, methods=methods)
    payload = {
        "matrix": matrix.to_dict(),
        "per_case": [
            {"case_id": r.case_id, "volumes": r.volumes, "errors": r.errors} for r in reports
        ],
    }
    envelope = vio.report_envelope(
        "compare", payload, seed, {"threshold": args.threshold, "methods": list(methods)},
        inputs=[args.cohort],
    )
    _write_report(args.out, envelope)
    if args.emit_plot_csv:
        # one row per case, one column per method
        lines = ["case_id," + ",".join(methods)]
        for r in reports:
            cells = [repr(r.volumes[m]) if m in r.volumes else "" for m in methods]
            lines.append(f"{r.case_id}," + ",".join(cells))
        _write_text(args.emit_plot_csv, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_stats(args) -> int:
    seed = _seed(args)
    try:
        cases, truths, _ = _load_manifest_cases(args.cohort)
    except (OSError, ValueError, UsageError, KeyError) as exc:
        return _fail(EXIT_USAGE, str(exc))
    n = len(cases)
    if args.folds > n:
        return _fail(EXIT_USAGE, f"k = {args.folds} folds exceed {n} cases")

    manual = {m: [] for m in ("spherical", "area_based", "regression")}
    for case in cases:
        report = estimate_all(case, methods=("spherical", "area_based", "regression"))
        for m in manual:
            if m not in report.volumes:
                return _fail(
                    EXIT_RUNTIME, f"{case.case_id}: {m} failed: {report.errors.get(m)}"
                )
            manual[m].append(report.volumes[m])

    net_template = build_segmenter_3d(seed=seed)
    target_shape = net_template.input_shape[:-1]
    prepared = [
        (prepare_input(c.grid, target_shape), mask_training_target(c.mask, target_shape))
        for c in cases
    ]
    train_config = TrainConfig(
        epochs=args.epochs, loss=args.loss, optimizer="adam", learning_rate=args.lr, seed=seed
    )

    # the cohort is indexed so the trainer sees tensors while the
    # estimator reads the original grids
    def trainer(indices):
        net = build_segmenter_3d(seed=seed)
        train(net, [prepared[i] for i in indices], train_config)
        return net

    def estimator(net, i):
        return ml_estimate(cases[i].grid, net, args.threshold)

    plan = kfold(n, args.folds, seed)
    indexed = [(i, truths[i]) for i in range(n)]
    try:
        cv = cv_volume_error(indexed, trainer, estimator, plan)
    except TrainingDivergedError as exc:
        return _fail(EXIT_RUNTIME, str(exc))

    volumes = {m: np.asarray(v) for m, v in manual.items()}
    volumes["ml"] = cv.per_case_volume
    payload = build_stats_report(truths, volumes, cv, k=args.folds, seed=seed)
    envelope = vio.report_envelope(
        "stats",
        payload,
        seed,
        {
            "folds": args.folds,
            "epochs": args.epochs,
            "threshold": args.threshold,
            "loss": args.loss,
            "lr": args.lr,
        },
        inputs=[args.cohort],
    )
    _write_report(args.out, envelope)
    return EXIT_OK


# ------------------------------------------------------------------ shared

def _write_report(out, envelope: dict) -> None:
    if out:
        vio.dump_json(out, envelope)
    else:
        print(vio.canonical_json(envelope), end="")


def _write_text(out, text: str) -> None:
    if out:
        Path(out).write_text(text)
    else:
        print(text, end="")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="volumetrica",
        description="Nodule volume estimation and cross-method statistical comparison.",
    )
    parser.add_argument("--version", action="version", version=f"volumetrica {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=None,
                       help="RNG seed (falls back to VOLUMETRICA_SEED, then 0)")
        p.add_argument("--out", help="output file or directory")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("phantom", help="rasterize phantoms from a spec file")
    p.add_argument("--spec", required=True, help="phantom or cohort spec JSON")
    add_common(p)
    p.set_defaults(fn=cmd_phantom)

    p = sub.add_parser("parse", help="parse one DICOM file and dump its elements")
    p.add_argument("--input", required=True)
    add_common(p)
    p.set_defaults(fn=cmd_parse)

    p = sub.add_parser("ingest", help="assemble a DICOM directory into a voxel grid")
    p.add_argument("--input", required=True)
    add_common(p)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("estimate", help="estimate volumes for one case")
    p.add_argument("--input", required=True, help=".csv series, .volv, phantom dir, or DICOM dir")
    p.add_argument("--mask", help="mask .volv when the input carries no segmentation")
    p.add_argument("--methods", help="comma list from ml,spherical,area_based,regression or 'all'")
    p.add_argument("--model", help="trained network container for the ml method")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--radius", type=float, default=None,
                   help="manually measured radius (mm) for the spherical method")
    add_common(p)
    p.set_defaults(fn=cmd_estimate)

    p = sub.add_parser("train", help="train the 3-D segmentation network on a cohort")
    p.add_argument("--cohort", required=True, help="cohort manifest JSON")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--loss", choices=("bce", "mse"), default="bce")
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--lr", type=float, default=1e-3)
    add_common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="per-case ML volumes and errors")
    p.add_argument("--cohort", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    add_common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("compare", help="pairwise discrepancy matrix across methods")
    p.add_argument("--cohort", required=True)
    p.add_argument("--model")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--emit-plot-csv", help="also write per-case volumes as CSV plot data")
    add_common(p)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("stats", help="cross-validated statistical validation report")
    p.add_argument("--cohort", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--epochs", type=int, default=30, help="training epochs per CV fold")
    p.add_argument("--loss", choices=("bce", "mse"), default="bce")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--threshold", type=float, default=0.5)
    add_common(p)
    p.set_defaults(fn=cmd_stats)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, str(exc))
    except Exception as exc:  # runtime contract: unexpected failures exit 1
        return _fail(EXIT_RUNTIME, f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
