"""Command-line batch drivers.

Subcommands: ``label``, ``braid-word``, ``evaluate``, ``synth``,
``train-toy``, ``report``.  Every run writes a ``manifest.json`` (command,
config snapshot, inputs, outputs, seed, version, duration) into the output
directory; primary outputs are byte-identical across re-runs of the same
manifest.  ``BRAIDKIT_LOG`` selects the log level (default WARNING).
Per-item failures are reported on stderr as ``braidkit: error [Code] ...``
and the exit code is 0 only when no item failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .braid import (
    CrossingClass,
    build_interaction_graph,
    extract_braid_word,
    free_reduce,
    graph_to_dict,
    word_to_dict,
)
from .core import ReferenceFrame, Scene, frame_of_agent
from .errors import BraidkitError, ConfigError, UnmatchedScene
from .io import dump_json, load_json, load_predictions, load_scene, save_scene
from .metrics import CSV_COLUMNS, aggregate_records, evaluate_scene, record_to_csv_row
from .synth import ScenarioTemplate, generate
from .trainer import TRACE_COLUMNS, train_toy, trainer_config_from_dict

logger = logging.getLogger("braidkit.cli")


def _configure_logging() -> None:
    level = os.environ.get("BRAIDKIT_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _report_error(code: str, where: str, message: str) -> None:
    print(f"braidkit: error [{code}] {where}: {message}", file=sys.stderr)


def _scene_paths(items: list[str]) -> list[Path]:
    paths: list[Path] = []
    for item in items:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.json")))
        else:
            paths.append(p)
    return paths


def _write_manifest(
    out_dir: Path,
    command: str,
    args: argparse.Namespace,
    config: dict,
    inputs: list[str],
    outputs: list[str],
    seed: int | None,
    started: float,
) -> None:
    manifest = {
        "format_version": "1",
        "tool": "braidkit",
        "tool_version": __version__,
        "command": command,
        "argv": sys.argv[1:],
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "seed": seed,
        "started_unix": started,
        "duration_s": time.time() - started,
    }
    tmp = out_dir / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, out_dir / "manifest.json")


def _write_csv(path: Path, columns: list[str], rows: list[list], header_lines: list[str] | None = None) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        for line in header_lines or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# label


def _label_worker(job: tuple[str, float, int]) -> dict:
    path, delta, max_neighbors = job
    try:
        scene = load_scene(path)
        graph = build_interaction_graph(scene, delta=delta, max_neighbors=max_neighbors)
        counts = {c.value: 0 for c in CrossingClass}
        for e in graph.edges:
            counts[e.label.value] += 1
        return {
            "ok": True,
            "path": path,
            "scene_id": scene.scene_id,
            "graph": graph_to_dict(graph),
            "counts": counts,
        }
    except BraidkitError as e:
        return {"ok": False, "path": path, "code": e.code, "message": str(e)}


def _cmd_label(args: argparse.Namespace) -> int:
    started = time.time()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = _scene_paths(args.scenes)
    jobs = [(str(p), args.delta, args.max_neighbors) for p in paths]
    results = _run_jobs(_label_worker, jobs, args.jobs)

    failures = 0
    outputs = []
    rows = []
    totals = {c.value: 0 for c in CrossingClass}
    for res in results:
        if not res["ok"]:
            failures += 1
            _report_error(res["code"], res["path"], res["message"])
            continue
        out_path = out_dir / f"{res['scene_id']}.graph.json"
        dump_json(res["graph"], out_path)
        outputs.append(out_path.name)
        counts = res["counts"]
        num_edges = sum(counts.values())
        rows.append([res["scene_id"], num_edges, counts["below"], counts["over"], counts["no_crossing"]])
        for key in totals:
            totals[key] += counts[key]
    rows.append(["ALL", sum(totals.values()), totals["below"], totals["over"], totals["no_crossing"]])
    summary = out_dir / "summary.csv"
    _write_csv(summary, ["scene_id", "num_edges", "below", "over", "no_crossing"], rows)
    outputs.append(summary.name)
    _write_manifest(
        out_dir,
        "label",
        args,
        {"delta": args.delta, "max_neighbors": args.max_neighbors, "jobs": args.jobs},
        [str(p) for p in paths],
        outputs,
        None,
        started,
    )
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# braid-word


def _word_worker(job: tuple[str, str, bool]) -> dict:
    path, frame_spec, raw = job
    try:
        scene = load_scene(path)
        if frame_spec == "scene":
            frame = ReferenceFrame(origin=(0.0, 0.0), axis_angle=0.0)
        elif frame_spec.startswith("agent:"):
            frame = frame_of_agent(scene, _coerce_agent_id(scene, frame_spec[6:]))
        else:
            raise ConfigError(f"frame spec {frame_spec!r} must be 'scene' or 'agent:<id>'")
        word = extract_braid_word(scene, frame)
        if not raw:
            word = free_reduce(word)
        return {"ok": True, "path": path, "scene_id": scene.scene_id, "word": word_to_dict(word)}
    except BraidkitError as e:
        return {"ok": False, "path": path, "code": e.code, "message": str(e)}


def _coerce_agent_id(scene: Scene, raw: str):
    for aid in scene.agent_ids():
        if str(aid) == raw:
            return aid
    raise UnmatchedScene(f"frame agent {raw!r} not present in scene {scene.scene_id}")


def _cmd_braid_word(args: argparse.Namespace) -> int:
    started = time.time()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = _scene_paths(args.scenes)
    jobs = [(str(p), args.frame, args.raw) for p in paths]
    results = _run_jobs(_word_worker, jobs, args.jobs)
    failures = 0
    outputs = []
    for res in results:
        if not res["ok"]:
            failures += 1
            _report_error(res["code"], res["path"], res["message"])
            continue
        out_path = out_dir / f"{res['scene_id']}.word.json"
        dump_json(res["word"], out_path)
        outputs.append(out_path.name)
    _write_manifest(
        out_dir,
        "braid-word",
        args,
        {"frame": args.frame, "raw": args.raw, "jobs": args.jobs},
        [str(p) for p in paths],
        outputs,
        None,
        started,
    )
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# evaluate


def _eval_worker(job: tuple[str, str, float, int, int]) -> dict:
    scene_path, pred_path, delta, max_neighbors, k = job
    try:
        scene = load_scene(scene_path)
        preds = load_predictions(pred_path)
        graph = build_interaction_graph(scene, delta=delta, max_neighbors=max_neighbors)
        record = evaluate_scene(scene, preds, graph, k)
        return {"ok": True, "path": scene_path, "record": record}
    except (BraidkitError, ValueError) as e:
        code = e.code if isinstance(e, BraidkitError) else "ValueError"
        return {"ok": False, "path": scene_path, "code": code, "message": str(e)}


def _index_predictions(pred_items: list[str]) -> dict[str, Path]:
    index: dict[str, Path] = {}
    for p in _scene_paths(pred_items):
        try:
            scene_id = str(load_json(p)["scene_id"])
        except (KeyError, BraidkitError):
            continue
        index[scene_id] = p
    return index


def _evaluate_set(paths: list[Path], pred_index: dict[str, Path], args) -> tuple[list[dict], int]:
    jobs = []
    failures = 0
    for p in paths:
        try:
            scene_id = str(load_json(p)["scene_id"])
        except (KeyError, BraidkitError) as e:
            failures += 1
            _report_error("SceneFormatError", str(p), str(e))
            continue
        if scene_id not in pred_index:
            failures += 1
            _report_error("UnmatchedScene", str(p), f"no prediction file for scene {scene_id!r}")
            continue
        jobs.append((str(p), str(pred_index[scene_id]), args.delta, args.max_neighbors, args.k))
    records = []
    for res in _run_jobs(_eval_worker, jobs, args.jobs):
        if not res["ok"]:
            failures += 1
            _report_error(res["code"], res["path"], res["message"])
            continue
        records.append(res["record"])
    return records, failures


def _cmd_evaluate(args: argparse.Namespace) -> int:
    started = time.time()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = _scene_paths(args.scenes)

    records, failures = _evaluate_set(paths, _index_predictions(args.preds), args)
    dump_json({"records": records}, out_dir / "records.json")
    _write_csv(out_dir / "records.csv", CSV_COLUMNS, [record_to_csv_row(r) for r in records])
    aggregates: dict = {"primary": aggregate_records(records)}
    outputs = ["records.json", "records.csv"]

    if args.baseline:
        base_records, base_failures = _evaluate_set(paths, _index_predictions(args.baseline), args)
        failures += base_failures
        dump_json({"records": base_records}, out_dir / "baseline_records.json")
        _write_csv(
            out_dir / "baseline_records.csv",
            CSV_COLUMNS,
            [record_to_csv_row(r) for r in base_records],
        )
        outputs += ["baseline_records.json", "baseline_records.csv"]
        aggregates["baseline"] = aggregate_records(base_records)
        if args.filter_improved:
            key = args.filter_improved
            base_by_id = {r["scene_id"]: r for r in base_records}
            improved = [
                r
                for r in records
                if r["scene_id"] in base_by_id
                and r[key] is not None
                and base_by_id[r["scene_id"]][key] is not None
                and r[key] > base_by_id[r["scene_id"]][key]
            ]
            improved_base = [base_by_id[r["scene_id"]] for r in improved]
            aggregates["improved_filter"] = {
                "metric": key,
                "num_scenes": len(improved),
                "primary": aggregate_records(improved),
                "baseline": aggregate_records(improved_base),
            }
            _write_csv(
                out_dir / "improved_records.csv",
                CSV_COLUMNS,
                [record_to_csv_row(r) for r in improved],
            )
            outputs.append("improved_records.csv")

    dump_json(aggregates, out_dir / "aggregates.json")
    outputs.append("aggregates.json")
    _write_manifest(
        out_dir,
        "evaluate",
        args,
        {
            "delta": args.delta,
            "max_neighbors": args.max_neighbors,
            "k": args.k,
            "baseline": bool(args.baseline),
            "filter_improved": args.filter_improved,
            "jobs": args.jobs,
        },
        [str(p) for p in paths],
        outputs,
        None,
        started,
    )
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# synth


def _cmd_synth(args: argparse.Namespace) -> int:
    started = time.time()
    out_dir = Path(args.out)
    (out_dir / "scenes").mkdir(parents=True, exist_ok=True)
    (out_dir / "expected").mkdir(parents=True, exist_ok=True)
    try:
        config = load_json(args.config)
        base_seed = int(config.get("seed", args.seed))
        shared = {
            key: config[key]
            for key in ("past_horizon", "future_horizon", "timestep_duration")
            if key in config
        }
        specs = config["templates"]
        if not isinstance(specs, list) or not specs:
            raise ConfigError("templates: must be a non-empty list")
        templates = []
        for idx, spec in enumerate(specs):
            if "kind" not in spec:
                raise ConfigError(f"templates[{idx}].kind: missing")
            count = int(spec.get("count", 1))
            overrides = {
                key: tuple(val) if isinstance(val, list) else val
                for key, val in spec.items()
                if key not in ("kind", "count", "seed")
            }
            templates.append(
                (
                    ScenarioTemplate(
                        kind=spec["kind"],
                        seed=int(spec.get("seed", base_seed + idx)),
                        **shared,
                        **overrides,
                    ),
                    count,
                )
            )
    except (KeyError, TypeError, ValueError, ConfigError) as e:
        _report_error("ConfigError", str(args.config), str(e))
        return 2

    outputs = []
    for template, count in templates:
        for item in generate(template, count):
            scene_path = out_dir / "scenes" / f"{item.scene.scene_id}.json"
            save_scene(item.scene, scene_path)
            expected = {
                "scene_id": item.scene.scene_id,
                "edges": [
                    {"src": src, "dst": dst, "label": label.value}
                    for (src, dst), label in sorted(
                        item.expected_edges.items(), key=lambda kv: (str(kv[0][0]), str(kv[0][1]))
                    )
                ],
                "word": word_to_dict(item.expected_word),
            }
            expected_path = out_dir / "expected" / f"{item.scene.scene_id}.expected.json"
            dump_json(expected, expected_path)
            outputs += [str(scene_path.relative_to(out_dir)), str(expected_path.relative_to(out_dir))]
    _write_manifest(
        out_dir, "synth", args, load_json(args.config), [str(args.config)], outputs, base_seed, started
    )
    return 0


# ---------------------------------------------------------------------------
# train-toy


def _cmd_train_toy(args: argparse.Namespace) -> int:
    started = time.time()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        raw = load_json(args.config)
        if args.lam is not None:
            raw["lambda"] = args.lam
        if args.seed is not None:
            raw["seed"] = args.seed
        cfg = trainer_config_from_dict(raw)
    except (BraidkitError, ValueError) as e:
        _report_error("ConfigError", str(args.config), str(e))
        return 2

    paths = _scene_paths(args.scenes)
    scenes = []
    failures = 0
    for p in paths:
        try:
            scenes.append(load_scene(p))
        except BraidkitError as e:
            failures += 1
            _report_error(e.code, str(p), str(e))
    try:
        result = train_toy(scenes, cfg)
    except BraidkitError as e:
        _report_error(e.code, "train-toy", str(e))
        return 2

    header_lines = [
        f"objective: {result.header['objective']}",
        f"config: {json.dumps(result.header['config'])}",
        f"train_scenes: {result.train_scenes} holdout_scenes: {result.holdout_scenes}",
    ]
    rows = [[row[col] for col in TRACE_COLUMNS] for row in result.trace]
    _write_csv(out_dir / "trace.csv", TRACE_COLUMNS, rows, header_lines=header_lines)
    np.savez(out_dir / "params.npz", **{name: arr for name, arr in _param_arrays(result.params)})
    dump_json(result.header, out_dir / "header.json")
    _write_manifest(
        out_dir,
        "train-toy",
        args,
        result.header["config"],
        [str(p) for p in paths],
        ["trace.csv", "params.npz", "header.json"],
        cfg.seed,
        started,
    )
    return 1 if failures else 0


def _param_arrays(params):
    from dataclasses import fields as dc_fields

    for f in dc_fields(params):
        yield f.name, getattr(params, f.name)


# ---------------------------------------------------------------------------
# report


def _cmd_report(args: argparse.Namespace) -> int:
    started = time.time()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = 0
    sources = []
    for item in args.records:
        try:
            payload = load_json(item)
            sources.append((item, payload["records"]))
        except (BraidkitError, KeyError) as e:
            failures += 1
            _report_error("SceneFormatError", str(item), str(e))
    agg_columns = [
        "source",
        "num_scenes",
        "min_joint_fde_k",
        "min_joint_ade_k",
        "min_joint_fde_1",
        "min_fde_k",
        "brsim_k",
        "brsim_1",
    ]
    rows = []
    for source, records in sources:
        agg = aggregate_records(records)
        rows.append([source] + [agg.get(col) for col in agg_columns[1:]])
    _write_csv(out_dir / "report.csv", agg_columns, rows)
    outputs = ["report.csv"]

    if len(sources) == 2:
        (_, rec_a), (_, rec_b) = sources
        by_id = {r["scene_id"]: r for r in rec_b}
        joined = []
        for r in rec_a:
            other = by_id.get(r["scene_id"])
            if other is None:
                continue
            joined.append(
                [
                    r["scene_id"],
                    r["min_joint_fde_k"],
                    other["min_joint_fde_k"],
                    r["brsim_k"],
                    other["brsim_k"],
                    r["brsim_1"],
                    other["brsim_1"],
                ]
            )
        _write_csv(
            out_dir / "paired.csv",
            [
                "scene_id",
                "min_joint_fde_k_a",
                "min_joint_fde_k_b",
                "brsim_k_a",
                "brsim_k_b",
                "brsim_1_a",
                "brsim_1_b",
            ],
            joined,
        )
        outputs.append("paired.csv")
    _write_manifest(out_dir, "report", args, {}, list(args.records), outputs, None, started)
    return 1 if failures else 0


# ---------------------------------------------------------------------------


def _run_jobs(worker, jobs: list, n_jobs: int) -> list:
    if n_jobs <= 1 or len(jobs) <= 1:
        return [worker(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(worker, jobs))  # map preserves submission order


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="braidkit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"braidkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, jobs: bool = True) -> None:
        p.add_argument("--out", required=True, help="output directory")
        if jobs:
            p.add_argument("--jobs", type=int, default=1, help="parallel workers (ordered output)")

    p = sub.add_parser("label", help="build interaction graphs for scene files")
    p.add_argument("--scenes", nargs="+", required=True, help="scene JSON files or directories")
    p.add_argument("--delta", type=float, default=50.0, help="edge distance threshold, meters")
    p.add_argument("--max-neighbors", type=int, default=32, help="nearest-source cap per target")
    common(p)
    p.set_defaults(func=_cmd_label)

    p = sub.add_parser("braid-word", help="extract braid words from scene files")
    p.add_argument("--scenes", nargs="+", required=True)
    p.add_argument("--frame", default="scene", help="'scene' or 'agent:<id>'")
    p.add_argument("--raw", action="store_true", help="skip free reduction")
    common(p)
    p.set_defaults(func=_cmd_braid_word)

    p = sub.add_parser("evaluate", help="score prediction sets against scenes")
    p.add_argument("--scenes", nargs="+", required=True)
    p.add_argument("--preds", nargs="+", required=True, help="prediction JSON files or directories")
    p.add_argument("--baseline", nargs="+", default=None, help="second prediction set to compare")
    p.add_argument(
        "--filter-improved",
        choices=["brsim_k", "brsim_1"],
        default=None,
        help="also aggregate the scenes where the primary set improves this metric over the baseline",
    )
    p.add_argument("--delta", type=float, default=50.0)
    p.add_argument("--max-neighbors", type=int, default=32)
    p.add_argument("--k", type=int, default=6, help="modes evaluated")
    common(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("synth", help="generate template scenes with expectation sidecars")
    p.add_argument("--config", required=True, help="synth config JSON")
    p.add_argument("--seed", type=int, default=0, help="base seed when the config has none")
    common(p, jobs=False)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train-toy", help="run the desk-scale multi-task trainer")
    p.add_argument("--config", required=True, help="trainer config JSON")
    p.add_argument("--scenes", nargs="+", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="override braid-loss weight")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    common(p, jobs=False)
    p.set_defaults(func=_cmd_train_toy)

    p = sub.add_parser("report", help="aggregate evaluate records into plot-ready CSV")
    p.add_argument("--records", nargs="+", required=True, help="records.json files from evaluate")
    common(p, jobs=False)
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BraidkitError as e:
        _report_error(e.code, args.command, str(e))
        return 2


if __name__ == "__main__":
    sys.exit(main())
