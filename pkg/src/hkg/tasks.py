"""Verb implementations shared by the HTTP service and the CLI client.

Each task takes plain parameters, performs the file I/O, and returns a
JSON-serializable result dict. All paths are interpreted on the machine
running the service.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import replace
from datetime import timedelta
from pathlib import Path

import numpy as np

from . import events as ev
from . import graph as g
from . import synth as sy
from .config import load_config, model_config_from, train_config_from
from .errors import ConfigError, MissingRuns
from .model import decode, encode, load_model
from .report import compare as compare_runs
from .report import write_report
from .split import MessageGraph, full_link_batch, random_link_split
from .train import evaluate_auc, run_repeated, summary_dict, write_summary


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def task_ingest(logs: str, out: str, gap_minutes: float = 30.0) -> dict:
    """Parse a log file or directory of logs into the canonical events file."""
    logs_path = Path(logs)
    if logs_path.is_dir():
        paths = sorted(p for p in logs_path.iterdir() if p.is_file())
    elif logs_path.exists():
        paths = [logs_path]
    else:
        raise ConfigError(f"log path {logs} does not exist")
    kept, report = ev.ingest_paths(paths, timedelta(minutes=gap_minutes))
    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    ev.write_events_file(kept, out_path)
    report_path = out_path.with_name("ingest_report.json")
    with open(report_path, "w", encoding="utf-8") as handle:
        json.dump(report, handle, sort_keys=True, indent=2)
        handle.write("\n")
    return {**report, "events_file": str(out_path), "report_file": str(report_path)}


def _graph_report(hkg: g.Hkg) -> dict:
    labels = hkg.supervision.labels
    return {
        "nodes": {t: hkg.node_count(t) for t in g.NODE_TYPES},
        "edges": {name: len(table) for name, table in hkg.edges.items()},
        "coverage": hkg.coverage,
        "labels": int(len(labels)),
        "positive_rate": float(labels.mean()) if len(labels) else 0.0,
        "no_duration_pairs": hkg.meta.get("no_duration_pairs", 0),
    }


def task_build_graph(events: str, out: str, catalog: str | None = None) -> dict:
    events_path = Path(events)
    if not events_path.exists():
        raise ConfigError(f"events file {events} does not exist")
    parsed = ev.read_events_file(events_path)
    catalog_data = g.load_catalog(Path(catalog)) if catalog else None
    hkg = g.assemble_hkg(parsed, catalog_data)
    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    g.save_hkg(hkg, out_path)
    return {**_graph_report(hkg), "graph_file": str(out_path)}


def task_export_graph(graph: str, out: str) -> dict:
    hkg = g.load_hkg(Path(graph))
    out_path = Path(out)
    with open(out_path, "w", encoding="utf-8") as handle:
        json.dump(g.to_json_dict(hkg), handle, sort_keys=True)
        handle.write("\n")
    return {"json_file": str(out_path)}


def task_synth(
    out: str,
    preset: str = "campus",
    signal: str = "planted",
    seed: int = 0,
    students: int | None = None,
    noise: float | None = None,
    events_out: str | None = None,
) -> dict:
    if preset not in sy.PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(sy.PRESETS)}")
    cfg = replace(sy.PRESETS[preset], signal=signal, seed=seed)
    if students is not None:
        cfg = replace(cfg, students=students)
    if noise is not None:
        cfg = replace(cfg, noise=noise)
    hkg = sy.generate(cfg)
    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    g.save_hkg(hkg, out_path)
    result = {**_graph_report(hkg), "graph_file": str(out_path), "seed": seed, "signal": signal}
    if events_out:
        lines = sy.emit_event_log(cfg)
        with open(events_out, "w", encoding="utf-8") as handle:
            handle.write("\n".join(lines))
            if lines:
                handle.write("\n")
        result["events_file"] = events_out
    return result


def task_train(
    graph: str,
    out_dir: str,
    config: str | None = None,
    seed: int | None = None,
    epochs: int | None = None,
    runs: int | None = None,
    learning_rate: float | None = None,
    batch_size: int | None = None,
    hidden_dim: int | None = None,
    out_dim: int | None = None,
    embed_dim: int | None = None,
) -> dict:
    graph_path = Path(graph)
    if not graph_path.exists():
        raise ConfigError(f"graph file {graph} does not exist")
    cfg_map = load_config(config) if config else {}
    train_cfg = train_config_from(
        cfg_map,
        seed=seed,
        epochs=epochs,
        runs=runs,
        learning_rate=learning_rate,
        batch_size=batch_size,
    )
    model_cfg = model_config_from(
        cfg_map, hidden_dim=hidden_dim, out_dim=out_dim, embed_dim=embed_dim
    )
    hkg = g.load_hkg(graph_path)
    out_path = Path(out_dir)
    repeated = run_repeated(hkg, model_cfg, train_cfg, out_path)
    provenance = {
        "graph_digest": _sha256(graph_path),
        "seeds": [r.seed for r in repeated.runs],
    }
    summary = summary_dict(repeated, model_cfg, train_cfg, provenance)
    write_summary(out_path / "summary.json", summary)
    return summary


def task_eval(
    graph: str,
    checkpoint: str,
    partition: str = "all",
    split_seed: int | None = None,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
) -> dict:
    hkg = g.load_hkg(Path(graph))
    model = load_model(Path(checkpoint))
    if partition == "all":
        edge_idx = np.arange(len(hkg.supervision))
    else:
        if split_seed is None:
            raise ConfigError("evaluating a partition needs --split-seed")
        split = random_link_split(hkg, tuple(ratios), split_seed)
        try:
            edge_idx = getattr(split, partition)
        except AttributeError as exc:
            raise ConfigError(f"unknown partition {partition!r}") from exc
    mg = MessageGraph(hkg, use_edge_weights=model.cfg.use_edge_weights)
    batch = full_link_batch(mg, edge_idx)
    reps = encode(model, batch.subgraph)
    scores = decode(reps[g.STUDENT][batch.seed_students], reps[g.PAGE][batch.seed_pages])
    labels = batch.labels.astype(np.int64)
    return {
        "partition": partition,
        "n_edges": int(len(edge_idx)),
        "auc": evaluate_auc(scores, labels),
        "accuracy": float(np.mean((scores > 0).astype(np.int64) == labels)),
        "positive_rate": float(labels.mean()),
    }


def task_report(run_dirs: list[str], out_dir: str) -> dict:
    if not run_dirs:
        raise MissingRuns("report needs at least one run directory")
    return write_report([Path(d) for d in run_dirs], Path(out_dir))


def task_compare(run_sets: list[tuple[str, str]], out_dir: str) -> dict:
    return compare_runs([(label, Path(d)) for label, d in run_sets], Path(out_dir))
