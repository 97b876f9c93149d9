"""Pipeline stages and the end-to-end runner.

Artifacts live under the configured output directory:

    events/event_00000.json     one document per event
    graphs/graph_00000.json     one graph per event
    checkpoint.json             trained model + optimizer state
    history.json                per-epoch loss components
    predictions/pred_00000.json per-event inference output
    metrics.json                evaluation summary
    plots/event_00000.svg       eta-phi event display
    run.log                     stage log

Training uses all but the last `eval.n_holdout` graphs; inference and
evaluation run on the held-out tail (or everything when n_holdout is 0).
"""

from __future__ import annotations

import logging
from pathlib import Path

from .. import tracknet
from ..errors import ConfigError
from ..events import apply_selection, generate_event, read_trackml_event, \
    validate_event
from ..graphs import assign_vertex_targets, build_graph, graph_from_dict, \
    graph_to_dict, truth_ellipses
from ..postprocess import TrackCandidate, assign_hits, merge_ellipses
from .config import RunConfig
from .io import (event_from_dict, event_to_dict, prediction_from_dict,
                 prediction_to_dict, read_json, write_json, METRICS_FORMAT)
from .metrics import evaluate
from .render import render_event_svg

log = logging.getLogger("trackseg")


def _out(cfg: RunConfig) -> Path:
    return Path(cfg.paths.out_dir)


def _events_dir(cfg): return _out(cfg) / "events"
def _graphs_dir(cfg): return _out(cfg) / "graphs"
def _preds_dir(cfg): return _out(cfg) / "predictions"
def _plots_dir(cfg): return _out(cfg) / "plots"
def _checkpoint_path(cfg): return _out(cfg) / "checkpoint.json"
def _history_path(cfg): return _out(cfg) / "history.json"
def _metrics_path(cfg): return _out(cfg) / "metrics.json"


def _sorted_files(directory: Path, pattern: str) -> list[Path]:
    if not directory.is_dir():
        raise ConfigError(f"missing input directory: {directory}")
    files = sorted(directory.glob(pattern))
    if not files:
        raise ConfigError(f"no {pattern} files under {directory}")
    return files


def stage_generate(cfg: RunConfig) -> list[Path]:
    """Write n_events synthetic events, seeded per event."""
    echo = cfg.to_dict()
    paths = []
    for i in range(cfg.generator.n_events):
        event = generate_event(cfg.detector, cfg.gen_config(i), event_id=i)
        validate_event(event)
        path = _events_dir(cfg) / f"event_{i:05d}.json"
        write_json(path, event_to_dict(event, echo))
        paths.append(path)
    log.info("generated %d events -> %s", len(paths), _events_dir(cfg))
    return paths


def stage_ingest(cfg: RunConfig) -> list[Path]:
    """Read one TrackML event from CSV, apply the selection, store it."""
    p = cfg.paths
    for name, value in (("hits_csv", p.hits_csv), ("truth_csv", p.truth_csv),
                        ("particles_csv", p.particles_csv)):
        if value is None:
            raise ConfigError(f"paths.{name} is required for ingestion")
        if not Path(value).exists():
            raise ConfigError(f"paths.{name} does not exist: {value}")
    event = read_trackml_event(p.hits_csv, p.truth_csv, p.particles_csv,
                               field_b=cfg.detector.field_b)
    event = apply_selection(event, cfg.selection.pt_min,
                            cfg.selection.volumes)
    validate_event(event)
    path = _events_dir(cfg) / f"event_{event.event_id:05d}.json"
    write_json(path, event_to_dict(event, cfg.to_dict()))
    log.info("ingested %d hits / %d tracks -> %s", len(event.hits),
             len(event.tracks), path)
    return [path]


def stage_build_graphs(cfg: RunConfig) -> list[Path]:
    echo = cfg.to_dict()
    paths = []
    for event_path in _sorted_files(_events_dir(cfg), "event_*.json"):
        event = event_from_dict(read_json(event_path))
        graph = build_graph(event, cfg.dbscan_params(), cfg.dbscan.topology)
        ellipses = truth_ellipses(event, cfg.dbscan.ellipse_padding,
                                  cfg.dbscan.axis_floor,
                                  cfg.dbscan.mvee_tolerance)
        assign_vertex_targets(graph, ellipses)
        doc = graph_to_dict(graph)
        doc["config"] = echo
        path = _graphs_dir(cfg) / f"graph_{event.event_id:05d}.json"
        write_json(path, doc)
        paths.append(path)
    log.info("built %d graphs -> %s", len(paths), _graphs_dir(cfg))
    return paths


def _load_graphs(cfg: RunConfig):
    return [graph_from_dict(read_json(p))
            for p in _sorted_files(_graphs_dir(cfg), "graph_*.json")]


def _split(items, n_holdout: int):
    if n_holdout <= 0:
        return items, items
    if n_holdout >= len(items):
        raise ConfigError(f"n_holdout={n_holdout} leaves no training data "
                          f"for {len(items)} graphs")
    return items[:-n_holdout], items[-n_holdout:]


def stage_train(cfg: RunConfig) -> Path:
    graphs = _load_graphs(cfg)
    train_graphs, _ = _split(graphs, cfg.eval.n_holdout)
    model = tracknet.Model(cfg.model_config())
    history, state = tracknet.train(model, train_graphs, cfg.train_config())
    save_path = _checkpoint_path(cfg)
    tracknet.save_checkpoint(model, state, epoch=len(history),
                             path=save_path)
    write_json(_history_path(cfg),
               {"format": "history-v1", "history": history,
                "seed": cfg.seed, "config": cfg.to_dict()})
    log.info("trained %d epochs on %d graphs; final l_total=%.6f",
             len(history), len(train_graphs), history[-1]["l_total"])
    return save_path


def _infer_one(cfg: RunConfig, model: tracknet.Model, graph) -> dict:
    result = tracknet.infer(model, graph, cfg.nms.class_threshold)
    kept = [i for i, e in enumerate(result.ellipses) if e is not None]
    raw = merge_ellipses([result.ellipses[i] for i in kept],
                         [result.class_prob[i] for i in kept],
                         cfg.nms.t_h, cfg.nms.iou_resolution)
    candidates = []
    for cand in raw:
        member_vertices = tuple(kept[k] for k in cand.member_vertex_ids)
        params = None
        if len(member_vertices) >= 1:
            pt, eps = tracknet.cluster_params_from_states(
                model, result.final_state[list(member_vertices)],
                graph.vertex_xy[list(member_vertices)])
            params = (pt, eps)
        candidates.append(TrackCandidate(cand.ellipse, cand.confidence,
                                         member_vertices, params))
    vertices = list(zip(graph.eta, graph.phi, result.class_prob))
    assignments = assign_hits(candidates, vertices, cfg.nms.class_threshold)
    return prediction_to_dict(graph.event_id, graph.vertex_hit_ids,
                              result.class_prob, result.ellipses, candidates,
                              assignments, cfg.to_dict())


def stage_infer(cfg: RunConfig) -> list[Path]:
    model, _, _ = tracknet.load_checkpoint(_checkpoint_path(cfg))
    graphs = _load_graphs(cfg)
    _, eval_graphs = _split(graphs, cfg.eval.n_holdout)
    paths = []
    for graph in eval_graphs:
        doc = _infer_one(cfg, model, graph)
        path = _preds_dir(cfg) / f"pred_{graph.event_id:05d}.json"
        write_json(path, doc)
        paths.append(path)
    log.info("inferred %d events -> %s", len(paths), _preds_dir(cfg))
    return paths


def stage_evaluate(cfg: RunConfig) -> Path:
    predictions = {}
    for path in _sorted_files(_preds_dir(cfg), "pred_*.json"):
        pred = prediction_from_dict(read_json(path))
        predictions[pred["event_id"]] = pred
    truth = {}
    for path in _sorted_files(_events_dir(cfg), "event_*.json"):
        event = event_from_dict(read_json(path))
        truth[event.event_id] = event
    metrics = evaluate(predictions, truth, cfg.nms.class_threshold,
                       cfg.eval.match_fraction)
    doc = {"format": METRICS_FORMAT, **metrics.to_dict(),
           "seed": cfg.seed, "config": cfg.to_dict()}
    write_json(_metrics_path(cfg), doc)
    log.info("metrics: accuracy=%.3f auc=%.3f efficiency=%.3f purity=%.3f",
             metrics.accuracy, metrics.auc, metrics.efficiency,
             metrics.purity)
    return _metrics_path(cfg)


def stage_plot(cfg: RunConfig, event_index: int = 0,
               use_truth: bool = False) -> Path:
    event_path = _events_dir(cfg) / f"event_{event_index:05d}.json"
    if not event_path.exists():
        raise ConfigError(f"missing input path: {event_path}")
    event = event_from_dict(read_json(event_path))
    if use_truth:
        shapes = [e for _, e in truth_ellipses(
            event, cfg.dbscan.ellipse_padding, cfg.dbscan.axis_floor,
            cfg.dbscan.mvee_tolerance)]
    else:
        pred_path = _preds_dir(cfg) / f"pred_{event_index:05d}.json"
        if not pred_path.exists():
            raise ConfigError(f"missing input path: {pred_path}")
        pred = prediction_from_dict(read_json(pred_path))
        shapes = [e for e in pred["ellipses"] if e is not None]
    path = _plots_dir(cfg) / f"event_{event_index:05d}.svg"
    render_event_svg(event, shapes, path)
    log.info("wrote %s", path)
    return path


def run_pipeline(cfg: RunConfig) -> Path:
    """Full run: produce events, build graphs, train, infer, evaluate and
    plot the first evaluated event.  External inputs are validated before
    any artifact is written."""
    ingest_mode = cfg.paths.hits_csv is not None
    if ingest_mode:
        for name in ("hits_csv", "truth_csv", "particles_csv"):
            value = getattr(cfg.paths, name)
            if value is None or not Path(value).exists():
                raise ConfigError(f"missing input path: paths.{name}={value}")
    _out(cfg).mkdir(parents=True, exist_ok=True)

    if ingest_mode:
        stage_ingest(cfg)
    else:
        stage_generate(cfg)
    stage_build_graphs(cfg)
    stage_train(cfg)
    stage_infer(cfg)
    metrics_path = stage_evaluate(cfg)
    first_pred = _sorted_files(_preds_dir(cfg), "pred_*.json")[0]
    event_index = prediction_from_dict(read_json(first_pred))["event_id"]
    stage_plot(cfg, event_index)
    return metrics_path
