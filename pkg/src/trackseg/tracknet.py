"""Message-passing GNN with auto-registration and the three output heads.

One forward pass runs T iterations; in each, the state of every vertex
predicts an alignment offset (h), edge features are computed from the
offset-corrected coordinate differences and the sender state (f),
aggregated per receiving vertex by a componentwise max, and folded back
into the state with a residual connection (g).  The final states feed a
track/noise classifier, an encoded-bounding-ellipse regressor and, per
cluster, a track-parameter head whose inputs combine conformal-fit
coefficients with the componentwise max of member states.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .angles import signed_dphi
from .ellipses import BoxScales, EncodedBox, decode_box, encode_box
from .errors import (ConfigError, ConsistencyError, FitError, NumericError,
                     StateError)
from .graphs import Graph
from .kinematics import canonical_parabola_coeffs
from .neural import autodiff as ad
from .neural.autodiff import Tape, Var
from .neural.nn import (AdamState, MlpSpec, adam_step, bce_loss, gradients,
                        huber_loss, init_mlp_params, mlp_forward,
                        mse_tracking_loss)

STATE_DIM = 2
COORD_DIM = 2
EDGE_FEATURE_DIM = 4
TRACKING_FEATURE_DIM = 5  # 3 parabola coefficients + 2 state-max components


def default_specs(hidden: int = 64, two_logit: bool = False):
    """MLP shapes used by the reference configuration."""
    return {
        "h": MlpSpec((STATE_DIM, hidden, COORD_DIM)),
        "f": MlpSpec((COORD_DIM + STATE_DIM, hidden, hidden,
                      EDGE_FEATURE_DIM)),
        "g": MlpSpec((EDGE_FEATURE_DIM + STATE_DIM, hidden, STATE_DIM)),
        "classifier": MlpSpec(
            (STATE_DIM, hidden, hidden, hidden, 2 if two_logit else 1),
            output_activation="identity" if two_logit else "sigmoid"),
        "localization": MlpSpec((STATE_DIM, hidden, hidden, hidden, 5)),
        "tracking": MlpSpec((TRACKING_FEATURE_DIM, hidden, 2)),
    }


@dataclass(frozen=True)
class ModelConfig:
    iterations: int = 4
    h_spec: MlpSpec = field(default_factory=lambda: default_specs()["h"])
    f_spec: MlpSpec = field(default_factory=lambda: default_specs()["f"])
    g_spec: MlpSpec = field(default_factory=lambda: default_specs()["g"])
    classifier_spec: MlpSpec = field(
        default_factory=lambda: default_specs()["classifier"])
    localization_spec: MlpSpec = field(
        default_factory=lambda: default_specs()["localization"])
    tracking_spec: MlpSpec = field(
        default_factory=lambda: default_specs()["tracking"])
    loss_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    box_scales: BoxScales = field(default_factory=BoxScales)
    two_logit_classifier: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError(f"need >= 1 iteration, got {self.iterations}")
        checks = [
            (self.h_spec.layer_widths[0] == STATE_DIM,
             "h input must be the state"),
            (self.h_spec.layer_widths[-1] == COORD_DIM,
             "h output must be a coordinate offset"),
            (self.f_spec.layer_widths[0] == COORD_DIM + STATE_DIM,
             "f input must be coordinate difference + sender state"),
            (self.g_spec.layer_widths[0]
             == self.f_spec.layer_widths[-1] + STATE_DIM,
             "g input must be aggregate + state"),
            (self.g_spec.layer_widths[-1] == STATE_DIM,
             "g output must match the state (residual update)"),
            (self.classifier_spec.layer_widths[0] == STATE_DIM,
             "classifier reads the final state"),
            (self.classifier_spec.layer_widths[-1]
             == (2 if self.two_logit_classifier else 1),
             "classifier output width inconsistent with two_logit setting"),
            (self.localization_spec.layer_widths[0] == STATE_DIM,
             "localization reads the final state"),
            (self.localization_spec.layer_widths[-1] == 5,
             "localization must emit the 5 encoded-box residuals"),
            (self.tracking_spec.layer_widths[0] == TRACKING_FEATURE_DIM,
             "tracking head reads 5 features"),
            (self.tracking_spec.layer_widths[-1] == 2,
             "tracking head must emit (p_T, eps_T)"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def to_dict(self) -> dict:
        def spec(s: MlpSpec):
            return {"layer_widths": list(s.layer_widths),
                    "hidden_activation": s.hidden_activation,
                    "output_activation": s.output_activation}
        b = self.box_scales
        return {
            "iterations": self.iterations,
            "h_spec": spec(self.h_spec), "f_spec": spec(self.f_spec),
            "g_spec": spec(self.g_spec),
            "classifier_spec": spec(self.classifier_spec),
            "localization_spec": spec(self.localization_spec),
            "tracking_spec": spec(self.tracking_spec),
            "loss_weights": list(self.loss_weights),
            "box_scales": {"eta_m": b.eta_m, "phi_m": b.phi_m, "a_m": b.a_m,
                           "b_m": b.b_m, "theta_m": b.theta_m,
                           "delta_theta": b.delta_theta},
            "two_logit_classifier": self.two_logit_classifier,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        def spec(sd):
            return MlpSpec(tuple(sd["layer_widths"]),
                           sd["hidden_activation"], sd["output_activation"])
        return cls(
            iterations=int(d["iterations"]),
            h_spec=spec(d["h_spec"]), f_spec=spec(d["f_spec"]),
            g_spec=spec(d["g_spec"]),
            classifier_spec=spec(d["classifier_spec"]),
            localization_spec=spec(d["localization_spec"]),
            tracking_spec=spec(d["tracking_spec"]),
            loss_weights=tuple(d["loss_weights"]),
            box_scales=BoxScales(**d["box_scales"]),
            two_logit_classifier=bool(d["two_logit_classifier"]),
            seed=int(d["seed"]),
        )


class Model:
    """Per-iteration MLP parameter sets plus the three heads.

    Parameter names follow "<block><iteration>.<W|b><layer>", e.g.
    "f2.W0"; heads use "cls.", "loc." and "trk.".  Each iteration owns a
    distinct parameter set.
    """

    def __init__(self, config: ModelConfig, params=None):
        self.config = config
        self.params: dict[str, np.ndarray] = params if params is not None \
            else self._init_params()

    def _init_params(self) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(self.config.seed)
        params: dict[str, np.ndarray] = {}
        for t in range(1, self.config.iterations + 1):
            params.update(init_mlp_params(self.config.h_spec, rng, f"h{t}."))
            params.update(init_mlp_params(self.config.f_spec, rng, f"f{t}."))
            params.update(init_mlp_params(self.config.g_spec, rng, f"g{t}."))
        params.update(init_mlp_params(self.config.classifier_spec, rng,
                                      "cls."))
        params.update(init_mlp_params(self.config.localization_spec, rng,
                                      "loc."))
        params.update(init_mlp_params(self.config.tracking_spec, rng, "trk."))
        return params

    def expected_shapes(self) -> dict[str, tuple]:
        blank = Model(self.config)
        return {name: arr.shape for name, arr in blank.params.items()}


@dataclass
class VertexOutputs:
    """Per-vertex head outputs plus the tape that produced them."""
    class_prob: Var
    encoded_box: Var
    final_state: Var
    tape: Tape
    leaves: dict[str, Var]

    def class_prob_array(self) -> np.ndarray:
        return self.class_prob.data[:, 0].copy()


def _directed_edges(graph: Graph):
    """Each undirected edge contributes a message in both directions."""
    if graph.n_edges == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    i = graph.edges[:, 0]
    j = graph.edges[:, 1]
    src = np.concatenate([j, i])
    dst = np.concatenate([i, j])
    return src, dst


def gnn_forward(model: Model, graph: Graph, tape: Tape | None = None,
                auto_registration: bool = True) -> VertexOutputs:
    """Run the T message-passing iterations and the per-vertex heads.

    Coordinate differences use the wrapped shortest arc in phi; isolated
    vertices receive a zero aggregate.  With auto_registration disabled
    the offset term is dropped entirely (the plain message-passing form).
    """
    if not model.params:
        raise StateError("model has no parameters")
    cfg = model.config
    tape = tape if tape is not None else Tape()
    leaves = {name: tape.leaf(p) for name, p in model.params.items()}

    n = graph.n_vertices
    src, dst = _directed_edges(graph)
    deta = graph.eta[src] - graph.eta[dst]
    dphi = np.asarray(signed_dphi(graph.phi[src], graph.phi[dst]),
                      dtype=float).reshape(-1)
    coord_diff = np.stack([deta, dphi], axis=1) if len(src) else \
        np.zeros((0, COORD_DIM))

    s = tape.const(graph.state)
    for t in range(1, cfg.iterations + 1):
        if auto_registration:
            dx = mlp_forward(cfg.h_spec, leaves, s, f"h{t}.")
            shifted = ad.add(tape.const(coord_diff), ad.gather_rows(dx, dst))
        else:
            shifted = tape.const(coord_diff)
        edge_in = ad.concat_cols([shifted, ad.gather_rows(s, src)])
        msg = mlp_forward(cfg.f_spec, leaves, edge_in, f"f{t}.")
        agg = ad.segment_max(msg, dst, n)
        update = mlp_forward(cfg.g_spec, leaves, ad.concat_cols([agg, s]),
                             f"g{t}.")
        s = ad.add(update, s)

    if cfg.two_logit_classifier:
        logits = mlp_forward(cfg.classifier_spec, leaves, s, "cls.")
        prob = ad.sigmoid(ad.sub(ad.slice_cols(logits, 1, 2),
                                 ad.slice_cols(logits, 0, 1)))
    else:
        prob = mlp_forward(cfg.classifier_spec, leaves, s, "cls.")
    box = mlp_forward(cfg.localization_spec, leaves, s, "loc.")
    return VertexOutputs(prob, box, s, tape, leaves)


def predict_cluster_params(model: Model, outputs: VertexOutputs,
                           cluster_vertices, hits_xy):
    """Track-parameter head over one cluster of vertices.

    Features: the conformal parabola coefficients of the cluster's hits
    (zeroed, with fit_ok False, when the cluster has fewer than 3 hits or
    the fit degenerates) and the componentwise max of the member final
    states.  Returns (prediction Var of shape (1, 2), fit_ok).
    """
    vids = np.asarray(cluster_vertices, dtype=int)
    fit_ok = False
    coeffs = (0.0, 0.0, 0.0)
    if len(vids) >= 3:
        try:
            c = canonical_parabola_coeffs(np.asarray(hits_xy, dtype=float))
            coeffs = (c.c0, c.c1, c.c2)
            fit_ok = True
        except FitError:
            pass
    member_states = ad.gather_rows(outputs.final_state, vids)
    state_max = ad.segment_max(member_states, np.zeros(len(vids), dtype=int),
                               1)
    feats = ad.concat_cols([outputs.tape.const(np.array([coeffs])),
                            state_max])
    return mlp_forward(model.config.tracking_spec, outputs.leaves, feats,
                       "trk."), fit_ok


def cluster_params_from_states(model: Model, final_states: np.ndarray,
                               hits_xy: np.ndarray) -> tuple[float, float]:
    """Gradient-free track-parameter prediction for one cluster, given
    the member rows of an inference pass's final states."""
    tape = Tape()
    leaves = {name: tape.leaf(p) for name, p in model.params.items()
              if name.startswith("trk.")}
    coeffs = (0.0, 0.0, 0.0)
    if len(final_states) >= 3:
        try:
            c = canonical_parabola_coeffs(np.asarray(hits_xy, dtype=float))
            coeffs = (c.c0, c.c1, c.c2)
        except FitError:
            pass
    state_max = np.max(np.asarray(final_states, dtype=float), axis=0)
    feats = tape.const(np.concatenate([coeffs, state_max])[None, :])
    out = mlp_forward(model.config.tracking_spec, leaves, feats, "trk.")
    return float(out.data[0, 0]), float(out.data[0, 1])


def build_targets(graph: Graph, scales: BoxScales):
    """Per-vertex classification labels, track mask and encoded target
    boxes (zero rows for noise vertices)."""
    n = graph.n_vertices
    y = graph.vertex_class.astype(float)
    target_enc = np.zeros((n, 5))
    for i in range(n):
        if not graph.vertex_class[i]:
            continue
        ell = graph.vertex_target_ellipse[i] if graph.vertex_target_ellipse \
            else None
        if ell is None:
            raise ConsistencyError(
                f"track vertex {i} has no target ellipse; run "
                f"assign_vertex_targets first")
        target_enc[i] = encode_box(
            ell, (graph.eta[i], graph.phi[i]), scales).as_array()
    return y, y.copy(), target_enc


def total_loss(outputs: VertexOutputs, targets, cluster_preds,
               cluster_truth, weights=(1.0, 1.0, 1.0),
               huber_delta: float = 1.0, tracking_scales=(1.0, 1e-3)):
    """Weighted sum of the classification, localization and tracking
    losses; returns (total Var, per-component float breakdown)."""
    y, mask, target_enc = targets
    alpha, beta, gamma = weights
    l_c = bce_loss(y, outputs.class_prob)
    l_loc = huber_loss(outputs.encoded_box, target_enc, mask, huber_delta)
    if cluster_preds is None:
        truth_arr = np.asarray(cluster_truth, dtype=float).reshape(-1, 2)
        if len(truth_arr):
            raise ConsistencyError("cluster truth given without predictions")
        warnings.warn("tracking loss over an empty cluster set",
                      RuntimeWarning, stacklevel=2)
        l_t = outputs.tape.const(0.0)
    else:
        l_t = mse_tracking_loss(cluster_preds, cluster_truth, tracking_scales)
    total = ad.add(ad.add(ad.scale(l_c, alpha), ad.scale(l_loc, beta)),
                   ad.scale(l_t, gamma))
    components = {"l_c": float(l_c.data), "l_loc": float(l_loc.data),
                  "l_t": float(l_t.data), "l_total": float(total.data)}
    return total, components


def _truth_clusters(graph: Graph):
    """Vertex groups by truth particle, ascending particle id."""
    clusters = []
    for pid in sorted(graph.truth_params):
        vids = np.flatnonzero(graph.vertex_particle_id == pid)
        if len(vids):
            clusters.append((pid, vids))
    return clusters


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    lr: float = 1e-6
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    huber_delta: float = 1.0
    tracking_scales: tuple[float, float] = (1.0, 1e-3)
    shuffle_seed: int = 0

    def validate(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")


def train_step(model: Model, graph: Graph, state: AdamState,
               cfg: TrainConfig):
    """One forward/backward/update cycle on a single graph.

    The tracking loss runs over truth clusters, so the parameter head
    learns independently of segmentation quality.
    """
    tape = Tape()
    outputs = gnn_forward(model, graph, tape)
    preds, truths = [], []
    for pid, vids in _truth_clusters(graph):
        pv, _ = predict_cluster_params(model, outputs, vids,
                                       graph.vertex_xy[vids])
        preds.append(pv)
        truths.append(graph.truth_params[pid])
    cluster_preds = ad.concat_rows(preds) if preds else None
    targets = build_targets(graph, model.config.box_scales)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        total, components = total_loss(
            outputs, targets, cluster_preds, truths,
            model.config.loss_weights, cfg.huber_delta, cfg.tracking_scales)
    for name, value in components.items():
        if not math.isfinite(value):
            raise NumericError("non-finite loss", graph_id=graph.event_id,
                               component=name)
    grads = gradients(total, outputs.leaves)
    adam_step(state, model.params, grads)
    return components


def train(model: Model, dataset: list[Graph], cfg: TrainConfig,
          state: AdamState | None = None):
    """Train over the dataset, one optimizer step per graph.

    Shuffling is a fixed stream seeded by cfg.shuffle_seed, so reruns
    from the same initial model produce bit-identical histories.  Returns
    (per-epoch history, final AdamState); the model is updated in place.
    """
    if not dataset:
        raise ConfigError("training needs a non-empty dataset")
    cfg.validate()
    if state is None:
        state = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
                          eps_hat=cfg.eps_hat,
                          weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.shuffle_seed)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(dataset))
        sums = {"l_c": 0.0, "l_loc": 0.0, "l_t": 0.0, "l_total": 0.0}
        for gi in order:
            try:
                components = train_step(model, dataset[gi], state, cfg)
            except NumericError as err:
                raise NumericError(str(err), epoch=epoch) from err
            for key in sums:
                sums[key] += components[key]
        record = {key: value / len(dataset) for key, value in sums.items()}
        record["epoch"] = epoch
        history.append(record)
    return history, state


@dataclass
class InferResult:
    class_prob: np.ndarray
    encoded_box: np.ndarray
    final_state: np.ndarray
    ellipses: list  # Ellipse5 or None per vertex, thresholded


def infer(model: Model, graph: Graph,
          threshold: float = 0.5) -> InferResult:
    """Forward pass plus a decoded ellipse for every vertex whose track
    probability reaches the threshold."""
    outputs = gnn_forward(model, graph)
    prob = outputs.class_prob_array()
    boxes = outputs.encoded_box.data.copy()
    ellipses = []
    for i in range(graph.n_vertices):
        if prob[i] >= threshold:
            enc = EncodedBox(*boxes[i])
            ellipses.append(decode_box(enc, (graph.eta[i], graph.phi[i]),
                                       model.config.box_scales))
        else:
            ellipses.append(None)
    return InferResult(prob, boxes, outputs.final_state.data.copy(), ellipses)


def save_checkpoint(model: Model, state: AdamState, epoch: int, path,
                    extra: dict | None = None) -> None:
    """Write the tracknet-v1 checkpoint document."""
    doc = {
        "format": "tracknet-v1",
        "config": model.config.to_dict(),
        "epoch": epoch,
        "seed": model.config.seed,
        "params": {k: v.tolist() for k, v in model.params.items()},
        "adam": {
            "lr": state.lr, "beta1": state.beta1, "beta2": state.beta2,
            "eps_hat": state.eps_hat, "weight_decay": state.weight_decay,
            "step": state.step,
            "m": {k: v.tolist() for k, v in state.m.items()},
            "v": {k: v.tolist() for k, v in state.v.items()},
        },
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path):
    """Read a checkpoint; rejects parameter shapes that do not match the
    embedded config."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "tracknet-v1":
        raise ConsistencyError(f"not a tracknet-v1 checkpoint: "
                               f"format={doc.get('format')!r}")
    config = ModelConfig.from_dict(doc["config"])
    params = {k: np.asarray(v, dtype=float) for k, v in doc["params"].items()}
    expected = Model(config).params
    if set(params) != set(expected):
        raise ConfigError("checkpoint parameter names do not match config")
    for name, arr in params.items():
        if arr.shape != expected[name].shape:
            raise ConfigError(
                f"checkpoint shape {arr.shape} for {name!r} does not match "
                f"config shape {expected[name].shape}")
    model = Model(config, params)
    a = doc["adam"]
    state = AdamState(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"],
                      eps_hat=a["eps_hat"], weight_decay=a["weight_decay"],
                      step=int(a["step"]),
                      m={k: np.asarray(v, dtype=float)
                         for k, v in a["m"].items()},
                      v={k: np.asarray(v, dtype=float)
                         for k, v in a["v"].items()})
    return model, state, int(doc["epoch"])
