"""Desk-scale multi-task trainer for the braid-prediction auxiliary task.

The model is deliberately small: a linear encoder over past positions, K
linear mode heads producing per-mode embeddings, a linear trajectory decoder
residual to a constant-velocity baseline, a scene-pooled mode scorer, and
the rectifier edge-classifier head.  Objective (documented surrogate, also
written into every run header): winner-takes-all squared-error regression on
the best joint mode, softmax cross-entropy pushing mode scores toward that
winner, and the class-weighted crossing cross-entropy gated per edge by the
pairwise best mode.

All gradients are hand-derived and checked end-to-end against central finite
differences in the test suite.  Training is plain per-scene gradient
descent; equal seeds give bit-identical metric traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .braid import CrossingClass, InteractionGraph, build_interaction_graph
from .core import AgentId, PredictionSet, Scene, frame_of_agent
from .errors import ConfigError, NonFiniteLoss
from .metrics import braid_similarity, default_evaluated_agents, min_joint_ade, min_joint_fde
from .multitask import (
    BraidLossConfig,
    EdgeClassifierHead,
    relative_feature,
)

OBJECTIVE_NOTE = (
    "regression = winner-takes-all squared error on the joint best mode; "
    "mode selection = softmax cross-entropy toward that winner; "
    "braid term = class-weighted crossing cross-entropy on the pairwise best mode"
)

_PHI_SCALE = 0.1

TRACE_COLUMNS = [
    "epoch",
    "min_joint_fde",
    "min_joint_ade",
    "brsim_k",
    "brsim_1",
    "loss_total",
    "loss_braid",
]


@dataclass(frozen=True)
class TrainerConfig:
    k: int = 4
    d: int = 16
    h: int = 32
    lam: float = 1.0
    class_weights: tuple[float, float, float] = (8.0, 8.0, 1.0)
    lr: float = 2e-3
    epochs: int = 20
    seed: int = 0
    delta: float = 50.0
    max_neighbors: int = 8
    holdout_fraction: float = 0.2

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ConfigError("K: must be >= 1")
        if self.d < 5:
            raise ConfigError("D: must be >= 5 (relative features need 5 slots)")
        if self.h < 1:
            raise ConfigError("H: must be >= 1")
        if self.lam < 0:
            raise ConfigError("lambda: must be >= 0")
        if len(self.class_weights) != 3 or any(w <= 0 for w in self.class_weights):
            raise ConfigError("class_weights: must be 3 positive reals")
        if self.lr < 0:
            raise ConfigError("lr: must be >= 0")
        if self.epochs < 1:
            raise ConfigError("epochs: must be >= 1")
        if self.delta <= 0:
            raise ConfigError("delta: must be > 0")
        if self.max_neighbors < 1:
            raise ConfigError("max_neighbors: must be >= 1")
        if not (0.0 < self.holdout_fraction < 1.0):
            raise ConfigError("holdout_fraction: must be in (0, 1)")


_CONFIG_KEYS = {
    "K": ("k", int),
    "D": ("d", int),
    "H": ("h", int),
    "lambda": ("lam", float),
    "class_weights": ("class_weights", tuple),
    "lr": ("lr", float),
    "epochs": ("epochs", int),
    "seed": ("seed", int),
    "delta": ("delta", float),
    "max_neighbors": ("max_neighbors", int),
    "holdout_fraction": ("holdout_fraction", float),
}


def trainer_config_from_dict(obj: dict) -> TrainerConfig:
    if not isinstance(obj, dict):
        raise ConfigError("trainer config must be a JSON object")
    kwargs = {}
    for key, value in obj.items():
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{key}: unknown trainer config field")
        attr, typ = _CONFIG_KEYS[key]
        try:
            kwargs[attr] = tuple(float(w) for w in value) if typ is tuple else typ(value)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{key}: expected {typ.__name__} ({e})") from e
    return TrainerConfig(**kwargs)


def trainer_config_to_dict(cfg: TrainerConfig) -> dict:
    return {
        "K": cfg.k,
        "D": cfg.d,
        "H": cfg.h,
        "lambda": cfg.lam,
        "class_weights": list(cfg.class_weights),
        "lr": cfg.lr,
        "epochs": cfg.epochs,
        "seed": cfg.seed,
        "delta": cfg.delta,
        "max_neighbors": cfg.max_neighbors,
        "holdout_fraction": cfg.holdout_fraction,
    }


@dataclass
class ToyParams:
    """All trainable arrays; the same container holds gradients."""

    enc_w: np.ndarray  # (F, D)
    enc_b: np.ndarray  # (D,)
    mode_w: np.ndarray  # (K, D, D)
    mode_b: np.ndarray  # (K, D)
    dec_w: np.ndarray  # (D, 2*T_F)
    dec_b: np.ndarray  # (2*T_F,)
    score_w: np.ndarray  # (D, K)
    score_b: np.ndarray  # (K,)
    head_w1: np.ndarray  # (3D, H)
    head_b1: np.ndarray  # (H,)
    head_w2: np.ndarray  # (H, 3)
    head_b2: np.ndarray  # (3,)

    def zeros_like(self) -> "ToyParams":
        return ToyParams(**{f.name: np.zeros_like(getattr(self, f.name)) for f in fields(self)})

    def head(self) -> EdgeClassifierHead:
        return EdgeClassifierHead(w1=self.head_w1, b1=self.head_b1, w2=self.head_w2, b2=self.head_b2)


def init_params(cfg: TrainerConfig, past_horizon: int, future_horizon: int, rng: np.random.Generator) -> ToyParams:
    f_in = 4 * past_horizon
    d, k, h = cfg.d, cfg.k, cfg.h
    return ToyParams(
        enc_w=rng.normal(0.0, 1.0 / math.sqrt(f_in), size=(f_in, d)),
        enc_b=np.zeros(d),
        mode_w=rng.normal(0.0, 1.0 / math.sqrt(d), size=(k, d, d)),
        mode_b=rng.normal(0.0, 0.1, size=(k, d)),
        dec_w=rng.normal(0.0, 0.1 / math.sqrt(d), size=(d, 2 * future_horizon)),
        dec_b=np.zeros(2 * future_horizon),
        score_w=rng.normal(0.0, 0.1 / math.sqrt(d), size=(d, k)),
        score_b=np.zeros(k),
        head_w1=rng.normal(0.0, 1.0 / math.sqrt(3 * d), size=(3 * d, h)),
        head_b1=np.zeros(h),
        head_w2=rng.normal(0.0, 1.0 / math.sqrt(h), size=(h, 3)),
        head_b2=np.zeros(3),
    )


def params_to_vector(p: ToyParams) -> np.ndarray:
    return np.concatenate([getattr(p, f.name).ravel() for f in fields(p)])


def vector_to_params(vec: np.ndarray, template: ToyParams) -> ToyParams:
    out = {}
    at = 0
    for f in fields(template):
        arr = getattr(template, f.name)
        out[f.name] = vec[at : at + arr.size].reshape(arr.shape).copy()
        at += arr.size
    return ToyParams(**out)


@dataclass
class SceneSample:
    """Preprocessed per-scene tensors; everything the loss needs."""

    scene: Scene
    agents: list[AgentId]
    phi: np.ndarray  # (N, F) scaled past positions in own frame
    rot: np.ndarray  # (N, 2, 2) local->scene rotations
    cv: np.ndarray  # (N, T_F, 2) constant-velocity baseline, scene coords
    gt: np.ndarray  # (N, T_F, 2)
    edge_src: np.ndarray  # (E,) indices into agents
    edge_dst: np.ndarray  # (E,)
    edge_class: np.ndarray  # (E,) CLASS_ORDER indices
    edge_r: np.ndarray  # (E, D) padded relative features
    graph: InteractionGraph


def prepare_sample(scene: Scene, cfg: TrainerConfig) -> SceneSample | None:
    """Build trainer tensors for one scene; None when no agent has a full
    past and future window.

    Per-agent features hold the agent's own past in its frame plus the past
    of its nearest neighbor (same frame, zeros when alone): joint behaviors
    like yielding are only expressible when the encoder can see the
    conflicting agent.
    """
    t_h, t_f = scene.past_horizon, scene.future_horizon
    agents = []
    for aid in default_evaluated_agents(scene):
        traj = scene.agent(aid)
        if all(traj.valid_at(t) for t in range(1 - t_h, 1)):
            agents.append(aid)
    if not agents:
        return None
    n = len(agents)
    phi = np.empty((n, 4 * t_h))
    rot = np.empty((n, 2, 2))
    cv = np.empty((n, t_f, 2))
    gt = np.empty((n, t_f, 2))
    steps = np.arange(1, t_f + 1, dtype=np.float64)
    past_xy = {
        aid: np.array(
            [(scene.agent(aid).state_at(t).x, scene.agent(aid).state_at(t).y) for t in range(1 - t_h, 1)]
        )
        for aid in agents
    }
    for idx, aid in enumerate(agents):
        traj = scene.agent(aid)
        frame = frame_of_agent(scene, aid)
        c, s = math.cos(frame.axis_angle), math.sin(frame.axis_angle)
        rot[idx] = ((c, -s), (s, c))

        def in_frame(points):
            dx = points[:, 0] - frame.origin[0]
            dy = points[:, 1] - frame.origin[1]
            return np.stack([c * dx + s * dy, -s * dx + c * dy], axis=1)

        own = in_frame(past_xy[aid])
        neighbor = np.zeros_like(own)
        others = [b for b in agents if b != aid]
        if others:
            nearest = min(others, key=lambda b: float(np.sum((past_xy[b][-1] - past_xy[aid][-1]) ** 2)))
            neighbor = in_frame(past_xy[nearest])
        phi[idx] = np.concatenate([own.ravel(), neighbor.ravel()]) * _PHI_SCALE
        p0 = past_xy[aid][-1]
        vel = p0 - past_xy[aid][-2] if t_h > 1 else np.zeros(2)
        cv[idx] = p0[None, :] + vel[None, :] * steps[:, None]
        gt[idx] = [(traj.state_at(t).x, traj.state_at(t).y) for t in range(1, t_f + 1)]

    graph = build_interaction_graph(scene, delta=cfg.delta, max_neighbors=cfg.max_neighbors)
    index = {aid: i for i, aid in enumerate(agents)}
    src, dst, cls, rfeat = [], [], [], []
    for e in graph.edges:
        if e.src in index and e.dst in index:
            src.append(index[e.src])
            dst.append(index[e.dst])
            cls.append(e.label.index)
            rfeat.append(relative_feature(scene, e.src, e.dst, width=cfg.d))
    return SceneSample(
        scene=scene,
        agents=agents,
        phi=phi,
        rot=rot,
        cv=cv,
        gt=gt,
        edge_src=np.asarray(src, dtype=np.intp),
        edge_dst=np.asarray(dst, dtype=np.intp),
        edge_class=np.asarray(cls, dtype=np.intp),
        edge_r=np.asarray(rfeat, dtype=np.float64).reshape(len(src), cfg.d),
        graph=graph,
    )


def _softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def _forward(params: ToyParams, sample: SceneSample):
    a = sample.phi @ params.enc_w + params.enc_b  # (N, D)
    m = np.einsum("nd,kde->nke", a, params.mode_w) + params.mode_b[None]  # (N, K, D)
    n, k, d = m.shape
    t_f = sample.gt.shape[1]
    off = (m.reshape(n * k, d) @ params.dec_w + params.dec_b).reshape(n, k, t_f, 2)
    pred = sample.cv[:, None] + np.einsum("nkta,nba->nktb", off, sample.rot)
    mbar = m.mean(axis=0)  # (K, D): scene-pooled mode embeddings
    u = np.einsum("kd,dk->k", mbar, params.score_w) + params.score_b  # (K,)
    return a, m, off, pred, mbar, u


def predict(params: ToyParams, sample: SceneSample) -> PredictionSet:
    _, _, _, pred, _, u = _forward(params, sample)
    probs = _softmax(u)
    return PredictionSet(
        scene_id=sample.scene.scene_id,
        num_modes=u.shape[0],
        mode_probs=tuple(float(p) for p in probs),
        trajectories={aid: pred[i] for i, aid in enumerate(sample.agents)},
    )


def scene_loss_and_grads(
    params: ToyParams, sample: SceneSample, cfg: TrainerConfig, want_grads: bool = True
):
    """Total loss, its components, and (optionally) analytic gradients.

    Returns (loss_total, parts dict, grads ToyParams | None).
    """
    a, m, off, pred, mbar, u = _forward(params, sample)
    n, k, t_f = pred.shape[0], pred.shape[1], pred.shape[2]

    err = pred - sample.gt[:, None]  # (N, K, T, 2)
    sq = (err * err).sum(axis=3)  # (N, K, T)
    mode_cost = sq.mean(axis=2)  # (N, K)
    joint_cost = mode_cost.mean(axis=0)  # (K,)
    winner = int(np.argmin(joint_cost))
    loss_reg = float(joint_cost[winner])

    pi = _softmax(u)
    loss_cls = float(-math.log(max(pi[winner], 1e-300)))

    n_edges = sample.edge_src.shape[0]
    loss_braid = 0.0
    dlogits = None
    feats = None
    pre = None
    hid = None
    if n_edges:
        dist = np.sqrt(sq)  # (N, K, T)
        pair_cost = dist[sample.edge_src].mean(axis=2) + dist[sample.edge_dst].mean(axis=2)
        k_star = np.argmin(pair_cost, axis=1)  # (E,)
        feats = np.concatenate(
            [m[sample.edge_src], m[sample.edge_dst], np.repeat(sample.edge_r[:, None, :], k, axis=1)],
            axis=2,
        )  # (E, K, 3D)
        pre = feats @ params.head_w1 + params.head_b1
        hid = np.maximum(pre, 0.0)
        logits = hid @ params.head_w2 + params.head_b2  # (E, K, 3)
        rows = logits[np.arange(n_edges), k_star]  # (E, 3)
        rows_max = rows.max(axis=1, keepdims=True)
        logp = rows - (rows_max + np.log(np.exp(rows - rows_max).sum(axis=1, keepdims=True)))
        weights = np.asarray(cfg.class_weights)[sample.edge_class]
        loss_braid = float((weights * -logp[np.arange(n_edges), sample.edge_class]).mean())
        if want_grads:
            drows = np.exp(logp)
            drows[np.arange(n_edges), sample.edge_class] -= 1.0
            drows *= (cfg.lam * weights / n_edges)[:, None]
            dlogits = np.zeros_like(logits)
            dlogits[np.arange(n_edges), k_star] = drows

    loss_total = loss_reg + loss_cls + cfg.lam * loss_braid
    parts = {"reg": loss_reg, "cls": loss_cls, "braid": loss_braid, "total": loss_total}
    if not want_grads:
        return loss_total, parts, None

    g = params.zeros_like()
    dm = np.zeros_like(m)

    # winner-takes-all regression
    dpred_w = (2.0 / (n * t_f)) * err[:, winner]  # (N, T, 2)
    doff_w = np.einsum("ntb,nba->nta", dpred_w, sample.rot)  # (N, T, 2)
    doff_flat = doff_w.reshape(n, 2 * t_f)
    g.dec_w += m[:, winner].T @ doff_flat
    g.dec_b += doff_flat.sum(axis=0)
    dm[:, winner] += doff_flat @ params.dec_w.T

    # mode-selection cross-entropy (scores read pooled mode embeddings)
    du = pi.copy()
    du[winner] -= 1.0
    g.score_w += mbar.T * du[None, :]
    g.score_b += du
    dm += (params.score_w.T * du[:, None])[None, :, :] / n
    da = np.zeros_like(a)

    # braid head
    if n_edges and dlogits is not None:
        flat_hid = hid.reshape(-1, hid.shape[2])
        flat_dlogits = dlogits.reshape(-1, 3)
        g.head_w2 += flat_hid.T @ flat_dlogits
        g.head_b2 += flat_dlogits.sum(axis=0)
        dpre = (dlogits @ params.head_w2.T) * (pre > 0.0)
        flat_feats = feats.reshape(-1, feats.shape[2])
        flat_dpre = dpre.reshape(-1, dpre.shape[2])
        g.head_w1 += flat_feats.T @ flat_dpre
        g.head_b1 += flat_dpre.sum(axis=0)
        dfeats = dpre @ params.head_w1.T  # (E, K, 3D)
        d = m.shape[2]
        np.add.at(dm, sample.edge_src, dfeats[:, :, :d])
        np.add.at(dm, sample.edge_dst, dfeats[:, :, d : 2 * d])

    # mode heads and encoder
    da += np.einsum("nke,kde->nd", dm, params.mode_w)
    g.mode_w += np.einsum("nd,nke->kde", a, dm)
    g.mode_b += dm.sum(axis=0)
    g.enc_w += sample.phi.T @ da
    g.enc_b += da.sum(axis=0)
    return loss_total, parts, g


def _sgd_step(params: ToyParams, grads: ToyParams, lr: float) -> None:
    for f in fields(params):
        getattr(params, f.name)[...] -= lr * getattr(grads, f.name)


def evaluate_samples(params: ToyParams, samples: list[SceneSample], cfg: TrainerConfig) -> dict:
    """Mean held-out metrics (BrSim means skip empty-graph scenes)."""
    fde, ade, bk, b1 = [], [], [], []
    for sample in samples:
        preds = predict(params, sample)
        fde.append(min_joint_fde(sample.scene, preds, cfg.k, sample.agents)[0])
        ade.append(min_joint_ade(sample.scene, preds, cfg.k, sample.agents)[0])
        report = braid_similarity(sample.scene, preds, sample.graph, cfg.k)
        if report.defined:
            bk.append(report.brsim_k)
            b1.append(report.brsim_1)
    return {
        "min_joint_fde": float(np.mean(fde)),
        "min_joint_ade": float(np.mean(ade)),
        "brsim_k": float(np.mean(bk)) if bk else float("nan"),
        "brsim_1": float(np.mean(b1)) if b1 else float("nan"),
    }


@dataclass
class TrainResult:
    params: ToyParams
    trace: list[dict]
    header: dict
    train_scenes: int
    holdout_scenes: int


def train_toy(dataset: list[Scene], cfg: TrainerConfig) -> TrainResult:
    """Train the toy multi-task model on a scene set.

    Per-epoch rows report held-out MinJointFDE_K / MinJointADE_K / BrSim_K /
    BrSim_1 plus mean training loss; identical configs (same seed) yield
    bit-identical traces.

    Raises:
        NonFiniteLoss: training diverged; message carries epoch, scene and
            loss components.
        ConfigError: dataset empty or horizons inconsistent.
    """
    if not dataset:
        raise ConfigError("dataset: must contain at least one scene")
    horizons = {(s.past_horizon, s.future_horizon) for s in dataset}
    if len(horizons) != 1:
        raise ConfigError(f"dataset: mixed horizons {sorted(horizons)}")
    t_h, t_f = next(iter(horizons))

    samples = [prepare_sample(scene, cfg) for scene in dataset]
    samples = [s for s in samples if s is not None]
    if len(samples) < 2:
        raise ConfigError("dataset: fewer than 2 trainable scenes")

    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg, t_h, t_f, rng)

    order = rng.permutation(len(samples))
    n_holdout = max(1, int(round(len(samples) * cfg.holdout_fraction)))
    holdout = [samples[i] for i in order[:n_holdout]]
    train = [samples[i] for i in order[n_holdout:]]
    if not train:
        raise ConfigError("dataset: holdout fraction leaves no training scenes")

    trace: list[dict] = []
    for epoch in range(1, cfg.epochs + 1):
        # linear decay to zero sharpens the final iterate of plain SGD
        lr = cfg.lr * (1.0 - (epoch - 1) / cfg.epochs)
        epoch_losses = []
        braid_losses = []
        for i in rng.permutation(len(train)):
            sample = train[i]
            loss, parts, grads = scene_loss_and_grads(params, sample, cfg)
            if not math.isfinite(loss):
                raise NonFiniteLoss(
                    f"epoch {epoch}, scene {sample.scene.scene_id}: "
                    f"reg={parts['reg']!r} cls={parts['cls']!r} braid={parts['braid']!r}"
                )
            epoch_losses.append(loss)
            braid_losses.append(parts["braid"])
            _sgd_step(params, grads, lr)
        metrics = evaluate_samples(params, holdout, cfg)
        trace.append(
            {
                "epoch": epoch,
                "min_joint_fde": metrics["min_joint_fde"],
                "min_joint_ade": metrics["min_joint_ade"],
                "brsim_k": metrics["brsim_k"],
                "brsim_1": metrics["brsim_1"],
                "loss_total": float(np.mean(epoch_losses)),
                "loss_braid": float(np.mean(braid_losses)),
            }
        )

    header = {
        "objective": OBJECTIVE_NOTE,
        "config": trainer_config_to_dict(cfg),
        "train_scenes": len(train),
        "holdout_scenes": len(holdout),
    }
    return TrainResult(
        params=params,
        trace=trace,
        header=header,
        train_scenes=len(train),
        holdout_scenes=len(holdout),
    )


def braid_loss_config(cfg: TrainerConfig) -> BraidLossConfig:
    return BraidLossConfig(lam=cfg.lam, class_weights=cfg.class_weights)


def total_dataset_loss(params: ToyParams, samples: list[SceneSample], cfg: TrainerConfig) -> float:
    """Pure loss over a sample list (the finite-difference tests drive this)."""
    total = 0.0
    for sample in samples:
        loss, _, _ = scene_loss_and_grads(params, sample, cfg, want_grads=False)
        total += loss
    return total


__all__ = [
    "OBJECTIVE_NOTE",
    "SceneSample",
    "ToyParams",
    "TrainResult",
    "TrainerConfig",
    "TRACE_COLUMNS",
    "braid_loss_config",
    "evaluate_samples",
    "init_params",
    "params_to_vector",
    "prepare_sample",
    "predict",
    "scene_loss_and_grads",
    "total_dataset_loss",
    "train_toy",
    "trainer_config_from_dict",
    "trainer_config_to_dict",
    "vector_to_params",
]
