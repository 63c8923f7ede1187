"""Joint and marginal displacement metrics plus Braid Similarity.

Mode indices are 0-based everywhere.  When a prediction set carries more
modes than the requested K, the top-K modes by probability are evaluated
(probability ties resolve to the lower mode index); the "most likely" mode
used by the K = 1 variants is the first entry of that ranking.

Per-scene CSV export uses the frozen column order in ``CSV_COLUMNS``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .braid import CrossingClass, InteractionGraph, _label_from_samples
from .core import AgentId, PredictionSet, Scene, frame_of_agent
from .errors import HorizonMismatch, MissingAgent

CSV_COLUMNS = [
    "scene_id",
    "K",
    "num_edges",
    "min_joint_fde_k",
    "min_joint_ade_k",
    "min_joint_fde_1",
    "min_fde_k",
    "best_joint_mode",
    "brsim_k",
    "brsim_1",
]


@dataclass(frozen=True)
class JointMetricsReport:
    scene_id: str
    k: int
    min_joint_fde_k: float
    min_joint_ade_k: float
    min_joint_fde_1: float
    min_fde_k: float
    best_joint_mode: int  # original (0-based) mode index of the joint-FDE winner


@dataclass(frozen=True)
class BrSimReport:
    """Braid Similarity of a prediction set against a ground-truth graph.

    ``per_mode_accuracy`` and ``induced_labels`` follow the probability-
    ranked selection order in ``selected_modes``.  An ambiguous induced
    crossing appears as None in the label maps and counts as a mismatch.
    An empty graph yields an undefined report (None similarity values) that
    aggregation must skip.
    """

    scene_id: str
    k: int
    num_edges: int
    brsim_k: float | None
    brsim_1: float | None
    per_mode_accuracy: tuple[float, ...]
    selected_modes: tuple[int, ...]
    induced_labels: tuple[dict[tuple[AgentId, AgentId], CrossingClass | None], ...]

    @property
    def defined(self) -> bool:
        return self.num_edges > 0


def default_evaluated_agents(scene: Scene) -> list[AgentId]:
    """Agents valid at t = 0 with a complete future window."""
    out = []
    for aid in scene.agent_ids():
        if scene.agent(aid).valid_at(0) and scene.has_full_future(aid):
            out.append(aid)
    return out


def _top_k_modes(preds: PredictionSet, k: int) -> list[int]:
    if k < 1:
        raise ValueError("K must be >= 1")
    if k > preds.num_modes:
        raise ValueError(f"K={k} exceeds available modes ({preds.num_modes})")
    ranked = np.argsort(-np.asarray(preds.mode_probs), kind="stable")
    return [int(i) for i in ranked[:k]]


def _stacks(
    scene: Scene, preds: PredictionSet, agents: list[AgentId]
) -> tuple[np.ndarray, np.ndarray]:
    """Ground-truth futures (N, T_F, 2) and predictions (N, K, T_F, 2)."""
    if not agents:
        raise MissingAgent("no evaluated agents")
    t_f = scene.future_horizon
    if preds.horizon != t_f:
        raise HorizonMismatch(f"prediction horizon {preds.horizon} != scene future {t_f}")
    gt = np.empty((len(agents), t_f, 2), dtype=np.float64)
    pr = np.empty((len(agents), preds.num_modes, t_f, 2), dtype=np.float64)
    for n, aid in enumerate(agents):
        if aid not in preds.trajectories:
            raise MissingAgent(f"no prediction for agent {aid!r}")
        traj = scene.agent(aid)
        for t in range(1, t_f + 1):
            st = traj.state_at(t)
            if st is None or not st.valid:
                raise HorizonMismatch(f"agent {aid!r} lacks ground truth at t={t}")
            gt[n, t - 1, 0] = st.x
            gt[n, t - 1, 1] = st.y
        pr[n] = preds.trajectories[aid]
    return gt, pr


def _displacements(gt: np.ndarray, pr: np.ndarray) -> np.ndarray:
    """Per agent/mode/step Euclidean errors, shape (N, K, T_F)."""
    return np.linalg.norm(pr - gt[:, None, :, :], axis=3)


def min_joint_fde(
    scene: Scene, preds: PredictionSet, k: int, agents: list[AgentId] | None = None
) -> tuple[float, int]:
    """Minimum over the top-k modes of the agent-averaged final displacement.

    Returns (meters, original mode index of the winner).
    """
    agents = default_evaluated_agents(scene) if agents is None else list(agents)
    gt, pr = _stacks(scene, preds, agents)
    sel = _top_k_modes(preds, k)
    per_mode = _displacements(gt, pr)[:, sel, -1].mean(axis=0)
    best = int(np.argmin(per_mode))
    return float(per_mode[best]), sel[best]


def min_joint_ade(
    scene: Scene, preds: PredictionSet, k: int, agents: list[AgentId] | None = None
) -> tuple[float, int]:
    """Minimum over the top-k modes of the agent- and time-averaged
    displacement.  Returns (meters, original mode index of the winner)."""
    agents = default_evaluated_agents(scene) if agents is None else list(agents)
    gt, pr = _stacks(scene, preds, agents)
    sel = _top_k_modes(preds, k)
    per_mode = _displacements(gt, pr)[:, sel, :].mean(axis=2).mean(axis=0)
    best = int(np.argmin(per_mode))
    return float(per_mode[best]), sel[best]


def min_fde_marginal(
    scene: Scene, preds: PredictionSet, k: int, agents: list[AgentId] | None = None
) -> float:
    """Per-agent minimum-over-modes final displacement, averaged over agents
    (each agent may pick a different mode)."""
    agents = default_evaluated_agents(scene) if agents is None else list(agents)
    gt, pr = _stacks(scene, preds, agents)
    sel = _top_k_modes(preds, k)
    final = _displacements(gt, pr)[:, sel, -1]
    return float(final.min(axis=1).mean())


def best_mode_pair(scene: Scene, preds: PredictionSet, i: AgentId, j: AgentId) -> int:
    """Mode minimizing the summed average displacement error of the pair;
    ties resolve to the lowest mode index.  Considers all modes."""
    gt, pr = _stacks(scene, preds, [i, j])
    cost = _displacements(gt, pr).mean(axis=2).sum(axis=0)
    return int(np.argmin(cost))


def _transform_points(
    frame_origin: tuple[float, float], axis_angle: float, x: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    # Elementwise twin of core.to_frame: identical IEEE operations, so
    # labels induced here match labels of Trajectory-based ground truth.
    c, s = math.cos(axis_angle), math.sin(axis_angle)
    dx = x - frame_origin[0]
    dy = y - frame_origin[1]
    return c * dx + s * dy, -s * dx + c * dy


def braid_similarity(
    scene: Scene,
    preds: PredictionSet,
    graph: InteractionGraph,
    k: int,
) -> BrSimReport:
    """Fraction of interaction-graph edges whose prediction-induced crossing
    labels match ground truth; the K-mode similarity takes the best mode.

    Frames come from ground-truth t = 0 poses, so induced and ground-truth
    labels are compared in identical frames.  Ambiguous induced crossings
    count as mismatches.
    """
    sel = _top_k_modes(preds, k)
    if not graph.edges:
        return BrSimReport(
            scene_id=scene.scene_id,
            k=k,
            num_edges=0,
            brsim_k=None,
            brsim_1=None,
            per_mode_accuracy=(),
            selected_modes=tuple(sel),
            induced_labels=(),
        )
    for e in graph.edges:
        for aid in (e.src, e.dst):
            if aid not in preds.trajectories:
                raise MissingAgent(f"no prediction for graph agent {aid!r}")
    if preds.horizon != scene.future_horizon:
        raise HorizonMismatch(
            f"prediction horizon {preds.horizon} != scene future {scene.future_horizon}"
        )

    ts = np.arange(1, scene.future_horizon + 1, dtype=np.float64)
    frames = {}
    for e in graph.edges:
        if e.dst not in frames:
            frames[e.dst] = frame_of_agent(scene, e.dst)

    accuracies = []
    induced_per_mode = []
    for mode in sel:
        matches = 0
        labels: dict[tuple[AgentId, AgentId], CrossingClass | None] = {}
        for e in graph.edges:
            fr = frames[e.dst]
            pi = preds.trajectories[e.src][mode]
            pj = preds.trajectories[e.dst][mode]
            xi, yi = _transform_points(fr.origin, fr.axis_angle, pi[:, 0], pi[:, 1])
            xj, yj = _transform_points(fr.origin, fr.axis_angle, pj[:, 0], pj[:, 1])
            label = _label_from_samples(ts, xi - xj, yi - yj, ambiguous="none")
            labels[(e.src, e.dst)] = label
            if label == e.label:
                matches += 1
        accuracies.append(matches / len(graph.edges))
        induced_per_mode.append(labels)

    return BrSimReport(
        scene_id=scene.scene_id,
        k=k,
        num_edges=len(graph.edges),
        brsim_k=max(accuracies),
        brsim_1=accuracies[0],  # selection is probability-ranked: entry 0 is most likely
        per_mode_accuracy=tuple(accuracies),
        selected_modes=tuple(sel),
        induced_labels=tuple(induced_per_mode),
    )


def evaluate_scene(
    scene: Scene,
    preds: PredictionSet,
    graph: InteractionGraph,
    k: int,
    agents: list[AgentId] | None = None,
) -> dict:
    """All per-scene metrics as one flat record (JSON/CSV friendly)."""
    fde_k, best = min_joint_fde(scene, preds, k, agents)
    ade_k, _ = min_joint_ade(scene, preds, k, agents)
    fde_1, _ = min_joint_fde(scene, preds, 1, agents)
    marginal = min_fde_marginal(scene, preds, k, agents)
    brsim = braid_similarity(scene, preds, graph, k)
    return {
        "scene_id": scene.scene_id,
        "K": k,
        "num_edges": brsim.num_edges,
        "min_joint_fde_k": fde_k,
        "min_joint_ade_k": ade_k,
        "min_joint_fde_1": fde_1,
        "min_fde_k": marginal,
        "best_joint_mode": best,
        "brsim_k": brsim.brsim_k,
        "brsim_1": brsim.brsim_1,
    }


def aggregate_records(records: list[dict]) -> dict:
    """Dataset-level means; BrSim fields skip undefined (empty-graph) scenes."""
    agg: dict[str, float | int | None] = {"num_scenes": len(records)}
    for key in ("min_joint_fde_k", "min_joint_ade_k", "min_joint_fde_1", "min_fde_k"):
        vals = [r[key] for r in records if r.get(key) is not None]
        agg[key] = float(np.mean(vals)) if vals else None
    for key in ("brsim_k", "brsim_1"):
        vals = [r[key] for r in records if r.get(key) is not None]
        agg[key] = float(np.mean(vals)) if vals else None
        agg[f"{key}_defined_scenes"] = len(vals)
    return agg


def record_to_csv_row(record: dict) -> list:
    return [record.get(col) for col in CSV_COLUMNS]
