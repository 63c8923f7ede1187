"""Crossing detection, edge labeling, interaction graphs, and braid words.

Crossing semantics: two future trajectories, both expressed in a target
reference frame, cross when the longitudinal gap d_x(t) = x_i(t) - x_j(t)
changes sign between consecutive shared valid samples.  The crossing class
records which side strand i passes on: d_y = y_i - y_j at the interpolated
crossing time, positive = ``over``, negative = ``below``.

Numerical thresholds (frozen; see tests for the degenerate cases they govern):

* ``EPS_X`` = 1e-9 m: |d_x| below this snaps to zero before sign scanning;
* ``EPS_Y`` = 1e-6 m: |d_y| at the crossing below this is a near-collision,
  undecidable over/below;
* ``EPS_T`` = 1e-9 timestep units: crossing times closer than this count as
  simultaneous during braid-word extraction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._kernel import scan_crossings
from .core import (
    AgentId,
    ReferenceFrame,
    Scene,
    Trajectory,
    frame_of_agent,
    to_frame,
)
from .errors import (
    AmbiguousCrossing,
    IncompleteWindow,
    InsufficientOverlap,
    StrandCountMismatch,
)

logger = logging.getLogger(__name__)

EPS_X = 1e-9
EPS_Y = 1e-6
EPS_T = 1e-9


class CrossingClass(Enum):
    """Directed crossing label of agent i relative to agent j."""

    BELOW = "below"
    OVER = "over"
    NO_CROSSING = "no_crossing"

    @property
    def index(self) -> int:
        """Position in the canonical class order (logits use this order)."""
        return CLASS_ORDER.index(self)


CLASS_ORDER: tuple[CrossingClass, ...] = (
    CrossingClass.BELOW,
    CrossingClass.OVER,
    CrossingClass.NO_CROSSING,
)


@dataclass(frozen=True)
class CrossingEvent:
    """One sign change of the longitudinal gap.

    ``t_star`` is the linear-interpolation root in timestep units;
    ``dy_at_cross`` is y_i - y_j interpolated at ``t_star`` (target frame).
    """

    t_star: float
    dy_at_cross: float


def _gap_samples(
    traj_i: Trajectory, traj_j: Trajectory, frame: ReferenceFrame
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shared valid future samples of both trajectories in ``frame``.

    Returns (ts, dx, dy) float64 arrays; raises InsufficientOverlap when
    fewer than two shared samples exist.
    """
    fi = to_frame(traj_i, frame)
    fj = to_frame(traj_j, frame)
    by_i = {s.t: s for s in fi.states if s.t >= 1 and s.valid}
    by_j = {s.t: s for s in fj.states if s.t >= 1 and s.valid}
    shared = sorted(by_i.keys() & by_j.keys())
    if len(shared) < 2:
        raise InsufficientOverlap(
            f"{traj_i.agent_id!r}/{traj_j.agent_id!r}: "
            f"{len(shared)} shared valid future sample(s), need >= 2"
        )
    ts = np.array([float(t) for t in shared], dtype=np.float64)
    dx = np.array([by_i[t].x - by_j[t].x for t in shared], dtype=np.float64)
    dy = np.array([by_i[t].y - by_j[t].y for t in shared], dtype=np.float64)
    return ts, dx, dy


def _scan(ts: np.ndarray, dx: np.ndarray, dy: np.ndarray) -> list[CrossingEvent]:
    t_stars, dys = scan_crossings(
        np.ascontiguousarray(ts), np.ascontiguousarray(dx), np.ascontiguousarray(dy), EPS_X
    )
    return [CrossingEvent(t_star=float(t), dy_at_cross=float(d)) for t, d in zip(t_stars, dys)]


def crossing_events(
    traj_i: Trajectory, traj_j: Trajectory, frame: ReferenceFrame
) -> list[CrossingEvent]:
    """All crossings of the two future trajectories in ``frame``, earliest
    first.  No ambiguity check is applied here."""
    return _scan(*_gap_samples(traj_i, traj_j, frame))


def detect_crossing(
    traj_i: Trajectory, traj_j: Trajectory, frame: ReferenceFrame
) -> CrossingEvent | None:
    """Earliest crossing of the two future trajectories in ``frame``.

    Raises:
        InsufficientOverlap: fewer than two shared valid future samples.
        AmbiguousCrossing: |d_y| at the crossing is below ``EPS_Y``.
    """
    events = crossing_events(traj_i, traj_j, frame)
    if not events:
        return None
    first = events[0]
    if abs(first.dy_at_cross) < EPS_Y:
        raise AmbiguousCrossing(
            f"near-collision at t*={first.t_star:.6f}: |dy|={abs(first.dy_at_cross):.3e} < {EPS_Y}"
        )
    return first


def _label_from_samples(
    ts: np.ndarray, dx: np.ndarray, dy: np.ndarray, *, ambiguous: str = "raise"
) -> CrossingClass | None:
    """Crossing class from gap samples.

    ``ambiguous`` selects what a near-collision crossing (|dy| < EPS_Y)
    does: ``"raise"`` raises AmbiguousCrossing; ``"nearest_sample"`` labels
    by the sign of d_y at the sample nearest to the crossing time (ties take
    the earlier sample, dy <= 0 maps to ``below``) and logs; ``"none"``
    returns None so callers can count it as a mismatch.
    """
    events = _scan(ts, dx, dy)
    if not events:
        return CrossingClass.NO_CROSSING
    first = events[0]
    if abs(first.dy_at_cross) >= EPS_Y:
        return CrossingClass.OVER if first.dy_at_cross > 0 else CrossingClass.BELOW
    if ambiguous == "raise":
        raise AmbiguousCrossing(
            f"near-collision at t*={first.t_star:.6f}: |dy|={abs(first.dy_at_cross):.3e} < {EPS_Y}"
        )
    if ambiguous == "none":
        return None
    gaps = np.abs(ts - first.t_star)
    k = int(np.argmin(gaps))  # argmin takes the first minimum: earlier sample wins ties
    dy_near = float(dy[k])
    label = CrossingClass.OVER if dy_near > 0 else CrossingClass.BELOW
    logger.warning(
        "ambiguous crossing at t*=%.6f degraded to nearest-sample rule: dy[%d]=%.3e -> %s",
        first.t_star,
        k,
        dy_near,
        label.value,
    )
    return label


def label_edge(scene: Scene, i: AgentId, j: AgentId) -> CrossingClass:
    """Crossing class of agent i's future trajectory relative to agent j,
    evaluated in j's reference frame.

    Raises:
        MissingCurrentState: j has no valid t = 0 state.
        InsufficientOverlap / AmbiguousCrossing: propagated from detection.
    """
    frame = frame_of_agent(scene, j)
    ts, dx, dy = _gap_samples(scene.agent(i), scene.agent(j), frame)
    label = _label_from_samples(ts, dx, dy, ambiguous="raise")
    assert label is not None
    return label


@dataclass(frozen=True)
class GraphEdge:
    src: AgentId
    dst: AgentId
    label: CrossingClass
    distance_t0: float


@dataclass(frozen=True)
class InteractionGraph:
    """Directed agent-pair crossing labels for one scene.

    Edges (i, j) and (j, i) are labeled independently; an edge exists only
    when the agents are within ``delta`` meters at t = 0 and i is among the
    ``max_neighbors`` nearest sources of j.
    """

    scene_id: str
    delta: float
    max_neighbors: int
    nodes: tuple[AgentId, ...]
    edges: tuple[GraphEdge, ...]

    def edge_map(self) -> dict[tuple[AgentId, AgentId], CrossingClass]:
        return {(e.src, e.dst): e.label for e in self.edges}


def build_interaction_graph(
    scene: Scene, delta: float = 50.0, max_neighbors: int = 32
) -> InteractionGraph:
    """Label every admissible directed agent pair of a scene.

    Per-edge failures degrade instead of aborting: ambiguous crossings fall
    back to the nearest-sample d_y sign (logged), pairs with insufficient
    future overlap are omitted.  Agents without a valid t = 0 state cannot
    carry edges.
    """
    if delta <= 0:
        raise ValueError("delta must be > 0")
    if max_neighbors < 1:
        raise ValueError("max_neighbors must be >= 1")
    nodes = tuple(scene.agent_ids())
    t0_pos: dict[AgentId, tuple[float, float]] = {}
    for aid in nodes:
        st = scene.agent(aid).state_at(0)
        if st is not None and st.valid:
            t0_pos[aid] = (st.x, st.y)

    edges: list[GraphEdge] = []
    for j in nodes:
        if j not in t0_pos:
            continue
        xj, yj = t0_pos[j]
        cands: list[tuple[float, str, AgentId]] = []
        for i in nodes:
            if i == j or i not in t0_pos:
                continue
            d = math.hypot(t0_pos[i][0] - xj, t0_pos[i][1] - yj)
            if d <= delta:
                cands.append((d, str(i), i))
        cands.sort()
        frame = frame_of_agent(scene, j)
        traj_j = scene.agent(j)
        for d, _, i in cands[:max_neighbors]:
            try:
                ts, dx, dy = _gap_samples(scene.agent(i), traj_j, frame)
            except InsufficientOverlap:
                logger.info("edge %r->%r omitted: insufficient future overlap", i, j)
                continue
            label = _label_from_samples(ts, dx, dy, ambiguous="nearest_sample")
            assert label is not None
            edges.append(GraphEdge(src=i, dst=j, label=label, distance_t0=d))
    return InteractionGraph(
        scene_id=scene.scene_id,
        delta=delta,
        max_neighbors=max_neighbors,
        nodes=nodes,
        edges=tuple(edges),
    )


@dataclass(frozen=True)
class Generator:
    """Signed braid generator: sigma_index swaps adjacent strand slots
    (index-1, index), 1-based, sign +1 when the rightward-moving strand has
    greater y at the crossing.  ``t_star`` is the crossing time for words
    extracted from scenes, None for abstract words."""

    index: int
    sign: int
    t_star: float | None = None

    def __post_init__(self) -> None:
        if self.sign not in (-1, 1):
            raise ValueError("sign must be +1 or -1")
        if self.index < 1:
            raise ValueError("index must be >= 1")


def replay_permutation(n_strands: int, generators: tuple[Generator, ...]) -> tuple[int, ...]:
    """Permutation induced by a generator sequence: entry s is the final slot
    (0-based) of the strand that started in slot s."""
    contents = list(range(n_strands))
    for g in generators:
        i = g.index - 1
        contents[i], contents[i + 1] = contents[i + 1], contents[i]
    perm = [0] * n_strands
    for slot, strand in enumerate(contents):
        perm[strand] = slot
    return tuple(perm)


@dataclass(frozen=True)
class BraidWord:
    """Time-ordered generator sequence plus the permutation it induces.

    ``permutation[s]`` is the final slot of the strand that started in slot
    s (slots are 0-based, ordered by increasing x at t = 0).  For words
    extracted from a scene, ``strand_order`` lists the agent ids occupying
    the initial slots.
    """

    n_strands: int
    generators: tuple[Generator, ...]
    permutation: tuple[int, ...]
    strand_order: tuple[AgentId, ...] | None = None

    def __post_init__(self) -> None:
        for g in self.generators:
            if g.index > self.n_strands - 1:
                raise ValueError(f"generator index {g.index} exceeds strand bound")
        if sorted(self.permutation) != list(range(self.n_strands)):
            raise ValueError("permutation must be a permutation of strand slots")
        if replay_permutation(self.n_strands, self.generators) != self.permutation:
            raise ValueError("permutation does not match the generator sequence")
        if self.strand_order is not None and len(self.strand_order) != self.n_strands:
            raise ValueError("strand_order length must equal n_strands")


def word_from_generators(
    n_strands: int,
    generators: tuple[Generator, ...] | list[Generator],
    strand_order: tuple[AgentId, ...] | None = None,
) -> BraidWord:
    gens = tuple(generators)
    return BraidWord(
        n_strands=n_strands,
        generators=gens,
        permutation=replay_permutation(n_strands, gens),
        strand_order=strand_order,
    )


def free_reduce(word: BraidWord) -> BraidWord:
    """Cancel adjacent inverse generator pairs until none remain."""
    stack: list[Generator] = []
    for g in word.generators:
        if stack and stack[-1].index == g.index and stack[-1].sign == -g.sign:
            stack.pop()
        else:
            stack.append(g)
    return BraidWord(
        n_strands=word.n_strands,
        generators=tuple(stack),
        permutation=word.permutation,
        strand_order=word.strand_order,
    )


def compose(a: BraidWord, b: BraidWord) -> BraidWord:
    """Concatenate two words (a first, then b) on the same strand count."""
    if a.n_strands != b.n_strands:
        raise StrandCountMismatch(f"{a.n_strands} != {b.n_strands}")
    perm = tuple(b.permutation[a.permutation[i]] for i in range(a.n_strands))
    return BraidWord(
        n_strands=a.n_strands,
        generators=a.generators + b.generators,
        permutation=perm,
        strand_order=a.strand_order,
    )


@dataclass(frozen=True)
class _SwapEvent:
    t: float
    a: int  # agent index
    b: int
    y_a: float
    y_b: float


def extract_braid_word(scene: Scene, frame: ReferenceFrame | None = None) -> BraidWord:
    """Braid word of a whole scene over the window t = 0 .. future horizon.

    Strands are the agents' trajectories expressed in ``frame`` (scene
    coordinates when None), initially ordered by x at t = 0 (ties by agent
    id).  Each change of x-order between consecutive samples is decomposed
    into adjacent transpositions at their interpolated crossing times.

    Raises:
        IncompleteWindow: an agent is missing or invalid somewhere in the
            window.
        AmbiguousCrossing: two strands cross with |dy| < ``EPS_Y``.

    Crossing times that coincide within ``EPS_T`` on a shared strand are
    resolved by current slot order and logged, not raised.
    """
    if frame is None:
        frame = ReferenceFrame(origin=(0.0, 0.0), axis_angle=0.0)
    t_f = scene.future_horizon
    ids = scene.agent_ids()
    n = len(ids)
    window = list(range(0, t_f + 1))

    xs = np.empty((n, t_f + 1), dtype=np.float64)
    ys = np.empty((n, t_f + 1), dtype=np.float64)
    for a, aid in enumerate(ids):
        traj = to_frame(scene.agent(aid), frame)
        for col, t in enumerate(window):
            st = traj.state_at(t)
            if st is None or not st.valid:
                raise IncompleteWindow(
                    f"agent {aid!r} lacks a valid state at t={t}; whole-scene "
                    "braid words require the full window"
                )
            xs[a, col] = st.x
            ys[a, col] = st.y

    sid = [str(aid) for aid in ids]

    def before(a: int, b: int, col: int) -> bool:
        if xs[a, col] != xs[b, col]:
            return xs[a, col] < xs[b, col]
        return sid[a] < sid[b]

    init_order = sorted(range(n), key=lambda a: (xs[a, 0], sid[a]))
    order = list(init_order)
    pos = [0] * n
    for slot, a in enumerate(order):
        pos[a] = slot

    generators: list[Generator] = []
    for col in range(t_f):
        events: list[_SwapEvent] = []
        for a in range(n):
            for b in range(a + 1, n):
                if before(a, b, col) == before(a, b, col + 1):
                    continue
                d0 = xs[a, col] - xs[b, col]
                d1 = xs[a, col + 1] - xs[b, col + 1]
                if d0 == 0.0:
                    u = 0.0
                elif d1 == 0.0:
                    u = 1.0
                else:
                    u = d0 / (d0 - d1)
                t_cross = float(window[col]) + u
                events.append(
                    _SwapEvent(
                        t=t_cross,
                        a=a,
                        b=b,
                        y_a=ys[a, col] + (ys[a, col + 1] - ys[a, col]) * u,
                        y_b=ys[b, col] + (ys[b, col + 1] - ys[b, col]) * u,
                    )
                )
        events.sort(key=lambda e: (e.t, min(pos[e.a], pos[e.b])))
        for k in range(len(events) - 1):
            e, f = events[k], events[k + 1]
            if abs(e.t - f.t) <= EPS_T and {e.a, e.b} & {f.a, f.b}:
                logger.warning(
                    "simultaneous crossings at t=%.9f share a strand; resolved by slot order",
                    e.t,
                )
        pending = list(events)
        guard = 0
        while pending:
            guard += 1
            if guard > 4 * len(events) * (len(events) + 1):
                raise RuntimeError("could not linearize swap events into adjacent transpositions")
            for idx, e in enumerate(pending):
                pa, pb = pos[e.a], pos[e.b]
                if abs(pa - pb) != 1:
                    continue
                left_slot = min(pa, pb)
                left, right = order[left_slot], order[left_slot + 1]
                y_left = e.y_a if left == e.a else e.y_b
                y_right = e.y_b if left == e.a else e.y_a
                if abs(y_left - y_right) < EPS_Y:
                    raise AmbiguousCrossing(
                        f"strands {ids[left]!r}/{ids[right]!r} cross at t={e.t:.6f} "
                        f"with |dy|={abs(y_left - y_right):.3e} < {EPS_Y}"
                    )
                sign = 1 if y_left > y_right else -1
                generators.append(Generator(index=left_slot + 1, sign=sign, t_star=e.t))
                order[left_slot], order[left_slot + 1] = right, left
                pos[right], pos[left] = left_slot, left_slot + 1
                pending.pop(idx)
                break

    init_slot = [0] * n
    for slot, a in enumerate(init_order):
        init_slot[a] = slot
    perm = [0] * n
    for a in range(n):
        perm[init_slot[a]] = pos[a]
    return BraidWord(
        n_strands=n,
        generators=tuple(generators),
        permutation=tuple(perm),
        strand_order=tuple(ids[a] for a in init_order),
    )


def graph_to_dict(graph: InteractionGraph) -> dict:
    return {
        "scene_id": graph.scene_id,
        "delta": graph.delta,
        "max_neighbors": graph.max_neighbors,
        "edges": [
            {
                "src": e.src,
                "dst": e.dst,
                "label": e.label.value,
                "distance_t0": e.distance_t0,
            }
            for e in graph.edges
        ],
    }


def graph_from_dict(obj: dict) -> InteractionGraph:
    edges = tuple(
        GraphEdge(
            src=e["src"],
            dst=e["dst"],
            label=CrossingClass(e["label"]),
            distance_t0=float(e["distance_t0"]),
        )
        for e in obj["edges"]
    )
    nodes = tuple(obj.get("nodes", sorted({e.src for e in edges} | {e.dst for e in edges}, key=str)))
    return InteractionGraph(
        scene_id=str(obj["scene_id"]),
        delta=float(obj["delta"]),
        max_neighbors=int(obj["max_neighbors"]),
        nodes=nodes,
        edges=edges,
    )


def word_to_dict(word: BraidWord) -> dict:
    return {
        "n_strands": word.n_strands,
        "strand_order": list(word.strand_order) if word.strand_order is not None else None,
        "word": [{"index": g.index, "sign": g.sign, "t_star": g.t_star} for g in word.generators],
        "permutation": list(word.permutation),
    }


def word_from_dict(obj: dict) -> BraidWord:
    gens = tuple(
        Generator(index=int(g["index"]), sign=int(g["sign"]), t_star=g.get("t_star"))
        for g in obj["word"]
    )
    order = obj.get("strand_order")
    return BraidWord(
        n_strands=int(obj["n_strands"]),
        generators=gens,
        permutation=tuple(int(p) for p in obj["permutation"]),
        strand_order=None if order is None else tuple(order),
    )
