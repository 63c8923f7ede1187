"""Domain types and reference-frame transforms.

Conventions used throughout the toolkit:

* timesteps are integer grid indices: ``t <= 0`` is observed past,
  ``t >= 1`` is future; the grid spacing is ``Scene.timestep_duration``
  seconds and is uniform (irregular sampling is rejected at parse time);
* units are meters and radians, angles live in ``(-pi, pi]``;
* every type is immutable after construction and every operation is a pure
  function, so scenes can be processed from any number of workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import MissingCurrentState, SceneFormatError

AgentId = str | int

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    r = math.fmod(a + math.pi, TWO_PI)
    if r <= 0.0:
        r += TWO_PI
    return r - math.pi


@dataclass(frozen=True)
class AgentState:
    """One observed or future sample of an agent.

    ``heading`` is optional; when present it must already be wrapped to
    (-pi, pi].  ``valid`` marks whether the sample is a real observation.
    """

    t: int
    x: float
    y: float
    heading: float | None = None
    valid: bool = True

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise SceneFormatError(f"non-finite position at t={self.t}")
        if self.heading is not None:
            if not math.isfinite(self.heading):
                raise SceneFormatError(f"non-finite heading at t={self.t}")
            if not (-math.pi < self.heading <= math.pi):
                raise SceneFormatError(
                    f"heading {self.heading!r} at t={self.t} outside (-pi, pi]"
                )


@dataclass(frozen=True)
class Trajectory:
    """Time-ordered samples of one agent (strictly increasing timesteps)."""

    agent_id: AgentId
    states: tuple[AgentState, ...]

    def __post_init__(self) -> None:
        ts = [s.t for s in self.states]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise SceneFormatError(
                f"agent {self.agent_id!r}: timesteps must be strictly increasing"
            )

    @cached_property
    def _by_t(self) -> dict[int, AgentState]:
        return {s.t: s for s in self.states}

    def state_at(self, t: int) -> AgentState | None:
        return self._by_t.get(t)

    def valid_at(self, t: int) -> bool:
        s = self._by_t.get(t)
        return s is not None and s.valid

    def valid_future_ts(self) -> list[int]:
        return [s.t for s in self.states if s.t >= 1 and s.valid]


@dataclass(frozen=True)
class Scene:
    """Ground-truth container: agents on a shared timestep grid.

    ``past_horizon`` counts timesteps with t <= 0 (so the grid starts at
    ``t = 1 - past_horizon``), ``future_horizon`` counts timesteps with
    t >= 1.
    """

    scene_id: str
    agents: tuple[Trajectory, ...]
    past_horizon: int
    future_horizon: int
    timestep_duration: float

    def __post_init__(self) -> None:
        if self.past_horizon < 1 or self.future_horizon < 1:
            raise SceneFormatError("past_horizon and future_horizon must be >= 1")
        if not (self.timestep_duration > 0 and math.isfinite(self.timestep_duration)):
            raise SceneFormatError("timestep_duration must be positive and finite")
        seen: set[AgentId] = set()
        t_min = 1 - self.past_horizon
        for traj in self.agents:
            if traj.agent_id in seen:
                raise SceneFormatError(f"duplicate agent id {traj.agent_id!r}")
            seen.add(traj.agent_id)
            for s in traj.states:
                if not (t_min <= s.t <= self.future_horizon):
                    raise SceneFormatError(
                        f"agent {traj.agent_id!r}: t={s.t} outside grid "
                        f"[{t_min}, {self.future_horizon}]"
                    )

    @cached_property
    def _by_id(self) -> dict[AgentId, Trajectory]:
        return {a.agent_id: a for a in self.agents}

    def agent(self, agent_id: AgentId) -> Trajectory:
        try:
            return self._by_id[agent_id]
        except KeyError:
            raise SceneFormatError(f"no agent {agent_id!r} in scene {self.scene_id}") from None

    def agent_ids(self) -> list[AgentId]:
        return [a.agent_id for a in self.agents]

    def has_full_future(self, agent_id: AgentId) -> bool:
        traj = self.agent(agent_id)
        return all(traj.valid_at(t) for t in range(1, self.future_horizon + 1))


@dataclass(frozen=True)
class ReferenceFrame:
    """Agent-centric coordinate system: origin plus the direction of the
    longitudinal x-axis."""

    origin: tuple[float, float]
    axis_angle: float

    def __post_init__(self) -> None:
        if not (-math.pi < self.axis_angle <= math.pi):
            raise SceneFormatError("axis_angle outside (-pi, pi]")


IDENTITY_FRAME = ReferenceFrame(origin=(0.0, 0.0), axis_angle=0.0)

# Displacements shorter than this cannot define a heading direction.
MIN_HEADING_DISPLACEMENT = 1e-6


def frame_of_agent(scene: Scene, agent_id: AgentId) -> ReferenceFrame:
    """Reference frame of an agent at the current timestep (t = 0).

    The longitudinal axis comes from the t = 0 heading when present,
    otherwise from the displacement since the last valid past state; a
    stationary heading-less agent falls back to axis_angle 0 in scene
    coordinates.

    Raises:
        MissingCurrentState: no valid t = 0 state exists.
    """
    traj = scene.agent(agent_id)
    cur = traj.state_at(0)
    if cur is None or not cur.valid:
        raise MissingCurrentState(f"agent {agent_id!r} has no valid t=0 state")
    if cur.heading is not None:
        return ReferenceFrame(origin=(cur.x, cur.y), axis_angle=cur.heading)
    prev = None
    for s in traj.states:
        if s.t < 0 and s.valid:
            prev = s
    if prev is not None:
        dx, dy = cur.x - prev.x, cur.y - prev.y
        if math.hypot(dx, dy) >= MIN_HEADING_DISPLACEMENT:
            return ReferenceFrame(origin=(cur.x, cur.y), axis_angle=wrap_angle(math.atan2(dy, dx)))
    return ReferenceFrame(origin=(cur.x, cur.y), axis_angle=0.0)


def to_frame(traj: Trajectory, frame: ReferenceFrame) -> Trajectory:
    """Express a trajectory in the given frame.

    Each point is translated by -origin then rotated by -axis_angle; headings
    shift by -axis_angle and are rewrapped.  Validity flags pass through.
    """
    c, s = math.cos(frame.axis_angle), math.sin(frame.axis_angle)
    ox, oy = frame.origin
    out = []
    for st in traj.states:
        dx, dy = st.x - ox, st.y - oy
        h = None if st.heading is None else wrap_angle(st.heading - frame.axis_angle)
        out.append(
            AgentState(t=st.t, x=c * dx + s * dy, y=-s * dx + c * dy, heading=h, valid=st.valid)
        )
    return Trajectory(agent_id=traj.agent_id, states=tuple(out))


def from_frame(traj: Trajectory, frame: ReferenceFrame) -> Trajectory:
    """Inverse of :func:`to_frame`."""
    c, s = math.cos(frame.axis_angle), math.sin(frame.axis_angle)
    ox, oy = frame.origin
    out = []
    for st in traj.states:
        h = None if st.heading is None else wrap_angle(st.heading + frame.axis_angle)
        out.append(
            AgentState(
                t=st.t,
                x=ox + c * st.x - s * st.y,
                y=oy + s * st.x + c * st.y,
                heading=h,
                valid=st.valid,
            )
        )
    return Trajectory(agent_id=traj.agent_id, states=tuple(out))


@dataclass(frozen=True)
class PredictionSet:
    """K joint future modes for a scene.

    ``trajectories[agent_id]`` has shape (K, T_F, 2); mode k of every agent
    together forms joint mode k.  ``mode_probs`` are K non-negative reals
    summing to 1 (tolerance 1e-6).
    """

    scene_id: str
    num_modes: int
    mode_probs: tuple[float, ...]
    trajectories: dict[AgentId, np.ndarray] = field(repr=False)

    def __post_init__(self) -> None:
        if self.num_modes < 1:
            raise SceneFormatError("num_modes must be >= 1")
        if len(self.mode_probs) != self.num_modes:
            raise SceneFormatError("mode_probs length must equal num_modes")
        if any(p < 0 for p in self.mode_probs):
            raise SceneFormatError("mode_probs must be non-negative")
        if abs(sum(self.mode_probs) - 1.0) > 1e-6:
            raise SceneFormatError("mode_probs must sum to 1 within 1e-6")
        t_f = None
        frozen: dict[AgentId, np.ndarray] = {}
        for aid, arr in self.trajectories.items():
            a = np.asarray(arr, dtype=np.float64)
            if a.ndim != 3 or a.shape[0] != self.num_modes or a.shape[2] != 2:
                raise SceneFormatError(
                    f"agent {aid!r}: prediction array must have shape (K, T_F, 2)"
                )
            if not np.isfinite(a).all():
                raise SceneFormatError(f"agent {aid!r}: non-finite prediction")
            if t_f is None:
                t_f = a.shape[1]
            elif a.shape[1] != t_f:
                raise SceneFormatError("all agents must share the same horizon")
            a = a.copy()
            a.setflags(write=False)
            frozen[aid] = a
        if t_f in (None, 0):
            raise SceneFormatError("prediction set must cover at least one agent and step")
        object.__setattr__(self, "trajectories", frozen)

    @property
    def horizon(self) -> int:
        return next(iter(self.trajectories.values())).shape[1]

    def agent_ids(self) -> list[AgentId]:
        return list(self.trajectories.keys())
