"""Versioned JSON interchange formats.

Scene format (``format_version: "1"``)::

    {"format_version": "1", "scene_id": str, "timestep_duration": float,
     "past_horizon": int, "future_horizon": int,
     "agents": [{"id": str|int,
                 "states": [{"t": int, "x": float, "y": float,
                             "heading": float (optional), "valid": bool}]}]}

Prediction format (``format_version: "1"``)::

    {"format_version": "1", "scene_id": str, "num_modes": int,
     "mode_probs": [float, ...],
     "agents": [{"id": str|int, "modes": [[[x, y], ... T_F points], ... K]}]}

Serialization is deterministic: dict keys are emitted in a fixed order and
floats use Python ``repr``, so re-running a command reproduces files
byte-identically.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .core import AgentState, PredictionSet, Scene, Trajectory
from .errors import SceneFormatError

FORMAT_VERSION = "1"


def _require(obj: dict, key: str, where: str) -> Any:
    if key not in obj:
        raise SceneFormatError(f"{where}: missing key {key!r}")
    return obj[key]


def _check_version(obj: dict, where: str) -> None:
    v = _require(obj, "format_version", where)
    if v != FORMAT_VERSION:
        raise SceneFormatError(f"{where}: unsupported format_version {v!r}")


def scene_to_dict(scene: Scene) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "scene_id": scene.scene_id,
        "timestep_duration": scene.timestep_duration,
        "past_horizon": scene.past_horizon,
        "future_horizon": scene.future_horizon,
        "agents": [
            {
                "id": traj.agent_id,
                "states": [
                    {
                        "t": s.t,
                        "x": s.x,
                        "y": s.y,
                        **({} if s.heading is None else {"heading": s.heading}),
                        "valid": s.valid,
                    }
                    for s in traj.states
                ],
            }
            for traj in scene.agents
        ],
    }


def scene_from_dict(obj: dict) -> Scene:
    where = "scene"
    if not isinstance(obj, dict):
        raise SceneFormatError(f"{where}: expected an object")
    _check_version(obj, where)
    agents = []
    for a in _require(obj, "agents", where):
        aid = _require(a, "id", f"{where}.agents[]")
        states = []
        for st in _require(a, "states", f"agent {aid!r}"):
            t = _require(st, "t", f"agent {aid!r} state")
            if not isinstance(t, int) or isinstance(t, bool):
                raise SceneFormatError(f"agent {aid!r}: t must be an integer, got {t!r}")
            states.append(
                AgentState(
                    t=t,
                    x=float(_require(st, "x", f"agent {aid!r} state")),
                    y=float(_require(st, "y", f"agent {aid!r} state")),
                    heading=None if st.get("heading") is None else float(st["heading"]),
                    valid=bool(st.get("valid", True)),
                )
            )
        agents.append(Trajectory(agent_id=aid, states=tuple(states)))
    return Scene(
        scene_id=str(_require(obj, "scene_id", where)),
        agents=tuple(agents),
        past_horizon=int(_require(obj, "past_horizon", where)),
        future_horizon=int(_require(obj, "future_horizon", where)),
        timestep_duration=float(_require(obj, "timestep_duration", where)),
    )


def predictions_to_dict(preds: PredictionSet) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "scene_id": preds.scene_id,
        "num_modes": preds.num_modes,
        "mode_probs": list(preds.mode_probs),
        "agents": [
            {"id": aid, "modes": preds.trajectories[aid].tolist()}
            for aid in preds.trajectories
        ],
    }


def predictions_from_dict(obj: dict) -> PredictionSet:
    where = "predictions"
    if not isinstance(obj, dict):
        raise SceneFormatError(f"{where}: expected an object")
    _check_version(obj, where)
    trajectories = {}
    for a in _require(obj, "agents", where):
        aid = _require(a, "id", f"{where}.agents[]")
        modes = np.asarray(_require(a, "modes", f"agent {aid!r}"), dtype=np.float64)
        if modes.ndim != 3:
            raise SceneFormatError(f"agent {aid!r}: modes must be a K x T_F x 2 array")
        trajectories[aid] = modes
    return PredictionSet(
        scene_id=str(_require(obj, "scene_id", where)),
        num_modes=int(_require(obj, "num_modes", where)),
        mode_probs=tuple(float(p) for p in _require(obj, "mode_probs", where)),
        trajectories=trajectories,
    )


def dump_json(obj: dict, path: str | Path) -> None:
    """Write JSON deterministically (fixed key order, repr floats)."""
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def load_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SceneFormatError(f"{path}: invalid JSON ({e})") from e


def load_scene(path: str | Path) -> Scene:
    return scene_from_dict(load_json(path))


def save_scene(scene: Scene, path: str | Path) -> None:
    dump_json(scene_to_dict(scene), path)


def load_predictions(path: str | Path) -> PredictionSet:
    return predictions_from_dict(load_json(path))


def save_predictions(preds: PredictionSet, path: str | Path) -> None:
    dump_json(predictions_to_dict(preds), path)
