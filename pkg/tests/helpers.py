"""Independent oracles and scene builders shared by the test suite.

Everything here recomputes expectations from first principles (dense
resampling, exhaustive enumeration, finite differences) and must stay
independent of the library code paths it checks.
"""

from __future__ import annotations

import math

import numpy as np

from braidkit.core import AgentState, PredictionSet, ReferenceFrame, Scene, Trajectory


def make_scene(agent_points, past_horizon=1, future_horizon=None, dt=0.1, scene_id="s", headings=None):
    """Scene from {agent_id: [(t, x, y), ...]} triples (all valid)."""
    agents = []
    t_max = 0
    for aid, pts in agent_points.items():
        states = []
        for idx, (t, x, y) in enumerate(pts):
            h = None
            if headings and aid in headings:
                h = headings[aid][idx]
            states.append(AgentState(t=t, x=float(x), y=float(y), heading=h))
            t_max = max(t_max, t)
        agents.append(Trajectory(agent_id=aid, states=tuple(states)))
    return Scene(
        scene_id=scene_id,
        agents=tuple(agents),
        past_horizon=past_horizon,
        future_horizon=future_horizon if future_horizon is not None else t_max,
        timestep_duration=dt,
    )


def random_polyline_scene(rng, n_agents=2, t_f=20, past=2, spread=8.0, step=1.2, scene_id="r"):
    """Random piecewise-linear trajectories on the full grid."""
    pts = {}
    for a in range(n_agents):
        start = rng.uniform(-spread, spread, size=2)
        walk = rng.normal(0.0, step, size=(past + t_f, 2)).cumsum(axis=0)
        xy = np.vstack([start, start + walk])
        pts[f"a{a}"] = [(t, xy[i, 0], xy[i, 1]) for i, t in enumerate(range(1 - past, t_f + 1))]
    return make_scene(pts, past_horizon=past, future_horizon=t_f, scene_id=scene_id)


def dense_crossing_oracle(traj_i, traj_j, frame: ReferenceFrame, factor=1000):
    """Brute-force twin of detect_crossing: transform with raw trig, resample
    the shared future window at ``factor`` points per step, scan sign
    changes.  Returns (t_star, dy) of the first crossing or None."""
    c, s = math.cos(frame.axis_angle), math.sin(frame.axis_angle)

    def future(traj):
        ts, xs, ys = [], [], []
        for st in traj.states:
            if st.t >= 1 and st.valid:
                dx, dy = st.x - frame.origin[0], st.y - frame.origin[1]
                ts.append(float(st.t))
                xs.append(c * dx + s * dy)
                ys.append(-s * dx + c * dy)
        return np.array(ts), np.array(xs), np.array(ys)

    ti, xi, yi = future(traj_i)
    tj, xj, yj = future(traj_j)
    shared = np.intersect1d(ti, tj)
    if len(shared) < 2:
        return None
    fine = np.linspace(shared[0], shared[-1], int((shared[-1] - shared[0]) * factor) + 1)
    dx = np.interp(fine, ti, xi) - np.interp(fine, tj, xj)
    dy = np.interp(fine, ti, yi) - np.interp(fine, tj, yj)
    sign = np.sign(dx)
    flips = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    if len(flips) == 0:
        return None
    k = flips[0]
    u = dx[k] / (dx[k] - dx[k + 1])
    return (
        float(fine[k] + (fine[k + 1] - fine[k]) * u),
        float(dy[k] + (dy[k + 1] - dy[k]) * u),
    )


def random_prediction_set(rng, scene: Scene, k: int, spread=2.0) -> PredictionSet:
    probs = rng.uniform(0.1, 1.0, size=k)
    probs /= probs.sum()
    trajectories = {}
    for traj in scene.agents:
        gt = np.array(
            [(traj.state_at(t).x, traj.state_at(t).y) for t in range(1, scene.future_horizon + 1)]
        )
        trajectories[traj.agent_id] = gt[None] + rng.normal(0.0, spread, size=(k, *gt.shape))
    return PredictionSet(
        scene_id=scene.scene_id,
        num_modes=k,
        mode_probs=tuple(float(p) for p in probs),
        trajectories=trajectories,
    )


def _dist(p, q) -> float:
    # plain sqrt(dx^2 + dy^2): the exact expression the norms under test use,
    # so agreement is bit-for-bit (math.dist's protected hypot differs by ulps)
    dx = float(p[0]) - float(q[0])
    dy = float(p[1]) - float(q[1])
    return math.sqrt(dx * dx + dy * dy)


def _agent_dists(scene, preds, aid, mode):
    traj = scene.agent(aid)
    pred = preds.trajectories[aid][mode]
    return [
        _dist(pred[t - 1], (traj.state_at(t).x, traj.state_at(t).y))
        for t in range(1, scene.future_horizon + 1)
    ]


def brute_force_joint_metrics(scene: Scene, preds: PredictionSet, k: int, agents):
    """Exhaustive per-mode recomputation, looping agents and modes."""
    ranked = sorted(range(preds.num_modes), key=lambda m: (-preds.mode_probs[m], m))[:k]
    per_mode_fde, per_mode_ade = [], []
    for mode in ranked:
        fdes, ades = [], []
        for aid in agents:
            dists = _agent_dists(scene, preds, aid, mode)
            fdes.append(dists[-1])
            ades.append(np.mean(dists))
        per_mode_fde.append(float(np.mean(fdes)))
        per_mode_ade.append(float(np.mean(ades)))
    best_fde = int(np.argmin(per_mode_fde))
    best_ade = int(np.argmin(per_mode_ade))

    marg = []
    for aid in agents:
        finals = [_agent_dists(scene, preds, aid, mode)[-1] for mode in ranked]
        marg.append(min(finals))
    return {
        "fde": (per_mode_fde[best_fde], ranked[best_fde]),
        "ade": (per_mode_ade[best_ade], ranked[best_ade]),
        "marginal_fde": float(np.mean(marg)),
    }


def brute_force_best_pair(scene: Scene, preds: PredictionSet, i, j) -> int:
    costs = []
    for mode in range(preds.num_modes):
        cost = float(np.mean(_agent_dists(scene, preds, i, mode))) + float(
            np.mean(_agent_dists(scene, preds, j, mode))
        )
        costs.append(cost)
    return int(np.argmin(costs))


def rigid_transform_scene(scene: Scene, angle: float, shift) -> Scene:
    c, s = math.cos(angle), math.sin(angle)
    agents = []
    for traj in scene.agents:
        states = []
        for st in traj.states:
            h = None if st.heading is None else _wrap(st.heading + angle)
            states.append(
                AgentState(
                    t=st.t,
                    x=c * st.x - s * st.y + shift[0],
                    y=s * st.x + c * st.y + shift[1],
                    heading=h,
                    valid=st.valid,
                )
            )
        agents.append(Trajectory(agent_id=traj.agent_id, states=tuple(states)))
    return Scene(
        scene_id=scene.scene_id,
        agents=tuple(agents),
        past_horizon=scene.past_horizon,
        future_horizon=scene.future_horizon,
        timestep_duration=scene.timestep_duration,
    )


def rigid_transform_predictions(preds: PredictionSet, angle: float, shift) -> PredictionSet:
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    return PredictionSet(
        scene_id=preds.scene_id,
        num_modes=preds.num_modes,
        mode_probs=preds.mode_probs,
        trajectories={
            aid: arr @ rot.T + np.asarray(shift) for aid, arr in preds.trajectories.items()
        },
    )


def _wrap(a: float) -> float:
    r = math.fmod(a + math.pi, 2.0 * math.pi)
    if r <= 0.0:
        r += 2.0 * math.pi
    return r - math.pi


def relative_error(got: np.ndarray, want: np.ndarray) -> float:
    got = np.asarray(got, dtype=np.float64).ravel()
    want = np.asarray(want, dtype=np.float64).ravel()
    denom = max(float(np.linalg.norm(got)), float(np.linalg.norm(want)), 1e-12)
    return float(np.linalg.norm(got - want)) / denom


def finite_difference(fn, x0: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of a flat vector."""
    g = np.zeros_like(x0)
    for idx in range(x0.size):
        xp = x0.copy()
        xp[idx] += eps
        xm = x0.copy()
        xm[idx] -= eps
        g[idx] = (fn(xp) - fn(xm)) / (2.0 * eps)
    return g
