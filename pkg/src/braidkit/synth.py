"""Synthetic multi-agent scenes with analytically known crossing labels.

Each template draws motion parameters, verifies margins on the *continuous*
motion equations (fine sign scanning plus bisection on the exact position
functions), and only emits scenes whose labels and braid words are forced by
construction.  That analysis never touches the sampled-trajectory code in
:mod:`braidkit.braid`, so generated scenes double as an independent oracle
for it.

Margins enforced on every emitted scene:

* longitudinal-gap magnitude >= 1e-4 m at every sample (no snapping cases);
* crossing roots pairwise separated by >= 3 timesteps, gap slope at each
  root >= 1 m/s (sampled interpolation cannot miss or reorder crossings);
* lateral gap at each crossing >= 0.35 m (labels cannot flip);
* pairwise distance >= 0.5 m at every timestep (collision-free).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .braid import BraidWord, CrossingClass, Generator, word_from_generators
from .core import AgentId, AgentState, PredictionSet, Scene, Trajectory, wrap_angle
from .errors import InfeasibleParameters

TEMPLATE_KINDS = ("parallel", "crossing_paths", "overtake", "yield", "merge")

_MIN_GAP_AT_SAMPLE = 1e-4
_MIN_ROOT_SEPARATION_STEPS = 3.0
_MIN_SLOPE_AT_ROOT = 1.0
_MIN_LATERAL_AT_CROSS = 0.35
_MIN_PAIR_DISTANCE = 0.5
_MAX_ATTEMPTS = 80


@dataclass(frozen=True)
class ScenarioTemplate:
    """Parameter ranges for one scenario kind.

    ``crossing_fraction_range`` places crossings as a fraction of the future
    window; ``curved_fraction`` is the share of arc-motion draws (used by
    crossing_paths); ``accel_range`` adds future-only acceleration jitter so
    the outcome is not readable from the past.
    """

    kind: str
    seed: int = 0
    past_horizon: int = 10
    future_horizon: int = 30
    timestep_duration: float = 0.1
    speed_range: tuple[float, float] = (5.0, 12.0)
    lateral_offset_range: tuple[float, float] = (1.0, 3.0)
    crossing_fraction_range: tuple[float, float] = (0.3, 0.7)
    accel_range: tuple[float, float] = (-1.5, 1.5)
    curved_fraction: float = 0.25

    def __post_init__(self) -> None:
        if self.kind not in TEMPLATE_KINDS:
            raise ValueError(f"unknown template kind {self.kind!r}; pick from {TEMPLATE_KINDS}")


@dataclass(frozen=True)
class SynthScene:
    """Generated scene plus its construction-derived expectations."""

    scene: Scene
    expected_edges: dict[tuple[AgentId, AgentId], CrossingClass]
    expected_word: BraidWord


class _LineMotion:
    """Straight motion: constant speed in the past, optional constant
    acceleration from tau = 0 on (speed stays positive by construction).
    ``pos`` accepts scalars or numpy arrays."""

    def __init__(self, p0: tuple[float, float], theta: float, v0: float, accel: float = 0.0):
        self.p0 = p0
        self.theta = theta
        self.v0 = v0
        self.accel = accel
        self._c = math.cos(theta)
        self._s = math.sin(theta)

    def pos(self, tau):
        s = np.where(tau <= 0.0, self.v0 * tau, self.v0 * tau + 0.5 * self.accel * tau * tau)
        return (self.p0[0] + self._c * s, self.p0[1] + self._s * s)

    def heading(self, tau: float) -> float:
        return wrap_angle(self.theta)

    def min_speed(self, horizon: float) -> float:
        return self.v0 if self.accel >= 0.0 else self.v0 + self.accel * horizon


class _ArcMotion:
    """Constant-speed circular motion (also in the past)."""

    def __init__(self, center: tuple[float, float], radius: float, phi0: float, omega: float):
        self.center = center
        self.radius = radius
        self.phi0 = phi0
        self.omega = omega

    def pos(self, tau):
        phi = self.phi0 + self.omega * tau
        return (self.center[0] + self.radius * np.cos(phi), self.center[1] + self.radius * np.sin(phi))

    def heading(self, tau: float) -> float:
        phi = self.phi0 + self.omega * tau
        return wrap_angle(phi + math.copysign(math.pi / 2.0, self.omega))

    def min_speed(self, horizon: float) -> float:
        return abs(self.omega) * self.radius


def _rotated(motion, psi: float, shift: tuple[float, float]):
    """Rigidly transform a motion (rotation by psi about the origin, then
    translation).  Keeps the analytic form exact."""
    c, s = math.cos(psi), math.sin(psi)

    def rot(p):
        return (c * p[0] - s * p[1] + shift[0], s * p[0] + c * p[1] + shift[1])

    if isinstance(motion, _LineMotion):
        return _LineMotion(rot(motion.p0), wrap_angle(motion.theta + psi), motion.v0, motion.accel)
    return _ArcMotion(rot(motion.center), motion.radius, wrap_angle(motion.phi0 + psi), motion.omega)


def _isolated_roots(f, lo: float, hi: float, steps: int) -> list[float] | None:
    """Simple roots of a continuous scalar function (vectorized over numpy
    arrays) by fine sign scanning and bisection.  Returns None when a scan
    value sits suspiciously close to zero or a root's slope is too shallow
    (caller resamples rather than risking a missed or drifting crossing)."""
    xs = np.linspace(lo, hi, steps + 1)
    vals = np.asarray(f(xs), dtype=np.float64)
    if np.abs(vals).min() < 1e-12:
        return None
    flips = np.nonzero(np.signbit(vals[:-1]) != np.signbit(vals[1:]))[0]
    roots: list[float] = []
    for k in flips:
        lo_, hi_ = float(xs[k]), float(xs[k + 1])
        fa = float(vals[k])
        for _ in range(90):
            mid = 0.5 * (lo_ + hi_)
            fm = float(f(mid))
            if (fa > 0) != (fm > 0):
                hi_ = mid
            else:
                lo_ = mid
                fa = fm
        r = 0.5 * (lo_ + hi_)
        h = 1e-6
        slope = (float(f(r + h)) - float(f(r - h))) / (2.0 * h)
        if abs(slope) < _MIN_SLOPE_AT_ROOT:
            return None
        roots.append(r)
    return roots


def _gap_functions(mi, mj, frame_motion):
    """Longitudinal/lateral gap of i relative to j in the t = 0 frame of
    ``frame_motion`` (exact continuous functions of tau)."""
    th = frame_motion.heading(0.0)
    c, s = math.cos(th), math.sin(th)

    def lon(tau):
        xi, yi = mi.pos(tau)
        xj, yj = mj.pos(tau)
        return c * (xi - xj) + s * (yi - yj)

    def lat(tau):
        xi, yi = mi.pos(tau)
        xj, yj = mj.pos(tau)
        return -s * (xi - xj) + c * (yi - yj)

    return lon, lat


def _expected_pair_label(mi, mj, dt: float, t_f: int) -> CrossingClass | None:
    """Label forced by the continuous construction, or None when margins are
    too thin to guarantee the sampled pipeline agrees."""
    lon, lat = _gap_functions(mi, mj, mj)
    horizon = t_f * dt
    sample_gaps = np.asarray(lon(np.arange(1, t_f + 1, dtype=np.float64) * dt))
    if np.abs(sample_gaps).min() < _MIN_GAP_AT_SAMPLE:
        return None
    roots = _isolated_roots(lon, dt, horizon, 60 * t_f)
    if roots is None:
        return None
    if not roots:
        return CrossingClass.NO_CROSSING
    sep = _MIN_ROOT_SEPARATION_STEPS * dt
    if any(b - a < sep for a, b in zip(roots, roots[1:])):
        return None
    side = float(lat(roots[0]))
    if abs(side) < _MIN_LATERAL_AT_CROSS:
        return None
    return CrossingClass.OVER if side > 0 else CrossingClass.BELOW


def _expected_word(motions, ids, dt: float, t_f: int) -> BraidWord | None:
    """Scene-frame braid word forced by the continuous construction."""
    n = len(motions)
    horizon = t_f * dt
    sep = _MIN_ROOT_SEPARATION_STEPS * dt
    samples = np.arange(0, t_f + 1, dtype=np.float64) * dt

    x0 = [float(np.asarray(m.pos(0.0)[0])) for m in motions]
    order = sorted(range(n), key=lambda a: (x0[a], str(ids[a])))

    events: list[tuple[float, int, int]] = []
    for a in range(n):
        for b in range(a + 1, n):
            def h(tau, a=a, b=b):
                return motions[a].pos(tau)[0] - motions[b].pos(tau)[0]

            if np.abs(np.asarray(h(samples))).min() < _MIN_GAP_AT_SAMPLE:
                return None
            roots = _isolated_roots(h, 0.0, horizon, 60 * t_f)
            if roots is None:
                return None
            for r in roots:
                events.append((r, a, b))

    events.sort()
    if any(tb - ta < sep for (ta, _, _), (tb, _, _) in zip(events, events[1:])):
        return None

    pos = [0] * n
    for slot, a in enumerate(order):
        pos[a] = slot
    cur = list(order)
    gens: list[Generator] = []
    for tau, a, b in events:
        pa, pb = pos[a], pos[b]
        if abs(pa - pb) != 1:
            return None  # construction degenerate; resample
        left_slot = min(pa, pb)
        left, right = cur[left_slot], cur[left_slot + 1]
        dy = float(motions[left].pos(tau)[1]) - float(motions[right].pos(tau)[1])
        if abs(dy) < _MIN_LATERAL_AT_CROSS:
            return None
        gens.append(Generator(index=left_slot + 1, sign=1 if dy > 0 else -1, t_star=tau / dt))
        cur[left_slot], cur[left_slot + 1] = right, left
        pos[right], pos[left] = left_slot, left_slot + 1
    return word_from_generators(n, gens, strand_order=tuple(ids[a] for a in order))


def _sample_scene(motions, ids, template: ScenarioTemplate, scene_id: str) -> Scene:
    dt = template.timestep_duration
    agents = []
    for m, aid in zip(motions, ids):
        states = []
        for t in range(1 - template.past_horizon, template.future_horizon + 1):
            x, y = m.pos(t * dt)
            states.append(
                AgentState(t=t, x=float(x), y=float(y), heading=float(m.heading(t * dt)), valid=True)
            )
        agents.append(Trajectory(agent_id=aid, states=tuple(states)))
    return Scene(
        scene_id=scene_id,
        agents=tuple(agents),
        past_horizon=template.past_horizon,
        future_horizon=template.future_horizon,
        timestep_duration=dt,
    )


def _collision_free(scene: Scene) -> bool:
    pts = {traj.agent_id: {s.t: (s.x, s.y) for s in traj.states} for traj in scene.agents}
    ids = list(pts.keys())
    for ai in range(len(ids)):
        for bi in range(ai + 1, len(ids)):
            pa, pb = pts[ids[ai]], pts[ids[bi]]
            for t in pa.keys() & pb.keys():
                if math.dist(pa[t], pb[t]) < _MIN_PAIR_DISTANCE:
                    return False
    return True


def _min_speed_ok(motions, horizon: float) -> bool:
    return all(m.min_speed(horizon) >= 0.3 for m in motions)


def _draw_parallel(rng: np.random.Generator, tpl: ScenarioTemplate):
    horizon = tpl.future_horizon * tpl.timestep_duration
    n = int(rng.integers(2, 4))
    lanes = [0.0, 3.5, 7.0][:n]
    for _ in range(40):
        xs = rng.uniform(-4.0, 4.0, size=n)
        vs = rng.uniform(*tpl.speed_range, size=n)
        ok = True
        for a in range(n):
            for b in range(a + 1, n):
                g0 = xs[a] - xs[b]
                g1 = g0 + (vs[a] - vs[b]) * horizon
                if abs(g0) < 0.4 or abs(g1) < 0.4 or (g0 > 0) != (g1 > 0):
                    ok = False
        if ok:
            return [_LineMotion((float(x), lane), 0.0, float(v)) for x, lane, v in zip(xs, lanes, vs)]
    return None


def _draw_overtake(rng: np.random.Generator, tpl: ScenarioTemplate):
    horizon = tpl.future_horizon * tpl.timestep_duration
    v_front = rng.uniform(*tpl.speed_range)
    dv = rng.uniform(2.5, 5.0)
    frac = rng.uniform(*tpl.crossing_fraction_range)
    gap = dv * frac * horizon
    off = rng.uniform(*tpl.lateral_offset_range) * (1 if rng.random() < 0.5 else -1)
    front = _LineMotion((0.0, 0.0), 0.0, float(v_front))
    rear = _LineMotion((-gap, float(off)), 0.0, float(v_front + dv))
    return [rear, front]


def _draw_crossing_straight(rng: np.random.Generator, tpl: ScenarioTemplate):
    horizon = tpl.future_horizon * tpl.timestep_duration
    theta_b = rng.uniform(1.1, 2.0)
    v_a = rng.uniform(*tpl.speed_range)
    v_b = rng.uniform(*tpl.speed_range)
    acc_a = rng.uniform(*tpl.accel_range)
    acc_b = rng.uniform(*tpl.accel_range)
    frac = rng.uniform(*tpl.crossing_fraction_range)
    first = "a" if rng.random() < 0.5 else "b"
    tau_first = frac * horizon
    tau_second = tau_first + rng.uniform(0.12, 0.3) * horizon
    tau_a, tau_b = (tau_first, tau_second) if first == "a" else (tau_second, tau_first)
    if max(tau_a, tau_b) > 0.93 * horizon:
        return None
    d_a = v_a * tau_a + 0.5 * acc_a * tau_a * tau_a
    d_b = v_b * tau_b + 0.5 * acc_b * tau_b * tau_b
    if d_a < 1.0 or d_b < 1.0:
        return None
    a = _LineMotion((-d_a, 0.0), 0.0, float(v_a), float(acc_a))
    ca, sa = math.cos(theta_b), math.sin(theta_b)
    b = _LineMotion((-d_b * ca, -d_b * sa), float(theta_b), float(v_b), float(acc_b))
    return [a, b]


def _draw_crossing_arc(rng: np.random.Generator, tpl: ScenarioTemplate):
    horizon = tpl.future_horizon * tpl.timestep_duration
    v_b = rng.uniform(4.0, 7.0)
    v_a = v_b + rng.uniform(2.5, 5.0)
    radius = rng.uniform(8.0, 15.0)
    omega = v_b / radius
    frac = rng.uniform(*tpl.crossing_fraction_range)
    tau_star = frac * horizon
    gap = v_a * tau_star - radius * math.sin(omega * tau_star)
    if gap < 1.5:
        return None
    a = _LineMotion((0.0, 0.0), 0.0, float(v_a))
    b = _ArcMotion(center=(float(gap), radius), radius=float(radius), phi0=-math.pi / 2.0, omega=float(omega))
    return [a, b]


def _draw_yield(rng: np.random.Generator, tpl: ScenarioTemplate):
    horizon = tpl.future_horizon * tpl.timestep_duration
    v_a = rng.uniform(*tpl.speed_range)
    v_b0 = rng.uniform(*tpl.speed_range)
    frac = rng.uniform(0.3, 0.55)
    tau_a = frac * horizon
    delay = rng.uniform(0.15, 0.3) * horizon
    tau_target = tau_a + delay
    if tau_target > 0.93 * horizon:
        return None
    y_b0 = -(v_b0 * (tau_a + rng.uniform(-0.05, 0.05) * horizon))  # nominal conflict without braking
    acc_b = -2.0 * (y_b0 + v_b0 * tau_target) / (tau_target * tau_target)
    if acc_b >= 0.0 or v_b0 + acc_b * horizon < 0.5:
        return None
    a = _LineMotion((-v_a * tau_a, 0.0), 0.0, float(v_a))
    b = _LineMotion((0.0, float(y_b0)), math.pi / 2.0, float(v_b0), float(acc_b))
    return [a, b]


def _draw_merge(rng: np.random.Generator, tpl: ScenarioTemplate):
    side = 1 if rng.random() < 0.5 else -1
    v_a = rng.uniform(4.5, 6.0)
    v_b = rng.uniform(0.6, 1.0)
    angle = -side * rng.uniform(1.1, 1.3)  # creeping toward the lane, slightly forward
    gap = rng.uniform(2.0, 4.0)
    a = _LineMotion((0.0, 0.0), 0.0, float(v_a))
    b = _LineMotion((float(gap), side * 3.5), float(angle), float(v_b))
    return [a, b]


def _expected_for(motions, ids, tpl: ScenarioTemplate, delta: float = 50.0):
    """All-ordered-pair expected labels (within delta at t = 0) plus the
    scene-frame word; None when any margin is too thin."""
    dt = tpl.timestep_duration
    t_f = tpl.future_horizon
    edges: dict[tuple[AgentId, AgentId], CrossingClass] = {}
    for i, mi in enumerate(motions):
        for j, mj in enumerate(motions):
            if i == j:
                continue
            pi = (float(np.asarray(mi.pos(0.0)[0])), float(np.asarray(mi.pos(0.0)[1])))
            pj = (float(np.asarray(mj.pos(0.0)[0])), float(np.asarray(mj.pos(0.0)[1])))
            if math.dist(pi, pj) > delta:
                continue
            label = _expected_pair_label(mi, mj, dt, t_f)
            if label is None:
                return None
            edges[(ids[i], ids[j])] = label
    word = _expected_word(motions, ids, dt, t_f)
    if word is None:
        return None
    return edges, word


_KIND_CHECKS = {
    "parallel": lambda labels: all(v is CrossingClass.NO_CROSSING for v in labels),
    "overtake": lambda labels: sum(v is not CrossingClass.NO_CROSSING for v in labels) == 2,
    "yield": lambda labels: sum(v is not CrossingClass.NO_CROSSING for v in labels) == 2,
    "merge": lambda labels: sum(v is not CrossingClass.NO_CROSSING for v in labels) == 1,
    "crossing_paths": lambda labels: sum(v is not CrossingClass.NO_CROSSING for v in labels) >= 1,
}


def generate(template: ScenarioTemplate, n_scenes: int) -> list[SynthScene]:
    """Seed-deterministic scenes with construction-derived expectations.

    Raises:
        InfeasibleParameters: a draw failed the margin/collision checks more
            than the retry budget allows.
    """
    rng = np.random.default_rng(template.seed)
    out: list[SynthScene] = []
    for index in range(n_scenes):
        scene_id = f"{template.kind}-{template.seed}-{index:05d}"
        for _attempt in range(_MAX_ATTEMPTS):
            if template.kind == "parallel":
                motions = _draw_parallel(rng, template)
            elif template.kind == "overtake":
                motions = _draw_overtake(rng, template)
            elif template.kind == "yield":
                motions = _draw_yield(rng, template)
            elif template.kind == "merge":
                motions = _draw_merge(rng, template)
            elif rng.random() < template.curved_fraction:
                motions = _draw_crossing_arc(rng, template)
            else:
                motions = _draw_crossing_straight(rng, template)
            if motions is None:
                continue
            horizon = template.future_horizon * template.timestep_duration
            if not _min_speed_ok(motions, horizon):
                continue
            psi = float(rng.uniform(-math.pi, math.pi))
            shift = (float(rng.uniform(-40.0, 40.0)), float(rng.uniform(-40.0, 40.0)))
            motions = [_rotated(m, psi, shift) for m in motions]
            ids = [f"a{k}" for k in range(len(motions))]
            expected = _expected_for(motions, ids, template)
            if expected is None:
                continue
            edges, word = expected
            if not _KIND_CHECKS[template.kind](list(edges.values())):
                continue
            scene = _sample_scene(motions, ids, template, scene_id)
            if not _collision_free(scene):
                continue
            out.append(SynthScene(scene=scene, expected_edges=edges, expected_word=word))
            break
        else:
            raise InfeasibleParameters(
                f"template {template.kind!r}: no feasible draw for scene {index} "
                f"after {_MAX_ATTEMPTS} attempts"
            )
    return out


def predictions_from_scene(scene: Scene, num_modes: int = 1) -> PredictionSet:
    """Ground truth replicated across modes (uniform probabilities)."""
    trajectories = {}
    for traj in scene.agents:
        pts = []
        for t in range(1, scene.future_horizon + 1):
            st = traj.state_at(t)
            if st is None or not st.valid:
                raise InfeasibleParameters(f"agent {traj.agent_id!r} lacks a full future")
            pts.append((st.x, st.y))
        arr = np.asarray(pts, dtype=np.float64)
        trajectories[traj.agent_id] = np.repeat(arr[None, :, :], num_modes, axis=0)
    return PredictionSet(
        scene_id=scene.scene_id,
        num_modes=num_modes,
        mode_probs=tuple([1.0 / num_modes] * num_modes),
        trajectories=trajectories,
    )


def perturb(preds: PredictionSet, noise_scale: float, seed: int) -> PredictionSet:
    """Add seed-deterministic smooth noise to every predicted trajectory.

    Noise is a 3-harmonic sine series per coordinate, amplitude proportional
    to ``noise_scale``; mode probabilities pass through exactly and
    ``noise_scale = 0`` returns the input unchanged.
    """
    if noise_scale < 0:
        raise ValueError("noise_scale must be >= 0")
    if noise_scale == 0.0:
        return preds
    rng = np.random.default_rng(seed)
    t_f = preds.horizon
    phase = np.arange(1, t_f + 1, dtype=np.float64) / (t_f + 1)
    basis = np.stack([np.sin(math.pi * m * phase) for m in (1, 2, 3)])  # (3, T_F)
    trajectories = {}
    for aid in preds.trajectories:
        arr = preds.trajectories[aid]
        coeffs = rng.normal(0.0, noise_scale, size=(arr.shape[0], 2, 3)) / np.array([1.0, 2.0, 3.0])
        noise = np.einsum("kcm,mt->ktc", coeffs, basis)
        trajectories[aid] = arr + noise
    return PredictionSet(
        scene_id=preds.scene_id,
        num_modes=preds.num_modes,
        mode_probs=preds.mode_probs,
        trajectories=trajectories,
    )
