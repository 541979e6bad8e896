"""Episode rollouts of a controller-under-test over one terrain.

The built-in evaluator is a deterministic planar proxy walker: state
(x, y, yaw), omnidirectional velocity commands pointed at a fixed goal,
and terrain coupling through the local height gradient. It is not a
physics simulation; it exists so every penalty channel responds to the
terrain while staying cheap and bit-reproducible. Higher-fidelity
evaluators attach through the wire protocol in `external`.

Penalty channel order everywhere: angular-velocity error, linear-x
error, linear-y error, contact force, stumble.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .terrain import Heightmap

PENALTY_CHANNELS = ("ang_vel", "lin_vel_x", "lin_vel_y", "contact_force", "stumble")
N_PENALTIES = 5

DT_S = 0.005
HORIZON_S = 20.0
DEFAULT_EPISODES = 20

UNIT_SCALE = (1.0, 1.0, 1.0, 1.0, 1.0)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


class EvaluationError(RuntimeError):
    """An evaluator failed to produce an episode result."""

    def __init__(self, message: str, episode_index: int | None = None):
        super().__init__(message)
        self.episode_index = episode_index


def fnv1a64(*parts: int) -> int:
    """64-bit FNV-1a over the little-endian byte concatenation of ints."""
    h = _FNV_OFFSET
    for part in parts:
        for b in (int(part) & _U64).to_bytes(8, "little"):
            h ^= b
            h = (h * _FNV_PRIME) & _U64
    return h


def episode_seed(seed: int, episode_index: int) -> int:
    """Deterministic, platform-stable sub-seed for one episode."""
    return fnv1a64(seed, episode_index)


@dataclass(frozen=True)
class WalkerParams:
    """Proxy-walker constants; defaults are the calibrated house values."""

    v_cmd: float = 0.75  # commanded speed toward the goal, m/s
    k_omega: float = 2.0  # heading-error feedback gain
    omega_max: float = 2.0  # turn-rate command clamp, rad/s
    k_slope: float = 1.5  # forward-speed loss per unit slope
    k_drift: float = 0.5  # lateral slide per unit cross-slope
    stride_s: float = 0.4  # time between foot-placement checks
    lookahead_m: float = 0.35  # foot-placement probe distance
    step_max_m: float = 0.2  # tallest rise a stride can climb
    contact_drop_m: float = 0.05  # drops beyond this register impact force
    contact_coeff: float = 10.0  # impact force per meter of drop
    fall_drop_m: float = 0.5  # drops beyond this are a pelvis strike
    slope_probe_m: float = 0.15  # half-width of the gradient probe
    goal_x: float = 15.0
    goal_y: float = 4.0
    start_x: float = 1.0
    start_y_low: float = 3.5
    start_y_high: float = 4.5
    yaw_jitter: float = 0.1

    def to_array(self) -> np.ndarray:
        return np.array(
            [self.v_cmd, self.k_omega, self.omega_max, self.k_slope,
             self.k_drift, self.lookahead_m, self.step_max_m,
             self.contact_drop_m, self.contact_coeff, self.fall_drop_m,
             self.goal_x, self.goal_y, self.slope_probe_m],
            dtype=np.float64,
        )


@dataclass(frozen=True)
class InitialState:
    x: float
    y: float
    yaw: float


@dataclass(frozen=True)
class EpisodeResult:
    """Raw (unscaled) outcome of a single rollout."""

    raw_penalties: tuple[float, float, float, float, float]
    collision: bool
    collision_count: int
    episode_steps: int
    final_x: float = math.nan
    final_y: float = math.nan
    goal_reached: bool = False


@dataclass(frozen=True)
class EvaluationReport:
    """Scaled penalty statistics over a fixed number of episodes."""

    mean_penalties: tuple[float, ...]
    std_penalties: tuple[float, ...]
    any_collision: bool
    non_collision_rate: float
    mean_collision_count: float
    episodes: tuple[EpisodeResult, ...]


def sample_initial_state(seed: int, params: WalkerParams = WalkerParams()) -> InitialState:
    """Start pose with the episode's randomness; deterministic in seed."""
    rng = np.random.default_rng(seed)
    y = rng.uniform(params.start_y_low, params.start_y_high)
    yaw = rng.uniform(-params.yaw_jitter, params.yaw_jitter)
    return InitialState(x=params.start_x, y=float(y), yaw=float(yaw))


@njit(cache=True, parallel=True)
def _rollout_kernel(heights, res, inits, wp, dt, n_steps, stride_steps,
                    out_pen, out_coll, out_count, out_steps, out_final):  # pragma: no cover - compiled
    nx, ny = heights.shape
    x_max = nx * res
    y_max = ny * res
    for e in prange(inits.shape[0]):
        x = inits[e, 0]
        y = inits[e, 1]
        yaw = inits[e, 2]
        p_ang = 0.0
        p_vx = 0.0
        p_vy = 0.0
        p_contact = 0.0
        p_stumble = 0.0
        collided = False
        n_contacts = 0
        blocked = False
        goal = False
        steps = 0
        for s in range(n_steps):
            if s % stride_steps == 0:
                # foot placement: probe the terrain one look-ahead in front
                la_x = x + math.cos(yaw) * wp[5]
                la_y = y + math.sin(yaw) * wp[5]
                i0 = min(max(int(x / res), 0), nx - 1)
                j0 = min(max(int(y / res), 0), ny - 1)
                i1 = min(max(int(la_x / res), 0), nx - 1)
                j1 = min(max(int(la_y / res), 0), ny - 1)
                rise = heights[i1, j1] - heights[i0, j0]
                was_blocked = blocked
                if rise > wp[6]:
                    blocked = True
                    if not was_blocked:
                        # a fresh strike; repeated probing of the same face
                        # while stalled is not a new stumble
                        p_stumble += 1.0
                        if rise <= wp[9]:
                            n_contacts += 1
                else:
                    blocked = False
                    drop = -rise
                    if drop > wp[7]:
                        p_contact += wp[8] * drop
                    if drop > wp[9]:
                        collided = True
                        break
            # goal-relative commands
            bearing = math.atan2(wp[11] - y, wp[10] - x)
            he = bearing - yaw
            if he > math.pi:
                he -= 2.0 * math.pi
            elif he < -math.pi:
                he += 2.0 * math.pi
            omega_cmd = wp[1] * he
            if omega_cmd > wp[2]:
                omega_cmd = wp[2]
            elif omega_cmd < -wp[2]:
                omega_cmd = -wp[2]
            vx_cmd = wp[0] * math.cos(he)
            vy_cmd = wp[0] * math.sin(he)
            # terrain response: central-difference gradient at stride scale,
            # so cell-sized discontinuities do not read as infinite slopes
            probe = wp[12]
            if probe < res:
                probe = res
            ixp = min(max(int((x + probe) / res), 0), nx - 1)
            ixm = min(max(int((x - probe) / res), 0), nx - 1)
            jyc = min(max(int(y / res), 0), ny - 1)
            ixc = min(max(int(x / res), 0), nx - 1)
            jyp = min(max(int((y + probe) / res), 0), ny - 1)
            jym = min(max(int((y - probe) / res), 0), ny - 1)
            gx = (heights[ixp, jyc] - heights[ixm, jyc]) / (2.0 * probe)
            gy = (heights[ixc, jyp] - heights[ixc, jym]) / (2.0 * probe)
            # only the uphill component along the body slows the walk;
            # walking off a ledge is handled by the foot-placement events
            uphill = math.cos(yaw) * gx + math.sin(yaw) * gy
            if uphill < 0.0:
                uphill = 0.0
            sf = 1.0 - wp[3] * uphill
            if sf < 0.0:
                sf = 0.0
            cross = -math.sin(yaw) * gx + math.cos(yaw) * gy
            omega_act = omega_cmd / (1.0 + abs(cross))
            if blocked:
                vx_act = 0.0
            else:
                vx_act = vx_cmd * sf
            vy_act = vy_cmd * sf - wp[4] * cross
            p_ang += abs(omega_cmd - omega_act) * dt
            p_vx += abs(vx_cmd - vx_act) * dt
            p_vy += abs(vy_cmd - vy_act) * dt
            cy = math.cos(yaw)
            sy = math.sin(yaw)
            x += (cy * vx_act - sy * vy_act) * dt
            y += (sy * vx_act + cy * vy_act) * dt
            yaw += omega_act * dt
            if yaw > math.pi:
                yaw -= 2.0 * math.pi
            elif yaw < -math.pi:
                yaw += 2.0 * math.pi
            if x < 0.0:
                x = 0.0
            elif x > x_max:
                x = x_max
            if y < 0.0:
                y = 0.0
            elif y > y_max:
                y = y_max
            steps = s + 1
            if x >= wp[10]:
                goal = True
                break
        out_pen[e, 0] = p_ang
        out_pen[e, 1] = p_vx
        out_pen[e, 2] = p_vy
        out_pen[e, 3] = p_contact
        out_pen[e, 4] = p_stumble
        out_coll[e] = 1 if collided else 0
        out_count[e] = n_contacts
        out_steps[e] = steps
        out_final[e, 0] = x
        out_final[e, 1] = y
        out_final[e, 2] = 1.0 if goal else 0.0


def _run_batch(heightmap: Heightmap, inits: np.ndarray, params: WalkerParams,
               dt: float, horizon: float) -> list[EpisodeResult]:
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    n_steps = int(round(horizon / dt))
    stride_steps = max(1, int(round(params.stride_s / dt)))
    n = inits.shape[0]
    out_pen = np.empty((n, N_PENALTIES), dtype=np.float64)
    out_coll = np.empty(n, dtype=np.uint8)
    out_count = np.empty(n, dtype=np.int64)
    out_steps = np.empty(n, dtype=np.int64)
    out_final = np.empty((n, 3), dtype=np.float64)
    _rollout_kernel(
        np.ascontiguousarray(heightmap.heights, dtype=np.float64),
        float(heightmap.resolution_m), inits, params.to_array(), float(dt),
        n_steps, stride_steps, out_pen, out_coll, out_count, out_steps, out_final,
    )
    results = []
    for e in range(n):
        results.append(EpisodeResult(
            raw_penalties=tuple(float(v) for v in out_pen[e]),
            collision=bool(out_coll[e]),
            collision_count=int(out_count[e]),
            episode_steps=int(out_steps[e]),
            final_x=float(out_final[e, 0]),
            final_y=float(out_final[e, 1]),
            goal_reached=bool(out_final[e, 2] > 0.5),
        ))
    return results


def proxy_walker_rollout(heightmap: Heightmap, init: InitialState,
                         dt: float = DT_S, horizon: float = HORIZON_S,
                         params: WalkerParams = WalkerParams()) -> EpisodeResult:
    """Run one deterministic proxy-walker episode from a given start pose."""
    inits = np.array([[init.x, init.y, init.yaw]], dtype=np.float64)
    return _run_batch(heightmap, inits, params, dt, horizon)[0]


class BuiltinWalker:
    """Built-in black-box evaluator backed by the proxy walker."""

    def __init__(self, params: WalkerParams = WalkerParams()):
        self.params = params

    def run_episode(self, heightmap: Heightmap, seed: int,
                    dt: float = DT_S, horizon: float = HORIZON_S) -> EpisodeResult:
        init = sample_initial_state(seed, self.params)
        return proxy_walker_rollout(heightmap, init, dt, horizon, self.params)

    def run_episodes(self, heightmap: Heightmap, seeds,
                     dt: float = DT_S, horizon: float = HORIZON_S) -> list[EpisodeResult]:
        inits = np.empty((len(seeds), 3), dtype=np.float64)
        for k, s in enumerate(seeds):
            init = sample_initial_state(s, self.params)
            inits[k, 0] = init.x
            inits[k, 1] = init.y
            inits[k, 2] = init.yaw
        return _run_batch(heightmap, inits, self.params, dt, horizon)

    def close(self) -> None:
        pass


def aggregate_report(episodes, scale=UNIT_SCALE) -> EvaluationReport:
    """Fold per-episode raw penalties into the scaled report statistics.

    This is the canonical aggregation: report fields always recompute
    exactly from the stored episode records with the run's scale.
    """
    episodes = tuple(episodes)
    if not episodes:
        raise ValueError("at least one episode is required")
    scale_arr = np.asarray(scale, dtype=np.float64)
    if scale_arr.shape != (N_PENALTIES,):
        raise ValueError(f"scale must have {N_PENALTIES} entries")
    raw = np.array([e.raw_penalties for e in episodes], dtype=np.float64)
    scaled = raw * scale_arr
    collisions = np.array([e.collision for e in episodes], dtype=bool)
    counts = np.array([e.collision_count for e in episodes], dtype=np.float64)
    return EvaluationReport(
        mean_penalties=tuple(float(v) for v in scaled.mean(axis=0)),
        std_penalties=tuple(float(v) for v in scaled.std(axis=0)),
        any_collision=bool(collisions.any()),
        non_collision_rate=float((~collisions).sum() / len(episodes)),
        mean_collision_count=float(counts.mean()),
        episodes=episodes,
    )


def report_to_dict(report: EvaluationReport) -> dict:
    return {
        "mean_penalties": list(report.mean_penalties),
        "std_penalties": list(report.std_penalties),
        "any_collision": report.any_collision,
        "non_collision_rate": report.non_collision_rate,
        "mean_collision_count": report.mean_collision_count,
        "episodes": [
            {
                "raw_penalties": list(e.raw_penalties),
                "collision": e.collision,
                "collision_count": e.collision_count,
                "episode_steps": e.episode_steps,
                "final_x": e.final_x,
                "final_y": e.final_y,
                "goal_reached": e.goal_reached,
            }
            for e in report.episodes
        ],
    }


def report_from_dict(doc: dict) -> EvaluationReport:
    return EvaluationReport(
        mean_penalties=tuple(doc["mean_penalties"]),
        std_penalties=tuple(doc["std_penalties"]),
        any_collision=doc["any_collision"],
        non_collision_rate=doc["non_collision_rate"],
        mean_collision_count=doc["mean_collision_count"],
        episodes=tuple(
            EpisodeResult(
                raw_penalties=tuple(e["raw_penalties"]),
                collision=e["collision"],
                collision_count=e["collision_count"],
                episode_steps=e["episode_steps"],
                final_x=e["final_x"],
                final_y=e["final_y"],
                goal_reached=e["goal_reached"],
            )
            for e in doc["episodes"]
        ),
    )


def evaluate_terrain(heightmap: Heightmap, evaluator, episodes: int = DEFAULT_EPISODES,
                     seed: int = 0, scale=UNIT_SCALE,
                     dt: float = DT_S, horizon: float = HORIZON_S) -> EvaluationReport:
    """Evaluate one terrain over repeated randomized episodes.

    Episode sub-seeds derive deterministically from `seed`, so identical
    (heightmap, seed) inputs reproduce identical reports with the
    built-in evaluator.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    seeds = [episode_seed(seed, i) for i in range(episodes)]
    if hasattr(evaluator, "run_episodes"):
        results = evaluator.run_episodes(heightmap, seeds, dt, horizon)
    else:
        results = []
        for i, s in enumerate(seeds):
            try:
                results.append(evaluator.run_episode(heightmap, s, dt, horizon))
            except EvaluationError as exc:
                if exc.episode_index is None:
                    exc.episode_index = i
                raise
    return aggregate_report(results, scale)
