"""Headed social force model with the quadrant soft-contact border model.

Forces act in the world frame; the locomotion model converts them into a
forward/orthogonal input pair in the agent's body frame plus a heading
torque, preferring forward motion along the gazing direction.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from sarsim.mapgrid import GridMap, line_of_sight

_TINY = 1e-9

# Observed traversal statistics (means) used as defaults: desired speed and
# in-squad distance under free and restricted vision.
V_DES_FREE = 1.5
V_DES_RESTRICTED = 0.326
SQUAD_DIST_FREE = 0.634
SQUAD_DIST_RESTRICTED = 0.275
CONE_RANGE_FREE = 50.0
CONE_RANGE_RESTRICTED = 2.0


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


def rotation(theta: float) -> np.ndarray:
    """Body-to-world rotation matrix; columns are e_x(theta), e_y(theta)."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass
class AgentState:
    """Pose and body-frame velocity of one agent.

    v = (vx, vy) is expressed in the body frame: vx forward along the
    heading, vy orthogonal (left). Heading is kept in (-pi, pi].
    """

    x: float
    y: float
    theta: float
    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0
    mass: float = 80.0
    inertia: float = 2.5
    radius: float = 0.25

    def __post_init__(self):
        if self.mass <= 0 or self.inertia <= 0 or self.radius <= 0:
            raise ValueError("mass, inertia and radius must be positive")
        self.theta = wrap_angle(self.theta)

    @property
    def position(self) -> tuple[float, float]:
        return self.x, self.y

    def world_velocity(self) -> np.ndarray:
        return rotation(self.theta) @ np.array([self.vx, self.vy])


@dataclass
class ControlParams:
    """Locomotion gains and goal-force configuration.

    The torque gains are recomputed from the current goal-force magnitude
    (c_theta = I*k_lambda*|f_acc|, c_omega = I*(1+alpha)*sqrt(k_lambda*
    |f_acc|/alpha)) unless fixed overrides are given.
    """

    c_o: float = 1.0
    c_des: float = 500.0
    v_des: float = V_DES_FREE
    tau: float = 0.5
    v_des_orth: float = 0.0
    k_lambda: float = 0.3
    alpha: float = 3.0
    fixed_c_theta: float | None = None
    fixed_c_omega: float | None = None

    def __post_init__(self):
        if self.c_o < 0 or self.c_des < 0:
            raise ValueError("c_o and c_des must be >= 0")
        if self.v_des <= 0 or self.tau <= 0:
            raise ValueError("v_des and tau must be > 0")

    def torque_gains(self, inertia: float, f_acc_norm: float) -> tuple[float, float]:
        if self.fixed_c_theta is not None and self.fixed_c_omega is not None:
            return self.fixed_c_theta, self.fixed_c_omega
        drive = max(f_acc_norm, _TINY)
        c_theta = inertia * self.k_lambda * drive
        c_omega = inertia * (1.0 + self.alpha) * math.sqrt(
            self.k_lambda * drive / self.alpha)
        return c_theta, c_omega


@dataclass
class ContactParams:
    """Quadrant soft-contact model configuration."""

    c_s: float = 0.5
    phi0_border: float = 11.0
    c_border: float = 0.2
    phi0_soft: float = 1200.0
    d_min: float = 0.0
    quadrant_range: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.c_s <= 1.0:
            raise ValueError("c_s must lie in [0, 1]")
        if self.phi0_border <= 0 or self.c_border <= 0 or self.phi0_soft <= 0:
            raise ValueError("potentials and scaling must be > 0")
        if self.d_min < 0:
            raise ValueError("d_min must be >= 0")


@dataclass
class SocialParams:
    """Agent-agent repulsion (elliptical, velocity-dependent) and cohesion."""

    a_intra: float = 500.0
    a_inter: float = 2000.0
    b_range: float = 0.3
    aniso_dt: float = 0.5  # s; look-ahead of the elliptical specification
    k_coh: float = 2.5  # cohesion acceleration (force = k_coh * mass)
    d_coh: float = SQUAD_DIST_FREE
    force_cap: float = 4000.0

    def amplitude(self, same_squad: bool) -> float:
        return self.a_intra if same_squad else self.a_inter


@dataclass(frozen=True)
class ContactSample:
    """One closest-occupied-pixel contact in a quadrant around the heading."""

    point: tuple[float, float]  # occupied cell center
    distance: float  # Eq.-style distance: center distance minus pixel radius
    normal: tuple[float, float]  # unit, from obstacle toward agent
    tangent: tuple[float, float]  # unit, normal rotated +90 deg
    quadrant: int  # 0 ahead, 1 left, 2 behind, 3 right


@dataclass
class ForceBreakdown:
    f_acc: np.ndarray
    phi_acc: float
    f_agents: np.ndarray
    f_border: np.ndarray

    @property
    def f_total(self) -> np.ndarray:
        return self.f_acc + self.f_agents + self.f_border


def goal_force(a: AgentState, target: tuple[float, float] | None,
               cp: ControlParams) -> tuple[np.ndarray, float]:
    """Relaxation-style drive toward the target: m*(v_des*e_hat - pdot)/tau.

    Without a target (or a degenerate one on top of the agent) the force is
    pure braking, -m*pdot/tau. Returns the force and its phase; the phase of
    a vanishing force defaults to the current heading.
    """
    pdot = a.world_velocity()
    if target is None:
        desired = np.zeros(2)
    else:
        dx, dy = target[0] - a.x, target[1] - a.y
        norm = math.hypot(dx, dy)
        if norm < _TINY:
            desired = np.zeros(2)
        else:
            desired = cp.v_des / norm * np.array([dx, dy])
    f = a.mass * (desired - pdot) / cp.tau
    norm_f = float(np.hypot(f[0], f[1]))
    phase = math.atan2(f[1], f[0]) if norm_f > _TINY else a.theta
    return f, phase


def boundary_obstacle_cells(grid: GridMap) -> np.ndarray:
    """(M, 2) world centers of occupied cells adjacent to free space.

    Interior occupied cells can never be the closest obstacle to an agent in
    free space, so contact queries only need this boundary subset.
    """
    occ = grid.occupied
    free = ~occ
    exposed = np.zeros_like(occ)
    exposed[1:, :] |= occ[1:, :] & free[:-1, :]
    exposed[:-1, :] |= occ[:-1, :] & free[1:, :]
    exposed[:, 1:] |= occ[:, 1:] & free[:, :-1]
    exposed[:, :-1] |= occ[:, :-1] & free[:, 1:]
    iy, ix = np.nonzero(exposed)
    w = grid.resolution
    return np.column_stack((grid.origin[0] + (ix + 0.5) * w,
                            grid.origin[1] + (iy + 0.5) * w))


def _quadrant_index(rel_angle: float) -> int:
    return int(math.floor((rel_angle + math.pi / 4.0) / (math.pi / 2.0))) % 4


def contact_samples(a: AgentState, obstacle_points: np.ndarray, pixel_width: float,
                    cp: ContactParams) -> list[ContactSample]:
    """Closest obstacle pixel per quadrant around the gazing direction.

    Quadrant 0 is centered on the heading with boundaries at theta +- pi/4.
    Only pixels with center distance <= quadrant_range are considered. The
    contact distance shrinks the center distance by the conservative pixel
    radius sqrt(2)/2 * w.
    """
    if obstacle_points.size == 0:
        return []
    dx = obstacle_points[:, 0] - a.x
    dy = obstacle_points[:, 1] - a.y
    dist = np.hypot(dx, dy)
    in_range = dist <= cp.quadrant_range
    if not in_range.any():
        return []
    samples: dict[int, tuple[float, int]] = {}
    idxs = np.nonzero(in_range)[0]
    for i in idxs:
        if dist[i] < _TINY:
            continue  # agent center exactly on a pixel center: direction undefined
        rel = wrap_angle(math.atan2(dy[i], dx[i]) - a.theta)
        q = _quadrant_index(rel)
        cur = samples.get(q)
        if cur is None or dist[i] < cur[0]:
            samples[q] = (dist[i], i)
    out = []
    radius = 0.5 * math.sqrt(2.0) * pixel_width
    for q in sorted(samples):
        center_dist, i = samples[q]
        nx, ny = -dx[i] / center_dist, -dy[i] / center_dist
        out.append(ContactSample(
            point=(float(obstacle_points[i, 0]), float(obstacle_points[i, 1])),
            distance=float(center_dist - radius),
            normal=(float(nx), float(ny)),
            tangent=(float(-ny), float(nx)),
            quadrant=q))
    return out


def border_contacts(a: AgentState, grid: GridMap, cp: ContactParams) -> list[ContactSample]:
    """Contact samples against the full map (convenience over contact_samples)."""
    return contact_samples(a, boundary_obstacle_cells(grid), grid.resolution, cp)


def soft_potential(d: float, r: float, cp: ContactParams) -> float:
    if d > r:
        return 0.0
    if d <= cp.d_min:
        return (r - d) / (r - cp.d_min) * cp.phi0_soft
    return cp.phi0_soft


def border_force(sample: ContactSample, a: AgentState, cp: ContactParams
                 ) -> np.ndarray:
    """Partial border force: exponential potential plus the soft contact term.

    The soft term only engages at contact (d <= r); its tangential part
    scales with the agent's orthogonal body velocity and damps sliding.
    """
    d = sample.distance
    r = a.radius
    n = np.array(sample.normal)
    phi_b = cp.phi0_border * math.exp((r - d) / cp.c_border)
    f = phi_b * n
    if d <= r:
        phi_s = soft_potential(d, r, cp)
        t = np.array(sample.tangent)
        f = f + cp.c_s * phi_s * n + (1.0 - cp.c_s) * phi_s * a.vy * t
    return f


def agent_agent_force(a: AgentState, b: AgentState, same_squad: bool,
                      sp: SocialParams) -> np.ndarray:
    """Elliptical velocity-dependent repulsion of agent a from agent b.

    The effective distance contracts in the direction the pair is closing,
    and reduces to the circular form A*exp((r_a+r_b-d)/B) at zero relative
    velocity. Swapping the agents negates the force exactly.
    """
    d = np.array([a.x - b.x, a.y - b.y])
    dist = float(np.hypot(d[0], d[1]))
    amp = sp.amplitude(same_squad)
    if dist < _TINY:
        return np.array([min(amp * math.exp((a.radius + b.radius) / sp.b_range),
                             sp.force_cap), 0.0])
    y = (b.world_velocity() - a.world_velocity()) * sp.aniso_dt
    d_shift = d - y
    dist_shift = float(np.hypot(d_shift[0], d_shift[1]))
    if dist_shift < _TINY:
        d_shift = d
        dist_shift = dist
    total = dist + dist_shift
    b_eff_sq = 0.25 * (total * total - float(y @ y))
    b_eff = math.sqrt(max(b_eff_sq, _TINY * _TINY))
    weight = total / (2.0 * b_eff)
    direction = 0.5 * (d / dist + d_shift / dist_shift)
    f = amp * math.exp((a.radius + b.radius - b_eff) / sp.b_range) * weight * direction
    norm = float(np.hypot(f[0], f[1]))
    if norm > sp.force_cap:
        f *= sp.force_cap / norm
    return f


def cohesion_force(a: AgentState, squad_members: list[AgentState],
                   sp: SocialParams) -> np.ndarray:
    """Centroid attraction, active only beyond the in-squad distance d_coh."""
    if len(squad_members) < 2:
        return np.zeros(2)
    cx = sum(m.x for m in squad_members) / len(squad_members)
    cy = sum(m.y for m in squad_members) / len(squad_members)
    dx, dy = cx - a.x, cy - a.y
    dist = math.hypot(dx, dy)
    if dist <= sp.d_coh or dist < _TINY:
        return np.zeros(2)
    return sp.k_coh * a.mass / dist * np.array([dx, dy])


def control_inputs(a: AgentState, fb: ForceBreakdown, cp: ControlParams
                   ) -> tuple[float, float, float]:
    """Deconstruct the total social force into body-frame inputs and torque."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    f = fb.f_total
    u_f = f[0] * c + f[1] * s
    lateral = f - fb.f_acc
    u_o = (cp.c_o * (-lateral[0] * s + lateral[1] * c)
           - cp.c_des * (a.vy - cp.v_des_orth))
    f_acc_norm = float(np.hypot(fb.f_acc[0], fb.f_acc[1]))
    c_theta, c_omega = cp.torque_gains(a.inertia, f_acc_norm)
    u_theta = -c_theta * wrap_angle(a.theta - fb.phi_acc) - c_omega * a.omega
    return float(u_f), float(u_o), float(u_theta)


def dynamics(a: AgentState, u_f: float, u_o: float, u_theta: float
             ) -> tuple[float, float, float, float, float, float]:
    """State derivative (xdot, ydot, thetadot, vxdot, vydot, omegadot)."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    xdot = c * a.vx - s * a.vy
    ydot = s * a.vx + c * a.vy
    return xdot, ydot, a.omega, u_f / a.mass, u_o / a.mass, u_theta / a.inertia


@dataclass
class TrackedWaypoint:
    x: float
    y: float
    essential: bool


@dataclass
class WaypointTracker:
    """Per-agent waypoint consumption: cone for ordinary waypoints, slim
    circle for everything, relaxed circle for essential ones.
    """

    waypoints: deque[TrackedWaypoint] = field(default_factory=deque)
    cone_range: float = CONE_RANGE_FREE
    cone_half_angle: float = math.pi / 2.0
    circle_range: float = 0.2
    essential_circle_range: float = 0.5
    last_consumed: tuple[float, float] | None = None

    @classmethod
    def from_plan_waypoints(cls, waypoints, vision: str = "free", **kwargs
                            ) -> "WaypointTracker":
        cone = CONE_RANGE_FREE if vision == "free" else CONE_RANGE_RESTRICTED
        tracked = deque(TrackedWaypoint(w.position[0], w.position[1], w.essential)
                        for w in waypoints)
        return cls(waypoints=tracked, cone_range=cone, **kwargs)

    @property
    def done(self) -> bool:
        return not self.waypoints

    def current_target(self) -> tuple[float, float] | None:
        if not self.waypoints:
            return None
        front = self.waypoints[0]
        return front.x, front.y

    def update(self, x: float, y: float, theta: float,
               grid: GridMap | None = None) -> int:
        """Consume visited waypoints from the front; returns how many.

        The cone criterion models gaze, so when a grid is supplied a
        waypoint must also be in line of sight to count as seen. A waypoint
        is also held (not consumed) while its successor is out of sight:
        consecutive waypoints see each other, so steering for the held,
        visible waypoint cannot pin the agent against an obstacle.
        """
        removed = 0
        while self.waypoints:
            front = self.waypoints[0]
            dx, dy = front.x - x, front.y - y
            dist = math.hypot(dx, dy)
            if front.essential:
                visited = dist <= self.essential_circle_range
            else:
                in_circle = dist <= self.circle_range
                in_cone = (dist <= self.cone_range
                           and abs(wrap_angle(math.atan2(dy, dx) - theta))
                           <= self.cone_half_angle)
                if in_cone and grid is not None and not in_circle:
                    in_cone = line_of_sight(grid, (x, y), (front.x, front.y))
                visited = in_circle or in_cone
            if visited and grid is not None and len(self.waypoints) > 1:
                nxt = self.waypoints[1]
                if not line_of_sight(grid, (x, y), (nxt.x, nxt.y)):
                    visited = False
            if not visited:
                break
            gone = self.waypoints.popleft()
            self.last_consumed = (gone.x, gone.y)
            removed += 1
        return removed

    def steering_target(self, x: float, y: float,
                        grid: GridMap | None = None,
                        front_visible: bool | None = None
                        ) -> tuple[float, float] | None:
        """Point to steer for: the front waypoint, or — when it has drifted
        out of sight — the last consumed waypoint until sight is regained.

        ``front_visible`` may carry a precomputed line-of-sight result for
        the front waypoint (callers checking many trackers batch this).
        """
        target = self.current_target()
        if target is None:
            return target
        if front_visible is None:
            if grid is None:
                return target
            front_visible = line_of_sight(grid, (x, y), target)
        if front_visible:
            return target
        return self.last_consumed if self.last_consumed is not None else target


def update_waypoints(tracker: WaypointTracker, a: AgentState,
                     grid: GridMap | None = None) -> WaypointTracker:
    """Functional wrapper around tracker.update for a full agent state."""
    tracker.update(a.x, a.y, a.theta, grid)
    return tracker


def vision_control_params(vision: str, **overrides) -> ControlParams:
    """ControlParams preset for 'free' or 'restricted' vision."""
    if vision not in ("free", "restricted"):
        raise ValueError(f"unknown vision condition {vision!r}")
    v_des = V_DES_FREE if vision == "free" else V_DES_RESTRICTED
    return ControlParams(v_des=overrides.pop("v_des", v_des), **overrides)


def vision_social_params(vision: str, **overrides) -> SocialParams:
    """SocialParams preset for 'free' or 'restricted' vision.

    Restricted squads move almost in contact, so their cohesion has to beat
    the intra-squad repulsion at a much smaller spacing.
    """
    if vision not in ("free", "restricted"):
        raise ValueError(f"unknown vision condition {vision!r}")
    if vision == "free":
        d_coh, k_coh, a_intra = SQUAD_DIST_FREE, 1.5, 500.0
    else:
        # cohesion must stay below the (weak) restricted goal drive
        # (k_coh < v_des/tau = 0.652) or it can arrest a lagging agent and
        # deadlock the squad; close formation comes from a soft intra-squad
        # repulsion whose equilibrium sits near the target spacing instead
        d_coh, k_coh, a_intra = SQUAD_DIST_RESTRICTED, 0.6, 48.0
    return SocialParams(d_coh=overrides.pop("d_coh", d_coh),
                        k_coh=overrides.pop("k_coh", k_coh),
                        a_intra=overrides.pop("a_intra", a_intra), **overrides)
