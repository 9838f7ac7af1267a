"""Mission simulation: fixed-step Dormand-Prince integration of the HSFM.

One world is stepped single-threaded for determinism; the right-hand side
is evaluated for all agents at once with numpy. Waypoint trackers are
updated between steps, never inside integrator stages, so the ODE right-hand
side stays smooth within each step.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy.spatial import cKDTree

from sarsim.hsfm import (AgentState, ContactParams, ControlParams, SocialParams,
                         WaypointTracker, boundary_obstacle_cells, wrap_angle)
from sarsim.mapgrid import GridMap, occupied_geometry

try:
    import numba
except ImportError:  # pragma: no cover - optional accelerator
    numba = None

_TINY = 1e-9

# Dormand-Prince 5(4) tableau; row 7 equals the 5th-order weights (FSAL).
_DOPRI_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DOPRI_A_ROWS = tuple(np.array(row) for row in _DOPRI_A)
_DOPRI_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DOPRI_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                      187 / 2100, 1 / 40])
_DOPRI_ERR = _DOPRI_B5 - _DOPRI_B4
_DOPRI_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])


class SimulationAbort(RuntimeError):
    """Non-finite state encountered; carries a diagnostic snapshot."""

    def __init__(self, message: str, snapshot: dict):
        super().__init__(message)
        self.snapshot = snapshot


def dopri5_step(f, t: float, y: np.ndarray, h: float,
                k1: np.ndarray | None = None
                ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One Dormand-Prince(5) step. Returns (y_next, error_estimate, k_last).

    ``k1`` may be the last stage of the previous step (FSAL); ``k_last`` is
    the derivative at y_next and can seed the next call.
    """
    k = np.empty((7,) + y.shape)
    k[0] = k1 if k1 is not None else f(t, y)
    for i in range(1, 7):
        yi = y + h * (_DOPRI_A_ROWS[i] @ k[:i])
        k[i] = f(t + _DOPRI_C[i] * h, yi)
    y5 = y + h * (_DOPRI_B5 @ k)
    err = h * (_DOPRI_ERR @ k)
    return y5, err, k[6].copy()


def integrate_fixed(f, t0: float, y0: np.ndarray, t1: float, h: float
                    ) -> tuple[np.ndarray, float]:
    """Integrate y' = f(t, y) with fixed-step dopri5; returns (y(t1), max |err|)."""
    if h <= 0:
        raise ValueError("step size must be > 0")
    y = np.asarray(y0, dtype=float)
    t = t0
    k1 = None
    max_err = 0.0
    while t < t1 - 1e-12:
        step = min(h, t1 - t)
        y, err, k_last = dopri5_step(f, t, y, step, k1)
        k1 = k_last if step == h else None
        max_err = max(max_err, float(np.max(np.abs(err))) if err.size else 0.0)
        t += step
    return y, max_err


def integrator_self_test() -> dict:
    """Sanity gate for the integrator against closed-form solutions."""
    y_end, _ = integrate_fixed(lambda t, y: -y, 0.0, np.array([1.0]), 5.0, 0.06)
    decay_err = abs(float(y_end[0]) - math.exp(-5.0))

    def oscillator(t, y):
        return np.array([y[1], -y[0]])

    y_osc, _ = integrate_fixed(oscillator, 0.0, np.array([1.0, 0.0]),
                               2.0 * math.pi, 0.01)
    osc_err = float(np.max(np.abs(y_osc - np.array([1.0, 0.0]))))

    y_const, _ = integrate_fixed(lambda t, y: np.zeros_like(y), 0.0,
                                 np.array([3.5]), 1.0, 0.06)
    const_err = abs(float(y_const[0]) - 3.5)

    passed = decay_err < 1e-6 and osc_err < 1e-5 and const_err == 0.0
    return {"decay_error": decay_err, "oscillator_error": osc_err,
            "constant_error": const_err, "passed": passed}


def _rhs_core(st, targets, has_target, cand_pts, cand_owner,
              mass, inertia, v_des, m_over_tau, c_o, c_des, v_des_orth,
              c_theta_gain, c_omega_gain, kl_over_alpha,
              pair_amp, pair_r_sum, squad_of, n_squads, coh_pull, coh_floor,
              radius, pixel_radius, quadrant_range, phi0_border, c_border,
              phi0_soft, c_s_weight, d_min, b_range, aniso_dt, force_cap):
    """Scalar-loop form of World's reference right-hand side (jit target).

    Must stay behaviorally identical to the numpy methods on World; the
    agreement is asserted in tests. Returns (dy, penetration_event_count).
    """
    n = st.shape[0]
    dy = np.empty((n, 6))
    pen = 0
    pdot = np.empty((n, 2))
    cth = np.empty(n)
    sth = np.empty(n)
    for i in range(n):
        c = math.cos(st[i, 2])
        s = math.sin(st[i, 2])
        cth[i] = c
        sth[i] = s
        pdot[i, 0] = c * st[i, 3] - s * st[i, 4]
        pdot[i, 1] = s * st[i, 3] + c * st[i, 4]

    # squad centroids for the cohesion rule
    cenx = np.zeros(n_squads)
    ceny = np.zeros(n_squads)
    cnt = np.zeros(n_squads)
    for i in range(n):
        sq = squad_of[i]
        cenx[sq] += st[i, 0]
        ceny[sq] += st[i, 1]
        cnt[sq] += 1.0
    for sq in range(n_squads):
        if cnt[sq] > 0.0:
            cenx[sq] /= cnt[sq]
            ceny[sq] /= cnt[sq]

    # nearest obstacle pixel per (agent, quadrant); first wins ties
    best = np.full((n, 4), np.inf)
    bix = np.full((n, 4), -1, np.int64)
    for kc in range(cand_owner.shape[0]):
        o = cand_owner[kc]
        dx = cand_pts[kc, 0] - st[o, 0]
        dyv = cand_pts[kc, 1] - st[o, 1]
        dist = math.hypot(dx, dyv)
        if dist <= quadrant_range and dist > _TINY:
            rel = math.atan2(dyv, dx) - st[o, 2]
            q = int(math.floor((rel + 0.25 * math.pi) / (0.5 * math.pi))) % 4
            if dist < best[o, q]:
                best[o, q] = dist
                bix[o, q] = kc

    for i in range(n):
        px = st[i, 0]
        py = st[i, 1]
        theta = st[i, 2]
        vy = st[i, 4]
        omega = st[i, 5]
        # goal-attraction (relaxation toward v_des along the steering target)
        tx = targets[i, 0] - px
        ty = targets[i, 1] - py
        tdist = math.hypot(tx, ty)
        dex = 0.0
        dey = 0.0
        if has_target[i] and tdist > _TINY:
            dex = v_des[i] / tdist * tx
            dey = v_des[i] / tdist * ty
        fax = m_over_tau[i] * (dex - pdot[i, 0])
        fay = m_over_tau[i] * (dey - pdot[i, 1])
        fan = math.hypot(fax, fay)
        phi_acc = math.atan2(fay, fax) if fan > _TINY else theta
        fx = fax
        fy = fay
        # agent-agent repulsion (velocity-anisotropic elliptical potential)
        for j in range(n):
            if j == i:
                continue
            dxp = px - st[j, 0]
            dyp = py - st[j, 1]
            dist = math.hypot(dxp, dyp)
            amp = pair_amp[i, j]
            r_sum = pair_r_sum[i, j]
            if dist < _TINY:
                # coincident agents: deterministic unit-x fallback, capped
                gx = amp * math.exp(r_sum / b_range)
                if gx > force_cap:
                    gx = force_cap
                gy = 0.0
            else:
                yx = (pdot[j, 0] - pdot[i, 0]) * aniso_dt
                yy = (pdot[j, 1] - pdot[i, 1]) * aniso_dt
                dsx = dxp - yx
                dsy = dyp - yy
                dists = math.hypot(dsx, dsy)
                if dists < _TINY:
                    dsx = dxp
                    dsy = dyp
                    dists = dist
                total = dist + dists
                arg = 0.25 * (total * total - (yx * yx + yy * yy))
                if arg < _TINY * _TINY:
                    arg = _TINY * _TINY
                b_eff = math.sqrt(arg)
                mag = amp * math.exp((r_sum - b_eff) / b_range) * total / (2.0 * b_eff)
                gx = mag * 0.5 * (dxp / dist + dsx / dists)
                gy = mag * 0.5 * (dyp / dist + dsy / dists)
                norm = math.hypot(gx, gy)
                if norm > force_cap:
                    sc = force_cap / (norm if norm > _TINY else _TINY)
                    gx *= sc
                    gy *= sc
            fx += gx
            fy += gy
        # squad cohesion beyond the activation distance
        sq = squad_of[i]
        if cnt[sq] >= 2.0:
            dxc = cenx[sq] - px
            dyc = ceny[sq] - py
            distc = math.hypot(dxc, dyc)
            if distc > coh_floor[i]:
                pull = coh_pull[i] / (distc if distc > _TINY else _TINY)
                fx += pull * dxc
                fy += pull * dyc
        # border force from the nearest pixel in each body quadrant
        for q in range(4):
            kc = bix[i, q]
            if kc < 0:
                continue
            dist = best[i, q]
            nx = (px - cand_pts[kc, 0]) / dist
            ny = (py - cand_pts[kc, 1]) / dist
            d = dist - pixel_radius
            r = radius[i]
            phi_b = phi0_border * math.exp((r - d) / c_border)
            fx += phi_b * nx
            fy += phi_b * ny
            if d <= r:
                if d <= d_min:
                    denom = r - d_min
                    if denom < _TINY:
                        denom = _TINY
                    phi_s = (r - d) / denom * phi0_soft
                else:
                    phi_s = phi0_soft
                fx += c_s_weight * phi_s * nx + (1.0 - c_s_weight) * phi_s * vy * (-ny)
                fy += c_s_weight * phi_s * ny + (1.0 - c_s_weight) * phi_s * vy * nx
                if d <= -r:
                    pen += 1
        # body-frame control inputs
        c = cth[i]
        s = sth[i]
        u_f = fx * c + fy * s
        latx = fx - fax
        laty = fy - fay
        u_o = c_o[i] * (-latx * s + laty * c) - c_des[i] * (vy - v_des_orth[i])
        drive = fan if fan > _TINY else _TINY
        c_t = c_theta_gain[i] * drive
        c_w = c_omega_gain[i] * math.sqrt(kl_over_alpha[i] * drive)
        herr = (theta - phi_acc + math.pi) % (2.0 * math.pi) - math.pi
        u_t = -c_t * herr - c_w * omega
        dy[i, 0] = pdot[i, 0]
        dy[i, 1] = pdot[i, 1]
        dy[i, 2] = omega
        dy[i, 3] = u_f / mass[i]
        dy[i, 4] = u_o / mass[i]
        dy[i, 5] = u_t / inertia[i]
    return dy, pen


_RHS_JIT = (numba.njit(cache=True)(_rhs_core) if numba is not None else None)


@dataclass
class SquadRuntime:
    squad_id: str
    members: list[int]  # agent indices
    control: ControlParams
    social: SocialParams
    vision: str


@dataclass
class World:
    """All mutable simulation state plus per-map precomputations."""

    grid: GridMap
    agents: list[AgentState]
    squads: list[SquadRuntime]
    trackers: list[WaypointTracker]
    contact: ContactParams
    record_forces: bool = False
    time: float = 0.0
    penetration_events: int = 0
    max_step_error: float = 0.0

    def __post_init__(self):
        n = len(self.agents)
        if len(self.trackers) != n:
            raise ValueError("one waypoint tracker per agent required")
        self.mass = np.array([a.mass for a in self.agents])
        self.inertia = np.array([a.inertia for a in self.agents])
        self.radius = np.array([a.radius for a in self.agents])
        self.squad_of = np.full(n, -1)
        for si, squad in enumerate(self.squads):
            for m in squad.members:
                self.squad_of[m] = si
        if (self.squad_of < 0).any():
            raise ValueError("every agent must belong to a squad")
        cp = [self.squads[self.squad_of[i]].control for i in range(n)]
        sp = [self.squads[self.squad_of[i]].social for i in range(n)]
        self.v_des = np.array([c.v_des for c in cp])
        self.tau = np.array([c.tau for c in cp])
        self.c_o = np.array([c.c_o for c in cp])
        self.c_des = np.array([c.c_des for c in cp])
        self.v_des_orth = np.array([c.v_des_orth for c in cp])
        self.k_lambda = np.array([c.k_lambda for c in cp])
        self.alpha = np.array([c.alpha for c in cp])
        self.k_coh = np.array([s.k_coh for s in sp])
        self.d_coh = np.array([s.d_coh for s in sp])
        self.a_intra = np.array([s.a_intra for s in sp])
        self.a_inter = float(max(s.a_inter for s in sp)) if sp else 2000.0
        self.b_range = float(sp[0].b_range) if sp else 0.3
        self.aniso_dt = float(sp[0].aniso_dt) if sp else 0.5
        self.force_cap = float(sp[0].force_cap) if sp else 4000.0
        self.pixel_radius = 0.5 * math.sqrt(2.0) * self.grid.resolution
        # static pair matrices and gains, hoisted out of the force kernels
        same = self.squad_of[:, None] == self.squad_of[None, :]
        self._pair_amp = np.where(same, self.a_intra[:, None], self.a_inter)
        self._pair_r_sum = self.radius[:, None] + self.radius[None, :]
        self._squad_idx = [np.array(squad.members) for squad in self.squads]
        self._m_over_tau = self.mass / self.tau
        self._c_theta_gain = self.inertia * self.k_lambda
        self._c_omega_gain = self.inertia * (1.0 + self.alpha)
        self._kl_over_alpha = self.k_lambda / self.alpha
        self._coh_pull = self.k_coh * self.mass
        self._coh_floor = np.maximum(self.d_coh, _TINY)
        self._obstacles = boundary_obstacle_cells(self.grid)
        self._obstacle_tree = cKDTree(self._obstacles) if len(self._obstacles) else None
        self.y = np.array([[a.x, a.y, a.theta, a.vx, a.vy, a.omega]
                           for a in self.agents], dtype=float).ravel()
        self._targets = np.zeros((n, 2))
        self._has_target = np.zeros(n, dtype=bool)
        self._cand_pts = np.zeros((0, 2))
        self._cand_owner = np.zeros(0, dtype=np.int64)
        self._cand_age = 0
        self._fsal_k = None
        self.refresh_targets()
        if _RHS_JIT is not None:
            self.rhs(0.0, self.y)  # compile/load the jit kernel outside timed loops

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    def states(self) -> np.ndarray:
        return self.y.reshape(self.n_agents, 6)

    def done(self) -> bool:
        return all(t.done for t in self.trackers)

    def refresh_targets(self) -> bool:
        """Recompute per-agent steering targets; True if any changed."""
        p = self.states()[:, :2]
        visible = self._front_visibility(p)
        changed = False
        for i, tracker in enumerate(self.trackers):
            target = tracker.steering_target(p[i, 0], p[i, 1], self.grid,
                                             front_visible=visible[i])
            if target is None:
                changed |= bool(self._has_target[i])
                self._has_target[i] = False
            else:
                if (not self._has_target[i]
                        or self._targets[i, 0] != target[0]
                        or self._targets[i, 1] != target[1]):
                    changed = True
                self._has_target[i] = True
                self._targets[i] = target
        return changed

    def _front_visibility(self, p: np.ndarray) -> list[bool | None]:
        """Line of sight from each agent to its front waypoint, batched."""
        fronts = [tracker.current_target() for tracker in self.trackers]
        visible: list[bool | None] = [None] * len(fronts)
        idx = [i for i, f in enumerate(fronts) if f is not None]
        if not idx:
            return visible
        geom = occupied_geometry(self.grid)
        if geom is None:
            for i in idx:
                visible[i] = True
            return visible
        coords = np.empty((len(idx), 2, 2))
        for j, i in enumerate(idx):
            coords[j, 0] = p[i]
            coords[j, 1] = fronts[i]
        blocked = shapely.intersects(geom, shapely.linestrings(coords))
        for j, i in enumerate(idx):
            visible[i] = not blocked[j]
        return visible

    def _refresh_candidates(self, margin: float):
        """Cache obstacle pixels near each agent for the next step's stages."""
        if self._obstacle_tree is None:
            return
        p = self.states()[:, :2]
        lists = self._obstacle_tree.query_ball_point(
            p, self.contact.quadrant_range + margin)
        owners, pts = [], []
        for i, idxs in enumerate(lists):
            if idxs:
                owners.extend([i] * len(idxs))
                pts.append(self._obstacles[idxs])
        if pts:
            self._cand_pts = np.concatenate(pts)
            self._cand_owner = np.array(owners, dtype=np.int64)
        else:
            self._cand_pts = np.zeros((0, 2))
            self._cand_owner = np.zeros(0, dtype=np.int64)

    def _border_forces(self, p: np.ndarray, theta: np.ndarray, vy: np.ndarray
                       ) -> np.ndarray:
        f = np.zeros_like(p)
        if len(self._cand_pts) == 0:
            return f
        owner = self._cand_owner
        diff = self._cand_pts - p[owner]
        dist = np.hypot(diff[:, 0], diff[:, 1])
        mask = (dist <= self.contact.quadrant_range) & (dist > _TINY)
        if not mask.any():
            return f
        owner = owner[mask]
        diff = diff[mask]
        dist = dist[mask]
        rel = np.arctan2(diff[:, 1], diff[:, 0]) - theta[owner]
        quad = np.floor((rel + np.pi / 4.0) / (np.pi / 2.0)).astype(np.int64) % 4
        key = owner * 4 + quad
        # nearest candidate per (agent, quadrant): dist < quadrant_range, so a
        # composite sort key picks the first entry of each key group
        order = np.argsort(key * (4.0 * self.contact.quadrant_range) + dist,
                           kind="stable")
        key = key[order]
        first = np.empty(len(key), dtype=bool)
        first[0] = True
        np.not_equal(key[1:], key[:-1], out=first[1:])
        sel = order[first]
        owner, diff, dist = owner[sel], diff[sel], dist[sel]
        d = dist - self.pixel_radius
        r = self.radius[owner]
        n = -diff / dist[:, None]
        cp = self.contact
        phi_b = cp.phi0_border * np.exp((r - d) / cp.c_border)
        force = phi_b[:, None] * n
        contact = d <= r
        if contact.any():
            dc = d[contact]
            rc = r[contact]
            phi_s = np.where(dc <= cp.d_min,
                             (rc - dc) / np.maximum(rc - cp.d_min, _TINY) * cp.phi0_soft,
                             cp.phi0_soft)
            nc = n[contact]
            tc = np.column_stack((-nc[:, 1], nc[:, 0]))
            force[contact] += (cp.c_s * phi_s[:, None] * nc
                               + (1.0 - cp.c_s) * (phi_s * vy[owner[contact]])[:, None] * tc)
            self.penetration_events += int(np.count_nonzero(dc <= -rc))
        f[:, 0] = np.bincount(owner, force[:, 0], minlength=len(f))
        f[:, 1] = np.bincount(owner, force[:, 1], minlength=len(f))
        return f

    def _agent_forces(self, p: np.ndarray, pdot: np.ndarray) -> np.ndarray:
        n = self.n_agents
        if n < 2:
            return np.zeros_like(p)
        d = p[:, None, :] - p[None, :, :]
        dist = np.hypot(d[..., 0], d[..., 1])
        np.fill_diagonal(dist, 1e6)  # self-pairs zeroed below; keep exp() finite
        y = (pdot[None, :, :] - pdot[:, None, :]) * self.aniso_dt
        d_shift = d - y
        dist_shift = np.hypot(d_shift[..., 0], d_shift[..., 1])
        np.fill_diagonal(dist_shift, 1e6)
        degenerate = None
        if dist.min() < _TINY or dist_shift.min() < _TINY:
            degenerate = dist < _TINY
            dist = np.where(degenerate, 1.0, dist)
            collapse = dist_shift < _TINY
            d_shift = np.where(collapse[..., None], d, d_shift)
            dist_shift = np.where(collapse, dist, dist_shift)
        total = dist + dist_shift
        b_eff = np.sqrt(np.maximum(
            0.25 * (total ** 2 - np.einsum("ijk,ijk->ij", y, y)), _TINY ** 2))
        amp = self._pair_amp
        r_sum = self._pair_r_sum
        mag = amp * np.exp((r_sum - b_eff) / self.b_range) * total / (2.0 * b_eff)
        direction = 0.5 * (d / dist[..., None] + d_shift / dist_shift[..., None])
        force = mag[..., None] * direction
        # coincident agents: deterministic unit-x fallback at capped amplitude
        if degenerate is not None and degenerate.any():
            fallback = np.zeros_like(force)
            fallback[..., 0] = np.minimum(amp * np.exp(r_sum / self.b_range),
                                          self.force_cap)
            force = np.where(degenerate[..., None], fallback, force)
        norm = np.hypot(force[..., 0], force[..., 1])
        over = norm > self.force_cap
        if over.any():
            scale = np.where(over, self.force_cap / np.maximum(norm, _TINY), 1.0)
            force = force * scale[..., None]
        np.fill_diagonal(force[..., 0], 0.0)
        np.fill_diagonal(force[..., 1], 0.0)
        return force.sum(axis=1)

    def _cohesion_forces(self, p: np.ndarray) -> np.ndarray:
        f = np.zeros_like(p)
        for si, squad in enumerate(self.squads):
            if len(squad.members) < 2:
                continue
            idx = self._squad_idx[si]
            q = p[idx]
            diff = q.mean(axis=0) - q
            dist = np.hypot(diff[:, 0], diff[:, 1])
            active = dist > self._coh_floor[idx]
            if active.any():
                pull = self._coh_pull[idx] / np.maximum(dist, _TINY)
                f[idx[active]] = (pull[active, None] * diff[active])
        return f

    def rhs(self, t: float, y: np.ndarray) -> np.ndarray:
        """Coupled ODE right-hand side for all agents.

        Dispatches to the jit-compiled kernel when numba is available; the
        numpy implementation below is the reference the kernel must match.
        """
        if _RHS_JIT is not None:
            cp = self.contact
            dy, pen = _RHS_JIT(
                y.reshape(self.n_agents, 6), self._targets, self._has_target,
                self._cand_pts, self._cand_owner, self.mass, self.inertia,
                self.v_des, self._m_over_tau, self.c_o, self.c_des,
                self.v_des_orth, self._c_theta_gain, self._c_omega_gain,
                self._kl_over_alpha, self._pair_amp, self._pair_r_sum,
                self.squad_of, len(self.squads), self._coh_pull,
                self._coh_floor, self.radius, self.pixel_radius,
                cp.quadrant_range, cp.phi0_border, cp.c_border, cp.phi0_soft,
                cp.c_s, cp.d_min, self.b_range, self.aniso_dt, self.force_cap)
            self.penetration_events += int(pen)
            return dy.ravel()
        return self._rhs_reference(t, y)

    def _rhs_reference(self, t: float, y: np.ndarray) -> np.ndarray:
        st = y.reshape(self.n_agents, 6)
        p = st[:, 0:2]
        theta = st[:, 2]
        v = st[:, 3:5]
        omega = st[:, 5]
        c, s = np.cos(theta), np.sin(theta)
        pdot = np.empty_like(p)
        pdot[:, 0] = c * v[:, 0] - s * v[:, 1]
        pdot[:, 1] = s * v[:, 0] + c * v[:, 1]

        to_target = self._targets - p
        dist = np.hypot(to_target[:, 0], to_target[:, 1])
        ok = self._has_target & (dist > _TINY)
        desired = np.zeros_like(p)
        desired[ok] = (self.v_des[ok] / dist[ok])[:, None] * to_target[ok]
        f_acc = self._m_over_tau[:, None] * (desired - pdot)
        f_acc_norm = np.hypot(f_acc[:, 0], f_acc[:, 1])
        phi_acc = np.where(f_acc_norm > _TINY,
                           np.arctan2(f_acc[:, 1], f_acc[:, 0]), theta)

        f_social = self._agent_forces(p, pdot) + self._cohesion_forces(p)
        f_border = self._border_forces(p, theta, v[:, 1])
        f = f_acc + f_social + f_border

        u_f = f[:, 0] * c + f[:, 1] * s
        lateral = f - f_acc
        u_o = (self.c_o * (-lateral[:, 0] * s + lateral[:, 1] * c)
               - self.c_des * (v[:, 1] - self.v_des_orth))
        drive = np.maximum(f_acc_norm, _TINY)
        c_theta = self._c_theta_gain * drive
        c_omega = self._c_omega_gain * np.sqrt(self._kl_over_alpha * drive)
        herr = np.mod(theta - phi_acc + np.pi, 2.0 * np.pi) - np.pi
        u_theta = -c_theta * herr - c_omega * omega

        dy = np.empty_like(st)
        dy[:, 0:2] = pdot
        dy[:, 2] = omega
        dy[:, 3] = u_f / self.mass
        dy[:, 4] = u_o / self.mass
        dy[:, 5] = u_theta / self.inertia
        return dy.ravel()

    def step(self, dt: float):
        """Advance one fixed dopri5 step, then consume visited waypoints."""
        if dt <= 0:
            raise ValueError("dt must be > 0")
        # candidate obstacle pixels are reused for a few steps; the margin
        # covers the largest distance any agent can plausibly move meanwhile
        if self._cand_age == 0:
            self._refresh_candidates(
                margin=8.0 * max(self.v_des.max(initial=0.0), 1.0) * dt)
        self._cand_age = (self._cand_age + 1) % 4
        y_next, err, k_last = dopri5_step(self.rhs, self.time, self.y, dt, self._fsal_k)
        if not np.all(np.isfinite(y_next)):
            snapshot = {"time": self.time, "state": self.y.copy(),
                        "failed_state": y_next}
            raise SimulationAbort(f"non-finite state at t={self.time:.3f}", snapshot)
        self.y = y_next
        self.time += dt
        if err.size:
            self.max_step_error = max(self.max_step_error, float(np.max(np.abs(err))))
        st = self.states()
        st[:, 2] = np.mod(st[:, 2] + np.pi, 2.0 * np.pi) - np.pi
        for i, tracker in enumerate(self.trackers):
            tracker.update(st[i, 0], st[i, 1], st[i, 2], self.grid)
        if self.refresh_targets():
            self._fsal_k = None  # targets changed: last stage no longer valid
        else:
            self._fsal_k = k_last


@dataclass
class Trajectory:
    """Recorded report-step states of every agent plus run summary."""

    squad_ids: list[str]
    agent_ids: list[int]
    times: list[float] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    path_lengths: np.ndarray | None = None
    sim_wall_time: float = 0.0
    timed_out: bool = False
    penetration_events: int = 0

    def to_csv(self) -> str:
        lines = ["t,squad_id,agent_id,x,y,theta,vx,vy,omega"]
        for t, st in zip(self.times, self.states):
            for i in range(st.shape[0]):
                x, y, th, vx, vy, om = st[i]
                lines.append(f"{t:.6f},{self.squad_ids[i]},{self.agent_ids[i]},"
                             f"{x:.9f},{y:.9f},{th:.9f},{vx:.9f},{vy:.9f},{om:.9f}")
        return "\n".join(lines) + "\n"


def run(world: World, dt: float = 0.06, t_max: float = 600.0,
        report_every: int = 1) -> Trajectory:
    """Simulate until every tracker is exhausted or t_max is hit.

    Wall-clock timing covers the integration loop only (planning and world
    construction excluded). Timestamps advance strictly by report_every*dt.
    """
    squad_ids = [world.squads[world.squad_of[i]].squad_id
                 for i in range(world.n_agents)]
    traj = Trajectory(squad_ids=squad_ids, agent_ids=list(range(world.n_agents)))
    traj.times.append(world.time)
    traj.states.append(world.states().copy())
    lengths = np.zeros(world.n_agents)
    last_p = world.states()[:, :2].copy()
    steps = 0
    t_start = time.perf_counter()
    while not world.done() and world.time < t_max - 1e-9:
        world.step(dt)
        steps += 1
        if steps % report_every == 0:
            st = world.states()
            traj.times.append(world.time)
            traj.states.append(st.copy())
            lengths += np.hypot(st[:, 0] - last_p[:, 0], st[:, 1] - last_p[:, 1])
            last_p = st[:, :2].copy()
    traj.sim_wall_time = time.perf_counter() - t_start
    traj.path_lengths = lengths
    traj.timed_out = not world.done()
    traj.penetration_events = world.penetration_events
    return traj


@dataclass
class BenchReport:
    """Per-label mean/variance of path length and wall-clock simulation time."""

    label: str
    repetitions: int
    mean_length: float
    var_length: float
    mean_time: float
    var_time: float

    def to_text(self) -> str:
        return (f"{self.label} reps {self.repetitions} "
                f"mu_d {self.mean_length:.6f} s2_d {self.var_length:.6g} "
                f"mu_t {self.mean_time * 1e3:.3f}ms s2_t {self.var_time * 1e6:.6g}ms2")


def bench(world_factory, label: str, repetitions: int, dt: float = 0.06,
          t_max: float = 600.0) -> BenchReport:
    """Repeatedly simulate freshly built worlds and aggregate the measures."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    lengths, times = [], []
    for _ in range(repetitions):
        traj = run(world_factory(), dt=dt, t_max=t_max)
        lengths.append(float(np.mean(traj.path_lengths)))
        times.append(traj.sim_wall_time)
    lengths = np.array(lengths)
    times = np.array(times)
    return BenchReport(label=label, repetitions=repetitions,
                       mean_length=float(lengths.mean()),
                       var_length=float(lengths.var(ddof=0)),
                       mean_time=float(times.mean()),
                       var_time=float(times.var(ddof=0)))
