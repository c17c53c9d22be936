"""Nonlinear model predictive control with single-rotor thrust inputs.

The tracking problem over ``N`` nodes spaced ``dt`` apart is solved by
Gauss-Newton iterations on the multiple-shooting transcription:

* dynamics are discretized with RK4 and linearized exactly (RK4 sensitivities);
* a Riccati backward pass solves the equality-constrained QP including the
  shooting defects of the current iterate;
* the forward pass simulates the nonlinear model with the feedback-corrected,
  box-clipped inputs, which closes all defects, so every accepted iterate is
  dynamically feasible and satisfies the thrust limits exactly;
* a backtracking line search on the cost guards against overshoot.

The solver is warm-started with the previous solution shifted in time.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from numba import njit

from .. import dynamics
from ..core import Command, QuadrotorModel, QuadState, Setpoint
from ..errors import InvalidArgumentError
from .config import MpcParams

NX, NU = dynamics.NX, dynamics.NU
_LINE_SEARCH_STEPS = 10


@njit(cache=True)
def _rollout_cost(x0, us, xs_lin, K, kff, alpha, xref, uref, Qd, Rd, h, mass, inertia, g, alloc, fmin, fmax,
                  use_feedback):
    N = us.shape[0]
    xs = np.empty((N + 1, NX))
    un = np.empty((N, NU))
    xs[0] = x0
    cost = 0.0
    for k in range(N):
        u = us[k].copy()
        if use_feedback:
            u += alpha * kff[k] + K[k] @ (xs[k] - xs_lin[k])
        for i in range(NU):
            u[i] = min(max(u[i], fmin), fmax)
        un[k] = u
        e = u - uref[k]
        cost += 0.5 * np.sum(Rd * e * e)
        xn = dynamics.thrust_rk4(xs[k], u, h, mass, inertia, g, alloc)
        nq = np.sqrt(xn[3] ** 2 + xn[4] ** 2 + xn[5] ** 2 + xn[6] ** 2)
        for i in range(3, 7):
            xn[i] /= nq
        xs[k + 1] = xn
        ex = xn - xref[k + 1]
        cost += 0.5 * np.sum(Qd * ex * ex)
    return xs, un, cost


@njit(cache=True)
def mpc_solve(x0, xref, uref, xs_init, us_init, Qd, Rd, h, mass, inertia, g, alloc, fmin, fmax, max_iter, tol):
    """Solve the tracking problem; returns ``(xs, us, iterations, converged, cost)``.

    ``xs_init``/``us_init`` is the (possibly infeasible) initial guess.
    """
    N = us_init.shape[0]
    xs_lin = xs_init.copy()
    xs_lin[0] = x0
    us = us_init.copy()
    for k in range(N):
        for i in range(NU):
            us[k, i] = min(max(us[k, i], fmin), fmax)
    As = np.empty((N, NX, NX))
    Bs = np.empty((N, NX, NU))
    d = np.empty((N, NX))
    K = np.zeros((N, NU, NX))
    kff = np.zeros((N, NU))
    Qm = np.diag(Qd)
    Rm = np.diag(Rd)

    # feasible baseline: nonlinear rollout of the initial inputs
    xs_best, us_best, cost_best = _rollout_cost(x0, us, xs_lin, K, kff, 0.0, xref, uref, Qd, Rd, h,
                                                mass, inertia, g, alloc, fmin, fmax, False)
    iterations = 0
    converged = False
    for it in range(max_iter):
        iterations += 1
        for k in range(N):
            xn, A, B = dynamics.thrust_rk4_sensitivity(xs_lin[k], us[k], h, mass, inertia, g, alloc)
            As[k] = A
            Bs[k] = B
            d[k] = xn - xs_lin[k + 1]
        # backward Riccati pass with defects
        P = Qm.copy()
        p = Qd * (xs_lin[N] - xref[N])
        for k in range(N - 1, -1, -1):
            A = As[k]
            B = Bs[k]
            pe = p + P @ d[k]
            PA = P @ A
            PB = P @ B
            Quu = Rm + B.T @ PB
            Qux = B.T @ PA
            Qxx = A.T @ PA
            qx = A.T @ pe
            if k > 0:
                Qxx += Qm
                qx += Qd * (xs_lin[k] - xref[k])
            qu = B.T @ pe + Rd * (us[k] - uref[k])
            Quu_inv = np.linalg.inv(0.5 * (Quu + Quu.T))
            K[k] = -Quu_inv @ Qux
            kff[k] = -Quu_inv @ qu
            P = Qxx + Qux.T @ K[k]
            P = 0.5 * (P + P.T)
            p = qx + Qux.T @ kff[k]
        # forward pass with line search
        alpha = 1.0
        accepted = False
        for _ in range(_LINE_SEARCH_STEPS):
            xs_new, us_new, cost_new = _rollout_cost(x0, us, xs_lin, K, kff, alpha, xref, uref, Qd, Rd, h,
                                                     mass, inertia, g, alloc, fmin, fmax, True)
            if cost_new <= cost_best:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # no descent along the Gauss-Newton direction: the feasible baseline is final
            converged = it > 0
            break
        decrease = cost_best - cost_new
        xs_best, us_best, cost_best = xs_new, us_new, cost_new
        xs_lin = xs_new.copy()
        us = us_new.copy()
        if decrease <= tol * max(1.0, cost_best):
            converged = True
            break
    return xs_best, us_best, iterations, converged, cost_best


@dataclass(frozen=True, eq=False)
class MpcResult:
    command: Command
    predicted_states: np.ndarray
    predicted_inputs: np.ndarray
    iterations: int
    converged: bool
    cost: float


def _setpoint_arrays(setpoints, n_nodes, q0):
    xref = np.empty((n_nodes + 1, NX))
    uref = np.empty((n_nodes, NU))
    sps = list(setpoints)
    prev_q = np.asarray(q0, dtype=float)
    for k in range(n_nodes + 1):
        s = sps[min(k, len(sps) - 1)]
        st = s.state
        q = np.array(st.q)
        if np.dot(q, prev_q) < 0:
            q = -q
        prev_q = q
        xref[k] = dynamics.pack(st.p, q, st.v, st.w)
        if k < n_nodes:
            uref[k] = s.input.thrusts if s.input.is_single_rotor else np.full(NU, st.fd.mean())
    return xref, uref


class MpcController:
    """Stateful MPC wrapper keeping the warm start between calls."""

    def __init__(self, model: QuadrotorModel | None = None, params: MpcParams = MpcParams()):
        self.model = model or QuadrotorModel()
        self.params = params
        self._Qd = params.state_weights
        self._Rd = np.full(NU, float(params.w_input))
        self._prev: tuple[float, np.ndarray, np.ndarray] | None = None
        self._issued: deque = deque()
        self.solves = 0
        self.iterations = 0
        self.warnings = 0

    def reset(self):
        self._prev = None
        self._issued.clear()

    def predict(self, state: QuadState, delay: float) -> QuadState:
        """Propagate ``state`` by ``delay`` seconds under the inputs issued in ``[t - delay, t)``.

        A command issued at ``s`` takes effect at ``s + delay``, so the inputs
        acting on ``[t, t + delay)`` are exactly those issued during the last
        ``delay`` seconds. Before any command was issued the reference hover
        thrust ``m·g/4`` is assumed.
        """
        if delay <= 0:
            return state
        m = self.model
        t = state.t
        x = dynamics.pack(state.p, state.q, state.v, state.w)
        hist = [(s, u) for s, u in self._issued if s < t - 1e-12]
        u_cur = np.full(NU, m.mass * m.g / NU)
        seg_start = t
        for s, u in hist:
            if s + delay <= t:
                u_cur = u
        edges = [s + delay for s, _ in hist if t < s + delay < t + delay] + [t + delay]
        inputs = [u for s, u in hist if t < s + delay < t + delay]
        for i, edge in enumerate(edges):
            span = edge - seg_start
            if span > 0:
                n_sub = max(1, math.ceil(span / 0.005))
                hs = span / n_sub
                for _ in range(n_sub):
                    x = dynamics.thrust_rk4(x, u_cur, hs, m.mass, m.inertia_vector, m.g, m.allocation_matrix)
                x[3:7] /= np.sqrt(x[3:7] @ x[3:7])
            seg_start = edge
            if i < len(inputs):
                u_cur = inputs[i]
        return state.replace(t=t + delay, p=x[0:3], q=x[3:7], v=x[7:10], w=x[10:13])

    def _initial_guess(self, t, x0, uref):
        N, h = self.params.N, self.params.dt
        if self._prev is None:
            us = uref.copy()
            xs = np.empty((N + 1, NX))
            xs[0] = x0
            m = self.model
            for k in range(N):
                xs[k + 1] = dynamics.thrust_rk4(xs[k], np.clip(us[k], m.f_min, m.f_max), h, m.mass,
                                                m.inertia_vector, m.g, m.allocation_matrix)
            return xs, us
        t_prev, xs_p, us_p = self._prev
        shift = (t - t_prev) / h
        node_t = np.arange(N + 1) + shift
        grid = np.arange(N + 1, dtype=float)
        xs = np.column_stack([np.interp(node_t, grid, xs_p[:, i]) for i in range(NX)])
        us = np.column_stack([np.interp(node_t[:N], grid[:N], us_p[:, i]) for i in range(NU)])
        return xs, us

    def solve(self, state: QuadState, setpoints) -> MpcResult:
        """Solve for ``state`` against ``N`` (or ``N + 1``) setpoints spaced ``params.dt``.

        With delay compensation enabled the first setpoint must correspond to
        ``state.t + params.delay_compensation``.
        """
        p = self.params
        if not state.valid:
            raise InvalidArgumentError("MPC state must be finite")
        setpoints = list(setpoints)
        if len(setpoints) not in (p.N, p.N + 1):
            raise InvalidArgumentError(f"expected {p.N} or {p.N + 1} setpoints, got {len(setpoints)}")
        t_issue = state.t
        if p.delay_compensation > 0:
            state = self.predict(state, p.delay_compensation)
        x0 = dynamics.pack(state.p, state.q, state.v, state.w)
        xref, uref = _setpoint_arrays(setpoints, p.N, state.q)
        xs0, us0 = self._initial_guess(state.t, x0, uref)
        m = self.model
        xs, us, iters, converged, cost = mpc_solve(
            x0, xref, uref, xs0, us0, self._Qd, self._Rd, p.dt, m.mass, m.inertia_vector, m.g,
            m.allocation_matrix, m.f_min, m.f_max, p.max_iterations, p.tolerance,
        )
        self._prev = (state.t, xs, us)
        self.solves += 1
        self.iterations += iters
        if not converged:
            self.warnings += 1
        u0 = np.clip(us[0], m.f_min, m.f_max)
        if p.delay_compensation > 0:
            self._issued.append((t_issue, u0))
            while self._issued and self._issued[0][0] < t_issue - p.delay_compensation - 1.0:
                self._issued.popleft()
        return MpcResult(Command.from_thrusts(t_issue, u0), xs, us, int(iters), bool(converged), float(cost))


def control_mpc(state: QuadState, setpoints, model: QuadrotorModel | None = None,
                params: MpcParams = MpcParams()) -> MpcResult:
    """Single cold-started MPC solve (see :class:`MpcController` for warm starts)."""
    return MpcController(model, params).solve(state, setpoints)
