"""Explicit three-level Lax-Wendroff/interpolation time integration.

Each step solves, on the interior DOFs,

    M (w^{n+1} - 2 w^n + w^{n-1}) = -(k^2/nu) K w^n
                                     + (k^2 / 2 nu) (s(t_n) - s(t_{n-1})) b
                                     + (k / nu) (int_{t_{n-1}}^{t_n} s dt) b

where ``b`` is the once-assembled spatial source load and ``s`` its time
factor.  The unknown of the mass solve is the second difference, which is
algebraically the same update as solving for ``w^{n+1}`` directly but keeps
the solver tolerance relative to the increment rather than to ``w``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as sla

from .assembly import Operators
from .solver import SolverConfig, SolverError, cg_solve
from .source import SourceConfig, integrate_source_in_time, time_factor
from .space import interpolate

# The mass solve carries no absolute floor: the problem is linear and the
# forced solutions of some scenarios are O(1e-10) in size.
STEP_SOLVER = SolverConfig(rtol=1e-12, atol=0.0)

STARTS = ("taylor2", "linear")


class InstabilityError(RuntimeError):
    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class CFLRefusal(RuntimeError):
    def __init__(self, report):
        super().__init__(f"time step violates the CFL restriction: {report}")
        self.report = report


@dataclass(frozen=True)
class CFLReport:
    k: float
    h: float
    C_sr: float
    nu: float
    ratio: float          # k / h
    C_sr_limit: float     # sqrt(2 nu)
    ratio_ok: bool
    constant_ok: bool

    @property
    def passed(self) -> bool:
        return self.ratio_ok and self.constant_ok

    def __str__(self):
        return (
            f"k/h = {self.ratio:.6g} {'<=' if self.ratio_ok else '>'} C_sr = {self.C_sr:.6g}; "
            f"C_sr {'<' if self.constant_ok else '>='} sqrt(2 nu) = {self.C_sr_limit:.6g}"
        )


def check_cfl(k: float, h: float, C_sr: float, nu: float) -> CFLReport:
    """Report on ``k/h <= C_sr`` and ``0 < C_sr < sqrt(2 nu)``."""
    ratio = k / h
    limit = math.sqrt(2.0 * nu)
    # tiny slack so that k = C_sr * h computed in floating point still passes
    return CFLReport(
        k=k, h=h, C_sr=C_sr, nu=nu, ratio=ratio, C_sr_limit=limit,
        ratio_ok=ratio <= C_sr * (1.0 + 1e-12),
        constant_ok=0.0 < C_sr < limit,
    )


def spectral_step_limit(ops: Operators) -> float:
    """Largest stable step ``2 sqrt(nu / lambda_max(M^-1 K))`` of the update.

    Unlike the ``k/h`` test this accounts for the element degree and the
    material; it is the sharp bound for the three-level scheme.
    """
    M = ops.mass_interior
    if M.shape[0] == 0:
        return math.inf
    import scipy.sparse as sp
    Mv = sp.block_diag([M, M, M], format="csc")
    K = ops.stiffness_interior
    if K.shape[0] <= 3:
        lam = float(np.max(np.linalg.eigvals(np.linalg.solve(Mv.toarray(), K.toarray())).real))
    else:
        lam = float(sla.eigsh(K, k=1, M=Mv, which="LA", return_eigenvectors=False, tol=1e-8)[0])
    if lam <= 0:
        return math.inf
    return 2.0 * math.sqrt(ops.params.nu / lam)


@dataclass(frozen=True)
class SchemeConfig:
    k: float
    T_f: float
    C_sr: float
    source: SourceConfig | None = None
    allow_cfl_violation: bool = False
    start: str = "taylor2"      # or "linear": w^1 = w0 + k w1 without the k^2 term

    def __post_init__(self):
        if self.start not in STARTS:
            raise ValueError(f"unknown start {self.start!r}; choose from {STARTS}")
        if not self.k > 0:
            raise ValueError("time step must be positive")
        steps = self.T_f / self.k
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps) or round(steps) < 1:
            raise ValueError(f"T_f / k = {steps} is not a positive integer")

    @property
    def num_steps(self) -> int:
        return int(round(self.T_f / self.k))


@dataclass(frozen=True)
class InitialData:
    w0: object = None          # callable (m, 3) -> (m, 3); None means zero
    w1: object = None
    kappa0: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        kappa0 = np.asarray(self.kappa0, dtype=float)
        if kappa0.shape != (3, 3) or not np.allclose(kappa0, kappa0.T, rtol=0, atol=0):
            raise ValueError("kappa0 must be a symmetric 3x3 matrix")
        object.__setattr__(self, "kappa0", kappa0)


@dataclass
class Monitor:
    n: int
    t: float
    l2_norm: float
    a_norm: float
    energy: float
    cg_iterations: int
    residual: float


@dataclass
class TimeState:
    w_prev: np.ndarray
    w_curr: np.ndarray
    n: int
    t: float
    monitors: list = field(default_factory=list)
    increment: np.ndarray | None = field(default=None, repr=False)   # warm start


def _signed_sqrt(q):
    return math.copysign(math.sqrt(abs(q)), q)


class Stepper:
    """Holds the interior operators and source load for one space and scheme."""

    def __init__(self, ops: Operators, cfg: SchemeConfig, source_load=None, solver=STEP_SOLVER):
        self.ops = ops
        self.cfg = cfg
        self.space = ops.space
        self.vint = self.space.vector_interior_dofs()
        self.ni = len(self.space.interior_dofs)
        self.solver = solver
        self.load = None
        if cfg.source is not None and source_load is not None:
            self.load = np.asarray(source_load)[self.vint]

    # quadratic forms on interior vectors -------------------------------------------------
    def _cols(self, v):
        return v.reshape(3, self.ni).T

    def mass_form(self, u, v=None) -> float:
        v = u if v is None else v
        return float(np.sum(self._cols(u) * (self.ops.mass_interior @ self._cols(v))))

    def stiffness_form(self, u, v=None) -> float:
        v = u if v is None else v
        return float(u @ (self.ops.stiffness_interior @ v))

    def energy(self, w_prev_i, w_curr_i) -> float:
        k, nu = self.cfg.k, self.ops.params.nu
        d = w_curr_i - w_prev_i
        c = k * k / (2.0 * nu)
        return (
            self.mass_form(d)
            - c * self.stiffness_form(d)
            + c * (self.stiffness_form(w_curr_i) + self.stiffness_form(w_prev_i))
        )

    def monitor(self, state: TimeState, iterations=0, residual=0.0) -> Monitor:
        wp = state.w_prev[self.vint]
        wc = state.w_curr[self.vint]
        return Monitor(
            n=state.n,
            t=state.t,
            l2_norm=math.sqrt(max(self.mass_form(wc), 0.0)),
            a_norm=_signed_sqrt(self.stiffness_form(wc)),
            energy=self.energy(wp, wc),
            cg_iterations=iterations,
            residual=residual,
        )

    # the update --------------------------------------------------------------------------
    def forcing(self, n: int):
        """Load at step ``n`` (interior), or None if there is no source."""
        if self.load is None:
            return None
        k, nu, src = self.cfg.k, self.ops.params.nu, self.cfg.source
        t_n, t_m = n * k, (n - 1) * k
        jump = time_factor(src, t_n) - time_factor(src, t_m)
        integral = integrate_source_in_time(src, t_m, t_n)
        return ((k * k / (2.0 * nu)) * jump + (k / nu) * integral) * self.load

    def step(self, state: TimeState) -> TimeState:
        k, nu = self.cfg.k, self.ops.params.nu
        wc = state.w_curr[self.vint]
        wp = state.w_prev[self.vint]
        rhs = -(k * k / nu) * (self.ops.stiffness_interior @ wc)
        f = self.forcing(state.n)
        if f is not None:
            rhs = rhs + f
        x0 = None if state.increment is None else self._cols(state.increment)
        try:
            delta, report = cg_solve(self.ops.mass_interior, self._cols(rhs), self.solver, x0=x0)
        except SolverError as exc:
            raise SolverError(f"mass solve failed at step {state.n}: {exc}", exc.residual_history) from exc
        delta = np.ascontiguousarray(delta.T).ravel()
        w_next_i = 2.0 * wc - wp + delta
        if not np.all(np.isfinite(w_next_i)):
            raise InstabilityError(f"non-finite displacement at step {state.n + 1}", state.n + 1)
        w_next = np.zeros_like(state.w_curr)
        w_next[self.vint] = w_next_i
        new = TimeState(
            w_prev=state.w_curr,
            w_curr=w_next,
            n=state.n + 1,
            t=(state.n + 1) * k,
            monitors=state.monitors,
            increment=delta,
        )
        new.monitors.append(self.monitor(new, report.iterations, report.residual))
        return new


def initialize(space, data: InitialData, k: float) -> tuple:
    """Nodal interpolants ``w^0 = I w0`` and ``w^1 = I (w0 + k w1)``, zero on the boundary."""
    n3 = 3 * space.num_dofs
    w0 = np.zeros(n3) if data.w0 is None else interpolate(space, data.w0)
    v1 = np.zeros(n3) if data.w1 is None else interpolate(space, data.w1)
    w1 = w0 + k * v1
    bnd = space.vector_boundary_dofs()
    w0[bnd] = 0.0
    w1[bnd] = 0.0
    return w0, w1


def second_order_start(stepper: Stepper, w0, w1):
    """Add the ``(k^2 / 2) w_tt(0)`` Taylor term to ``w^1``.

    ``nu w_tt(0) = -K w0 + g(0)`` is obtained with one mass solve.  Without
    this term the start is accurate to O(k^2) locally, which limits the
    global error to O(k) whenever the acceleration at t = 0 is nonzero.
    """
    k, nu = stepper.cfg.k, stepper.ops.params.nu
    vint = stepper.vint
    rhs = -(stepper.ops.stiffness_interior @ w0[vint])
    if stepper.load is not None:
        rhs = rhs + time_factor(stepper.cfg.source, 0.0) * stepper.load
    if not np.any(rhs):
        return w1
    acc, _ = cg_solve(stepper.ops.mass_interior, stepper._cols(rhs), stepper.solver)
    out = w1.copy()
    out[vint] += (k * k / (2.0 * nu)) * np.ascontiguousarray(acc.T).ravel()
    return out


def initial_state(stepper: Stepper, data: InitialData) -> TimeState:
    w0, w1 = initialize(stepper.space, data, stepper.cfg.k)
    if stepper.cfg.start == "taylor2":
        w1 = second_order_start(stepper, w0, w1)
    s0 = TimeState(w_prev=w0, w_curr=w0, n=0, t=0.0)
    m0 = stepper.monitor(s0)
    m0.energy = 0.0  # no predecessor at n = 0
    state = TimeState(w_prev=w0, w_curr=w1, n=1, t=stepper.cfg.k, monitors=[m0])
    state.monitors.append(stepper.monitor(state))
    return state


@dataclass
class RunResult:
    monitors: list
    snapshots: dict                  # step index -> full displacement vector
    final: TimeState
    cfl: CFLReport
    aborted: str | None = None       # message when an instability stopped the run

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(m, name) for m in self.monitors])


def default_stride(num_steps: int) -> int:
    return max(1, math.ceil(num_steps / 20))


def run(ops: Operators, cfg: SchemeConfig, data: InitialData, source_load=None,
        observer=None, snapshot_stride=None, stop_on_instability=False) -> RunResult:
    """Advance from t = 0 to T_f in N = T_f / k steps.

    ``observer(n, t, w)`` is called for every time level including 0 and 1.
    With ``stop_on_instability`` a non-finite or overflowing state ends the
    run early (recorded in ``RunResult.aborted``) instead of raising.
    """
    cfl = check_cfl(cfg.k, ops.space.mesh.h, cfg.C_sr, ops.params.nu)
    if not cfl.passed and not cfg.allow_cfl_violation:
        raise CFLRefusal(cfl)
    stepper = Stepper(ops, cfg, source_load)
    N = cfg.num_steps
    stride = default_stride(N) if snapshot_stride is None else snapshot_stride

    state = initial_state(stepper, data)
    w0 = state.w_prev
    snapshots = {0: w0}
    if observer is not None:
        observer(0, 0.0, w0)
    if N >= 1:
        if 1 % stride == 0 or N == 1:
            snapshots[1] = state.w_curr
        if observer is not None:
            observer(1, state.t, state.w_curr)
    aborted = None
    while state.n < N:
        try:
            with np.errstate(over="raise", invalid="raise"):
                state = stepper.step(state)
        except (InstabilityError, FloatingPointError, SolverError) as exc:
            if not stop_on_instability:
                if isinstance(exc, FloatingPointError):
                    raise InstabilityError(f"overflow at step {state.n + 1}", state.n + 1) from exc
                raise
            aborted = f"step {state.n + 1}: {exc}"
            break
        if state.n % stride == 0 or state.n == N:
            snapshots[state.n] = state.w_curr
        if observer is not None:
            observer(state.n, state.t, state.w_curr)
    return RunResult(monitors=state.monitors, snapshots=snapshots, final=state, cfl=cfl, aborted=aborted)
