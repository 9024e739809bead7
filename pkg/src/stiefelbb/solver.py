"""Adaptive feasible BB descent over orthogonality constraint sets.

One loop serves three geometries: the Stiefel manifold X^T X = I_p, the
product of unit spheres (one column each), and the generalized constraint
X^T H X = K. The loop alternates long/short BB trial steps, clamps them into
a safeguard band, backtracks against an adaptive nonmonotone reference value,
and moves along a feasibility-preserving curve of the configured scheme.
"""

import copy
import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.linalg

from .manifold import feasibility_error, random_stiefel
from .retractions import (
    GeneralizedConstraint,
    RetractionScheme,
    _GeneralizedCurve,
    _GeodesicCurve,
    _GpCurve,
    _LowRankCurve,
    _NewCurve,
    _PolarCurve,
    _QrCurve,
    _WenYinCurve,
    gtau_function,
    qr_positive,
)
from .stepsize import (
    BBState,
    LineSearchError,
    ReferenceState,
    SafeguardParams,
    _backtrack,
    abb,
    safeguard,
    update_reference,
)

__all__ = [
    "SolverConfig",
    "SolverReport",
    "SolverState",
    "STOP_REASONS",
    "prepare_state",
    "iterate_once",
    "solve",
    "solve_generalized",
]

STOP_REASONS = ("ResidualRel", "XtolFtol", "WindowedMeans", "MaxIter", "LineSearchFail")

# a starting point further than this from the constraint set is rejected
START_FEAS_TOL = 1e-6


@dataclass
class SolverConfig:
    """Tunables of the descent loop; defaults match the recommended setting."""

    rho: float = 0.25
    scheme: RetractionScheme = field(default_factory=RetractionScheme)
    eps: float = 1e-5
    eps_mode: str = "relative"
    eps_x: float = 1e-5
    eps_f: float = 1e-8
    window_t: int = 5
    max_iter: int = 3000
    safeguard: SafeguardParams = field(default_factory=SafeguardParams)
    ref_cap: int = 3
    seed: Optional[int] = None
    reorth_threshold: float = 1e-14
    max_backtracks: int = 60
    check_convergence: bool = True
    track_feasibility: bool = False

    def __post_init__(self):
        if isinstance(self.scheme, str):
            self.scheme = RetractionScheme(kind=self.scheme)
        if self.rho <= 0.0:
            raise ValueError("rho must be positive")
        for name in ("eps", "eps_x", "eps_f"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.eps_mode not in ("relative", "absolute"):
            raise ValueError("eps_mode must be 'relative' or 'absolute'")
        if self.window_t < 1:
            raise ValueError("window_t must be at least 1")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")
        if self.ref_cap < 1:
            raise ValueError("ref_cap must be at least 1")
        if self.max_backtracks < 1:
            raise ValueError("max_backtracks must be at least 1")
        if self.reorth_threshold <= 0.0:
            raise ValueError("reorth_threshold must be positive")


@dataclass
class SolverReport:
    """Outcome of one solve: the final point plus run statistics."""

    x_final: np.ndarray
    f_history: List[float]
    residual_final: float
    feasi: float
    nfge: int
    iters: int
    stop_reason: str
    wall_time: float
    feasibility_trace: Optional[List[float]] = None

    @property
    def f_initial(self) -> float:
        return self.f_history[0]

    @property
    def f_final(self) -> float:
        return self.f_history[-1]


def _problem_grad(problem, x):
    grad = getattr(problem, "grad", None)
    if grad is not None:
        return grad(x)
    return problem.fg(x)[1]


class _StiefelEngine:
    """Curves and bookkeeping on {X in R^{n x p} : X^T X = I_p}."""

    manifold = "stiefel"

    _CURVES = {
        "polar": _PolarCurve,
        "qr": _QrCurve,
        "wenyin": _WenYinCurve,
        "geodesic": _GeodesicCurve,
    }

    def __init__(self, cfg: SolverConfig):
        if cfg.scheme.kind == "generalized":
            raise ValueError("use solve_generalized for the X^T H X = K constraint")
        self.scheme = cfg.scheme
        self.rho = cfg.rho
        self.trace_eligible = cfg.scheme.kind == "new"

    def direction(self, x, g):
        """D_rho = G - X (2 rho G^T X + (1 - 2 rho) X^T G); drives the
        residual test and the secant pairs for every scheme kind."""
        xtg = x.T @ g
        two_rho = 2.0 * self.rho
        d = g - x @ (two_rho * xtg.T + (1.0 - two_rho) * xtg)
        return d, xtg

    def curve_and_slope(self, x, g, d, xtg):
        kind = self.scheme.kind
        if kind == "new":
            if self.scheme.feasibility_control:
                # drift-safe variant: the J block takes the expression
                # 2 rho (X^T G - G^T X), which equals X^T D_rho on the
                # manifold and is skew for ANY X, so it never feeds
                # feasibility error back into the curve; and
                # W-hat = -(I - X (X^T X)^{-1} X^T) D_rho has X^T W-hat = 0
                # up to solve roundoff even at a drifted X.  The roundoff
                # scales with ||D||, vanishing as the loop converges
                # (building W-hat from G instead leaves a floor of
                # eps_mach ||G|| that accumulates over long runs).
                xte = (2.0 * self.rho) * (xtg - xtg.T)
                cho = scipy.linalg.cho_factor(x.T @ x, check_finite=False)
                w = x @ scipy.linalg.cho_solve(cho, x.T @ d, check_finite=False) - d
            else:
                # plain variant, formulas evaluated as written: both the
                # projection W = -(I - X X^T) D_rho and the J block X^T D_rho
                # are taken literally.  Once X drifts, X^T W = (X^T X - I)
                # X^T D != 0 and sym(X^T D) != 0, and both feed the drift
                # back into the next iterate, so orthonormality error grows
                # along the run.
                xtd = x.T @ d
                xte = xtd
                w = x @ xtd - d
            curve = _NewCurve(x, w, xte, self.scheme.gtau)
            slope = -float(np.vdot(g, d))
        elif kind == "gp":
            curve = _GpCurve(x, g)
            e = g - x @ (0.5 * (xtg + xtg.T))
            slope = -float(np.vdot(g, e))
        elif kind == "lowrank":
            curve = _LowRankCurve(x, g)
            slope = -curve.slope_inner
        else:
            curve = self._CURVES[kind](x, d)
            slope = -float(np.vdot(g, d))
        return curve, slope

    def feasibility(self, x) -> float:
        return feasibility_error(x)

    def reorthogonalize(self, x):
        return qr_positive(x)[0]

    def dim_scale(self, x) -> float:
        return math.sqrt(x.shape[0])

    def random_start(self, shape, seed):
        n, p = shape
        return random_stiefel(n, p, seed)


class _SphereCurve:
    """Per-column curve of the new scheme on a product of unit spheres.

    For a single sphere the g(tau) x^T E block of J is a 1x1 skew matrix,
    i.e. exactly zero in exact arithmetic, so the drift-safe evaluation
    drops it and J is the diagonal J_i = 1 + tau^2/4 ||w_i||^2.  The
    literal evaluation (vtd given) keeps the g(tau) v_i^T d_i term as
    written; once a column drifts off unit norm that term is nonzero and
    feeds the drift back into the next iterate.
    """

    def __init__(self, v, w, vtd=None, gtau="linear"):
        self.v = v
        self.w = w
        self.wsq = np.einsum("ij,ij->j", w, w)
        self.vtd = vtd
        self.gtau = gtau
        self._j = None

    def eval(self, tau):
        j = 1.0 + (0.25 * tau * tau) * self.wsq
        if self.vtd is not None:
            j = j + gtau_function(self.gtau)(tau) * self.vtd
        if not np.all(np.isfinite(j)) or np.any(j == 0.0):
            raise np.linalg.LinAlgError("diagonal J numerically singular")
        y = (2.0 * self.v + tau * self.w) / j - self.v
        self._j = j
        return y

    def trace_jinv(self) -> float:
        if self._j is None:
            raise ValueError("curve not evaluated yet")
        return float(np.sum(1.0 / self._j))


class _SphereEngine:
    """The same loop on {V in R^{r x n} : every column has unit norm}."""

    manifold = "spheres"

    def __init__(self, cfg: SolverConfig):
        if cfg.scheme.kind != "new":
            raise ValueError(
                "the sphere-product geometry supports only scheme kind 'new'"
            )
        self.scheme = cfg.scheme
        self.trace_eligible = True

    def direction(self, v, g):
        vg = np.einsum("ij,ij->j", v, g)
        d = g - v * vg
        return d, vg

    def curve_and_slope(self, v, g, d, vg):
        vtd = np.einsum("ij,ij->j", v, d)
        if self.scheme.feasibility_control:
            # v_i^T w_i = 0 exactly, even after the columns have drifted,
            # and the 1x1 g(tau) block of J is dropped (exact skew = 0)
            vv = np.einsum("ij,ij->j", v, v)
            w = v * (vtd / vv) - d
            curve = _SphereCurve(v, w)
        else:
            # formulas as written: w_i = -(I - v_i v_i^T) d_i and the
            # g(tau) v_i^T d_i term kept literally; both are nonzero once a
            # column drifts and amplify the drift
            w = v * vtd - d
            curve = _SphereCurve(v, w, vtd, self.scheme.gtau)
        slope = -float(np.vdot(g, d))
        return curve, slope

    def feasibility(self, v) -> float:
        return float(np.linalg.norm(np.einsum("ij,ij->j", v, v) - 1.0))

    def reorthogonalize(self, v):
        return v / np.linalg.norm(v, axis=0)

    def dim_scale(self, v) -> float:
        return math.sqrt(v.shape[1])

    def random_start(self, shape, seed):
        r, n = shape
        rng = np.random.default_rng(seed)
        v = rng.standard_normal((r, n))
        norms = np.linalg.norm(v, axis=0)
        bad = norms == 0.0
        if np.any(bad):
            v[0, bad] = 1.0
            norms[bad] = 1.0
        return v / norms


class _GeneralizedEngine:
    """The loop on {X : X^T H X = K}; BB inner products are taken directly."""

    manifold = "generalized"

    def __init__(self, cfg: SolverConfig, gc: GeneralizedConstraint):
        if cfg.scheme.kind not in ("new", "generalized"):
            raise ValueError(
                "the generalized constraint supports only the 'new' scheme family"
            )
        self.gc = gc
        self.gtau = cfg.scheme.gtau
        self.trace_eligible = False
        self.k_lower = scipy.linalg.cholesky(gc.k, lower=True)

    def direction(self, x, g):
        hx = self.gc.h @ x
        d = g @ (hx.T @ hx) - hx @ (g.T @ hx)
        return d, hx

    def curve_and_slope(self, x, g, d, hx):
        curve = _GeneralizedCurve(x, g, self.gc, self.gtau, hx=hx, d=d)
        slope = -float(np.vdot(g, d))
        return curve, slope

    def feasibility(self, x) -> float:
        return self.gc.feasibility(x)

    def reorthogonalize(self, x):
        m = x.T @ (self.gc.h @ x)
        l = scipy.linalg.cholesky(m, lower=True)
        # X L^{-T} L_K^T restores X^T H X = K exactly (up to roundoff)
        z = scipy.linalg.solve_triangular(l, x.T, lower=True)
        return z.T @ self.k_lower.T

    def dim_scale(self, x) -> float:
        return math.sqrt(x.shape[0])

    def random_start(self, shape, seed):
        n, p = shape
        rng = np.random.default_rng(seed)
        return self.reorthogonalize(rng.standard_normal((n, p)))


@dataclass
class SolverState:
    """Everything iterate_once needs; deep-copyable for snapshotting."""

    problem: object
    cfg: SolverConfig
    engine: object
    x: np.ndarray
    f: float
    g: np.ndarray
    d: np.ndarray
    d_norm: float
    ctx: object
    d0_norm: float
    tau1: float
    bb: BBState
    ref: ReferenceState
    k: int = 0
    nfge: int = 1
    f_history: List[float] = field(default_factory=list)
    tolx_win: deque = field(default_factory=deque)
    tolf_win: deque = field(default_factory=deque)
    done: bool = False
    stop_reason: Optional[str] = None
    feas_trace: Optional[List[float]] = None

    def copy(self) -> "SolverState":
        return copy.deepcopy(self)


def _make_engine(problem, cfg, gc):
    if gc is not None:
        return _GeneralizedEngine(cfg, gc)
    manifold = getattr(problem, "manifold", "stiefel")
    if manifold == "stiefel":
        return _StiefelEngine(cfg)
    if manifold == "spheres":
        return _SphereEngine(cfg)
    raise ValueError(f"unknown problem manifold {manifold!r}")


def prepare_state(problem, x0=None, cfg=None, gc=None) -> SolverState:
    """Build the loop state: evaluate the start, form D and the first trial step."""
    cfg = SolverConfig() if cfg is None else cfg
    engine = _make_engine(problem, cfg, gc)
    if x0 is None:
        shape = getattr(problem, "shape", None)
        if shape is None:
            raise ValueError("need x0 or a problem exposing .shape for a random start")
        x0 = engine.random_start(shape, cfg.seed)
    else:
        x0 = np.array(np.asarray(x0), dtype=float, copy=True)
        if gc is not None:
            if engine.feasibility(x0) > 1e-12 * max(1.0, float(np.linalg.norm(gc.k))):
                x0 = engine.reorthogonalize(x0)
        else:
            feas = engine.feasibility(x0)
            if feas > START_FEAS_TOL:
                raise ValueError(
                    f"x0 violates the constraint set: feasibility error {feas:.3e}"
                )
    f0, g0 = problem.fg(x0)
    f0 = float(f0)
    if not math.isfinite(f0):
        raise FloatingPointError(f"objective non-finite at the starting point: F = {f0}")
    d, ctx = engine.direction(x0, g0)
    d_norm = float(np.linalg.norm(d))
    state = SolverState(
        problem=problem,
        cfg=cfg,
        engine=engine,
        x=x0,
        f=f0,
        g=g0,
        d=d,
        d_norm=d_norm,
        ctx=ctx,
        d0_norm=d_norm,
        tau1=0.5 / d_norm if d_norm > 0.0 else 1.0,
        bb=BBState(),
        ref=ReferenceState.fresh(f0, cfg.ref_cap),
        f_history=[f0],
        tolx_win=deque(maxlen=cfg.window_t),
        tolf_win=deque(maxlen=cfg.window_t),
    )
    if cfg.track_feasibility:
        state.feas_trace = [engine.feasibility(x0)]
    return state


def iterate_once(state: SolverState) -> SolverState:
    """Advance the loop by one accepted step (or mark the state done)."""
    if state.done:
        return state
    cfg = state.cfg
    eng = state.engine

    # stopping on the gradient residual, then on the iteration budget
    if cfg.check_convergence:
        thresh = cfg.eps * state.d0_norm if cfg.eps_mode == "relative" else cfg.eps
        if state.d_norm <= thresh:
            state.done = True
            state.stop_reason = "ResidualRel"
            return state
    if state.k >= cfg.max_iter:
        state.done = True
        state.stop_reason = "MaxIter"
        return state

    # curve of the configured scheme + adaptive nonmonotone backtracking
    curve, slope = eng.curve_and_slope(state.x, state.g, state.d, state.ctx)
    if not (math.isfinite(slope) and slope < 0.0):
        state.done = True
        state.stop_reason = "LineSearchFail"
        return state
    sg = cfg.safeguard
    try:
        tau_k, y, f_new, i_k = _backtrack(
            state.problem.value,
            curve,
            slope,
            state.tau1,
            state.ref.f_r,
            sg.sigma,
            sg.delta_armijo,
            cfg.max_backtracks,
        )
    except LineSearchError:
        state.done = True
        state.stop_reason = "LineSearchFail"
        return state
    state.nfge += 1 + i_k
    f_new = float(f_new)
    if not math.isfinite(f_new):
        raise FloatingPointError(
            f"objective non-finite at iterate {state.k + 1}: F = {f_new}"
        )

    # reference value recurrence
    update_reference(state.ref, f_new)

    # new gradient and direction, secant pair, next trial step
    g_new = _problem_grad(state.problem, y)
    d_new, ctx_new = eng.direction(y, g_new)
    d_new_norm = float(np.linalg.norm(d_new))
    bb = state.bb
    bb.s_prev = y - state.x
    bb.y_prev = d_new - state.d
    bb.k = state.k + 1
    bb.trace_jinv = curve.trace_jinv() if eng.trace_eligible else None
    s_norm_sq = bb.s_dot_s()

    f_prev = state.f
    state.x, state.f, state.g = y, f_new, g_new
    state.d, state.d_norm, state.ctx = d_new, d_new_norm, ctx_new
    state.k += 1
    state.f_history.append(f_new)
    if state.feas_trace is not None:
        state.feas_trace.append(eng.feasibility(y))

    tau0 = abb(bb)
    if tau0 is None:
        # degenerate secant pair: fall back to the previous safeguarded step
        tau0 = state.tau1
    if d_new_norm > 0.0:
        state.tau1 = safeguard(tau0, d_new_norm, sg)

    # diminishing-change tests: pointwise, then windowed means
    tol_x = math.sqrt(max(s_norm_sq, 0.0)) / eng.dim_scale(state.x)
    tol_f = abs(f_prev - f_new) / (abs(f_prev) + 1.0)
    state.tolx_win.append(tol_x)
    state.tolf_win.append(tol_f)
    if cfg.check_convergence:
        if tol_x <= cfg.eps_x and tol_f <= cfg.eps_f:
            state.done = True
            state.stop_reason = "XtolFtol"
        elif (
            float(np.mean(state.tolx_win)) <= 10.0 * cfg.eps_x
            and float(np.mean(state.tolf_win)) <= 10.0 * cfg.eps_f
        ):
            state.done = True
            state.stop_reason = "WindowedMeans"
    return state


def _run(state: SolverState) -> SolverReport:
    t0 = time.perf_counter()
    while not state.done:
        iterate_once(state)
    wall = time.perf_counter() - t0
    eng = state.engine
    x_final = state.x
    feas = eng.feasibility(x_final)
    if feas >= state.cfg.reorth_threshold:
        x_final = eng.reorthogonalize(x_final)
        feas = eng.feasibility(x_final)
    return SolverReport(
        x_final=x_final,
        f_history=list(state.f_history),
        residual_final=state.d_norm,
        feasi=feas,
        nfge=state.nfge,
        iters=state.k,
        stop_reason=state.stop_reason,
        wall_time=wall,
        feasibility_trace=(
            list(state.feas_trace) if state.feas_trace is not None else None
        ),
    )


def solve(problem, x0=None, cfg: Optional[SolverConfig] = None) -> SolverReport:
    """Minimize problem.value over the problem's constraint set from x0.

    The problem must expose value(x) -> float and fg(x) -> (float, ndarray)
    (optionally grad(x)); its `manifold` attribute selects the geometry
    ("stiefel" when absent, "spheres" for unit-column products).
    """
    return _run(prepare_state(problem, x0, cfg))


def solve_generalized(
    problem, x0, gc: GeneralizedConstraint, cfg: Optional[SolverConfig] = None
) -> SolverReport:
    """Minimize over {X : X^T H X = K}. An infeasible x0 is projected by the
    Cholesky correction X L^{-T} L_K^T before the loop starts."""
    if not isinstance(gc, GeneralizedConstraint):
        raise TypeError("gc must be a GeneralizedConstraint")
    return _run(prepare_state(problem, x0, cfg, gc=gc))
