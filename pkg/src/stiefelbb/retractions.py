"""Constraint-preserving update schemes (retractions) for St(n, p).

Every scheme maps a point X and a direction to a curve Y(tau) that stays
feasible for all tau >= 0 and leaves X with a prescribed initial velocity.
Each public function evaluates the curve at one tau and returns a
CurveEvaluation whose cached_factor allows cheap re-evaluation at another
tau during backtracking (see reevaluate).
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .manifold import _as_matrix

__all__ = [
    "RetractionScheme",
    "CurveEvaluation",
    "GeneralizedConstraint",
    "retract_new",
    "retract_new_controlled",
    "retract_polar",
    "retract_qr",
    "retract_gradproj",
    "retract_wenyin",
    "retract_geodesic",
    "retract_lowrank_column",
    "retract_generalized",
    "reevaluate",
    "qr_positive",
    "polar_project",
    "gtau_function",
]

SCHEME_KINDS = ("new", "polar", "qr", "gp", "wenyin", "geodesic", "lowrank", "generalized")
GTAU_NAMES = ("linear", "expdamped")

# kinds whose J(tau) contains the g(tau) X^T E term; gtau is ignored elsewhere
GTAU_SENSITIVE = ("new", "generalized")


def _g_linear(tau):
    return 0.5 * tau


def _g_expdamped(tau):
    return 0.5 * tau * math.exp(-tau)


_GTAU = {"linear": _g_linear, "expdamped": _g_expdamped}


def gtau_function(name):
    """Look up a g(tau) variant. Both satisfy g(0)=0, g'(0)=1/2, |g/tau| bounded."""
    try:
        return _GTAU[name]
    except KeyError:
        raise ValueError(f"unknown gtau {name!r}, expected one of {GTAU_NAMES}") from None


@dataclass(frozen=True)
class RetractionScheme:
    """A scheme family member: kind, g(tau) choice, and feasibility control.

    feasibility_control selects the drift-safe W-hat construction inside the
    solver loop; it has no effect on kinds other than "new".
    """

    kind: str = "new"
    gtau: str = "linear"
    feasibility_control: bool = True

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValueError(f"unknown scheme kind {self.kind!r}, expected one of {SCHEME_KINDS}")
        if self.gtau not in GTAU_NAMES:
            raise ValueError(f"unknown gtau {self.gtau!r}, expected one of {GTAU_NAMES}")


class CurveEvaluation:
    """One point on a feasible curve plus the reusable factor for new taus."""

    __slots__ = ("y", "tau", "cached_factor")

    def __init__(self, y, tau, cached_factor=None):
        self.y = y
        self.tau = tau
        self.cached_factor = cached_factor


def _check_lu(lu):
    d = np.abs(np.diag(lu))
    if not np.all(np.isfinite(lu)) or d.min() == 0.0:
        raise np.linalg.LinAlgError(
            "J numerically singular; the trial stepsize is catastrophically large"
        )


class _NewCurve:
    """Y(tau) = (2X + tau W) J(tau)^{-1} - X with J = I + tau^2/4 W^T W + g(tau) X^T E.

    W and the p x p blocks are tau-independent and cached; each eval costs one
    p x p assembly, one pivoted solve and one n x p product.
    """

    def __init__(self, x, w, xte, gtau):
        self.x = x
        self.w = w
        self.xte = xte
        self.wtw = w.T @ w
        self.g = gtau_function(gtau)
        self._lu = None

    def eval(self, tau):
        p = self.x.shape[1]
        j = np.eye(p) + (0.25 * tau * tau) * self.wtw + self.g(tau) * self.xte
        lu = scipy.linalg.lu_factor(j, check_finite=False)
        _check_lu(lu[0])
        b = 2.0 * self.x + tau * self.w
        y = scipy.linalg.lu_solve(lu, b.T, trans=1, check_finite=False).T - self.x
        self._lu = lu
        return y

    def trace_jinv(self):
        """tr(J^{-1}) at the last evaluated tau, for the free <S,S> shortcut."""
        if self._lu is None:
            raise ValueError("curve not evaluated yet")
        p = self.x.shape[1]
        t = scipy.linalg.lu_solve(self._lu, np.eye(p), check_finite=False)
        return float(np.trace(t))


def _new_curve_from_e(x, e, gtau):
    xte = x.T @ e
    w = x @ xte - e
    return _NewCurve(x, w, xte, gtau)


def retract_new(x, e, tau, gtau="linear"):
    """Evaluate the update scheme Y(tau) = (2X + tau W) J^{-1} - X at one tau.

    Parameters
    ----------
    x : array_like, shape (n, p)
        Feasible point.
    e : array_like, shape (n, p)
        Tangent direction at x (X^T E skew-symmetric); the curve satisfies
        Y(0) = X and Y'(0) = -E.
    tau : float
        Nonnegative evaluation parameter.
    gtau : {"linear", "expdamped"}
        The g(tau) term in J: tau/2 or tau*exp(-tau)/2.
    """
    x = _as_matrix(x, "X")
    e = _as_matrix(e, "E")
    if x.shape != e.shape:
        raise ValueError(f"shape mismatch: X {x.shape}, E {e.shape}")
    xte = x.T @ e
    viol = np.linalg.norm(xte + xte.T)
    if viol > 1e-6 * max(1.0, np.linalg.norm(e)):
        raise ValueError(f"E is not tangent at X: ||X^T E + E^T X||_F = {viol:.3e}")
    curve = _NewCurve(x, x @ xte - e, xte, gtau)
    return CurveEvaluation(curve.eval(tau), tau, curve)


def retract_new_controlled(x, g, rho, tau, gtau="linear"):
    """Same scheme with the drift-safe W-hat = -(I - X (X^T X)^{-1} X^T) D_rho.

    Accepts a possibly infeasible x; guarantees the new feasibility error does
    not exceed the current one (up to roundoff). X^T X must be invertible.
    """
    x = _as_matrix(x, "X")
    g = _as_matrix(g, "G")
    if x.shape != g.shape:
        raise ValueError(f"shape mismatch: X {x.shape}, G {g.shape}")
    xtx = x.T @ x
    xtg = x.T @ g
    try:
        cho = scipy.linalg.cho_factor(xtx, check_finite=False)
    except np.linalg.LinAlgError as err:
        raise np.linalg.LinAlgError("X^T X is singular (rank-deficient iterate)") from err
    two_rho = 2.0 * rho
    d = g - x @ (two_rho * xtg.T + (1.0 - two_rho) * xtg)
    w = x @ scipy.linalg.cho_solve(cho, x.T @ d, check_finite=False) - d
    # J takes 2 rho (X^T G - G^T X): equal to X^T D_rho on the manifold and
    # exactly skew for any X, so the curve contracts the feasibility error
    xte = two_rho * (xtg - xtg.T)
    curve = _NewCurve(x, w, xte, gtau)
    return CurveEvaluation(curve.eval(tau), tau, curve)


class _PolarCurve:
    """Y(tau) = (X - tau D)(I + tau^2 D^T D)^{-1/2} via p x p eigendecomposition."""

    def __init__(self, x, d):
        self.x = x
        self.d = d
        self.dtd = d.T @ d

    def eval(self, tau):
        p = self.x.shape[1]
        m = np.eye(p) + (tau * tau) * self.dtd
        lam, u = np.linalg.eigh(m)
        lam = np.maximum(lam, 1e-15 * lam[-1])
        inv_sqrt = (u / np.sqrt(lam)) @ u.T
        return (self.x - tau * self.d) @ inv_sqrt


def retract_polar(x, d, tau):
    """Polar scheme: Y = (X - tau D)(I + tau^2 D^T D)^{-1/2} for tangent D."""
    x = _as_matrix(x, "X")
    d = _as_matrix(d, "D")
    curve = _PolarCurve(x, d)
    return CurveEvaluation(curve.eval(tau), tau, curve)


def qr_positive(a, require_full_rank=True):
    """Thin QR factorization with the positive-diagonal convention on R."""
    q, r = np.linalg.qr(a)
    diag = np.diag(r)
    if require_full_rank and np.min(np.abs(diag)) <= 1e-12 * max(1.0, np.max(np.abs(diag))):
        raise np.linalg.LinAlgError("matrix is rank-deficient, QR factor not unique")
    s = np.where(diag < 0, -1.0, 1.0)
    return q * s, r * s[:, None]


class _QrCurve:
    def __init__(self, x, d):
        self.x = x
        self.d = d

    def eval(self, tau):
        q, _ = qr_positive(self.x - tau * self.d)
        return q


def retract_qr(x, d, tau):
    """QR scheme: Y = Q factor of X - tau D with positive-diagonal R."""
    x = _as_matrix(x, "X")
    d = _as_matrix(d, "D")
    curve = _QrCurve(x, d)
    return CurveEvaluation(curve.eval(tau), tau, curve)


def polar_project(a):
    """Projection onto St(n, p) via the polar factor, computed by thin SVD."""
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s[-1] <= 0.0:
        raise np.linalg.LinAlgError("matrix is rank-deficient, projection not unique")
    return u @ vt


class _GpCurve:
    def __init__(self, x, g):
        self.x = x
        self.g = g

    def eval(self, tau):
        return polar_project(self.x - tau * self.g)


def retract_gradproj(x, g, tau):
    """Gradient projection scheme: Y = P_St(X - tau G)."""
    x = _as_matrix(x, "X")
    g = _as_matrix(g, "G")
    curve = _GpCurve(x, g)
    return CurveEvaluation(curve.eval(tau), tau, curve)


class _WenYinCurve:
    """Y(tau) = X - tau U (I + tau/2 V^T U)^{-1} V^T X, U = [P_X D, X], V = [X, -P_X D]."""

    def __init__(self, x, d):
        pxd = d - 0.5 * x @ (x.T @ d)
        self.x = x
        self.u = np.hstack([pxd, x])
        v = np.hstack([x, -pxd])
        self.vtu = v.T @ self.u
        self.vtx = v.T @ x

    def eval(self, tau):
        p2 = self.vtu.shape[0]
        k = np.eye(p2) + (0.5 * tau) * self.vtu
        return self.x - tau * (self.u @ scipy.linalg.solve(k, self.vtx, check_finite=False))


def retract_wenyin(x, d, tau):
    """Wen-Yin scheme; equals the new scheme with g = tau/2 whenever its
    2p x 2p system is well conditioned."""
    x = _as_matrix(x, "X")
    d = _as_matrix(d, "D")
    curve = _WenYinCurve(x, d)
    return CurveEvaluation(curve.eval(tau), tau, curve)


class _GeodesicCurve:
    """Y(tau) = [X, Q] expm(tau [[-X^T D, -R^T], [R, 0]]) [I_p; 0], QR = -(I - XX^T)D."""

    def __init__(self, x, d):
        xtd = x.T @ d
        q, r = qr_positive(x @ xtd - d, require_full_rank=False)
        p = x.shape[1]
        self.block = np.block([[-xtd, -r.T], [r, np.zeros((p, p))]])
        self.frame = np.hstack([x, q])
        self.p = p

    def eval(self, tau):
        e = scipy.linalg.expm(tau * self.block)
        return self.frame @ e[:, : self.p]


def retract_geodesic(x, d, tau):
    """Geodesic scheme through the exponential of a 2p x 2p skew matrix."""
    x = _as_matrix(x, "X")
    d = _as_matrix(d, "D")
    curve = _GeodesicCurve(x, d)
    return CurveEvaluation(curve.eval(tau), tau, curve)


class _LowRankCurve:
    """New scheme with the rank-2 direction D^(q) and the analytic J^{-1}.

    q maximizes <G, D^(i)> = [diag(G^T grad F)]_i over columns; ties take the
    smallest index. Evaluation costs O(np) beyond the one-time X^T G product.
    """

    def __init__(self, x, g):
        xtg = x.T @ g
        gtx = xtg.T
        gcol_sq = np.einsum("ij,ij->j", g, g)
        diag_gnf = gcol_sq - np.einsum("ij,ji->i", gtx, gtx)
        q = int(np.argmax(diag_gnf))
        u0 = xtg[:, q]
        self.x = x
        self.q = q
        self.u0 = u0
        self.wcol = x @ u0 - g[:, q]
        self.gq_sq = float(gcol_sq[q])
        self.xqg = float(u0[q])
        self.slope_inner = float(diag_gnf[q])  # <G, D^(q)>

    def direction(self):
        """The rank-2 direction D^(q) = G_(q) e_q^T - X_(q) G_(q)^T X, materialized."""
        x = self.x
        n, p = x.shape
        d = np.zeros((n, p))
        gq = x @ self.u0 - self.wcol  # wcol = X u0 - G_(q)
        d[:, self.q] = gq
        d -= np.outer(x[:, self.q], gq @ x)
        return d

    def eval(self, tau):
        x = self.x
        p = x.shape[1]
        b = (0.5 * tau) * self.u0
        b[self.q] = 0.0
        alpha = 0.25 * tau * tau * (self.gq_sq - self.xqg**2)
        bmat = 2.0 * x
        bmat[:, self.q] += tau * self.wcol
        be = bmat[:, self.q].copy()
        bb = bmat @ b
        eq = np.zeros(p)
        eq[self.q] = 1.0
        coef = 1.0 / (1.0 + alpha)
        y = bmat - coef * (np.outer(alpha * be + bb, eq) + np.outer(bb - be, b))
        return y - x


def retract_lowrank_column(x, g, tau):
    """Single-column rank-2 scheme of the framework, J inverted analytically."""
    x = _as_matrix(x, "X")
    g = _as_matrix(g, "G")
    if x.shape != g.shape:
        raise ValueError(f"shape mismatch: X {x.shape}, G {g.shape}")
    curve = _LowRankCurve(x, g)
    return CurveEvaluation(curve.eval(tau), tau, curve)


class GeneralizedConstraint:
    """The feasible set {X : X^T H X = K} with H symmetric PSD and K SPD."""

    __slots__ = ("h", "k", "k_chol")

    def __init__(self, h, k):
        h = _as_matrix(h, "H")
        k = _as_matrix(k, "K")
        if h.shape[0] != h.shape[1] or k.shape[0] != k.shape[1]:
            raise ValueError("H and K must be square")
        hnorm = np.linalg.norm(h)
        if np.linalg.norm(h - h.T) > 1e-12 * max(1.0, hnorm):
            raise ValueError("H must be symmetric")
        try:
            self.k_chol = scipy.linalg.cho_factor(k, check_finite=False)
        except np.linalg.LinAlgError as err:
            raise ValueError("K must be symmetric positive definite") from err
        self.h = h
        self.k = k

    def feasibility(self, x) -> float:
        x = _as_matrix(x, "X")
        return float(np.linalg.norm(x.T @ (self.h @ x) - self.k))


class _GeneralizedCurve:
    """Y(tau) = (2X + tau W) J^{-1} K - X on {X^T H X = K}.

    D = G X^T H^2 X - H X G^T H X, W = -(I - X K^{-1} X^T H) D,
    J = K + tau^2/4 W^T H W + g(tau) X^T H D. The X^T H D block is
    evaluated as A - A^T with A = (X^T H G)(X^T H^2 X): this equals the
    literal product in exact arithmetic but stays skew for any X, so
    feasibility error is never fed back through J.
    """

    def __init__(self, x, g, gc, gtau="linear", hx=None, d=None):
        h, k = gc.h, gc.k
        if hx is None:
            hx = h @ x
        m1 = hx.T @ g
        m2 = hx.T @ hx
        m2 = 0.5 * (m2 + m2.T)
        if d is None:
            d = g @ m2 - hx @ m1.T
        self.d = d
        a = m1 @ m2
        xthd = a - a.T
        w = x @ scipy.linalg.cho_solve(gc.k_chol, xthd, check_finite=False) - d
        self.x = x
        self.w = w
        self.k = k
        self.wthw = w.T @ (h @ w)
        self.xthd = xthd
        self.g = gtau_function(gtau)

    def eval(self, tau):
        j = self.k + (0.25 * tau * tau) * self.wthw + self.g(tau) * self.xthd
        lu = scipy.linalg.lu_factor(j, check_finite=False)
        _check_lu(lu[0])
        b = 2.0 * self.x + tau * self.w
        t = scipy.linalg.lu_solve(lu, b.T, trans=1, check_finite=False).T
        return t @ self.k - self.x


def retract_generalized(x, g, gc, tau, gtau="linear"):
    """Generalized-constraint scheme; preserves X^T H X = K along the curve."""
    x = _as_matrix(x, "X")
    g = _as_matrix(g, "G")
    feas = gc.feasibility(x)
    if feas > 1e-10 * max(1.0, float(np.linalg.norm(gc.k))):
        raise ValueError(f"X violates X^T H X = K: error {feas:.3e}")
    curve = _GeneralizedCurve(x, g, gc, gtau)
    return CurveEvaluation(curve.eval(tau), tau, curve)


def reevaluate(curve_eval, tau_new):
    """Re-evaluate a curve at a new tau reusing its cached factor.

    Matches a fresh evaluation at tau_new exactly; only the small
    tau-dependent blocks are reassembled.
    """
    cached = curve_eval.cached_factor
    if cached is None:
        raise ValueError("CurveEvaluation has no cached factor to reuse")
    return CurveEvaluation(cached.eval(tau_new), tau_new, cached)
