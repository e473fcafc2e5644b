"""Resolvents, heat semigroup, vanishing-shift limits and excessivity tests."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .config import tolerances
from .errors import GreenInconclusive, SolverFailure
from .forms import GraphForm, as_domain_function, as_function

__all__ = [
    "GreenResult",
    "ExcessivityReport",
    "ContractionReport",
    "resolvent_apply",
    "semigroup_apply",
    "green_apply",
    "direct_green_solve",
    "default_alpha_schedule",
    "is_excessive",
    "check_resolvent_contraction",
]

DIRECT_SOLVER_CUTOFF = 50_000   # vertices; above this use preconditioned CG
DENSE_SEMIGROUP_CUTOFF = 500    # vertices; above this use Krylov propagation
DIVERGENCE_FACTOR = 1e12        # sup-norm blowup factor declaring divergence
DIVERGENCE_SLOPE = -0.9         # log-log slope of the trace declaring divergence


def _shifted_solve(form: GraphForm, alpha: float, rhs_active: np.ndarray) -> np.ndarray:
    """Solve (Q + alpha*M) u = rhs on the non-Dirichlet part."""
    Q = form.active_form_matrix
    mu = form.active_measure
    n = Q.shape[0]
    if n == 0:
        return np.zeros(0)
    A_diag_shift = alpha * mu

    if n <= DIRECT_SOLVER_CUTOFF:
        def make():
            return spla.splu(sp.csc_matrix(Q + sp.diags(A_diag_shift)))
        lu = form._cached(("splu", float(alpha)), make)
        u = lu.solve(rhs_active)
    else:
        A = Q + sp.diags(A_diag_shift)
        d = A.diagonal()
        precond = spla.LinearOperator((n, n), matvec=lambda x: x / d)
        u, info = spla.cg(A, rhs_active, rtol=1e-12, atol=0.0, M=precond, maxiter=20 * n)
        if info != 0:
            raise SolverFailure(f"conjugate gradient did not converge (info={info})")

    resid = np.linalg.norm((Q @ u) + A_diag_shift * u - rhs_active)
    scale = np.linalg.norm(rhs_active)
    if scale > 0 and resid > tolerances()["tol_solve"] * scale * 1e3:
        raise SolverFailure(f"solve residual {resid:.3e} exceeds tolerance (scale {scale:.3e})")
    return u


def resolvent_apply(form: GraphForm, f, alpha: float) -> np.ndarray:
    """Apply the resolvent (L + alpha)^(-1) at shift alpha > 0.

    Defined weakly by q(u, g) + alpha <u, g>_mu = <f, g>_mu for all test g; the
    output vanishes on the Dirichlet set and is nonnegative for nonnegative f.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    vec = as_function(form, f)
    act = form.active
    rhs = form.measure[act] * vec[act]
    out = np.zeros(form.n)
    out[act] = _shifted_solve(form, float(alpha), rhs)
    return out


def direct_green_solve(form: GraphForm, f) -> np.ndarray | None:
    """Exact zero-shift solve Q u = M f on the non-Dirichlet part, or None.

    Returns None when the factorization fails or the residual check rejects
    the solution (singular systems fall back to the shift-schedule limit)."""
    vec = as_function(form, f)
    act = form.active
    out = np.zeros(form.n)
    if act.size == 0:
        return out
    if act.size > DIRECT_SOLVER_CUTOFF:
        return None
    rhs = form.measure[act] * vec[act]
    Q = form.active_form_matrix
    try:
        lu = form._cached(("splu", 0.0), lambda: spla.splu(sp.csc_matrix(Q)))
    except (RuntimeError, ValueError):
        return None
    with np.errstate(all="ignore"):
        u = lu.solve(rhs)
    if not np.all(np.isfinite(u)):
        return None
    resid = float(np.linalg.norm(Q @ u - rhs))
    scale = float(np.linalg.norm(rhs))
    if scale > 0 and resid > tolerances()["tol_solve"] * scale * 1e3:
        return None
    out[act] = u
    return out


def _dense_spectral(form: GraphForm):
    def make():
        Q = form.active_form_matrix.toarray()
        mu = form.active_measure
        d = np.sqrt(mu)
        S = Q / np.outer(d, d)
        S = 0.5 * (S + S.T)
        w, V = scipy.linalg.eigh(S)
        return d, w, V
    return form._cached("dense_spectral", make)


def semigroup_apply(form: GraphForm, f, t: float,
                    dense_cutoff: int = DENSE_SEMIGROUP_CUTOFF) -> np.ndarray:
    """Apply exp(-t L).  Dense eigendecomposition below ``dense_cutoff`` vertices,
    Krylov propagation of the symmetrized generator above."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    vec = as_function(form, f)
    act = form.active
    out = np.zeros(form.n)
    if act.size == 0:
        return out
    mu = form.active_measure
    d = np.sqrt(mu)
    x = d * vec[act]
    if act.size <= dense_cutoff:
        dd, w, V = _dense_spectral(form)
        y = V @ (np.exp(-t * w) * (V.T @ x))
    else:
        Q = form.active_form_matrix
        dinv = 1.0 / d
        S = sp.diags(dinv) @ Q @ sp.diags(dinv)
        y = spla.expm_multiply((-t) * S.tocsc(), x)
    out[act] = y / d
    return out


def default_alpha_schedule(start: float = 1.0, stop: float = 1e-8,
                           ratio: float = 0.5) -> np.ndarray:
    """Geometric shift schedule decreasing from ``start`` to about ``stop``."""
    if not (0 < ratio < 1) or start <= 0 or stop <= 0 or stop > start:
        raise ValueError("need start >= stop > 0 and ratio in (0, 1)")
    n = int(np.floor(np.log(stop / start) / np.log(ratio))) + 1
    return start * ratio ** np.arange(max(n, 2))


@dataclass(frozen=True)
class GreenResult:
    """Outcome of the vanishing-shift limit G f = lim (L + alpha)^(-1) f."""

    status: str                      # "finite" or "diverges"
    value: np.ndarray | None         # the extrapolated limit when finite
    alpha_trace: tuple               # ((alpha, sup_norm), ...) as computed
    detail: str = ""

    @property
    def finite(self) -> bool:
        return self.status == "finite"


def green_apply(form: GraphForm, f, alpha_schedule=None,
                tol_green: float | None = None, try_direct: bool = True) -> GreenResult:
    """Drive the shift to zero and classify the limit.

    Nonsingular systems are solved exactly at shift zero.  Otherwise the trace
    of resolvents along the schedule is extrapolated (first-order Richardson
    in alpha); the limit counts as finite once consecutive extrapolants agree
    to ``tol_green`` in relative sup norm.  Divergence is declared on a
    sup-norm blowup past ``1e12 * sup|f|`` or a terminal log-log slope steeper
    than -0.9.  Anything else raises ``GreenInconclusive`` with the trace
    attached.
    """
    tol = tolerances()["tol_green"] if tol_green is None else float(tol_green)
    schedule = default_alpha_schedule() if alpha_schedule is None else np.asarray(alpha_schedule, dtype=float)
    if schedule.size < 2 or np.any(np.diff(schedule) >= 0) or np.any(schedule <= 0):
        raise ValueError("alpha schedule must be positive and strictly decreasing")

    vec = as_function(form, f)
    if try_direct:
        direct = direct_green_solve(form, vec)
        if direct is not None:
            sup = float(np.max(np.abs(direct))) if direct.size else 0.0
            return GreenResult("finite", direct, ((0.0, sup),),
                               detail="direct solve of the zero-shift system")
    f_sup = float(np.max(np.abs(vec))) if vec.size else 0.0
    blow = DIVERGENCE_FACTOR * max(f_sup, 1e-300)

    trace: list[tuple[float, float]] = []
    prev_u = None
    prev_alpha = None
    prev_extrap = None

    for alpha in schedule:
        u = resolvent_apply(form, vec, float(alpha))
        sup = float(np.max(np.abs(u)))
        trace.append((float(alpha), sup))

        if sup > blow:
            return GreenResult("diverges", None, tuple(trace),
                               detail=f"sup norm {sup:.3e} crossed blowup threshold")

        if prev_u is not None:
            # First-order Richardson: u(alpha) ~ u0 - alpha*C.
            extrap = u + (u - prev_u) * (alpha / (prev_alpha - alpha))
            if prev_extrap is not None:
                diff = float(np.max(np.abs(extrap - prev_extrap)))
                scale = max(float(np.max(np.abs(extrap))), 1e-300)
                if diff <= tol * scale:
                    return GreenResult("finite", extrap, tuple(trace),
                                       detail=f"stabilized at alpha={alpha:.3e}")
            prev_extrap = extrap
        prev_u = u
        prev_alpha = alpha

    tail = trace[-min(5, len(trace)):]
    la = np.log([a for a, _ in tail])
    ln = np.log([max(s, 1e-300) for _, s in tail])
    slope = float(np.polyfit(la, ln, 1)[0]) if len(tail) >= 3 else 0.0
    if slope <= DIVERGENCE_SLOPE:
        return GreenResult("diverges", None, tuple(trace),
                           detail=f"terminal log-log slope {slope:.3f}")
    raise GreenInconclusive(
        f"trace neither stabilized nor diverged (terminal slope {slope:.3f})",
        trace=tuple(trace),
    )


@dataclass(frozen=True)
class ExcessivityReport:
    """Algebraic and resolvent-grid excessivity tests for a nonnegative h."""

    excessive: bool
    algebraic_min: float          # min of L h over the non-Dirichlet part
    grid_max_violation: float     # max over the grid of max(alpha*G_alpha h - h)
    grid_excessive: bool
    agree: bool
    tol_used: float


def is_excessive(form: GraphForm, h, alpha_grid=None,
                 tol: float | None = None) -> ExcessivityReport:
    """Test whether h is excessive: L h >= 0 (ground truth), cross-checked by
    alpha * G_alpha h <= h on a shift grid."""
    hv = as_domain_function(form, h)
    if np.any(hv < 0):
        floor = float(hv.min())
        if floor < -1e-12 * max(float(np.max(np.abs(hv))), 1.0):
            raise ValueError(f"h must be nonnegative (min {floor:.3e})")
        hv = np.maximum(hv, 0.0)

    tols = tolerances()
    tol_exc = tols["tol_exc"] if tol is None else float(tol)
    h_sup = float(np.max(hv)) if hv.size else 0.0
    scale_L = max(form.operator_norm_bound() * max(h_sup, 1.0), 1.0)

    act = form.active
    Lh = (form.form_matrix[act] @ hv) / form.measure[act]
    algebraic_min = float(Lh.min()) if Lh.size else 0.0
    alg_ok = algebraic_min >= -tol_exc * scale_L

    if alpha_grid is None:
        s = max(form.operator_norm_bound(), 1.0)
        alpha_grid = s * np.logspace(-2, 2, 9)
    worst = -np.inf
    for alpha in np.asarray(alpha_grid, dtype=float):
        u = resolvent_apply(form, hv, alpha)
        worst = max(worst, float(np.max(alpha * u - hv)))
    grid_ok = worst <= tol_exc * max(h_sup, 1.0)

    return ExcessivityReport(
        excessive=alg_ok,
        algebraic_min=algebraic_min,
        grid_max_violation=float(worst),
        grid_excessive=grid_ok,
        agree=(alg_ok == grid_ok),
        tol_used=tol_exc,
    )


@dataclass(frozen=True)
class ContractionReport:
    """Energy and defect bounds for the smoothed function alpha * G_alpha f."""

    q_smoothed: float    # q(alpha * G_alpha f), bounded by q_input
    q_input: float       # q(f)
    defect_energy: float # alpha * ||f - alpha G_alpha f||_mu^2, bounded by q_input

    @property
    def energy_ok(self) -> bool:
        slack = tolerances()["tol_ineq"] * max(self.q_input, 1.0)
        return self.q_smoothed <= self.q_input + slack

    @property
    def defect_ok(self) -> bool:
        slack = tolerances()["tol_ineq"] * max(self.q_input, 1.0)
        return self.defect_energy <= self.q_input + slack


def check_resolvent_contraction(form: GraphForm, f, alpha: float) -> ContractionReport:
    """Evaluate both smoothing bounds for the resolvent at shift alpha."""
    from .forms import evaluate

    vec = as_domain_function(form, f)
    u = alpha * resolvent_apply(form, vec, alpha)
    diff = vec - u
    defect = alpha * float(np.sum(diff * diff * form.measure))
    return ContractionReport(
        q_smoothed=evaluate(form, u),
        q_input=evaluate(form, vec),
        defect_energy=defect,
    )
