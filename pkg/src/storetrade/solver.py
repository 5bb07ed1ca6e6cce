"""Self-contained convex solvers for both consumption schemes.

Cost minimization is a linear program solved by an infeasible-start
primal-dual interior-point method (Boyd & Vandenberghe ch. 11 style).
Consumption balancing is solved first as a geometric program in log
space (linear objective, affine monomial rows, log-sum-exp posynomial
rows, budget relaxed to an inequality whose tightness is asserted after
the fact), then polished on the exact linear storage system by an
equality-constrained log-barrier Newton method. Every returned optimum
is re-validated against the exact constraints and certified through
KKT residuals; no unvalidated point is ever handed back.

All iterations are deterministic: fixed orderings, no randomization, so
identical inputs give identical outputs on one platform.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .domain import ScenarioInput, Scheme, Solution, effective_soc_bounds
from .model import (
    EPSILON_KWH,
    PosynomialConstraint,
    ProblemInstance,
    build_posynomial_constraints,
    check_feasible,
)

__all__ = [
    "SolverConfig",
    "SolveStatus",
    "SolveDiagnostics",
    "KktMultipliers",
    "KktReport",
    "solve_cost_min",
    "solve_balance",
    "verify_kkt",
]


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and iteration limits shared by both solvers."""

    tol_feas: float = 1e-8
    tol_opt: float = 1e-6
    max_outer: int = 200
    max_newton: int = 50
    barrier_mu: float = 10.0

    def __post_init__(self) -> None:
        if min(self.tol_feas, self.tol_opt, self.barrier_mu) <= 0.0:
            raise ValueError("tolerances and barrier_mu must be positive")
        if self.tol_feas > 1e-4:
            raise ValueError("tol_feas must be at most 1e-4")
        if self.max_outer <= 0 or self.max_newton <= 0:
            raise ValueError("iteration limits must be positive")


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class SolveDiagnostics:
    """Solve outcome: status, effort, certified gap, worst violation."""

    status: SolveStatus
    iterations: int
    final_gap: float
    max_violation: float
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class KktMultipliers:
    """Dual estimates aligned to the canonical inequality/equality rows."""

    ineq: np.ndarray
    eq: np.ndarray


@dataclass(frozen=True)
class KktReport:
    """Normalized first-order optimality residuals at a candidate point."""

    stationarity: float
    primal: float
    dual: float
    complementarity: float
    tol: float

    @property
    def ok(self) -> bool:
        worst = max(self.stationarity, self.primal, self.dual, self.complementarity)
        return worst <= self.tol

    @property
    def max_residual(self) -> float:
        return max(self.stationarity, self.primal, self.dual, self.complementarity)


# ---------------------------------------------------------------------------
# Canonical constraint system
# ---------------------------------------------------------------------------


def _canonical_rows(pi: ProblemInstance) -> tuple[np.ndarray, np.ndarray, list[tuple[str, int]]]:
    """Inequality rows G c <= h in canonical (family, period) order."""
    n = pi.n
    eye = np.eye(n)
    blocks = [
        (eye, pi.box_upper, "box_upper"),
        (-eye, -pi.box_lower, "box_lower"),
        (pi.storage_matrix, pi.storage_upper, "storage_upper"),
        (-pi.storage_matrix, -pi.storage_lower, "storage_lower"),
    ]
    mats = [m for m, _, _ in blocks]
    hs = [h for _, h, _ in blocks]
    names = [(fam, i + 1) for _, _, fam in blocks for i in range(n)]
    if pi.savings_weights is not None:
        mats.append(pi.savings_weights[None, :])
        hs.append(np.array([pi.savings_bound]))
        names.append(("savings", 0))
    return np.vstack(mats), np.concatenate(hs), names


def _solver_rows(pi: ProblemInstance) -> tuple[np.ndarray, np.ndarray, list[int], list[str]]:
    """Inequality rows actually iterated on, plus their canonical indices.

    The final storage rows are identically tight on the budget-equality
    manifold (they restate the pinned final charge) and their normals are
    proportional to the budget row, so they are dropped here: any KKT
    certificate of the reduced system extends to the full one with zero
    multipliers on the dropped rows. The savings row is likewise dropped
    when the price vector is proportional to the discount vector, which
    makes it constant on the manifold.
    """
    G, h, names = _canonical_rows(pi)
    n = pi.n
    drop = {2 * n + n - 1, 3 * n + n - 1}  # storage_upper[N], storage_lower[N]
    notes: list[str] = []
    if pi.savings_weights is not None:
        p_row = pi.savings_weights
        d_row = pi.budget_lhs.factors
        cross = float(p_row @ d_row) ** 2
        denom = float(p_row @ p_row) * float(d_row @ d_row)
        if denom > 0.0 and cross >= denom * (1.0 - 1e-12):
            drop.add(len(h) - 1)
            notes.append("savings_constant_on_budget")
    keep = [i for i in range(len(h)) if i not in drop]
    return G[keep], h[keep], keep, notes


def _objective_grad(pi: ProblemInstance, c: np.ndarray) -> np.ndarray:
    if pi.objective.kind is Scheme.COST_MIN:
        return pi.objective.weights.copy()
    return -pi.objective.weights / np.maximum(c, 1e-300)


def _objective_value(pi: ProblemInstance, c: np.ndarray) -> float:
    if pi.objective.kind is Scheme.COST_MIN:
        return float(pi.objective.weights @ c)
    return float(-pi.objective.weights @ np.log(np.maximum(c, 1e-300)))


# ---------------------------------------------------------------------------
# KKT verification
# ---------------------------------------------------------------------------


def _fit_multipliers(
    grad_f: np.ndarray,
    G: np.ndarray,
    h: np.ndarray,
    A_eq: np.ndarray,
    c: np.ndarray,
    act_tol: float = 1e-6,
) -> KktMultipliers:
    """Least-squares multiplier fit over active rows, negatives pruned."""
    slack = h - G @ c
    active = np.flatnonzero(slack <= act_tol * (1.0 + np.abs(h)))
    lam = np.zeros(len(h))
    keep = list(active)
    nu = np.zeros(A_eq.shape[0])
    for _ in range(len(active) + 1):
        cols = [G[keep].T] if keep else []
        cols.append(A_eq.T)
        B = np.hstack(cols) if keep else A_eq.T
        z, *_ = np.linalg.lstsq(B, -grad_f, rcond=None)
        z_in = z[: len(keep)]
        nu = z[len(keep):]
        if len(keep) == 0 or np.all(z_in >= -1e-12):
            lam[:] = 0.0
            lam[keep] = np.maximum(z_in, 0.0)
            break
        worst = int(np.argmin(z_in))
        keep.pop(worst)
    return KktMultipliers(ineq=lam, eq=nu)


def verify_kkt(
    pi: ProblemInstance,
    c,
    multipliers: KktMultipliers | None = None,
    tol: float = 1e-6,
) -> KktReport:
    """First-order optimality residuals for a candidate consumption vector.

    Checks stationarity of the Lagrangian, primal feasibility against the
    exact linear system, dual feasibility (nonnegative inequality
    multipliers) and complementary slackness, all normalized so ``tol``
    is a relative threshold. When no multipliers are supplied they are
    fitted by constrained least squares over the active rows, which is
    sound here because every constraint is linear.
    """
    c = np.asarray(c, dtype=float)
    G, h, _ = _canonical_rows(pi)
    A_eq = pi.budget_lhs.factors[None, :]
    b_eq = np.array([pi.budget_rhs])
    grad_f = _objective_grad(pi, c)

    if multipliers is None or np.any(multipliers.ineq < 0.0):
        multipliers = _fit_multipliers(grad_f, G, h, A_eq, c)
    lam, nu = multipliers.ineq, multipliers.eq

    stat = grad_f + G.T @ lam + A_eq.T @ nu
    stationarity = float(np.max(np.abs(stat))) / (1.0 + float(np.max(np.abs(grad_f))))

    slack = h - G @ c
    primal_ineq = float(np.max(-slack / (1.0 + np.abs(h))))
    primal_eq = float(np.max(np.abs(A_eq @ c - b_eq) / (1.0 + np.abs(b_eq))))
    primal = max(primal_ineq, primal_eq, 0.0)

    dual = max(0.0, -float(lam.min())) if len(lam) else 0.0
    fval = abs(_objective_value(pi, c))
    comp = float(np.max(np.abs(lam * slack))) / (1.0 + fval) if len(lam) else 0.0

    return KktReport(stationarity, primal, dual, comp, tol)


# ---------------------------------------------------------------------------
# Pinned cases: no usable storage window means the plan is forced.
# ---------------------------------------------------------------------------


def _pinned_solution(
    pi: ProblemInstance, s: ScenarioInput, cfg: SolverConfig
) -> Solution | None:
    b_lo, b_hi = effective_soc_bounds(s.battery)
    if b_hi - b_lo > 1e-15 * (1.0 + b_hi):
        return None
    r = s.battery.loss_rate
    n = s.n_periods
    c = s.loads + r * b_lo
    levels = np.full(n, b_lo)
    report = check_feasible(s, c, cfg.tol_feas, scheme=pi.objective.kind)
    scheme = pi.objective.kind
    obj = (
        float(s.prices @ c)
        if scheme is Scheme.COST_MIN
        else float(np.exp(pi.objective.weights @ np.log(np.maximum(c, 1e-300))))
    )
    diag = SolveDiagnostics(
        status=SolveStatus.OPTIMAL if report.feasible else SolveStatus.INFEASIBLE,
        iterations=0,
        final_gap=0.0,
        max_violation=report.max_violation,
        notes=("pinned_window",),
    )
    return Solution(c, levels, obj, scheme, diag)


def _trajectory_start(s: ScenarioInput, target_final: bool) -> np.ndarray:
    """Consumption from a charge path kept near mid-window.

    Satisfies the storage and box systems (weakly) and c >= 0 by
    construction; with ``target_final`` the path ends exactly at the
    required final charge so the budget equality holds identically.
    """
    b_lo, b_hi = effective_soc_bounds(s.battery)
    width = b_hi - b_lo
    decay = 1.0 - s.battery.loss_rate
    n = s.n_periods
    prev = s.battery.initial_charge_kwh
    levels = np.empty(n)
    for i in range(n):
        if target_final and i == n - 1:
            target = s.battery.final_charge_kwh
        else:
            target = b_lo + width * (0.45 + 0.1 * (i + 1) / n)
        levels[i] = min(b_hi, max(target, prev * decay - s.loads[i]))
        prev = levels[i]
    prevs = np.concatenate(([s.battery.initial_charge_kwh], levels[:-1]))
    return np.maximum(s.loads + levels - prevs * decay, 0.0)


# ---------------------------------------------------------------------------
# Linear programming: infeasible-start primal-dual interior point
# ---------------------------------------------------------------------------


def _pdip_lp(
    p: np.ndarray,
    G: np.ndarray,
    h: np.ndarray,
    a_eq: np.ndarray,
    b_eq: float,
    c0: np.ndarray,
    cfg: SolverConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int, float, bool, str]:
    m, n = G.shape
    # Tiny outward inflation guarantees a strict interior even when the
    # true polytope is a face; the slack is far below tol_feas.
    h_in = h + 1e-10 * (1.0 + np.abs(h))
    c = c0.copy()
    slack = h_in - G @ c
    if np.any(slack <= 0.0):
        return c, np.ones(m), np.zeros(1), 0, math.inf, False, "no strict interior"
    lam = np.minimum(1.0 / slack, 1e8)
    nu = np.zeros(1)
    mu = cfg.barrier_mu
    p_scale = 1.0 + float(np.max(np.abs(p)))
    b_scale = 1.0 + abs(b_eq)

    def residuals(c, lam, nu, t):
        s = h_in - G @ c
        r_dual = p + G.T @ lam + a_eq * nu[0]
        r_cent = lam * s - 1.0 / t
        r_pri = np.array([a_eq @ c - b_eq])
        return r_dual, r_cent, r_pri, s

    gap = float(slack @ lam)
    converged = False
    it = 0
    message = ""
    for it in range(1, cfg.max_outer + 1):
        s = h_in - G @ c
        gap = float(s @ lam)
        t = mu * m / gap
        r_dual, r_cent, r_pri, s = residuals(c, lam, nu, t)
        obj_scale = 1.0 + abs(float(p @ c))
        if (
            np.max(np.abs(r_pri)) <= cfg.tol_feas * b_scale
            and np.max(np.abs(r_dual)) <= cfg.tol_opt * p_scale
            and gap <= cfg.tol_opt * obj_scale
        ):
            converged = True
            break

        w = lam / s
        H = (G.T * w) @ G
        rhs_c = -r_dual + G.T @ (r_cent / s)
        kkt = np.zeros((n + 1, n + 1))
        kkt[:n, :n] = H
        kkt[:n, n] = a_eq
        kkt[n, :n] = a_eq
        rhs = np.concatenate([rhs_c, -r_pri])
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            kkt[:n, :n] += (1e-12 * (1.0 + np.trace(H) / n)) * np.eye(n)
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                message = "singular KKT system"
                break
        dc, dnu = sol[:n], sol[n:]
        dlam = (lam * (G @ dc) - r_cent) / s

        neg = dlam < 0.0
        alpha = 1.0
        if np.any(neg):
            alpha = min(1.0, 0.99 * float(np.min(-lam[neg] / dlam[neg])))
        norm0 = math.sqrt(
            float(r_dual @ r_dual) + float(r_cent @ r_cent) + float(r_pri @ r_pri)
        )
        ok = False
        for _ in range(60):
            c_n = c + alpha * dc
            lam_n = lam + alpha * dlam
            nu_n = nu + alpha * dnu
            s_n = h_in - G @ c_n
            if np.all(s_n > 0.0) and np.all(lam_n > 0.0):
                rd, rc, rp, _ = residuals(c_n, lam_n, nu_n, t)
                norm1 = math.sqrt(
                    float(rd @ rd) + float(rc @ rc) + float(rp @ rp)
                )
                if norm1 <= (1.0 - 0.01 * alpha) * norm0:
                    ok = True
                    break
            alpha *= 0.5
        if not ok:
            message = "line search stalled"
            break
        c, lam, nu = c_n, lam_n, nu_n
    gap_rel = gap / (1.0 + abs(float(p @ c)))
    return c, lam, nu, it, gap_rel, converged, message


def solve_cost_min(pi: ProblemInstance, cfg: SolverConfig = SolverConfig()) -> Solution:
    """Minimize total billed cost over the exact constraint polytope.

    Returns a Solution whose diagnostics certify optimality through KKT
    residuals at the returned point; the recovered battery trajectory and
    all constraint families are re-validated independently of the solver
    iteration.
    """
    if pi.objective.kind is not Scheme.COST_MIN:
        raise ValueError("solve_cost_min requires a WeightedCostMin objective")
    s = pi.scenario
    pinned = _pinned_solution(pi, s, cfg)
    if pinned is not None:
        return pinned

    G, h, keep, _ = _solver_rows(pi)
    a_eq = pi.budget_lhs.factors
    c0 = _trajectory_start(s, target_final=False)
    p = pi.objective.weights
    c, lam, nu, iters, gap, converged, message = _pdip_lp(
        p, G, h, a_eq, pi.budget_rhs, c0, cfg
    )

    lam_full = np.zeros(4 * pi.n)
    lam_full[keep] = lam
    report = check_feasible(s, c, cfg.tol_feas)
    kkt = verify_kkt(pi, c, KktMultipliers(lam_full, nu), tol=cfg.tol_opt)
    notes = []
    if message:
        notes.append(message)
    if converged and report.feasible and kkt.ok:
        status = SolveStatus.OPTIMAL
    elif not converged and iters >= cfg.max_outer:
        status = SolveStatus.ITERATION_LIMIT
    else:
        status = SolveStatus.NUMERICAL_FAILURE
    from .analysis import recover_trajectory

    diag = SolveDiagnostics(
        status=status,
        iterations=iters,
        final_gap=max(gap, kkt.max_residual),
        max_violation=report.max_violation,
        notes=tuple(notes),
    )
    return Solution(c, recover_trajectory(s, c), float(p @ c), Scheme.COST_MIN, diag)


# ---------------------------------------------------------------------------
# Geometric program in log space
# ---------------------------------------------------------------------------


class _LseBlock:
    """One constraint ln(sum exp(M y + b)) <= 0 with cached derivatives."""

    __slots__ = ("M", "b", "affine")

    def __init__(self, M: np.ndarray, b: np.ndarray):
        self.M = M
        self.b = b
        self.affine = M.shape[0] == 1

    def value(self, y: np.ndarray) -> float:
        z = self.M @ y + self.b
        zm = float(np.max(z))
        return zm + math.log(float(np.sum(np.exp(z - zm))))

    def value_grad_hess(self, y: np.ndarray):
        z = self.M @ y + self.b
        zm = float(np.max(z))
        w = np.exp(z - zm)
        total = float(w.sum())
        val = zm + math.log(total)
        q = w / total
        grad = self.M.T @ q
        if self.affine:
            hess = None
        else:
            Mq = self.M * q[:, None]
            hess = Mq.T @ self.M - np.outer(grad, grad)
        return val, grad, hess


def _posy_blocks(n: int, constraints: list[PosynomialConstraint]) -> list[_LseBlock]:
    blocks = []
    for con in constraints:
        t = len(con.coefs)
        M = np.zeros((t, n))
        M[np.arange(t), con.var_idx] = con.expos
        blocks.append(_LseBlock(M, np.log(con.coefs)))
    return blocks


def _budget_block(pi: ProblemInstance) -> _LseBlock | None:
    if pi.budget_rhs <= 0.0:
        return None
    n = pi.n
    return _LseBlock(np.eye(n), np.log(pi.budget_lhs.factors / pi.budget_rhs))


def _barrier_minimize_y(
    obj: np.ndarray,
    blocks: list[_LseBlock],
    y0: np.ndarray,
    cfg: SolverConfig,
    gap_rel: float,
    early_exit=None,
):
    """Log-barrier minimization of obj . y subject to all block values < 0.

    Newton inner iterations with Armijo backtracking (0.25 / 0.5);
    barrier parameter multiplied by barrier_mu per outer round starting
    from 1. Returns (y, t_final, newton_steps) or None on breakdown.
    """
    m = len(blocks)
    y = y0.copy()
    t = 1.0
    steps = 0

    def psi(yv: np.ndarray) -> float:
        total = t * float(obj @ yv)
        for blk in blocks:
            v = blk.value(yv)
            if v >= 0.0:
                return math.inf
            total -= math.log(-v)
        return total

    for _ in range(cfg.max_outer):
        for _ in range(cfg.max_newton):
            grad = t * obj
            H = np.zeros((len(y), len(y)))
            feasible = True
            for blk in blocks:
                v, g, hess = blk.value_grad_hess(y)
                if v >= 0.0:
                    feasible = False
                    break
                inv = 1.0 / (-v)
                grad = grad + g * inv
                H += np.outer(g, g) * inv * inv
                if hess is not None:
                    H += hess * inv
            if not feasible:
                return None
            try:
                dy = np.linalg.solve(H, -grad)
            except np.linalg.LinAlgError:
                H = H + (1e-12 * (1.0 + np.trace(H) / len(y))) * np.eye(len(y))
                try:
                    dy = np.linalg.solve(H, -grad)
                except np.linalg.LinAlgError:
                    return None
            decrement = -float(grad @ dy)
            steps += 1
            if not math.isfinite(decrement) or decrement / 2.0 <= 1e-10:
                break
            base = psi(y)
            slack = 1e-13 * (1.0 + abs(base))
            alpha = 1.0
            accepted = False
            for _ in range(60):
                cand = y + alpha * dy
                if psi(cand) <= base + 0.25 * alpha * float(grad @ dy) + slack:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                break
            y = y + alpha * dy
            if early_exit is not None and early_exit(y):
                return y, t, steps
        fscale = 1.0 + abs(float(obj @ y))
        if m / t <= gap_rel * fscale:
            break
        t *= cfg.barrier_mu
    return y, t, steps


def _gp_phase1(
    blocks: list[_LseBlock], y_guess: np.ndarray, cfg: SolverConfig
) -> np.ndarray | None:
    """Find y with all block values strictly negative, or None."""
    n = len(y_guess)
    ext = []
    for blk in blocks:
        M = np.hstack([blk.M, -np.ones((blk.M.shape[0], 1))])
        ext.append(_LseBlock(M, blk.b))
    vals = [blk.value(y_guess) for blk in blocks]
    s0 = max(vals) + 0.1 * (1.0 + abs(max(vals)))
    x0 = np.concatenate([y_guess, [s0]])
    obj = np.zeros(n + 1)
    obj[n] = 1.0

    margin = 1e-10

    def early(x: np.ndarray) -> bool:
        return bool(x[n] < -margin and max(b.value(x[:n]) for b in blocks) < -margin)

    result = _barrier_minimize_y(obj, ext, x0, cfg, gap_rel=1e-6, early_exit=early)
    if result is None:
        return None
    x, _, _ = result
    if max(b.value(x[:n]) for b in blocks) < -margin:
        return x[:n]
    return None


def _gp_interior_start(
    pi: ProblemInstance, blocks: list[_LseBlock], cfg: SolverConfig
) -> np.ndarray | None:
    """Strictly feasible y for the relaxed GP, by nudging from the load."""
    s = pi.scenario
    n = pi.n
    floors = np.full(n, EPSILON_KWH)
    uppers = np.maximum(pi.box_upper, EPSILON_KWH)
    # Monomial lower rows (coef * c_i^-1 <= 1, i.e. c_i >= coef).
    raw = np.maximum(s.loads, 10.0 * EPSILON_KWH)
    for con_val in (pi.box_lower,):
        floors = np.maximum(floors, con_val)
    decay = 1.0 - s.battery.loss_rate
    b_lo, b_hi = effective_soc_bounds(s.battery)
    carry = s.battery.initial_charge_kwh * decay
    for i in range(n):
        floors[i] = max(floors[i], s.loads[i] + b_lo - carry, EPSILON_KWH)
        carry = carry * decay + b_hi * decay

    fs = floors * (1.0 + 1e-9) + 1e-15
    if np.any(fs >= uppers):
        return _gp_phase1(blocks, np.log(np.maximum(raw, EPSILON_KWH)), cfg)
    direction = np.maximum(raw, fs) - fs

    # All remaining constraints are linear in c, so the largest feasible
    # step toward the load from the floor point is exact.
    rows = [(pi.budget_lhs.factors, pi.budget_rhs)]
    if pi.savings_weights is not None:
        rows.append((pi.savings_weights, pi.savings_bound))
    for i in range(n):
        rows.append((pi.storage_matrix[i], pi.storage_upper[i]))
    eye = np.eye(n)
    for i in range(n):
        rows.append((eye[i], uppers[i]))
    gamma = 1.0
    for w, bound in rows:
        at_fs = float(w @ fs)
        slope = float(w @ direction)
        room = bound - at_fs
        if room <= 0.0:
            return _gp_phase1(blocks, np.log(np.maximum(raw, EPSILON_KWH)), cfg)
        if slope > 0.0:
            gamma = min(gamma, 0.9 * room / slope)
    cand = fs + gamma * direction
    y = np.log(np.maximum(cand, 1e-300))
    if max(blk.value(y) for blk in blocks) < 0.0:
        return y
    return _gp_phase1(blocks, np.log(np.maximum(raw, EPSILON_KWH)), cfg)


# ---------------------------------------------------------------------------
# Exact refinement: equality-constrained barrier in consumption space
# ---------------------------------------------------------------------------


def _eq_newton_barrier(
    alphas: np.ndarray,
    G: np.ndarray,
    h: np.ndarray,
    A_eq: np.ndarray,
    c0: np.ndarray,
    cfg: SolverConfig,
    gap_rel: float = 1e-8,
):
    """Maximize sum alpha_i ln(c_i) over {Gc <= h, A_eq c = b_eq}.

    The start must be equality-feasible and strictly inside the
    inequalities. Returns (c, lam, nu, t, steps) or None on breakdown.
    """
    m, n = G.shape
    k = A_eq.shape[0]
    c = c0.copy()
    t = 1.0
    steps = 0

    def psi(cv: np.ndarray) -> float:
        if np.any(cv <= 0.0):
            return math.inf
        s = h - G @ cv
        if np.any(s <= 0.0):
            return math.inf
        return -t * float(alphas @ np.log(cv)) - float(np.sum(np.log(s)))

    w_eq = np.zeros(k)
    for _ in range(cfg.max_outer):
        for _ in range(cfg.max_newton):
            s = h - G @ c
            grad = -t * alphas / c + G.T @ (1.0 / s)
            H = np.diag(t * alphas / c**2) + (G.T * (1.0 / s**2)) @ G
            kkt = np.zeros((n + k, n + k))
            kkt[:n, :n] = H
            kkt[:n, n:] = A_eq.T
            kkt[n:, :n] = A_eq
            rhs = np.concatenate([-grad, np.zeros(k)])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                kkt[:n, :n] += (1e-12 * (1.0 + np.trace(H) / n)) * np.eye(n)
                try:
                    sol = np.linalg.solve(kkt, rhs)
                except np.linalg.LinAlgError:
                    return None
            dc = sol[:n]
            w_eq = sol[n:]
            decrement = -float(grad @ dc)
            steps += 1
            if not math.isfinite(decrement) or decrement / 2.0 <= 1e-10:
                break
            base = psi(c)
            slack = 1e-13 * (1.0 + abs(base))
            gdc = float(grad @ dc)
            # Exact largest step keeping Gc < h and c > 0; all rows linear.
            step_g = G @ dc
            alpha = 1.0
            pos = step_g > 0.0
            if np.any(pos):
                alpha = min(alpha, 0.995 * float(np.min(s[pos] / step_g[pos])))
            neg = dc < 0.0
            if np.any(neg):
                alpha = min(alpha, 0.995 * float(np.min(c[neg] / -dc[neg])))
            accepted = False
            for _ in range(60):
                cand = c + alpha * dc
                if psi(cand) <= base + 0.25 * alpha * gdc + slack:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                break
            c = c + alpha * dc
        fscale = 1.0 + abs(float(alphas @ np.log(c)))
        if m / t <= gap_rel * fscale:
            break
        t *= cfg.barrier_mu
    s = h - G @ c
    lam = 1.0 / (t * s)
    nu = w_eq / t
    return c, lam, nu, t, steps


def _phase1_eq(
    G: np.ndarray, h: np.ndarray, A_eq: np.ndarray, b_eq: np.ndarray, cfg: SolverConfig
) -> np.ndarray | None:
    """Strictly feasible point of {Gc <= h, A_eq c = b_eq}, or None.

    Minimizes the worst row-scaled violation s over the equality manifold
    with the same barrier machinery, bailing out as soon as s dips
    strictly negative.
    """
    m, n = G.shape
    k = A_eq.shape[0]
    c0, *_ = np.linalg.lstsq(A_eq, b_eq, rcond=None)
    weights = 1.0 + np.abs(h)
    s0 = float(np.max((G @ c0 - h) / weights)) + 1.0
    x = np.concatenate([c0, [s0]])
    Gx = np.hstack([G, -weights[:, None]])
    Ax = np.hstack([A_eq, np.zeros((k, 1))])
    t = 1.0
    margin = 1e-10

    def psi(xv: np.ndarray) -> float:
        s = h + xv[n] * weights - G @ xv[:n]
        if np.any(s <= 0.0):
            return math.inf
        return t * xv[n] - float(np.sum(np.log(s)))

    for _ in range(cfg.max_outer):
        for _ in range(cfg.max_newton):
            if x[n] < -margin:
                return x[:n]
            s = h + x[n] * weights - G @ x[:n]
            if np.any(s <= 0.0):
                return None
            grad = Gx.T @ (1.0 / s)
            grad[n] += t
            H = (Gx.T * (1.0 / s**2)) @ Gx
            kkt = np.zeros((n + 1 + k, n + 1 + k))
            kkt[: n + 1, : n + 1] = H + 1e-14 * np.eye(n + 1)
            kkt[: n + 1, n + 1 :] = Ax.T
            kkt[n + 1 :, : n + 1] = Ax
            rhs = np.concatenate([-grad, np.zeros(k)])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                return None
            dx = sol[: n + 1]
            decrement = -float(grad @ dx)
            if not math.isfinite(decrement) or decrement / 2.0 <= 1e-12:
                break
            base = psi(x)
            slack = 1e-13 * (1.0 + abs(base))
            alpha = 1.0
            accepted = False
            for _ in range(60):
                cand = x + alpha * dx
                if psi(cand) <= base + 0.25 * alpha * -decrement + slack:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                break
            x = x + alpha * dx
        if x[n] < -margin:
            return x[:n]
        t *= cfg.barrier_mu
    return x[:n] if x[n] < -margin else None


def solve_balance(
    pi: ProblemInstance, s: ScenarioInput, cfg: SolverConfig = SolverConfig()
) -> Solution:
    """Balance consumption by maximizing the weighted log utility.

    Stage one solves the log-space geometric program: linear objective in
    y = ln c, the budget as a log-sum-exp inequality (tightness asserted
    afterwards since the utility is strictly increasing), monomial rows
    affine in y and posynomial rows as log-sum-exp terms. Stage two
    polishes the answer on the exact linear storage system, restoring any
    charge-path feasibility the stage-one relaxation may have given away;
    the final point is validated and KKT-certified.
    """
    if pi.objective.kind is not Scheme.BALANCE:
        raise ValueError("solve_balance requires a CobbDouglas objective")
    pinned = _pinned_solution(pi, s, cfg)
    if pinned is not None:
        return pinned

    alphas = pi.objective.weights
    notes: list[str] = []
    iterations = 0

    budget_blk = _budget_block(pi)
    if budget_blk is None:
        diag = SolveDiagnostics(
            SolveStatus.INFEASIBLE, 0, math.inf, math.inf, ("nonpositive budget",)
        )
        empty = np.zeros(pi.n)
        return Solution(empty, empty, math.nan, Scheme.BALANCE, diag)

    posy = build_posynomial_constraints(s, pi)
    blocks = [budget_blk] + _posy_blocks(pi.n, posy)

    c_relaxed = None
    y0 = _gp_interior_start(pi, blocks, cfg)
    if y0 is not None:
        result = _barrier_minimize_y(
            -alphas, blocks, y0, cfg, gap_rel=min(cfg.tol_opt, 1e-8)
        )
        if result is not None:
            y_star, t_final, steps = result
            iterations += steps
            c_relaxed = np.exp(y_star)
            budget_slack = (
                pi.budget_rhs - float(pi.budget_lhs.factors @ c_relaxed)
            ) / (1.0 + abs(pi.budget_rhs))
            notes.append(f"gp_budget_slack={budget_slack:.3e}")
            relaxed_report = check_feasible(s, c_relaxed, cfg.tol_feas, Scheme.BALANCE)
            notes.append(f"gp_exact_violation={relaxed_report.max_violation:.3e}")
        else:
            notes.append("gp_stage_failed")
    else:
        notes.append("gp_no_interior")

    # Exact polish: same objective over the true linear system.
    G, h, keep, row_notes = _solver_rows(pi)
    notes.extend(row_notes)
    savings_kept = keep and keep[-1] == 4 * pi.n  # savings row survived the reduction
    A_eq = pi.budget_lhs.factors[None, :]
    b_eq = np.array([pi.budget_rhs])
    promoted = False

    c_start = _trajectory_start(s, target_final=True)
    ok_start = (
        np.all(c_start > 0.0)
        and np.all(G @ c_start < h)
        and abs(float(A_eq[0] @ c_start) - b_eq[0]) <= 1e-9 * (1.0 + abs(b_eq[0]))
    )
    if not ok_start:
        c_start = _phase1_eq(G, h, A_eq, b_eq, cfg)
        if c_start is not None and np.any(c_start <= 0.0):
            c_start = None
    if c_start is None and savings_kept:
        # The savings row may pin the feasible set to a face; promote it
        # to an equality and look for interior relative to that face.
        G2, h2, keep2 = G[:-1], h[:-1], keep[:-1]
        A2 = np.vstack([A_eq, pi.savings_weights[None, :]])
        b2 = np.concatenate([b_eq, [pi.savings_bound]])
        c_start = _phase1_eq(G2, h2, A2, b2, cfg)
        if c_start is not None and np.all(c_start > 0.0):
            promoted = True
            G, h, keep = G2, h2, keep2
            A_eq, b_eq = A2, b2
            notes.append("savings_promoted_to_equality")
        else:
            c_start = None

    c_final = None
    mults = None
    if c_start is not None:
        refined = _eq_newton_barrier(
            alphas, G, h, A_eq, c_start, cfg, gap_rel=min(cfg.tol_opt, 1e-8)
        )
        if refined is not None:
            c_final, lam, nu, t_final, steps = refined
            iterations += steps
            lam_full = np.zeros(4 * pi.n + 1)
            lam_full[keep] = lam
            refit = False
            if promoted:
                if nu[1] >= -1e-12:
                    lam_full[-1] = max(nu[1], 0.0)
                else:
                    # Sign-free face multiplier; a valid nonnegative
                    # certificate exists but must be refit from scratch.
                    notes.append(f"promoted_savings_multiplier={nu[1]:.3e}")
                    refit = True
                nu = nu[:1]
            mults = None if refit else KktMultipliers(ineq=lam_full, eq=nu)
            notes.append("exact_refined")
    if c_final is None and c_relaxed is not None:
        # Degenerate feasible region: fall back to the relaxed point if it
        # happens to satisfy the exact system.
        report = check_feasible(s, c_relaxed, cfg.tol_feas, Scheme.BALANCE)
        if report.feasible:
            c_final = c_relaxed
            notes.append("relaxed_point_accepted")
    if c_final is None:
        # Last resort: the do-nothing profile, feasible when boundaries
        # are zero and storage is unprofitable everywhere.
        candidate = np.maximum(s.loads, 0.0)
        report = check_feasible(s, candidate, cfg.tol_feas, Scheme.BALANCE)
        if report.feasible:
            c_final = candidate
            notes.append("pinned_load_profile")
        else:
            diag = SolveDiagnostics(
                SolveStatus.NUMERICAL_FAILURE,
                iterations,
                math.inf,
                report.max_violation,
                tuple(notes),
            )
            from .analysis import recover_trajectory

            return Solution(
                candidate,
                recover_trajectory(s, candidate),
                math.nan,
                Scheme.BALANCE,
                diag,
            )

    report = check_feasible(s, c_final, cfg.tol_feas, Scheme.BALANCE)
    # Certify with refit multipliers: the constraint system is linear, so
    # the active-set least-squares certificate is exact where the barrier
    # dual point carries centering error.
    kkt = verify_kkt(pi, c_final, None, tol=cfg.tol_opt)
    if not kkt.ok and mults is not None:
        kkt = verify_kkt(pi, c_final, mults, tol=cfg.tol_opt)
    savings_slack = (
        pi.savings_bound - float(pi.savings_weights @ c_final)
    ) / (1.0 + abs(pi.savings_bound))
    if savings_slack <= cfg.tol_opt:
        notes.append("savings_active")
    status = (
        SolveStatus.OPTIMAL
        if report.feasible and kkt.ok
        else SolveStatus.ITERATION_LIMIT
    )
    from .analysis import recover_trajectory

    utility = float(np.exp(alphas @ np.log(np.maximum(c_final, 1e-300))))
    diag = SolveDiagnostics(
        status=status,
        iterations=iterations,
        final_gap=kkt.max_residual,
        max_violation=report.max_violation,
        notes=tuple(notes),
    )
    return Solution(
        c_final, recover_trajectory(s, c_final), utility, Scheme.BALANCE, diag
    )
