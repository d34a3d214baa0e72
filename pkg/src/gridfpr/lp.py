"""Dense two-phase simplex for small linear programs.

The solver accepts the general form

    minimize    c @ x
    subject to  a_ub @ x <= b_ub
                a_eq @ x == b_eq
                lower <= x <= upper

converts it to standard form (shifted, split and slacked nonnegative
variables) and pivots with Bland's rule, which guarantees termination.
It is sized for desk-scale planning models of a few hundred variables;
auditability beats speed here, and results are cross-checked against a
brute-force vertex enumeration in the test suite. Failures surface as an
explicit status, never as a silently wrong answer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_TOL = 1e-9
_FEAS_TOL = 1e-7


@dataclass
class LinearProgram:
    c: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    names: list[str] = field(default_factory=list)
    ub_tags: list[str] = field(default_factory=list)
    eq_tags: list[str] = field(default_factory=list)

    @property
    def n_vars(self) -> int:
        return len(self.c)


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded | error
    x: np.ndarray | None = None
    objective: float | None = None
    message: str = ""


def residual(lp: LinearProgram, x: np.ndarray) -> float:
    """Largest constraint or bound violation of a candidate point."""
    worst = 0.0
    if lp.a_ub.size:
        worst = max(worst, float(np.max(lp.a_ub @ x - lp.b_ub, initial=0.0)))
    if lp.a_eq.size:
        worst = max(worst, float(np.max(np.abs(lp.a_eq @ x - lp.b_eq), initial=0.0)))
    lo_gap = np.where(np.isfinite(lp.lower), lp.lower - x, -np.inf)
    hi_gap = np.where(np.isfinite(lp.upper), x - lp.upper, -np.inf)
    worst = max(worst, float(np.max(lo_gap, initial=0.0)), float(np.max(hi_gap, initial=0.0)))
    return worst


def solve_lp(lp: LinearProgram) -> LpSolution:
    try:
        solution = _solve(lp)
    except Exception as exc:  # diagnostics instead of a silent wrong answer
        return LpSolution(status="error", message=f"{type(exc).__name__}: {exc}")
    if solution.status == "optimal":
        gap = residual(lp, solution.x)
        if gap > 1e-6:
            return LpSolution(
                status="error",
                message=f"solution violates constraints by {gap:.3e}",
            )
    return solution


def _solve(lp: LinearProgram) -> LpSolution:
    n = lp.n_vars
    lower = np.asarray(lp.lower, dtype=float)
    upper = np.asarray(lp.upper, dtype=float)
    c = np.asarray(lp.c, dtype=float)
    a_ub = np.asarray(lp.a_ub, dtype=float).reshape(-1, n) if np.size(lp.a_ub) else np.zeros((0, n))
    b_ub = np.asarray(lp.b_ub, dtype=float).reshape(-1)
    a_eq = np.asarray(lp.a_eq, dtype=float).reshape(-1, n) if np.size(lp.a_eq) else np.zeros((0, n))
    b_eq = np.asarray(lp.b_eq, dtype=float).reshape(-1)

    # Standard-form mapping: x_j = offset_j + sum(sign * y_k).
    col_map: list[list[tuple[int, float]]] = []
    offsets = np.zeros(n)
    n_std = 0
    extra_ub_rows: list[tuple[int, float]] = []  # (std column, rhs) for finite ranges
    for j in range(n):
        lo, hi = lower[j], upper[j]
        if hi < lo:
            return LpSolution(status="infeasible", message=f"bounds cross for var {j}")
        if math.isfinite(lo):
            offsets[j] = lo
            col_map.append([(n_std, 1.0)])
            if math.isfinite(hi):
                extra_ub_rows.append((n_std, hi - lo))
            n_std += 1
        elif math.isfinite(hi):
            # mirrored variable: x = hi - y
            offsets[j] = hi
            col_map.append([(n_std, -1.0)])
            n_std += 1
        else:
            col_map.append([(n_std, 1.0), (n_std + 1, -1.0)])
            n_std += 2

    def to_std(matrix: np.ndarray) -> np.ndarray:
        out = np.zeros((matrix.shape[0], n_std))
        for j in range(n):
            for k, sign in col_map[j]:
                out[:, k] += sign * matrix[:, j]
        return out

    a_ub_std = to_std(a_ub)
    b_ub_std = b_ub - a_ub @ offsets if a_ub.size else b_ub.copy()
    a_eq_std = to_std(a_eq)
    b_eq_std = b_eq - a_eq @ offsets if a_eq.size else b_eq.copy()
    c_std = np.zeros(n_std)
    for j in range(n):
        for k, sign in col_map[j]:
            c_std[k] += sign * c[j]

    if extra_ub_rows:
        rows = np.zeros((len(extra_ub_rows), n_std))
        rhs = np.zeros(len(extra_ub_rows))
        for i, (k, bound) in enumerate(extra_ub_rows):
            rows[i, k] = 1.0
            rhs[i] = bound
        a_ub_std = np.vstack([a_ub_std, rows]) if a_ub_std.size else rows
        b_ub_std = np.concatenate([b_ub_std, rhs])

    m_ub = a_ub_std.shape[0]
    m_eq = a_eq_std.shape[0]
    m = m_ub + m_eq
    n_slack = m_ub
    width = n_std + n_slack

    a_full = np.zeros((m, width))
    b_full = np.zeros(m)
    if m_ub:
        a_full[:m_ub, :n_std] = a_ub_std
        a_full[:m_ub, n_std:n_std + n_slack] = np.eye(m_ub)
        b_full[:m_ub] = b_ub_std
    if m_eq:
        a_full[m_ub:, :n_std] = a_eq_std
        b_full[m_ub:] = b_eq_std

    # make rhs nonnegative
    for i in range(m):
        if b_full[i] < 0:
            a_full[i] *= -1.0
            b_full[i] *= -1.0

    # initial basis: use the slack when its column survived the flip
    basis = [-1] * m
    artificial_cols: list[int] = []
    columns = [a_full]
    next_col = width
    for i in range(m):
        if i < m_ub and a_full[i, n_std + i] == 1.0:
            basis[i] = n_std + i
        else:
            art = np.zeros((m, 1))
            art[i, 0] = 1.0
            columns.append(art)
            basis[i] = next_col
            artificial_cols.append(next_col)
            next_col += 1
    tableau = np.hstack(columns + [b_full.reshape(-1, 1)])
    total_cols = tableau.shape[1] - 1
    artificial = np.zeros(total_cols, dtype=bool)
    artificial[artificial_cols] = True

    if artificial_cols:
        phase1_cost = np.zeros(total_cols)
        phase1_cost[artificial_cols] = 1.0
        status = _simplex(tableau, basis, phase1_cost, blocked=np.zeros(total_cols, dtype=bool))
        if status != "optimal":
            return LpSolution(status="error", message=f"phase 1 ended {status}")
        phase1_obj = float(phase1_cost[basis] @ tableau[:, -1])
        if phase1_obj > _FEAS_TOL:
            return LpSolution(status="infeasible", message=f"phase 1 objective {phase1_obj:.3e}")
        _drive_out_artificials(tableau, basis, artificial)

    cost2 = np.zeros(total_cols)
    cost2[:n_std] = c_std
    status = _simplex(tableau, basis, cost2, blocked=artificial)
    if status == "unbounded":
        return LpSolution(status="unbounded", message="objective unbounded below")
    if status != "optimal":
        return LpSolution(status="error", message=f"phase 2 ended {status}")

    y = np.zeros(total_cols)
    for i, b_var in enumerate(basis):
        if b_var >= 0:
            y[b_var] = tableau[i, -1]
    x = offsets.copy()
    for j in range(n):
        for k, sign in col_map[j]:
            x[j] += sign * y[k]
    objective = float(c @ x)
    return LpSolution(status="optimal", x=x, objective=objective)


def _simplex(tableau: np.ndarray, basis: list[int], cost: np.ndarray, blocked: np.ndarray) -> str:
    """Bland-rule pivoting on a dense tableau; returns optimal or unbounded."""
    m = tableau.shape[0]
    n = tableau.shape[1] - 1
    basic_cost = cost[basis]
    max_pivots = 50 * (m + n) + 1000
    for _pivot_count in range(max_pivots):
        reduced = cost[:n] - basic_cost @ tableau[:, :n]
        enter = -1
        for j in range(n):
            if blocked[j]:
                continue
            if reduced[j] < -_TOL:
                enter = j
                break
        if enter < 0:
            return "optimal"
        col = tableau[:, enter]
        leave = -1
        best_ratio = math.inf
        for i in range(m):
            if col[i] > _TOL:
                ratio = tableau[i, -1] / col[i]
                if ratio < best_ratio - _TOL or (
                    abs(ratio - best_ratio) <= _TOL and (leave < 0 or basis[i] < basis[leave])
                ):
                    best_ratio = ratio
                    leave = i
        if leave < 0:
            return "unbounded"
        _pivot(tableau, basis, leave, enter)
        basic_cost = cost[basis]
    return "stalled"


def _pivot(tableau: np.ndarray, basis: list[int], row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    for i in range(tableau.shape[0]):
        if i != row and abs(tableau[i, col]) > 0.0:
            tableau[i] -= tableau[i, col] * tableau[row]
    basis[row] = col


def _drive_out_artificials(tableau: np.ndarray, basis: list[int], artificial: np.ndarray) -> None:
    """Pivot basic artificials onto structural columns, drop redundant rows."""
    m = tableau.shape[0]
    n = tableau.shape[1] - 1
    for i in range(m):
        if basis[i] >= 0 and artificial[basis[i]]:
            pivot_col = -1
            for j in range(n):
                if not artificial[j] and abs(tableau[i, j]) > _TOL:
                    pivot_col = j
                    break
            if pivot_col >= 0:
                _pivot(tableau, basis, i, pivot_col)
            else:
                tableau[i, :] = 0.0  # redundant constraint
                basis[i] = -1


# --- export ---------------------------------------------------------------

def _fmt(value: float) -> str:
    return format(value, ".12g")


def _terms(coeffs, names) -> str:
    parts = []
    for j, coef in coeffs:
        if coef == 0.0:
            continue
        sign = "-" if coef < 0 else "+"
        mag = abs(coef)
        if mag == 1.0:
            parts.append(f"{sign} {names[j]}")
        else:
            parts.append(f"{sign} {_fmt(mag)} {names[j]}")
    if not parts:
        return "0 " + names[0]
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def lp_text(lp: LinearProgram) -> str:
    """Human-readable LP text with a bit-stable field order."""
    names = lp.names or [f"x{j}" for j in range(lp.n_vars)]
    lines = ["Minimize"]
    obj = [(j, lp.c[j]) for j in range(lp.n_vars) if lp.c[j] != 0.0]
    lines.append(" obj: " + _terms(obj, names))
    lines.append("Subject To")
    for i in range(lp.a_ub.shape[0] if lp.a_ub.size else 0):
        tag = lp.ub_tags[i] if i < len(lp.ub_tags) else f"ub{i}"
        coeffs = [(j, lp.a_ub[i, j]) for j in range(lp.n_vars) if lp.a_ub[i, j] != 0.0]
        lines.append(f" {tag}: " + _terms(coeffs, names) + f" <= {_fmt(lp.b_ub[i])}")
    for i in range(lp.a_eq.shape[0] if lp.a_eq.size else 0):
        tag = lp.eq_tags[i] if i < len(lp.eq_tags) else f"eq{i}"
        coeffs = [(j, lp.a_eq[i, j]) for j in range(lp.n_vars) if lp.a_eq[i, j] != 0.0]
        lines.append(f" {tag}: " + _terms(coeffs, names) + f" = {_fmt(lp.b_eq[i])}")
    lines.append("Bounds")
    for j in range(lp.n_vars):
        lo, hi = lp.lower[j], lp.upper[j]
        if lo == 0.0 and math.isinf(hi):
            continue
        if math.isinf(lo) and math.isinf(hi):
            lines.append(f" {names[j]} free")
        elif math.isinf(hi):
            lines.append(f" {names[j]} >= {_fmt(lo)}")
        elif math.isinf(lo):
            lines.append(f" {names[j]} <= {_fmt(hi)}")
        else:
            lines.append(f" {_fmt(lo)} <= {names[j]} <= {_fmt(hi)}")
    lines.append("End")
    return "\n".join(lines) + "\n"


def save_lp_text(lp: LinearProgram, path) -> None:
    from pathlib import Path

    Path(path).write_text(lp_text(lp), encoding="utf-8")
