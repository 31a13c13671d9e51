"""Reference Newton-Raphson power-flow solver.

Serves as the gold standard the neural solver is compared against. The
Jacobian is assembled analytically from the complex partial derivatives of
injected power and sliced into the usual polar-form blocks; the linear solve
uses sparse LU, with a dense fallback for small systems.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cases import CaseData
from .network import (
    AdmittanceMatrix,
    PowerInjection,
    StateVector,
    get_ybus,
    mismatch,
)

_DENSE_CUTOFF = 50  # below this many buses a dense LU is cheaper


@dataclass
class NewtonOptions:
    tol: float = 1e-6
    max_iter: int = 50
    flat_start: bool = True


@dataclass
class NewtonResult:
    state: StateVector
    iterations: int
    converged: bool
    final_mismatch_inf: float
    mismatch_history: list[float] = field(default_factory=list)
    failure_reason: str | None = None


def flat_start(case: CaseData) -> StateVector:
    """V = 1 at PQ buses, setpoint at PV/slack; all angles at the slack angle."""
    v = np.ones(case.n)
    vset = case.voltage_setpoints
    v[case.pv_idxs] = vset[case.pv_idxs]
    v[case.slack_idx] = vset[case.slack_idx]
    theta = np.full(case.n, case.slack_va_rad)
    return StateVector(v, theta)


def _ds_dv(ybus: AdmittanceMatrix, vc: np.ndarray):
    """Complex partials of injected power w.r.t. angle and magnitude."""
    y = ybus.Y
    ic = y @ vc
    diag_v = sp.diags(vc)
    diag_i = sp.diags(ic)
    diag_e = sp.diags(vc / np.abs(vc))
    ds_dva = 1j * diag_v @ (diag_i - y @ diag_v).conj()
    ds_dvm = diag_e @ diag_i.conj() + diag_v @ (y @ diag_e).conj()
    return ds_dva, ds_dvm


def jacobian(
    state: StateVector, ybus: AdmittanceMatrix, case: CaseData
) -> sp.csr_matrix:
    """Jacobian of calculated power over the free variables.

    Rows follow the residual ordering (dP at non-slack buses, then dQ at PQ
    buses); columns are [theta at non-slack, V at PQ].
    """
    vc = state.complex_voltage()
    ds_dva, ds_dvm = _ds_dv(ybus, vc)
    ns, pq = case.non_slack_idxs, case.pq_idxs
    j11 = ds_dva[np.ix_(ns, ns)].real
    j12 = ds_dvm[np.ix_(ns, pq)].real
    j21 = ds_dva[np.ix_(pq, ns)].imag
    j22 = ds_dvm[np.ix_(pq, pq)].imag
    return sp.bmat([[j11, j12], [j21, j22]], format="csr")


def solve_newton(
    case: CaseData,
    spec: PowerInjection,
    opts: NewtonOptions | None = None,
    init: StateVector | None = None,
) -> NewtonResult:
    """Newton iteration on the mismatch equations.

    Solves J dx = F each step (J being the derivative of calculated power,
    so the update is x <- x + dx). If a full step inflates the mismatch
    infinity norm by more than 10x it is halved, up to 4 times.
    """
    opts = opts or NewtonOptions()
    ybus = get_ybus(case)
    state = init.copy() if init is not None else flat_start(case)
    ns, pq = case.non_slack_idxs, case.pq_idxs
    n_th = len(ns)

    res = mismatch(state, spec, case)
    norm = res.inf_norm()
    history = [norm]
    for it in range(1, opts.max_iter + 1):
        if norm <= opts.tol:
            return NewtonResult(state, it - 1, True, norm, history)

        jac = jacobian(state, ybus, case)
        f = res.as_vector()
        try:
            if case.n < _DENSE_CUTOFF:
                dx = np.linalg.solve(jac.toarray(), f)
            else:
                dx = spla.spsolve(jac.tocsc(), f)
        except (np.linalg.LinAlgError, RuntimeError) as exc:
            return NewtonResult(
                state, it - 1, False, norm, history,
                failure_reason=f"linear solve failed: {exc}",
            )
        if not np.all(np.isfinite(dx)):
            return NewtonResult(
                state, it - 1, False, norm, history,
                failure_reason="singular Jacobian (non-finite Newton step)",
            )

        scale = 1.0
        for _ in range(5):
            trial = state.copy()
            trial.theta[ns] += scale * dx[:n_th]
            trial.V[pq] += scale * dx[n_th:]
            trial_res = mismatch(trial, spec, case)
            trial_norm = trial_res.inf_norm()
            if trial_norm <= 10.0 * norm:
                break
            scale *= 0.5
        state, res, norm = trial, trial_res, trial_norm
        history.append(norm)

    converged = norm <= opts.tol
    return NewtonResult(
        state,
        opts.max_iter,
        converged,
        norm,
        history,
        failure_reason=None if converged else "max iterations reached",
    )
