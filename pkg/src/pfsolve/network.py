"""Admittance assembly and power-flow residual computation.

Injected power is evaluated two independent ways: a complex formulation
S = V e^{i theta} * conj(Y V e^{i theta}) used throughout the package, and a
direct trigonometric expansion kept as a cross-checking oracle. The two are
algebraically identical and the test suite holds them to 1e-10 agreement.

All angles are radians here; degrees appear only at I/O boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

from .cases import CaseData, ValidationError, base_injections


@dataclass(frozen=True)
class AdmittanceMatrix:
    """Sparse complex nodal admittance matrix in internal bus order."""

    n: int
    Y: sp.csr_matrix

    @cached_property
    def G(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.Y.real)

    @cached_property
    def B(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.Y.imag)

    @cached_property
    def dense(self) -> np.ndarray:
        """Dense copy, used for batched matvecs at desk scale."""
        return self.Y.toarray()


@dataclass
class StateVector:
    """Per-bus voltage magnitude (p.u.) and angle (rad)."""

    V: np.ndarray
    theta: np.ndarray

    def copy(self) -> "StateVector":
        return StateVector(self.V.copy(), self.theta.copy())

    def complex_voltage(self) -> np.ndarray:
        return self.V * np.exp(1j * self.theta)


@dataclass
class PowerInjection:
    """Per-bus active/reactive injections in p.u."""

    P: np.ndarray
    Q: np.ndarray

    def copy(self) -> "PowerInjection":
        return PowerInjection(self.P.copy(), self.Q.copy())


@dataclass
class ResidualVector:
    """Mismatch: dP over non-slack buses, dQ over PQ buses (internal order)."""

    dP: np.ndarray
    dQ: np.ndarray
    non_slack_idxs: np.ndarray
    pq_idxs: np.ndarray

    def __len__(self) -> int:
        return len(self.dP) + len(self.dQ)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.dP, self.dQ])

    def inf_norm(self) -> float:
        return float(np.max(np.abs(self.as_vector()))) if len(self) else 0.0


def build_ybus(case: CaseData) -> AdmittanceMatrix:
    """Assemble the nodal admittance matrix from the pi-model branch data."""
    n = case.n
    idx = case.index_of
    rows, cols, vals = [], [], []
    for br in case.branches:
        if br.from_bus not in idx or br.to_bus not in idx:
            raise ValidationError(
                f"branch {br.from_bus}-{br.to_bus} references an unknown bus"
            )
        f, t = idx[br.from_bus], idx[br.to_bus]
        ys = 1.0 / complex(br.r, br.x)
        bc = 0.5j * br.b
        tap = br.tap if br.tap != 0.0 else 1.0
        tc = tap * np.exp(1j * np.radians(br.shift))
        rows += [f, t, f, t]
        cols += [f, t, t, f]
        vals += [
            (ys + bc) / (tap * tap),
            ys + bc,
            -ys / np.conj(tc),
            -ys / tc,
        ]
    for bus in case.buses:
        rows.append(idx[bus.id])
        cols.append(idx[bus.id])
        vals.append(complex(bus.Gs, bus.Bs) / case.base_MVA)
    y = sp.coo_matrix((vals, (rows, cols)), shape=(n, n), dtype=complex).tocsr()
    return AdmittanceMatrix(n=n, Y=y)


@lru_cache(maxsize=32)
def get_ybus(case: CaseData) -> AdmittanceMatrix:
    """Per-case cached admittance matrix (built once, shared read-only)."""
    return build_ybus(case)


def spec_injections(case: CaseData) -> PowerInjection:
    p, q = base_injections(case)
    return PowerInjection(p, q)


def power_complex(state: StateVector, ybus: AdmittanceMatrix) -> PowerInjection:
    """Injected power via the complex form S = Vc * conj(Y Vc)."""
    vc = state.complex_voltage()
    s = vc * np.conj(ybus.Y @ vc)
    return PowerInjection(s.real.copy(), s.imag.copy())


def power_trig(state: StateVector, ybus: AdmittanceMatrix) -> PowerInjection:
    """Injected power via explicit trigonometric expansion (oracle path)."""
    g = ybus.dense.real
    b = ybus.dense.imag
    v = state.V
    dth = state.theta[:, None] - state.theta[None, :]
    cos, sin = np.cos(dth), np.sin(dth)
    p = v * ((g * cos + b * sin) @ v)
    q = v * ((g * sin - b * cos) @ v)
    return PowerInjection(p, q)


def mismatch(
    state: StateVector, spec: PowerInjection, case: CaseData
) -> ResidualVector:
    calc = power_complex(state, get_ybus(case))
    ns = case.non_slack_idxs
    pq = case.pq_idxs
    return ResidualVector(
        dP=spec.P[ns] - calc.P[ns],
        dQ=spec.Q[pq] - calc.Q[pq],
        non_slack_idxs=ns,
        pq_idxs=pq,
    )


def energy(state: StateVector, spec: PowerInjection, case: CaseData) -> float:
    """Half squared residual norm; zero exactly on the solution set."""
    res = mismatch(state, spec, case)
    return 0.5 * float(res.dP @ res.dP + res.dQ @ res.dQ)


def residual_norm(res: ResidualVector, case: CaseData) -> float:
    """Mixed RMS norm: sqrt(mean(dP^2) over non-slack + mean(dQ^2) over PQ)."""
    p_term = float(np.mean(res.dP**2)) if len(res.dP) else 0.0
    q_term = float(np.mean(res.dQ**2)) if len(res.dQ) else 0.0
    return float(np.sqrt(p_term + q_term))


def perturbation_slices(case: CaseData) -> tuple[slice, slice, slice]:
    """Layout of u: interleaved (dP, dQ) per PQ bus, then dP per PV bus."""
    q = len(case.pq_idxs)
    return slice(0, 2 * q, 2), slice(1, 2 * q, 2), slice(2 * q, case.d_in)


def apply_perturbation(
    spec: PowerInjection, u: np.ndarray, case: CaseData
) -> PowerInjection:
    """Shift PQ (dP, dQ) and PV dP entries by u; slack untouched."""
    u = np.asarray(u, dtype=float)
    if u.shape != (case.d_in,):
        raise ValueError(f"perturbation has shape {u.shape}, expected ({case.d_in},)")
    s_pqp, s_pqq, s_pvp = perturbation_slices(case)
    out = spec.copy()
    out.P[case.pq_idxs] += u[s_pqp]
    out.Q[case.pq_idxs] += u[s_pqq]
    out.P[case.pv_idxs] += u[s_pvp]
    return out


def apply_perturbation_batch(
    spec: PowerInjection, u_batch: np.ndarray, case: CaseData
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized apply_perturbation: returns (B, n) spec arrays."""
    u_batch = np.atleast_2d(np.asarray(u_batch, dtype=float))
    nb = u_batch.shape[0]
    s_pqp, s_pqq, s_pvp = perturbation_slices(case)
    p = np.tile(spec.P, (nb, 1))
    q = np.tile(spec.Q, (nb, 1))
    p[:, case.pq_idxs] += u_batch[:, s_pqp]
    q[:, case.pq_idxs] += u_batch[:, s_pqq]
    p[:, case.pv_idxs] += u_batch[:, s_pvp]
    return p, q


def energy_gradient(
    state: StateVector, spec: PowerInjection, case: CaseData
) -> np.ndarray:
    """Analytic gradient of the energy over free variables [theta_ns; V_pq].

    Derived through the complex form: with adjoint lam = lam_P + i lam_Q on
    S and g = conj(lam * I) + Y^T (lam * conj(Vc)), the chain rule gives
    dE/dtheta = -Im(g * Vc) and dE/dV = Re(g * Vc) / V.
    """
    ybus = get_ybus(case)
    res = mismatch(state, spec, case)
    lam_p = np.zeros(case.n)
    lam_q = np.zeros(case.n)
    lam_p[res.non_slack_idxs] = -res.dP
    lam_q[res.pq_idxs] = -res.dQ
    lam = lam_p + 1j * lam_q

    vc = state.complex_voltage()
    ic = ybus.Y @ vc
    g = np.conj(lam * ic) + ybus.Y.T @ (lam * np.conj(vc))
    w = g * vc
    d_theta = -w.imag
    d_v = w.real / state.V
    return np.concatenate([d_theta[case.non_slack_idxs], d_v[case.pq_idxs]])


@dataclass
class GradientFlowResult:
    state: StateVector
    converged: bool
    final_energy: float
    final_residual_norm: float
    steps: int


def gradient_flow_solve(
    case: CaseData,
    spec: PowerInjection,
    init: StateVector,
    step: float = 0.02,
    max_steps: int = 20000,
    tol: float = 1e-6,
) -> GradientFlowResult:
    """Explicit-Euler descent of the energy over the free variables.

    Each iteration takes x <- x - s * grad(E); s starts at `step` and is
    halved (up to 30 times) whenever the trial step would increase the
    energy, so accepted energy is non-increasing.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    state = init.copy()
    ns, pq = case.non_slack_idxs, case.pq_idxs
    e = energy(state, spec, case)

    taken = 0
    for _ in range(max_steps):
        res = mismatch(state, spec, case)
        if residual_norm(res, case) < tol:
            return GradientFlowResult(
                state, True, e, residual_norm(res, case), taken
            )
        grad = energy_gradient(state, spec, case)
        s = step
        for _halving in range(31):
            trial = state.copy()
            trial.theta[ns] -= s * grad[: len(ns)]
            trial.V[pq] -= s * grad[len(ns) :]
            e_trial = energy(trial, spec, case)
            if e_trial <= e:
                break
            s *= 0.5
        else:
            break  # no descent step found
        state, e = trial, e_trial
        taken += 1

    res = mismatch(state, spec, case)
    u = residual_norm(res, case)
    return GradientFlowResult(state, u < tol, e, u, taken)
