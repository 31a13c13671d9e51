"""Shared fixtures: bundled IEEE cases, tiny synthetic cases, model helpers."""

from __future__ import annotations

import numpy as np
import pytest

from pfsolve import load_case
from pfsolve.cases import Branch, Bus, BusType, CaseData, Generator
from pfsolve.model import auto_config_for_case, init_network
from pfsolve.network import StateVector


@pytest.fixture(scope="session")
def case14():
    return load_case("ieee14")


@pytest.fixture(scope="session")
def case39():
    return load_case("ieee39")


@pytest.fixture(scope="session")
def case118():
    return load_case("ieee118")


def make_bus(bus_id, bus_type, Pd=0.0, Qd=0.0, Gs=0.0, Bs=0.0, Vm=1.0, Va=0.0):
    return Bus(
        id=bus_id, bus_type=bus_type, Pd=Pd, Qd=Qd, Gs=Gs, Bs=Bs,
        Vm=Vm, Va=Va, base_kV=138.0,
    )


def make_branch(f, t, r=0.0, x=0.1, b=0.0, tap=0.0, shift=0.0):
    return Branch(from_bus=f, to_bus=t, r=r, x=x, b=b, tap=tap, shift=shift, status=1)


@pytest.fixture
def two_bus():
    """Slack + PQ load bus joined by a purely reactive line (x = 0.1)."""
    return CaseData(
        name="two_bus",
        base_MVA=100.0,
        buses=(
            make_bus(1, BusType.SLACK),
            make_bus(2, BusType.PQ, Pd=50.0, Qd=20.0),
        ),
        branches=(make_branch(1, 2),),
        gens=(Generator(bus=1, Pg=0.0, Qg=0.0, Vg=1.0, status=1),),
    )


@pytest.fixture
def single_bus():
    return CaseData(
        name="single_bus",
        base_MVA=100.0,
        buses=(make_bus(1, BusType.SLACK),),
        branches=(),
        gens=(),
    )


@pytest.fixture
def shunt_only():
    """One slack bus whose only element is a 100 MW shunt conductance."""
    return CaseData(
        name="shunt_only",
        base_MVA=100.0,
        buses=(make_bus(1, BusType.SLACK, Gs=100.0),),
        branches=(),
        gens=(),
    )


def encode_state(state: StateVector, case: CaseData, theta_scale: float) -> np.ndarray:
    """Invert the decoder: raw logits that decode exactly to `state`."""
    p = len(case.pv_idxs)
    q = len(case.pq_idxs)
    z = np.zeros(p + 2 * q)
    z[:p] = np.arctanh(state.theta[case.pv_idxs] / theta_scale)
    v_pq = state.V[case.pq_idxs]
    z[p::2] = np.log(np.expm1(v_pq - 0.5))  # softplus inverse
    z[p + 1 :: 2] = np.arctanh(state.theta[case.pq_idxs] / theta_scale)
    return z


def constant_output_params(z: np.ndarray, case: CaseData, seed: int = 0):
    """Params whose forward pass returns `z` for every input (weights zeroed)."""
    arch = auto_config_for_case(case)
    params = init_network(arch, seed)
    for w in params.weights:
        w[:] = 0.0
    params.biases[-1][:] = z
    return params


@pytest.fixture(scope="session")
def mini_trained14(case14):
    """A cheap partially-trained IEEE14 model for tests that need one."""
    from pfsolve.training import TrainingConfig, train

    arch = auto_config_for_case(case14)
    config = TrainingConfig(epochs=150, batch_size=32, seed=7)
    params, log = train(case14, arch, config)
    return params, log
