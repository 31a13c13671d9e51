"""Gradient engine: loss semantics, exact reverse-mode gradients, FD oracle."""

import numpy as np
import pytest

from pfsolve.autodiff import (
    NonFiniteGradientError,
    PhysicsContext,
    batch_residual_norms,
    finite_difference_check,
    loss,
    loss_and_gradient,
)
from pfsolve.model import auto_config_for_case, decode, init_network
from pfsolve.network import (
    PowerInjection,
    energy_gradient,
    get_ybus,
    mismatch,
    power_trig,
    spec_injections,
)
from pfsolve.newton import jacobian, solve_newton
from pfsolve.network import StateVector

from conftest import constant_output_params, encode_state


@pytest.fixture
def ctx14(case14):
    return PhysicsContext.from_case(case14)


def newton_stub_params(case):
    """Constant-output network that decodes to the Newton base solution."""
    solution = solve_newton(case, spec_injections(case)).state
    arch = auto_config_for_case(case)
    z = encode_state(solution, case, arch.theta_scale)
    return constant_output_params(z, case)


class TestLoss:
    def test_newton_stub_near_zero_at_base(self, case14, ctx14):
        params = newton_stub_params(case14)
        batch = np.zeros((1, case14.d_in))
        assert loss(params, batch, ctx14) <= 1e-10

    def test_two_bus_hand_computed(self, two_bus):
        ctx = PhysicsContext.from_case(two_bus)
        state = StateVector(np.array([1.0, 1.02]), np.array([0.0, -0.15]))
        z = encode_state(state, two_bus, np.pi / 2)
        params = constant_output_params(z, two_bus)
        calc = power_trig(state, get_ybus(two_bus))
        spec = spec_injections(two_bus)
        expected = (spec.P[1] - calc.P[1]) ** 2 + (spec.Q[1] - calc.Q[1]) ** 2
        got = loss(params, np.zeros((1, two_bus.d_in)), ctx)
        assert got == pytest.approx(expected, rel=1e-9)

    def test_duplicated_batch_unchanged(self, case14, ctx14):
        params = init_network(auto_config_for_case(case14), 0)
        rng = np.random.default_rng(0)
        batch = rng.uniform(-0.1, 0.1, (4, case14.d_in))
        doubled = np.vstack([batch, batch])
        assert loss(params, doubled, ctx14) == pytest.approx(
            loss(params, batch, ctx14), rel=1e-12
        )

    def test_empty_batch_rejected(self, case14, ctx14):
        params = init_network(auto_config_for_case(case14), 0)
        with pytest.raises(ValueError):
            loss(params, np.zeros((0, case14.d_in)), ctx14)

    def test_smoothing_requires_rng_and_is_seeded(self, case14, ctx14):
        params = init_network(auto_config_for_case(case14), 0)
        batch = np.zeros((2, case14.d_in))
        with pytest.raises(ValueError):
            loss(params, batch, ctx14, smoothing_sd=1e-3)
        a = loss(params, batch, ctx14, 1e-3, np.random.default_rng(5))
        b = loss(params, batch, ctx14, 1e-3, np.random.default_rng(5))
        c = loss(params, batch, ctx14, 1e-3, np.random.default_rng(6))
        assert a == b
        assert a != c


class TestGradient:
    def test_zero_residual_is_stationary(self, case14):
        # Pin the specified injections to exactly what the stub produces:
        # the residual vanishes identically, so every gradient must too.
        params = newton_stub_params(case14)
        state = decode(params.biases[-1], case14, params.arch.theta_scale)
        from pfsolve.network import power_complex

        calc = power_complex(state, get_ybus(case14))
        ctx = PhysicsContext(case14, get_ybus(case14), PowerInjection(calc.P, calc.Q))
        bundle = loss_and_gradient(params, np.zeros((1, case14.d_in)), ctx)
        assert bundle.loss <= 1e-28
        for g in bundle.arrays():
            assert np.max(np.abs(g)) <= 1e-8

    def test_matches_finite_differences(self, case14, ctx14):
        params = init_network(auto_config_for_case(case14), 3)
        rng = np.random.default_rng(3)
        batch = rng.uniform(-0.1, 0.1, (4, case14.d_in))
        err = finite_difference_check(params, batch, ctx14, h=1e-5, sample_count=60, seed=0)
        assert err <= 1e-4

    def test_matches_finite_differences_with_layernorm(self, case14, ctx14):
        arch = auto_config_for_case(case14, layers=7, use_layernorm=True)
        params = init_network(arch, 4)
        rng = np.random.default_rng(4)
        batch = rng.uniform(-0.1, 0.1, (3, case14.d_in))
        err = finite_difference_check(params, batch, ctx14, h=1e-5, sample_count=40, seed=1)
        assert err <= 1e-4

    def test_residual_doubling_doubles_gradient(self, case14, ctx14):
        from pfsolve.model import forward
        from pfsolve.model import decode_batch

        params = init_network(auto_config_for_case(case14), 5)
        batch = np.zeros((1, case14.d_in))
        v, theta = decode_batch(
            forward(params, batch), case14, params.arch.theta_scale
        )
        state = StateVector(v[0], theta[0])
        from pfsolve.network import power_complex

        calc = power_complex(state, get_ybus(case14))
        base = ctx14.base_spec
        doubled_spec = PowerInjection(
            calc.P + 2.0 * (base.P - calc.P), calc.Q + 2.0 * (base.Q - calc.Q)
        )
        ctx2 = PhysicsContext(case14, get_ybus(case14), doubled_spec)
        g1 = loss_and_gradient(params, batch, ctx14)
        g2 = loss_and_gradient(params, batch, ctx2)
        assert np.allclose(g2.weight_grads[-1], 2.0 * g1.weight_grads[-1], rtol=1e-10)
        assert np.allclose(g2.bias_grads[-1], 2.0 * g1.bias_grads[-1], rtol=1e-10)

    def test_batch_gradient_linearity(self, case14, ctx14):
        params = init_network(auto_config_for_case(case14), 6)
        rng = np.random.default_rng(6)
        u1, u2 = rng.uniform(-0.1, 0.1, (2, case14.d_in))
        g12 = loss_and_gradient(params, np.stack([u1, u2]), ctx14)
        g1 = loss_and_gradient(params, u1[None], ctx14)
        g2 = loss_and_gradient(params, u2[None], ctx14)
        for gb, ga, gc in zip(g12.arrays(), g1.arrays(), g2.arrays()):
            assert np.allclose(gb, 0.5 * (ga + gc), atol=1e-12)

    def test_bit_reproducible_without_smoothing(self, case14, ctx14):
        params = init_network(auto_config_for_case(case14), 7)
        rng = np.random.default_rng(7)
        batch = rng.uniform(-0.1, 0.1, (4, case14.d_in))
        a = loss_and_gradient(params, batch, ctx14)
        b = loss_and_gradient(params, batch, ctx14)
        assert a.loss == b.loss
        for x, y in zip(a.arrays(), b.arrays()):
            assert np.array_equal(x, y)

    @pytest.mark.filterwarnings("ignore:invalid value")
    def test_nonfinite_gradient_names_tensor(self, case14, ctx14):
        params = init_network(auto_config_for_case(case14), 8)
        params.weights[2][0, 0] = np.inf
        with pytest.raises(NonFiniteGradientError) as excinfo:
            loss_and_gradient(params, np.zeros((1, case14.d_in)), ctx14)
        assert excinfo.value.tensor_name


class TestFiniteDifferenceCheck:
    def test_large_h_shows_truncation_error(self, case14, ctx14):
        # The check must be able to fail. Swept at implementation time:
        # rel err 7.7e-8 at h=1e-5, 5.8e-3 at h=1, 5.1e-2 at h=3 -- the loss
        # is smooth enough that visible truncation needs a unit-scale step.
        params = init_network(auto_config_for_case(case14), 9)
        rng = np.random.default_rng(9)
        batch = rng.uniform(-0.1, 0.1, (4, case14.d_in))
        small = finite_difference_check(params, batch, ctx14, h=1e-5, sample_count=60, seed=2)
        big = finite_difference_check(params, batch, ctx14, h=3.0, sample_count=60, seed=2)
        assert small <= 1e-4
        assert big > 1e-2

    def test_zero_gradient_guard(self, case14):
        params = newton_stub_params(case14)
        state = decode(params.biases[-1], case14, params.arch.theta_scale)
        from pfsolve.network import power_complex

        calc = power_complex(state, get_ybus(case14))
        ctx = PhysicsContext(case14, get_ybus(case14), PowerInjection(calc.P, calc.Q))
        err = finite_difference_check(
            params, np.zeros((1, case14.d_in)), ctx, sample_count=20, seed=3
        )
        # Both sides are ~0; the guard reports absolute differences.
        assert err <= 1e-8

    def test_deterministic_given_seed(self, case14, ctx14):
        params = init_network(auto_config_for_case(case14), 10)
        batch = np.zeros((2, case14.d_in))
        a = finite_difference_check(params, batch, ctx14, sample_count=30, seed=4)
        b = finite_difference_check(params, batch, ctx14, sample_count=30, seed=4)
        assert a == b


def test_energy_gradient_equals_jacobian_transpose_residual(case14):
    """The raw-state energy gradient must equal -J^T F (J = d calc / dx)."""
    rng = np.random.default_rng(12)
    spec = spec_injections(case14)
    y = get_ybus(case14)
    for _ in range(5):
        state = StateVector(
            rng.uniform(0.9, 1.1, case14.n), rng.uniform(-0.3, 0.3, case14.n)
        )
        grad = energy_gradient(state, spec, case14)
        f = mismatch(state, spec, case14).as_vector()
        jtf = -(jacobian(state, y, case14).toarray().T @ f)
        assert np.max(np.abs(grad - jtf)) / np.max(np.abs(jtf)) <= 1e-8


def test_residual_norm_evaluator_matches_definition(case14, ctx14):
    from pfsolve.network import residual_norm
    from pfsolve.model import solve_nn

    params = init_network(auto_config_for_case(case14), 11)
    rng = np.random.default_rng(11)
    u = rng.uniform(-0.1, 0.1, case14.d_in)
    batch_value = batch_residual_norms(params, u[None], ctx14)[0]
    from pfsolve.network import apply_perturbation

    state = solve_nn(params, case14, u)
    spec_u = apply_perturbation(ctx14.base_spec, u, case14)
    assert batch_value == pytest.approx(
        residual_norm(mismatch(state, spec_u, case14), case14), rel=1e-12
    )
