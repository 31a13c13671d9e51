"""pfsolve: Newton-Raphson power flow plus a label-free neural solver.

The neural solver is trained purely by minimizing the power-flow residual
over a sampled load-perturbation space; the Newton solver provides the
reference solutions the evaluation harness compares against.
"""

__version__ = "0.1.0"

from .cases import (  # noqa: F401
    Branch,
    Bus,
    BusType,
    CaseData,
    Generator,
    base_injections,
    export_native_case,
    load_case,
    parse_matpower_case,
    parse_native_case,
)
from .network import (  # noqa: F401
    AdmittanceMatrix,
    PowerInjection,
    ResidualVector,
    StateVector,
    apply_perturbation,
    build_ybus,
    energy,
    energy_gradient,
    get_ybus,
    gradient_flow_solve,
    mismatch,
    power_complex,
    power_trig,
    residual_norm,
    spec_injections,
)
from .newton import NewtonOptions, NewtonResult, flat_start, jacobian, solve_newton  # noqa: F401
from .model import (  # noqa: F401
    ArchitectureSpec,
    NetworkParams,
    auto_config,
    auto_config_for_case,
    decode,
    forward,
    init_network,
    load_checkpoint,
    save_checkpoint,
    solve_nn,
)
from .autodiff import (  # noqa: F401
    GradientBundle,
    PhysicsContext,
    finite_difference_check,
    loss,
    loss_and_gradient,
)
from .sampling import (  # noqa: F401
    AugmentationBuffer,
    SamplingConfig,
    Stage,
    adaptive_lhs_batch,
    buffer_push,
    buffer_sample_augmented,
    lhs_batch,
    sobol_batch,
    stage_for_epoch,
)
from .training import (  # noqa: F401
    TrainingConfig,
    TrajectoryLog,
    adamw_step,
    clip_gradients,
    cosine_lr,
    plateau_update,
    train,
)
