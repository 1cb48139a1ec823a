"""サービスパッケージ"""
from .powerflow_service import (
    build_admittance,
    solve_power_flow,
    branch_currents,
    power_balance,
)
from .measurement_service import (
    build_measurement_matrix,
    perturb_parameters,
    simulate_measurements,
    build_uncertainty_spec,
    build_weights,
)
from .interval_service import estimate_bounds
from .bdu_service import solve_bdu
from .glfp_service import make_problem, solve_glfp
from .bench_service import run_experiment, rmse, containment

__all__ = [
    # powerflow_service
    'build_admittance',
    'solve_power_flow',
    'branch_currents',
    'power_balance',
    # measurement_service
    'build_measurement_matrix',
    'perturb_parameters',
    'simulate_measurements',
    'build_uncertainty_spec',
    'build_weights',
    # estimators
    'estimate_bounds',
    'solve_bdu',
    'make_problem',
    'solve_glfp',
    # bench_service
    'run_experiment',
    'rmse',
    'containment',
]
