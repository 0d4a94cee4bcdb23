import os
from typing import Optional

# Exact-decision configuration with environment variable fallbacks
DEGREE_BOUND = int(os.getenv('FOLIA_DEGREE_BOUND', '8'))            # Polynomial degree bound D for membership/syzygy solves
TOLERANCE = float(os.getenv('FOLIA_TOLERANCE', '1e-6'))             # Residual tolerance for numerical certificates
SAMPLES = int(os.getenv('FOLIA_SAMPLES', '50'))                     # Sample count for rank checks and sweeps
SEED = int(os.getenv('FOLIA_SEED', '0'))                            # Default sampling seed

# Flow configuration
FLOW_STEP = float(os.getenv('FOLIA_FLOW_STEP', '1e-3'))             # RK4 step for single flows
SWEEP_FLOW_STEP = float(os.getenv('FOLIA_SWEEP_FLOW_STEP', '1e-2')) # RK4 step for batched sweeps and composed-flow inner solves
COMPOSITION_STEPS = int(os.getenv('FOLIA_COMPOSITION_STEPS', '32')) # Outer RK4 steps of composed flow formulas

# Bi-submersion verification
BALL_RADIUS = float(os.getenv('FOLIA_BALL_RADIUS', '0.25'))         # Initial radius of the triple-space ball
NEWTON_MAX_ITER = int(os.getenv('FOLIA_NEWTON_MAX_ITER', '50'))     # Newton iterations for the middle-component solve
NEWTON_TOL = float(os.getenv('FOLIA_NEWTON_TOL', '1e-10'))          # Newton residual tolerance

# A-paths
APATH_GRID = int(os.getenv('FOLIA_APATH_GRID', '256'))              # Uniform grid size N for A-paths

# Pipeline
PARALLEL_CHECKS = int(os.getenv('FOLIA_PARALLEL_CHECKS', '4'))      # Independent checks run concurrently
LOG_LEVEL = os.getenv('FOLIA_LOG_LEVEL', 'INFO')


def validate_configuration() -> Optional[str]:
    """Validate configuration values and return error message if invalid."""
    if DEGREE_BOUND < 1:
        return "FOLIA_DEGREE_BOUND must be at least 1"
    if TOLERANCE <= 0:
        return "FOLIA_TOLERANCE must be greater than 0"
    if SAMPLES <= 0:
        return "FOLIA_SAMPLES must be greater than 0"
    if SEED < 0:
        return "FOLIA_SEED must be non-negative"
    if FLOW_STEP <= 0 or SWEEP_FLOW_STEP <= 0:
        return "FOLIA_FLOW_STEP and FOLIA_SWEEP_FLOW_STEP must be greater than 0"
    if COMPOSITION_STEPS <= 0:
        return "FOLIA_COMPOSITION_STEPS must be greater than 0"
    if BALL_RADIUS <= 0:
        return "FOLIA_BALL_RADIUS must be greater than 0"
    if NEWTON_MAX_ITER <= 0:
        return "FOLIA_NEWTON_MAX_ITER must be greater than 0"
    if NEWTON_TOL <= 0:
        return "FOLIA_NEWTON_TOL must be greater than 0"
    if APATH_GRID < 4:
        return "FOLIA_APATH_GRID must be at least 4"
    if PARALLEL_CHECKS <= 0:
        return "FOLIA_PARALLEL_CHECKS must be greater than 0"

    return None  # No errors

# Validate configuration on import
_validation_error = validate_configuration()
if _validation_error:
    raise ValueError(f"Configuration validation failed: {_validation_error}")
