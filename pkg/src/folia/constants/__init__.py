"""Verdict enums and fixed numerical thresholds shared across components."""

from enum import Enum


class Outcome(Enum):
    """How a verdict counts towards the exit code of a job"""
    PASS = "pass"
    REFUTED = "refuted"
    INCONCLUSIVE = "inconclusive"


class Verdict(Enum):
    """Closed set of verdicts produced by the checks"""
    # charts
    MEMBER = "Member"
    NOT_MEMBER = "NotMember"                       # always "up to degree D"
    INVOLUTIVE = "Involutive"
    NOT_INVOLUTIVE = "NotInvolutive"
    PROJECTS = "Projects"
    NOT_PROJECTABLE = "NotProjectable"
    CANNOT_DECIDE = "CannotDecide"
    # bisubm
    PASS = "Pass"
    FAIL = "Fail"
    EXISTS = "Exists"
    INCONSISTENT_CONSTRAINTS = "InconsistentConstraints"
    NON_SMOOTH_CANDIDATE = "NonSmoothCandidate"    # finite-difference heuristic
    INCONCLUSIVE = "Inconclusive"
    COMMUTES = "Commutes"
    COMMUTATION_FAILURE = "CommutationFailure"
    # algebroid
    IN_MA = "InMA"
    IN_MA_COMPLEMENT = "InMAComplement"
    # weinstein / flows
    VALID = "Valid"
    INVALID = "Invalid"
    INVARIANTS_MATCH = "InvariantsMatch"
    INVARIANT_MISMATCH = "InvariantMismatch"
    WITHIN_TOLERANCE = "WithinTolerance"
    OUT_OF_TOLERANCE = "OutOfTolerance"

    @property
    def outcome(self) -> Outcome:
        if self in _REFUTING:
            return Outcome.REFUTED
        if self in _UNDECIDED:
            return Outcome.INCONCLUSIVE
        return Outcome.PASS


_REFUTING = frozenset({
    Verdict.NOT_INVOLUTIVE,
    Verdict.FAIL,
    Verdict.INCONSISTENT_CONSTRAINTS,
    Verdict.NON_SMOOTH_CANDIDATE,
    Verdict.COMMUTATION_FAILURE,
    Verdict.INVALID,
    Verdict.INVARIANT_MISMATCH,
    Verdict.OUT_OF_TOLERANCE,
})

_UNDECIDED = frozenset({
    Verdict.INCONCLUSIVE,
    Verdict.CANNOT_DECIDE,
})

# Singular-value threshold for float ranks, relative to the largest singular value
RANK_RTOL = 1e-9

# Fibered-product constraints of sampled triples
TRIPLE_CONSTRAINT_TOL = 1e-8
TRIPLE_INJECTIVITY_TOL = 1e-9

# Smoothness heuristic for phi candidates
SMOOTHNESS_STEPS = (1e-2, 1e-3, 1e-4)
SMOOTH_RATIO_MAX = 4.0
NON_SMOOTH_RATIO_MIN = 10.0

# Diagonal triples must be fixed by phi
DIAGONAL_TOL = 1e-8

# A-path validity
APATH_RESIDUAL_TOL = 1e-4

# Z_0(p) = 0 precondition of the acceleration check
Z0_TOL = 1e-12

# Central-difference step of the acceleration check
ACCEL_STEP = 1e-3
ACCEL_RESIDUAL_TOL = 1e-4

# RK4 error must shrink at least this much when the step is halved
RK4_ORDER_RATIO_MIN = 12.0

REPORT_SCHEMA_VERSION = 1
