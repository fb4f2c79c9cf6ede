"""Frozen calibration constants for order-of-magnitude contracts.

Many structural statements checked by this package are comparability
statements ("x is of the same order as y").  The constants below convert
them into concrete two-sided envelopes.  They were calibrated once on the
flat profile family and are versioned here; tests must not tune them.
Functions that consume a constant accept an override argument so that a
study may tighten or relax an envelope without editing this file.
"""

from dataclasses import dataclass

CALIBRATION_VERSION = "2024.1"


@dataclass(frozen=True)
class Calibration:
    # Two-sided envelope factor for order-one comparisons in the edge regime.
    envelope: float = 50.0
    # Looser envelope used for the solver scaling diagnostics.
    scaling_envelope: float = 20.0
    # Constant in front of Monte Carlo bounds of the form C / (n * eta).
    mc_constant: float = 20.0
    # Tolerance factor for the Ginibre spectral-radius comparison.
    ginibre_factor: float = 3.0
    # Calibration constant for the eta-derivative bound C / (rho^2 + eta/rho).
    derivative_constant: float = 50.0
    # Edge regime gate: operations assume rho + eta/rho <= rho_star.
    rho_star: float = 0.2
    # Density floor asserted on the bulk of the unit disk.
    sigma_floor: float = 0.05
    # Density threshold defining the estimated support radius.
    support_threshold: float = 0.01
    # Multiple of the log(n) cushion in the delocalization contract.
    deloc_log_factor: float = 10.0


CALIBRATION = Calibration()
