"""Heralded spin-1 entanglement by cavity photon counting."""

from .fock_basis import (
    CollectiveState,
    SymmetricBasis,
    build_basis,
    collective_spin_ops,
    generator_G,
    highest_weight_state,
    lowest_weight_state,
    product_state_m0,
    quadrupole_op,
    total_spin_squared,
)
from .measurement import (
    DetectorModel,
    PosteriorState,
    PulseRecord,
    average_qfi_imperfect,
    detection_prob,
    heralded_mixture,
    posterior_first_pulse,
    posterior_update_subsequent,
    sample_heralding_run,
)
from .qfi_engine import (
    DiagonalSpinMixture,
    PowerLawFit,
    average_qfi_ideal,
    fit_power_law,
    qfi_mixed_diagonal,
    qfi_pure,
)
from .spin_decomposition import SpinLengthDistribution, decompose, most_probable_S, racah_step, tail_mass

__version__ = "0.1.0"
