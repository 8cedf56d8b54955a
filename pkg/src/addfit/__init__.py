"""addfit: additive MIMO transfer-function models from FRF data.

Fit continuous-time models of the form

    P(s) = sum_i  B_i(s) / (s^ell_i * A_i(s))

to measured frequency response functions by iteratively refined
instrumental variables under a weighted least-squares criterion, with
CMIF-based mode seeding and a convex numerator initializer.
"""

__version__ = "0.1.0"

from .cmif import (
    CmifPeak,
    CmifResult,
    PeakOptions,
    compute_cmif,
    detect_peaks,
    pick_modes,
)
from .errors import (
    AddfitError,
    ConditioningError,
    DivergenceError,
    EmptyBandError,
    FrfParseError,
    SingularFilterError,
    SingularityError,
    SingularWeightError,
    StructureError,
    WeightContractError,
)
from .estimator import (
    EstimationOptions,
    EstimationReport,
    assemble_stacked,
    cost,
    estimate,
    init_numerators,
    instrument_block,
    iterate_once,
    optimality_residual,
    regressor_block,
    residual,
    residual_all,
    residual_plant,
)
from .frf import (
    FrfDataset,
    band_select,
    delay_compensate,
    estimate_delay,
    load_frf,
    save_frf,
)
from .model import (
    AdditiveModel,
    MatrixNumerator,
    ModalSpec,
    ModelStructure,
    ParameterVector,
    ScalarDenominator,
    Submodel,
    ValidationReport,
    check_stability,
    eval_model,
    eval_submodel,
    load_model,
    modal_to_submodel,
    model_from_json,
    model_to_json,
    pack_parameters,
    save_model,
    scale_frequency,
    submodel_to_modal,
    unpack_parameters,
    validate_structure,
)
from .synth import (
    GridSpec,
    NoiseSpec,
    SynthSpec,
    brute_force_siso_fit,
    build_truth,
    modal_denominator_grid,
    simulate_frf,
)
from .weighting import (
    WeightingScheme,
    identity_weighting,
    inverse_magnitude_weighting,
)
