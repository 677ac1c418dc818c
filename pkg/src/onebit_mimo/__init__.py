"""Minimax symbol-error-rate one-bit precoding for the massive MU-MIMO
downlink, with zero-forcing baselines and a Monte Carlo BER harness.
"""

from .errors import NumericalError
from .mimo import (
    ChannelRealization,
    NoiseModel,
    QamConstellation,
    RealLiftedProblem,
    SymbolBlock,
    TransmitBlock,
    apply_channel_awgn,
    detect,
    gen_rayleigh_channel,
    lift_vector,
    make_constellation,
    map_bits,
    real_lift,
    unlift_matrix,
    unmap_symbols,
)
from .precoding import (
    BcdConfig,
    BcdIteration,
    PrecodeResult,
    SolverState,
    bcd_precode,
    estimate_gain_ls,
    fista_solve,
    lipschitz_estimate,
    one_bit_quantize,
    onebit_zf_precode,
    project_feasible,
    refit_gain_minimax,
    smoothed_gradient,
    smoothed_objective,
    v_update,
    zf_precode,
)
from .ser import (
    MinimaxValue,
    SepBound,
    SepChainReport,
    minimax_objective,
    q_function,
    sep_bounds,
    sep_chain_check,
)
from .sim import (
    BerRecord,
    SimConfig,
    clopper_pearson,
    load_config,
    parse_config_text,
    register_precoder,
    run_sweep,
    run_trial,
    write_results,
)

__version__ = "0.1.0"
