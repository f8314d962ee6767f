"""RIS-assisted quantized-MIMO simulation: synthetic channels,
expectation-consistent detectors, and state-evolution BER analysis."""

from .geometry import (ArrayGeometry, RisPanel, Scenario, SyntheticChannel,
                       cell_gain, circle_deployment, default_scenario,
                       direct_path_gain, egc_phase_profile, load_scenario,
                       path_loss_far_field, quantize_phase, spectrum_stats,
                       steering_vector, synthesize)
from .coding import (ConvCodeSpec, InterleaverSpec, bcjr_decode, conv_encode,
                     deinterleave, interleave, map_qam4, soft_demod,
                     soft_modulate, viterbi_decode)
from .quantizer import (AdcSpec, QuantizedObs, extrinsic_update,
                        make_thresholds, posterior_z, quantize)
from .detector import (GecConfig, SvdFactorization, benchmark_aqnm,
                       detect_gecc, detect_gecu, lmmse_stage)
from .se import (CodeTransfer, McParams, SeTrace, SingularSpectrum,
                 build_code_transfer, characterize_code, mmse_c, mmse_u,
                 psi_f, psi_r, se_ascent, se_descent, zeta)
from .harness import (BerCurve, ExperimentConfig, run_mc_ber, run_se_curve,
                      sweep_axis, write_curves)

__version__ = "0.1.0"
