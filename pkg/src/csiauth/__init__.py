"""Physical-layer authentication toolkit: channel simulation, sequential
detection, adversary models, analytical performance characterization, and an
experiment harness with a CLI."""

__version__ = "0.1.0"

from .channel import (ChannelParams, ChannelSession, ChannelState, CsiObservation,
                      exp_correlation_matrix, init_channel, observe)
from .detector import (AuthSession, Decision, DecisionThresholds, EmaPolicy,
                       ForwardState, HmmModel, gaussian_log_pdf, hmm_forward_step,
                       instantaneous_llr, log_posterior_ratio, make_initial_forward,
                       recursive_llr_step, run_session, sprt_step, wald_thresholds)
from .embedding import (Embedding, EmissionStats, EncoderSpec, encode, ema_update,
                        fit_stats_batch, make_encoder_spec)
from .errors import (ConfigError, CsiAuthError, NumericFault, TraceExhaustedError,
                     TraceFormatError)
from .spoofing import SpooferKind, SpoofTrace, load_trace, make_spoofer, next_spoofed_csi
