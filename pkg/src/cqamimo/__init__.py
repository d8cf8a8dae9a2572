"""Quantization-aware block-diagonalization precoding for multiuser MIMO.

Modules
-------
channel    Rayleigh channels, transmit correlation, imperfect CSI
quantizer  few-bit DAC and Bussgang gain
precoder   BD / RBD precoders
power      equal, water-filling and CQA-MAAS power allocation
rate       sum rates and FLOP models
harness    Monte Carlo sweeps, presets, result files
"""

from .channel import (ChannelSet, SystemScenario, apply_csi_impairment, correlation_matrix,
                      gen_channel, trial_rng)
from .errors import ConfigError, InfeasibleError, ModelValidityError, SaturatedRegimeError
from .harness import SweepResult, preset, run_sweep, write_results
from .power import (AllocationResult, SpectrumView, cqa_constants, cqa_maas, cqa_mu_opt,
                    equal_allocation, objective_eq17, waterfilling)
from .precoder import PrecoderResult, build_cqa_precoder
from .quantizer import QuantizerModel, build_quantizer, estimate_bussgang_mc, quantize
from .rate import flops_allocation, flops_precoder, sum_rate_blockwise, sum_rate_bussgang

__version__ = "0.1.0"
