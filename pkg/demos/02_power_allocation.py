"""
Water-filling with a quantizing transmitter
===========================================

Classical water-filling keeps pouring power into strong streams. With a
few-bit DAC the distortion grows with the per-stream SNR, so the
quantization-aware allocation (CQA-MAAS) stops short and favours weaker
streams instead.
"""

# %%
import numpy as np

from cqamimo import (SpectrumView, build_quantizer, cqa_maas, equal_allocation,
                     objective_eq17, waterfilling)

phi = SpectrumView([2.0, 1.5, 1.0, 0.5])
p_total = 4.0

# %% Allocations at 10 dB with a 3-bit DAC
delta = build_quantizer(3, 1.0, 64).delta
snr = 10.0
n0 = p_total / snr
for name, alloc in [("equal", equal_allocation(4, p_total)),
                    ("water-filling", waterfilling(phi, n0, p_total)),
                    ("CQA-MAAS", cqa_maas(phi, snr, delta, p_total))]:
    rate = objective_eq17(alloc.omega, phi, delta, n0)
    print(f"{name:14s} omega={np.round(alloc.omega, 3)}  rate={rate:.3f} bits")

# %% At full resolution CQA-MAAS is ordinary water-filling
a = cqa_maas(phi, snr, 1.0, p_total).omega
b = waterfilling(phi, n0, p_total).omega
print("max difference at delta=1:", np.max(np.abs(a - b)))

# %% High SNR: every stream reaches its distortion-limited peak
sat = cqa_maas(phi, 1e4, build_quantizer(2, 1.0, 64).delta, p_total)
print(f"saturated={sat.saturated}, power used {sat.total:.3f} of {p_total}")

# %% The printed closed-form water level is also available
closed = cqa_maas(phi, 2.0, delta, p_total, variant="closed-form")
exact = cqa_maas(phi, 2.0, delta, p_total)
print("closed form", np.round(closed.omega, 4), "exact", np.round(exact.omega, 4))
