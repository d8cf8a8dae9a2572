"""
Few-bit DACs and their Bussgang gain
====================================

A b-bit DAC quantizes the real and imaginary part of every antenna sample
on its own. For Gaussian inputs the output is ``delta * x`` plus a
distortion term that is uncorrelated with ``x``.
"""

# %%
import numpy as np

from cqamimo import build_quantizer, estimate_bussgang_mc, quantize

# %% The gain approaches one quickly with the resolution
for bits in range(1, 9):
    q = build_quantizer(bits, total_power=1.0, n_tx=64)
    print(f"{bits} bits  step={q.step / q.sigma_r:.4f} sigma  alpha={q.alpha:.5f}  delta={q.delta:.6f}")

# %% Closed form against Monte Carlo
q = build_quantizer(3, 1.0, 64)
rng = np.random.default_rng(0)
d_mc, p_mc = estimate_bussgang_mc(q, 1_000_000, rng)
print(f"delta closed form {q.delta:.5f}, simulated {d_mc:.5f}; output power {p_mc:.4f}")

# %% The distortion is uncorrelated with the input
x = np.sqrt(1 / 64 / 2) * (rng.standard_normal(200_000) + 1j * rng.standard_normal(200_000))
f = quantize(x, q) - q.delta * x
print("corr(f, x) =", abs(np.vdot(x, f)) / np.sqrt(np.vdot(x, x).real * np.vdot(f, f).real))
