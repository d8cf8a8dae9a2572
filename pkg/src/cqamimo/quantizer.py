"""Few-bit uniform DAC and its Bussgang linearization.

A complex precoded vector is quantized independently on the real and the
imaginary axis by a symmetric midrise quantizer with ``J = 2**bits`` levels
and step ``gamma``; the output is multiplied by ``alpha`` so that the total
transmit power stays at ``P``.  For a Gaussian input the quantizer then
behaves like ``delta * x + f`` with ``f`` uncorrelated with ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats import norm

from .channel import complex_normal
from .errors import ModelValidityError

__all__ = [
    "MAX_BITS",
    "QuantizerModel",
    "build_quantizer",
    "normalization_alpha",
    "bussgang_delta",
    "mse_optimal_step",
    "quantization_mse",
    "quantize",
    "estimate_bussgang_mc",
]

MAX_BITS = 12


@dataclass(frozen=True)
class QuantizerModel:
    bits: int
    step: float
    total_power: float
    n_tx: int
    alpha: float
    delta: float

    @property
    def levels(self) -> int:
        return 2 ** self.bits

    @property
    def sigma_r(self) -> float:
        """Standard deviation per real dimension of the design input."""
        return np.sqrt(self.total_power / (2 * self.n_tx))

    @property
    def thresholds(self) -> np.ndarray:
        J = self.levels
        return self.step * (np.arange(1, J) - J / 2)


def _offsets(J: int) -> np.ndarray:
    # (l - J/2) for l = 1..J-1: threshold positions in units of the step
    return np.arange(1, J) - J / 2


def normalization_alpha(gamma: float, J: int, n_tx: int, P: float) -> float:
    """Output scaling that makes the quantized vector carry total power ``P``.

    ``alpha = (2 N_b gamma^2 / P * B)^(-1/2)`` with
    ``B = ((J-1)/2)^2 - 2 sum_l (l - J/2) Phi(sqrt(2 N_b / P) gamma (l - J/2))``,
    ``Phi`` the standard normal CDF. ``gamma**2 * B`` is the second moment
    of the unscaled quantizer output per real dimension.
    """
    k = _offsets(J)
    arg = np.sqrt(2 * n_tx / P) * gamma * k
    bracket = ((J - 1) / 2) ** 2 - 2 * np.sum(k * norm.cdf(arg))
    if bracket <= 0:
        raise ModelValidityError(f"non-positive power bracket {bracket:.3e} for gamma={gamma:g}")
    return float((2 * n_tx * gamma ** 2 / P * bracket) ** -0.5)


def bussgang_delta(gamma: float, J: int, n_tx: int, P: float, alpha: float) -> float:
    """Bussgang gain of the scaled quantizer for a Gaussian input of power ``P``."""
    k = _offsets(J)
    s = np.sum(np.exp(-(n_tx * gamma ** 2 / P) * k ** 2))
    return float(alpha * gamma * np.sqrt(n_tx / (np.pi * P)) * s)


def quantization_mse(gamma: float, J: int, sigma: float) -> float:
    """Mean-square error of the unscaled quantizer on N(0, sigma^2)."""
    k = _offsets(J)
    t = gamma * k / sigma
    cross = gamma * sigma * np.sum(norm.pdf(t))
    second = gamma ** 2 * (((J - 1) / 2) ** 2 - 2 * np.sum(k * norm.cdf(t)))
    return float(sigma ** 2 - 2 * cross + second)


def mse_optimal_step(J: int, sigma: float) -> float:
    """Step minimizing :func:`quantization_mse` over ``[1e-3, 10] * sigma``."""
    res = minimize_scalar(
        quantization_mse, bounds=(1e-3 * sigma, 10 * sigma), args=(J, sigma),
        method="bounded", options={"xatol": 1e-7 * sigma, "maxiter": 500},
    )
    return float(res.x)


def build_quantizer(bits: int, total_power: float, n_tx: int,
                    step: float | str = "mse-optimal") -> QuantizerModel:
    """Construct a :class:`QuantizerModel`.

    Parameters
    ----------
    bits : int
        DAC resolution, 1..12.
    total_power : float
        Transmit power ``P`` the output is normalized to.
    n_tx : int
        Number of transmit antennas (the input variance per antenna is ``P/n_tx``).
    step : float or "mse-optimal"
        Explicit step ``gamma`` or the MSE-optimal step for the design input.
    """
    if bits < 1:
        raise ValueError("bits must be >= 1")
    if bits > MAX_BITS:
        raise ValueError(f"bits={bits} > {MAX_BITS}: gain is indistinguishable from 1")
    if total_power <= 0:
        raise ValueError("total_power must be > 0")
    J = 2 ** bits
    if isinstance(step, str):
        if step != "mse-optimal":
            raise ValueError(f"unknown step policy {step!r}")
        gamma = mse_optimal_step(J, np.sqrt(total_power / (2 * n_tx)))
    else:
        gamma = float(step)
        if gamma <= 0:
            raise ValueError("step must be > 0")
    alpha = normalization_alpha(gamma, J, n_tx, total_power)
    delta = bussgang_delta(gamma, J, n_tx, total_power, alpha)
    return QuantizerModel(bits=bits, step=gamma, total_power=float(total_power),
                          n_tx=int(n_tx), alpha=alpha, delta=delta)


def _quantize_real(v: np.ndarray, model: QuantizerModel) -> np.ndarray:
    # searchsorted(side="right") sends a value sitting on a threshold upward
    idx = np.searchsorted(model.thresholds, v, side="right")
    return model.step * (idx - (model.levels - 1) / 2)


def quantize(x: np.ndarray, model: QuantizerModel, scaled: bool = True) -> np.ndarray:
    """Element-wise DAC output for a complex array ``x``.

    With ``scaled=False`` the raw level values are returned (no ``alpha``).
    """
    x = np.asarray(x, dtype=complex)
    q = _quantize_real(x.real, model) + 1j * _quantize_real(x.imag, model)
    return model.alpha * q if scaled else q


def estimate_bussgang_mc(model: QuantizerModel, n_samples: int,
                         rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo estimates of the Bussgang gain and the output power.

    Returns ``(delta_hat, out_power)`` computed from ``n_samples`` i.i.d.
    complex Gaussian inputs of variance ``P / n_tx``.
    """
    if n_samples < 10_000:
        raise ValueError("n_samples must be >= 1e4")
    x = complex_normal(rng, n_samples, model.total_power / model.n_tx)
    q = quantize(x, model)
    delta_hat = np.real(np.vdot(x, q)) / np.vdot(x, x).real
    out_power = model.n_tx * np.mean(np.abs(q) ** 2)
    return float(delta_hat), float(out_power)
