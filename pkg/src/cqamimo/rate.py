"""Achievable sum rates under DAC quantization and complexity models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelValidityError
from .power import AllocationResult, objective_eq17

__all__ = [
    "RateSample",
    "sum_rate_bussgang",
    "sum_rate_blockwise",
    "flops_precoder",
    "flops_allocation",
    "c_delta",
    "FLOPS_PER_SPECIAL_FUNCTION",
]

FLOPS_PER_SPECIAL_FUNCTION = 25

METHOD_LABELS = ("BD-FR", "BD-FR+WF", "CQA-BD", "CQA-RBD", "CQA-BD-MAAS", "CQA-RBD-MAAS")


@dataclass(frozen=True)
class RateSample:
    snr_db: float
    sum_rate_bits: float
    method: str
    bits: int | None
    trial: int

    def __post_init__(self):
        if not np.isfinite(self.sum_rate_bits) or self.sum_rate_bits < 0:
            raise ValueError(f"invalid sum rate {self.sum_rate_bits!r}")
        if self.method not in METHOD_LABELS:
            raise ValueError(f"unknown method {self.method!r}")


def _nats_to_bits(x):
    return x / np.log(2)


def _logdet_hpd(m: np.ndarray) -> float:
    """log det of a Hermitian positive-definite matrix (natural log)."""
    m = (m + m.conj().T) / 2
    try:
        c = np.linalg.cholesky(m)
        return float(2 * np.sum(np.log(np.real(np.diag(c)))))
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(m)
        if np.any(w <= 0):
            raise ModelValidityError(
                f"rate matrix is not positive definite (min eigenvalue {w.min():.3e})")
        return float(np.sum(np.log(w)))


def sum_rate_bussgang(h: np.ndarray, p: np.ndarray, delta: float, snr: float,
                      n_rx_total: int, consistent: bool = False) -> float:
    """Sum rate ``log2 det[I + A ((1 - d^2) A + I)^-1]`` with ``A = snr/N_u (HP)(HP)^H``.

    ``consistent=True`` multiplies the signal term by ``delta**2`` (the
    scaling used by the second-order objective); the default keeps the
    formula without it.
    """
    if not 0 <= delta <= 1:
        raise ValueError("delta must lie in [0, 1]")
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(p))):
        raise ModelValidityError("non-finite entries in the channel or precoder")
    g = h @ p
    a = (snr / n_rx_total) * (g @ g.conj().T)
    a = (a + a.conj().T) / 2
    eye = np.eye(a.shape[0])
    signal = delta ** 2 * a if consistent else a
    m = eye + np.linalg.solve((1 - delta ** 2) * a + eye, signal)
    rate = _nats_to_bits(_logdet_hpd(m))
    if not np.isfinite(rate):
        raise ModelValidityError(
            f"non-finite rate; condition number of HP is {np.linalg.cond(g):.3e}")
    return max(rate, 0.0)


def sum_rate_blockwise(precoder, omega: AllocationResult | np.ndarray, delta: float,
                       noise_power: float) -> float:
    """Per-stream second-order rate of a block-diagonalizing precoder."""
    w = omega.omega if isinstance(omega, AllocationResult) else omega
    return objective_eq17(w, precoder.spectrum(), delta, noise_power)


def c_delta(bits: int) -> int:
    """Extra FLOPs for alpha and delta: ``2 (J - 1)`` special-function terms."""
    return 2 * (2 ** bits - 1) * FLOPS_PER_SPECIAL_FUNCTION


def flops_precoder(kind: str, n_tx: int, n_rx_total: int, n_rx_user: int,
                   bits: int | None = None) -> int:
    """FLOP count of a (CQA-)BD/RBD precoder for ``N_b >> N_u >> N_j``.

    >>> flops_precoder("BD", 64, 32, 2)
    2476032
    """
    k = kind.upper()
    if k not in ("BD", "RBD", "CQA-BD", "CQA-RBD"):
        raise ValueError(f"unknown precoder kind {kind!r}")
    nb, nu, nj = n_tx, n_rx_total, n_rx_user
    base = nb ** 2 * (32 * nj + 8) + nb * (32 * nu ** 2 + 72 * nj ** 2) + 64 * nu ** 2
    if k.startswith("CQA"):
        if bits is None:
            raise ValueError(f"{kind} needs the DAC resolution (bits)")
        return base + c_delta(bits)
    return base


def flops_allocation(method: str, n: int) -> str:
    """Asymptotic cost class of the power allocation methods."""
    if method.upper() not in ("WF", "MAAS"):
        raise ValueError(f"unknown allocation method {method!r}")
    if n < 1:
        raise ValueError("n must be >= 1")
    return "O(N_u)"
