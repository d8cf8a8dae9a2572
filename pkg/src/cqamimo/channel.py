"""Rayleigh broadcast channels, transmit correlation and imperfect CSI.

All routines take an explicit :class:`numpy.random.Generator`; use
:func:`trial_rng` to derive an independent stream per Monte Carlo trial.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, ModelValidityError

__all__ = [
    "SystemScenario",
    "ChannelSet",
    "trial_rng",
    "complex_normal",
    "gen_channel",
    "correlation_matrix",
    "psd_sqrt",
    "apply_csi_impairment",
]


def _as_tuple(values, cast) -> tuple:
    if np.isscalar(values):
        return (cast(values),)
    return tuple(cast(v) for v in values)


@dataclass(frozen=True)
class SystemScenario:
    """Complete description of one downlink experiment.

    Parameters
    ----------
    n_tx : int
        Number of base-station antennas.
    n_rx_per_user : sequence of int
        Receive antennas of every user; its length is the number of users.
    snr_db_grid : sequence of float
        SNR points in dB.
    total_power : float
        Average transmit power (linear).
    bits : sequence of int
        DAC resolutions evaluated by quantization-aware methods.
    corr_coeff : complex
        Correlation between neighbouring transmit antennas, ``|r| <= 1``.
    csi_error_var : float
        Variance of the channel feedback error.
    trials : int
        Monte Carlo channel realizations.
    seed : int
        Root seed of the random streams.
    """

    n_tx: int
    n_rx_per_user: tuple[int, ...]
    snr_db_grid: tuple[float, ...] = (-5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    total_power: float = 1.0
    bits: tuple[int, ...] = (3,)
    corr_coeff: complex = 0.0
    csi_error_var: float = 0.0
    trials: int = 200
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "n_rx_per_user", _as_tuple(self.n_rx_per_user, int))
        object.__setattr__(self, "snr_db_grid", _as_tuple(self.snr_db_grid, float))
        object.__setattr__(self, "bits", _as_tuple(self.bits, int))
        object.__setattr__(self, "corr_coeff", complex(self.corr_coeff))
        self.validate()

    def validate(self) -> None:
        if self.n_tx < 1 or not self.n_rx_per_user or min(self.n_rx_per_user) < 1:
            raise ConfigError("antenna counts and number of users must be >= 1")
        if self.n_tx < self.n_rx_total:
            raise ConfigError(
                f"n_tx={self.n_tx} < n_rx_total={self.n_rx_total}: "
                "block diagonalization needs N_b >= N_u"
            )
        if abs(self.corr_coeff) > 1:
            raise ConfigError(f"|corr_coeff| must be <= 1, got {abs(self.corr_coeff):g}")
        if self.csi_error_var < 0:
            raise ConfigError("csi_error_var must be >= 0")
        if self.total_power <= 0:
            raise ConfigError("total_power must be > 0")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.snr_db_grid:
            raise ConfigError("snr_db_grid is empty")
        if any(b < 1 or b > 12 for b in self.bits):
            raise ConfigError("bits must lie in 1..12")

    @property
    def users(self) -> int:
        return len(self.n_rx_per_user)

    @property
    def n_rx_total(self) -> int:
        return sum(self.n_rx_per_user)

    @property
    def impaired(self) -> bool:
        return self.corr_coeff != 0 or self.csi_error_var > 0

    def noise_power(self, snr_db: float) -> float:
        """Noise variance giving ``snr_db`` for the configured transmit power."""
        return self.total_power / 10 ** (snr_db / 10)

    def replace(self, **changes) -> "SystemScenario":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["corr_coeff"] = [self.corr_coeff.real, self.corr_coeff.imag]
        d["n_rx_per_user"] = list(self.n_rx_per_user)
        d["snr_db_grid"] = list(self.snr_db_grid)
        d["bits"] = list(self.bits)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ChannelSet:
    """Stacked channel of all users plus the transmitter's estimate of it."""

    h: np.ndarray
    h_est: np.ndarray
    user_offsets: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        if self.h.shape != self.h_est.shape:
            raise ValueError("h and h_est must have the same shape")
        if not self.user_offsets:
            self.user_offsets = ((0, self.h.shape[0]),)
        if self.user_offsets[0][0] != 0 or self.user_offsets[-1][1] != self.h.shape[0]:
            raise ValueError("user blocks must cover every row of h")

    @classmethod
    def from_matrix(cls, h: np.ndarray, n_rx_per_user: Sequence[int],
                    h_est: np.ndarray | None = None) -> "ChannelSet":
        bounds = np.concatenate([[0], np.cumsum(n_rx_per_user)]).astype(int)
        if bounds[-1] != h.shape[0]:
            raise ValueError(
                f"per-user antennas sum to {bounds[-1]} but h has {h.shape[0]} rows")
        offsets = tuple((int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]))
        return cls(h=h, h_est=h.copy() if h_est is None else h_est, user_offsets=offsets)

    @property
    def users(self) -> int:
        return len(self.user_offsets)

    @property
    def n_rx_per_user(self) -> tuple[int, ...]:
        return tuple(b - a for a, b in self.user_offsets)

    def block(self, j: int, estimate: bool = True) -> np.ndarray:
        """Rows of user ``j`` (0-based) from the estimate or the true channel."""
        a, b = self.user_offsets[j]
        return (self.h_est if estimate else self.h)[a:b]

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.h).tobytes()).hexdigest()[:16]


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent generator for Monte Carlo trial ``trial`` under root ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(trial,))))


def complex_normal(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples of variance ``var``."""
    re_im = rng.standard_normal((*np.atleast_1d(shape), 2))
    return np.sqrt(var / 2) * (re_im[..., 0] + 1j * re_im[..., 1])


def gen_channel(scenario: SystemScenario, rng: np.random.Generator) -> ChannelSet:
    """Draw an i.i.d. CN(0, 1) broadcast channel for ``scenario``."""
    h = complex_normal(rng, (scenario.n_rx_total, scenario.n_tx))
    return ChannelSet.from_matrix(h, scenario.n_rx_per_user)


def correlation_matrix(r: complex, n: int) -> np.ndarray:
    """Transmit correlation matrix with entries ``r**(j - i)`` above the diagonal.

    The lower triangle is the conjugate of the upper one so the result is
    Hermitian with unit diagonal.
    """
    if abs(r) > 1:
        raise ValueError(f"|r| must be <= 1, got {abs(r):g}")
    idx = np.arange(n)
    lag = idx[None, :] - idx[:, None]
    upper = np.power(complex(r), np.abs(lag))
    return np.where(lag >= 0, upper, upper.conj())


def psd_sqrt(r: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Hermitian PSD square root; eigenvalues down to ``-tol * max`` are clamped."""
    w, v = np.linalg.eigh(r)
    floor = tol * max(w.max(), 0.0)
    if w.min() < -floor:
        raise ModelValidityError(
            f"correlation matrix is not PSD: min eigenvalue {w.min():.3e} "
            f"(max {w.max():.3e})")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def apply_csi_impairment(channels: ChannelSet, r: complex, sigma_e2: float,
                         rng: np.random.Generator) -> ChannelSet:
    """Return a copy whose estimate is ``h @ R^{1/2} + E``.

    ``E`` has i.i.d. CN(0, sigma_e2) entries. The true channel is untouched.
    """
    if sigma_e2 < 0:
        raise ValueError("sigma_e2 must be >= 0")
    h = channels.h
    if r == 0:
        h_est = h.copy()
    else:
        h_est = h @ psd_sqrt(correlation_matrix(r, h.shape[1]))
    if sigma_e2 > 0:
        h_est = h_est + complex_normal(rng, h.shape, sigma_e2)
    return ChannelSet(h=h, h_est=h_est, user_offsets=channels.user_offsets)
