"""Block-diagonalization (BD) and regularized BD precoders.

Every user's precoder is the product of a first factor, which suppresses
(BD) or regularizes (RBD) the interference towards the other users, and a
second factor built from the right singular vectors of the resulting
effective channel and a diagonal power loading.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .channel import ChannelSet
from .errors import InfeasibleError
from .power import AllocationResult, SpectrumView, equal_allocation

__all__ = [
    "UserFactors",
    "EffectiveChannel",
    "PrecoderResult",
    "numeric_rank",
    "complement_channel",
    "bd_first_factor",
    "rbd_first_factor",
    "effective_channel",
    "precoder_factors",
    "assemble_precoder",
    "build_cqa_precoder",
]

KINDS = ("BD", "RBD")


def numeric_rank(s: np.ndarray, shape: tuple[int, int]) -> int:
    """Rank from singular values with threshold ``max(shape) * eps * s_max``."""
    if s.size == 0 or s[0] == 0:
        return 0
    tau = max(shape) * np.finfo(float).eps * s[0]
    return int(np.count_nonzero(s > tau))


def _phase_normalize(cols: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    if cols.size == 0:
        return cols
    pivot = cols[np.argmax(np.abs(cols), axis=0), np.arange(cols.shape[1])]
    mag = np.abs(pivot)
    phase = np.where(mag > 0, pivot.conj() / np.where(mag > 0, mag, 1), 1)
    return cols * phase


def _check_kind(kind: str) -> str:
    k = kind.upper()
    if k not in KINDS:
        raise ValueError(f"unknown precoder kind {kind!r}; expected BD or RBD")
    return k


def complement_channel(channels: ChannelSet, j: int) -> np.ndarray:
    """Estimated channel of all users except ``j`` (0-based), order preserved."""
    if not 0 <= j < channels.users:
        raise IndexError(f"user index {j} out of range for {channels.users} users")
    blocks = [channels.block(i) for i in range(channels.users) if i != j]
    if not blocks:
        return np.zeros((0, channels.h.shape[1]), dtype=channels.h_est.dtype)
    return np.vstack(blocks)


def bd_first_factor(h_bar: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the null space of ``h_bar``.

    An empty ``h_bar`` (single user) yields the identity.
    """
    n_b = h_bar.shape[1]
    if h_bar.shape[0] == 0:
        return np.eye(n_b, dtype=complex)
    _, s, vh = np.linalg.svd(h_bar, full_matrices=True)
    rank = numeric_rank(s, h_bar.shape)
    if rank >= n_b:
        raise InfeasibleError(
            f"interference channel has full column rank {rank}; no null space left")
    return _phase_normalize(vh[rank:].conj().T)


def rbd_first_factor(h_bar: np.ndarray, noise_power: float, total_power: float,
                     n_rx_total: int) -> np.ndarray:
    """Regularized first factor ``W (S^T S + chi I)^{-1/2}``, ``chi = N_u N_0 / P``."""
    if total_power <= 0:
        raise ValueError("total_power must be > 0")
    n_b = h_bar.shape[1]
    chi = n_rx_total * noise_power / total_power
    if h_bar.shape[0] == 0:
        w = np.eye(n_b, dtype=complex)
        s2 = np.zeros(n_b)
    else:
        _, s, vh = np.linalg.svd(h_bar, full_matrices=True)
        w = _phase_normalize(vh.conj().T)
        s2 = np.zeros(n_b)
        s2[: s.size] = s ** 2
    return w / np.sqrt(s2 + chi)


@dataclass
class EffectiveChannel:
    h_e: np.ndarray
    u: np.ndarray
    sv: np.ndarray
    w1: np.ndarray

    @property
    def rank(self) -> int:
        return self.sv.size


def effective_channel(h_j: np.ndarray, p_c: np.ndarray) -> EffectiveChannel:
    """SVD of ``h_j @ p_c`` truncated to its numeric rank."""
    h_e = h_j @ p_c
    u, s, vh = np.linalg.svd(h_e, full_matrices=False)
    r = numeric_rank(s, h_e.shape)
    w1 = vh[:r].conj().T
    pivot = w1[np.argmax(np.abs(w1), axis=0), np.arange(r)] if r else np.ones(0)
    phase = pivot.conj() / np.where(np.abs(pivot) > 0, np.abs(pivot), 1)
    return EffectiveChannel(h_e=h_e, u=u[:, :r] * phase, sv=s[:r], w1=w1 * phase)


@dataclass
class UserFactors:
    """Per-user pieces of a precoder.

    ``scale`` holds the per-stream column normalization (ones for BD) and
    ``gains = sv_effective * scale`` is what the allocators see.
    """

    p_c: np.ndarray
    w1: np.ndarray
    sv_effective: np.ndarray
    scale: np.ndarray
    n_rx: int
    p_d: np.ndarray | None = None

    @property
    def gains(self) -> np.ndarray:
        return self.sv_effective * self.scale


@dataclass
class PrecoderResult:
    p: np.ndarray
    per_user: list[UserFactors]
    kind: str
    allocation: AllocationResult | None = field(default=None, repr=False)

    def spectrum(self) -> SpectrumView:
        return factors_spectrum(self.per_user)


def factors_spectrum(factors: Sequence[UserFactors]) -> SpectrumView:
    """Concatenated per-stream gains, zero-padded to ``N_j`` per user."""
    phi, owner = [], []
    for j, f in enumerate(factors):
        g = np.zeros(f.n_rx)
        g[: f.gains.size] = f.gains[: f.n_rx]
        phi.append(g)
        owner.append(np.full(f.n_rx, j))
    return SpectrumView(phi=np.concatenate(phi), owner=np.concatenate(owner))


def precoder_factors(channels: ChannelSet, kind: str = "BD", *,
                     noise_power: float | None = None, total_power: float = 1.0,
                     normalize: bool = True) -> list[UserFactors]:
    """First factors and effective-channel SVDs of every user.

    Built from the channel estimate ``channels.h_est``. RBD needs
    ``noise_power``; with ``normalize`` its stream directions are scaled to
    unit norm so that the transmit power equals the sum of the loadings.
    """
    kind = _check_kind(kind)
    if kind == "RBD" and noise_power is None:
        raise ValueError("RBD needs noise_power")
    n_u = channels.h.shape[0]
    out = []
    for j in range(channels.users):
        h_bar = complement_channel(channels, j)
        if kind == "BD":
            p_c = bd_first_factor(h_bar)
        else:
            p_c = rbd_first_factor(h_bar, noise_power, total_power, n_u)
        eff = effective_channel(channels.block(j), p_c)
        if kind == "RBD" and normalize and eff.rank:
            scale = 1 / np.linalg.norm(p_c @ eff.w1, axis=0)
        else:
            scale = np.ones(eff.rank)
        out.append(UserFactors(p_c=p_c, w1=eff.w1, sv_effective=eff.sv, scale=scale,
                               n_rx=channels.block(j).shape[0]))
    return out


def assemble_precoder(factors: Sequence[UserFactors], omega,
                      kind: str = "BD") -> PrecoderResult:
    """Stack ``P_j = P_j^c W_j^(1) diag(scale_j) Omega_j^{1/2}`` into ``P``.

    ``omega`` is the flat per-stream loading of length ``N_u`` (ordered as
    :func:`factors_spectrum`) or an :class:`AllocationResult`.
    """
    kind = _check_kind(kind)
    allocation = omega if isinstance(omega, AllocationResult) else None
    omega = np.asarray(allocation.omega if allocation else omega, dtype=float)
    n_u = sum(f.n_rx for f in factors)
    if omega.shape != (n_u,):
        raise ValueError(f"omega must have length {n_u}, got shape {omega.shape}")
    if np.any(omega < 0):
        raise ValueError("omega entries must be >= 0")
    blocks, per_user, start = [], [], 0
    for f in factors:
        om = omega[start:start + f.n_rx]
        start += f.n_rx
        r = min(f.w1.shape[1], f.n_rx)
        p_d = np.zeros((f.w1.shape[0], f.n_rx), dtype=complex)
        p_d[:, :r] = f.w1[:, :r] * (f.scale[:r] * np.sqrt(om[:r]))
        blocks.append(f.p_c @ p_d)
        per_user.append(UserFactors(p_c=f.p_c, w1=f.w1, sv_effective=f.sv_effective,
                                    scale=f.scale, n_rx=f.n_rx, p_d=p_d))
    return PrecoderResult(p=np.hstack(blocks), per_user=per_user, kind=kind,
                          allocation=allocation)


Allocator = Callable[[SpectrumView], AllocationResult]


def build_cqa_precoder(channels: ChannelSet, kind: str = "BD",
                       allocator: Allocator | None = None, *,
                       noise_power: float | None = None,
                       total_power: float = 1.0) -> PrecoderResult:
    """CQA-BD / CQA-RBD precoder for one channel realization.

    ``allocator`` maps the stream spectrum to a power loading; the default
    is equal loading with one unit of power per stream. The quantizer only
    enters through the allocator (its Bussgang gain) and the rate
    evaluation, never through the precoder geometry.
    """
    factors = precoder_factors(channels, kind, noise_power=noise_power,
                               total_power=total_power)
    spectrum = factors_spectrum(factors)
    if allocator is None:
        alloc = equal_allocation(spectrum.phi.size, float(spectrum.phi.size))
    else:
        alloc = allocator(spectrum)
    return assemble_precoder(factors, alloc, kind)
