"""Power allocation over the effective sub-channels.

Three allocators share one result type: equal loading, classical
water-filling, and the quantization-aware CQA-MAAS active-set procedure.
Everything here works in the linear domain.

Conventions: for a total budget ``p_total`` and linear ``snr`` the noise
level seen by a stream of gain ``phi`` is ``p_total / snr``, so its
per-stream SNR is ``g * omega`` with ``g = snr * phi**2 / p_total``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import InfeasibleError, ModelValidityError, SaturatedRegimeError

__all__ = [
    "SpectrumView",
    "AllocationResult",
    "equal_allocation",
    "waterfilling",
    "cqa_constants",
    "cqa_mu_opt",
    "cqa_maas",
    "objective_eq17",
]


@dataclass
class SpectrumView:
    """Singular values of all streams and the user owning each one."""

    phi: np.ndarray
    owner: np.ndarray | None = None

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float).ravel()
        if np.any(self.phi < 0) or not np.all(np.isfinite(self.phi)):
            raise ValueError("singular values must be finite and >= 0")
        if self.owner is None:
            self.owner = np.zeros(self.phi.size, dtype=int)
        self.owner = np.asarray(self.owner, dtype=int)
        if self.owner.shape != self.phi.shape:
            raise ValueError("owner must have one entry per singular value")

    def __len__(self) -> int:
        return self.phi.size


@dataclass
class AllocationResult:
    omega: np.ndarray
    mu_opt: float
    active: int
    c1: float | None = None
    c2: float | None = None
    iterations: int = 1
    saturated: bool = False
    total: float = field(init=False)

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=float)
        self.total = float(self.omega.sum())


def equal_allocation(n: int, p_total: float) -> AllocationResult:
    if n < 1 or p_total <= 0:
        raise ValueError("need n >= 1 and p_total > 0")
    return AllocationResult(omega=np.full(n, p_total / n), mu_opt=p_total / n, active=n)


def _sorted_positive(spectrum: SpectrumView) -> tuple[np.ndarray, np.ndarray, int]:
    order = np.argsort(-spectrum.phi, kind="stable")
    ps = spectrum.phi[order]
    n = int(np.count_nonzero(ps > 0))
    if n == 0:
        raise InfeasibleError("all singular values are zero")
    return order, ps, n


def waterfilling(spectrum: SpectrumView, noise_power: float,
                 p_total: float) -> AllocationResult:
    """Classical water-filling ``omega = (mu - N_0 / phi^2)^+`` with ``sum = p_total``."""
    order, ps, n = _sorted_positive(spectrum)
    inv_gain = noise_power / ps[:n] ** 2
    csum = np.cumsum(inv_gain)
    iterations = 0
    while True:
        iterations += 1
        mu = (p_total + csum[n - 1]) / n
        if mu > inv_gain[n - 1] or n == 1:
            break
        n -= 1
    omega_sorted = np.zeros(ps.size)
    omega_sorted[:n] = mu - inv_gain[:n]
    omega = np.empty_like(omega_sorted)
    omega[order] = omega_sorted
    return AllocationResult(omega=omega, mu_opt=float(mu), active=n, c1=-1.0, c2=0.0,
                            iterations=iterations)


def cqa_constants(delta: float) -> tuple[float, float]:
    """Distortion-dependent constants ``(C1, C2)`` of CQA-MAAS.

    ``C1`` is evaluated in the rationalized form
    ``-2 / (delta * (delta + sqrt(4 - 3 delta^2)))`` which has no 0/0 at
    ``delta = 1``.
    """
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta!r}")
    root = np.sqrt(4 - 3 * delta ** 2)
    c1 = -2.0 / (delta * (delta + root))
    c2 = delta * (1 - delta ** 2) / root
    return float(c1), float(c2)


def cqa_mu_opt(spectrum: SpectrumView, p: int, snr: float, c1: float, c2: float,
               clamp: bool = False) -> float:
    """Water level over the ``N_u - p + 1`` strongest streams in the original closed form.

    ``N_u`` is the spectrum length and appears squared inside the square
    root while the active count appears squared in front. The bracket
    ``1 - sqrt(1 + y)`` is rewritten as ``-y / (1 + sqrt(1 + y))`` so the
    ``C2 -> 0`` limit needs no special case.

    A negative radicand raises :class:`SaturatedRegimeError` unless
    ``clamp`` is set, in which case it is replaced by zero.
    """
    phi = np.sort(np.asarray(spectrum.phi, dtype=float))[::-1]
    n_u = phi.size
    if not 1 <= p <= n_u:
        raise ValueError(f"p must lie in 1..{n_u}")
    n = n_u - p + 1
    act = phi[:n]
    if np.any(act <= 0):
        raise ValueError("active singular values must be > 0")
    s2 = np.sum(act ** 2)
    s_inv = np.sum(1 / act ** 2)
    y = 4 * c2 / n_u ** 2 * s2 * (-snr + c1 * s_inv)
    rad = 1 + y
    if rad < 0:
        if not clamp:
            raise SaturatedRegimeError(
                f"negative radicand {rad:.4g} (snr={snr:g}, C2={c2:.4g}, "
                f"sum phi^2={s2:.4g}): SNR/distortion outside model validity")
        return float(n ** 2 / (2 * c2 * snr * s2))
    return float(2 * n ** 2 * (snr - c1 * s_inv) / (n_u ** 2 * snr * (1 + np.sqrt(rad))))


def _water_level(g: np.ndarray, p_total: float, c1: float, c2: float,
                 clamp: bool) -> tuple[float, bool]:
    # Root of sum(c1/g + mu - c2 g mu^2) = p_total, rationalized.
    n = g.size
    b = p_total - c1 * np.sum(1 / g)
    rad = 1 - 4 * c2 * np.sum(g) * b / n ** 2
    if rad < 0:
        if not clamp:
            raise SaturatedRegimeError(
                f"negative radicand {rad:.4g} over {n} streams (C2={c2:.4g}): "
                "the budget cannot be spent under the distortion model")
        return float(n / (2 * c2 * np.sum(g))), True
    return float(2 * b / (n * (1 + np.sqrt(rad)))), False


def _stream_power(g: np.ndarray, mu: float, c1: float, c2: float) -> np.ndarray:
    # Per-stream KKT response of the second-order objective at water level mu.
    # The correction factor 2 / (1 + sqrt(1 + 4 C2^2 g^2 mu^2)) tends to 1 as
    # C2 g mu -> 0, leaving the first-order form C1/g + mu - C2 g mu^2.
    m = g * mu
    return c1 / g + mu - c2 * g * mu ** 2 * 2 / (1 + np.sqrt(1 + 4 * (c2 * m) ** 2))


def _exact_level(g: np.ndarray, p_total: float, c1: float, c2: float) -> tuple[float, bool]:
    """Water level spending ``p_total``; ``inf`` when the budget is not binding."""
    if c2 > 0 and np.sum((c1 + 1 / (2 * c2)) / g) <= p_total:
        return np.inf, True
    lo = 0.0
    hi = 2 * (p_total - c1 * np.sum(1 / g)) / g.size
    while np.sum(_stream_power(g, hi, c1, c2)) < p_total:
        lo, hi = hi, 2 * hi
    mu = brentq(lambda m: np.sum(_stream_power(g, m, c1, c2)) - p_total, lo, hi,
                xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps, maxiter=200)
    return float(mu), False


def cqa_maas(spectrum: SpectrumView, snr: float, delta: float, p_total: float, *,
             variant: str = "exact", on_saturation: str = "vertex") -> AllocationResult:
    """Quantization-aware water-filling with Kuhn-Tucker channel closing.

    The distortion constants ``(C1, C2)`` come from :func:`cqa_constants`.
    Streams are sorted by gain; while any active stream receives negative
    power the weakest active stream is closed and the water level is
    recomputed. Zero singular values start closed.

    Parameters
    ----------
    spectrum : SpectrumView
        Stream singular values (any order; the result follows the input order).
    snr : float
        Linear SNR ``p_total / N_0``.
    delta : float
        Bussgang gain of the DAC, in (0, 1].
    p_total : float
        Power budget, normally the number of streams.
    variant : {"exact", "closed-form", "verbatim"}
        ``"exact"`` solves the per-stream stationarity condition without
        truncation and finds the water level by root finding.
        ``"closed-form"`` uses the first-order stream power
        ``C1/g + mu - C2 g mu^2`` with its quadratic water level, gain
        ``g = snr phi^2 / p_total`` and budget kept fixed while channels
        close. ``"verbatim"`` additionally replaces ``p_total`` by the
        active count in the gain and uses :func:`cqa_mu_opt`; its level
        loses budget whenever a channel closes. ``"exact"`` and
        ``"closed-form"`` reduce to classical water-filling when
        ``delta = 1``; ``"verbatim"`` does so only while every stream is
        open.
    on_saturation : {"vertex", "fill", "raise"}
        Behaviour when no water level spends the budget. ``"vertex"`` keeps
        the largest admissible level and leaves the rest of the budget
        unused (for ``"exact"`` this is the optimum of the objective);
        ``"fill"`` scales that allocation up to ``p_total``; ``"raise"``
        raises :class:`SaturatedRegimeError`.
    """
    if variant not in ("exact", "closed-form", "verbatim"):
        raise ValueError(f"unknown variant {variant!r}")
    if on_saturation not in ("raise", "vertex", "fill"):
        raise ValueError(f"unknown on_saturation {on_saturation!r}")
    if snr <= 0 or p_total <= 0:
        raise ValueError("snr and p_total must be > 0")
    clamp = on_saturation != "raise"
    c1, c2 = cqa_constants(delta)
    order, ps, n = _sorted_positive(spectrum)
    n_u = ps.size
    iterations = 0
    while True:
        iterations += 1
        act = ps[:n]
        if variant == "exact":
            g = snr * act ** 2 / p_total
            mu, saturated = _exact_level(g, p_total, c1, c2)
            if saturated and not clamp:
                raise SaturatedRegimeError(
                    f"budget {p_total:g} exceeds what {n} streams can use at "
                    f"C2={c2:.4g}")
            w = (c1 + 1 / (2 * c2)) / g if saturated else _stream_power(g, mu, c1, c2)
        elif variant == "closed-form":
            g = snr * act ** 2 / p_total
            mu, saturated = _water_level(g, p_total, c1, c2, clamp)
            w = c1 / g + mu - c2 * g * mu ** 2
        else:
            p = n_u - n + 1
            mu = cqa_mu_opt(SpectrumView(ps), p, snr, c1, c2, clamp=clamp)
            s2 = np.sum(act ** 2)
            saturated = 1 + 4 * c2 / n_u ** 2 * s2 * (-snr + c1 * np.sum(1 / act ** 2)) < 0
            w = c1 * n / (snr * act ** 2) + mu - mu ** 2 * c2 * snr * act ** 2 / n
        if np.all(w >= 0):
            break
        n -= 1
        if n == 0:
            raise InfeasibleError("every stream was closed; no feasible allocation")
    omega_sorted = np.zeros(n_u)
    omega_sorted[:n] = w
    total = omega_sorted.sum()
    if total > p_total * (1 + 1e-9) or (saturated and on_saturation == "fill"):
        omega_sorted *= p_total / total
    omega = np.empty(n_u)
    omega[order] = omega_sorted
    return AllocationResult(omega=omega, mu_opt=float(mu), active=n, c1=c1, c2=c2,
                            iterations=iterations, saturated=bool(saturated))


def objective_eq17(omega, spectrum: SpectrumView, delta: float,
                   noise_power: float) -> float:
    """Second-order distortion-aware sum rate in bits.

    ``sum_m log2(1 + d^2 x_m - d^2 (1 - d^2) x_m^2)`` with
    ``x_m = phi_m^2 omega_m / N_0``.
    """
    omega = np.asarray(omega, dtype=float)
    phi = spectrum.phi if isinstance(spectrum, SpectrumView) else np.asarray(spectrum)
    if omega.shape != phi.shape:
        raise ValueError("omega and spectrum lengths differ")
    if np.any(omega < 0):
        raise ValueError("omega entries must be >= 0")
    x = phi ** 2 * omega / noise_power
    d2 = delta ** 2
    arg = 1 + d2 * x - d2 * (1 - d2) * x ** 2
    if np.any(arg <= 0):
        m = int(np.argmin(arg))
        raise ModelValidityError(
            f"log argument {arg[m]:.4g} <= 0 at stream {m} (per-stream SNR {x[m]:.4g}, "
            f"delta={delta:.4g}): beyond the second-order model")
    return float(np.sum(np.log2(arg)))
