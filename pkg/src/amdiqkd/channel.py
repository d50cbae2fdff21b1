"""Closed-form optical and detection model.

Conventions: ``theta`` is the phase of Bob's pulse relative to Alice's as
seen at Charlie's beam splitter.  Detector L is the constructive port at
``theta = 0``.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .config import LinkConfig, NoiseConfig

# Below this the power series is used; above it the asymptotic expansion.
_I0_SWITCH = 30.0


def bessel_i0(x):
    """Modified Bessel function of the first kind, order zero.

    Power series for ``|x| <= 30`` and Hankel's asymptotic expansion above;
    both are accurate to a few ulp over the range the gains need.
    """
    x = np.abs(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    small = x <= _I0_SWITCH
    if np.any(small):
        out[small] = _i0_series(x[small])
    if np.any(~small):
        out[~small] = _i0_asymptotic(x[~small])
    return out if out.ndim else float(out)


def _i0_series(x: np.ndarray) -> np.ndarray:
    return 1.0 + _i0m1_series(x)


def _i0m1_series(x: np.ndarray) -> np.ndarray:
    # I0(x) - 1 without forming the leading 1, so tiny arguments keep full precision
    q = 0.25 * x * x
    term = q.copy()
    total = q.copy()
    k = 1
    while True:
        k += 1
        term = term * q / (k * k)
        total = total + term
        if np.all(term <= 1e-17 * total):
            return total


def bessel_i0m1(x):
    """I0(x) - 1, accurate for small arguments."""
    x = np.abs(np.asarray(x, dtype=float))
    out = np.empty_like(x)
    small = x <= _I0_SWITCH
    if np.any(small):
        out[small] = _i0m1_series(x[small])
    if np.any(~small):
        out[~small] = _i0_asymptotic(x[~small]) - 1.0
    return out if out.ndim else float(out)


def _i0_asymptotic(x: np.ndarray) -> np.ndarray:
    # e^x / sqrt(2 pi x) * sum_k ((2k-1)!!)^2 / (k! 8^k x^k)
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, 60):
        nxt = term * (2 * k - 1) ** 2 / (8.0 * k * x)
        if np.all(np.abs(nxt) >= np.abs(term)):
            break
        term = nxt
        total = total + term
        if np.all(np.abs(term) <= 1e-17 * total):
            break
    return np.exp(x) / np.sqrt(2 * np.pi * x) * total


def transmittance(length_km: float, alpha_db_per_km: float, extra_db: float = 0.0) -> float:
    return 10 ** (-(alpha_db_per_km * length_km + extra_db) / 10)


class GainPair(NamedTuple):
    """Exclusive-click probabilities on detector L and R."""

    q_L: np.ndarray | float
    q_R: np.ndarray | float

    @property
    def total(self):
        return self.q_L + self.q_R


def _log_no_click(k_a, k_b, link: LinkConfig):
    """Return (log y_L, log y_R, x), x the interference amplitude sqrt(eta_a k_a eta_b k_b).

    y_L (y_R) is the probability that L (R) stays silent with interference
    averaged out.
    """
    k_a = np.asarray(k_a, dtype=float)
    k_b = np.asarray(k_b, dtype=float)
    ia, ib = link.eta_a * k_a, link.eta_b * k_b
    log_y_L = math.log1p(-link.p_d_L) - link.eta_d_L * (ia + ib) / 2
    log_y_R = math.log1p(-link.p_d_R) - link.eta_d_R * (ia + ib) / 2
    return log_y_L, log_y_R, np.sqrt(ia * ib)


def _no_click(k_a, k_b, link: LinkConfig):
    log_y_L, log_y_R, x = _log_no_click(k_a, k_b, link)
    return np.exp(log_y_L), np.exp(log_y_R), x


def gain_conditional(theta, k_a, k_b, link: LinkConfig) -> GainPair:
    """Exclusive click probabilities for a fixed phase difference ``theta``.

    Inputs broadcast against each other.
    """
    log_y_L, log_y_R, x = _log_no_click(k_a, k_b, link)
    c = x * np.cos(np.asarray(theta, dtype=float))
    log_no_L = log_y_L - link.eta_d_L * c
    log_no_R = log_y_R + link.eta_d_R * c
    # 1 - P(silent) through expm1: dark-count-only bins would lose every digit otherwise
    return GainPair(
        q_L=np.exp(log_no_R) * -np.expm1(log_no_L),
        q_R=np.exp(log_no_L) * -np.expm1(log_no_R),
    )


def gain_total(k_a, k_b, link: LinkConfig):
    """Phase-averaged probability that exactly one detector clicks.

    Evaluates y_L I0(a_L) + y_R I0(a_R) - 2 y_L y_R I0(a_LR), regrouped as
    y_L [I0(a_L) - y_R I0(a_LR)] + y_R [I0(a_R) - y_L I0(a_LR)] with each
    bracket formed from I0 - 1 and 1 - y, so no large terms cancel.
    """
    log_y_L, log_y_R, x = _log_no_click(k_a, k_b, link)
    y_L, y_R = np.exp(log_y_L), np.exp(log_y_R)
    a_L, a_R, a_LR = link.eta_d_L * x, link.eta_d_R * x, (link.eta_d_L - link.eta_d_R) * x
    i_LR = bessel_i0(a_LR)
    left = bessel_i0m1(a_L) - bessel_i0m1(a_LR) - np.expm1(log_y_R) * i_LR
    right = bessel_i0m1(a_R) - bessel_i0m1(a_LR) - np.expm1(log_y_L) * i_LR
    return y_L * left + y_R * right


def click_bound(k_a, k_b, link: LinkConfig):
    """Phase-independent upper bound on P(at least one click) for a class."""
    y_L, y_R, x = _no_click(k_a, k_b, link)
    return 1 - y_L * y_R * np.exp(-abs(link.eta_d_R - link.eta_d_L) * x)


def qber_x_drift(delta_t, noise: NoiseConfig):
    """X-basis error rate after a pairing interval ``delta_t`` (s).

    Gaussian-distributed drift rate plus a fixed laser frequency offset on
    top of the visibility-limited floor ``(1 - V2) / 2``.
    """
    dt = np.asarray(delta_t, dtype=float)
    v2 = noise.v2
    decay = np.exp(-(noise.sigma * dt) ** 2 / 2) * np.cos(2 * np.pi * noise.delta_f * dt)
    out = (1 - v2) / 2 + v2 / 2 * (1 - decay)
    return out if out.ndim else float(out)


def skc0(eta_total: float) -> float:
    """Repeaterless secret key capacity -log2(1 - eta), bits per clock."""
    if not 0.0 <= eta_total < 1.0:
        raise ValueError(f"transmittance {eta_total} outside [0, 1)")
    return -math.log1p(-eta_total) / math.log(2)
