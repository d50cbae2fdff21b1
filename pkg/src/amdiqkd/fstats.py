"""Finite-size concentration bounds.

Counts are real-valued throughout; expected values are rarely integers.
"""
from __future__ import annotations

import math
import warnings


def _beta(epsilon: float) -> float:
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"failure probability {epsilon} outside (0, 1)")
    return math.log(1.0 / epsilon)


def chernoff_observed(x_star: float, epsilon: float) -> tuple[float, float]:
    """Bounds on an observed count given its expected value ``x_star``."""
    if x_star < 0:
        raise ValueError("expected count must be >= 0")
    b = _beta(epsilon)
    lower = max(x_star - math.sqrt(2 * b * x_star), 0.0)
    upper = x_star + b / 2 + math.sqrt(2 * b * x_star + b * b / 4)
    return lower, upper


def chernoff_expected(x: float, epsilon: float) -> tuple[float, float]:
    """Bounds on the expected value behind an observed count ``x``."""
    if x < 0:
        raise ValueError("observed count must be >= 0")
    b = _beta(epsilon)
    lower = max(x - b / 2 - math.sqrt(2 * b * x + b * b / 4), 0.0)
    upper = x + b + math.sqrt(2 * b * x + b * b)
    return lower, upper


def gamma_u(n: float, k: float, lam: float, epsilon: float) -> float:
    """Deviation bound for random sampling without replacement.

    Given an error rate ``lam`` observed on a sample of size ``k`` drawn from
    ``n + k`` items, the rate on the other ``n`` exceeds ``lam + gamma_u``
    with probability at most ``epsilon``.
    """
    if n < 1 or k < 1:
        raise ValueError("sample sizes must be >= 1")
    if not 0.0 < lam < 1.0:
        raise ValueError(f"rate {lam} must lie strictly inside (0, 1)")
    _beta(epsilon)
    s = n + k
    A = max(n, k)
    G = s / (n * k) * math.log(s / (2 * math.pi * n * k * lam * (1 - lam) * epsilon**2))
    if G <= 0:
        return 0.0
    num = (1 - 2 * lam) * A * G / s + math.sqrt(A * A * G * G / (s * s) + 4 * lam * (1 - lam) * G)
    return num / (2 + 2 * A * A * G / (s * s))


def upper_rate(n: float, k: float, lam: float, epsilon: float) -> float:
    """``lam + gamma_u`` clamped to 1 (with a warning when clamping bites)."""
    rate = lam + gamma_u(n, k, lam, epsilon)
    if rate > 1.0:
        warnings.warn(f"sampled rate bound {rate:.4g} exceeds 1, clamped", RuntimeWarning, stacklevel=2)
        rate = 1.0
    return rate
