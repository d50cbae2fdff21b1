"""Analytic expectations for the click, pairing and error statistics.

This is the deterministic counterpart of simulating, pairing and tallying
``N`` bins.  Pair-class sizes treat the two clicks of a pair as independent
draws from the per-click class distribution, which ignores the small
correlation greedy pairing introduces.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .channel import gain_conditional, gain_total
from .config import ExperimentConfig, PairingMode
from .keyrate import SPLITS, KeyRateReport, compute_key_rate
from .pairing import FILTERED_CLICK_CLASSES, OVER_INTENSITY, TOTAL_NAMES, X_CLASS, TallySheet, click_class, key_classes, pair_class

THETA_POINTS = 4096


class PairingStats(NamedTuple):
    q_tot: float
    q_Tc: float
    n_tot: float
    t_mean: float


def _filtered(ka: int, kb: int, mode: PairingMode) -> bool:
    return mode is PairingMode.FILTERED and click_class(ka, kb) in FILTERED_CLICK_CLASSES


def class_weights(config: ExperimentConfig) -> np.ndarray:
    """3x3 array of p_ka p_kb q_(ka|kb), the per-bin click probability of each class."""
    src = config.source
    ka = np.array(src.intensities("a"))[:, None]
    kb = np.array(src.intensities("b"))[None, :]
    p = np.array(src.probs)
    return p[:, None] * p[None, :] * gain_total(ka, kb, config.link)


def q_tot(config: ExperimentConfig, mode: PairingMode | str = PairingMode.FILTERED) -> float:
    """Per-bin probability of a click that survives filtering."""
    mode = PairingMode.parse(mode)
    w = class_weights(config)
    total = math.fsum(w.ravel())
    if mode is PairingMode.FILTERED:
        total -= w[0, 1] + w[1, 0]
    return total


def pairing_stats(config: ExperimentConfig, mode: PairingMode | str = PairingMode.FILTERED) -> PairingStats:
    q = q_tot(config, mode)
    link = config.link
    n_tc = link.F * link.T_c
    if q <= 0:
        return PairingStats(0.0, 0.0, 0.0, 0.0)
    stay = math.exp(n_tc * math.log1p(-q)) if q < 1 else 0.0  # (1 - q)^N_Tc
    q_tc = 1 - stay
    n_tot = link.N * q / (1 + 1 / q_tc)
    t_mean = (1 - n_tc * q * stay / q_tc) / (link.F * q)
    return PairingStats(q, q_tc, n_tot, t_mean)


def phase_offset(config: ExperimentConfig, t_mean: float) -> float:
    """Phase misalignment accumulated over the mean pairing interval."""
    noise = config.noise
    return t_mean * (2 * math.pi * noise.delta_f + noise.omega_fib)


def _theta_grid(points: int) -> np.ndarray:
    # periodic trapezoid rule: the plain mean over an equispaced grid
    return 2 * math.pi * np.arange(points) / points


def x_basis_terms(config: ExperimentConfig, t_mean: float, points: int = THETA_POINTS) -> tuple[float, float]:
    """Phase averages behind the X-class size and error count.

    Returns (<q(t)^2>, <error-pattern products>) for the (nu_a|nu_b) class,
    both over theta uniform in [0, 2 pi).
    """
    src, link = config.source, config.link
    theta = _theta_grid(points)
    delta = phase_offset(config, t_mean)
    g0 = gain_conditional(theta, src.nu_a, src.nu_b, link)
    g1 = gain_conditional(theta + delta, src.nu_a, src.nu_b, link)
    e = config.noise.e_hom
    same = np.mean(g0.q_L * g1.q_L + g0.q_R * g1.q_R)
    cross = np.mean(g0.q_L * g1.q_R + g0.q_R * g1.q_L)
    total_sq = np.mean((g0.q_L + g0.q_R) ** 2)
    return float(total_sq), float((1 - e) * cross + e * same)


def _pair_size(w: np.ndarray, q: float, ta: str, tb: str, mode: PairingMode, errors_only: bool = False) -> float:
    total = 0.0
    for (ae, al) in SPLITS[ta]:
        for (be, bl) in SPLITS[tb]:
            if _filtered(ae, be, mode) or _filtered(al, bl, mode):
                continue
            if errors_only and (ae == 2) != (be == 2):
                # Alice and Bob put their light in different bins: a correct Z pair
                continue
            total += (w[ae, be] / q) * (w[al, bl] / q)
    return total


def expected_tallies(
    config: ExperimentConfig,
    mode: PairingMode | str = PairingMode.FILTERED,
    *,
    points: int = THETA_POINTS,
) -> TallySheet:
    """Expected-valued tally for ``config.link.N`` bins."""
    mode = PairingMode.parse(mode)
    stats = pairing_stats(config, mode)
    N = config.link.N
    sheet = TallySheet(mode=mode.value, n_bins=N)
    w = class_weights(config)
    for a in range(3):
        for b in range(3):
            sheet.n_click[click_class(a, b)] = N * float(w[a, b])
    if stats.q_tot <= 0:
        return sheet
    q, n_tot = stats.q_tot, stats.n_tot
    M = config.source.M
    keys = key_classes(mode)
    for ia, ta in enumerate(TOTAL_NAMES):
        for ib, tb in enumerate(TOTAL_NAMES):
            label = pair_class(ia, ib)
            if label == X_CLASS:
                continue
            n = n_tot * _pair_size(w, q, ta, tb, mode)
            if n <= 0:
                continue
            if ia in OVER_INTENSITY or ib in OVER_INTENSITY:
                sheet.discarded_pairs[label] = n
                sheet.discarded["over_intensity_pairs"] += n
                continue
            sheet.n_pair[label] = n
            if label in keys:
                sheet.m_pair[label] = n_tot * _pair_size(w, q, ta, tb, mode, errors_only=True)

    pv4 = (config.source.p_nu * config.source.p_nu) ** 2
    total_sq, err = x_basis_terms(config, stats.t_mean, points)
    sheet.n_pair[X_CLASS] = n_tot * (2 / M) * pv4 * total_sq / q**2
    sheet.m_pair[X_CLASS] = n_tot * (2 / M) * pv4 * err / q**2
    sheet.discarded["phase_mismatch_pairs"] = n_tot * (1 - 2 / M) * pv4 * total_sq / q**2
    sheet.discarded_pairs[X_CLASS] = sheet.discarded["phase_mismatch_pairs"]

    for label, n in sheet.n_pair.items():
        sheet.t_sum[label] = n * stats.t_mean
    sheet.discarded["filtered_clicks"] = N * float(w[0, 1] + w[1, 0]) if mode is PairingMode.FILTERED else 0.0
    sheet.discarded["lone_clicks"] = N * q - 2 * n_tot
    return sheet


def pk_scaling(config: ExperimentConfig, mode: PairingMode | str = PairingMode.FILTERED) -> tuple[float, float]:
    """P(K) = n_tot / N and c = P(K) / sqrt(eta), eta the end-to-end transmittance to the detectors."""
    stats = pairing_stats(config, mode)
    pk = stats.n_tot / config.link.N
    eta = config.link.eta_a * config.link.eta_b
    return pk, pk / math.sqrt(eta)


def predicted_key_rate(config: ExperimentConfig, mode: PairingMode | str = PairingMode.FILTERED) -> KeyRateReport:
    """Key rate obtained by feeding expected tallies through the finite-key chain."""
    return compute_key_rate(expected_tallies(config, mode), config, mode)
