"""Checks against the published decoy, key-rate, capacity and pairing tables."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import published as ref
from .channel import gain_conditional, gain_total, qber_x_drift, skc0
from .config import NoiseConfig, SecurityConfig
from .keyrate import calibrate_f_ec, compute_key_rate, decoy_estimate
from .predict import pairing_stats, pk_scaling


@dataclass
class Check:
    """``kind`` is "rel" or "abs" (|value - target| <= tol) or "max" (value <= target)."""

    name: str
    value: float
    target: float
    tol: float = 0.0
    kind: str = "rel"

    @property
    def error(self) -> float:
        if self.kind == "max":
            return max(self.value - self.target, 0.0)
        diff = abs(self.value - self.target)
        return diff / abs(self.target) if self.kind == "rel" else diff

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status}  {self.name:<38} {self.value:<13.6g} {self.target:<13.6g} "
            f"{self.kind} err {self.error:.2e} (tol {self.tol:g})"
        )


def decoy_checks() -> list[Check]:
    out = []
    for d in ref.DISTANCES:
        est = decoy_estimate(ref.reference_tally(d), ref.reference_config(d))
        out += [
            Check(f"s11_z @ {d} km", est.s11_z_lower, ref.reference("s11_z", d), 5e-3),
            Check(f"s11_x @ {d} km", est.s11_x_lower, ref.reference("s11_x", d), 5e-3),
            Check(f"phi11_z @ {d} km", est.phi11_z_upper, ref.reference("phi11_z", d), 5e-3, kind="abs"),
        ]
    return out


def calibrated_f_ec() -> tuple[float, float]:
    cases = [(ref.reference_tally(d), ref.reference_config(d)) for d in ref.DISTANCES]
    return calibrate_f_ec(cases, [ref.reference("skr_bps", d) for d in ref.DISTANCES])


def key_rate_checks(f_ec: float | None = None) -> list[Check]:
    if f_ec is None:
        f_ec, _ = calibrated_f_ec()
    out = [Check("calibrated f_ec in [1.0, 1.3]", f_ec, 1.15, 0.15, kind="abs")]
    for d in ref.DISTANCES:
        rep = compute_key_rate(ref.reference_tally(d), ref.reference_config(d), f_ec=f_ec)
        out += [
            Check(f"SKR bit/s @ {d} km", rep.skr_bps, ref.reference("skr_bps", d), 2e-2),
            Check(f"ratio SKR/SKC0 @ {d} km", rep.ratio, ref.reference("ratio", d), 2e-2),
        ]
    return out


def capacity_checks() -> list[Check]:
    return [
        Check(f"SKC0 @ {d} km", skc0(10 ** (-ref.FIBER[d]["loss_total"] / 10)), ref.reference("skc0", d), 5e-3)
        for d in ref.DISTANCES
    ]


def pairing_checks() -> list[Check]:
    out = []
    for d in ref.DISTANCES:
        t = pairing_stats(ref.reference_config(d)).t_mean
        out.append(Check(f"T_mean closed form @ {d} km", t, ref.T_MEAN[d]["sim"], 2e-2))
        for key in ("mu_mu", "two_mu", "two_nu"):
            out.append(Check(f"T_mean measured {key} @ {d} km", ref.T_MEAN[d][key], t, 0.10))
    return out


def scaling_checks() -> list[Check]:
    out = []
    for d in ref.DISTANCES:
        c = pk_scaling(ref.reference_config(d))[1]
        out.append(Check(f"P(K)/sqrt(eta) @ {d} km", c, ref.PK_CONSTANT[d], 0.10))
    return out


def gain_checks(points: int = 256) -> list[Check]:
    """Worst relative gap between the phase average and the closed form, per distance."""
    theta = 2 * math.pi * np.arange(points) / points
    out = []
    for d in ref.DISTANCES:
        cfg = ref.reference_config(d)
        ks_a, ks_b = cfg.source.intensities("a"), cfg.source.intensities("b")
        worst = 0.0
        for ka in ks_a:
            for kb in ks_b:
                g = gain_conditional(theta, ka, kb, cfg.link)
                avg = float(np.mean(g.q_L + g.q_R))
                exact = float(gain_total(ka, kb, cfg.link))
                worst = max(worst, abs(avg - exact) / exact)
        out.append(Check(f"gain identity (9 classes) @ {d} km", worst, 0.0, 1e-10, kind="abs"))
    return out


def qber_checks() -> list[Check]:
    a = qber_x_drift(85e-6, NoiseConfig(sigma=5900, delta_f=10, v2=0.46))
    b = qber_x_drift(200e-6, NoiseConfig(sigma=2100, delta_f=10, v2=0.46))
    return [
        Check("X-QBER at 85 us, sigma 5900", a, 0.30, 0.01, kind="abs"),
        Check("X-QBER at 200 us, sigma 2100 (< 0.30)", b, 0.30 - 1e-12, kind="max"),
    ]


def epsilon_checks() -> list[Check]:
    return [Check("eps_tol (exact)", SecurityConfig(epsilon=1e-10).eps_tol(), 2.3e-9, 0.0, kind="abs")]


def run_all() -> list[Check]:
    f_ec, _ = calibrated_f_ec()
    return (
        decoy_checks() + key_rate_checks(f_ec) + capacity_checks() + pairing_checks()
        + gain_checks() + qber_checks() + scaling_checks() + epsilon_checks()
    )
