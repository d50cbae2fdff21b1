"""Decoy-state estimation and the finite-key secret key length.

Observed set sizes are first turned into bounds on their expected values,
combined linearly into single-photon-pair and vacuum estimates, and the
combined expected bounds are then converted back into bounds on observed
quantities.  Every Chernoff-type conversion is counted so the failure
budget can be reported; for a symmetric source in filtered mode the count
is 12:

  s11 bracket   n[nu,nu] lower, n[o,nu]+n[nu,o] upper, n[o,o] lower,
                n[mu,mu] upper, n[o,mu]+n[mu,o] lower          (5)
  s11^z         observed lower                                  (1)
  s0^z          n[o,mu]+n[mu,o] lower, observed lower           (2)
  s11^x         observed lower                                  (1)
  m0            n[o,2nu]+n[2nu,o] lower, n[o,o] upper,
                observed lower                                  (3)

Asymmetric sources bound each one-sided class separately and the
unfiltered vacuum estimate needs one more class, so the count grows.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

from scipy.optimize import minimize_scalar

from .channel import skc0
from .config import ExperimentConfig, PairingMode, SecurityConfig, SourceConfig
from .fstats import chernoff_expected, chernoff_observed, gamma_u
from .pairing import FILTERED_CLICK_CLASSES, OVER_INTENSITY, TOTAL_NAMES, X_CLASS, ContractError, TallySheet, click_class, key_classes

# (early, late) intensity-class splittings of each combined intensity
SPLITS = {
    "o": ((2, 2),),
    "nu": ((1, 2), (2, 1)),
    "mu": ((0, 2), (2, 0)),
    "2nu": ((1, 1),),
    "mu+nu": ((0, 1), (1, 0)),
    "2mu": ((0, 0),),
}


def h2(x: float) -> float:
    """Binary entropy in bits."""
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def _total_name(t) -> str:
    if isinstance(t, str):
        if t not in TOTAL_NAMES:
            raise ContractError(f"unknown combined intensity {t!r}")
        return t
    return TOTAL_NAMES[int(t)]


def click_prob(ka: int, kb: int, source: SourceConfig, mode: PairingMode | str) -> float:
    """Probability of a bin's (ka|kb) labels among bins that survive filtering."""
    mode = PairingMode.parse(mode)
    p = source.probs
    if mode is PairingMode.FILTERED:
        if click_class(ka, kb) in FILTERED_CLICK_CLASSES:
            return 0.0
        p_s = 1 - source.p_mu * source.p_nu * 2
        return p[ka] * p[kb] / p_s
    return p[ka] * p[kb]


def pair_prob(ta, tb, source: SourceConfig, mode: PairingMode | str) -> float:
    """Prior probability of pair class [ta, tb] summed over bin splittings.

    The X class [2nu,2nu] carries the 2/M phase-matching factor.
    """
    ta, tb = _total_name(ta), _total_name(tb)
    if TOTAL_NAMES.index(ta) in OVER_INTENSITY or TOTAL_NAMES.index(tb) in OVER_INTENSITY:
        raise ContractError(f"pair class [{ta},{tb}] is discarded by the protocol")
    total = 0.0
    for ae, al in SPLITS[ta]:
        for be, bl in SPLITS[tb]:
            total += click_prob(ae, be, source, mode) * click_prob(al, bl, source, mode)
    if ta == tb == "2nu":
        total *= 2 / source.M
    return total


@dataclass
class DecoyEstimate:
    s0_z_lower: float = 0.0
    s11_z_lower: float = 0.0
    s11_x_lower: float = 0.0
    t11_x_upper: float = 0.0
    e11_x_upper: float = 0.0
    phi11_z_upper: float = 0.0
    m0_x_lower: float = 0.0
    feasible: bool = False
    n_chernoff: int = 0
    diagnostics: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class _Counted:
    """Chernoff conversions at a fixed epsilon, with a running count."""

    def __init__(self, epsilon: float):
        self.epsilon = epsilon
        self.count = 0

    def expected(self, x: float) -> tuple[float, float]:
        self.count += 1
        return chernoff_expected(max(x, 0.0), self.epsilon)

    def observed_lower(self, x_star: float) -> float:
        self.count += 1
        return chernoff_observed(max(x_star, 0.0), self.epsilon)[0]


def _sigma_choice(source: SourceConfig) -> tuple[float, float]:
    if source.mu_a / source.mu_b <= source.nu_a / source.nu_b:
        return source.mu_a, source.nu_a
    return source.mu_b, source.nu_b


def _one_sided(tally: TallySheet, C: _Counted, a_label: str, b_label: str, pooled: bool, upper: bool):
    """Expected-value bound(s) on the one-sided classes [x,o] and [o,x].

    Returns (bound for a_label, bound for b_label).  With pooling the bound
    on the sum is split evenly; only the sum ever enters the estimates.
    """
    pick = 1 if upper else 0
    if pooled:
        half = C.expected(tally.n(a_label) + tally.n(b_label))[pick] / 2
        return half, half
    return C.expected(tally.n(a_label))[pick], C.expected(tally.n(b_label))[pick]


def decoy_estimate(tally: TallySheet, config: ExperimentConfig, mode: PairingMode | str | None = None) -> DecoyEstimate:
    mode = PairingMode.parse(mode or tally.mode)
    if PairingMode.parse(tally.mode) is not mode:
        raise ContractError(f"tally was produced in {tally.mode} mode, not {mode.value}")
    src, sec = config.source, config.security
    C = _Counted(sec.epsilon)
    est = DecoyEstimate()
    diag = est.diagnostics
    pooled = src.is_symmetric
    mu_a, nu_a, mu_b, nu_b = src.mu_a, src.nu_a, src.mu_b, src.nu_b

    def p(ta, tb):
        return pair_prob(ta, tb, src, mode)

    # shared bracket of the single-photon-pair bounds
    mu_p, nu_p = _sigma_choice(src)
    vv_lo = C.expected(tally.n("[nu,nu]"))[0]
    ov_hi, vo_hi = _one_sided(tally, C, "[o,nu]", "[nu,o]", pooled, upper=True)
    oo_lo = C.expected(tally.n("[o,o]"))[0]
    mm_hi = C.expected(tally.n("[mu,mu]"))[1]
    om_lo, mo_lo = _one_sided(tally, C, "[o,mu]", "[mu,o]", pooled, upper=False)
    bracket = mu_a * mu_b * mu_p * (
        math.exp(nu_a + nu_b) * vv_lo / p("nu", "nu")
        - math.exp(nu_b) * ov_hi / p("o", "nu")
        - math.exp(nu_a) * vo_hi / p("nu", "o")
        + oo_lo / p("o", "o")
    ) - nu_a * nu_b * nu_p * (
        math.exp(mu_a + mu_b) * mm_hi / p("mu", "mu")
        - math.exp(mu_b) * om_lo / p("o", "mu")
        - math.exp(mu_a) * mo_lo / p("mu", "o")
        + oo_lo / p("o", "o")
    )
    if bracket < 0:
        diag.append(f"single-photon bracket negative ({bracket:.4g}), clamped to 0")
        bracket = 0.0

    if mode is PairingMode.FILTERED:
        weight = mu_a * mu_b * math.exp(-mu_a - mu_b) * p("mu", "mu")
    else:
        weight = sum(
            ka * kb * math.exp(-ka - kb) * p(ta, tb)
            for ta, ka in (("mu", mu_a), ("nu", nu_a))
            for tb, kb in (("mu", mu_b), ("nu", nu_b))
        )
    s11z_star = weight / (mu_a * mu_b * nu_a * nu_b * (mu_p - nu_p)) * bracket
    s11x_star = (
        math.exp(-2 * nu_a - 2 * nu_b) * 4 * p("2nu", "2nu") / (mu_a * mu_b * (mu_p - nu_p)) * bracket
    )

    # vacuum contribution in the key classes
    if mode is PairingMode.FILTERED:
        om_lo0 = _one_sided(tally, C, "[o,mu]", "[mu,o]", pooled, upper=False)[0]
        s0_star = math.exp(-mu_a) * p("mu", "mu") / p("o", "mu") * om_lo0
    else:
        om_lo0 = _one_sided(tally, C, "[o,mu]", "[mu,o]", pooled, upper=False)[0]
        ov_lo0 = _one_sided(tally, C, "[o,nu]", "[nu,o]", pooled, upper=False)[0]
        s0_star = (
            (math.exp(-mu_a) * p("mu", "mu") + math.exp(-nu_a) * p("nu", "mu")) / p("o", "mu") * om_lo0
            + (math.exp(-mu_a) * p("mu", "nu") + math.exp(-nu_a) * p("nu", "nu")) / p("o", "nu") * ov_lo0
        )

    est.s11_z_lower = C.observed_lower(s11z_star)
    est.s0_z_lower = C.observed_lower(s0_star)
    est.s11_x_lower = C.observed_lower(s11x_star)
    # s11^z can never exceed the set it is drawn from
    est.s11_z_lower = min(est.s11_z_lower, tally.n("[mu,mu]") if mode is PairingMode.FILTERED
                          else sum(tally.n(k) for k in key_classes(mode)))

    # X errors attributable to pairs where someone sent vacuum
    p2v = p("2nu", "2nu")
    o2v_lo, v2o_lo = _one_sided(tally, C, "[o,2nu]", "[2nu,o]", pooled, upper=False)
    oo_hi = C.expected(tally.n("[o,o]"))[1]
    m0_star = (
        math.exp(-2 * nu_a) * p2v / (2 * p("o", "2nu")) * o2v_lo
        + math.exp(-2 * nu_b) * p2v / (2 * p("2nu", "o")) * v2o_lo
        - math.exp(-2 * nu_a - 2 * nu_b) * p2v / (2 * p("o", "o")) * oo_hi
    )
    est.m0_x_lower = C.observed_lower(m0_star)
    est.n_chernoff = C.count

    t11 = tally.m_x - est.m0_x_lower
    if t11 < 0:
        diag.append("vacuum X errors exceed observed X errors, t11 clamped to 0")
        t11 = 0.0
    est.t11_x_upper = t11

    if est.s11_x_lower < 1 or est.s11_z_lower < 1:
        diag.append("single-photon pair bounds below one, estimate infeasible")
        return est
    e11 = min(t11 / est.s11_x_lower, 1.0)
    est.e11_x_upper = e11
    lam = min(max(e11, 1e-12), 1 - 1e-12)
    phi = e11 + gamma_u(est.s11_z_lower, est.s11_x_lower, lam, sec.eps_e)
    if phi > 1.0:
        diag.append(f"phase error bound {phi:.4g} exceeds 1, clamped")
        phi = 1.0
    est.phi11_z_upper = phi
    est.feasible = True
    return est


def lambda_ec(tally: TallySheet, f_ec: float, mode: PairingMode | str | None = None) -> float:
    """Bits disclosed by error correction over the key classes."""
    mode = PairingMode.parse(mode or tally.mode)
    total = 0.0
    for label in key_classes(mode):
        n = tally.n(label)
        if n > 0:
            total += n * f_ec * h2(tally.m(label) / n)
    return total


def finite_size_cost(security: SecurityConfig) -> float:
    """Key-length penalty from correctness and privacy amplification."""
    s = security
    return (
        math.log2(2 / s.eps_cor)
        + 2 * math.log2(2 / (s.eps_prime * s.eps_hat))
        + 2 * math.log2(1 / (2 * s.eps_pa))
    )


@dataclass
class KeyRateReport:
    lambda_ec: float
    key_length: float
    skr_bps: float
    skr_per_clock: float
    skc0_per_clock: float
    ratio: float
    decoy: DecoyEstimate
    eps_tol: float
    f_ec: float
    mode: str
    diagnostics: list[str] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.key_length > 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "KeyRateReport":
        data = dict(data)
        data["decoy"] = DecoyEstimate(**data["decoy"])
        fields = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in fields})

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def key_length(
    estimate: DecoyEstimate,
    lambda_ec_bits: float,
    security: SecurityConfig,
    N: float,
    F: float,
    *,
    eta: float | None = None,
    mode: PairingMode | str = PairingMode.FILTERED,
) -> KeyRateReport:
    """Secret key length and rates; ``eta`` (fiber transmittance) enables the SKC0 comparison."""
    diag = list(estimate.diagnostics)
    ell = 0.0
    if not estimate.feasible:
        diag.append("decoy estimate infeasible, no key")
    elif estimate.phi11_z_upper >= 0.5:
        diag.append(f"phase error bound {estimate.phi11_z_upper:.4g} >= 0.5, no key")
    else:
        ell = (
            estimate.s0_z_lower
            + estimate.s11_z_lower * (1 - h2(estimate.phi11_z_upper))
            - lambda_ec_bits
            - finite_size_cost(security)
        )
        if ell <= 0:
            diag.append("key length non-positive, clamped to 0")
            ell = 0.0
    per_clock = ell / N
    cap = skc0(eta) if eta is not None else float("nan")
    ratio = per_clock / cap if eta is not None and cap > 0 else float("nan")
    return KeyRateReport(
        lambda_ec=lambda_ec_bits,
        key_length=ell,
        skr_bps=F * per_clock,
        skr_per_clock=per_clock,
        skc0_per_clock=cap,
        ratio=ratio,
        decoy=estimate,
        eps_tol=security.eps_tol(estimate.n_chernoff or 12),
        f_ec=security.f_ec,
        mode=PairingMode.parse(mode).value,
        diagnostics=diag,
    )


def compute_key_rate(
    tally: TallySheet,
    config: ExperimentConfig,
    mode: PairingMode | str | None = None,
    *,
    f_ec: float | None = None,
) -> KeyRateReport:
    """Decoy estimate, error-correction cost and key length for one tally.

    The block size is ``tally.n_bins`` when set, else ``config.link.N``.
    """
    mode = PairingMode.parse(mode or tally.mode)
    sec = config.security if f_ec is None else dataclasses.replace(config.security, f_ec=f_ec)
    est = decoy_estimate(tally, config, mode)
    lam = lambda_ec(tally, sec.f_ec, mode)
    N = tally.n_bins or config.link.N
    return key_length(est, lam, sec, N, config.link.F, eta=config.link.eta_fiber, mode=mode)


def calibrate_f_ec(
    cases: Sequence[tuple[TallySheet, ExperimentConfig]],
    targets_bps: Sequence[float],
    bounds: tuple[float, float] = (1.0, 1.3),
) -> tuple[float, float]:
    """Single f_ec minimizing the worst relative SKR error over ``cases``.

    Returns (f_ec, worst relative error).
    """
    # the key length is affine in f_ec, so precompute the two pieces
    parts = []
    for tally, cfg in cases:
        base = compute_key_rate(tally, cfg, f_ec=1.0)
        slope = lambda_ec(tally, 1.0) * cfg.link.F / (tally.n_bins or cfg.link.N)
        parts.append((base.skr_bps + slope, slope))

    def worst(f):
        return max(abs((a - s * f) - t) / t for (a, s), t in zip(parts, targets_bps))

    res = minimize_scalar(worst, bounds=bounds, method="bounded", options={"xatol": 1e-9})
    return float(res.x), float(worst(res.x))
