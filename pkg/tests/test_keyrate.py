import dataclasses
import itertools
import json
import math

import pytest
from hypothesis import given, strategies as st

from amdiqkd import published as ref
from amdiqkd.config import ExperimentConfig, PairingMode, SecurityConfig, SourceConfig
from amdiqkd.keyrate import (
    DecoyEstimate, KeyRateReport, calibrate_f_ec, click_prob, compute_key_rate, decoy_estimate, h2,
    key_length, lambda_ec, pair_prob,
)
from amdiqkd.pairing import ContractError, TallySheet

LAMBDA_508 = 1072711.4918435674  # 50-digit H2 evaluation, frozen


def enumerate_pair_prob(name_a, name_b, src, filtered):
    """Sum over all 81 (early, late) label combinations whose totals match."""
    labels = ("mu", "nu", "o")
    p = dict(zip(labels, src.probs))
    p_s = 1 - 2 * src.p_mu * src.p_nu if filtered else 1.0

    def total(x, y):
        parts = sorted(s for s in (x, y) if s != "o")
        return {(): "o", ("nu",): "nu", ("mu",): "mu", ("nu", "nu"): "2nu",
                ("mu", "nu"): "mu+nu", ("mu", "mu"): "2mu"}[tuple(parts)]

    acc = 0.0
    for ae, be, al, bl in itertools.product(labels, repeat=4):
        if filtered and ({ae, be} == {"mu", "nu"} or {al, bl} == {"mu", "nu"}):
            continue
        if total(ae, al) == name_a and total(be, bl) == name_b:
            acc += p[ae] * p[be] / p_s * p[al] * p[bl] / p_s
    if name_a == name_b == "2nu":
        acc *= 2 / src.M
    return acc


RETAINED = ("o", "nu", "mu", "2nu")


@pytest.mark.parametrize("mode", ["filtered", "unfiltered"])
def test_pair_prob_matches_enumeration(mode):
    src = ref.reference_config(508.16).source
    for a, b in itertools.product(RETAINED, repeat=2):
        assert pair_prob(a, b, src, mode) == pytest.approx(
            enumerate_pair_prob(a, b, src, mode == "filtered"), rel=1e-14)


def test_pair_prob_examples():
    src = SourceConfig.symmetric(0.4, 0.1, 0.3, 0.3, M=16)
    no_phase = pair_prob("2nu", "2nu", dataclasses.replace(src, M=2), "filtered")
    assert pair_prob("2nu", "2nu", src, "filtered") == pytest.approx(no_phase / 8, rel=1e-15)
    assert click_prob(0, 0, src, "unfiltered") == src.p_mu**2
    assert click_prob(0, 1, src, "filtered") == 0.0
    with pytest.raises(ContractError):
        pair_prob("mu+nu", "o", src, "filtered")
    with pytest.raises(ContractError):
        pair_prob("3mu", "o", src, "filtered")


@pytest.mark.parametrize("d", ref.DISTANCES)
def test_decoy_reproduces_table(d):
    est = decoy_estimate(ref.reference_tally(d), ref.reference_config(d))
    assert est.feasible and est.n_chernoff == 12
    assert est.s11_z_lower == pytest.approx(ref.reference("s11_z", d), rel=5e-3)
    assert est.s11_x_lower == pytest.approx(ref.reference("s11_x", d), rel=5e-3)
    assert est.phi11_z_upper == pytest.approx(ref.reference("phi11_z", d), abs=5e-3)


@pytest.mark.parametrize("d", ref.DISTANCES)
def test_lower_bounds_below_raw_counts(d):
    tally = ref.reference_tally(d)
    est = decoy_estimate(tally, ref.reference_config(d))
    assert 0 <= est.s11_z_lower <= tally.n("[mu,mu]")
    assert 0 <= est.s11_x_lower <= tally.n("[2nu,2nu]")
    assert 0 <= est.t11_x_upper <= tally.m_x
    assert 0 <= est.e11_x_upper <= 1
    assert 0 <= est.s0_z_lower <= tally.n("[mu,mu]")


def test_zero_tally():
    cfg = ref.reference_config(508.16)
    est = decoy_estimate(TallySheet(), cfg)
    assert not est.feasible
    assert est.s11_z_lower == est.s11_x_lower == est.s0_z_lower == est.phi11_z_upper == 0
    rep = compute_key_rate(TallySheet(n_bins=1e9), cfg)
    assert rep.key_length == 0 and rep.skr_bps == 0 and not rep.feasible


def test_mode_mismatch():
    with pytest.raises(ContractError):
        decoy_estimate(ref.reference_tally(201.86), ref.reference_config(201.86), "unfiltered")


def test_lambda_ec():
    t = TallySheet(n_pair={"[mu,mu]": 1000.0}, m_pair={"[mu,mu]": 0.0})
    assert lambda_ec(t, 1.1) == 0
    t.m_pair["[mu,mu]"] = 500.0
    assert lambda_ec(t, 1.1) == pytest.approx(1100.0, rel=1e-15)
    t = TallySheet(n_pair={"[mu,mu]": 46060442.0}, m_pair={"[mu,mu]": 46060442 * 0.00204})
    assert lambda_ec(t, 1.1) == pytest.approx(LAMBDA_508, rel=1e-12)
    assert lambda_ec(TallySheet(), 1.1) == 0


def test_lambda_ec_unfiltered_sums_key_classes():
    n = {"[mu,mu]": 100.0, "[mu,nu]": 50.0, "[nu,mu]": 40.0, "[nu,nu]": 30.0}
    m = {k: v / 10 for k, v in n.items()}
    t = TallySheet(mode="unfiltered", n_pair=n, m_pair=m)
    assert lambda_ec(t, 1.0) == pytest.approx(220 * h2(0.1), rel=1e-14)
    assert lambda_ec(TallySheet(mode="filtered", n_pair=n, m_pair=m), 1.0) == pytest.approx(100 * h2(0.1))


def test_key_length_degenerate():
    sec = SecurityConfig()
    rep = key_length(DecoyEstimate(feasible=True), 0.0, sec, 1e12, 1e9)
    assert rep.key_length == 0
    est = DecoyEstimate(s11_z_lower=1e9, s11_x_lower=1e4, phi11_z_upper=0.5, feasible=True)
    rep = key_length(est, 0.0, sec, 1e12, 1e9)
    assert rep.key_length == 0 and any("0.5" in m for m in rep.diagnostics)


@given(s0=st.floats(0, 1e9), s11=st.floats(1, 1e9), phi=st.floats(0, 0.49), lam=st.floats(0, 1e9),
       N=st.floats(1e6, 1e14))
def test_report_invariants(s0, s11, phi, lam, N):
    est = DecoyEstimate(s0_z_lower=s0, s11_z_lower=s11, s11_x_lower=10, phi11_z_upper=phi, feasible=True)
    rep = key_length(est, lam, SecurityConfig(), N, 1e9, eta=1e-5)
    assert rep.key_length >= 0
    assert rep.skr_bps == pytest.approx(1e9 * rep.key_length / N, rel=1e-12)
    assert rep.ratio == pytest.approx(rep.skr_per_clock / rep.skc0_per_clock, rel=1e-12)


@given(scale=st.floats(1.0, 1.3), d=st.sampled_from(ref.DISTANCES))
def test_more_x_errors_never_help(scale, d):
    cfg = ref.reference_config(d)
    base = ref.reference_tally(d)
    worse = TallySheet.from_dict(base.to_dict())
    worse.m_pair["[2nu,2nu]"] *= scale
    assert compute_key_rate(worse, cfg).key_length <= compute_key_rate(base, cfg).key_length


def test_report_json_round_trip():
    rep = compute_key_rate(ref.reference_tally(508.16), ref.reference_config(508.16))
    again = KeyRateReport.from_dict(json.loads(rep.to_json()))
    assert again == rep
    assert set(json.loads(rep.to_json())) >= {
        "lambda_ec", "key_length", "skr_bps", "skr_per_clock", "skc0_per_clock", "ratio", "decoy"}


def test_eps_tol_reported():
    rep = compute_key_rate(ref.reference_tally(201.86), ref.reference_config(201.86))
    assert rep.eps_tol == 2.3e-9


def test_calibration():
    cases = [(ref.reference_tally(d), ref.reference_config(d)) for d in ref.DISTANCES]
    f, worst = calibrate_f_ec(cases, [ref.reference("skr_bps", d) for d in ref.DISTANCES])
    assert 1.0 <= f <= 1.3 and worst < 0.02
    for (t, c), d in zip(cases, ref.DISTANCES):
        assert compute_key_rate(t, c, f_ec=f).skr_bps == pytest.approx(ref.reference("skr_bps", d), rel=0.02)


def test_unfiltered_estimate_runs():
    cfg = ref.reference_config(201.86)
    filt = ref.reference_tally(201.86)
    unf = TallySheet.from_dict({**filt.to_dict(), "mode": "unfiltered"})
    est = decoy_estimate(unf, cfg)
    assert est.n_chernoff > 12
    assert est.s11_z_lower > 0


def test_asymmetric_source_counts_more():
    cfg = ref.reference_config(201.86)
    src = dataclasses.replace(cfg.source, mu_b=cfg.source.mu_a * 0.95)
    est = decoy_estimate(ref.reference_tally(201.86), dataclasses.replace(cfg, source=src))
    assert est.n_chernoff > 12


def test_h2():
    assert h2(0) == h2(1) == 0
    assert h2(0.5) == 1
    assert h2(0.11) == pytest.approx(0.4999, abs=1e-3)
