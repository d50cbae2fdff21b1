import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from amdiqkd import published as ref
from amdiqkd.config import PairingMode
from amdiqkd.pairing import (
    ALL_CLICK_CLASSES, Basis, ContractError, GreedyMatcher, KeyMapping, SequencingError, StreamingTally,
    TallySheet, build_pairs, click_counts, filter_clicks, greedy_match, iter_records, make_clicks,
    match_pairs, pair_and_tally, sift, tally,
)
from conftest import brute_force_match

MU, NU, O = 0, 1, 2
F = 1e9


def clicks_from(bins, seed=0):
    rng = np.random.default_rng(seed)
    n = len(bins)
    return make_clicks(bins, rng.integers(0, 3, n), rng.integers(0, 3, n), rng.integers(0, 2, n),
                       rng.integers(0, 16, n), rng.integers(0, 16, n))


def test_filter_definition():
    c = make_clicks([1, 2, 3, 4], [MU, MU, NU, NU], [MU, NU, MU, NU])
    kept = filter_clicks(c, "filtered")
    assert list(zip(kept["ka"], kept["kb"])) == [(MU, MU), (NU, NU)]
    assert np.array_equal(filter_clicks(c, "unfiltered"), c)


def test_filter_rejects_disorder():
    with pytest.raises(SequencingError):
        filter_clicks(make_clicks([3, 1], [0, 0], [0, 0]), "filtered")
    with pytest.raises(SequencingError):
        filter_clicks(make_clicks([3, 3], [0, 0], [0, 0]), "filtered")


def test_filter_on_scaled_508km_counts():
    table = ref.reference_tally(508.16).n_click
    assert table["mu|nu"] == 173848551 and table["nu|nu"] == 27045205
    counts = {k: int(v // 10_000) for k, v in table.items()}
    labels = [k for k, v in counts.items() for _ in range(v)]
    rng = np.random.default_rng(1)
    rng.shuffle(labels)
    names = {"mu": MU, "nu": NU, "o": O}
    ka = [names[s.split("|")[0]] for s in labels]
    kb = [names[s.split("|")[1]] for s in labels]
    c = make_clicks(np.arange(len(labels)) * 7, ka, kb)
    after = click_counts(filter_clicks(c, "filtered"))
    assert "mu|nu" not in after and "nu|mu" not in after
    assert after == {k: v for k, v in counts.items() if k not in ("mu|nu", "nu|mu")}


def test_match_examples():
    early, late = greedy_match(np.array([0, 3]), 5)
    assert list(zip(early, late)) == [(0, 1)]
    early, late = greedy_match(np.array([0, 10]), 5)
    assert len(early) == 0
    m = GreedyMatcher(5)
    m.feed(make_clicks([0, 10], [0, 0], [0, 0]))
    m.finish()
    assert m.lone == 2


def test_chain_takes_first_fit():
    # 0-1 pair, then 2 starts fresh and takes 3
    early, late = greedy_match(np.array([0, 1, 2, 3, 4]), 1)
    assert list(zip(early, late)) == [(0, 1), (2, 3)]


def test_brute_force_oracle_random_streams():
    rng = np.random.default_rng(7)
    for trial in range(200):
        n_tc = int(rng.integers(1, 50))
        bins = np.cumsum(rng.geometric(rng.uniform(0.005, 0.5), size=10_000))
        early, late = greedy_match(bins, n_tc)
        assert list(zip(early.tolist(), late.tolist())) == brute_force_match(bins, n_tc)


@given(gaps=st.lists(st.integers(1, 20), max_size=200), n_tc=st.integers(1, 20))
def test_brute_force_oracle_property(gaps, n_tc):
    bins = np.cumsum(gaps, dtype=np.int64)
    early, late = greedy_match(bins, n_tc)
    assert list(zip(early.tolist(), late.tolist())) == brute_force_match(bins, n_tc)


@given(gaps=st.lists(st.integers(1, 30), min_size=1, max_size=300), n_tc=st.integers(1, 30),
       cuts=st.lists(st.integers(0, 300), max_size=6))
def test_streaming_matches_batch(gaps, n_tc, cuts):
    c = clicks_from(np.cumsum(gaps))
    e, l = greedy_match(c["bin"], n_tc)
    m = GreedyMatcher(n_tc)
    got = []
    edges = [0, *sorted(min(x, len(c)) for x in cuts), len(c)]
    for a, b in zip(edges, edges[1:]):
        ee, ll = m.feed(c[a:b])
        got += list(zip(ee["bin"].tolist(), ll["bin"].tolist()))
    m.finish()
    assert got == list(zip(c["bin"][e].tolist(), c["bin"][l].tolist()))
    assert m.lone == len(c) - 2 * len(e)


def test_streaming_rejects_regression():
    m = GreedyMatcher(5)
    m.feed(make_clicks([10, 20], [0, 0], [0, 0]))
    with pytest.raises(SequencingError):
        m.feed(make_clicks([15], [0], [0]))


@given(gaps=st.lists(st.integers(1, 15), max_size=200), seed=st.integers(0, 1000))
def test_pairing_is_intensity_blind(gaps, seed):
    bins = np.cumsum(gaps)
    a = match_pairs(clicks_from(bins, seed), 10e-9, F)
    b = match_pairs(clicks_from(bins, seed + 1), 10e-9, F)
    assert np.array_equal(a["bin_e"], b["bin_e"]) and np.array_equal(a["bin_l"], b["bin_l"])


@given(gaps=st.lists(st.integers(1, 15), max_size=300), seed=st.integers(0, 1000),
       mode=st.sampled_from(["filtered", "unfiltered"]))
def test_every_click_accounted(gaps, seed, mode):
    c = clicks_from(np.cumsum(gaps), seed)
    pairs, sheet = pair_and_tally(c, mode, 8e-9, F, 16)
    d = sheet.discarded
    assert sheet.total_clicks == len(c)
    assert d["filtered_clicks"] + d["lone_clicks"] + 2 * len(pairs) == len(c)
    retained = sum(sheet.n_pair.values())
    assert retained + d["over_intensity_pairs"] + d["phase_mismatch_pairs"] == len(pairs)
    assert retained <= (len(c) - d["filtered_clicks"]) / 2
    assert np.all(pairs["bin_l"] - pairs["bin_e"] <= 8)
    for label, n in sheet.discarded_pairs.items():
        assert n > 0
    # over-intensity classes never appear among retained ones
    assert not any("mu+nu" in k or "2mu" in k for k in sheet.n_pair)


def test_hand_fixture():
    # (mu|mu)@0 + (o|o)@2 -> [mu,mu] Z pair, both early: error
    # (nu|nu)@10 + (nu|nu)@11, phi_a = pi, phi_b = 0, L then R -> X pair, no flip
    # clicks at 30 and 100 are lone
    c = make_clicks(
        [0, 2, 10, 11, 30, 100],
        ka=[MU, O, NU, NU, MU, O], kb=[MU, O, NU, NU, NU, O],
        det=[0, 0, 0, 1, 0, 1], sa=[0, 0, 0, 8, 0, 0], sb=[0, 0, 3, 3, 0, 0],
    )
    pairs, sheet = pair_and_tally(c, "filtered", 5e-9, F, 16)
    assert sheet.n_pair == {"[mu,mu]": 1.0, "[2nu,2nu]": 1.0}
    assert sheet.m_z == 1 and sheet.m_x == 0
    assert sheet.discarded["lone_clicks"] == 1 and sheet.discarded["filtered_clicks"] == 1
    assert sheet.t_mean["[mu,mu]"] == pytest.approx(2e-9)
    assert sheet.t_mean["[2nu,2nu]"] == pytest.approx(1e-9)
    z = pairs[pairs["basis"] == Basis.Z][0]
    assert (z["bit_a"], z["bit_b"]) == (0, 1)
    x = pairs[pairs["basis"] == Basis.X][0]
    assert x["bit_a"] == x["bit_b"] == 0


def x_pair(phi_a, phi_b, det_e, det_l, M=16, mapping="FigS1b"):
    c = make_clicks([0, 1], [NU, NU], [NU, NU], [det_e, det_l], [0, phi_a], [0, phi_b])
    return sift(match_pairs(c, 5e-9, F), "filtered", M, mapping)[0]


def test_x_flip_rule():
    assert x_pair(8, 0, 0, 1)["bit_b"] == 0  # pi, different detectors
    assert x_pair(8, 0, 1, 1)["bit_b"] == 1  # pi, same detector
    assert x_pair(5, 5, 0, 1)["bit_b"] == 1  # 0, different detectors
    assert x_pair(5, 5, 0, 0)["bit_b"] == 0
    p = x_pair(3, 0, 0, 1)
    assert p["basis"] == Basis.DISCARD and p["bit_b"] == -1
    # odd M has no pi slice
    assert x_pair(2, 0, 0, 1, M=5)["basis"] == Basis.DISCARD


def test_z_convention():
    def z(ka, kb):
        c = make_clicks([0, 1], ka, kb)
        p = sift(match_pairs(c, 5e-9, F), "filtered", 16)[0]
        return p["bit_a"], p["bit_b"]

    assert z([MU, O], [MU, O]) == (0, 1)
    assert z([MU, O], [O, MU]) == (0, 0)
    assert z([O, MU], [MU, O]) == (1, 1)


@given(pa=st.integers(0, 15), pb=st.integers(0, 15), de=st.integers(0, 1), dl=st.integers(0, 1),
       M=st.sampled_from([2, 4, 16, 64]))
def test_mappings_agree_on_errors(pa, pb, de, dl, M):
    a = x_pair(pa % M, pb % M, de, dl, M, "FigS1a")
    b = x_pair(pa % M, pb % M, de, dl, M, "FigS1b")
    assert a["basis"] == b["basis"]
    if a["basis"] == Basis.X:
        assert (a["bit_a"] != a["bit_b"]) == (b["bit_a"] != b["bit_b"])


def test_unfiltered_key_classes():
    c = make_clicks([0, 1, 10, 11], [NU, O, MU, O], [NU, O, O, NU])
    pairs = sift(match_pairs(c, 5e-9, F), "unfiltered", 16)
    assert list(pairs["basis"]) == [Basis.Z, Basis.Z]
    pairs = sift(match_pairs(c, 5e-9, F), "filtered", 16)
    assert list(pairs["basis"]) == [Basis.DECOY, Basis.DECOY]


def test_sift_contract():
    c = make_clicks([0, 1], [MU, O], [MU, O])
    p = match_pairs(c, 5e-9, F)
    bad = p.copy()
    bad["ta"] = 9
    with pytest.raises(ContractError):
        sift(bad, "filtered", 16)
    done = sift(p, "filtered", 16)
    with pytest.raises(ContractError):
        sift(done, "filtered", 16)


def test_empty_tally():
    sheet = tally(sift(build_pairs(*[make_clicks([], [], [])] * 2), "filtered", 16),
                  make_clicks([], [], []), "filtered", F)
    assert sheet.n_pair == {} and sheet.n_click == {} and sheet.m_z == 0 and sheet.m_x == 0
    assert all(v == 0 for v in sheet.discarded.values())


def test_over_intensity_discard():
    c = make_clicks([0, 1], [MU, NU], [O, O])
    pairs, sheet = pair_and_tally(c, "unfiltered", 5e-9, F, 16)
    assert sheet.discarded_pairs == {"[mu+nu,o]": 1.0} and sheet.n_pair == {}


def test_tally_json_keys(short_link_cfg):
    c = make_clicks([0, 1, 5, 6], [MU, O, NU, NU], [MU, O, NU, NU], sb=[0, 0, 0, 8])
    _, sheet = pair_and_tally(c, "filtered", 5e-9, F, 16)
    d = json.loads(sheet.to_json())
    assert {"n_click", "n_pair", "m_z", "m_x"} <= set(d)
    assert "[mu,mu]" in d["n_pair"] and "mu|mu" in d["n_click"] and "[2nu,2nu]" in d["n_pair"]
    assert TallySheet.from_dict(d) == sheet
    assert set(d["n_click"]) <= set(ALL_CLICK_CLASSES)


def test_tally_from_dict_errors():
    with pytest.raises(ContractError):
        TallySheet.from_dict({"n_click": {}})
    with pytest.raises(ContractError):
        TallySheet.from_dict({"n_pair": {"[mu,mu]": "many"}})


@given(gaps=st.lists(st.integers(1, 12), max_size=400), seed=st.integers(0, 500), cut=st.integers(0, 400))
def test_sharded_tally_merges(gaps, seed, cut):
    c = clicks_from(np.cumsum(gaps), seed)
    _, whole = pair_and_tally(c, "filtered", 6e-9, F, 16)
    st_ = StreamingTally("filtered", 6e-9, F, 16)
    st_.feed(c[:cut])
    st_.feed(c[cut:])
    streamed = st_.finish()
    assert streamed.n_pair == whole.n_pair and streamed.m_pair == whole.m_pair
    assert streamed.discarded == whole.discarded
    for k in whole.t_sum:
        assert streamed.t_sum[k] == pytest.approx(whole.t_sum[k])
    # counts are associative
    half = TallySheet.from_dict(whole.to_dict())
    merged = half.merge(TallySheet(mode="filtered"))
    assert merged.n_pair == whole.n_pair


def test_merge_mode_mismatch():
    with pytest.raises(ContractError):
        TallySheet(mode="filtered").merge(TallySheet(mode="unfiltered"))


def test_pair_records(short_link_cfg):
    c = make_clicks([0, 1], [MU, O], [O, MU], det=[0, 1], sa=[2, 6], sb=[0, 0])
    rec = next(iter_records(sift(match_pairs(c, 5e-9, F), "filtered", 16), short_link_cfg.source))
    assert rec.class_label == "[mu,mu]" and rec.basis == "Z"
    assert rec.k_a_tot == short_link_cfg.source.mu_a
    assert rec.phi_a == pytest.approx(np.pi / 2)
    assert (rec.det_early, rec.det_late) == ("L", "R")
    assert rec.bin_late > rec.bin_early
