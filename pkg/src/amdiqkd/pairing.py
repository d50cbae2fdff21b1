"""Click filtering, greedy post-measurement pairing, sifting and tallying.

Clicks and pairs are numpy structured arrays (:data:`CLICK_DTYPE`,
:data:`PAIR_DTYPE`); :class:`PairRecord` is a per-pair view for callers who
prefer objects.  Intensity classes are coded 0 = mu, 1 = nu, 2 = o and
detectors 0 = L, 1 = R.
"""
from __future__ import annotations

import dataclasses
import enum
import json
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .config import PairingMode, SourceConfig

MU, NU, O = 0, 1, 2
INTENSITY_NAMES = ("mu", "nu", "o")
DET_NAMES = ("L", "R")

CLICK_DTYPE = np.dtype(
    [("bin", "<i8"), ("det", "u1"), ("ka", "u1"), ("kb", "u1"), ("sa", "u1"), ("sb", "u1")]
)

# Combined two-bin intensity per party, indexed by (#mu, #nu) among the two bins.
TOTAL_NAMES = ("o", "nu", "mu", "2nu", "mu+nu", "2mu")
_TOTAL_CODE = np.array(
    [
        [0, 1, 3],  # no mu: 0, 1 or 2 nu
        [2, 4, -1],  # one mu
        [5, -1, -1],  # two mu
    ]
)
OVER_INTENSITY = frozenset({4, 5})


class Basis(enum.IntEnum):
    Z = 0
    X = 1
    DECOY = 2
    DISCARD = 3
    UNSIFTED = 255


class Reason(enum.IntEnum):
    NONE = 0
    OVER_INTENSITY = 1
    PHASE = 2


class KeyMapping(str, enum.Enum):
    FIG_S1A = "FigS1a"  # phase-encoded bits, Bob xors both detector bits
    FIG_S1B = "FigS1b"  # both extract 0, Bob flips on the wrong detector pattern


PAIR_DTYPE = np.dtype(
    [
        ("bin_e", "<i8"), ("bin_l", "<i8"),
        ("det_e", "u1"), ("det_l", "u1"),
        ("ka_e", "u1"), ("ka_l", "u1"), ("kb_e", "u1"), ("kb_l", "u1"),
        ("sa_e", "u1"), ("sa_l", "u1"), ("sb_e", "u1"), ("sb_l", "u1"),
        ("ta", "u1"), ("tb", "u1"),
        ("basis", "u1"), ("reason", "u1"),
        ("bit_a", "i1"), ("bit_b", "i1"),
    ]
)


class SequencingError(ValueError):
    """Clicks were not delivered in strictly increasing bin order."""


class ContractError(ValueError):
    """An operation received data it is not defined on."""


def click_class(ka: int, kb: int) -> str:
    return f"{INTENSITY_NAMES[ka]}|{INTENSITY_NAMES[kb]}"


ALL_CLICK_CLASSES = tuple(click_class(a, b) for a in range(3) for b in range(3))
FILTERED_CLICK_CLASSES = ("mu|nu", "nu|mu")


def pair_class(ta: int, tb: int) -> str:
    return f"[{TOTAL_NAMES[ta]},{TOTAL_NAMES[tb]}]"


def parse_pair_class(label: str) -> tuple[int, int]:
    a, b = label.strip("[]").split(",")
    return TOTAL_NAMES.index(a), TOTAL_NAMES.index(b)


def key_classes(mode: PairingMode) -> tuple[str, ...]:
    if PairingMode.parse(mode) is PairingMode.FILTERED:
        return ("[mu,mu]",)
    return ("[mu,mu]", "[mu,nu]", "[nu,mu]", "[nu,nu]")


X_CLASS = "[2nu,2nu]"


def empty_clicks(n: int = 0) -> np.ndarray:
    return np.zeros(n, dtype=CLICK_DTYPE)


def make_clicks(bins, ka, kb, det=None, sa=None, sb=None) -> np.ndarray:
    """Build a click array from per-field sequences (handy for fixtures)."""
    bins = np.asarray(bins, dtype=np.int64)
    out = empty_clicks(len(bins))
    out["bin"] = bins
    out["ka"] = ka
    out["kb"] = kb
    out["det"] = 0 if det is None else det
    out["sa"] = 0 if sa is None else sa
    out["sb"] = 0 if sb is None else sb
    return out


def check_order(clicks: np.ndarray, after: int | None = None) -> None:
    b = clicks["bin"]
    if len(b) and (np.any(np.diff(b) <= 0) or (after is not None and b[0] <= after)):
        raise SequencingError("click stream is not in strictly increasing bin order")


def filter_clicks(clicks: np.ndarray, mode: PairingMode | str) -> np.ndarray:
    """Drop the (mu|nu) and (nu|mu) classes in filtered mode; identity otherwise."""
    check_order(clicks)
    if PairingMode.parse(mode) is PairingMode.UNFILTERED:
        return clicks
    drop = ((clicks["ka"] == MU) & (clicks["kb"] == NU)) | ((clicks["ka"] == NU) & (clicks["kb"] == MU))
    return clicks[~drop]


def greedy_match(bins: np.ndarray, n_tc: int) -> tuple[np.ndarray, np.ndarray]:
    """Pair each unmatched click with its immediate successor if the gap is <= n_tc.

    Returns index arrays (early, late).  Inside a maximal run of clicks whose
    consecutive gaps all fit the window, first-fit pairing takes positions
    (0, 1), (2, 3), ... of the run, which is what makes this vectorisable.
    """
    bins = np.asarray(bins)
    n = len(bins)
    if n < 2:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    link = np.diff(bins) <= n_tc
    starts = np.zeros(n, dtype=np.int64)
    starts[1:] = np.where(link, 0, np.arange(1, n))
    run_start = np.maximum.accumulate(starts)
    pos = np.arange(n - 1)
    early = pos[link & ((pos - run_start[:-1]) % 2 == 0)]
    return early, early + 1


class GreedyMatcher:
    """Streaming form of :func:`greedy_match`.

    Feed bin-ordered click blocks; at most one unmatched click is carried
    across block boundaries.
    """

    def __init__(self, n_tc: int):
        self.n_tc = int(n_tc)
        self._pending = empty_clicks(0)
        self._last_bin: int | None = None
        self.lone = 0

    def feed(self, clicks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (early, late) click arrays of pairs completed by this block."""
        check_order(clicks, self._last_bin)
        if len(clicks):
            self._last_bin = int(clicks["bin"][-1])
        work = np.concatenate([self._pending, clicks]) if len(self._pending) else clicks
        early, late = greedy_match(work["bin"], self.n_tc)
        used = np.zeros(len(work), dtype=bool)
        used[early] = True
        used[late] = True
        # The final click may still pair with the next block.
        self._pending = empty_clicks(0)
        if len(work) and not used[-1]:
            self._pending = work[-1:].copy()
            used[-1] = True
        self.lone += int(np.count_nonzero(~used))
        return work[early], work[late]

    def finish(self) -> None:
        self.lone += len(self._pending)
        self._pending = empty_clicks(0)


def _party_total(k_e: np.ndarray, k_l: np.ndarray) -> np.ndarray:
    n_mu = (k_e == MU).astype(int) + (k_l == MU)
    n_nu = (k_e == NU).astype(int) + (k_l == NU)
    return _TOTAL_CODE[n_mu, n_nu].astype(np.uint8)


def build_pairs(early: np.ndarray, late: np.ndarray) -> np.ndarray:
    """Classify matched click pairs by combined intensity; apply the over-intensity discard."""
    pairs = np.zeros(len(early), dtype=PAIR_DTYPE)
    for f in ("bin", "det", "sa", "sb", "ka", "kb"):
        pairs[f + "_e"] = early[f]
        pairs[f + "_l"] = late[f]
    pairs["ta"] = _party_total(early["ka"], late["ka"])
    pairs["tb"] = _party_total(early["kb"], late["kb"])
    over = np.isin(pairs["ta"], list(OVER_INTENSITY)) | np.isin(pairs["tb"], list(OVER_INTENSITY))
    pairs["basis"] = np.where(over, Basis.DISCARD, Basis.UNSIFTED)
    pairs["reason"] = np.where(over, Reason.OVER_INTENSITY, Reason.NONE)
    pairs["bit_a"] = -1
    pairs["bit_b"] = -1
    return pairs


def match_pairs(clicks: np.ndarray, T_c: float, F: float) -> np.ndarray:
    """Greedy pairing of a filtered, bin-ordered click array."""
    check_order(clicks)
    n_tc = max(1, int(round(F * T_c)))
    early, late = greedy_match(clicks["bin"], n_tc)
    return build_pairs(clicks[early], clicks[late])


def sift(
    pairs: np.ndarray,
    mode: PairingMode | str,
    M: int,
    mapping: KeyMapping | str = KeyMapping.FIG_S1B,
) -> np.ndarray:
    """Assign bases and extract bits; returns a new array.

    Z-basis convention: Alice's bit is 0 when her non-vacuum pulse is in the
    early bin, Bob's is 0 when his is in the late bin, so a correct
    coincidence yields equal bits.
    """
    mapping = KeyMapping(mapping)
    if np.any((pairs["ta"] >= len(TOTAL_NAMES)) | (pairs["tb"] >= len(TOTAL_NAMES))):
        raise ContractError("pair with unclassified combined intensity")
    if np.any((pairs["basis"] != Basis.UNSIFTED) & (pairs["reason"] != Reason.OVER_INTENSITY)):
        raise ContractError("pairs must come from build_pairs/match_pairs before sifting")
    out = pairs.copy()
    pending = out["basis"] == Basis.UNSIFTED
    codes = out["ta"].astype(int) * 6 + out["tb"]
    key_codes = [a * 6 + b for a, b in map(parse_pair_class, key_classes(mode))]
    x_code = 3 * 6 + 3
    is_key = pending & np.isin(codes, key_codes)
    is_x = pending & (codes == x_code)
    out["basis"][pending] = Basis.DECOY

    out["basis"][is_key] = Basis.Z
    out["bit_a"][is_key] = np.where(out["ka_e"][is_key] != O, 0, 1)
    out["bit_b"][is_key] = np.where(out["kb_l"][is_key] != O, 0, 1)

    phi_a = (out["sa_l"].astype(int) - out["sa_e"]) % M
    phi_b = (out["sb_l"].astype(int) - out["sb_e"]) % M
    phi_ab = (phi_a - phi_b) % M
    zero = phi_ab == 0
    half = (phi_ab * 2 == M) if M % 2 == 0 else np.zeros(len(out), dtype=bool)
    keep_x = is_x & (zero | half)
    drop_x = is_x & ~(zero | half)
    out["basis"][drop_x] = Basis.DISCARD
    out["reason"][drop_x] = Reason.PHASE
    out["basis"][keep_x] = Basis.X

    same_det = out["det_e"] == out["det_l"]
    if mapping is KeyMapping.FIG_S1B:
        flip = (zero & ~same_det) | (half & same_det)
        bit_a = np.zeros(len(out), dtype=int)
        bit_b = flip.astype(int)
    else:
        bit_a = (2 * phi_a // M) % 2
        bit_b = ((2 * phi_b // M) % 2) ^ out["det_e"] ^ out["det_l"]
    out["bit_a"][keep_x] = bit_a[keep_x]
    out["bit_b"][keep_x] = bit_b[keep_x]
    return out


@dataclass
class PairRecord:
    bin_early: int
    bin_late: int
    k_a_tot: float
    k_b_tot: float
    class_label: str
    det_early: str
    det_late: str
    phi_a: float
    phi_b: float
    basis: str
    bit_a: int | None
    bit_b: int | None

    @classmethod
    def from_row(cls, row, source: SourceConfig) -> "PairRecord":
        def total(code, party):
            mu, nu, _ = source.intensities(party)
            name = TOTAL_NAMES[code]
            return {"o": 0.0, "nu": nu, "mu": mu, "2nu": 2 * nu, "mu+nu": mu + nu, "2mu": 2 * mu}[name]

        M = source.M
        return cls(
            bin_early=int(row["bin_e"]),
            bin_late=int(row["bin_l"]),
            k_a_tot=total(row["ta"], "a"),
            k_b_tot=total(row["tb"], "b"),
            class_label=pair_class(row["ta"], row["tb"]),
            det_early=DET_NAMES[row["det_e"]],
            det_late=DET_NAMES[row["det_l"]],
            phi_a=2 * np.pi * ((int(row["sa_l"]) - int(row["sa_e"])) % M) / M,
            phi_b=2 * np.pi * ((int(row["sb_l"]) - int(row["sb_e"])) % M) / M,
            basis=Basis(row["basis"]).name,
            bit_a=None if row["bit_a"] < 0 else int(row["bit_a"]),
            bit_b=None if row["bit_b"] < 0 else int(row["bit_b"]),
        )


def iter_records(pairs: np.ndarray, source: SourceConfig) -> Iterator[PairRecord]:
    for row in pairs:
        yield PairRecord.from_row(row, source)


@dataclass
class TallySheet:
    """Counted set sizes and errors; the hand-off from pairing to key-rate analysis.

    Values are floats so the same type carries expected counts.  ``t_sum``
    holds the summed pairing interval per class (seconds) so that sheets
    merge exactly.
    """

    mode: str = PairingMode.FILTERED.value
    n_click: dict[str, float] = field(default_factory=dict)
    n_pair: dict[str, float] = field(default_factory=dict)
    m_pair: dict[str, float] = field(default_factory=dict)
    t_sum: dict[str, float] = field(default_factory=dict)
    discarded: dict[str, float] = field(default_factory=dict)
    discarded_pairs: dict[str, float] = field(default_factory=dict)
    n_bins: float = 0.0

    def __post_init__(self):
        self.mode = PairingMode.parse(self.mode).value
        for key in ("filtered_clicks", "lone_clicks", "over_intensity_pairs", "phase_mismatch_pairs"):
            self.discarded.setdefault(key, 0.0)

    def n(self, label: str) -> float:
        return float(self.n_pair.get(label, 0.0))

    def m(self, label: str) -> float:
        return float(self.m_pair.get(label, 0.0))

    @property
    def m_z(self) -> float:
        return self.m("[mu,mu]")

    @property
    def m_x(self) -> float:
        return self.m(X_CLASS)

    @property
    def t_mean(self) -> dict[str, float]:
        return {k: self.t_sum[k] / self.n_pair[k] for k in self.t_sum if self.n_pair.get(k, 0) > 0}

    @property
    def t_mean_all(self) -> float:
        n = sum(self.n_pair.values())
        return sum(self.t_sum.values()) / n if n > 0 else 0.0

    @property
    def total_clicks(self) -> float:
        return sum(self.n_click.values())

    def merge(self, other: "TallySheet") -> "TallySheet":
        if other.mode != self.mode:
            raise ContractError("cannot merge tallies from different pairing modes")

        def add(a, b):
            out = dict(a)
            for k, v in b.items():
                out[k] = out.get(k, 0) + v
            return out

        return TallySheet(
            mode=self.mode,
            **{
                f.name: add(getattr(self, f.name), getattr(other, f.name))
                for f in dataclasses.fields(self)
                if f.name not in ("mode", "n_bins")
            },
            n_bins=self.n_bins + other.n_bins,
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["m_z"] = self.m_z
        d["m_x"] = self.m_x
        d["t_mean"] = self.t_mean
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TallySheet":
        try:
            return cls(
                mode=data.get("mode", PairingMode.FILTERED.value),
                n_click={k: float(v) for k, v in data.get("n_click", {}).items()},
                n_pair={k: float(v) for k, v in data["n_pair"].items()},
                m_pair={k: float(v) for k, v in data.get("m_pair", {}).items()},
                t_sum={k: float(v) for k, v in data.get("t_sum", {}).items()},
                discarded={k: float(v) for k, v in data.get("discarded", {}).items()},
                discarded_pairs={k: float(v) for k, v in data.get("discarded_pairs", {}).items()},
                n_bins=float(data.get("n_bins", 0.0)),
            )
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ContractError(f"malformed tally: {exc!r}") from None

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def click_counts(clicks: np.ndarray) -> dict[str, float]:
    codes = clicks["ka"].astype(int) * 3 + clicks["kb"]
    counts = np.bincount(codes, minlength=9)
    return {click_class(c // 3, c % 3): float(counts[c]) for c in range(9) if counts[c]}


def tally(
    pairs: np.ndarray,
    clicks: np.ndarray,
    mode: PairingMode | str,
    F: float,
    *,
    n_bins: float = 0.0,
    lone: int | None = None,
) -> TallySheet:
    """Count a sifted pair array.  ``clicks`` is the unfiltered stream.

    ``lone`` defaults to kept clicks minus twice the number of pairs, which
    holds whenever ``pairs`` covers the whole stream.
    """
    mode = PairingMode.parse(mode)
    if np.any(pairs["basis"] == Basis.UNSIFTED):
        raise ContractError("tally needs sifted pairs")
    sheet = TallySheet(mode=mode.value, n_bins=float(n_bins))
    sheet.n_click = click_counts(clicks)
    kept = len(filter_clicks(clicks, mode)) if len(clicks) else 0
    sheet.discarded["filtered_clicks"] = float(len(clicks) - kept)
    sheet.discarded["lone_clicks"] = float(kept - 2 * len(pairs) if lone is None else lone)
    _count_pairs(sheet, pairs, F)
    return sheet


def _count_pairs(sheet: TallySheet, pairs: np.ndarray, F: float) -> None:
    if not len(pairs):
        return
    codes = pairs["ta"].astype(int) * 6 + pairs["tb"]
    gaps = (pairs["bin_l"] - pairs["bin_e"]) / F
    err = (pairs["bit_a"] != pairs["bit_b"]) & (pairs["bit_a"] >= 0)
    for c in np.unique(codes):
        sel = codes == c
        label = pair_class(c // 6, c % 6)
        retained = sel & (pairs["basis"] != Basis.DISCARD)
        dropped = sel & (pairs["basis"] == Basis.DISCARD)
        if retained.any():
            sheet.n_pair[label] = sheet.n_pair.get(label, 0.0) + float(retained.sum())
            sheet.t_sum[label] = sheet.t_sum.get(label, 0.0) + float(gaps[retained].sum())
            if label in key_classes(sheet.mode) or label == X_CLASS:
                sheet.m_pair[label] = sheet.m_pair.get(label, 0.0) + float((err & retained).sum())
        if dropped.any():
            sheet.discarded_pairs[label] = sheet.discarded_pairs.get(label, 0.0) + float(dropped.sum())
    sheet.discarded["over_intensity_pairs"] += float((pairs["reason"] == Reason.OVER_INTENSITY).sum())
    sheet.discarded["phase_mismatch_pairs"] += float((pairs["reason"] == Reason.PHASE).sum())


def pair_and_tally(
    clicks: np.ndarray,
    mode: PairingMode | str,
    T_c: float,
    F: float,
    M: int,
    mapping: KeyMapping | str = KeyMapping.FIG_S1B,
    n_bins: float = 0.0,
) -> tuple[np.ndarray, TallySheet]:
    """Filter, match, sift and tally one in-memory click array."""
    kept = filter_clicks(clicks, mode)
    pairs = sift(match_pairs(kept, T_c, F), mode, M, mapping)
    return pairs, tally(pairs, clicks, mode, F, n_bins=n_bins)


class StreamingTally:
    """Filter, match, sift and tally click blocks as they arrive."""

    def __init__(self, mode, T_c: float, F: float, M: int, mapping=KeyMapping.FIG_S1B):
        self.mode = PairingMode.parse(mode)
        self.F = F
        self.M = M
        self.mapping = KeyMapping(mapping)
        self.matcher = GreedyMatcher(max(1, int(round(F * T_c))))
        self.sheet = TallySheet(mode=self.mode.value)

    def feed(self, clicks: np.ndarray) -> np.ndarray:
        counts = click_counts(clicks)
        for k, v in counts.items():
            self.sheet.n_click[k] = self.sheet.n_click.get(k, 0.0) + v
        kept = filter_clicks(clicks, self.mode)
        self.sheet.discarded["filtered_clicks"] += float(len(clicks) - len(kept))
        early, late = self.matcher.feed(kept)
        pairs = sift(build_pairs(early, late), self.mode, self.M, self.mapping)
        _count_pairs(self.sheet, pairs, self.F)
        return pairs

    def finish(self, n_bins: float = 0.0) -> TallySheet:
        self.matcher.finish()
        self.sheet.discarded["lone_clicks"] = float(self.matcher.lone)
        self.sheet.n_bins = float(n_bins)
        return self.sheet
