"""Monte Carlo click-stream generator.

Bins are processed in fixed-size blocks, each with its own counter-based
(Philox) stream derived from the master seed, so a block's content depends
only on ``(seed, block index)`` and memory stays O(block).

Instead of drawing intensities and phases for every bin, candidate bins are
drawn as a Bernoulli process at a rate ``bound`` that upper-bounds the click
probability of every class and phase; a candidate then draws its
intensities, phases and outcome and is kept with probability
``q(theta) / bound``.  This thinning is exact and costs O(clicks).
"""
from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator, NamedTuple

import numpy as np

from .channel import click_bound, gain_conditional
from .config import ExperimentConfig, PairingMode
from .pairing import CLICK_DTYPE, DET_NAMES, INTENSITY_NAMES, KeyMapping, StreamingTally, TallySheet, empty_clicks

DEFAULT_BLOCK = 1 << 24
_DRIFT_CHUNK = 4096
_CLICK_STREAM, _DRIFT_STREAM = 0, 1


@dataclass(frozen=True)
class ClickEvent:
    bin: int
    detector: str
    k_a: str
    k_b: str
    theta_a: float
    theta_b: float
    filtered: bool = False


class DriftState(NamedTuple):
    phase: float
    rate: float
    window_remaining: float


class FiberDrift:
    """Piecewise-linear fiber phase.

    The drift rate is Normal(0, sigma^2), redrawn every ``window`` seconds, and
    the phase is continuous across window boundaries.  Rates come from their
    own counter-based stream, in chunks of 4096 windows.
    """

    def __init__(self, sigma: float, window: float, seed: int):
        self.sigma = float(sigma)
        self.window = float(window)
        self.seed = int(seed)
        init = np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed, spawn_key=(_DRIFT_STREAM,))))
        self._phase0 = float(init.uniform(0, 2 * np.pi))
        self._rates: list[np.ndarray] = []
        self._starts: list[np.ndarray] = []

    def _extend(self, n_chunks: int) -> None:
        while len(self._rates) < n_chunks:
            c = len(self._rates)
            g = np.random.Generator(
                np.random.Philox(np.random.SeedSequence(self.seed, spawn_key=(_DRIFT_STREAM, c + 1)))
            )
            rates = g.normal(0.0, self.sigma, _DRIFT_CHUNK) if self.sigma > 0 else np.zeros(_DRIFT_CHUNK)
            first = self._phase0 if c == 0 else self._starts[-1][-1] + self._rates[-1][-1] * self.window
            steps = np.concatenate([[0.0], np.cumsum(rates[:-1] * self.window)])
            self._rates.append(rates)
            self._starts.append(first + steps)

    def _lookup(self, t: np.ndarray):
        j = np.floor(t / self.window).astype(np.int64)
        self._extend(int(j.max()) // _DRIFT_CHUNK + 1 if len(j) else 0)
        rates = np.concatenate(self._rates) if self._rates else np.zeros(0)
        starts = np.concatenate(self._starts) if self._starts else np.zeros(0)
        return j, rates[j], starts[j]

    def phase(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        flat = t.reshape(-1)
        j, rate, start = self._lookup(flat)
        return (start + rate * (flat - j * self.window)).reshape(t.shape)

    def state(self, t: float) -> DriftState:
        j, rate, start = self._lookup(np.array([t], dtype=float))
        dt = t - j[0] * self.window
        return DriftState(float(start[0] + rate[0] * dt), float(rate[0]), float(self.window - dt))


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(_CLICK_STREAM, block))))


def per_click_flip(e_hom: float) -> float:
    """Per-click detector flip probability giving pair-level error ``e_hom``.

    Two independent flips change a pair's correctness with probability
    2 e (1 - e); solve that for e.
    """
    return (1 - math.sqrt(1 - 2 * e_hom)) / 2


def _candidate_bins(rng, start: int, stop: int, rate: float) -> np.ndarray:
    if rate <= 0:
        return np.zeros(0, dtype=np.int64)
    if rate >= 1:
        return np.arange(start, stop, dtype=np.int64)
    n = stop - start
    chunks = []
    pos = start - 1
    while pos < stop:
        guess = int(n * rate + 6 * math.sqrt(n * rate) + 16)
        gaps = rng.geometric(rate, guess)
        bins = pos + np.cumsum(gaps)
        chunks.append(bins)
        pos = int(bins[-1])
    bins = np.concatenate(chunks)
    return bins[bins < stop]


def _simulate_block(config: ExperimentConfig, start: int, stop: int, seed: int, block: int,
                    drift: FiberDrift, bound: float, flip: float, continuous: bool) -> np.ndarray:
    src, link, noise = config.source, config.link, config.noise
    rng = _block_rng(seed, block)
    bins = _candidate_bins(rng, start, stop, bound)
    n = len(bins)
    if n == 0:
        return empty_clicks(0)
    probs = np.array(src.probs)
    ka = rng.choice(3, size=n, p=probs)
    kb = rng.choice(3, size=n, p=probs)
    M = src.M
    if continuous:
        th_a = rng.uniform(0, 2 * np.pi, n)
        th_b = rng.uniform(0, 2 * np.pi, n)
        sa = np.minimum((th_a / (2 * np.pi) * M).astype(int), M - 1)
        sb = np.minimum((th_b / (2 * np.pi) * M).astype(int), M - 1)
    else:
        sa = rng.integers(0, M, n)
        sb = rng.integers(0, M, n)
        th_a = 2 * np.pi * sa / M
        th_b = 2 * np.pi * sb / M
    t = bins / link.F
    theta = th_b - th_a + 2 * np.pi * noise.delta_f * t + drift.phase(t)
    k_a = np.array(src.intensities("a"))[ka]
    k_b = np.array(src.intensities("b"))[kb]
    g = gain_conditional(theta, k_a, k_b, link)
    u = rng.random(n) * bound
    click_L = u < g.q_L
    keep = u < g.q_L + g.q_R
    det = np.where(click_L, 0, 1)
    det ^= rng.random(n) < flip
    out = empty_clicks(int(keep.sum()))
    out["bin"] = bins[keep]
    out["det"] = det[keep]
    out["ka"] = ka[keep]
    out["kb"] = kb[keep]
    out["sa"] = sa[keep]
    out["sb"] = sb[keep]
    return out


def _setup(config: ExperimentConfig, seed: int):
    src, link, noise = config.source, config.link, config.noise
    ka = np.array(src.intensities("a"))[:, None]
    kb = np.array(src.intensities("b"))[None, :]
    bound = float(np.max(click_bound(ka, kb, link)))
    return bound, per_click_flip(noise.e_hom), FiberDrift(noise.sigma, noise.drift_window, seed)


def _block_task(args) -> np.ndarray:
    config, seed, block, start, stop, continuous = args
    bound, flip, drift = _setup(config, seed)
    return _simulate_block(config, start, stop, seed, block, drift, bound, flip, continuous)


def iter_click_blocks(
    config: ExperimentConfig,
    n_bins: int,
    seed: int,
    *,
    block_size: int = DEFAULT_BLOCK,
    continuous_phase: bool = False,
    workers: int = 1,
) -> Iterator[np.ndarray]:
    """Yield click arrays block by block, in bin order.

    Output does not depend on ``workers``: every block has its own random
    stream and the drift path is rebuilt identically in each process.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    n_bins = int(n_bins)
    spans = [(b, s, min(s + block_size, n_bins)) for b, s in enumerate(range(0, n_bins, block_size))]
    if workers > 1 and len(spans) > 1:
        tasks = [(config, seed, b, s, e, continuous_phase) for b, s, e in spans]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            # bounded look-ahead keeps memory at a few blocks
            pending = deque()
            for task in tasks:
                pending.append(ex.submit(_block_task, task))
                if len(pending) >= 2 * workers:
                    yield pending.popleft().result()
            while pending:
                yield pending.popleft().result()
        return
    bound, flip, drift = _setup(config, seed)
    for block, start, stop in spans:
        yield _simulate_block(config, start, stop, seed, block, drift, bound, flip, continuous_phase)


def generate_clicks(config: ExperimentConfig, n_bins: int, seed: int, **kw) -> np.ndarray:
    blocks = list(iter_click_blocks(config, n_bins, seed, **kw))
    return np.concatenate(blocks) if blocks else empty_clicks(0)


def generate_stream(config: ExperimentConfig, n_bins: int, seed: int, **kw) -> Iterator[ClickEvent]:
    """Per-event view of :func:`iter_click_blocks`."""
    M = config.source.M
    for block in iter_click_blocks(config, n_bins, seed, **kw):
        for row in block:
            yield ClickEvent(
                bin=int(row["bin"]),
                detector=DET_NAMES[row["det"]],
                k_a=INTENSITY_NAMES[row["ka"]],
                k_b=INTENSITY_NAMES[row["kb"]],
                theta_a=2 * np.pi * int(row["sa"]) / M,
                theta_b=2 * np.pi * int(row["sb"]) / M,
            )


def simulate_tally(
    config: ExperimentConfig,
    n_bins: int,
    seed: int,
    mode: PairingMode | str = PairingMode.FILTERED,
    mapping: KeyMapping | str = KeyMapping.FIG_S1B,
    *,
    block_size: int = DEFAULT_BLOCK,
    log: BinaryIO | None = None,
    workers: int = 1,
) -> TallySheet:
    """Generate, pair and tally ``n_bins`` bins without holding the whole stream."""
    acc = StreamingTally(mode, config.link.T_c, config.link.F, config.source.M, mapping)
    if log is not None:
        write_log_header(log)
    for block in iter_click_blocks(config, n_bins, seed, block_size=block_size, workers=workers):
        if log is not None:
            write_log_records(log, block)
        acc.feed(block)
    return acc.finish(n_bins=n_bins)


# Click log: 8-byte magic, 1 version byte, then 13-byte little-endian records.
LOG_MAGIC = b"AMDICLOG"
LOG_VERSION = 1
LOG_DTYPE = np.dtype(
    [("bin", "<u8"), ("det", "u1"), ("ka", "u1"), ("kb", "u1"), ("sa", "u1"), ("sb", "u1")]
)


class ClickLogError(ValueError):
    pass


def write_log_header(fh: BinaryIO) -> None:
    fh.write(LOG_MAGIC + bytes([LOG_VERSION]))


def write_log_records(fh: BinaryIO, clicks: np.ndarray) -> None:
    fh.write(clicks.astype(LOG_DTYPE).tobytes())


def write_click_log(path: str | Path, blocks: np.ndarray | Iterable[np.ndarray]) -> None:
    if isinstance(blocks, np.ndarray):
        blocks = [blocks]
    with open(path, "wb") as fh:
        write_log_header(fh)
        for b in blocks:
            write_log_records(fh, b)


def read_click_log(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    head = len(LOG_MAGIC) + 1
    if raw[: len(LOG_MAGIC)] != LOG_MAGIC:
        raise ClickLogError(f"{path}: not a click log (bad magic)")
    if raw[len(LOG_MAGIC)] != LOG_VERSION:
        raise ClickLogError(f"{path}: unsupported click log version {raw[len(LOG_MAGIC)]}")
    body = raw[head:]
    if len(body) % LOG_DTYPE.itemsize:
        raise ClickLogError(f"{path}: truncated record")
    return np.frombuffer(body, dtype=LOG_DTYPE).astype(CLICK_DTYPE)
