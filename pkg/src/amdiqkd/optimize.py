"""Source-parameter search maximizing the predicted key rate per clock.

A coarse grid over (mu, nu, p_mu, p_nu) is evaluated exhaustively, then
Nelder-Mead refines from the best grid point.  Points outside the box, or
with p_o below its floor, are rejected by the objective.
"""
from __future__ import annotations

import dataclasses
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .config import ConfigError, ExperimentConfig, PairingMode, SourceConfig
from .keyrate import KeyRateReport
from .predict import predicted_key_rate

PARAMS = ("mu", "nu", "p_mu", "p_nu")
MAX_RESTARTS = 4


@dataclass(frozen=True)
class SearchBox:
    mu: tuple[float, float] = (0.3, 0.5)
    nu: tuple[float, float] = (0.0, 0.1)
    p_mu: tuple[float, float] = (0.1, 0.4)
    p_nu: tuple[float, float] = (0.1, 0.4)
    min_p_o: float = 0.05

    def __post_init__(self):
        for name in PARAMS:
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"empty search range for {name}: [{lo}, {hi}]")

    def bounds(self) -> list[tuple[float, float]]:
        return [getattr(self, n) for n in PARAMS]

    def axis(self, name: str, n: int) -> np.ndarray:
        lo, hi = getattr(self, name)
        if lo == hi:
            return np.array([lo])
        if name == "nu" and lo <= 0:
            # nu = 0 is not a decoy; drop the left end and keep the spacing
            return np.linspace(lo, hi, n + 1)[1:]
        return np.linspace(lo, hi, n)

    def contains(self, x) -> bool:
        mu, nu, p_mu, p_nu = x
        inside = all(lo <= v <= hi for v, (lo, hi) in zip(x, self.bounds()))
        return inside and nu > 0 and mu > nu and 1 - p_mu - p_nu >= self.min_p_o - 1e-15


@dataclass
class OptimizeResult:
    params: dict[str, float]
    skr_per_clock: float
    skr_bps: float
    feasible: bool
    grid_best: float
    evaluations: int
    report: KeyRateReport | None = None
    message: str = ""

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if self.report is None:
            d.pop("report")
        return d


def with_params(template: ExperimentConfig, x) -> ExperimentConfig:
    """Symmetric source from (mu, nu, p_mu, p_nu); p_o takes the remainder."""
    mu, nu, p_mu, p_nu = (float(v) for v in x)
    src = template.source
    return dataclasses.replace(
        template,
        source=SourceConfig(
            mu_a=mu, nu_a=nu, mu_b=mu, nu_b=nu,
            p_mu=p_mu, p_nu=p_nu, p_o=1.0 - p_mu - p_nu, M=src.M,
        ),
    )


def objective(template: ExperimentConfig, mode: PairingMode, box: SearchBox, x) -> float:
    """Predicted key rate per clock, or -inf outside the box."""
    if not box.contains(x):
        return -np.inf
    try:
        return predicted_key_rate(with_params(template, x), mode).skr_per_clock
    except ConfigError:
        return -np.inf


def _eval_chunk(args):
    template, mode, box, points = args
    return [objective(template, mode, box, x) for x in points]


def inward_simplex(x0: np.ndarray, lo: np.ndarray, hi: np.ndarray, frac: float = 0.1) -> np.ndarray:
    """Initial simplex whose edges step from ``x0`` towards the box centre.

    The default simplex steps outward, which from a grid point on a box face
    lands outside the box and stalls the search.
    """
    sign = np.where(x0 > (lo + hi) / 2, -1.0, 1.0)
    steps = frac * (hi - lo) * sign
    return np.vstack([x0, x0 + np.diag(steps)])


def grid_points(box: SearchBox, n: int = 8) -> np.ndarray:
    axes = [box.axis(name, n) for name in PARAMS]
    pts = np.array(list(itertools.product(*axes)), dtype=float)
    keep = 1 - pts[:, 2] - pts[:, 3] >= box.min_p_o - 1e-15
    return pts[keep]


def evaluate_grid(template, mode, box, points, workers: int = 1) -> np.ndarray:
    if workers <= 1 or len(points) < 64:
        return np.array(_eval_chunk((template, mode, box, points)))
    chunks = np.array_split(points, workers * 4)
    with ProcessPoolExecutor(max_workers=workers) as ex:
        parts = ex.map(_eval_chunk, [(template, mode, box, c) for c in chunks])
    return np.concatenate([np.asarray(p) for p in parts])


def optimize_params(
    template: ExperimentConfig,
    box: SearchBox | None = None,
    mode: PairingMode | str = PairingMode.FILTERED,
    *,
    grid: int = 8,
    refine: bool = True,
    workers: int = 1,
) -> OptimizeResult:
    box = box or SearchBox()
    mode = PairingMode.parse(mode)
    points = grid_points(box, grid)
    if not len(points):
        raise ConfigError("search box has no point with enough vacuum probability")
    values = evaluate_grid(template, mode, box, points, workers)
    evals = len(points)
    i = int(np.argmax(values))
    best_x, best = points[i], float(values[i])
    grid_best = best
    if best <= 0:
        return OptimizeResult(
            params=dict(zip(PARAMS, map(float, best_x))), skr_per_clock=0.0, skr_bps=0.0,
            feasible=False, grid_best=grid_best, evaluations=evals, message="no positive key in the search box",
        )
    if refine:
        free = [j for j, (lo, hi) in enumerate(box.bounds()) if lo < hi]
        if free:
            def neg(z):
                x = best_x.copy()
                x[free] = z
                return -objective(template, mode, box, x) / grid_best

            lo = np.array([box.bounds()[j][0] for j in free])
            hi = np.array([box.bounds()[j][1] for j in free])
            for _ in range(MAX_RESTARTS):
                res = minimize(
                    neg, best_x[free], method="Nelder-Mead",
                    options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 2000,
                             "initial_simplex": inward_simplex(best_x[free], lo, hi)},
                )
                evals += res.nfev
                gain = -res.fun * grid_best - best
                if gain <= 0:
                    break
                best_x = best_x.copy()
                best_x[free] = res.x
                best += gain
                if gain <= 1e-9 * best:
                    break
    cfg = with_params(template, best_x)
    report = predicted_key_rate(cfg, mode)
    return OptimizeResult(
        params={**dict(zip(PARAMS, map(float, best_x))), "p_o": cfg.source.p_o},
        skr_per_clock=report.skr_per_clock,
        skr_bps=report.skr_bps,
        feasible=report.skr_per_clock > 0,
        grid_best=grid_best,
        evaluations=evals,
        report=report,
    )
