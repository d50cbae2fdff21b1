"""Experiment configuration: source, link, noise and security settings.

Everything the simulator and the security back end need is carried by a
single immutable :class:`ExperimentConfig`.  Configs round-trip through a
small JSON schema (see ``README.md``).
"""
from __future__ import annotations

import dataclasses
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

SUM_TOL = 1e-12


class ConfigError(ValueError):
    """Raised when a configuration violates one of its invariants."""


class PairingMode(str, enum.Enum):
    FILTERED = "filtered"
    UNFILTERED = "unfiltered"

    @classmethod
    def parse(cls, value: "PairingMode | str") -> "PairingMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"unknown pairing mode {value!r}") from None


def _check_prob(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name}={value} is not a probability in [0, 1]")


@dataclass(frozen=True)
class SourceConfig:
    """Intensities and selection probabilities of both weak coherent sources.

    Intensity classes are indexed 0 = signal (mu), 1 = decoy (nu),
    2 = vacuum (o) throughout the package.
    """

    mu_a: float
    nu_a: float
    mu_b: float
    nu_b: float
    p_mu: float
    p_nu: float
    p_o: float
    M: int = 16
    o: float = 0.0

    def __post_init__(self):
        if self.o != 0.0:
            raise ConfigError("vacuum intensity o must be 0")
        for party in "ab":
            mu, nu = getattr(self, f"mu_{party}"), getattr(self, f"nu_{party}")
            if not mu > nu > self.o:
                raise ConfigError(
                    f"intensities must satisfy mu > nu > o = 0 (party {party}: mu={mu}, nu={nu})"
                )
        for name in ("p_mu", "p_nu", "p_o"):
            _check_prob(name, getattr(self, name))
        total = self.p_mu + self.p_nu + self.p_o
        if abs(total - 1.0) > SUM_TOL:
            raise ConfigError(f"p_mu + p_nu + p_o = {total!r}, must equal 1")
        if int(self.M) != self.M or not 2 <= self.M <= 256:
            # slice indices are stored as single bytes
            raise ConfigError(f"phase slice count M={self.M} must be an integer in [2, 256]")

    @classmethod
    def symmetric(cls, mu: float, nu: float, p_mu: float, p_nu: float, p_o: float | None = None, M: int = 16):
        if p_o is None:
            p_o = 1.0 - p_mu - p_nu
        return cls(mu_a=mu, nu_a=nu, mu_b=mu, nu_b=nu, p_mu=p_mu, p_nu=p_nu, p_o=p_o, M=M)

    @property
    def is_symmetric(self) -> bool:
        return self.mu_a == self.mu_b and self.nu_a == self.nu_b

    def intensities(self, party: str) -> tuple[float, float, float]:
        """(mu, nu, o) for party ``"a"`` or ``"b"``."""
        return getattr(self, f"mu_{party}"), getattr(self, f"nu_{party}"), self.o

    @property
    def probs(self) -> tuple[float, float, float]:
        return self.p_mu, self.p_nu, self.p_o


@dataclass(frozen=True)
class LinkConfig:
    """Fiber links, Charlie's receiver and the clock.

    ``loss_a_db``/``loss_b_db`` override ``alpha * l`` with a measured fiber
    loss when given.  ``insertion_db`` is Charlie's loss before the detectors
    and is applied on both arms.
    """

    l_a: float
    l_b: float
    alpha: float = 0.16
    insertion_db: float = 1.50
    eta_d_L: float = 0.781
    eta_d_R: float = 0.770
    p_d_L: float = 3.03e-9
    p_d_R: float = 3.81e-9
    F: float = 1e9
    T_c: float = 200e-6
    N: float = 7.24e13
    loss_a_db: float | None = None
    loss_b_db: float | None = None

    def __post_init__(self):
        if self.l_a < 0 or self.l_b < 0:
            raise ConfigError("fiber lengths must be >= 0")
        if self.alpha < 0 or self.insertion_db < 0:
            raise ConfigError("attenuation and insertion loss must be >= 0")
        for name in ("eta_d_L", "eta_d_R", "p_d_L", "p_d_R"):
            _check_prob(name, getattr(self, name))
        if not self.F > 0:
            raise ConfigError(f"clock frequency F={self.F} must be > 0")
        if self.T_c * self.F < 1 - 1e-9:
            raise ConfigError(f"T_c={self.T_c} s is shorter than one clock period")
        if self.N < 1:
            raise ConfigError(f"N={self.N} must be >= 1")

    @property
    def fiber_loss_a_db(self) -> float:
        return self.alpha * self.l_a if self.loss_a_db is None else self.loss_a_db

    @property
    def fiber_loss_b_db(self) -> float:
        return self.alpha * self.l_b if self.loss_b_db is None else self.loss_b_db

    @property
    def eta_a(self) -> float:
        """Overall Alice-to-detector transmittance (fiber plus insertion)."""
        return 10 ** (-(self.fiber_loss_a_db + self.insertion_db) / 10)

    @property
    def eta_b(self) -> float:
        return 10 ** (-(self.fiber_loss_b_db + self.insertion_db) / 10)

    @property
    def fiber_loss_db(self) -> float:
        return self.fiber_loss_a_db + self.fiber_loss_b_db

    @property
    def eta_fiber(self) -> float:
        """End-to-end fiber transmittance, the one entering the repeaterless bound."""
        return 10 ** (-self.fiber_loss_db / 10)

    @property
    def n_tc(self) -> int:
        """Number of clock bins inside the pairing window, F * T_c."""
        return max(1, int(round(self.F * self.T_c)))

    @property
    def length(self) -> float:
        return self.l_a + self.l_b


@dataclass(frozen=True)
class NoiseConfig:
    """Interference imperfections.

    ``drift_window`` is how long a sampled fiber drift rate is held before it
    is redrawn in the Monte Carlo model.
    """

    e_hom: float = 0.04
    sigma: float = 5900.0
    delta_f: float = 10.0
    v2: float = 0.46
    drift_window: float = 10e-3

    def __post_init__(self):
        if not 0.0 <= self.e_hom <= 0.5:
            raise ConfigError(f"e_hom={self.e_hom} must lie in [0, 0.5]")
        if self.sigma < 0:
            raise ConfigError(f"sigma={self.sigma} must be >= 0")
        if not 0.0 <= self.v2 <= 0.5:
            raise ConfigError(f"v2={self.v2} must lie in [0, 0.5]")
        if not self.drift_window > 0:
            raise ConfigError("drift_window must be > 0")

    @property
    def omega_fib(self) -> float:
        return self.sigma


@dataclass(frozen=True)
class SecurityConfig:
    """Failure probabilities and the error-correction inefficiency.

    All individual epsilons default to ``epsilon``; pass overrides to split
    the budget differently.
    """

    epsilon: float = 1e-10
    f_ec: float = 1.10
    eps_cor: float | None = None
    eps_pa: float | None = None
    eps_prime: float | None = None
    eps_hat: float | None = None
    eps_e: float | None = None
    eps_beta: float | None = None

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon={self.epsilon} must lie in (0, 1)")
        if self.f_ec < 1.0:
            raise ConfigError(f"f_ec={self.f_ec} must be >= 1")
        for f in dataclasses.fields(self):
            if f.name.startswith("eps_"):
                v = getattr(self, f.name)
                if v is None:
                    object.__setattr__(self, f.name, self.epsilon)
                elif not 0.0 < v < 1.0:
                    raise ConfigError(f"{f.name}={v} must lie in (0, 1)")

    def _sec_terms(self, n_chernoff: int) -> list[float]:
        # eps_0 + eps_1 = n_chernoff * epsilon
        return [
            2 * self.eps_prime, 4 * self.eps_e, 2 * self.eps_hat,
            n_chernoff * self.epsilon, self.eps_beta, self.eps_pa,
        ]

    def eps_sec(self, n_chernoff: int = 12) -> float:
        return math.fsum(self._sec_terms(n_chernoff))

    def eps_tol(self, n_chernoff: int = 12) -> float:
        # correctly rounded, so equal epsilons give exactly (n_chernoff + 11) * epsilon
        return math.fsum([self.eps_cor, *self._sec_terms(n_chernoff)])


@dataclass(frozen=True)
class ExperimentConfig:
    source: SourceConfig
    link: LinkConfig
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    security: SecurityConfig = field(default_factory=SecurityConfig)
    name: str = ""

    @classmethod
    def symmetric(
        cls,
        length_km: float,
        mu: float,
        nu: float,
        p_mu: float,
        p_nu: float,
        *,
        M: int = 16,
        noise: NoiseConfig | None = None,
        security: SecurityConfig | None = None,
        name: str = "",
        **link_kw,
    ) -> "ExperimentConfig":
        """Identical sources and a link split evenly between Alice and Bob."""
        return cls(
            source=SourceConfig.symmetric(mu, nu, p_mu, p_nu, M=M),
            link=LinkConfig(l_a=length_km / 2, l_b=length_km / 2, **link_kw),
            noise=noise or NoiseConfig(),
            security=security or SecurityConfig(),
            name=name,
        )

    def replace(self, **sections) -> "ExperimentConfig":
        """Copy with whole sections or per-section field updates.

        ``cfg.replace(source={"mu_a": 0.4})`` updates a single field;
        ``cfg.replace(link=other_link)`` swaps the section.
        """
        updates = {}
        for key, value in sections.items():
            if isinstance(value, dict):
                value = dataclasses.replace(getattr(self, key), **value)
            updates[key] = value
        return dataclasses.replace(self, **updates)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        try:
            source = dict(data["source"])
            link = dict(data["link"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"config needs 'source' and 'link' sections ({exc})") from None
        link = _convert_dark_rates(link)
        try:
            return cls(
                source=SourceConfig(**source),
                link=LinkConfig(**link),
                noise=NoiseConfig(**data.get("noise", {})),
                security=SecurityConfig(**data.get("security", {})),
                name=str(data.get("name", "")),
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _convert_dark_rates(link: dict) -> dict:
    """Turn ``dark_rate_L``/``dark_rate_R`` (Hz) into per-bin probabilities.

    With ``gate_s`` the probability is rate * gate (gated detection),
    otherwise rate / F.
    """
    gate = link.pop("gate_s", None)
    F = link.get("F", LinkConfig.__dataclass_fields__["F"].default)
    for side in ("L", "R"):
        rate = link.pop(f"dark_rate_{side}", None)
        if rate is None:
            continue
        if f"p_d_{side}" in link:
            raise ConfigError(f"give either dark_rate_{side} or p_d_{side}, not both")
        link[f"p_d_{side}"] = rate * gate if gate is not None else rate / F
    return link


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    return ExperimentConfig.from_dict(data)


def save_config(config: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(config.to_json(indent=2) + "\n")

