"""JSON experiment configuration: strict parsing, defaults, scenario assembly.

One document with an explicit schema_version describes a whole experiment.
Unknown keys are hard errors reported with dotted paths, so a typo cannot
silently change what runs. Parsing materializes every default, which makes
serialize(parse(x)) a stable, complete document.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Optional

from .adversary import AttackConfig, _STRATEGIES
from .core import Domain, InvalidArgumentError, SmoothmasError, StateVec, Topology
from .core import full_topology, ring_topology
from .llmgate import GatewayConfig
from .policy import (
    AgentPolicy,
    EXTERNAL_LLM,
    HallucinationConfig,
    LLM_MIMIC,
    MEAN_AGGREGATION,
    PolicyKind,
    _MODES,
    external_llm,
    llm_mimic,
    mean_aggregation,
)
from .sim import DefenseConfig, ScenarioConfig
from .smoothing import SmoothingConfig

SCHEMA_VERSION = 1

_POLICY_KINDS = (MEAN_AGGREGATION, LLM_MIMIC, EXTERNAL_LLM)
_TOPOLOGY_KINDS = ("ring", "full")
_SCENARIOS = ("single", "triplet")

_MISSING = object()


class ConfigError(SmoothmasError):
    """The configuration document is malformed or inconsistent."""


class _Section:
    """Dict wrapper that tracks consumption so leftovers become errors."""

    def __init__(self, data: Any, path: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{path or 'config'} must be a JSON object")
        self._data = dict(data)
        self._path = path

    def key(self, name: str) -> str:
        return f"{self._path}.{name}" if self._path else name

    def take(self, name: str, default: Any = _MISSING) -> Any:
        if name in self._data:
            return self._data.pop(name)
        if default is _MISSING:
            raise ConfigError(f"missing required key: {self.key(name)}")
        return default

    def finish(self) -> None:
        if self._data:
            paths = ", ".join(sorted(self.key(k) for k in self._data))
            raise ConfigError(f"unknown config key(s): {paths}")


def _as_int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path} must be an integer, got {value!r}")
    return value


def _as_float(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path} must be a number, got {value!r}")
    return float(value)


def _as_bool(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{path} must be true or false, got {value!r}")
    return value


def _choice(value: Any, path: str, options: tuple[str, ...]) -> str:
    if value not in options:
        raise ConfigError(f"{path} must be one of {list(options)}, got {value!r}")
    return value


def _float_list(value: Any, path: str) -> tuple[float, ...]:
    if not isinstance(value, list):
        raise ConfigError(f"{path} must be a list of numbers, got {value!r}")
    return tuple(_as_float(v, f"{path}[{i}]") for i, v in enumerate(value))


def _int_list(value: Any, path: str) -> tuple[int, ...]:
    if not isinstance(value, list):
        raise ConfigError(f"{path} must be a list of integers, got {value!r}")
    return tuple(_as_int(v, f"{path}[{i}]") for i, v in enumerate(value))


@dataclass(frozen=True)
class PolicySettings:
    kind: str
    self_weight: float
    jitter_sd: float

    def build(self) -> PolicyKind:
        if self.kind == MEAN_AGGREGATION:
            return mean_aggregation(self.self_weight)
        if self.kind == LLM_MIMIC:
            return llm_mimic(self.jitter_sd, self.self_weight)
        return external_llm(self.self_weight)


@dataclass(frozen=True)
class CertificationSettings:
    sigma: float
    n: int
    alpha: float
    k_regions: int
    agents: Optional[tuple[int, ...]]
    delta_mal_max: float


@dataclass(frozen=True)
class FormationSettings:
    slot_radius: float


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    topology_kind: str
    n: int
    rounds: int
    dimension: int
    domain: Domain
    master_seed: int
    initial_states: Optional[tuple[StateVec, ...]]
    policy: PolicySettings
    hallucination: Optional[HallucinationConfig]
    attack: Optional[AttackConfig]
    defense: Optional[DefenseConfig]
    certification: CertificationSettings
    formation: FormationSettings
    llm: Optional[GatewayConfig]

    def topology(self) -> Topology:
        if self.topology_kind == "ring":
            return ring_topology(self.n)
        return full_topology(self.n)


def _parse_domain(value: Any, dimension: int) -> Domain:
    if value is None:
        return Domain((0.0,) * dimension, (1.0,) * dimension)
    sec = _Section(value, "domain")
    low = _float_list(sec.take("low"), "domain.low")
    high = _float_list(sec.take("high"), "domain.high")
    sec.finish()
    if len(low) != dimension or len(high) != dimension:
        raise ConfigError(
            f"domain bounds must have dimension {dimension}, "
            f"got low={len(low)}, high={len(high)}"
        )
    try:
        return Domain(low, high)
    except InvalidArgumentError as exc:
        raise ConfigError(f"domain: {exc}") from exc


def _parse_initial_states(
    value: Any, dimension: int
) -> Optional[tuple[StateVec, ...]]:
    if value is None:
        return None
    if not isinstance(value, list):
        raise ConfigError("initial_states must be a list of vectors or null")
    states = tuple(
        _float_list(v, f"initial_states[{i}]") for i, v in enumerate(value)
    )
    for i, s in enumerate(states):
        if len(s) != dimension:
            raise ConfigError(
                f"initial_states[{i}] has dimension {len(s)}, expected {dimension}"
            )
    return states


def _parse_policy(value: Any) -> PolicySettings:
    sec = _Section(value if value is not None else {}, "policy")
    kind = _choice(sec.take("kind", MEAN_AGGREGATION), "policy.kind", _POLICY_KINDS)
    self_weight = _as_float(sec.take("self_weight", 0.5), "policy.self_weight")
    jitter_sd = _as_float(sec.take("jitter_sd", 0.05), "policy.jitter_sd")
    sec.finish()
    if not 0.0 <= self_weight <= 1.0:
        raise ConfigError(f"policy.self_weight must be in [0, 1], got {self_weight}")
    if jitter_sd < 0.0:
        raise ConfigError(f"policy.jitter_sd must be >= 0, got {jitter_sd}")
    return PolicySettings(kind, self_weight, jitter_sd)


def _parse_hallucination(value: Any, dimension: int) -> Optional[HallucinationConfig]:
    if value is None:
        return None
    sec = _Section(value, "hallucination")
    p_h = _as_float(sec.take("p_h"), "hallucination.p_h")
    mode = _choice(sec.take("mode"), "hallucination.mode", _MODES)
    magnitude = _as_float(sec.take("magnitude", 0.5), "hallucination.magnitude")
    target = sec.take("target", None)
    sec.finish()
    if target is not None:
        target = _float_list(target, "hallucination.target")
        if len(target) != dimension:
            raise ConfigError(
                f"hallucination.target has dimension {len(target)}, "
                f"expected {dimension}"
            )
    try:
        return HallucinationConfig(p_h=p_h, mode=mode, magnitude=magnitude, target=target)
    except InvalidArgumentError as exc:
        raise ConfigError(f"hallucination: {exc}") from exc


def _parse_attack(value: Any, n: int) -> Optional[AttackConfig]:
    if value is None:
        return None
    sec = _Section(value, "attack")
    malicious = _int_list(sec.take("malicious"), "attack.malicious")
    p_attack = _as_float(sec.take("p_attack", 1.0), "attack.p_attack")
    delta_max = _as_float(sec.take("delta_max", 0.3), "attack.delta_max")
    strategy = _choice(
        sec.take("strategy", _STRATEGIES[0]), "attack.strategy", _STRATEGIES
    )
    bias_sign = _as_int(sec.take("bias_sign", 1), "attack.bias_sign")
    period = _as_int(sec.take("period", 10), "attack.period")
    sec.finish()
    for a in malicious:
        if not 0 <= a < n:
            raise ConfigError(f"attack.malicious contains agent {a}, valid range is 0..{n - 1}")
    try:
        return AttackConfig(
            malicious=frozenset(malicious),
            p_attack=p_attack,
            delta_max=delta_max,
            strategy=strategy,
            bias_sign=bias_sign,
            period=period,
        )
    except InvalidArgumentError as exc:
        raise ConfigError(f"attack: {exc}") from exc


def _parse_defense(value: Any) -> Optional[DefenseConfig]:
    if value is None:
        return None
    sec = _Section(value, "defense")
    sigma = _as_float(sec.take("sigma", 0.05), "defense.sigma")
    m1 = _as_int(sec.take("m1", 5), "defense.m1")
    c = _as_float(sec.take("c", 10.0), "defense.c")
    tau = _as_float(sec.take("tau", 0.01), "defense.tau")
    m_max = _as_int(sec.take("m_max", 20), "defense.m_max")
    trim_frac = _as_float(sec.take("trim_frac", 0.1), "defense.trim_frac")
    verify = _as_bool(sec.take("verify_neighbors", True), "defense.verify_neighbors")
    smooth = _as_bool(sec.take("smooth_decisions", True), "defense.smooth_decisions")
    sec.finish()
    try:
        smoothing = SmoothingConfig(
            sigma=sigma, m1=m1, c=c, tau=tau, m_max=m_max, trim_frac=trim_frac
        )
    except InvalidArgumentError as exc:
        raise ConfigError(f"defense: {exc}") from exc
    return DefenseConfig(smoothing, verify_neighbors=verify, smooth_decisions=smooth)


def _parse_certification(value: Any, n: int) -> CertificationSettings:
    sec = _Section(value if value is not None else {}, "certification")
    sigma = _as_float(sec.take("sigma", 0.05), "certification.sigma")
    samples = _as_int(sec.take("n", 1000), "certification.n")
    alpha = _as_float(sec.take("alpha", 0.01), "certification.alpha")
    k_regions = _as_int(sec.take("k_regions", 10), "certification.k_regions")
    agents = sec.take("agents", None)
    delta_mal_max = _as_float(
        sec.take("delta_mal_max", 0.3), "certification.delta_mal_max"
    )
    sec.finish()
    if agents is not None:
        agents = _int_list(agents, "certification.agents")
        for a in agents:
            if not 0 <= a < n:
                raise ConfigError(
                    f"certification.agents contains agent {a}, valid range is 0..{n - 1}"
                )
    if sigma <= 0.0:
        raise ConfigError(f"certification.sigma must be > 0, got {sigma}")
    if samples < 2:
        raise ConfigError(f"certification.n must be >= 2, got {samples}")
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"certification.alpha must be in (0, 1), got {alpha}")
    if k_regions < 2:
        raise ConfigError(f"certification.k_regions must be >= 2, got {k_regions}")
    if delta_mal_max <= 0.0:
        raise ConfigError(
            f"certification.delta_mal_max must be > 0, got {delta_mal_max}"
        )
    return CertificationSettings(sigma, samples, alpha, k_regions, agents, delta_mal_max)


def _parse_formation(value: Any) -> FormationSettings:
    sec = _Section(value if value is not None else {}, "formation")
    slot_radius = _as_float(sec.take("slot_radius", 300.0), "formation.slot_radius")
    sec.finish()
    if slot_radius <= 0.0:
        raise ConfigError(f"formation.slot_radius must be > 0, got {slot_radius}")
    return FormationSettings(slot_radius)


def _parse_llm(value: Any) -> Optional[GatewayConfig]:
    if value is None:
        return None
    sec = _Section(value, "llm")
    kwargs = dict(
        base_url=sec.take("base_url"),
        model=sec.take("model"),
        timeout_s=_as_float(sec.take("timeout_s", 30.0), "llm.timeout_s"),
        max_retries=_as_int(sec.take("max_retries", 2), "llm.max_retries"),
        temperature=_as_float(sec.take("temperature", 0.0), "llm.temperature"),
        max_concurrency=_as_int(sec.take("max_concurrency", 4), "llm.max_concurrency"),
        strict_parse=_as_bool(sec.take("strict_parse", False), "llm.strict_parse"),
    )
    sec.finish()
    if not isinstance(kwargs["base_url"], str) or not isinstance(kwargs["model"], str):
        raise ConfigError("llm.base_url and llm.model must be strings")
    try:
        return GatewayConfig(**kwargs)
    except InvalidArgumentError as exc:
        raise ConfigError(f"llm: {exc}") from exc


def parse_config(data: Any) -> ExperimentConfig:
    top = _Section(data, "")
    version = _as_int(top.take("schema_version"), "schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"schema_version {version} is not supported (expected {SCHEMA_VERSION})"
        )
    scenario = _choice(top.take("scenario", "triplet"), "scenario", _SCENARIOS)

    topo_sec = _Section(top.take("topology", {}), "topology")
    topology_kind = _choice(
        topo_sec.take("kind", "ring"), "topology.kind", _TOPOLOGY_KINDS
    )
    n = _as_int(topo_sec.take("n", 10), "topology.n")
    topo_sec.finish()
    if n < 2:
        raise ConfigError(f"topology.n must be >= 2, got {n}")

    rounds = _as_int(top.take("rounds", 50), "rounds")
    if rounds < 1:
        raise ConfigError(f"rounds must be >= 1, got {rounds}")
    dimension = _as_int(top.take("dimension", 1), "dimension")
    if dimension < 1:
        raise ConfigError(f"dimension must be >= 1, got {dimension}")

    domain = _parse_domain(top.take("domain", None), dimension)
    master_seed = _as_int(top.take("master_seed", 0), "master_seed")
    initial_states = _parse_initial_states(top.take("initial_states", None), dimension)
    if initial_states is not None and len(initial_states) != n:
        raise ConfigError(
            f"initial_states has {len(initial_states)} entries, expected {n}"
        )
    policy = _parse_policy(top.take("policy", None))
    hallucination = _parse_hallucination(top.take("hallucination", None), dimension)
    attack = _parse_attack(top.take("attack", None), n)
    defense = _parse_defense(top.take("defense", None))
    certification = _parse_certification(top.take("certification", None), n)
    formation = _parse_formation(top.take("formation", None))
    llm = _parse_llm(top.take("llm", None))
    top.finish()

    if scenario == "triplet" and attack is None:
        raise ConfigError("scenario 'triplet' needs an attack section to compare against")
    if initial_states is not None:
        for i, s in enumerate(initial_states):
            if not domain.contains(s):
                raise ConfigError(f"initial_states[{i}] lies outside the domain")

    return ExperimentConfig(
        scenario=scenario,
        topology_kind=topology_kind,
        n=n,
        rounds=rounds,
        dimension=dimension,
        domain=domain,
        master_seed=master_seed,
        initial_states=initial_states,
        policy=policy,
        hallucination=hallucination,
        attack=attack,
        defense=defense,
        certification=certification,
        formation=formation,
        llm=llm,
    )


def parse_config_text(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_config(data)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text)


def serialize_config(cfg: ExperimentConfig) -> dict:
    """Complete document with every default materialized; parses back equal."""
    halluc = None
    if cfg.hallucination is not None:
        halluc = {
            "p_h": cfg.hallucination.p_h,
            "mode": cfg.hallucination.mode,
            "magnitude": cfg.hallucination.magnitude,
            "target": list(cfg.hallucination.target)
            if cfg.hallucination.target is not None
            else None,
        }
    attack = None
    if cfg.attack is not None:
        attack = {
            "malicious": sorted(cfg.attack.malicious),
            "p_attack": cfg.attack.p_attack,
            "delta_max": cfg.attack.delta_max,
            "strategy": cfg.attack.strategy,
            "bias_sign": cfg.attack.bias_sign,
            "period": cfg.attack.period,
        }
    defense = None
    if cfg.defense is not None:
        sm = cfg.defense.smoothing
        defense = {
            "sigma": sm.sigma,
            "m1": sm.m1,
            "c": sm.c,
            "tau": sm.tau,
            "m_max": sm.m_max,
            "trim_frac": sm.trim_frac,
            "verify_neighbors": cfg.defense.verify_neighbors,
            "smooth_decisions": cfg.defense.smooth_decisions,
        }
    llm = None
    if cfg.llm is not None:
        llm = {
            "base_url": cfg.llm.base_url,
            "model": cfg.llm.model,
            "timeout_s": cfg.llm.timeout_s,
            "max_retries": cfg.llm.max_retries,
            "temperature": cfg.llm.temperature,
            "max_concurrency": cfg.llm.max_concurrency,
            "strict_parse": cfg.llm.strict_parse,
        }
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario": cfg.scenario,
        "topology": {"kind": cfg.topology_kind, "n": cfg.n},
        "rounds": cfg.rounds,
        "dimension": cfg.dimension,
        "domain": {"low": list(cfg.domain.low), "high": list(cfg.domain.high)},
        "master_seed": cfg.master_seed,
        "initial_states": [list(s) for s in cfg.initial_states]
        if cfg.initial_states is not None
        else None,
        "policy": {
            "kind": cfg.policy.kind,
            "self_weight": cfg.policy.self_weight,
            "jitter_sd": cfg.policy.jitter_sd,
        },
        "hallucination": halluc,
        "attack": attack,
        "defense": defense,
        "certification": {
            "sigma": cfg.certification.sigma,
            "n": cfg.certification.n,
            "alpha": cfg.certification.alpha,
            "k_regions": cfg.certification.k_regions,
            "agents": list(cfg.certification.agents)
            if cfg.certification.agents is not None
            else None,
            "delta_mal_max": cfg.certification.delta_mal_max,
        },
        "formation": {"slot_radius": cfg.formation.slot_radius},
        "llm": llm,
    }


def build_policies(
    cfg: ExperimentConfig,
    hallucination: Optional[HallucinationConfig],
    gateway=None,
) -> tuple[AgentPolicy, ...]:
    if cfg.policy.kind == EXTERNAL_LLM and gateway is None:
        raise ConfigError(
            "the external-llm policy needs a live gateway; run with --live-llm"
        )
    kind = cfg.policy.build()
    return tuple(
        AgentPolicy(kind, halluc=hallucination, domain=cfg.domain, gateway=gateway)
        for _ in range(cfg.n)
    )


def scenario_config(
    cfg: ExperimentConfig,
    seed: Optional[int] = None,
    use_attack: bool = True,
    use_defense: bool = True,
    use_hallucination: bool = True,
    gateway=None,
) -> ScenarioConfig:
    """One runnable scenario from the experiment document.

    The use_* switches exist so scenario legs can share everything else;
    they never add anything the document does not define.
    """
    return ScenarioConfig(
        topology=cfg.topology(),
        rounds=cfg.rounds,
        policies=build_policies(
            cfg, cfg.hallucination if use_hallucination else None, gateway
        ),
        master_seed=cfg.master_seed if seed is None else seed,
        attack=cfg.attack if use_attack else None,
        defense=cfg.defense if use_defense else None,
        initial_states=cfg.initial_states,
        domain=cfg.domain,
    )


BASELINE = "baseline"
NO_DEFENSE = "no_defense"
WITH_DEFENSE = "with_defense"


def triplet_configs(
    cfg: ExperimentConfig,
    seed: Optional[int] = None,
    gateway=None,
    defense_legs: str = "both",
) -> dict[str, ScenarioConfig]:
    """The comparative trio sharing topology, seed, and initial states.

    The ideal baseline has no attack and no hallucination; the two attack
    legs differ only in whether the defense runs. defense_legs picks which
    attack legs to build ("on", "off", or "both").
    """
    if defense_legs not in ("on", "off", "both"):
        raise ConfigError(f"defense_legs must be on, off, or both, got {defense_legs!r}")
    legs = {
        BASELINE: scenario_config(
            cfg, seed=seed, use_attack=False, use_defense=False,
            use_hallucination=False, gateway=gateway,
        )
    }
    if defense_legs in ("off", "both"):
        legs[NO_DEFENSE] = scenario_config(
            cfg, seed=seed, use_defense=False, gateway=gateway
        )
    if defense_legs in ("on", "both"):
        if cfg.defense is None:
            raise ConfigError("config has no defense section but a defense leg was requested")
        legs[WITH_DEFENSE] = scenario_config(cfg, seed=seed, gateway=gateway)
    return legs
