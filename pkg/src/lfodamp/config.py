"""Layered key=value experiment configuration.

Sections: ``[experiment]``, ``[scenario]``, ``[reward]``, ``[agent]``, ``[pid]``
and ``[sweep]``. Later files and ``section.key=value`` overrides win. The
schema is documented in ``docs/config.md``; the bundled ``default.cfg`` lists
every key with its default.
"""
from __future__ import annotations

import configparser
import dataclasses
import typing
from dataclasses import dataclass, field
from importlib import resources

from .ddpg import AgentConfig
from .delay import CHANNEL_RANGES, ZERO_DELAY, channel_preset, custom_channel
from .environment import EpisodeConfig, RewardWeights


class ConfigError(ValueError):
    """Invalid configuration file or override."""


CONTROLLERS = ("rl", "pid", "pss_only", "none")

# scenario keys that do not map one-to-one onto EpisodeConfig fields
_SCENARIO_EXTRA = {"channel", "delay_mode", "custom_weights", "custom_means", "custom_stds",
                   "custom_range"}
# AgentConfig fields filled in from the environment
_AGENT_IMPLIED = {"obs_dim", "action_dim", "seed"}


@dataclass
class ExperimentConfig:
    case: str = "kundur_2area"
    controller: str = "rl"
    episodes: int = 500
    paper_episodes: int = 5000
    eval_episodes: int = 5
    seeds: list = field(default_factory=lambda: [0])
    out: str = "runs"
    checkpoint_every: int = 50
    success_window: int = 100
    eval_channels: list = field(default_factory=lambda: ["fiber_optic"])
    eval_controllers: list = field(default_factory=lambda: ["rl", "pid", "none"])
    sweep_episodes: int = 100
    scenario: dict = field(default_factory=dict)
    reward: dict = field(default_factory=dict)
    agent: dict = field(default_factory=dict)
    pid: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    # typed views -------------------------------------------------------
    def episode_config(self, channel: str | None = None) -> EpisodeConfig:
        sc = dict(self.scenario)
        name = channel if channel is not None else sc.pop("channel", "fiber_optic")
        sc.pop("channel", None)
        mode = sc.pop("delay_mode", "variable")
        custom = {k: sc.pop(k) for k in list(sc) if k.startswith("custom_")}
        kw = _coerce_fields(EpisodeConfig, sc, "scenario")
        kw["channel"] = make_channel(name, mode, custom)
        try:
            cfg = EpisodeConfig(**kw)
            cfg.validate()
        except (TypeError, ValueError) as e:
            raise ConfigError(f"[scenario] {e}") from None
        return cfg

    def reward_weights(self) -> RewardWeights:
        try:
            return RewardWeights(**_coerce_fields(RewardWeights, self.reward, "reward"))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"[reward] {e}") from None

    def agent_config(self, obs_dim: int, action_dim: int, seed: int = 0) -> AgentConfig:
        kw = _coerce_fields(AgentConfig, self.agent, "agent")
        w = self.reward_weights()
        kw.setdefault("action_low", w.v)
        kw.setdefault("action_high", w.u)
        try:
            return AgentConfig(obs_dim=obs_dim, action_dim=action_dim, seed=seed, **kw)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"[agent] {e}") from None

    def pid_gains(self):
        """``(kp, ki, kd)`` if all three are set, else ``None`` (tune first)."""
        keys = ("kp", "ki", "kd")
        if all(k in self.pid for k in keys):
            return tuple(_to_float(self.pid[k], f"pid.{k}") for k in keys)
        return None

    def pid_grids(self):
        default = {"kp_grid": "-80,-40,-20,-10,0,10", "ki_grid": "-5,0,5", "kd_grid": "-1,0,1"}
        return tuple(_float_list(self.pid.get(k, v), f"pid.{k}") for k, v in default.items())


def make_channel(name: str, mode: str = "variable", custom: dict | None = None):
    if name == "none":
        return ZERO_DELAY
    if name == "custom":
        custom = custom or {}
        try:
            model = custom_channel(_float_list(custom["custom_weights"], "custom_weights"),
                                   _float_list(custom["custom_means"], "custom_means"),
                                   _float_list(custom["custom_stds"], "custom_stds"),
                                   _float_list(custom["custom_range"], "custom_range"))
        except KeyError as e:
            raise ConfigError(f"[scenario] custom channel needs {e.args[0]}") from None
        except ValueError as e:
            raise ConfigError(f"[scenario] {e}") from None
    elif name in CHANNEL_RANGES:
        model = channel_preset(name)
    else:
        raise ConfigError(f"[scenario] unknown channel {name!r}; "
                          f"choose from {sorted(CHANNEL_RANGES) + ['custom', 'none']}")
    if mode == "constant":
        return model.as_constant()
    if mode != "variable":
        raise ConfigError(f"[scenario] delay_mode must be 'variable' or 'constant', got {mode!r}")
    return model


# ---------------------------------------------------------------- parsing

def _to_float(text, key):
    try:
        return float(text)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None


def _float_list(text, key):
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    return [_to_float(x.strip(), key) for x in str(text).split(",") if x.strip()]


def _int_list(text, key):
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated integers, got {text!r}") from None


def _str_list(text):
    if isinstance(text, (list, tuple)):
        return list(text)
    return [x.strip() for x in str(text).split(",") if x.strip()]


def _convert(text, typ, key):
    if not isinstance(text, str):
        return text
    origin = typing.get_origin(typ)
    args = typing.get_args(typ)
    if origin is typing.Union or type(typ).__name__ == "UnionType":
        non_none = [a for a in args if a is not type(None)]
        if text.strip().lower() == "none":
            return None
        return _convert(text, non_none[0], key)
    if typ is bool:
        low = text.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {text!r}")
    if typ is int:
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {text!r}") from None
    if typ is float:
        return _to_float(text, key)
    if typ in (list, tuple) or origin in (list, tuple):
        items = _str_list(text)
        if key.endswith("pairs"):
            return [tuple(int(b) for b in it.split("-")) for it in items]
        try:
            return [int(x) for x in items]
        except ValueError:
            return items
    return text


def _coerce_fields(cls, raw: dict, section: str) -> dict:
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    out = {}
    for k, v in raw.items():
        if k not in names or (cls is AgentConfig and k in _AGENT_IMPLIED):
            raise ConfigError(f"[{section}] unknown key {k!r}")
        out[k] = _convert(v, hints[k], f"{section}.{k}")
    return out


def _check_keys(section, raw, allowed):
    for k in raw:
        if k not in allowed:
            raise ConfigError(f"[{section}] unknown key {k!r}")


def from_sections(sections: dict) -> ExperimentConfig:
    known = {"experiment", "scenario", "reward", "agent", "pid", "sweep"}
    for s in sections:
        if s not in known:
            raise ConfigError(f"unknown section [{s}]")
    exp = dict(sections.get("experiment", {}))
    cfg = ExperimentConfig()
    simple = {f.name: f for f in dataclasses.fields(ExperimentConfig)
              if f.name not in ("scenario", "reward", "agent", "pid", "sweep")}
    _check_keys("experiment", exp, simple)
    for k, v in exp.items():
        if k == "seeds":
            val = _int_list(v, "experiment.seeds")
            if not val:
                raise ConfigError("experiment.seeds must not be empty")
        elif k in ("eval_channels", "eval_controllers"):
            val = _str_list(v)
        else:
            val = _convert(v, typing.get_type_hints(ExperimentConfig)[k], f"experiment.{k}")
        setattr(cfg, k, val)
    for c in [cfg.controller, *cfg.eval_controllers]:
        if c not in CONTROLLERS:
            raise ConfigError(f"unknown controller {c!r}; choose from {list(CONTROLLERS)}")
    scen = dict(sections.get("scenario", {}))
    ep_fields = {f.name for f in dataclasses.fields(EpisodeConfig)} - {"channel"}
    _check_keys("scenario", scen, ep_fields | _SCENARIO_EXTRA)
    cfg.scenario = scen
    cfg.reward = dict(sections.get("reward", {}))
    cfg.agent = dict(sections.get("agent", {}))
    cfg.pid = dict(sections.get("pid", {}))
    _check_keys("pid", cfg.pid, {"kp", "ki", "kd", "kp_grid", "ki_grid", "kd_grid"})
    cfg.sweep = dict(sections.get("sweep", {}))
    # validate typed sections eagerly so errors surface at load time
    cfg.episode_config()
    cfg.reward_weights()
    _coerce_fields(AgentConfig, cfg.agent, "agent")
    for k in cfg.sweep:
        sec, _, key = k.partition(".")
        if sec not in ("reward", "agent", "scenario") or not key:
            raise ConfigError(f"[sweep] keys look like reward.alpha, got {k!r}")
    return cfg


def read_sections(paths=(), overrides=()) -> dict:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    parser.read_string(resources.files("lfodamp.data").joinpath("default.cfg").read_text())
    for p in paths:
        try:
            with open(p) as f:
                parser.read_file(f)
        except OSError as e:
            raise ConfigError(f"cannot read config {p}: {e.strerror}") from None
        except configparser.Error as e:
            raise ConfigError(f"malformed config {p}: {e}") from None
    sections = {s: dict(parser.items(s)) for s in parser.sections()}
    for ov in overrides:
        key, sep, val = ov.partition("=")
        sec, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override must look like section.key=value, got {ov!r}")
        sections.setdefault(sec, {})[name] = val.strip()
    return sections


def load_config(paths=(), overrides=()) -> ExperimentConfig:
    return from_sections(read_sections(paths, overrides))


def with_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Copy of ``cfg`` with ``{"reward.alpha": "5", ...}`` applied."""
    new = dataclasses.replace(cfg, scenario=dict(cfg.scenario), reward=dict(cfg.reward),
                              agent=dict(cfg.agent), pid=dict(cfg.pid), sweep=dict(cfg.sweep))
    for k, v in overrides.items():
        sec, _, key = k.partition(".")
        getattr(new, sec)[key] = v
    return new
