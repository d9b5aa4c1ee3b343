"""Scenario files.

A scenario is a YAML mapping whose keys are the :class:`ScenarioConfig`
fields, plus a mandatory ``scenario_version``.  Jobs are written as
mappings from resource to level, for example::

    scenario_version: 1
    name: tiny
    process_count: 2
    K: 1
    offers: {0: [{0: 1}], 1: [{0: 1}]}
    arrival_prob: 1.0

Errors name the offending field and the line it is on.
"""
from __future__ import annotations

import dataclasses

import yaml

from .protocol import Variant
from .simulator import ConfigError, ScenarioConfig

SCENARIO_VERSION = 1
FIELDS = {f.name for f in dataclasses.fields(ScenarioConfig)}


def _key_lines(text: str) -> dict[str, int]:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return {}
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: k.start_mark.line + 1 for k, _ in node.value if isinstance(k, yaml.ScalarNode)}


def parse_scenario(text: str, source: str = "<scenario>") -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("syntax", str(getattr(exc, "problem", exc)),
                          mark.line + 1 if mark else None) from None
    if not isinstance(data, dict):
        raise ConfigError("scenario", "top level must be a mapping", 1)
    lines = _key_lines(text)
    version = data.pop("scenario_version", None)
    if version is None:
        raise ConfigError("scenario_version", "missing", 1)
    if not isinstance(version, int) or version > SCENARIO_VERSION:
        raise ConfigError("scenario_version", f"unsupported version {version!r}",
                          lines.get("scenario_version"))
    for key in data:
        if key not in FIELDS:
            raise ConfigError(str(key), "unknown field", lines.get(str(key)))
    try:
        if "variant" in data:
            v = data["variant"] or {}
            if not isinstance(v, dict):
                raise ConfigError("variant", "must be a mapping")
            try:
                data["variant"] = Variant(**v)
            except TypeError as exc:
                raise ConfigError("variant", str(exc)) from None
        if data.get("offers") is not None:
            data["offers"] = _parse_offers(data["offers"])
        for key in ("abort_prob",):
            if key in data and not isinstance(data[key], dict):
                raise ConfigError(key, "must be a mapping from line to probability")
        return ScenarioConfig(**data)
    except ConfigError as exc:
        if exc.line is None and exc.field in lines:
            raise ConfigError(exc.field, exc.msg, lines[exc.field]) from None
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError("scenario", f"{source}: {exc}") from None


def _parse_offers(raw) -> dict[int, list[dict[int, int]]]:
    if not isinstance(raw, dict):
        raise ConfigError("offers", "must map process to a list of jobs")
    out = {}
    for p, jobs in raw.items():
        if not isinstance(jobs, list) or not all(isinstance(j, dict) for j in jobs):
            raise ConfigError("offers", f"process {p}: expected a list of resource->level mappings")
        try:
            out[int(p)] = [{int(c): int(lvl) for c, lvl in j.items()} for j in jobs]
        except (TypeError, ValueError):
            raise ConfigError("offers", f"process {p}: levels must be integers") from None
    return out


def load_scenario(path: str) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read(), path)


def dump_scenario(cfg: ScenarioConfig) -> str:
    d = {"scenario_version": SCENARIO_VERSION, **cfg.to_dict()}
    d["abort_prob"] = {int(k): v for k, v in d["abort_prob"].items()}
    if "offers" in d:
        d["offers"] = {int(p): [{int(c): lvl for c, lvl in j.items()} for j in js]
                       for p, js in d["offers"].items()}
    if d["max_level"] is None:
        del d["max_level"]
    return yaml.safe_dump(d, sort_keys=False)
