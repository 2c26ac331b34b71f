"""YAML run configuration mapped onto CLI option defaults.

Top-level keys apply to every subcommand that has an option of that name;
a section named after a subcommand overrides them for that command only::

    seed: 42
    profile: fast
    reproduce:
      out_dir: results/general
      k_range: [20, 50]

Keys are option names with ``-`` or ``_`` separators. Flags given on the
command line win over the file.
"""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Union

import click
import yaml


class ConfigError(click.ClickException):
    pass


def _norm(key: str) -> str:
    return str(key).replace("-", "_")


def load_config(path: Union[str, Path]) -> dict:
    doc = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc


def default_map(doc: Mapping, commands: Mapping[str, click.Command]) -> dict:
    sections = {_norm(k): v for k, v in doc.items() if _norm(k) in commands}
    shared = {_norm(k): v for k, v in doc.items() if _norm(k) not in commands}
    known = set().union(*({p.name for p in c.params} for c in commands.values()))
    stray = sorted(set(shared) - known)
    if stray:
        raise ConfigError(f"unknown config keys: {', '.join(stray)}")
    out = {}
    for name, cmd in commands.items():
        names = {p.name for p in cmd.params}
        sec = {_norm(k): v for k, v in (sections.get(name) or {}).items()}
        bad = sorted(set(sec) - names)
        if bad:
            raise ConfigError(f"unknown keys in section {name!r}: {', '.join(bad)}")
        out[name] = {**{k: v for k, v in shared.items() if k in names}, **sec}
    return out
