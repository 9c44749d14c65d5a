"""JSON run configuration.

Example::

    {
      "seed": 0,
      "game": {"type": "cournot", "N": 20, "m": 10, "n_range": [2, 6]},
      "graph": {"type": "cycle_plus", "chords": 10},
      "mode": "B", "rho_mu": "auto", "rho_z": 1.0, "margin": 0.05,
      "max_iters": 50000, "stop_tol": 1e-9, "cert_tol": 1e-6,
      "oracle": true, "out": "runs/full"
    }

``game`` may instead be ``{"type": "file", "path": "inst.json"}`` or
``{"type": "instance", "instance": {...}}``; ``graph`` may be
``{"num_nodes": N, "edges": [[1, 2], ...]}`` (1-based).  Sub-block seeds
default to the top-level ``seed``.  Relative paths resolve against the
directory of the config file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Union

from .cournot import DEFAULT_INTERVALS, CournotInstance, sample_instance
from .graph import Graph, GraphError, build_graph, random_experiment_graph

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


_TOP_KEYS = {
    "seed", "game", "graph", "mode", "rho_mu", "rho_z", "margin", "gamma", "max_iters",
    "stop_tol", "cert_tol", "oracle", "out", "checkpoint", "resume_from", "b_split",
    "workers", "grid_h",
}


@dataclass
class RunConfig:
    game: dict
    graph: dict
    seed: int = 0
    mode: str = "B"
    rho_mu: Union[float, str] = "auto"
    rho_z: float = 1.0
    margin: float = 0.05
    gamma: float = 0.5
    max_iters: int = 50_000
    stop_tol: float = 1e-9
    cert_tol: float = 1e-6
    oracle: bool = True
    out: str = "runs"
    checkpoint: Optional[str] = None
    resume_from: Optional[str] = None
    b_split: Any = "uniform"
    workers: int = 0
    grid_h: Union[float, str] = "auto"
    base_dir: Path = field(default_factory=Path.cwd)

    def with_overrides(self, **kw) -> "RunConfig":
        """Return a copy with every non-None keyword applied, then revalidate."""
        cfg = replace(self, **{k: v for k, v in kw.items() if v is not None})
        _validate(cfg)
        return cfg

    def resolve(self, p: Optional[str]) -> Optional[Path]:
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def build_instance(self) -> CournotInstance:
        g = self.game
        kind = g.get("type", "cournot")
        if kind == "cournot":
            try:
                return sample_instance(
                    g.get("seed", self.seed), int(g["N"]), int(g["m"]),
                    n_range=tuple(g.get("n_range", (2, 6))),
                    intervals={**DEFAULT_INTERVALS, **{k: tuple(v) for k, v in g.get("intervals", {}).items()}},
                )
            except KeyError as exc:
                raise ConfigError(f"game.{exc.args[0]}: required for the cournot sampler") from exc
            except ValueError as exc:
                raise ConfigError(f"game: {exc}") from exc
        if kind == "file":
            path = self.resolve(g.get("path"))
            if path is None or not path.is_file():
                raise ConfigError(f"game.path: file {g.get('path')!r} not found")
            data = _read_json(path)
            return _instance_from(data.get("instance", data), "game.path")
        if kind == "instance":
            return _instance_from(g.get("instance"), "game.instance")
        raise ConfigError(f"game.type: unknown value {kind!r} (cournot | file | instance)")

    def build_graph(self, num_players: int) -> Graph:
        g = self.graph
        try:
            if "edges" in g:
                num = int(g.get("num_nodes", num_players))
                gr = build_graph(num, [tuple(e) for e in g["edges"]])
            else:
                kind = g.get("type", "cycle_plus")
                if kind != "cycle_plus":
                    raise ConfigError(f"graph.type: unknown value {kind!r}")
                gr = random_experiment_graph(g.get("seed", self.seed), num_players, int(g.get("chords", 0)))
        except (GraphError, ValueError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"graph: {exc}") from exc
        if gr.num_nodes != num_players:
            raise ConfigError(f"graph.num_nodes: {gr.num_nodes} nodes for {num_players} players")
        return gr


def _instance_from(data, where) -> CournotInstance:
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an instance object")
    try:
        return CournotInstance.from_dict(data)
    except KeyError as exc:
        raise ConfigError(f"{where}.{exc.args[0]}: missing") from exc
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _read_json(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


def _num(cfg, name, kind=float, positive=False, nonneg=False):
    val = getattr(cfg, name)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {val!r}")
    if kind is int and int(val) != val:
        raise ConfigError(f"{name}: expected an integer, got {val!r}")
    if positive and not val > 0:
        raise ConfigError(f"{name}: must be positive, got {val!r}")
    if nonneg and val < 0:
        raise ConfigError(f"{name}: must be nonnegative, got {val!r}")


def _validate(cfg: RunConfig) -> None:
    if not isinstance(cfg.game, dict):
        raise ConfigError("game: expected an object")
    if not isinstance(cfg.graph, dict):
        raise ConfigError("graph: expected an object")
    if cfg.mode not in ("A", "B"):
        raise ConfigError(f"mode: expected 'A' or 'B', got {cfg.mode!r}")
    if cfg.rho_mu != "auto":
        _num(cfg, "rho_mu", positive=True)
    if cfg.grid_h != "auto":
        _num(cfg, "grid_h", positive=True)
    _num(cfg, "rho_z", positive=True)
    _num(cfg, "margin", positive=True)
    _num(cfg, "gamma", positive=True)
    if not cfg.gamma < 1:
        raise ConfigError(f"gamma: must lie in (0, 1), got {cfg.gamma}")
    _num(cfg, "max_iters", kind=int, nonneg=True)
    _num(cfg, "stop_tol", nonneg=True)
    _num(cfg, "cert_tol", nonneg=True)
    _num(cfg, "seed", kind=int, nonneg=True)
    _num(cfg, "workers", kind=int, nonneg=True)
    if not isinstance(cfg.oracle, bool):
        raise ConfigError(f"oracle: expected true or false, got {cfg.oracle!r}")
    if cfg.resume_from is not None and not cfg.resolve(cfg.resume_from).is_file():
        raise ConfigError(f"resume_from: file {cfg.resume_from!r} not found")
    if cfg.game.get("type", "cournot") == "file":
        p = cfg.resolve(cfg.game.get("path"))
        if p is None or not p.is_file():
            raise ConfigError(f"game.path: file {cfg.game.get('path')!r} not found")


def parse_config(data: dict, base_dir=None) -> RunConfig:
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown key (allowed: {', '.join(sorted(_TOP_KEYS))})")
    for key in ("game", "graph"):
        if key not in data:
            raise ConfigError(f"{key}: required")
    cfg = RunConfig(**data, base_dir=Path(base_dir) if base_dir else Path.cwd())
    _validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config(_read_json(path), base_dir=path.parent.resolve())
