"""Command-line experiment driver.

``gnedr run CONFIG`` executes the distributed iteration and writes
``metrics.csv`` and ``summary.json``; ``gnedr verify CONFIG`` compares it
with the reference solvers; ``gnedr constants CONFIG`` prints the
instance constants and the penalty bound.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from .config import ConfigError, RunConfig, load_config
from .cournot import SearchCeilingExceeded, assumption_a_rho, constants
from .graph import graph_algebra
from .metrics import emit_metrics
from .oracle import GridTooCoarse, NoConvergence, brute_force_vgne, centralized_vgne
from .splitting import DRConfig, Splitting, lemma1_step_sizes

log = logging.getLogger("gnedr")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3
EXIT_MISMATCH = 4

NORMALIZATION = {
    "avg_norm_dist": "mean over agents j of ||y_j - x*|| / ||x*||, x* from the centralized solver",
    "rel_step": "||omega_tilde^k - omega_tilde^(k-1)|| / (||omega_tilde^(k-1)|| + 1)",
    "consensus": "sum over coordinates of the population std across agents",
    "row_0": "initial point, rel_step 0",
}


class Experiment:
    """Everything derived from a config before iterating."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.inst = cfg.build_instance()
        self.graph = cfg.build_graph(self.inst.N)
        try:
            self.game = self.inst.to_game(cfg.b_split)
        except ValueError as exc:
            raise ConfigError(f"b_split: {exc}") from exc
        self.consts = constants(self.inst, self.graph)
        if cfg.rho_mu == "auto":
            if cfg.mode == "B":
                self.rho_mu = self.consts.rho_mu_bound
            else:
                self.rho_mu = assumption_a_rho(self.inst, self.graph)
        else:
            self.rho_mu = float(cfg.rho_mu)
        self.steps = lemma1_step_sizes(self.game, self.graph, self.rho_mu, cfg.rho_z, cfg.margin)
        self.solver = Splitting(self.game, self.graph, self.steps, gamma=cfg.gamma, workers=cfg.workers)
        self.dr_cfg = DRConfig(cfg.gamma, cfg.max_iters, cfg.stop_tol, cfg.cert_tol, cfg.mode)

    def initial_state(self):
        if self.cfg.resume_from is None:
            return None
        state, sizes = read_checkpoint(self.cfg.resolve(self.cfg.resume_from))
        if sizes != self.inst.sizes or state.mu.shape[0] != self.graph.num_edges or state.lam.shape[1] != self.inst.m:
            raise ConfigError("resume_from: checkpoint shape does not match the configured instance")
        return state

    def constants_dict(self) -> dict:
        c = self.consts
        return {"eta": c.eta, "theta1": c.theta1, "theta2": c.theta2, "sigma1": c.sigma1,
                "rho_mu_bound": c.rho_mu_bound}


def run_experiment(cfg: RunConfig, stream=None) -> tuple[int, dict]:
    stream = stream or sys.stdout
    exp = Experiment(cfg)
    out = cfg.resolve(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    x_star = None
    oracle_info = None
    if cfg.oracle:
        try:
            sol = centralized_vgne(exp.game)
            x_star = sol.x_star
            oracle_info = {"iterations": sol.iterations, "kkt": sol.certificate._asdict()}
        except NoConvergence as exc:
            log.warning("reference solver failed: %s", exc)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = exp.solver.run(exp.dr_cfg, init=exp.initial_state(), x_star=x_star)
    for w in caught:
        log.warning("%s", w.message)
    emit_metrics(result.trajectory, out / "metrics.csv")
    if cfg.checkpoint:
        write_checkpoint(cfg.resolve(cfg.checkpoint), result.omega_tilde, exp.inst.sizes)
    last = result.trajectory[-1]
    summary = {
        "status": result.status,
        "certified": result.certified,
        "iterations": result.iterations,
        "mode": cfg.mode,
        "rho_mu": exp.rho_mu,
        "rho_z": cfg.rho_z,
        "constants": exp.constants_dict(),
        "final": {**result.certificate, "avg_norm_dist": None if np.isnan(last.avg_norm_dist) else last.avg_norm_dist},
        "x": result.x.tolist(),
        "lambda": result.lam.tolist(),
        "oracle": oracle_info,
        "warnings": [str(w.message) for w in caught],
        "wall_time": result.wall_time,
        "normalization": NORMALIZATION,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"{result.status}: {result.iterations} iterations, t_residual "
          f"{result.certificate['t_residual']:.3e}, wrote {out}", file=stream)
    return (EXIT_OK if result.certified else EXIT_NOT_CONVERGED), summary


def default_grid_step(inst) -> float:
    extent = float(np.concatenate(inst.upper).max())
    return extent / int(15_000 ** (1.0 / inst.n))


def verify(cfg: RunConfig, stream=None) -> int:
    stream = stream or sys.stdout
    exp = Experiment(cfg)
    result = exp.solver.run(exp.dr_cfg, init=exp.initial_state())
    rows = [("distributed", result.x)]
    tol = {"centralized": 1e-4}
    if cfg.oracle:
        rows.append(("centralized", centralized_vgne(exp.game).x_star))
        if exp.inst.n <= 3:
            h = default_grid_step(exp.inst) if cfg.grid_h == "auto" else float(cfg.grid_h)
            try:
                rows.append(("brute-force", brute_force_vgne(exp.game, h)))
                tol["brute-force"] = max(1e-4, 2 * h)
            except GridTooCoarse as exc:
                print(f"brute-force: {exc}", file=stream)
    cert = result.certificate
    print(f"status {result.status} after {result.iterations} iterations", file=stream)
    print(f"  t_residual {cert['t_residual']:.3e}  y_consensus {cert['y_consensus']:.3e}  "
          f"lambda_consensus {cert['lambda_consensus']:.3e}", file=stream)
    print("  kkt " + "  ".join(f"{k} {v:.3e}" for k, v in cert["kkt"].items()), file=stream)
    ok = result.certified
    if len(rows) == 1:
        print("reference solver disabled: distance metrics unavailable", file=stream)
    for a in range(len(rows)):
        for b in range(a + 1, len(rows)):
            (na, xa), (nb, xb) = rows[a], rows[b]
            dist = float(np.max(np.abs(xa - xb)))
            limit = max(tol.get(na, 1e-4), tol.get(nb, 1e-4))
            good = dist <= limit
            ok &= good
            print(f"  {na:>12} vs {nb:<12} max|dx| {dist:.3e}  tol {limit:.1e}  {'ok' if good else 'MISMATCH'}",
                  file=stream)
    if not result.certified:
        return EXIT_NOT_CONVERGED
    return EXIT_OK if ok else EXIT_MISMATCH


def print_constants(cfg: RunConfig, stream=None) -> int:
    stream = stream or sys.stdout
    exp = Experiment(cfg)
    d = exp.constants_dict()
    d["max_degree"] = int(graph_algebra(exp.graph).degrees.max())
    for k, v in d.items():
        print(f"{k:>13} {v:.6g}" if isinstance(v, float) else f"{k:>13} {v}", file=stream)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gnedr", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the distributed solver and write metrics")
    r.add_argument("config")
    r.add_argument("--out")
    r.add_argument("--seed", type=int)
    r.add_argument("--mode", choices=["A", "B"])
    r.add_argument("--max-iters", type=int, dest="max_iters")
    r.add_argument("--workers", type=int)
    v = sub.add_parser("verify", help="compare against the reference solvers")
    v.add_argument("config")
    c = sub.add_parser("constants", help="print instance constants and the penalty bound")
    c.add_argument("config")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command == "run":
            out = str(Path(args.out).resolve()) if args.out else None
            cfg = cfg.with_overrides(out=out, seed=args.seed, mode=args.mode,
                                     max_iters=args.max_iters, workers=args.workers)
            return run_experiment(cfg)[0]
        if args.command == "verify":
            return verify(cfg)
        return print_constants(cfg)
    except (ConfigError, CheckpointError, SearchCeilingExceeded) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
