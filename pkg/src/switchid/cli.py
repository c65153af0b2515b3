"""``switchid`` command line: certify, synthesize, simulate, estimate, envelope, demo-example.

Exit codes: 0 success, 1 negative verdict, 2 configuration or I/O error.
Every command writes its artifacts into ``--out`` once, at the end.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .discern import SynthesisError, certify_bank, stability_check, synthesize_bank
from .estimator import MultiModelEstimator, envelope_pair_set, error_bound
from .gramian import EnvelopeTable, envelope_tables, gamma_bound
from .io import bank_to_dict, load_bank, load_plant, read_json, signal_to_dict, write_json
from .plant import ControllerBank, ControllerMode, Plant
from .sim import (
    DisturbanceTrack,
    SwitchingSignal,
    Trajectory,
    default_dt,
    make_round_robin_signal,
    simulate_forced,
    write_table,
)

EXIT_OK, EXIT_NEGATIVE, EXIT_CONFIG = 0, 1, 2

logger = logging.getLogger("switchid")

# Independent random streams per pipeline stage, all derived from --seed.
STAGE_CERTIFY, STAGE_SYNTH, STAGE_NOISE, STAGE_ENVELOPE, STAGE_STATE = range(5)


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    plant: Plant | None
    bank: ControllerBank | None
    out: Path
    seed: int = 0
    horizon: float = 4.0
    dwell: float | None = None
    steps: int = 2000
    epsilon: float = 0.1
    noise_sup: float = 0.0
    pairs: int = 100
    tol: float = 1e-9

    @classmethod
    def from_args(cls, args, need_bank: bool = True) -> RunConfig:
        plant = _load(load_plant, args.plant, "plant") if getattr(args, "plant", None) else None
        bank = None
        if need_bank:
            if not getattr(args, "bank", None):
                raise ConfigError("--bank is required")
            bank = _load(load_bank, args.bank, "bank")
        cfg = cls(plant, bank, Path(args.out), seed=args.seed,
                  horizon=getattr(args, "horizon", 4.0), dwell=getattr(args, "dwell", None),
                  steps=getattr(args, "steps", 2000), epsilon=getattr(args, "epsilon", 0.1),
                  noise_sup=getattr(args, "noise_sup", 0.0), pairs=getattr(args, "pairs", 100),
                  tol=getattr(args, "tol", 1e-9))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        for name in ("horizon", "epsilon", "tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"--{name} must be positive")
        if self.dwell is not None and self.dwell <= 0:
            raise ConfigError("--dwell must be positive")
        if self.noise_sup < 0 or self.pairs < 0 or self.steps < 1:
            raise ConfigError("--noise-sup and --pairs must be non-negative, --steps positive")
        if self.plant is not None and self.bank is not None:
            m = self.bank[0]
            if (m.n_u, m.n_y) != (self.plant.n_u, self.plant.n_y):
                raise ConfigError(
                    f"bank is {m.n_u}x{m.n_y} but plant has n_u={self.plant.n_u}, n_y={self.plant.n_y}")

    def rng(self, stage: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, stage])

    def signal(self) -> SwitchingSignal:
        try:
            return make_round_robin_signal(len(self.bank), 0.0, self.horizon, self.dwell)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def dt(self, sigma: SwitchingSignal) -> float:
        return default_dt(sigma, self.steps)


def _load(loader, path, what):
    try:
        return loader(path)
    except FileNotFoundError as exc:
        raise ConfigError(f"{what} file not found: {path}") from exc
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        raise ConfigError(f"cannot read {what} file {path}: {exc}") from exc


def _vector(text, n, name):
    if text is None:
        return None
    try:
        v = np.array([float(x) for x in text.split(",")])
    except ValueError as exc:
        raise ConfigError(f"--{name} must be comma-separated numbers") from exc
    if n is not None and v.size != n:
        raise ConfigError(f"--{name} needs {n} values, got {v.size}")
    return v


def _require_plant(cfg: RunConfig) -> Plant:
    if cfg.plant is None:
        raise ConfigError("--plant is required")
    return cfg.plant


# -- commands ---------------------------------------------------------------

def cmd_certify(args) -> int:
    cfg = RunConfig.from_args(args)
    plant = _require_plant(cfg)
    cert = certify_bank(plant, cfg.bank, pair_count=cfg.pairs, rng_seed=cfg.seed, tol=cfg.tol)
    write_json(cfg.out / "certificate.json", cert.to_json())
    print(f"verdict: {'discerning' if cert.verdict else 'NOT discerning'} "
          f"({len(cert.reports)} pairs, {len(cert.failing)} failing)")
    return EXIT_OK if cert.verdict else EXIT_NEGATIVE


def cmd_synth(args) -> int:
    cfg = RunConfig.from_args(args, need_bank=False)
    plant = _require_plant(cfg)
    box = plant.theta_box
    grid = None
    if args.stability_grid:
        axes = [np.linspace(lo, hi, args.stability_grid if hi > lo else 1)
                for lo, hi in zip(box.lower, box.upper)]
        grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(box.n_theta, -1).T
    seed = int(np.random.SeedSequence([cfg.seed, STAGE_SYNTH]).generate_state(1)[0])
    center = None
    if args.center:
        n_xi, n_u, n_y = args.n_xi, plant.n_u, plant.n_y
        c = args.center
        center = ControllerMode(-c * np.eye(n_xi), c * np.ones((n_xi, n_y)),
                                c * np.ones((n_u, n_xi)), c * np.ones((n_u, n_y)))
    try:
        bank = synthesize_bank(plant, n_xi=args.n_xi, n_modes=args.modes, rng_seed=seed,
                               stability_grid=grid, max_attempts=args.attempts,
                               center=center, scale=args.scale,
                               certify_kwargs={"pair_count": cfg.pairs, "tol": cfg.tol})
    except SynthesisError as exc:
        doc = {"error": str(exc), "failing_pairs": [[a.tolist(), b.tolist()] for a, b in exc.failing_pairs]}
        if exc.best_bank is not None:
            doc["best_bank"] = bank_to_dict(exc.best_bank)
        write_json(cfg.out / "synthesis_failure.json", doc)
        print(f"synthesis failed: {exc}")
        return EXIT_NEGATIVE
    write_json(cfg.out / "bank.json", bank_to_dict(bank))
    if grid is not None:
        write_json(cfg.out / "stability.json", stability_check(plant, bank, grid).to_json())
    print(f"wrote bank with {len(bank)} modes")
    return EXIT_OK


def _simulate(cfg: RunConfig, sigma, theta, chi0):
    plant = cfg.plant
    dt = cfg.dt(sigma)
    n = round(sigma.T / dt) + 1
    dim = plant.n_x + plant.n_y
    v = DisturbanceTrack.random(cfg.rng(STAGE_NOISE), sigma.t0, dt, n, dim, cfg.noise_sup)
    z, z_forced = simulate_forced(plant, cfg.bank, sigma, theta, chi0, v)
    return z, z_forced, v


def _theta_chi0(args, cfg: RunConfig, sigma):
    plant = cfg.plant
    theta = _vector(args.theta, plant.n_theta, "theta")
    if theta is None:
        theta = plant.theta_box.center
    if not plant.theta_box.contains(theta):
        raise ConfigError(f"--theta {theta.tolist()} lies outside the uncertainty box")
    n_state = plant.n_x + cfg.bank.n_xi
    chi0 = _vector(args.chi0, n_state, "chi0")
    if chi0 is None:
        chi0 = cfg.rng(STAGE_STATE).standard_normal(n_state)
    return theta, chi0


def cmd_simulate(args) -> int:
    cfg = RunConfig.from_args(args)
    _require_plant(cfg)
    sigma = cfg.signal()
    theta, chi0 = _theta_chi0(args, cfg, sigma)
    z, z_forced, v = _simulate(cfg, sigma, theta, chi0)
    z.to_csv(cfg.out / "trajectory.csv")
    z_forced.to_csv(cfg.out / "trajectory_forced.csv")
    v.to_csv(cfg.out / "disturbance.csv")
    write_json(cfg.out / "simulation.json", {
        "theta": theta.tolist(), "chi0": chi0.tolist(), "signal": signal_to_dict(sigma),
        "dt": z.dt, "noise_sup": v.sup_norm,
    })
    print(f"simulated {z.samples.shape[0]} samples")
    return EXIT_OK


def _envelope(cfg: RunConfig, sigma, args) -> EnvelopeTable:
    if getattr(args, "envelope", None):
        try:
            return EnvelopeTable.from_json(read_json(args.envelope))
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot read envelope file {args.envelope}: {exc}") from exc
    pairs = envelope_pair_set(cfg.plant.theta_box, cfg.rng(STAGE_ENVELOPE), n_random=cfg.pairs)
    return envelope_tables(cfg.plant, cfg.bank, sigma, pairs)


def cmd_envelope(args) -> int:
    cfg = RunConfig.from_args(args)
    _require_plant(cfg)
    env = _envelope(cfg, cfg.signal(), argparse.Namespace())
    write_json(cfg.out / "envelope.json", env.to_json())
    print(f"envelope sampled at {env.distances.size - 1} distances")
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = RunConfig.from_args(args)
    plant = _require_plant(cfg)
    sigma = cfg.signal()
    theta = None
    if args.trajectory:
        try:
            z = Trajectory.from_csv(args.trajectory)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read trajectory {args.trajectory}: {exc}") from exc
        chi0 = _vector(args.chi0, None, "chi0")
        v_sup = cfg.noise_sup
    else:
        theta, chi0 = _theta_chi0(args, cfg, sigma)
        z, _, v = _simulate(cfg, sigma, theta, chi0)
        v_sup = v.sup_norm
    est = MultiModelEstimator(plant, cfg.bank, sigma, epsilon=cfg.epsilon, dt=z.dt).fit()
    try:
        result = est.estimate(z)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    doc = {}
    if chi0 is not None and np.linalg.norm(chi0) > 0:
        env = _envelope(cfg, sigma, args)
        # gamma depends on the true parameter; without it take the worst grid model
        gamma_at = [theta] if theta is not None else list(est.grid_.points)
        gamma = max(gamma_bound(plant, cfg.bank, sigma, th, dt=z.dt) for th in gamma_at)
        result.bound = error_bound(est.grid_.epsilon, env, gamma, v_sup, float(np.linalg.norm(chi0)))
        doc.update(gamma=gamma, envelope=env.to_json())
    doc.update(result.to_json())
    doc.update(epsilon_achieved=est.grid_.epsilon, grid_size=len(est.grid_), noise_sup=v_sup,
               signal=signal_to_dict(sigma))
    if theta is not None:
        doc["theta"] = theta.tolist()
        doc["error"] = float(np.linalg.norm(theta - result.theta_hat))
    write_json(cfg.out / "estimate.json", doc)
    header = [f"theta_{i + 1}" for i in range(plant.n_theta)] + ["delta"]
    write_table(cfg.out / "estimate_grid.csv", header,
                np.column_stack([est.grid_.points, result.delta_values]))
    z.to_csv(cfg.out / "trajectory.csv")
    bound = "n/a" if result.bound is None else f"{result.bound:.6g}"
    print(f"theta_hat = {result.theta_hat.tolist()}  bound = {bound}")
    return EXIT_OK


def cmd_demo_example(args) -> int:
    from .demo import run_demo

    report = run_demo(k1=args.k1, k2=args.k2, seed=args.seed)
    write_json(Path(args.out) / "demo_report.json", report)
    for check in report["checks"]:
        print(f"[{'PASS' if check['passed'] else 'FAIL'}] {check['name']}: {check['detail']}")
    return EXIT_OK if report["passed"] else EXIT_NEGATIVE


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="switchid", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, bank=True, signal=True):
        p.add_argument("--plant", required=True, help="plant JSON")
        if bank:
            p.add_argument("--bank", help="controller bank JSON")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--pairs", type=int, default=100, help="random parameter pairs")
        p.add_argument("--tol", type=float, default=1e-9, help="normalized resultant tolerance")
        if signal:
            p.add_argument("--horizon", type=float, default=4.0)
            p.add_argument("--dwell", type=float, default=None)
            p.add_argument("--steps", type=int, default=2000, help="approximate samples per horizon")

    p = sub.add_parser("certify", help="check that a bank discerns every sampled pair")
    common(p, signal=False)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("synth", help="draw random banks until one certifies")
    common(p, bank=False, signal=False)
    p.add_argument("--n-xi", type=int, default=0, help="controller state dimension")
    p.add_argument("--modes", type=int, default=None, help="number of modes (default 2M+1)")
    p.add_argument("--attempts", type=int, default=20)
    p.add_argument("--center", type=float, default=0.0, help="value every gain entry is drawn around")
    p.add_argument("--scale", type=float, default=1.0, help="standard deviation of the draws")
    p.add_argument("--stability-grid", type=int, default=0, help="points per axis for the Lyapunov screen")
    p.set_defaults(func=cmd_synth)

    for name, func, help_ in (("simulate", cmd_simulate, "simulate the switched loop"),
                              ("estimate", cmd_estimate, "multi-model estimate with error bound")):
        p = sub.add_parser(name, help=help_)
        common(p)
        p.add_argument("--theta", help="true parameter, comma-separated (default box center)")
        p.add_argument("--chi0", help="initial closed-loop state, comma-separated")
        p.add_argument("--noise-sup", type=float, default=0.0, help="sup norm of the disturbance")
        p.set_defaults(func=func)
        if name == "estimate":
            p.add_argument("--epsilon", type=float, default=0.1, help="grid covering radius")
            p.add_argument("--trajectory", help="fit this CSV instead of simulating")
            p.add_argument("--envelope", help="precomputed envelope JSON")

    p = sub.add_parser("envelope", help="sample the comparison functions of parameter distance")
    common(p)
    p.set_defaults(func=cmd_envelope)

    p = sub.add_parser("demo-example", help="run the servo example end to end")
    p.add_argument("--k1", type=float, default=0.5)
    p.add_argument("--k2", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_demo_example)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
