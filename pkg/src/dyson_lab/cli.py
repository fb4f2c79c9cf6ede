"""Command line entry point and experiment orchestration.

Subcommands mirror the library: ``solve-dyson``, ``stability``,
``density`` and ``simulate {radius,locallaw,circlaw,deloc,girko,cubic}``.
Reports embed the resolved configuration and a hash of the package
sources, are written atomically, and re-running an embedded
configuration reproduces the report except for its timestamp.

Exit codes: 0 success, 1 a result contract failed, 2 configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .density import QuadratureOptions, sigma_radial
from .ensemble import RadialBump, SampleSpec, sample_matrix
from .errors import ConfigError, NumericalError, ProfileError, RegimeError
from .experiments import (circular_law_experiment, cubic_residual_experiment,
                          delocalization_check, girko_refinement,
                          local_law_experiment, spectral_radius_experiment)
from .profiles import (VarianceProfile, make_profile, normalize,
                       profile_from_json)
from .solver import SolverOptions, assemble_matrices, solve_dyson, solution_as_dict
from .stability import stability_spectrum

SIMULATE_KINDS = ("radius", "locallaw", "circlaw", "deloc", "girko", "cubic")

_CONFIG_KEYS = {
    "command", "simulate", "profile", "z_re", "z_im", "eta", "tol", "damping",
    "n", "trials", "seed", "out", "rmax", "dr", "a", "grid", "threads",
    "quiet", "format",
}


@dataclasses.dataclass
class RunConfig:
    command: str
    simulate: str | None = None
    profile: str = "flat:64"
    z_re: float = 0.0
    z_im: float = 0.0
    eta: float | None = None
    tol: float = 1e-12
    damping: float = 0.5
    n: str | None = None
    trials: int = 10
    seed: int = 1
    out: str | None = None
    rmax: float = 1.5
    dr: float = 0.005
    a: float = 0.0
    grid: int = 200
    threads: int = 1
    quiet: bool = False
    format: str = "json"

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        unknown = set(doc) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "command" not in doc:
            raise ConfigError("config must specify a command")
        return cls(**doc)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def parse_profile_spec(spec: str) -> VarianceProfile:
    """Profile from inline shorthand or a JSON file path.

    Shorthands: ``flat:N``, ``two_block:N:a,b,c``, ``smooth_kernel:N[:amp]``.
    """
    if os.path.exists(spec):
        try:
            return profile_from_json(Path(spec).read_text())
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"cannot parse profile file {spec}: {exc}") from exc
    parts = spec.split(":")
    kind = parts[0]
    try:
        if kind == "flat" and len(parts) == 2:
            return make_profile("flat", int(parts[1]))
        if kind == "two_block" and len(parts) == 3:
            a, b, c = (float(x) for x in parts[2].split(","))
            return make_profile("two_block", int(parts[1]), {"a": a, "b": b, "c": c})
        if kind == "smooth_kernel" and len(parts) in (2, 3):
            params = {"amplitude": float(parts[2])} if len(parts) == 3 else {}
            return make_profile("smooth_kernel", int(parts[1]), params)
    except (ValueError, ProfileError) as exc:
        raise ConfigError(f"invalid profile spec {spec!r}: {exc}") from exc
    raise ConfigError(f"invalid profile spec {spec!r}")


def _json_ready(obj):
    """Recursively convert numpy scalars/arrays and complex numbers."""
    if isinstance(obj, dict):
        return {str(k): _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_ready(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.complexfloating, complex)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    return obj


def source_hash() -> str:
    """Hash of the package sources; identical builds give identical reports."""
    digest = hashlib.sha256()
    root = Path(__file__).parent
    for path in sorted(root.glob("*.py")):
        digest.update(path.name.encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()[:16]


def atomic_write_text(path: str | Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def build_report(config: RunConfig, results: dict, contracts: dict | None = None) -> dict:
    return _json_ready({
        "config": config.to_dict(),
        "version": __version__,
        "version_hash": source_hash(),
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "results": results,
        "contracts": contracts or {},
    })


def _emit(config: RunConfig, report: dict):
    text = json.dumps(report, indent=2, sort_keys=True)
    if config.out:
        atomic_write_text(config.out, text + "\n")
        if not config.quiet:
            print(f"wrote {config.out}")
    elif not config.quiet:
        print(text)


def _solver_options(config: RunConfig) -> SolverOptions:
    return SolverOptions(tol=config.tol, damping=config.damping)


def _z(config: RunConfig) -> complex:
    return complex(config.z_re, config.z_im)


def _require_eta(config: RunConfig) -> float:
    if config.eta is None:
        raise ConfigError("this command requires --eta")
    return config.eta


def _n_list(config: RunConfig, default: list[int]) -> list[int]:
    if config.n is None:
        return default
    try:
        return [int(x) for x in str(config.n).split(",")]
    except ValueError as exc:
        raise ConfigError(f"invalid --n value {config.n!r}") from exc


def _single_n(config: RunConfig, default: int) -> int:
    values = _n_list(config, [default])
    if len(values) != 1:
        raise ConfigError("this command takes a single --n value")
    return values[0]


def _cmd_solve_dyson(config: RunConfig) -> tuple[dict, dict]:
    profile = parse_profile_spec(config.profile)
    sol = solve_dyson(profile, _z(config), _require_eta(config),
                      _solver_options(config))
    return solution_as_dict(sol), {}


def _cmd_stability(config: RunConfig) -> tuple[dict, dict]:
    profile = parse_profile_spec(config.profile)
    sol = solve_dyson(profile, _z(config), _require_eta(config),
                      _solver_options(config))
    spec = stability_spectrum(assemble_matrices(sol), sol, profile)
    results = {
        "beta": spec.beta, "beta_star": spec.beta_star, "psi": spec.psi,
        "overlap_B": spec.overlap_B, "overlap_B_star": spec.overlap_B_star,
        "e_minus_B": spec.e_minus_B, "e_minus_B_star": spec.e_minus_B_star,
        "gap_third": spec.gap_third, "regime": spec.regime,
        "degenerate": spec.degenerate, "rho": spec.rho,
    }
    return results, {}


def _cmd_density(config: RunConfig) -> tuple[dict, dict]:
    profile = normalize(parse_profile_spec(config.profile))
    count = int(round(config.rmax / config.dr)) + 1
    grid = np.linspace(0.0, config.dr * (count - 1), count)
    prof = sigma_radial(profile, grid=grid,
                        quad=QuadratureOptions(solver=_solver_options(config)))
    rows = ["r,L,sigma"]
    rows += [f"{r:.17g},{L:.17g},{s:.17g}" for r, L, s in
             zip(prof.radii, prof.L_values, prof.sigma_values)]
    csv_text = "\n".join(rows) + "\n"
    if config.out:
        atomic_write_text(str(config.out) + ".csv", csv_text)
    results = {
        "total_mass": prof.total_mass,
        "support_radius_estimate": prof.support_radius_estimate,
        "sigma_min_unclipped": prof.sigma_min_unclipped,
        "csv": None if config.out else csv_text,
    }
    return results, {}


def _cmd_simulate(config: RunConfig) -> tuple[dict, dict]:
    profile = normalize(parse_profile_spec(config.profile))
    kind = config.simulate
    z = _z(config)
    if kind == "radius":
        report = spectral_radius_experiment(
            profile, "complex_gaussian", _n_list(config, [128, 256, 512]),
            config.trials, config.seed, threads=config.threads)
    elif kind == "locallaw":
        report = local_law_experiment(
            profile, _n_list(config, [128, 256, 512]), config.trials,
            config.seed, z=z if z != 0 else 1.0, threads=config.threads)
    elif kind == "circlaw":
        report = circular_law_experiment(
            profile, z, config.a, RadialBump(), _single_n(config, 256),
            config.trials, config.seed, threads=config.threads)
    elif kind == "deloc":
        report = delocalization_check(profile, _single_n(config, 512),
                                      config.trials, config.seed,
                                      threads=config.threads)
    elif kind == "girko":
        n = _single_n(config, 64)
        X = sample_matrix(SampleSpec(profile, "complex_gaussian",
                                     config.seed, 0))
        bump = RadialBump(center=z if z != 0 else 0.35 + 0.1j, radius=0.5)
        report = girko_refinement(X, bump, grids=(config.grid, 2 * config.grid))
    elif kind == "cubic":
        eta_of_n = (lambda n: config.eta) if config.eta is not None else None
        report = cubic_residual_experiment(
            profile, z if z != 0 else np.sqrt(0.99), _n_list(config, [128, 512]),
            config.trials, config.seed, eta_of_n=eta_of_n,
            threads=config.threads)
    else:
        raise ConfigError(f"unknown simulate kind {kind!r}")
    return report.to_json_dict(), dict(report.contracts)


_DISPATCH = {
    "solve-dyson": _cmd_solve_dyson,
    "stability": _cmd_stability,
    "density": _cmd_density,
    "simulate": _cmd_simulate,
}


def run(config: RunConfig) -> int:
    """Execute one configuration; returns the process exit code."""
    if config.command not in _DISPATCH:
        raise ConfigError(f"unknown command {config.command!r}")
    if config.command == "simulate" and config.simulate not in SIMULATE_KINDS:
        raise ConfigError(f"unknown simulate kind {config.simulate!r}")
    results, contracts = _DISPATCH[config.command](config)
    report = build_report(config, results, contracts)
    _emit(config, report)
    return 0 if all(bool(v) for v in contracts.values()) else 1


def _load_config_file(path: str) -> dict:
    text = Path(path).read_text()
    if path.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            try:
                import tomli as tomllib
            except ModuleNotFoundError as exc:
                raise ConfigError("TOML support requires Python 3.11+ or tomli") from exc
        return tomllib.loads(text)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyson-lab",
        description="Self-consistent Dyson equation laboratory for random "
                    "matrices with a variance profile")
    parser.add_argument("--config", help="JSON or TOML file with a full run config")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command")

    def common(p, eta_required=False):
        p.add_argument("--profile", default="flat:64")
        p.add_argument("--z-re", type=float, default=0.0, dest="z_re")
        p.add_argument("--z-im", type=float, default=0.0, dest="z_im")
        p.add_argument("--eta", type=float, required=eta_required)
        p.add_argument("--tol", type=float, default=1e-12)
        p.add_argument("--damping", type=float, default=0.5)
        p.add_argument("--out")
        # globals, repeated so they may follow the subcommand
        p.add_argument("--config", default=argparse.SUPPRESS)
        p.add_argument("--threads", type=int, default=argparse.SUPPRESS)
        p.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    p = sub.add_parser("solve-dyson", help="solve the two-vector equation at one point")
    common(p, eta_required=True)
    p = sub.add_parser("stability", help="unstable directions of the stability map")
    common(p, eta_required=True)
    p = sub.add_parser("density", help="radial density and potential table")
    common(p)
    p.add_argument("--rmax", type=float, default=1.5)
    p.add_argument("--dr", type=float, default=0.005)
    p = sub.add_parser("simulate", help="Monte Carlo experiments")
    p.add_argument("simulate", choices=SIMULATE_KINDS)
    common(p)
    p.add_argument("--n", help="dimension or comma-separated list")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--a", type=float, default=0.0)
    p.add_argument("--grid", type=int, default=200)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        doc = {k: v for k, v in vars(args).items()
               if v is not None and k != "config"}
        if getattr(args, "config", None):
            file_doc = _load_config_file(args.config)
            file_doc.update({k: v for k, v in doc.items() if k != "command" or v})
            doc = file_doc
        if not doc.get("command"):
            raise ConfigError("no command given; see --help")
        config = RunConfig.from_dict(doc)
        return run(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ProfileError, RegimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
