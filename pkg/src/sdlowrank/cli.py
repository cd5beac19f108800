"""Experiment driver for the coupled-flow Monte Carlo pipeline.

Subcommands
-----------
kl-report     eigenvalue decay and truncation diagnostics of the random
              conductivity, plus a few realization dumps
theta-sweep   accuracy/cost sweep of the low-rank solve path over a list
              of compression ratios against the direct baseline
select-theta  energy-based choice of the compression ratio, with the
              Gram spectrum emitted for plotting
convergence   statistical-moment convergence in the sample count against
              a larger direct-path reference run
solve-once    end-to-end solve of a single sample (debug/smoke path)

All outputs are UTF-8 CSV files (plus a key-value report); a line-
delimited ledger records config hash, seed, stage timings and headline
metrics for every run.  Given a fixed config and seed, emitted files are
byte-for-byte reproducible; timing lives only in the ledger.

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 I/O error.
"""

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from .assembly import (
    PerturbationAssembler,
    PhysicalParams,
    SplitSystem,
    apply_dirichlet,
    assemble_mean,
    dirichlet_constraints,
)
from .glram import (
    build_gram,
    build_report,
    factorize,
    numerical_rank,
    rmsre,
    select_theta,
    write_report,
)
from .lowrank_solver import (
    factor_mean,
    save_solutions,
    solve_sample_direct,
    solve_sample_smw,
)
from .mesh import build_mesh
from .randfield import (
    CovarianceKernel,
    build_kl,
    draw_samples,
    realize_conductivity,
)
from .uq import (
    build_xnorm_weights,
    estimate_moments,
    loglog_slope,
    write_moments,
    xnorm,
    xnorm_components,
)

__all__ = [
    "ConfigError",
    "RunConfig",
    "RunLedger",
    "cmd_kl_report",
    "cmd_theta_sweep",
    "cmd_select_theta",
    "cmd_convergence",
    "cmd_solve_once",
    "main",
]


class ConfigError(ValueError):
    """Invalid configuration value or file."""


_SELECT = "select"   # theta_list token meaning "energy-selected ratio"


@dataclass(frozen=True)
class RunConfig:
    """Validated run parameters; round-trips through a key=value file."""

    n: int = 8
    epsilon: float = 0.01
    M: int = 200
    M_ref: int = 400
    m_list: tuple = (25, 50, 100, 200)
    seed: int = 1234
    theta_list: tuple = (1.0, 0.7, 0.5, _SELECT, 0.1, 0.05)
    energy_target: float = 1.0 - 1e-9
    output_dir: str = "runs"
    solver: str = "lowrank"
    nu: float = 1.0
    g: float = 1.0
    alpha: float = 1.0
    z: float = 0.0
    ell2: float = 0.2        # squared correlation length of the covariance
    workers: int = 1
    sample_index: int = 0

    def validate(self):
        if self.n < 2 or self.n % 2 != 0:
            raise ConfigError(f"n must be a positive even integer, got {self.n}")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.M < 1 or self.M_ref < 1:
            raise ConfigError("sample counts must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if not self.m_list or any(int(m) < 1 for m in self.m_list):
            raise ConfigError("m_list must hold positive sample counts")
        if not self.theta_list:
            raise ConfigError("theta_list must be nonempty")
        for t in self.theta_list:
            if t == _SELECT:
                continue
            if not isinstance(t, float) or not 0.0 < t <= 1.0:
                raise ConfigError(f"theta entries must be in (0, 1], got {t!r}")
        if not 0.0 < self.energy_target <= 1.0:
            raise ConfigError(
                f"energy_target must lie in (0, 1], got {self.energy_target}"
            )
        if self.solver not in ("lowrank", "direct"):
            raise ConfigError(f"solver must be lowrank or direct, got {self.solver!r}")
        if self.nu <= 0 or self.g <= 0 or self.alpha <= 0:
            raise ConfigError("nu, g and alpha must be positive")
        if self.ell2 <= 0:
            raise ConfigError("ell2 must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.sample_index < 0:
            raise ConfigError("sample_index must be nonnegative")
        return self

    # -- serialization ----------------------------------------------------
    def to_file(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.canonical_string())

    def canonical_string(self):
        lines = []
        for fld in dataclasses.fields(self):
            value = getattr(self, fld.name)
            lines.append(f"{fld.name} = {_format_value(value)}\n")
        return "".join(lines)

    def config_hash(self):
        return hashlib.sha256(self.canonical_string().encode()).hexdigest()[:16]

    @classmethod
    def from_file(cls, path):
        values = {}
        try:
            with open(path, "r", encoding="utf-8") as f:
                lines = f.readlines()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        field_types = {f.name: f for f in dataclasses.fields(cls)}
        for lineno, raw in enumerate(lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in field_types:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _parse_value(key, val.strip())
        return cls(**values).validate()

    def with_overrides(self, **kwargs):
        updates = {k: v for k, v in kwargs.items() if v is not None}
        return dataclasses.replace(self, **updates).validate()


def _format_value(value):
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(key, text):
    if key == "theta_list":
        return parse_theta_list(text)
    if key == "m_list":
        try:
            return tuple(int(tok) for tok in text.split(",") if tok.strip())
        except ValueError as exc:
            raise ConfigError(f"bad m_list entry in {text!r}") from exc
    example = RunConfig.__dataclass_fields__[key].default
    try:
        if isinstance(example, bool):
            return text.lower() in ("1", "true", "yes")
        if isinstance(example, int):
            return int(text)
        if isinstance(example, float):
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r}") from exc
    return text


def parse_theta_list(text):
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if tok == _SELECT:
            out.append(_SELECT)
        else:
            try:
                out.append(float(tok))
            except ValueError as exc:
                raise ConfigError(f"bad theta entry {tok!r}") from exc
    if not out:
        raise ConfigError("theta_list is empty")
    return tuple(out)


class RunLedger:
    """Append-only line-delimited record of runs."""

    def __init__(self, path):
        self.path = path

    def append(self, record):
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(json.dumps(record, sort_keys=True) + "\n")


class _Stages:
    """Wall-clock bookkeeping per pipeline stage."""

    def __init__(self):
        self.times = {}

    def run(self, name, fn):
        t0 = time.perf_counter()
        result = fn()
        self.times[name] = self.times.get(name, 0.0) + time.perf_counter() - t0
        return result


# ---------------------------------------------------------------------------
# shared pipeline pieces
# ---------------------------------------------------------------------------

def _params(cfg):
    return PhysicalParams(nu=cfg.nu, g=cfg.g, alpha=cfg.alpha, z=cfg.z)


def _build_field(cfg, stages):
    mesh = stages.run("mesh", lambda: build_mesh(n=cfg.n))
    kernel = CovarianceKernel(correlation_length_sq=cfg.ell2)
    kl = stages.run("kl", lambda: build_kl(kernel, mesh, cfg.epsilon))
    return mesh, kl


def _assemble(cfg, mesh, kl, tildes, stages):
    params = _params(cfg)

    def build():
        a_bar, b = assemble_mean(mesh, params, kl.mean_nodal)
        asm = PerturbationAssembler(mesh, params, kbar=kl.mean_nodal)
        a_tildes = [asm.assemble(t) for t in tildes]
        system = SplitSystem(
            A_bar=a_bar, b=b, A_tildes=a_tildes,
            N1=mesh.N1, N2=mesh.N2, N3=mesh.N3,
        )
        return apply_dirichlet(system, dirichlet_constraints(mesh))

    return stages.run("assembly", build)


def _perturbation_fields(kl, samples):
    _, tildes = realize_conductivity(kl, samples.coefficients)
    return tildes


def _ledger(cfg, command, stages, metrics):
    record = {
        "command": command,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "stage_seconds": {k: round(v, 6) for k, v in stages.times.items()},
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    record.update(metrics)
    RunLedger(os.path.join(cfg.output_dir, "ledger.jsonl")).append(record)


def _out(cfg, name):
    os.makedirs(cfg.output_dir, exist_ok=True)
    return os.path.join(cfg.output_dir, name)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_kl_report(cfg):
    """Truncation diagnostics of the random conductivity expansion."""
    stages = _Stages()
    mesh, kl = _build_field(cfg, stages)
    spectrum_path = _out(cfg, "kl_spectrum.csv")
    n_rows = min(max(15, kl.T), kl.spectrum.shape[0])
    total = float(np.sum(kl.spectrum))
    cum = np.cumsum(kl.spectrum) / total
    with open(spectrum_path, "w", encoding="utf-8") as f:
        f.write("t,eigenvalue,energy_ratio\n")
        for t in range(n_rows):
            f.write(f"{t + 1},{kl.spectrum[t]:.12e},{cum[t]:.12e}\n")

    samples = draw_samples(kl, 4, cfg.seed)
    fields, _ = realize_conductivity(kl, samples.coefficients)
    paths = [spectrum_path]
    for i in range(4):
        p = _out(cfg, f"sample_field_{i}.csv")
        with open(p, "w", encoding="utf-8") as f:
            f.write("x,y,conductivity\n")
            for (x, y), v in zip(kl.nodes, fields[i]):
                f.write(f"{x:.12e},{y:.12e},{v:.12e}\n")
        paths.append(p)

    print(f"T={kl.T} rho_T={kl.energy_ratio:.6f} "
          f"(target {1.0 - cfg.epsilon:.6f}, nodes {kl.nodes.shape[0]})")
    for p in paths:
        print(f"wrote {p}")
    _ledger(cfg, "kl-report", stages, {
        "T": kl.T,
        "rho_T": kl.energy_ratio,
        "rejected_fields": samples.rejected_fields,
    })
    return 0


def _resolve_thetas(theta_list, gram, energy_target):
    resolved = []
    for tok in theta_list:
        if tok == _SELECT:
            theta, k = select_theta(gram, energy_target)
            resolved.append((f"{_SELECT}({theta:.6f})", theta))
        else:
            resolved.append((f"{tok}", tok))
    return resolved


def cmd_theta_sweep(cfg):
    """Low-rank accuracy vs. compression against the direct baseline."""
    stages = _Stages()
    mesh, kl = _build_field(cfg, stages)
    samples = draw_samples(kl, cfg.M, cfg.seed)
    tildes = _perturbation_fields(kl, samples)
    system = _assemble(cfg, mesh, kl, tildes, stages)
    weights = build_xnorm_weights(mesh)

    gram = stages.run(
        "gram",
        lambda: build_gram(system.A_tildes, block_dim=mesh.N1 + 2 * mesh.N2),
    )
    direct = stages.run(
        "direct_loop",
        lambda: [solve_sample_direct(system, m) for m in range(cfg.M)],
    )
    ref_moments = estimate_moments(direct, theta=1.0, mesh=mesh)
    mean_factor = stages.run("factor_mean", lambda: factor_mean(system))

    rows = []
    for label, theta in _resolve_thetas(cfg.theta_list, gram, cfg.energy_target):
        try:
            factors = stages.run(
                "factorize", lambda: factorize(gram, system.A_tildes, theta)
            )
            sols = stages.run(
                "smw_loop",
                lambda: [
                    solve_sample_smw(mean_factor, factors, m)
                    for m in range(cfg.M)
                ],
            )
            moments = estimate_moments(sols, theta=factors.theta_effective,
                                       mesh=mesh)
            total, darcy, stokes = xnorm_components(
                moments.mean - ref_moments.mean, weights
            )
            per_sample = float(np.mean([
                xnorm(s.x - d.x, weights) for s, d in zip(sols, direct)
            ]))
            rows.append({
                "theta_requested": label,
                "theta_effective": factors.theta_effective,
                "k": factors.k,
                "rmsre_formula": factors.rmsre,
                "rmsre_direct": rmsre(factors, system.A_tildes),
                "energy_ratio": factors.energy_ratio,
                "err_total": total,
                "err_darcy": darcy,
                "err_stokes": stokes,
                "err_sample_mean": per_sample,
                "storage_reduction": factors.storage_reduction,
                "status": "ok",
            })
        except Exception as exc:  # record the failure, keep sweeping
            rows.append({
                "theta_requested": label,
                "theta_effective": float("nan"),
                "k": 0,
                "rmsre_formula": float("nan"),
                "rmsre_direct": float("nan"),
                "energy_ratio": float("nan"),
                "err_total": float("nan"),
                "err_darcy": float("nan"),
                "err_stokes": float("nan"),
                "err_sample_mean": float("nan"),
                "storage_reduction": float("nan"),
                "status": f"failed: {exc}",
            })

    path = _out(cfg, "theta_sweep.csv")
    cols = ["theta_requested", "theta_effective", "k", "rmsre_formula",
            "rmsre_direct", "energy_ratio", "err_total", "err_darcy",
            "err_stokes", "err_sample_mean", "storage_reduction", "status"]
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(cols) + "\n")
        for row in rows:
            f.write(",".join(_csv_cell(row[c]) for c in cols) + "\n")
    for row in rows:
        print(f"theta={row['theta_requested']} k={row['k']} "
              f"err_total={_csv_cell(row['err_total'])} status={row['status']}")
    print(f"wrote {path}")
    _ledger(cfg, "theta-sweep", stages, {
        "rows": [{k: (v if not isinstance(v, float) else float(v))
                  for k, v in row.items()} for row in rows],
        "rank": numerical_rank(gram),
    })
    return 0


def _csv_cell(value):
    if isinstance(value, float):
        return f"{value:.12e}"
    return str(value)


def cmd_select_theta(cfg):
    """Energy-based compression-ratio choice plus spectrum dump."""
    stages = _Stages()
    mesh, kl = _build_field(cfg, stages)
    samples = draw_samples(kl, cfg.M, cfg.seed)
    tildes = _perturbation_fields(kl, samples)
    system = _assemble(cfg, mesh, kl, tildes, stages)
    gram = stages.run(
        "gram",
        lambda: build_gram(system.A_tildes, block_dim=mesh.N1 + 2 * mesh.N2),
    )
    theta, k = select_theta(gram, cfg.energy_target)
    factors = stages.run(
        "factorize", lambda: factorize(gram, system.A_tildes, theta)
    )
    report = build_report(gram, system.A_tildes, factors)
    txt = _out(cfg, "glram_report.txt")
    csv = _out(cfg, "gram_spectrum.csv")
    write_report(report, txt, csv)

    w = np.clip(gram.eigenvalues, 0.0, None)
    cliff = ""
    if w[0] > 0.0:
        below = np.flatnonzero(w <= 1e-10 * w[0])
        if below.size:
            cliff = (f"; spectral cliff at index {below[0]} "
                     f"(lambda_{below[0] + 1}/lambda_1 = "
                     f"{w[below[0]] / w[0]:.3e})")
    print(f"selected theta={theta:.6f} k={k} "
          f"rank={numerical_rank(gram)}{cliff}")
    print(f"wrote {txt}")
    print(f"wrote {csv}")
    _ledger(cfg, "select-theta", stages, {
        "selected_theta": theta,
        "selected_k": k,
        "rank": numerical_rank(gram),
        "rmsre_direct": report.rmsre_direct,
        "rmsre_formula": report.rmsre_formula,
        "storage_reduction": report.storage_reduction,
    })
    return 0


def cmd_convergence(cfg):
    """Moment convergence in M against a larger direct reference run."""
    m_list = tuple(int(m) for m in cfg.m_list)
    m_max = max(m_list)
    if cfg.M_ref <= m_max:
        raise ConfigError(
            f"M_ref={cfg.M_ref} must exceed the largest entry of "
            f"m_list={m_list}"
        )
    stages = _Stages()
    mesh, kl = _build_field(cfg, stages)
    weights = build_xnorm_weights(mesh)

    # reference: independent sample stream through the direct path
    ref_seed = cfg.seed + 1_000_003
    samples_ref = draw_samples(kl, cfg.M_ref, ref_seed)
    tildes_ref = _perturbation_fields(kl, samples_ref)
    system_ref = _assemble(cfg, mesh, kl, tildes_ref, stages)
    direct = stages.run(
        "direct_loop",
        lambda: [solve_sample_direct(system_ref, m) for m in range(cfg.M_ref)],
    )
    ref = estimate_moments(direct, theta=1.0, mesh=mesh)

    # estimates: nested subsets of one master draw, low-rank path
    samples_est = draw_samples(kl, m_max, cfg.seed)
    tildes_est = _perturbation_fields(kl, samples_est)
    system_est = _assemble(cfg, mesh, kl, tildes_est, stages)
    gram = stages.run(
        "gram",
        lambda: build_gram(system_est.A_tildes,
                           block_dim=mesh.N1 + 2 * mesh.N2),
    )
    theta, k = select_theta(gram, cfg.energy_target)
    factors = stages.run(
        "factorize", lambda: factorize(gram, system_est.A_tildes, theta)
    )
    mean_factor = stages.run("factor_mean", lambda: factor_mean(system_est))
    sols = stages.run(
        "smw_loop",
        lambda: [solve_sample_smw(mean_factor, factors, m)
                 for m in range(m_max)],
    )

    rows = []
    for m in m_list:
        est = estimate_moments(sols[:m], theta=theta, mesh=mesh,
                               reference_mean=ref.mean)
        err_mean = xnorm(est.mean - ref.mean, weights)
        err_var = xnorm(est.variance - ref.variance, weights)
        rows.append((m, err_mean, err_var))

    slope = loglog_slope([r[0] for r in rows], [r[1] for r in rows])
    path = _out(cfg, "convergence.csv")
    with open(path, "w", encoding="utf-8") as f:
        f.write("M,err_mean,err_variance\n")
        for m, em, ev in rows:
            f.write(f"{m},{em:.12e},{ev:.12e}\n")
    write_moments(_out(cfg, "reference_moments.csv"), ref)
    for m, em, ev in rows:
        print(f"M={m} err_mean={em:.6e} err_variance={ev:.6e}")
    print(f"slope={slope:.4f} theta={theta:.6f} k={k}")
    print(f"wrote {path}")
    _ledger(cfg, "convergence", stages, {
        "selected_theta": theta,
        "selected_k": k,
        "slope": slope,
        "errors": [{"M": m, "err_mean": em, "err_variance": ev}
                   for m, em, ev in rows],
    })
    return 0


def cmd_solve_once(cfg):
    """Solve a single sample end to end and dump the solution."""
    stages = _Stages()
    mesh, kl = _build_field(cfg, stages)
    m = cfg.sample_index
    samples = draw_samples(kl, max(m + 1, 1), cfg.seed)
    tildes = _perturbation_fields(kl, samples)
    system = _assemble(cfg, mesh, kl, tildes, stages)
    weights = build_xnorm_weights(mesh)

    if cfg.solver == "direct":
        sol = stages.run("direct_loop", lambda: solve_sample_direct(system, m))
    else:
        gram = stages.run(
            "gram",
            lambda: build_gram(system.A_tildes,
                               block_dim=mesh.N1 + 2 * mesh.N2),
        )
        theta, _ = select_theta(gram, cfg.energy_target)
        factors = stages.run(
            "factorize", lambda: factorize(gram, system.A_tildes, theta)
        )
        mean_factor = stages.run("factor_mean", lambda: factor_mean(system))
        sol = stages.run("smw_loop",
                         lambda: solve_sample_smw(mean_factor, factors, m))

    path = _out(cfg, "solution.csv")
    save_solutions(path, [sol])
    total, darcy, stokes = xnorm_components(sol.x, weights)
    a_m = system.A_bar + system.A_tildes[m]
    resid = float(np.linalg.norm(a_m @ sol.x - system.b)
                  / max(np.linalg.norm(system.b), 1e-300))
    print(f"sample {m} ({cfg.solver}): |x|_X={total:.6e} "
          f"head={darcy:.6e} flow={stokes:.6e} residual={resid:.3e}")
    print(f"wrote {path}")
    _ledger(cfg, "solve-once", stages, {
        "sample_index": m,
        "solver": cfg.solver,
        "xnorm": total,
        "residual": resid,
    })
    return 0


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


_COMMANDS = {
    "kl-report": cmd_kl_report,
    "theta-sweep": cmd_theta_sweep,
    "select-theta": cmd_select_theta,
    "convergence": cmd_convergence,
    "solve-once": cmd_solve_once,
}


def _build_parser():
    parser = _Parser(
        prog="sdlowrank",
        description="Monte Carlo experiments for the coupled free-flow/"
                    "porous-media system with random conductivity.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None,
                       help="key = value config file")
        p.add_argument("--output-dir", default=None)
        p.add_argument("--n", type=int, default=None,
                       help="grid subdivisions per unit length")
        p.add_argument("--epsilon", type=float, default=None,
                       help="truncation tolerance of the random field")
        p.add_argument("--samples", type=int, default=None, dest="M")
        p.add_argument("--ref-samples", type=int, default=None, dest="M_ref")
        p.add_argument("--m-list", default=None,
                       help="comma-separated sample counts for convergence")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--theta-list", default=None,
                       help="comma-separated ratios; 'select' picks by energy")
        p.add_argument("--energy-target", type=float, default=None)
        p.add_argument("--solver", choices=("lowrank", "direct"), default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--sample-index", type=int, default=None)
    return parser


def main(argv=None):
    try:
        args = _build_parser().parse_args(argv)
        cfg = RunConfig()
        if args.config:
            cfg = RunConfig.from_file(args.config)
        overrides = {
            "output_dir": args.output_dir,
            "n": args.n,
            "epsilon": args.epsilon,
            "M": args.M,
            "M_ref": args.M_ref,
            "seed": args.seed,
            "energy_target": args.energy_target,
            "solver": args.solver,
            "workers": args.workers,
            "sample_index": args.sample_index,
        }
        if args.theta_list is not None:
            overrides["theta_list"] = parse_theta_list(args.theta_list)
        if args.m_list is not None:
            overrides["m_list"] = _parse_value("m_list", args.m_list)
        cfg = cfg.with_overrides(**overrides)
        return _COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (np.linalg.LinAlgError, RuntimeError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
