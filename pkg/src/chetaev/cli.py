"""Command-line front end: batch escape experiments, certifiers, and replay.

Subcommands::

    run      batch of independent trials, one trajectory CSV per trial plus
             a summary file
    sweep    the same, on a fixed grid of step sizes
    certify  sampling certifiers on a built-in problem, one report file each
    replay   re-verify a trajectory CSV (update exactness + increment audit)

Configuration comes from flags, optionally seeded by a flat ``key = value``
config file (``--config`` or the ``CHETAEV_CONFIG`` environment variable;
flags win). Exit codes: 0 success, 2 configuration error, 3 file/IO error,
4 audit violation on replay.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .certifiers import (
    SATISFIED,
    audit_chetaev,
    certify_subregularity,
    certify_verdier,
    probe_local_min,
    write_report,
)
from .dynamics import (
    ESCAPED,
    NumericalBlowupError,
    Trajectory,
    initial_radius_mode,
    read_trajectory_csv,
    run,
    sample_alpha,
    sample_initial,
    trajectory_from_table,
    verify_update_exactness,
    write_trajectory_csv,
)
from .linalg import FileFormatError, format_float, read_matrix_csv
from .problems import PROBLEM_IDS, make_problem

__all__ = [
    "ExperimentConfig",
    "TrialResult",
    "SweepSummary",
    "run_experiment",
    "write_summary_csv",
    "read_summary_csv",
    "main",
]

#: default step-size ranges per problem id
DEFAULT_ALPHA_RANGE = {
    "relu-l1": (0.05, 0.15),
    "abs-control": (0.05, 0.15),
    "verdier-fail": (0.05, 0.15),
    "rpca-l1": (0.001, 0.01),
    "rpca": (0.001, 0.01),
}

_ENV_CONFIG = "CHETAEV_CONFIG"

#: canonical order fixes each certifier's RNG stream regardless of selection
SAMPLING_CERTIFIERS = ("subregularity", "verdier", "local-min")


@dataclass
class ExperimentConfig:
    """Settings for one batch of independent trials."""

    problem: str = "relu-l1"
    matrix: str | None = None
    rank: int = 2
    trials: int = 5
    alpha_lo: float | None = None
    alpha_hi: float | None = None
    init_rel_radius: float = 1e-3
    eps_escape: float | None = None
    max_iters: int = 100_000
    seed: int = 0

    def resolved_alpha(self) -> tuple[float, float]:
        lo, hi = DEFAULT_ALPHA_RANGE.get(self.problem, (0.05, 0.15))
        lo = self.alpha_lo if self.alpha_lo is not None else lo
        hi = self.alpha_hi if self.alpha_hi is not None else hi
        return lo, hi

    def validate(self) -> None:
        lo, hi = self.resolved_alpha()
        if not 0.0 < lo <= hi:
            raise ValueError(f"need 0 < alpha_lo <= alpha_hi, got [{lo}, {hi}]")
        if self.trials < 1:
            raise ValueError(f"trials must be at least 1, got {self.trials}")
        if self.init_rel_radius <= 0.0:
            raise ValueError(
                f"initial radius must be positive, got {self.init_rel_radius}"
            )
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be at least 1, got {self.max_iters}")
        if self.seed < 0:
            raise ValueError(f"seed must be nonnegative, got {self.seed}")
        if self.eps_escape is not None and self.eps_escape <= 0.0:
            raise ValueError(f"escape radius must be positive, got {self.eps_escape}")


@dataclass(frozen=True)
class TrialResult:
    trial: int
    outcome: str
    outcome_k: int
    alpha: float
    final_f: float
    final_C: float
    final_dS: float
    final_ref_dist: float

    @classmethod
    def from_trajectory(cls, trial: int, traj: Trajectory) -> "TrialResult":
        k = traj.outcome_k
        return cls(
            trial=trial,
            outcome=traj.outcome,
            outcome_k=k,
            alpha=traj.alpha,
            final_f=float(traj.fs[k]),
            final_C=float(traj.cs[k]),
            final_dS=float(traj.ds[k]),
            final_ref_dist=float(traj.ref_dists[k]),
        )


@dataclass
class SweepSummary:
    """Per-trial outcomes of one batch plus the aggregate escape fraction."""

    problem: str
    trials: int
    alpha_lo: float
    alpha_hi: float
    init_rel_radius: float
    init_radius_mode: str
    eps_escape: float
    max_iters: int
    seed: int
    rows: list[TrialResult] = field(default_factory=list)

    @property
    def escaped_trials(self) -> int:
        return sum(1 for r in self.rows if r.outcome == ESCAPED)

    @property
    def escape_fraction(self) -> float:
        return self.escaped_trials / len(self.rows) if self.rows else 0.0


def _load_matrix(cfg: ExperimentConfig):
    if cfg.matrix is None:
        return None
    return read_matrix_csv(cfg.matrix)


def make_problem_from_config(cfg: ExperimentConfig):
    return make_problem(cfg.problem, matrix=_load_matrix(cfg), rank=cfg.rank)


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: str | os.PathLike | None = None,
    problem=None,
    fixed_alpha: float | None = None,
    seed_prefix: tuple[int, ...] = (),
) -> SweepSummary:
    """Execute `cfg.trials` independent runs; optionally write files.

    Each trial draws from its own generator keyed by (seed, trial index), so
    results do not depend on execution order and rerunning any prefix
    reproduces the same trials. With `out_dir` set, one ``trial_<idx>.csv``
    per trial and a ``summary.csv`` are written.
    """
    cfg.validate()
    if problem is None:
        problem = make_problem_from_config(cfg)
    lo, hi = cfg.resolved_alpha()
    eps = cfg.eps_escape if cfg.eps_escape is not None else problem.default_escape_radius
    out_path = None
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)

    rows: list[TrialResult] = []
    for trial in range(cfg.trials):
        rng = np.random.default_rng((cfg.seed, *seed_prefix, trial))
        alpha = fixed_alpha if fixed_alpha is not None else sample_alpha(lo, hi, rng)
        x0 = sample_initial(problem, cfg.init_rel_radius, rng)
        traj = run(problem, x0, alpha, eps, cfg.max_iters)
        rows.append(TrialResult.from_trajectory(trial, traj))
        if out_path is not None:
            write_trajectory_csv(out_path / f"trial_{trial}.csv", traj)

    summary = SweepSummary(
        problem=problem.name,
        trials=cfg.trials,
        alpha_lo=lo if fixed_alpha is None else fixed_alpha,
        alpha_hi=hi if fixed_alpha is None else fixed_alpha,
        init_rel_radius=cfg.init_rel_radius,
        init_radius_mode=initial_radius_mode(problem),
        eps_escape=eps,
        max_iters=cfg.max_iters,
        seed=cfg.seed,
        rows=rows,
    )
    if out_path is not None:
        write_summary_csv(out_path / "summary.csv", summary)
    return summary


_SUMMARY_HEADER = "trial,outcome,outcome_k,alpha,final_f,final_C,final_dS,final_ref_dist"


def write_summary_csv(path, summary: SweepSummary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# problem = {summary.problem}\n")
        fh.write(f"# trials = {summary.trials}\n")
        fh.write(f"# alpha_lo = {format_float(summary.alpha_lo)}\n")
        fh.write(f"# alpha_hi = {format_float(summary.alpha_hi)}\n")
        fh.write(f"# init_rel_radius = {format_float(summary.init_rel_radius)}\n")
        fh.write(f"# init_radius_mode = {summary.init_radius_mode}\n")
        fh.write(f"# eps_escape = {format_float(summary.eps_escape)}\n")
        fh.write(f"# max_iters = {summary.max_iters}\n")
        fh.write(f"# seed = {summary.seed}\n")
        fh.write(f"# escaped_trials = {summary.escaped_trials}\n")
        fh.write(f"# escape_fraction = {format_float(summary.escape_fraction)}\n")
        fh.write(_SUMMARY_HEADER + "\n")
        for r in summary.rows:
            fh.write(
                f"{r.trial},{r.outcome},{r.outcome_k},{format_float(r.alpha)},"
                f"{format_float(r.final_f)},{format_float(r.final_C)},"
                f"{format_float(r.final_dS)},{format_float(r.final_ref_dist)}\n"
            )


def read_summary_csv(path) -> SweepSummary:
    meta: dict[str, str] = {}
    rows: list[TrialResult] = []
    saw_header = False
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
                continue
            if not saw_header:
                if line != _SUMMARY_HEADER:
                    raise FileFormatError(f"{path}: unexpected summary header {line!r}")
                saw_header = True
                continue
            cells = line.split(",")
            if len(cells) != 8:
                raise FileFormatError(f"{path}: bad summary row {line!r}")
            rows.append(
                TrialResult(
                    trial=int(cells[0]),
                    outcome=cells[1],
                    outcome_k=int(cells[2]),
                    alpha=float(cells[3]),
                    final_f=float(cells[4]),
                    final_C=float(cells[5]),
                    final_dS=float(cells[6]),
                    final_ref_dist=float(cells[7]),
                )
            )
    if not saw_header:
        raise FileFormatError(f"{path}: missing summary header")
    try:
        return SweepSummary(
            problem=meta["problem"],
            trials=int(meta["trials"]),
            alpha_lo=float(meta["alpha_lo"]),
            alpha_hi=float(meta["alpha_hi"]),
            init_rel_radius=float(meta["init_rel_radius"]),
            init_radius_mode=meta["init_radius_mode"],
            eps_escape=float(meta["eps_escape"]),
            max_iters=int(meta["max_iters"]),
            seed=int(meta["seed"]),
            rows=rows,
        )
    except KeyError as exc:
        raise FileFormatError(f"{path}: missing summary field {exc}") from None


# ---------------------------------------------------------------------------
# configuration plumbing


def load_config_file(path) -> dict[str, str]:
    """Parse a flat ``key = value`` config file."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise FileFormatError(f"{path}: line {lineno} is not 'key = value'")
            values[key.strip()] = value.strip()
    return values


_CONFIG_PARSERS = {
    "problem": str,
    "matrix": str,
    "rank": int,
    "trials": int,
    "alpha_lo": float,
    "alpha_hi": float,
    "init_rel_radius": float,
    "eps_escape": float,
    "max_iters": int,
    "seed": int,
    "out_dir": str,
}


def _config_from_args(args: argparse.Namespace) -> tuple[ExperimentConfig, str]:
    """Merge config file values (if any) under explicit flags."""
    file_values: dict[str, object] = {}
    config_path = args.config or os.environ.get(_ENV_CONFIG)
    if config_path:
        for key, text in load_config_file(config_path).items():
            if key not in _CONFIG_PARSERS:
                raise ValueError(f"unknown config key {key!r} in {config_path}")
            try:
                file_values[key] = _CONFIG_PARSERS[key](text)
            except ValueError:
                raise ValueError(
                    f"bad value for {key!r} in {config_path}: {text!r}"
                ) from None

    def pick(name: str, default):
        flag = getattr(args, name, None)
        if flag is not None:
            return flag
        if name in file_values:
            return file_values[name]
        return default

    cfg = ExperimentConfig(
        problem=pick("problem", "relu-l1"),
        matrix=pick("matrix", None),
        rank=pick("rank", 2),
        trials=pick("trials", 5),
        alpha_lo=pick("alpha_lo", None),
        alpha_hi=pick("alpha_hi", None),
        init_rel_radius=pick("init_rel_radius", 1e-3),
        eps_escape=pick("eps_escape", None),
        max_iters=pick("max_iters", 100_000),
        seed=pick("seed", 0),
    )
    out_dir = pick("out_dir", "out")
    cfg.validate()
    return cfg, out_dir


# ---------------------------------------------------------------------------
# subcommands


def cmd_run(args: argparse.Namespace) -> int:
    cfg, out_dir = _config_from_args(args)
    summary = run_experiment(cfg, out_dir=out_dir)
    for r in summary.rows:
        print(
            f"trial {r.trial}: {r.outcome} at k={r.outcome_k} "
            f"(alpha={r.alpha:.6g}, C={r.final_C:.6g}, dS={r.final_dS:.6g})"
        )
    print(
        f"escaped {summary.escaped_trials}/{summary.trials} trials "
        f"(fraction {summary.escape_fraction:.3g}); outputs in {out_dir}"
    )
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg, out_dir = _config_from_args(args)
    grid_points = args.grid_points
    if grid_points < 1:
        raise ValueError(f"grid points must be at least 1, got {grid_points}")
    lo, hi = cfg.resolved_alpha()
    grid = np.linspace(lo, hi, grid_points)
    problem = make_problem_from_config(cfg)
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    lines = []
    for g, alpha in enumerate(grid):
        summary = run_experiment(
            cfg,
            out_dir=out_path / f"alpha_{g}",
            problem=problem,
            fixed_alpha=float(alpha),
            seed_prefix=(g,),
        )
        lines.append(
            f"{format_float(float(alpha))},{summary.escaped_trials},"
            f"{summary.trials},{format_float(summary.escape_fraction)}"
        )
        print(
            f"alpha={alpha:.6g}: escaped {summary.escaped_trials}/{summary.trials}"
        )
    with open(out_path / "sweep.csv", "w", encoding="utf-8") as fh:
        fh.write(f"# problem = {problem.name}\n")
        fh.write(f"# seed = {cfg.seed}\n")
        fh.write("alpha,escaped,trials,escape_fraction\n")
        for line in lines:
            fh.write(line + "\n")
    print(f"sweep summary in {out_path / 'sweep.csv'}")
    return 0


def cmd_certify(args: argparse.Namespace) -> int:
    cfg, out_dir = _config_from_args(args)
    requested = args.certifiers or list(SAMPLING_CERTIFIERS)
    for name in requested:
        if name not in SAMPLING_CERTIFIERS:
            raise ValueError(
                f"unknown certifier {name!r}; known: {', '.join(SAMPLING_CERTIFIERS)}"
            )
    problem = make_problem_from_config(cfg)
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    worst_ok = True
    for name in requested:
        stream = SAMPLING_CERTIFIERS.index(name)
        rng = np.random.default_rng((cfg.seed, stream))
        if name == "subregularity":
            report = certify_subregularity(problem, args.samples, rng)
        elif name == "verdier":
            report = certify_verdier(problem, args.samples, rng)
        else:
            report = probe_local_min(problem, args.samples, rng)
        path = out_path / f"report_{name}.txt"
        write_report(path, report)
        print(
            f"{name}: {report.verdict} (statistic = {report.statistic:.9g}, "
            f"samples = {report.samples}) -> {path}"
        )
        worst_ok = worst_ok and report.verdict != "violated"
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    cfg, _ = _config_from_args(args)
    table = read_trajectory_csv(args.trajectory)
    problem = make_problem_from_config(cfg)
    if table.problem_name is not None and table.problem_name != problem.name:
        raise ValueError(
            f"trajectory was recorded for problem {table.problem_name!r}, "
            f"got {problem.name!r}"
        )
    if table.xs is not None and table.xs.shape[1] != problem.dim:
        raise ValueError(
            f"trajectory has {table.xs.shape[1]} coordinates, problem has dim "
            f"{problem.dim}"
        )
    ok, bad_row = verify_update_exactness(problem, table)
    if not ok:
        print(f"Violated: update exactness fails at step {bad_row} "
              f"(row {bad_row + 1} does not equal row {bad_row} minus alpha * v)")
        return 4
    traj = trajectory_from_table(problem, table)
    report = audit_chetaev(problem, traj)
    checked = int(report.details["steps_checked"])
    if report.verdict == SATISFIED:
        print(f"Satisfied: update exactness and increment bound hold "
              f"({table.n_rows} rows, {checked} steps audited)")
        return 0
    bad = int(report.details["first_violation_k"])
    print(f"Violated: increment bound fails at step {bad}")
    return 4


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", choices=list(PROBLEM_IDS) + ["rpca"], default=None,
                   help="built-in problem id")
    p.add_argument("--matrix", default=None, help="data matrix CSV (rpca-l1 only)")
    p.add_argument("--rank", type=int, default=None, help="factorization rank (rpca-l1)")
    p.add_argument("--seed", type=int, default=None, help="master seed (nonnegative)")
    p.add_argument("--out-dir", dest="out_dir", default=None, help="output directory")
    p.add_argument("--config", default=None,
                   help=f"flat key = value config file (or ${_ENV_CONFIG})")


def _add_experiment(p: argparse.ArgumentParser) -> None:
    p.add_argument("--trials", type=int, default=None, help="number of independent trials")
    p.add_argument("--alpha-lo", dest="alpha_lo", type=float, default=None,
                   help="step-size range lower end")
    p.add_argument("--alpha-hi", dest="alpha_hi", type=float, default=None,
                   help="step-size range upper end")
    p.add_argument("--init-rel-radius", dest="init_rel_radius", type=float, default=None,
                   help="initial ball radius relative to |x*| (absolute when x* = 0)")
    p.add_argument("--escape-radius", dest="eps_escape", type=float, default=None,
                   help="escape ball radius (problem default when omitted)")
    p.add_argument("--max-iters", dest="max_iters", type=int, default=None,
                   help="iteration cap per trial")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chetaev",
        description="Constant-step subgradient escape experiments and "
                    "instability certificates",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a batch of independent trials")
    _add_common(p_run)
    _add_experiment(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run trials over a step-size grid")
    _add_common(p_sweep)
    _add_experiment(p_sweep)
    p_sweep.add_argument("--grid-points", dest="grid_points", type=int, default=5,
                         help="number of grid points across [alpha_lo, alpha_hi]")
    p_sweep.set_defaults(func=cmd_sweep)

    p_cert = sub.add_parser("certify", help="run sampling certifiers")
    _add_common(p_cert)
    p_cert.add_argument("certifiers", nargs="*",
                        help=f"which certifiers ({', '.join(SAMPLING_CERTIFIERS)}); "
                             "all when omitted")
    p_cert.add_argument("--samples", type=int, default=10_000,
                        help="sample count per certifier")
    p_cert.set_defaults(func=cmd_certify)

    p_replay = sub.add_parser("replay", help="re-verify a trajectory CSV")
    _add_common(p_replay)
    p_replay.add_argument("trajectory", help="trajectory CSV produced by run")
    p_replay.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalBlowupError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
