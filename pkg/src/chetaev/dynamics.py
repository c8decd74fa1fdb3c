"""Constant-step subgradient iteration, trajectory recording, and stopping logic.

The update is ``x_{k+1} = x_k - alpha * v_k`` with ``v_k`` the oracle's
subgradient selection at ``x_k``. A run stops when an iterate leaves the
closed escape ball around the reference point, lands exactly on the critical
manifold (where the selection may stall), or hits the iteration cap. Every
iterate is logged with its objective, Chetaev value, distance to the
critical manifold, and the selection used, so any trajectory can be replayed
and re-audited from its record alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import FileFormatError, format_float
from .problem import ProblemOracle

__all__ = [
    "ESCAPED",
    "MAX_ITERS",
    "STALLED",
    "BLOWUP",
    "StepRecord",
    "Trajectory",
    "NumericalBlowupError",
    "run",
    "sample_initial",
    "sample_alpha",
    "sample_on_sphere",
    "sample_in_ball",
    "initial_radius_mode",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "TrajectoryTable",
    "verify_update_exactness",
    "trajectory_from_table",
]

ESCAPED = "escaped"
MAX_ITERS = "max_iters"
STALLED = "stalled_on_critical"
BLOWUP = "blowup"


@dataclass(frozen=True)
class StepRecord:
    """One logged iterate: index, point, observables, and the selection used.

    `v` is the subgradient selection consumed by the step leaving this
    iterate; it is None on the final record of a trajectory, which never
    stepped.
    """

    k: int
    x: np.ndarray
    f: float
    C: float
    dS: float
    v: np.ndarray | None
    alpha: float


@dataclass(frozen=True)
class Trajectory:
    """Columnar record of one run.

    ``xs`` has one row per iterate; ``vs`` has one row per step, so exactly
    one fewer. ``outcome`` is one of ESCAPED, MAX_ITERS, STALLED (or BLOWUP
    on the partial trajectory carried by :class:`NumericalBlowupError`), and
    ``outcome_k`` the index of the final iterate.
    """

    problem_name: str
    alpha: float
    eps_escape: float
    xs: np.ndarray
    fs: np.ndarray
    cs: np.ndarray
    ds: np.ndarray
    ref_dists: np.ndarray
    vs: np.ndarray
    outcome: str
    outcome_k: int

    @property
    def n_records(self) -> int:
        return self.xs.shape[0]

    @property
    def n_steps(self) -> int:
        return self.vs.shape[0]

    def record(self, k: int) -> StepRecord:
        v = self.vs[k] if k < self.n_steps else None
        return StepRecord(k, self.xs[k], float(self.fs[k]), float(self.cs[k]),
                          float(self.ds[k]), v, self.alpha)

    @property
    def records(self) -> list[StepRecord]:
        return [self.record(k) for k in range(self.n_records)]

    @property
    def escaped(self) -> bool:
        return self.outcome == ESCAPED

    @property
    def final_x(self) -> np.ndarray:
        return self.xs[-1]


class NumericalBlowupError(RuntimeError):
    """An iterate became non-finite; carries the trajectory up to that point."""

    def __init__(self, message: str, trajectory: Trajectory):
        super().__init__(message)
        self.trajectory = trajectory


def _freeze(problem, alpha, eps, xs, fs, cs, ds, rs, vs, n_rows, outcome):
    return Trajectory(
        problem_name=problem.name,
        alpha=alpha,
        eps_escape=eps,
        xs=xs[:n_rows].copy(),
        fs=fs[:n_rows].copy(),
        cs=cs[:n_rows].copy(),
        ds=ds[:n_rows].copy(),
        ref_dists=rs[:n_rows].copy(),
        vs=vs[: max(n_rows - 1, 0)].copy(),
        outcome=outcome,
        outcome_k=n_rows - 1,
    )


def run(
    problem: ProblemOracle,
    x0,
    alpha: float,
    eps_escape: float,
    max_iters: int,
) -> Trajectory:
    """Iterate the constant-step subgradient method from `x0`.

    Stops with ESCAPED at the first iterate strictly outside the closed ball
    of radius `eps_escape` around the reference point, with STALLED at the
    first iterate exactly on the critical manifold, or with MAX_ITERS once
    `max_iters` steps have been taken. Raises
    :class:`NumericalBlowupError` carrying the finite prefix if an iterate
    becomes non-finite.
    """
    if alpha <= 0.0:
        raise ValueError(f"step size must be positive, got {alpha}")
    if eps_escape <= 0.0:
        raise ValueError(f"escape radius must be positive, got {eps_escape}")
    if max_iters < 0:
        raise ValueError(f"iteration cap must be nonnegative, got {max_iters}")
    x = np.array(x0, dtype=np.float64, copy=True)
    if x.shape != (problem.dim,):
        raise ValueError(f"x0 must have shape ({problem.dim},), got {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("x0 must be finite")

    observe = problem.observe
    subgradient = problem.subgradient
    isfinite = math.isfinite

    n = x.size
    cap = min(max_iters + 1, 1024)
    xs = np.empty((cap, n))
    vs = np.empty((cap, n))
    fs = np.empty(cap)
    cs = np.empty(cap)
    ds = np.empty(cap)
    rs = np.empty(cap)

    k = 0
    while True:
        f, chv, d_crit, r = observe(x)
        if not (isfinite(f) and isfinite(r)):
            partial = _freeze(problem, alpha, eps_escape, xs, fs, cs, ds, rs, vs, k, BLOWUP)
            raise NumericalBlowupError(
                f"non-finite iterate at step {k} (f={f}, |x - x*|={r})", partial
            )
        if k == 0 and r > eps_escape:
            raise ValueError(
                f"x0 must start inside the escape ball: |x0 - x*| = {r} > {eps_escape}"
            )
        if k == cap:
            cap = min(max_iters + 1, cap * 2)
            xs = np.concatenate([xs, np.empty((cap - k, n))])
            vs = np.concatenate([vs, np.empty((cap - k, n))])
            fs = np.concatenate([fs, np.empty(cap - k)])
            cs = np.concatenate([cs, np.empty(cap - k)])
            ds = np.concatenate([ds, np.empty(cap - k)])
            rs = np.concatenate([rs, np.empty(cap - k)])
        xs[k] = x
        fs[k] = f
        cs[k] = chv
        ds[k] = d_crit
        rs[k] = r
        if r > eps_escape:
            outcome = ESCAPED
            break
        if d_crit == 0.0:
            outcome = STALLED
            break
        if k == max_iters:
            outcome = MAX_ITERS
            break
        v = subgradient(x)
        vs[k] = v
        x = x - alpha * v
        k += 1

    return _freeze(problem, alpha, eps_escape, xs, fs, cs, ds, rs, vs, k + 1, outcome)


def sample_on_sphere(rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform direction on the unit sphere in n dimensions."""
    while True:
        g = rng.standard_normal(n)
        s = float(np.sqrt(g @ g))
        if s > 1e-12:
            return g / s


def sample_in_ball(rng: np.random.Generator, center: np.ndarray, radius: float) -> np.ndarray:
    """Uniform point in the closed ball of the given center and radius."""
    n = center.size
    u = sample_on_sphere(rng, n)
    return center + (radius * rng.random() ** (1.0 / n)) * u


def initial_radius_mode(problem: ProblemOracle) -> str:
    """'relative' when the reference point is nonzero, else 'absolute'."""
    return "relative" if float(np.abs(problem.reference_point).max()) > 0.0 else "absolute"


def sample_initial(problem: ProblemOracle, rel_radius: float, rng: np.random.Generator) -> np.ndarray:
    """Uniform initial point within relative distance `rel_radius` of x*.

    The sampling radius is ``rel_radius * |x*|``; when the reference point is
    the zero vector the radius is interpreted as absolute (see
    :func:`initial_radius_mode`, which the harness reports).
    """
    if rel_radius < 0.0:
        raise ValueError(f"initial radius must be nonnegative, got {rel_radius}")
    ref = problem.reference_point
    scale = float(np.sqrt(ref @ ref))
    radius = rel_radius * scale if scale > 0.0 else rel_radius
    if radius == 0.0:
        return ref.copy()
    return sample_in_ball(rng, ref, radius)


def sample_alpha(lo: float, hi: float, rng: np.random.Generator) -> float:
    """Uniform step size in [lo, hi]."""
    if not 0.0 < lo <= hi:
        raise ValueError(f"need 0 < lo <= hi, got [{lo}, {hi}]")
    return float(rng.uniform(lo, hi))


# ---------------------------------------------------------------------------
# trajectory files
#
# Header: k,alpha,f,C,dS,escaped plus one column per coordinate (x0..x{n-1})
# when n <= 16; larger problems log norm_x_minus_xstar instead. Floats use
# the shortest round-trip representation, so replaying a file reconstructs
# bit-identical values.

_MAX_COORD_COLUMNS = 16


@dataclass
class TrajectoryTable:
    """Parsed trajectory CSV. `xs` is None when coordinates were not logged."""

    problem_name: str | None
    ks: np.ndarray
    alphas: np.ndarray
    fs: np.ndarray
    cs: np.ndarray
    ds: np.ndarray
    escaped: np.ndarray
    xs: np.ndarray | None = None
    ref_norms: np.ndarray | None = None
    eps_escape: float | None = None

    @property
    def n_rows(self) -> int:
        return self.ks.size

    @property
    def alpha(self) -> float:
        return float(self.alphas[0])


def write_trajectory_csv(path, traj: Trajectory) -> None:
    """Write one trajectory per the file contract above."""
    n = traj.xs.shape[1]
    with_coords = n <= _MAX_COORD_COLUMNS
    header = ["k", "alpha", "f", "C", "dS", "escaped"]
    if with_coords:
        header += [f"x{i}" for i in range(n)]
    else:
        header.append("norm_x_minus_xstar")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# problem = {traj.problem_name}\n")
        fh.write(f"# outcome = {traj.outcome}\n")
        fh.write(f"# eps_escape = {format_float(traj.eps_escape)}\n")
        fh.write(",".join(header) + "\n")
        alpha_txt = format_float(traj.alpha)
        for k in range(traj.n_records):
            esc = 1 if traj.ref_dists[k] > traj.eps_escape else 0
            cells = [
                str(k),
                alpha_txt,
                format_float(traj.fs[k]),
                format_float(traj.cs[k]),
                format_float(traj.ds[k]),
                str(esc),
            ]
            if with_coords:
                cells += [format_float(v) for v in traj.xs[k]]
            else:
                cells.append(format_float(traj.ref_dists[k]))
            fh.write(",".join(cells) + "\n")


def read_trajectory_csv(path) -> TrajectoryTable:
    """Parse a trajectory CSV written by :func:`write_trajectory_csv`."""
    problem_name = None
    eps_escape = None
    header: list[str] | None = None
    rows: list[list[str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    key = key.strip()
                    if key == "problem":
                        problem_name = value.strip()
                    elif key == "eps_escape":
                        try:
                            eps_escape = float(value.strip())
                        except ValueError:
                            raise FileFormatError(
                                f"{path}: bad eps_escape on line {lineno}"
                            ) from None
                continue
            cells = line.split(",")
            if header is None:
                header = cells
                continue
            if len(cells) != len(header):
                raise FileFormatError(
                    f"{path}: line {lineno} has {len(cells)} cells, expected {len(header)}"
                )
            rows.append(cells)
    if header is None or not rows:
        raise FileFormatError(f"{path}: no trajectory rows")
    base = ["k", "alpha", "f", "C", "dS", "escaped"]
    if header[: len(base)] != base:
        raise FileFormatError(f"{path}: unexpected header {header!r}")
    coord_cols = header[len(base) :]
    with_coords = bool(coord_cols) and coord_cols[0].startswith("x")
    try:
        ks = np.array([int(r[0]) for r in rows])
        alphas = np.array([float(r[1]) for r in rows])
        fs = np.array([float(r[2]) for r in rows])
        cs = np.array([float(r[3]) for r in rows])
        ds = np.array([float(r[4]) for r in rows])
        escaped = np.array([int(r[5]) for r in rows])
        if with_coords:
            xs = np.array([[float(c) for c in r[len(base) :]] for r in rows])
            ref_norms = None
        else:
            xs = None
            ref_norms = np.array([float(r[len(base)]) for r in rows]) if coord_cols else None
    except ValueError as exc:
        raise FileFormatError(f"{path}: bad cell value: {exc}") from None
    if not np.array_equal(ks, np.arange(len(rows))):
        raise FileFormatError(f"{path}: iterate indices must run 0..{len(rows) - 1}")
    return TrajectoryTable(
        problem_name, ks, alphas, fs, cs, ds, escaped, xs, ref_norms, eps_escape
    )


def verify_update_exactness(problem: ProblemOracle, table: TrajectoryTable):
    """Check every logged step reproduces bit-exactly from its predecessor.

    Recomputes the selection at each logged iterate and compares
    ``x_k - alpha * v_k`` with the logged ``x_{k+1}``. Returns
    ``(True, -1)`` on success or ``(False, k)`` for the first failing step.
    Requires a table with coordinate columns.
    """
    if table.xs is None:
        raise FileFormatError(
            "trajectory file has no coordinate columns; update exactness "
            "cannot be re-verified"
        )
    alpha = table.alpha
    for k in range(table.n_rows - 1):
        v = problem.subgradient(table.xs[k])
        step = table.xs[k] - alpha * v
        if not np.array_equal(step, table.xs[k + 1]):
            return False, k
    return True, -1


def trajectory_from_table(problem: ProblemOracle, table: TrajectoryTable,
                          eps_escape: float | None = None) -> Trajectory:
    """Rebuild an in-memory trajectory from a parsed coordinate table.

    Selections are recomputed from the logged iterates (they are a
    deterministic function of the point), and per-iterate observables are
    taken from the file.
    """
    if table.xs is None:
        raise FileFormatError("trajectory file has no coordinate columns")
    n_rows = table.n_rows
    ref = problem.reference_point
    deltas = table.xs - ref[None, :]
    ref_dists = np.sqrt((deltas * deltas).sum(axis=1))
    vs = np.empty((max(n_rows - 1, 0), problem.dim))
    for k in range(n_rows - 1):
        vs[k] = problem.subgradient(table.xs[k])
    if eps_escape is None:
        eps_escape = table.eps_escape
    if eps_escape is None:
        eps_escape = float("inf") if not table.escaped[-1] else float(ref_dists[-1])
    if table.escaped[-1]:
        outcome = ESCAPED
    elif float(table.ds[-1]) == 0.0:
        outcome = STALLED
    else:
        outcome = MAX_ITERS
    return Trajectory(
        problem_name=table.problem_name or problem.name,
        alpha=table.alpha,
        eps_escape=float(eps_escape),
        xs=table.xs.copy(),
        fs=table.fs.copy(),
        cs=table.cs.copy(),
        ds=table.ds.copy(),
        ref_dists=ref_dists,
        vs=vs,
        outcome=outcome,
        outcome_k=n_rows - 1,
    )
