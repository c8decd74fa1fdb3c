"""Numerical audits of the instability conditions on a problem oracle.

Four families of checks:

* sharpness of the subgradient around the critical manifold (does the
  selection norm bound the distance, and with which exponent),
* tangent alignment of subgradients along the manifold (a Lipschitz ratio
  that must stay bounded as the sample pair shrinks onto the manifold),
* per-step audits of a recorded trajectory (Chetaev increments, distance
  monotonicity, projection ratio),
* local minimality probing with a spuriousness witness.

Each certifier returns a :class:`CertificateReport` whose extremal statistic
can be recomputed exactly from the stored witness points
(:func:`recompute_statistic`), and whose sampling is a nested stream per
seed: enlarging the sample count extends the stream, so supremum statistics
never decrease under refinement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Trajectory, sample_in_ball, sample_on_sphere
from .problem import ProblemOracle

__all__ = [
    "SATISFIED",
    "VIOLATED",
    "BOUNDED_BELOW",
    "INCONCLUSIVE",
    "CertificateReport",
    "certify_subregularity",
    "certify_verdier",
    "audit_chetaev",
    "audit_distance_monotonicity",
    "audit_projection_ratio",
    "probe_local_min",
    "recompute_statistic",
    "write_report",
    "read_report",
]

SATISFIED = "satisfied"
VIOLATED = "violated"
BOUNDED_BELOW = "bounded-below"
INCONCLUSIVE = "inconclusive"

#: sample pairs for the tangent-alignment check shrink down to this gap
_MIN_PAIR_GAP = 1e-9

#: a selection-norm trend flatter than this slope counts as bounded below
_FLAT_SLOPE = 0.05

#: fitted distance bounds must hold with this multiplicative slack
_FIT_SLACK = 1.05

#: decade maxima may wobble up by this factor and still count as bounded
_BOUNDED_SLACK = 1.10

#: decade maxima growing by this factor across each of the last transitions
#: count as divergence
_DOUBLING = 2.0


@dataclass
class CertificateReport:
    """Outcome of one certifier run.

    `statistic` is the extremal value the verdict is based on; `witness`
    holds the point(s) attaining it, keyed by role, so the statistic can be
    recomputed from the report alone. `constant` and `exponent` carry
    fitted or declared values when the certifier produces them.
    """

    certifier: str
    problem: str
    samples: int
    verdict: str
    statistic: float
    constant: float | None = None
    exponent: float | None = None
    witness: dict[str, np.ndarray] = field(default_factory=dict)
    details: dict[str, float] = field(default_factory=dict)
    notes: tuple[str, ...] = ()


def _norm(v: np.ndarray) -> float:
    return float(np.sqrt(v @ v))


# ---------------------------------------------------------------------------
# subregularity


def certify_subregularity(
    problem: ProblemOracle,
    n_samples: int,
    rng: np.random.Generator,
    levels: int = 20,
) -> CertificateReport:
    """Estimate how the selection norm bounds the distance to the critical set.

    Samples points on spheres of geometrically shrinking radii around the
    reference point and records ``(d, w) = (dist to critical set, |v|)``
    pairs, using the selection norm as the computable proxy for the distance
    from zero to the subdifferential (exact off the nonsmooth locus for the
    built-in problems, and an upper bound in general, as noted on the
    report).

    Verdicts:

    * BOUNDED_BELOW when the selection norms do not decay towards the
      manifold (near-zero variance of ``log w``, or a log-log trend of `w`
      against `d` flatter than 0.05); the report carries ``min w`` as the
      statistic and ``max d / min w`` as the constant.
    * SATISFIED when a least-squares fit ``d <= c * w**theta`` holds for
      every sample with 5% slack.
    * INCONCLUSIVE when every sample stalls on the manifold or the fit does
      not cover the samples.
    """
    if n_samples < 100:
        raise ValueError(f"need at least 100 samples, got {n_samples}")
    rho = problem.neighborhood_radius
    ref = problem.reference_point
    dim = problem.dim
    radii = rho * 2.0 ** -np.arange(levels, dtype=np.float64)

    dists: list[float] = []
    norms: list[float] = []
    points: list[np.ndarray] = []
    stalled = 0
    for i in range(n_samples):
        x = ref + radii[i % levels] * sample_on_sphere(rng, dim)
        d = problem.dist_to_critical(x)
        if d <= 0.0:
            stalled += 1
            continue
        w = _norm(problem.subgradient(x))
        if w <= 0.0:
            stalled += 1
            continue
        dists.append(d)
        norms.append(w)
        points.append(x)

    note_proxy = "selection norm used as the subdifferential distance proxy"
    if not dists:
        return CertificateReport(
            certifier="subregularity",
            problem=problem.name,
            samples=n_samples,
            verdict=INCONCLUSIVE,
            statistic=float("nan"),
            details={"stalled_samples": float(stalled)},
            notes=(note_proxy, "every sample landed on the critical set"),
        )

    d_arr = np.array(dists)
    w_arr = np.array(norms)
    log_d = np.log(d_arr)
    log_w = np.log(w_arr)
    var_w = float(log_w.var())
    var_d = float(log_d.var())
    slope = float(((log_d - log_d.mean()) * (log_w - log_w.mean())).mean() / var_d) if var_d > 1e-12 else float("inf")

    base_details = {
        "stalled_samples": float(stalled),
        "collected_samples": float(len(dists)),
        "grad_log_variance": var_w,
        "grad_log_slope": slope,
        "min_grad_norm": float(w_arr.min()),
        "max_dist_to_grad_ratio": float((d_arr / w_arr).max()),
    }

    if var_w < 1e-6 or abs(slope) < _FLAT_SLOPE:
        i_min = int(w_arr.argmin())
        return CertificateReport(
            certifier="subregularity",
            problem=problem.name,
            samples=n_samples,
            verdict=BOUNDED_BELOW,
            statistic=float(w_arr[i_min]),
            constant=float(d_arr.max() / w_arr.min()),
            exponent=None,
            witness={"x": points[i_min]},
            details=base_details,
            notes=(note_proxy, "selection norms stay bounded below towards the manifold"),
        )

    design = np.column_stack([np.ones_like(log_w), log_w])
    coef, *_ = np.linalg.lstsq(design, log_d, rcond=None)
    c_hat = float(math.exp(coef[0]))
    theta_hat = float(coef[1])
    ratios = d_arr / (c_hat * w_arr**theta_hat)
    i_max = int(ratios.argmax())
    stat = float(ratios[i_max])
    covered = stat <= _FIT_SLACK
    return CertificateReport(
        certifier="subregularity",
        problem=problem.name,
        samples=n_samples,
        verdict=SATISFIED if covered else INCONCLUSIVE,
        statistic=stat,
        constant=c_hat,
        exponent=theta_hat,
        witness={"x": points[i_max]},
        details=base_details,
        notes=(note_proxy,)
        if covered
        else (note_proxy, "fitted bound does not cover all samples within slack"),
    )


# ---------------------------------------------------------------------------
# tangent alignment (Verdier-type Lipschitz ratio)


def certify_verdier(
    problem: ProblemOracle,
    n_samples: int,
    rng: np.random.Generator,
) -> CertificateReport:
    """Probe the tangent-alignment ratio across shrinking pair gaps.

    Samples pairs ``(y on the manifold, x off it)``, half of them
    adversarial with ``y`` the nearest manifold point of ``x``, with gaps
    spanning every decade from the certification radius down to 1e-9. The
    statistic is the ratio of the tangent component of the subgradient
    (relative to the manifold gradient) to the pair gap.

    Verdict heuristic on per-decade maxima at the finest scales: SATISFIED
    when they are non-increasing within 10%, VIOLATED when they at least
    double across each of the last three decade transitions, INCONCLUSIVE
    otherwise.
    """
    if n_samples < 100:
        raise ValueError(f"need at least 100 samples, got {n_samples}")
    rho = problem.neighborhood_radius
    ref = problem.reference_point
    dim = problem.dim
    n_levels = max(2, int(round(math.log10(rho / _MIN_PAIR_GAP))) + 1)
    ladder = np.geomspace(rho, _MIN_PAIR_GAP, num=n_levels)
    log_ty_lo = math.log(_MIN_PAIR_GAP)

    ratios: list[float] = []
    gaps: list[float] = []
    levels_used: list[int] = []
    xs: list[np.ndarray] = []
    ys: list[np.ndarray] = []
    rejected = 0
    for i in range(n_samples):
        level = i % n_levels
        s = float(ladder[level])
        pair = None
        for _ in range(64):
            tangent_dir = problem.tangent_project(ref, rng.standard_normal(dim))
            t_norm = _norm(tangent_dir)
            if t_norm > 1e-12:
                log_ty_hi = math.log(max(rho - s, _MIN_PAIR_GAP))
                t_y = math.exp(rng.uniform(log_ty_lo, max(log_ty_lo, log_ty_hi)))
                y = ref + (t_y / t_norm) * tangent_dir
            else:
                y = ref.copy()
            g = rng.standard_normal(dim)
            if rng.random() < 0.5:
                g = g - problem.tangent_project(y, g)  # adversarial: y = P_S(x)
            g_norm = _norm(g)
            if g_norm <= 1e-12:
                continue
            x = y + (s / g_norm) * g
            if problem.dist_to_critical(x) <= 0.0:
                continue
            dx = x - ref
            if math.sqrt(float(dx @ dx)) > rho:
                continue
            pair = (x, y)
            break
        if pair is None:
            rejected += 1
            continue
        x, y = pair
        gap = _norm(x - y)
        if gap <= 0.0:
            rejected += 1
            continue
        aligned = problem.tangent_project(y, problem.subgradient(x)) - problem.riemannian_gradient(y)
        ratios.append(_norm(aligned) / gap)
        gaps.append(gap)
        levels_used.append(level)
        xs.append(x)
        ys.append(y)

    if not ratios:
        return CertificateReport(
            certifier="verdier",
            problem=problem.name,
            samples=n_samples,
            verdict=INCONCLUSIVE,
            statistic=float("nan"),
            details={"rejected_samples": float(rejected)},
            notes=("no admissible sample pairs",),
        )

    r_arr = np.array(ratios)
    g_arr = np.array(gaps)
    i_best = int(r_arr.argmax())
    stat = float(r_arr[i_best])

    # group by construction scale: the ladder level is exact, whereas the
    # recomputed gap can round across a decade boundary
    level_max: dict[int, float] = {}
    level_count: dict[int, int] = {}
    for r, lev in zip(ratios, levels_used):
        level_count[lev] = level_count.get(lev, 0) + 1
        if r > level_max.get(lev, -1.0):
            level_max[lev] = r

    details = {"rejected_samples": float(rejected)}
    for lev in sorted(level_max):
        details[f"scale_{lev}_gap"] = float(ladder[lev])
        details[f"scale_{lev}_max_ratio"] = level_max[lev]
        details[f"scale_{lev}_count"] = float(level_count[lev])

    witness = {"x": xs[i_best], "y": ys[i_best]}
    if stat == 0.0:
        return CertificateReport(
            certifier="verdier",
            problem=problem.name,
            samples=n_samples,
            verdict=SATISFIED,
            statistic=0.0,
            constant=0.0,
            witness=witness,
            details=details,
            notes=("tangent components vanish on every sampled pair",),
        )

    populated = sorted(level_max)  # coarse scales first
    tail = populated[-4:]
    transitions: list[float] = []
    for coarse, fine in zip(tail, tail[1:]):
        m_coarse = level_max[coarse]
        m_fine = level_max[fine]
        if m_coarse == 0.0:
            transitions.append(float("inf") if m_fine > 0.0 else 1.0)
        else:
            transitions.append(m_fine / m_coarse)

    if len(transitions) >= 3 and all(t >= _DOUBLING for t in transitions):
        verdict = VIOLATED
        notes = ("per-decade maxima keep doubling towards the manifold",)
    elif transitions and all(t <= _BOUNDED_SLACK for t in transitions):
        verdict = SATISFIED
        notes = ("per-decade maxima non-increasing towards the manifold",)
    else:
        verdict = INCONCLUSIVE
        notes = ("per-decade maxima neither settle nor keep doubling",)

    return CertificateReport(
        certifier="verdier",
        problem=problem.name,
        samples=n_samples,
        verdict=verdict,
        statistic=stat,
        constant=stat if verdict == SATISFIED else None,
        witness=witness,
        details={**details, "witness_gap": float(g_arr[i_best])},
        notes=notes,
    )


# ---------------------------------------------------------------------------
# trajectory audits


def _check_same_problem(problem: ProblemOracle, traj: Trajectory) -> None:
    if traj.problem_name != problem.name:
        raise ValueError(
            f"trajectory was produced by {traj.problem_name!r}, not {problem.name!r}"
        )


def audit_chetaev(
    problem: ProblemOracle,
    traj: Trajectory,
    tol_scale: float = 1e-9,
) -> CertificateReport:
    """Check the declared Chetaev increment bound on every eligible step.

    Eligible steps have both endpoints inside the certification ball and off
    the critical manifold; the rest are skipped and counted. A step passes
    when ``C(x_{k+1}) - C(x_k) >= rate * d(x_k)**exponent`` within
    ``tol_scale * (1 + |C|)``.
    """
    _check_same_problem(problem, traj)
    rho = problem.neighborhood_radius
    theta = problem.chetaev_exponent
    rate = problem.chetaev_rate(traj.alpha)

    checked = 0
    skipped = 0
    first_violation = -1
    min_margin = math.inf
    min_idx = -1
    for k in range(traj.n_steps):
        in_ball = traj.ref_dists[k] <= rho and traj.ref_dists[k + 1] <= rho
        off_manifold = traj.ds[k] > 0.0 and traj.ds[k + 1] > 0.0
        if not (in_ball and off_manifold):
            skipped += 1
            continue
        checked += 1
        increment = float(traj.cs[k + 1] - traj.cs[k])
        required = rate * float(traj.ds[k]) ** theta
        margin = increment - required
        tol = tol_scale * (1.0 + max(abs(float(traj.cs[k])), abs(float(traj.cs[k + 1]))))
        if margin < -tol and first_violation < 0:
            first_violation = k
        if margin < min_margin:
            min_margin = margin
            min_idx = k
    verdict = SATISFIED if first_violation < 0 else VIOLATED
    witness = (
        {"x": traj.xs[min_idx].copy(), "x_next": traj.xs[min_idx + 1].copy()}
        if min_idx >= 0
        else {}
    )
    notes = ()
    if checked == 0:
        notes = ("no eligible steps; the bound holds vacuously",)
    return CertificateReport(
        certifier="chetaev-increment",
        problem=problem.name,
        samples=checked,
        verdict=verdict,
        statistic=min_margin if checked else float("nan"),
        constant=rate,
        exponent=theta,
        witness=witness,
        details={
            "steps_checked": float(checked),
            "steps_skipped": float(skipped),
            "first_violation_k": float(first_violation),
        },
        notes=notes,
    )


def audit_distance_monotonicity(
    problem: ProblemOracle,
    traj: Trajectory,
    threshold: float,
) -> CertificateReport:
    """Check that close-to-manifold steps do not move closer to the manifold.

    Over steps with ``0 < d(x_k) <= threshold`` and both endpoints in the
    certification ball, requires ``d(x_{k+1}) >= d(x_k)``. The report also
    carries the smallest starting distance of any shrinking step regardless
    of the threshold, which is the supremum of thresholds for which the
    audit holds on this trajectory.
    """
    if threshold <= 0.0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    _check_same_problem(problem, traj)
    rho = problem.neighborhood_radius

    checked = 0
    first_violation = -1
    min_diff = math.inf
    min_idx = -1
    min_failing_distance = math.inf
    for k in range(traj.n_steps):
        if not (traj.ref_dists[k] <= rho and traj.ref_dists[k + 1] <= rho):
            continue
        d_here = float(traj.ds[k])
        if d_here <= 0.0:
            continue
        diff = float(traj.ds[k + 1]) - d_here
        if diff < 0.0 and d_here < min_failing_distance:
            min_failing_distance = d_here
        if d_here > threshold:
            continue
        checked += 1
        if diff < min_diff:
            min_diff = diff
            min_idx = k
        if diff < 0.0 and first_violation < 0:
            first_violation = k
    verdict = SATISFIED if first_violation < 0 else VIOLATED
    witness = (
        {"x": traj.xs[min_idx].copy(), "x_next": traj.xs[min_idx + 1].copy()}
        if min_idx >= 0
        else {}
    )
    notes = ()
    if checked == 0:
        notes = ("no steps under the threshold; the audit holds vacuously",)
    return CertificateReport(
        certifier="distance-monotonicity",
        problem=problem.name,
        samples=checked,
        verdict=verdict,
        statistic=min_diff if checked else float("nan"),
        constant=threshold,
        witness=witness,
        details={
            "steps_checked": float(checked),
            "first_violation_k": float(first_violation),
            "largest_valid_threshold": min_failing_distance,
        },
        notes=notes,
    )


def audit_projection_ratio(
    problem: ProblemOracle,
    traj: Trajectory,
    alignment_constant: float,
    tol_scale: float = 1e-9,
) -> CertificateReport:
    """Check ``|x_k - P(x_{k+1})| / d(x_k) <= 1 + alpha * c`` along a run.

    `alignment_constant` is the tangent-alignment constant (for instance the
    maximum ratio from :func:`certify_verdier`). Valid for problems whose
    critical manifold is affine near the reference point, where the
    nearest-point projection is 1-Lipschitz.
    """
    _check_same_problem(problem, traj)
    rho = problem.neighborhood_radius
    bound = 1.0 + traj.alpha * alignment_constant

    checked = 0
    first_violation = -1
    max_ratio = -math.inf
    max_idx = -1
    for k in range(traj.n_steps):
        if not (traj.ref_dists[k] <= rho and traj.ref_dists[k + 1] <= rho):
            continue
        d_here = float(traj.ds[k])
        if d_here <= 0.0:
            continue
        checked += 1
        proj_next = problem.project_critical(traj.xs[k + 1])
        ratio = _norm(traj.xs[k] - proj_next) / d_here
        if ratio > max_ratio:
            max_ratio = ratio
            max_idx = k
        if ratio > bound + tol_scale * (1.0 + bound) and first_violation < 0:
            first_violation = k
    verdict = SATISFIED if first_violation < 0 else VIOLATED
    witness = (
        {"x": traj.xs[max_idx].copy(), "x_next": traj.xs[max_idx + 1].copy()}
        if max_idx >= 0
        else {}
    )
    notes = ()
    if checked == 0:
        notes = ("no eligible steps; the bound holds vacuously",)
    return CertificateReport(
        certifier="projection-ratio",
        problem=problem.name,
        samples=checked,
        verdict=verdict,
        statistic=max_ratio if checked else float("nan"),
        constant=bound,
        witness=witness,
        details={
            "steps_checked": float(checked),
            "first_violation_k": float(first_violation),
        },
        notes=notes,
    )


# ---------------------------------------------------------------------------
# local minimality


def probe_local_min(
    problem: ProblemOracle,
    n_samples: int,
    rng: np.random.Generator,
) -> CertificateReport:
    """Probe local minimality of the reference point and its spuriousness.

    Samples uniform admissible perturbations in the certification ball
    (whose radius already enforces the per-problem perturbation rule) and
    checks the objective never drops below the reference value beyond
    1e-12. Also evaluates the problem's lower-objective witness, when one
    exists, to confirm the minimum is spurious.
    """
    if n_samples < 1000:
        raise ValueError(f"need at least 1000 samples, got {n_samples}")
    ref = problem.reference_point
    rho = problem.neighborhood_radius
    f_ref = problem.objective(ref)

    worst = math.inf
    worst_x = ref.copy()
    for _ in range(n_samples):
        x = sample_in_ball(rng, ref, rho)
        gap = problem.objective(x) - f_ref
        if gap < worst:
            worst = gap
            worst_x = x
    verdict = SATISFIED if worst >= -1e-12 else VIOLATED

    details = {"reference_value": f_ref, "spurious": 0.0}
    witness = {"x": worst_x}
    notes: tuple[str, ...] = ()
    spurious = problem.spurious_witness()
    if spurious is not None:
        point, expected = spurious
        value = problem.objective(point)
        details["witness_value"] = value
        details["expected_witness_value"] = float(expected)
        details["spurious"] = 1.0 if value < f_ref else 0.0
        witness["spurious_point"] = np.asarray(point, dtype=np.float64)
    else:
        notes = ("no lower-objective witness exists; spuriousness reported false",)

    return CertificateReport(
        certifier="local-min",
        problem=problem.name,
        samples=n_samples,
        verdict=verdict,
        statistic=worst,
        witness=witness,
        details=details,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# witness reproducibility and report files


def recompute_statistic(problem: ProblemOracle, report: CertificateReport) -> float:
    """Re-evaluate a report's extremal statistic from its stored witness."""
    w = report.witness
    kind = report.certifier
    if kind == "subregularity":
        x = w["x"]
        if report.verdict == BOUNDED_BELOW:
            return _norm(problem.subgradient(x))
        d = problem.dist_to_critical(x)
        return d / (report.constant * _norm(problem.subgradient(x)) ** report.exponent)
    if kind == "verdier":
        x, y = w["x"], w["y"]
        aligned = problem.tangent_project(y, problem.subgradient(x)) - problem.riemannian_gradient(y)
        return _norm(aligned) / _norm(x - y)
    if kind == "chetaev-increment":
        x, x_next = w["x"], w["x_next"]
        increment = problem.chetaev(x_next) - problem.chetaev(x)
        return increment - report.constant * problem.dist_to_critical(x) ** report.exponent
    if kind == "distance-monotonicity":
        return problem.dist_to_critical(w["x_next"]) - problem.dist_to_critical(w["x"])
    if kind == "projection-ratio":
        proj_next = problem.project_critical(w["x_next"])
        return _norm(w["x"] - proj_next) / problem.dist_to_critical(w["x"])
    if kind == "local-min":
        return problem.objective(w["x"]) - problem.objective(problem.reference_point)
    raise ValueError(f"unknown certifier {kind!r}")


def report_to_text(report: CertificateReport) -> str:
    """Serialize a report as machine-parseable ``key = value`` lines."""
    from .linalg import format_float

    lines = [
        f"certifier = {report.certifier}",
        f"problem = {report.problem}",
        f"samples = {report.samples}",
        f"verdict = {report.verdict}",
        f"statistic = {format_float(report.statistic)}",
    ]
    if report.constant is not None:
        lines.append(f"constant = {format_float(report.constant)}")
    if report.exponent is not None:
        lines.append(f"exponent = {format_float(report.exponent)}")
    for key in sorted(report.witness):
        coords = ",".join(format_float(v) for v in np.asarray(report.witness[key]).ravel())
        lines.append(f"witness_{key} = {coords}")
    for key in sorted(report.details):
        lines.append(f"detail_{key} = {format_float(report.details[key])}")
    for note in report.notes:
        lines.append(f"note = {note}")
    return "\n".join(lines) + "\n"


def write_report(path, report: CertificateReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report_to_text(report))


def read_report(path) -> CertificateReport:
    """Parse a report file written by :func:`write_report`."""
    fields: dict[str, str] = {}
    witness: dict[str, np.ndarray] = {}
    details: dict[str, float] = {}
    notes: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            key, _, value = line.partition(" = ")
            if key == "note":
                notes.append(value)
            elif key.startswith("witness_"):
                witness[key[len("witness_") :]] = np.array(
                    [float(c) for c in value.split(",")]
                )
            elif key.startswith("detail_"):
                details[key[len("detail_") :]] = float(value)
            else:
                fields[key] = value
    return CertificateReport(
        certifier=fields["certifier"],
        problem=fields["problem"],
        samples=int(fields["samples"]),
        verdict=fields["verdict"],
        statistic=float(fields["statistic"]),
        constant=float(fields["constant"]) if "constant" in fields else None,
        exponent=float(fields["exponent"]) if "exponent" in fields else None,
        witness=witness,
        details=details,
        notes=tuple(notes),
    )
