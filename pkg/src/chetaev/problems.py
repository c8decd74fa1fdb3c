"""Built-in problem oracles.

Four instances are provided:

* ``relu-l1``: a three-parameter ReLU network with l1 loss whose reference
  point (1, 1, 0) is a spurious local minimum on a flat critical plane.
* ``rpca-l1``: l1-loss matrix factorization ``(X, Y) -> |X Y^T - M|_1``
  whose spurious minima come from zero rows of the data matrix.
* ``abs-control``: ``|x|_1`` on the plane, a strict local minimum used as a
  stable control in escape experiments.
* ``verdier-fail``: ``max(-x1^2 + 2 x2, |x2|)``, whose critical line defeats
  the tangent-alignment (Verdier) bound; used to exercise violation
  detection.

Every oracle is immutable after construction. Subgradient selections are
single-valued deterministic rules; at critical points of ``relu-l1`` the
selection is the zero vector so that a trajectory landing on the critical
manifold stalls explicitly instead of behaving arbitrarily.
"""

from __future__ import annotations

import math

import numpy as np

from .linalg import as_matrix, l1_norm, max_abs, sign_matrix
from .problem import ProblemOracle

__all__ = [
    "ConstructionError",
    "ReluL1Problem",
    "AbsControlProblem",
    "VerdierFailProblem",
    "RpcaL1Problem",
    "build_spurious_min",
    "synthetic_matrix",
    "make_problem",
    "PROBLEM_IDS",
    "DEFAULT_SYNTHETIC_SEED",
]

#: seed for the default desk-scale factorization instance
DEFAULT_SYNTHETIC_SEED = 1729


class ConstructionError(ValueError):
    """A problem instance cannot be built from the given data."""


def _sign(t: float) -> float:
    if t > 0.0:
        return 1.0
    if t < 0.0:
        return -1.0
    return 0.0


class ReluL1Problem(ProblemOracle):
    """Three-parameter ReLU network with l1 loss.

    ``f(x1, x2, x3) = |x3 * max(x2, 0) - 1| + |x3 * max(x1 + x2, 0)|``

    The reference point is (1, 1, 0). Inside the certification ball of
    radius 0.25 the coordinates satisfy ``x1, x2 >= 1/2`` and
    ``x2 * x3 < 1``, so the objective reduces to the smooth-off-the-plane
    form ``1 + x2 (|x3| - x3) + x1 |x3|`` and the critical set is the plane
    ``x3 = 0``. The Chetaev function is ``1 - x1`` with increment rate
    ``alpha`` and exponent 1.
    """

    name = "relu-l1"

    def __init__(self) -> None:
        self._ref = np.array([1.0, 1.0, 0.0])
        self._ref.setflags(write=False)

    @property
    def dim(self) -> int:
        return 3

    @property
    def reference_point(self) -> np.ndarray:
        return self._ref

    @property
    def neighborhood_radius(self) -> float:
        return 0.25

    @property
    def default_escape_radius(self) -> float:
        # closed-form selection below is verified on the ball of radius 0.5
        return 0.5

    @property
    def chetaev_exponent(self) -> float:
        return 1.0

    def chetaev_rate(self, alpha: float) -> float:
        return alpha

    def objective(self, x) -> float:
        x1 = float(x[0])
        x2 = float(x[1])
        x3 = float(x[2])
        p = x2 if x2 > 0.0 else 0.0
        u = x1 + x2
        q = u if u > 0.0 else 0.0
        return abs(x3 * p - 1.0) + abs(x3 * q)

    def subgradient(self, x) -> np.ndarray:
        """Branchwise gradient selection, zero at critical points.

        Valid Clarke selection everywhere: each absolute-value and max term
        contributes the gradient of its active branch, with the inactive
        side chosen at ties. Where the zero vector is itself a valid
        selection (on the critical plane near the reference point) it is
        returned, so stalls are explicit.
        """
        x1 = float(x[0])
        x2 = float(x[1])
        x3 = float(x[2])
        p = x2 if x2 > 0.0 else 0.0
        u = x1 + x2
        q = u if u > 0.0 else 0.0
        if x3 == 0.0 and q >= p:
            return np.zeros(3)
        s = _sign(x3 * p - 1.0)
        a3 = abs(x3)
        g1 = a3 if u > 0.0 else 0.0
        g2 = (s * x3 if x2 > 0.0 else 0.0) + (a3 if u > 0.0 else 0.0)
        g3 = s * p + _sign(x3) * q
        return np.array((g1, g2, g3))

    def dist_to_critical(self, x) -> float:
        return abs(float(x[2]))

    def project_critical(self, x) -> np.ndarray:
        return np.array((float(x[0]), float(x[1]), 0.0))

    def tangent_project(self, y, v) -> np.ndarray:
        return np.array((float(v[0]), float(v[1]), 0.0))

    def riemannian_gradient(self, y) -> np.ndarray:
        # objective is constant along the critical plane near the reference
        return np.zeros(3)

    def chetaev(self, x) -> float:
        return 1.0 - float(x[0])

    def is_differentiable_at(self, x, margin: float) -> bool:
        x1 = float(x[0])
        x2 = float(x[1])
        x3 = float(x[2])
        p = x2 if x2 > 0.0 else 0.0
        return (
            abs(x3) > margin
            and abs(x2) > margin
            and abs(x1 + x2) > margin
            and abs(x3 * p - 1.0) > margin
        )

    def spurious_witness(self):
        return np.array([-1.0, 1.0, 1.0]), 0.0

    def observe(self, x):
        x1 = float(x[0])
        x2 = float(x[1])
        x3 = float(x[2])
        p = x2 if x2 > 0.0 else 0.0
        u = x1 + x2
        q = u if u > 0.0 else 0.0
        f = abs(x3 * p - 1.0) + abs(x3 * q)
        e1 = x1 - 1.0
        e2 = x2 - 1.0
        return f, 1.0 - x1, abs(x3), math.sqrt(e1 * e1 + e2 * e2 + x3 * x3)


class AbsControlProblem(ProblemOracle):
    """``f(x) = |x1| + |x2|`` with reference point at the origin.

    A strict local (indeed global) minimum: the stable control for escape
    experiments. The critical set is the single point 0, its tangent space
    is trivial, and no lower witness exists. The objective gap doubles as
    the trial Chetaev function, so increment audits on this problem report
    violations, which is the honest outcome for a stable point.
    """

    name = "abs-control"

    def __init__(self) -> None:
        self._ref = np.zeros(2)
        self._ref.setflags(write=False)

    @property
    def dim(self) -> int:
        return 2

    @property
    def reference_point(self) -> np.ndarray:
        return self._ref

    @property
    def neighborhood_radius(self) -> float:
        return 0.5

    @property
    def chetaev_exponent(self) -> float:
        return 1.0

    def chetaev_rate(self, alpha: float) -> float:
        return alpha

    def objective(self, x) -> float:
        return abs(float(x[0])) + abs(float(x[1]))

    def subgradient(self, x) -> np.ndarray:
        a = float(x[0])
        b = float(x[1])
        return np.array((float((a > 0.0) - (a < 0.0)), float((b > 0.0) - (b < 0.0))))

    def dist_to_critical(self, x) -> float:
        return math.hypot(float(x[0]), float(x[1]))

    def project_critical(self, x) -> np.ndarray:
        return np.zeros(2)

    def tangent_project(self, y, v) -> np.ndarray:
        return np.zeros(2)

    def riemannian_gradient(self, y) -> np.ndarray:
        return np.zeros(2)

    def chetaev(self, x) -> float:
        return abs(float(x[0])) + abs(float(x[1]))

    def is_differentiable_at(self, x, margin: float) -> bool:
        return abs(float(x[0])) > margin and abs(float(x[1])) > margin

    def observe(self, x):
        a = float(x[0])
        b = float(x[1])
        f = abs(a) + abs(b)
        d = math.hypot(a, b)
        return f, f, d, d


class VerdierFailProblem(ProblemOracle):
    """``f(x) = max(-x1^2 + 2 x2, |x2|)`` with reference point at the origin.

    The objective vanishes on the whole line ``x2 = 0``, which is critical
    near the origin, yet subgradients taken just above the parabola
    ``x2 = x1^2`` keep a tangent component of size ``2 |x1|`` at distance
    ``~x1^2`` from the line. The tangent-alignment ratio therefore blows up
    like ``2 / |x1|``, which is what the violation detector must find.

    Branch ties resolve toward the smooth branch, so the selection at the
    origin is (0, 2). The objective gap serves as a trial Chetaev function;
    no certified increment bound is claimed for this instance.
    """

    name = "verdier-fail"

    def __init__(self) -> None:
        self._ref = np.zeros(2)
        self._ref.setflags(write=False)

    @property
    def dim(self) -> int:
        return 2

    @property
    def reference_point(self) -> np.ndarray:
        return self._ref

    @property
    def neighborhood_radius(self) -> float:
        return 0.5

    @property
    def chetaev_exponent(self) -> float:
        return 1.0

    def chetaev_rate(self, alpha: float) -> float:
        return alpha

    def objective(self, x) -> float:
        x1 = float(x[0])
        x2 = float(x[1])
        return max(-x1 * x1 + 2.0 * x2, abs(x2))

    def subgradient(self, x) -> np.ndarray:
        x1 = float(x[0])
        x2 = float(x[1])
        if -x1 * x1 + 2.0 * x2 >= abs(x2):
            return np.array((-2.0 * x1 + 0.0, 2.0))  # +0.0 normalizes -0.0
        return np.array((0.0, _sign(x2)))

    def dist_to_critical(self, x) -> float:
        return abs(float(x[1]))

    def project_critical(self, x) -> np.ndarray:
        return np.array((float(x[0]), 0.0))

    def tangent_project(self, y, v) -> np.ndarray:
        return np.array((float(v[0]), 0.0))

    def riemannian_gradient(self, y) -> np.ndarray:
        return np.zeros(2)

    def chetaev(self, x) -> float:
        return self.objective(x)

    def is_differentiable_at(self, x, margin: float) -> bool:
        x1 = float(x[0])
        x2 = float(x[1])
        d1 = -x1 * x1 + 2.0 * x2
        d2 = abs(x2)
        if abs(d1 - d2) <= margin:
            return False
        return d1 > d2 or abs(x2) > margin

    def observe(self, x):
        x1 = float(x[0])
        x2 = float(x[1])
        f = max(-x1 * x1 + 2.0 * x2, abs(x2))
        return f, f, abs(x2), math.hypot(x1, x2)


class RpcaL1Problem(ProblemOracle):
    """l1-loss matrix factorization ``f(X, Y) = |X Y^T - M|_1``.

    The data matrix must have its first `rank` rows equal to zero and at
    least one nonzero entry elsewhere. The reference point is
    ``X* = [I; 0], Y* = 0`` (a custom ``xstar`` with an invertible leading
    block is accepted), where the objective equals ``|M|_1`` and every
    sufficiently small admissible perturbation cannot decrease it. Points
    pack row-major, X block first, then Y.

    The critical manifold near the reference point is ``Y = 0``; the
    Chetaev function is ``|X*|_F^2 - |Y*|_F^2 + |Y|_F^2 - |X|_F^2`` with
    exponent 0 and a conservative positive rate derived from norm bounds
    inside the certification ball.
    """

    name = "rpca-l1"

    def __init__(self, data, rank: int, xstar=None, transposed: bool = False) -> None:
        m_mat = as_matrix(data)
        m, n = m_mat.shape
        if not np.any(m_mat):
            raise ConstructionError("data matrix must be nonzero")
        if rank < 1:
            raise ConstructionError(f"rank must be at least 1, got {rank}")
        if rank >= min(m, n):
            raise ConstructionError(
                f"rank {rank} must be smaller than both dimensions {m}x{n}"
            )
        if np.any(m_mat[:rank]):
            raise ConstructionError(
                f"the first {rank} rows of the data matrix must be zero"
            )
        if xstar is None:
            xstar = np.zeros((m, rank))
            xstar[:rank, :rank] = np.eye(rank)
        else:
            xstar = as_matrix(xstar)
            if xstar.shape != (m, rank):
                raise ConstructionError(
                    f"xstar must have shape {(m, rank)}, got {xstar.shape}"
                )
            if abs(np.linalg.det(xstar[:rank])) <= 1e-12:
                raise ConstructionError("leading block of xstar must be invertible")

        self.data = m_mat
        self.rank = rank
        self.rows = m
        self.cols = n
        self.xstar = xstar
        self.ystar = np.zeros((n, rank))
        self.transposed = transposed
        self._split = m * rank
        self._dim = (m + n) * rank
        self._ref = np.concatenate([xstar.ravel(), self.ystar.ravel()])
        self._ref.setflags(write=False)
        self._cstar = float((xstar * xstar).sum())
        self._data_l1 = l1_norm(m_mat)
        self._rho = min(1.0 / (2.0 * m), 0.1)

        # conservative positive increment rate: inside the ball the leading
        # block keeps its smallest singular value, the sign matrix keeps a
        # unit entry in its leading rows, and the trailing blocks are small
        rho = self._rho
        smin = float(np.linalg.svd(xstar[:rank], compute_uv=False)[-1]) - rho
        lead = max(0.0, smin - math.sqrt((m - rank) * n) * rho)
        self._kappa = max(0.0, lead * lead - m * n * rho * rho)

    def unpack(self, x):
        """Split a packed point into its (X, Y) factor views."""
        x = np.asarray(x, dtype=np.float64)
        return (
            x[: self._split].reshape(self.rows, self.rank),
            x[self._split :].reshape(self.cols, self.rank),
        )

    def pack(self, x_factor, y_factor) -> np.ndarray:
        """Pack factors (X, Y) into one point, row-major, X first."""
        return np.concatenate(
            [
                np.asarray(x_factor, dtype=np.float64).ravel(),
                np.asarray(y_factor, dtype=np.float64).ravel(),
            ]
        )

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def reference_point(self) -> np.ndarray:
        return self._ref

    @property
    def neighborhood_radius(self) -> float:
        return self._rho

    @property
    def chetaev_exponent(self) -> float:
        return 0.0

    def chetaev_rate(self, alpha: float) -> float:
        return alpha * alpha * self._kappa

    def objective(self, x) -> float:
        xf, yf = self.unpack(x)
        return float(np.abs(xf @ yf.T - self.data).sum())

    def subgradient_parts(self, x_factor, y_factor, tie: float = 0.0):
        """Sign matrix of the residual and the two factor gradients.

        Returns ``(sign, sign @ Y, sign^T @ X)``. The engine update with
        step ``alpha`` is ``X - alpha * sign @ Y, Y - alpha * sign^T @ X``.
        """
        residual = x_factor @ y_factor.T - self.data
        lam = sign_matrix(residual, tie)
        return lam, lam @ y_factor, lam.T @ x_factor

    def subgradient(self, x) -> np.ndarray:
        xf, yf = self.unpack(x)
        lam = np.sign(xf @ yf.T - self.data)
        return np.concatenate([(lam @ yf).ravel(), (lam.T @ xf).ravel()])

    def dist_to_critical(self, x) -> float:
        yf = self.unpack(x)[1]
        return float(np.sqrt((yf * yf).sum()))

    def project_critical(self, x) -> np.ndarray:
        out = np.array(x, dtype=np.float64, copy=True)
        out[self._split :] = 0.0
        return out

    def tangent_project(self, y, v) -> np.ndarray:
        out = np.array(v, dtype=np.float64, copy=True)
        out[self._split :] = 0.0
        return out

    def riemannian_gradient(self, y) -> np.ndarray:
        # objective equals |M|_1 on the whole manifold patch Y = 0
        return np.zeros(self._dim)

    def chetaev(self, x) -> float:
        xf, yf = self.unpack(x)
        return self._cstar + float((yf * yf).sum()) - float((xf * xf).sum())

    def is_differentiable_at(self, x, margin: float) -> bool:
        xf, yf = self.unpack(x)
        residual = xf @ yf.T - self.data
        return float(np.abs(residual).min()) > margin

    def spurious_witness(self):
        """Rank-one fit of the single largest-magnitude entry of the data.

        Its objective is ``|M|_1 - max_ij |M_ij|``, strictly below the
        reference value.
        """
        flat = int(np.abs(self.data).argmax())
        i, j = divmod(flat, self.cols)
        xw = np.zeros((self.rows, self.rank))
        xw[i, 0] = 1.0
        yw = np.zeros((self.cols, self.rank))
        yw[j, 0] = self.data[i, j]
        return self.pack(xw, yw), self._data_l1 - max_abs(self.data)

    def observe(self, x):
        xf, yf = self.unpack(x)
        f = float(np.abs(xf @ yf.T - self.data).sum())
        ysq = float((yf * yf).sum())
        c = self._cstar + ysq - float((xf * xf).sum())
        h = xf - self.xstar
        ref = math.sqrt(float((h * h).sum()) + ysq)
        return f, c, math.sqrt(ysq), ref


def synthetic_matrix(
    rows: int = 8,
    cols: int = 6,
    zero_rows: int = 2,
    low: float = -3.0,
    high: float = 3.0,
    seed: int = DEFAULT_SYNTHETIC_SEED,
) -> np.ndarray:
    """Desk-scale data matrix: seeded uniform entries, leading rows zeroed."""
    if not 0 < zero_rows < rows:
        raise ConstructionError(f"zero_rows must be in (0, {rows}), got {zero_rows}")
    rng = np.random.default_rng(seed)
    mat = rng.uniform(low, high, size=(rows, cols))
    mat[:zero_rows] = 0.0
    return as_matrix(mat)


def build_spurious_min(data, rank: int) -> RpcaL1Problem:
    """Build the factorization oracle around its constructed spurious minimum.

    The data matrix must be nonzero with its first `rank` rows zero; a
    matrix with its first `rank` columns zero is transposed internally and
    the flip recorded on the instance.
    """
    m_mat = as_matrix(data)
    if not np.any(m_mat):
        raise ConstructionError("data matrix must be nonzero")
    if rank < 1:
        raise ConstructionError(f"rank must be at least 1, got {rank}")
    if rank >= min(m_mat.shape):
        raise ConstructionError(
            f"rank {rank} must be smaller than both dimensions {m_mat.shape}"
        )
    if not np.any(m_mat[:rank]):
        return RpcaL1Problem(m_mat, rank)
    if not np.any(m_mat[:, :rank]):
        return RpcaL1Problem(m_mat.T.copy(), rank, transposed=True)
    raise ConstructionError(
        f"data matrix needs {rank} leading zero rows or {rank} leading zero columns"
    )


PROBLEM_IDS = ("relu-l1", "abs-control", "verdier-fail", "rpca-l1")

_ALIASES = {"rpca": "rpca-l1"}


def make_problem(problem_id: str, matrix=None, rank: int = 2) -> ProblemOracle:
    """Instantiate a built-in problem by id.

    For ``rpca-l1`` an explicit data matrix may be supplied; otherwise the
    default seeded synthetic instance is used.
    """
    pid = _ALIASES.get(problem_id, problem_id)
    if pid == "relu-l1":
        return ReluL1Problem()
    if pid == "abs-control":
        return AbsControlProblem()
    if pid == "verdier-fail":
        return VerdierFailProblem()
    if pid == "rpca-l1":
        if matrix is None:
            matrix = synthetic_matrix()
        return build_spurious_min(matrix, rank)
    raise ValueError(f"unknown problem id {problem_id!r}; known: {', '.join(PROBLEM_IDS)}")
