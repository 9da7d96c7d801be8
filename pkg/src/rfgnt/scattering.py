"""2D Helmholtz inverse-scattering testbed with exterior complex scaling.

Grid layout per axis (left to right)::

    | tail | pre-tail | buffer | interior | buffer | pre-tail | tail |

The interior spans ``[-w, w]`` with nodes at both endpoints, every real
point is spaced ``h`` apart, and the tails continue with steps of length
``h`` along a ray rotated by ``tail_angle`` into the complex plane.  The
outermost tail nodes carry homogeneous Dirichlet conditions.  Measurements
are taken on the perimeter of the interior+buffer square.

Full-grid vectors are flattened row-major with ``y`` as the slow index:
``index = iy * N + ix``.
"""

from __future__ import annotations

import hashlib
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .sparse import ComplexSparseMatrix, SolveReport, TOLERANCES, solve_nonhermitian


class ForwardSolveError(RuntimeError):
    def __init__(self, message, report: Optional[SolveReport] = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class GridConfig:
    interior_n: int = 48
    buffer_n: int = 4
    pre_tail_n: int = 4
    tail_n: int = 16
    tail_angle: float = np.pi / 6
    half_width: float = 5.0

    @classmethod
    def full_scale(cls):
        return cls(200, 10, 10, 80)


@dataclass(frozen=True, eq=False)
class EcsGrid:
    config: GridConfig
    h: float
    coords_x: np.ndarray
    coords_y: np.ndarray

    @property
    def n(self) -> int:
        """Points per axis, Dirichlet end points included."""
        return self.coords_x.size

    @property
    def size(self) -> int:
        return self.n * self.n

    @property
    def interior_n(self) -> int:
        return self.config.interior_n

    @property
    def offset(self) -> int:
        """Axis index of the first interior point."""
        c = self.config
        return c.tail_n + c.pre_tail_n + c.buffer_n

    @property
    def interior_axis(self) -> np.ndarray:
        return self.coords_x[self.offset:self.offset + self.interior_n].real

    def interior_indices(self) -> np.ndarray:
        """Full-grid indices of the interior points, row-major (iy slow)."""
        ax = np.arange(self.offset, self.offset + self.interior_n)
        return (ax[:, None] * self.n + ax[None, :]).ravel()

    def ring_indices(self) -> np.ndarray:
        """Measurement ring, counter-clockwise from the top-left corner.

        Goes down the left edge, right along the bottom, up the right edge
        and back left along the top; each corner appears once.
        """
        c = self.config
        lo = c.tail_n + c.pre_tail_n
        hi = lo + c.interior_n + 2 * c.buffer_n - 1
        span = np.arange(lo, hi)
        n = self.n
        left = (hi - (span - lo)) * n + lo          # y from top down, x = lo
        bottom = lo * n + span                      # x left to right, y = lo
        right = span * n + hi                       # y bottom up, x = hi
        top = hi * n + (hi - (span - lo))           # x right to left, y = hi
        return np.concatenate([left, bottom, right, top])


def build_grid(config: GridConfig = GridConfig()) -> EcsGrid:
    """Coordinates of the ECS grid described by ``config``."""
    c = config
    if c.interior_n < 2 or min(c.buffer_n, c.pre_tail_n, c.tail_n) < 0:
        raise ValueError("invalid point counts")
    if c.buffer_n < 1:
        raise ValueError("buffer_n must be at least 1 (the measurement ring lives there)")
    if not 0 < c.tail_angle < np.pi / 2:
        raise ValueError("tail_angle must lie in (0, pi/2)")
    if c.half_width <= 0:
        raise ValueError("half_width must be positive")
    h = 2.0 * c.half_width / (c.interior_n - 1)
    ext = c.buffer_n + c.pre_tail_n
    real = -c.half_width + h * np.arange(-ext, c.interior_n + ext)
    rot = h * np.exp(1j * c.tail_angle) * np.arange(1, c.tail_n + 1)
    left = real[0] - rot[::-1]
    right = real[-1] + rot
    coords = np.concatenate([left, real.astype(complex), right])
    return EcsGrid(c, h, coords, coords.copy())


def second_difference_weights(h_left, h_right):
    """Three-point second-derivative weights on a nonuniform (possibly complex) mesh."""
    s = h_left + h_right
    return 2.0 / (h_left * s), -2.0 / (h_left * h_right), 2.0 / (h_right * s)


def _laplacian(grid: EcsGrid) -> sp.csr_matrix:
    """Laplacian with Dirichlet rows (identity) on the outer boundary."""
    n = grid.n

    def axis_weights(z):
        d = np.diff(z)
        wl, wc, wr = second_difference_weights(d[:-1], d[1:])
        return wl, wc, wr

    wxl, wxc, wxr = axis_weights(grid.coords_x)
    wyl, wyc, wyr = axis_weights(grid.coords_y)
    iy, ix = np.meshgrid(np.arange(1, n - 1), np.arange(1, n - 1), indexing="ij")
    iy, ix = iy.ravel(), ix.ravel()
    row = iy * n + ix
    jx, jy = ix - 1, iy - 1
    rows = [row, row, row, row, row]
    cols = [row - 1, row + 1, row - n, row + n, row]
    vals = [wxl[jx], wxr[jx], wyl[jy], wyr[jy], wxc[jx] + wyc[jy]]
    # couplings into Dirichlet nodes vanish because u = 0 there
    keep_l = ix - 1 > 0
    keep_r = ix + 1 < n - 1
    keep_d = iy - 1 > 0
    keep_u = iy + 1 < n - 1
    masks = [keep_l, keep_r, keep_d, keep_u, np.ones_like(keep_l)]
    r = np.concatenate([a[m] for a, m in zip(rows, masks)])
    c = np.concatenate([a[m] for a, m in zip(cols, masks)])
    v = np.concatenate([a[m] for a, m in zip(vals, masks)])
    bnd = _boundary_indices(n)
    r = np.concatenate([r, bnd])
    c = np.concatenate([c, bnd])
    v = np.concatenate([v, np.ones(bnd.size)])
    m = sp.csr_matrix((v, (r, c)), shape=(n * n, n * n), dtype=np.complex128)
    m.sum_duplicates()
    m.sort_indices()
    return m


def _boundary_indices(n):
    mask = np.zeros((n, n), dtype=bool)
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
    return np.flatnonzero(mask.ravel())


@dataclass(frozen=True, eq=False)
class WaveNumberField:
    values: np.ndarray
    k0: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if np.any(v <= 0):
            raise ValueError("wave numbers must be positive")
        object.__setattr__(self, "values", v)


def _as_values(k_field) -> np.ndarray:
    if isinstance(k_field, WaveNumberField):
        return k_field.values
    return np.asarray(k_field, dtype=float).ravel()


class HelmholtzModel:
    """Discrete ``Delta + k^2`` on an ECS grid, with cached factorizations.

    ``solver="direct"`` factors each operator once with SuperLU and reuses the
    factors for every angle and for the conjugate-transpose (adjoint) solves.
    ``solver="gmres"`` runs :func:`solve_nonhermitian` per angle, optionally
    on a thread pool; results are always assembled in angle order.
    """

    def __init__(self, grid: EcsGrid, k0: float = 1.0, solver: str = "direct",
                 tol: float = TOLERANCES.direct_tol, restart: int = TOLERANCES.gmres_restart,
                 workers: int = 1, cache_size: int = 4):
        if solver not in ("direct", "gmres"):
            raise ValueError(f"unknown solver {solver!r}")
        self.grid = grid
        self.k0 = float(k0)
        self.solver = solver
        self.tol = tol
        self.restart = restart
        self.workers = max(1, int(workers))
        self.laplacian = _laplacian(grid)
        self.interior = grid.interior_indices()
        self.boundary = _boundary_indices(grid.n)
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size
        self.last_reports: list[SolveReport] = []

    def full_k(self, k_field) -> np.ndarray:
        k = np.full(self.grid.size, self.k0)
        vals = _as_values(k_field)
        if vals.size != self.interior.size:
            raise ValueError(f"k field has {vals.size} values, grid interior has {self.interior.size}")
        k[self.interior] = vals
        return k

    def _diagonal(self, k_field) -> np.ndarray:
        d = self.full_k(k_field) ** 2
        d[self.boundary] = 0.0
        return d

    def operator(self, k_field) -> sp.csr_matrix:
        return (self.laplacian + sp.diags(self._diagonal(k_field))).tocsr()

    def _key(self, k_field):
        return hashlib.blake2b(_as_values(k_field).tobytes(), digest_size=16).digest()

    def _factor(self, k_field):
        key = self._key(k_field)
        if key in self._cache:
            self._cache.move_to_end(key)
            return self._cache[key]
        lu = spla.splu(self.operator(k_field).tocsc())
        self._cache[key] = lu
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return lu

    def solve(self, k_field, rhs: np.ndarray, adjoint: bool = False) -> np.ndarray:
        """Solve ``H u = rhs`` (or ``H^* u = rhs``) for each row of ``rhs``."""
        rhs = np.atleast_2d(np.asarray(rhs, dtype=np.complex128))
        if self.solver == "direct":
            lu = self._factor(k_field)
            out = lu.solve(np.ascontiguousarray(rhs.T), trans="H" if adjoint else "N").T
            self.last_reports = [SolveReport(1, 0.0, True, "superlu", "direct")] * rhs.shape[0]
            return np.ascontiguousarray(out)
        A = self.operator(k_field)
        if adjoint:
            A = A.conj().T.tocsr()
        csr = ComplexSparseMatrix.from_scipy(A)

        def one(b):
            return solve_nonhermitian(csr, b, tol=self.tol, restart=self.restart)

        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                results = list(pool.map(one, rhs))
        else:
            results = [one(b) for b in rhs]
        self.last_reports = [rep for _, rep in results]
        for rep in self.last_reports:
            if not rep.converged:
                raise ForwardSolveError(f"Helmholtz solve did not converge ({rep.status})", rep)
        return np.array([x for x, _ in results])


def assemble_helmholtz(grid: EcsGrid, k_field, k0: float = 1.0) -> ComplexSparseMatrix:
    """Five-point ``Delta + k^2`` over the full ECS grid as a CSR matrix."""
    model = HelmholtzModel(grid, k0)
    return ComplexSparseMatrix.from_scipy(model.operator(k_field))


def incoming_waves(grid: EcsGrid, angles, k0: float) -> np.ndarray:
    """Plane waves ``exp(i k0 (cos t x + sin t y))`` on the real parts of the coordinates."""
    x = grid.coords_x.real
    y = grid.coords_y.real
    angles = np.asarray(angles, dtype=float)
    phase_x = np.exp(1j * k0 * np.cos(angles)[:, None] * x[None, :])
    phase_y = np.exp(1j * k0 * np.sin(angles)[:, None] * y[None, :])
    return (phase_y[:, :, None] * phase_x[:, None, :]).reshape(angles.size, -1)


def make_phantom(grid: EcsGrid, k0: float = 1.0, radius: float = 2.5) -> WaveNumberField:
    """Three unit Gaussians on a circle, ``k = k0 sqrt(1 + chi)`` on the interior."""
    if radius >= grid.config.half_width:
        raise ValueError("radius must be smaller than the domain half width")
    ax = grid.interior_axis
    y, x = np.meshgrid(ax, ax, indexing="ij")
    chi = contrast(x.ravel(), y.ravel(), radius)
    return WaveNumberField(k0 * np.sqrt(1.0 + chi), k0)


def contrast(x, y, radius: float = 2.5):
    chi = 0.0
    for t in (0.0, 2 * np.pi / 3, 4 * np.pi / 3):
        chi = chi + np.exp(-(x - radius * np.cos(t)) ** 2 - (y - radius * np.sin(t)) ** 2)
    return chi


def gaussian_noise(seed: int, size: int) -> np.ndarray:
    """Standard normal draws from PCG64 raw output via Box-Muller.

    Uniforms are ``((raw >> 11) + 1) * 2**-53`` in ``(0, 1]``; pairs
    ``(u1, u2)`` map to ``sqrt(-2 ln u1) * (cos 2 pi u2, sin 2 pi u2)``.
    """
    n_pairs = (size + 1) // 2
    raw = np.random.PCG64(seed).random_raw(2 * n_pairs)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53
    u1, u2 = u[0::2], u[1::2]
    rad = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * n_pairs)
    z[0::2] = rad * np.cos(2 * np.pi * u2)
    z[1::2] = rad * np.sin(2 * np.pi * u2)
    return z[:size]


@dataclass(eq=False)
class ScatteringProblem:
    grid: EcsGrid
    model: HelmholtzModel
    angles: np.ndarray
    k0: float
    restriction: np.ndarray
    observations: Optional[np.ndarray] = None
    error_norm: float = 0.0
    eta: float = 1.0
    noise_sigma: float = 0.0
    rng_seed: int = 0
    exact_field: Optional[np.ndarray] = None
    u_in: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float)
        self.restriction = np.asarray(self.restriction, dtype=np.int64)
        self.u_in = incoming_waves(self.grid, self.angles, self.k0)

    @property
    def n_angles(self) -> int:
        return self.angles.size

    @property
    def n_observations(self) -> int:
        return self.n_angles * self.restriction.size

    @property
    def eta_eps(self) -> float:
        return self.eta * self.error_norm

    @property
    def n_unknowns(self) -> int:
        return self.grid.interior_n ** 2

    def prior(self) -> np.ndarray:
        return np.full(self.n_unknowns, self.k0)

    def relative_error(self, k) -> float:
        if self.exact_field is None:
            return float("nan")
        return float(np.linalg.norm(_as_values(k) - self.exact_field) / np.linalg.norm(self.exact_field))


def make_problem(grid_config: GridConfig = GridConfig(), n_angles: int = 8, k0: float = 1.0,
                 eta: float = 1.0, solver: str = "direct", workers: int = 1) -> ScatteringProblem:
    """Grid, operator and geometry; no data yet (see :func:`attach_data`)."""
    grid = build_grid(grid_config)
    model = HelmholtzModel(grid, k0, solver=solver, workers=workers)
    angles = 2 * np.pi * np.arange(n_angles) / n_angles
    return ScatteringProblem(grid, model, angles, k0, grid.ring_indices(), eta=eta)


def forward_rhs(problem: ScatteringProblem, k_field) -> np.ndarray:
    k = problem.model.full_k(k_field)
    return (problem.k0 ** 2 - k ** 2)[None, :] * problem.u_in


def forward_solve(problem: ScatteringProblem, k_field) -> np.ndarray:
    """Scattered waves for every angle, shape ``(n_angles, N*N)``."""
    return problem.model.solve(k_field, forward_rhs(problem, k_field))


def restrict(problem: ScatteringProblem, u) -> np.ndarray:
    """Ring values of a full-grid field (or stack of fields)."""
    return np.asarray(u)[..., problem.restriction]


def restrict_adjoint(problem: ScatteringProblem, r) -> np.ndarray:
    """Inject ring values back onto the full grid (zero elsewhere)."""
    r = np.asarray(r)
    out = np.zeros(r.shape[:-1] + (problem.grid.size,), dtype=np.complex128)
    out[..., problem.restriction] = r
    return out


def generate_observations(problem: ScatteringProblem, exact_field, sigma: float, seed: int):
    """Noisy ring data ``L u + sigma (e1 + i e2)`` and ``eps = ||L u - data||^2``."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    clean = restrict(problem, forward_solve(problem, exact_field))
    m = clean.size
    z = gaussian_noise(seed, 2 * m)
    noise = sigma * (z[:m] + 1j * z[m:]).reshape(clean.shape)
    data = clean + noise
    return data, float(np.sum(np.abs(clean - data) ** 2))


def noise_level(clean, data) -> float:
    return float(np.sum(np.abs(clean - data) ** 2) / np.sum(np.abs(clean) ** 2))


def calibrate_sigma(problem: ScatteringProblem, exact_field, target_level: float, seed: int = 0,
                    clean: Optional[np.ndarray] = None) -> float:
    """Noise scale whose expected noise level ``||noise||^2 / ||Lu||^2`` is ``target_level``."""
    if not 0 <= target_level < 1:
        raise ValueError("target_level must lie in [0, 1)")
    if clean is None:
        clean = restrict(problem, forward_solve(problem, exact_field))
    return float(np.sqrt(target_level) * np.linalg.norm(clean) / np.sqrt(2 * clean.size))


def attach_data(problem: ScatteringProblem, exact_field, seed: int, noise_target: float = 0.1,
                sigma: Optional[float] = None) -> ScatteringProblem:
    """Synthesize observations in place and return the problem."""
    if sigma is None:
        sigma = calibrate_sigma(problem, exact_field, noise_target, seed)
    data, eps = generate_observations(problem, exact_field, sigma, seed)
    problem.observations = data
    problem.error_norm = eps
    problem.noise_sigma = sigma
    problem.rng_seed = seed
    problem.exact_field = _as_values(exact_field).copy()
    return problem
