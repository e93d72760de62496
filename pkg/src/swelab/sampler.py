"""Exact Gaussian sampling of the field on finite (tau, lam) grids."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from . import kernels, riesz
from .errors import ConditioningError, DomainError, ResourceError

DEFAULT_CAP = 4096
DEFAULT_MAX_JITTER = 1e-6
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """Tensor grid ``tau_values x lambda_values``; points are ordered tau-major."""

    tau_values: Tuple[float, ...]
    lambda_values: Tuple[float, ...]
    time_band: riesz.Band = None
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        taus = tuple(float(v) for v in self.tau_values)
        lams = tuple(float(v) for v in self.lambda_values)
        for name, vals in (("tau", taus), ("lambda", lams)):
            if not vals:
                raise DomainError(f"{name} grid is empty")
            if any(v < 0 or not math.isfinite(v) for v in vals):
                raise DomainError(f"{name} grid values must be finite and non-negative")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise DomainError(f"{name} grid must be strictly increasing")
        object.__setattr__(self, "tau_values", taus)
        object.__setattr__(self, "lambda_values", lams)
        object.__setattr__(self, "time_band", riesz._check_band(self.time_band))
        if len(taus) * len(lams) > self.cap:
            raise ResourceError(f"grid has {len(taus) * len(lams)} points, cap is {self.cap}")

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.tau_values), len(self.lambda_values)

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    def points(self) -> Tuple[np.ndarray, np.ndarray]:
        tau, lam = np.meshgrid(self.tau_values, self.lambda_values, indexing="ij")
        return tau.ravel(), lam.ravel()

    def index(self, i_tau: int, i_lam: int) -> int:
        return i_tau * self.shape[1] + i_lam


@dataclass(frozen=True)
class CovMatrix:
    entries: np.ndarray
    jitter_used: float = 0.0
    factor: Optional[np.ndarray] = None
    grid: Optional[GridSpec] = None

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def is_factorized(self) -> bool:
        return self.factor is not None

    def reconstruction_error(self) -> float:
        if self.factor is None:
            raise ValueError("matrix is not factorized")
        target = self.entries + self.jitter_used * np.diag((np.diag(self.entries) > 0).astype(float))
        return float(np.max(np.abs(self.factor @ self.factor.T - target))) if self.dim else 0.0


@dataclass(frozen=True)
class FieldSample:
    grid: GridSpec
    values: np.ndarray
    seed: int
    replication_id: int

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise DomainError(f"values shape {self.values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("sample values must be finite")
        self.values.setflags(write=False)

    def column(self, i_tau: int) -> np.ndarray:
        return self.values[i_tau]


# ---------------------------------------------------------------------------
# Assembly and factorization
# ---------------------------------------------------------------------------


def points_covariance(p: riesz.ModelParams, tau, lam, band: riesz.Band = None, backend=None) -> np.ndarray:
    t, x = riesz.from_rotated(np.asarray(tau, dtype=float), np.asarray(lam, dtype=float))
    lo, hi = (0.0, math.inf) if band is None else band
    C = kernels.cone_covariance_matrix(t, x, lo, hi, p.beta, backend=backend)
    return 0.5 * (C + C.T)


def assemble_covariance(p: riesz.ModelParams, grid: GridSpec, backend=None) -> CovMatrix:
    tau, lam = grid.points()
    return CovMatrix(points_covariance(p, tau, lam, grid.time_band, backend), grid=grid)


def _check_symmetric(a: np.ndarray):
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError(f"covariance must be square, got shape {a.shape}")
    if a.size and np.max(np.abs(a - a.T)) > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(a)))):
        raise DomainError("covariance matrix is not symmetric to 1e-12")


def jitter_schedule(max_jitter: float):
    yield 0.0
    j = 1e-12
    while j <= max_jitter * (1 + 1e-9):
        yield j
        j *= 10.0


def factorize(m: CovMatrix, max_jitter: float = DEFAULT_MAX_JITTER, pivoted: bool = False) -> CovMatrix:
    """Cholesky-factor ``m``; zero-variance rows are carried as exact zeros.

    With ``pivoted=True`` a rank-revealing pivoted Cholesky is used instead, so
    exactly rank-deficient matrices get a low-rank factor and no jitter.
    """
    a = np.asarray(m.entries, dtype=float)
    _check_symmetric(a)
    n = a.shape[0]
    diag = np.diag(a)
    if np.any(diag < -SYMMETRY_TOL):
        raise ConditioningError("negative variance on the diagonal", float(diag.min()))
    active = np.flatnonzero(diag > 0)
    if pivoted:
        factor = _pivoted_factor(a, active)
        return CovMatrix(a, 0.0, factor, m.grid)
    block = a[np.ix_(active, active)]
    eye = np.eye(active.size)
    for jitter in jitter_schedule(max_jitter):
        try:
            low = np.linalg.cholesky(block + jitter * eye)
        except np.linalg.LinAlgError:
            continue
        factor = np.zeros((n, active.size))
        factor[active] = low
        return CovMatrix(a, jitter, factor, m.grid)
    min_eig = float(np.linalg.eigvalsh(block)[0]) if active.size else 0.0
    raise ConditioningError(
        f"Cholesky failed with jitter up to {max_jitter:g}; min eigenvalue {min_eig:.3e}", min_eig
    )


def _pivoted_factor(a: np.ndarray, active: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    factor = np.zeros((n, 0))
    if active.size == 0:
        return factor
    block = np.array(a[np.ix_(active, active)], order="F")
    tol = 1e-13 * float(np.max(np.diag(block)))
    c, piv, rank, info = scipy.linalg.lapack.dpstrf(block, lower=1, tol=tol)
    if info < 0:
        raise ConditioningError(f"pivoted Cholesky failed (info={info})")
    low = np.tril(c)[:, :rank]
    perm = piv - 1
    out = np.zeros((active.size, rank))
    out[perm] = low
    factor = np.zeros((n, rank))
    factor[active] = out
    return factor


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def sample_values(m: CovMatrix, seed: int, reps, backend=None) -> np.ndarray:
    """Flat samples of shape (len(reps), dim); row r depends only on (seed, reps[r])."""
    if m.factor is None:
        raise ValueError("matrix must be factorized before sampling")
    reps = np.atleast_1d(np.asarray(reps, dtype=np.int64))
    rank = m.factor.shape[1]
    if rank == 0:
        return np.zeros((reps.size, m.dim))
    z = kernels.counter_normals(seed, reps, rank, backend=backend)
    return z @ m.factor.T


def sample(m: CovMatrix, seed: int, n_reps: int, first_replication: int = 0, grid: Optional[GridSpec] = None) -> List[FieldSample]:
    grid = grid or m.grid
    if grid is None:
        grid = GridSpec((0.0,), tuple(float(i) for i in range(m.dim)), cap=max(m.dim, 1))
    reps = np.arange(first_replication, first_replication + n_reps)
    flat = sample_values(m, seed, reps)
    return [
        FieldSample(grid, flat[k].reshape(grid.shape).copy(), int(seed), int(r)) for k, r in enumerate(reps)
    ]


def v1_covariance_matrix(p: riesz.ModelParams, tau0: float, lambdas) -> np.ndarray:
    lam = np.asarray(lambdas, dtype=float)
    e = 2.0 - p.beta
    coef = riesz.v1_coefficient(p, tau0)
    return coef * (lam[:, None] ** e + lam[None, :] ** e - np.abs(lam[:, None] - lam[None, :]) ** e)


def sample_fbm_crosssection(
    p: riesz.ModelParams, tau0: float, lambdas: Sequence[float], seed: int, n_reps: int, max_jitter: float = DEFAULT_MAX_JITTER
) -> List[FieldSample]:
    """Samples of v~_1(tau0, .) = u~_1(tau0, .) - u~_1(tau0, 0) on ``lambdas``."""
    if tau0 <= 0:
        raise DomainError(f"tau0 must be positive, got {tau0}")
    grid = GridSpec((tau0,), tuple(lambdas), riesz.early_band(tau0))
    m = factorize(CovMatrix(v1_covariance_matrix(p, tau0, grid.lambda_values), grid=grid), max_jitter)
    return sample(m, seed, n_reps)


# ---------------------------------------------------------------------------
# Uniform-grid fBm paths by circulant embedding
# ---------------------------------------------------------------------------

PATH_CAP = 1 << 22


def fgn_autocovariance(hurst: float, n: int) -> np.ndarray:
    k = np.arange(n, dtype=float)
    e = 2.0 * hurst
    return 0.5 * (np.abs(k + 1) ** e - 2.0 * k**e + np.abs(k - 1) ** e)


def fbm_increments_circulant(hurst: float, n: int, seed: int, reps, backend=None) -> np.ndarray:
    """Unit-step fractional Gaussian noise of length ``n``, shape (len(reps), n).

    Exact (Davies-Harte): the circulant embedding of fGn is nonnegative definite.
    """
    if n > PATH_CAP:
        raise ResourceError(f"path length {n} exceeds cap {PATH_CAP}")
    reps = np.atleast_1d(reps)
    if n == 0:
        return np.zeros((reps.size, 0))
    g = fgn_autocovariance(hurst, n + 1)
    row = np.concatenate([g[: n + 1], g[n - 1 : 0 : -1]])
    size = row.size
    eig = np.fft.fft(row).real
    if eig.min() < -1e-10 * eig.max():
        raise ConditioningError("circulant embedding is not nonnegative definite", float(eig.min()))
    scale = np.sqrt(np.maximum(eig, 0.0) / size)
    z = kernels.counter_normals(seed, reps, 2 * size, backend=backend)
    w = (z[:, :size] + 1j * z[:, size:]) * scale
    return np.fft.fft(w, axis=1).real[:, :n]


def v1_path_circulant(
    p: riesz.ModelParams, tau0: float, lam0: float, step: float, n_steps: int, seed: int, reps, backend=None
) -> np.ndarray:
    """v~_1(tau0, lam0 + k*step) - v~_1(tau0, lam0) for k = 0..n_steps."""
    hurst = p.hurst
    sd = riesz.v1_unit_scale(p, tau0) * step**hurst
    inc = fbm_increments_circulant(hurst, n_steps, seed, reps, backend) * sd
    out = np.zeros((inc.shape[0], n_steps + 1))
    np.cumsum(inc, axis=1, out=out[:, 1:])
    return out


# ---------------------------------------------------------------------------
# Hurst estimation
# ---------------------------------------------------------------------------


def hurst_variance_ratio(paths: np.ndarray, lags: Sequence[int]) -> float:
    """Slope/2 of log mean squared increment against log lag (uniform grid)."""
    paths = np.atleast_2d(paths)
    msq = [np.mean((paths[:, lag:] - paths[:, :-lag]) ** 2) for lag in lags]
    slope = np.polyfit(np.log(lags), np.log(msq), 1)[0]
    return float(slope / 2.0)


def hurst_from_covariance(cov: np.ndarray, lags: Sequence[int]) -> float:
    """Same regression on exact second moments taken from a covariance matrix."""
    d = np.diag(cov)
    msq = []
    for lag in lags:
        i = np.arange(cov.shape[0] - lag)
        msq.append(np.mean(d[i + lag] + d[i] - 2.0 * cov[i + lag, i]))
    slope = np.polyfit(np.log(lags), np.log(msq), 1)[0]
    return float(slope / 2.0)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def fmt(v: float) -> str:
    return repr(float(v))


def write_csv(samples: Sequence[FieldSample], path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("replication_id,tau,lambda,value\n")
        for s in samples:
            for i, tau in enumerate(s.grid.tau_values):
                for j, lam in enumerate(s.grid.lambda_values):
                    fh.write(f"{s.replication_id},{fmt(tau)},{fmt(lam)},{fmt(s.values[i, j])}\n")


def write_binary(samples: Sequence[FieldSample], path, beta: float) -> Path:
    """Write a column-major (n_tau, n_lambda, n_reps) double array plus a JSON header.

    The header goes next to ``path`` with a ``.json`` suffix and is returned.
    """
    path = Path(path)
    if not samples:
        raise ValueError("no samples to export")
    grid = samples[0].grid
    cube = np.stack([s.values for s in samples], axis=-1)
    path.write_bytes(np.asfortranarray(cube, dtype="<f8").tobytes(order="F"))
    header = {
        "dims": list(cube.shape),
        "order": "column-major",
        "dtype": "float64-le",
        "seed": samples[0].seed,
        "replication_ids": [s.replication_id for s in samples],
        "beta": beta,
        "band": None if grid.time_band is None else [grid.time_band[0], _json_inf(grid.time_band[1])],
        "tau_values": list(grid.tau_values),
        "lambda_values": list(grid.lambda_values),
    }
    head_path = path.with_suffix(".json")
    head_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return head_path


def read_binary(path) -> Tuple[np.ndarray, dict]:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    data = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(header["dims"], order="F")
    return data, header


def _json_inf(v: float):
    return "inf" if math.isinf(v) else v
