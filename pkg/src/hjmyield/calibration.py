"""Estimation of the constant covariance ``Sigma = L L'`` from a yield panel.

The raw estimator is the second-moment matrix of the scaled increments
``Upsilon_k / h(y_k)`` divided by ``K * delta``.  Because the increments
carry a drift of order ``delta``, this overstates ``Sigma`` by a term of order
``delta``; the correction solves, entry by entry, the moment identity

    s_bias_ij = s_ij + delta * mean_k f_ij(r_k, y_k; s)

where ``f`` is the squared scaled drift.  Diagonal entries solve a quadratic,
off-diagonal entries are then linear.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .dynamics import ScalingSpec, UpsilonSeries, compute_upsilon, varsigma
from .errors import CalibrationError, GridError, ScalingError
from .market_data import KNOT_TOL, MaturityGrid, YieldPanel, parse_maturity_label

LINEAR_LIMIT = 1e-14


@dataclass(frozen=True)
class ScaledReturnMatrix:
    """``values[:, k]`` is ``Upsilon_k / h(y_k)``; equals ``sqrt(K) * C``."""

    values: np.ndarray
    delta: float

    @property
    def K(self) -> int:
        return self.values.shape[1]

    @property
    def d(self) -> int:
        return self.values.shape[0]

    def second_moment(self) -> np.ndarray:
        """``C C'`` i.e. ``values @ values.T / K``."""
        v = self.values
        return (v @ v.T) / self.K


def scaled_returns(upsilon: UpsilonSeries, spec: ScalingSpec) -> ScaledReturnMatrix:
    if upsilon.K < 1:
        raise CalibrationError("no increments to scale")
    out = np.empty_like(upsilon.values)
    for k in range(upsilon.K):
        try:
            out[:, k] = upsilon.values[:, k] / varsigma(upsilon.shifted[k], spec)
        except ScalingError as exc:
            raise ScalingError(f"increment {k + 1}: {exc}") from exc
    return ScaledReturnMatrix(out, upsilon.grid.delta)


def raw_s(scaled: ScaledReturnMatrix, eval_curve, spec: ScalingSpec) -> np.ndarray:
    """``S_K(y) = diag(h(y)) C C' diag(h(y))``, the raw estimate of ``delta * Sigma(y)``."""
    hy = varsigma(eval_curve, spec)
    return hy[:, None] * scaled.second_moment() * hy[None, :]


@dataclass(frozen=True)
class BiasMoments:
    """Sample averages over ``k`` entering the bias correction.

    ``hh[i, j] = mean h_i h_j``, ``rr[i, j] = mean r^2 / (h_i h_j)`` and
    ``rh[i, j] = mean r h_i / h_j`` with ``h_i = h(y_k[i])`` and ``r = r_k``.
    """

    delta: float
    K: int
    mean_r: float
    hh: np.ndarray
    rr: np.ndarray
    rh: np.ndarray
    s_bias: np.ndarray


def bias_moments(upsilon: UpsilonSeries, spec: ScalingSpec, scaled: ScaledReturnMatrix | None = None) -> BiasMoments:
    K = upsilon.K
    if K < 1:
        raise CalibrationError("bias correction needs K >= 1")
    upsilon.grid.require_short_end()
    if scaled is None:
        scaled = scaled_returns(upsilon, spec)
    H = np.vstack([varsigma(y, spec) for y in upsilon.shifted])
    r = upsilon.short_yields[:K]
    inv = 1.0 / H
    rinv = r[:, None] * inv
    return BiasMoments(
        delta=upsilon.grid.delta,
        K=K,
        mean_r=float(r.mean()),
        hh=(H.T @ H) / K,
        rr=(rinv.T @ rinv) / K,
        rh=((r[:, None] * H).T @ inv) / K,
        s_bias=scaled.second_moment() / upsilon.grid.delta,
    )


def bias_inputs(moments: BiasMoments, i: int) -> tuple[float, float, float]:
    """Coefficients ``(a_i, b, c_i)`` of ``a s^2 + b s + c = 0`` for ``s_ii``."""
    dl = moments.delta
    a = dl / 4 * moments.hh[i, i]
    b = 1.0 - dl * moments.mean_r
    c = -moments.s_bias[i, i] + dl * moments.rr[i, i]
    return float(a), float(b), float(c)


def solve_diag(a: float, b: float, c: float) -> float:
    """Root ``(-b + sqrt(b^2 - 4ac)) / (2a)``, continuous as ``a -> 0``.

    Raises:
        CalibrationError: negative discriminant, or ``b <= 0`` in the
            linear limit.
    """
    if a < 0:
        raise CalibrationError("quadratic coefficient must be non-negative")
    if a < LINEAR_LIMIT:
        if b <= 0:
            raise CalibrationError("bias quadratic unsolvable: b <= 0 in linear limit")
        return -c / b
    disc = b * b - 4.0 * a * c
    if disc < 0:
        raise CalibrationError(f"bias quadratic unsolvable: discriminant {disc:.3e} < 0")
    root = np.sqrt(disc)
    if b > 0:
        # same root, without cancellation for small a*c
        return float(-2.0 * c / (b + root))
    return float((-b + root) / (2.0 * a))


def solve_offdiag(moments: BiasMoments, i: int, j: int, s_ii: float, s_jj: float) -> float:
    dl = moments.delta
    correction = (
        moments.rr[i, j]
        + 0.25 * moments.hh[i, j] * s_ii * s_jj
        - 0.5 * moments.rh[i, j] * s_ii
        - 0.5 * moments.rh[j, i] * s_jj
    )
    return float(moments.s_bias[i, j] - dl * correction)


def correct_bias(moments: BiasMoments) -> np.ndarray:
    d = moments.s_bias.shape[0]
    s = np.empty((d, d))
    for i in range(d):
        try:
            s[i, i] = solve_diag(*bias_inputs(moments, i))
        except CalibrationError as exc:
            raise CalibrationError(f"diagonal ({i}, {i}): {exc}") from exc
    for i in range(d):
        for j in range(i + 1, d):
            s[i, j] = s[j, i] = solve_offdiag(moments, i, j, s[i, i], s[j, j])
    return s


def correlation_matrix(s) -> tuple[np.ndarray, np.ndarray]:
    """Normalise ``s`` to unit diagonal.

    Returns ``(corr, undefined)`` where ``undefined`` flags maturities with
    ``s_ii <= 0``; their rows and columns are NaN.
    """
    s = np.asarray(s, dtype=float)
    diag = np.diag(s).copy()
    undefined = ~(diag > 0)
    sd = np.sqrt(np.where(undefined, np.nan, diag))
    corr = s / np.outer(sd, sd)
    ok = ~undefined
    corr[np.ix_(ok, ok)] = 0.5 * (corr[np.ix_(ok, ok)] + corr[np.ix_(ok, ok)].T)
    idx = np.flatnonzero(ok)
    corr[idx, idx] = 1.0
    return corr, undefined


@dataclass(frozen=True)
class PCAReport:
    labels: tuple[str, ...]
    shares: np.ndarray
    cumulative: np.ndarray
    excluded: tuple[str, ...] = ()

    def top(self, n: int) -> float:
        return float(self.cumulative[n - 1])


def _shares(corr: np.ndarray) -> np.ndarray:
    w = np.linalg.eigvalsh(corr)[::-1]
    return w / w.sum()


@dataclass(frozen=True)
class CovarianceEstimate:
    """Raw and bias-corrected estimates of ``Sigma`` with derived diagnostics."""

    labels: tuple[str, ...]
    s_bias: np.ndarray
    s_corrected: np.ndarray
    K: int
    delta: float
    theta: float
    beta: np.ndarray = field(init=False)
    correlation: np.ndarray = field(init=False)
    undefined: tuple[str, ...] = field(init=False)
    eigen_shares: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "beta", self.s_bias - self.s_corrected)
        corr, undef = correlation_matrix(self.s_corrected)
        object.__setattr__(self, "correlation", corr)
        object.__setattr__(self, "undefined", tuple(l for l, u in zip(self.labels, undef) if u))
        ok = ~undef
        shares = _shares(corr[np.ix_(ok, ok)]) if ok.any() else np.array([])
        object.__setattr__(self, "eigen_shares", shares)

    @property
    def min_eigenvalue(self) -> float | None:
        """Smallest eigenvalue of the defined correlation block.

        The corrected estimate is not constrained to be positive
        semi-definite; a negative value here means a maturity's variance
        is too small to separate from its drift.  Nothing is clipped.
        """
        ok = np.array([l not in self.undefined for l in self.labels])
        if not ok.any():
            return None
        return float(np.linalg.eigvalsh(self.correlation[np.ix_(ok, ok)]).min())

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "s_bias": _matrix_json(self.s_bias),
            "s_corrected": _matrix_json(self.s_corrected),
            "beta": _matrix_json(self.beta),
            "correlation": _matrix_json(self.correlation),
            "undefined_correlation": list(self.undefined),
            "eigen_shares": [float(x) for x in self.eigen_shares],
            "correlation_min_eigenvalue": self.min_eigenvalue,
            "K": int(self.K),
            "delta": float(self.delta),
            "theta": float(self.theta),
        }


def _matrix_json(a: np.ndarray) -> list[list[float | None]]:
    return [[None if not np.isfinite(v) else float(v) for v in row] for row in np.asarray(a)]


def calibrate(panel: YieldPanel, spec: ScalingSpec) -> CovarianceEstimate:
    """Full pipeline: increments, scaled returns, raw and corrected ``Sigma``."""
    if panel.K < 2:
        raise CalibrationError("calibration needs K >= 2 increments")
    ups = compute_upsilon(panel)
    scaled = scaled_returns(ups, spec)
    moments = bias_moments(ups, spec, scaled)
    s = correct_bias(moments)
    return CovarianceEstimate(panel.grid.labels, moments.s_bias, s, panel.K, panel.grid.delta, spec.theta)


def pca_report(source, subset=None, labels=None) -> PCAReport:
    """Descending eigenvalue shares of a correlation matrix.

    ``source`` is a :class:`CovarianceEstimate` or a covariance-like matrix
    (normalised here).  ``subset`` selects maturities by index or label.
    Maturities with undefined correlation are left out and listed in
    ``excluded``.
    """
    if isinstance(source, CovarianceEstimate):
        s = source.s_corrected
        labels = source.labels
    else:
        s = np.asarray(source, dtype=float)
        labels = tuple(labels) if labels is not None else tuple(str(i) for i in range(s.shape[0]))
    idx = list(range(s.shape[0]))
    if subset is not None:
        idx = [labels.index(k) if isinstance(k, str) else int(k) for k in subset]
        if not idx:
            raise ValueError("empty maturity subset")
        if any(not 0 <= i < s.shape[0] for i in idx):
            raise IndexError("subset index out of range")
    sub = s[np.ix_(idx, idx)]
    sub_labels = tuple(labels[i] for i in idx)
    corr, undef = correlation_matrix(sub)
    ok = ~undef
    if not ok.any():
        raise CalibrationError("no maturity with positive variance")
    shares = _shares(corr[np.ix_(ok, ok)])
    return PCAReport(
        tuple(l for l, u in zip(sub_labels, undef) if not u),
        shares,
        np.cumsum(shares),
        tuple(l for l, u in zip(sub_labels, undef) if u),
    )


def convergence_series(panel: YieldPanel, spec: ScalingSpec) -> dict[str, np.ndarray]:
    """Diagonal ``s_bias_ii(K')`` and ``s_ii(K')`` for every prefix ``K' = 1..K``.

    Entries where the quadratic has no real root are NaN.
    """
    ups = compute_upsilon(panel)
    panel.grid.require_short_end()
    scaled = scaled_returns(ups, spec).values
    H = np.vstack([varsigma(y, spec) for y in ups.shifted])
    r = ups.short_yields[: ups.K]
    n = np.arange(1, ups.K + 1)[:, None]
    dl = panel.grid.delta
    s_bias = np.cumsum(scaled.T**2, axis=0) / n / dl
    a = dl / 4 * np.cumsum(H**2, axis=0) / n
    b = 1.0 - dl * np.cumsum(r)[:, None] / n
    c = -s_bias + dl * np.cumsum((r[:, None] / H) ** 2, axis=0) / n
    s = np.full_like(s_bias, np.nan)
    for k in range(s.shape[0]):
        for i in range(s.shape[1]):
            try:
                s[k, i] = solve_diag(a[k, i], b[k, 0], c[k, i])
            except CalibrationError:
                pass
    return {"K": n[:, 0], "s_bias": s_bias, "s_corrected": s}


def coarse_grid(grid: MaturityGrid, factor: int) -> MaturityGrid:
    """Grid with step ``factor * delta`` keeping maturities at or above the new step."""
    delta = grid.delta * factor
    keep = [m for m in grid.maturities if m >= delta - KNOT_TOL]
    if not keep or abs(keep[0] - delta) > KNOT_TOL:
        raise GridError(f"coarse grid step {delta!r} is not one of the maturities")
    return grid.subset(keep, delta=delta)


@dataclass(frozen=True)
class GridComparison:
    labels: tuple[str, ...]
    fine: CovarianceEstimate
    coarse: CovarianceEstimate
    relative_difference: np.ndarray


def grid_compare(panel: YieldPanel, coarse_factor: int, spec: ScalingSpec) -> GridComparison:
    """Relative differences ``(s_fine - s_coarse) / s_coarse`` on shared maturities.

    The coarse panel keeps every ``coarse_factor``-th row.  Zero coarse
    entries give NaN ratios.
    """
    if coarse_factor < 1:
        raise ValueError("coarse_factor must be a positive integer")
    if panel.K % coarse_factor:
        raise GridError(f"coarse_factor {coarse_factor} does not divide K = {panel.K}")
    cgrid = coarse_grid(panel.grid, coarse_factor) if coarse_factor > 1 else panel.grid
    coarse_panel = panel.every(coarse_factor, cgrid)
    if coarse_panel.K < 2:
        raise CalibrationError("insufficient rows after subsampling")
    fine = calibrate(panel, spec)
    coarse = calibrate(coarse_panel, spec)
    idx = [panel.grid.index_of(m) for m in cgrid.maturities]
    sf = fine.s_corrected[np.ix_(idx, idx)]
    sc = coarse.s_corrected
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(sc != 0, (sf - sc) / sc, np.nan)
    return GridComparison(cgrid.labels, fine, coarse, rel)


def load_table1() -> tuple[tuple[str, ...], np.ndarray]:
    """Bundled 17 x 17 covariance estimate for CHF yields (weekly grid)."""
    text = resources.files("hjmyield.data").joinpath("table1.csv").read_text()
    return read_matrix_csv(text)


def read_matrix_csv(text: str) -> tuple[tuple[str, ...], np.ndarray]:
    """Square labelled matrix: header ``label,<l1>,...``; one row per label."""
    import csv

    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    header = [h.strip() for h in rows[0][1:]]
    names = [r[0].strip() for r in rows[1:]]
    if len(names) != len(header):
        raise ValueError("matrix CSV must be square")
    for a, b in zip(header, names):
        if abs(parse_maturity_label(a) - parse_maturity_label(b)) > 1e-9:
            raise ValueError(f"row label {b!r} does not match column {a!r}")
    mat = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    return tuple(header), mat
