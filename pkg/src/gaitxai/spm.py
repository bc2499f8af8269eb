"""One-dimensional statistical parametric mapping over stance-phase curves.

Each of the six force components is tested as its own 101-node field.
The random-field-theory critical threshold for a t-field uses the 1D
Euler-characteristic expected-value approximation

    P(max t > u) ~ S_t(u; df) + R * (sqrt(4 ln 2) / (2 pi)) * (1 + u^2/df)^(-(df-1)/2)

with resel count R = (Q - 1) / FWHM and S_t the t survival function. The
two-tailed convention used throughout the pipeline evaluates this at
alpha / 2 and thresholds |t|. A label-permutation max-|t| oracle provides
the validation authority for the analytic thresholds.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import comb

DEFAULT_ALPHAS = (0.01, 0.05, 0.1)


@dataclass(frozen=True)
class TField:
    t: np.ndarray
    df: int
    fwhm: float
    n_nodes: int
    degenerate: np.ndarray  # nodes where pooled variance was zero (t set to 0)


@dataclass(frozen=True)
class Interval:
    """Inclusive run of suprathreshold nodes; node q sits at q% of stance."""

    start: int
    end: int

    @property
    def pct_start(self) -> int:
        return self.start

    @property
    def pct_end(self) -> int:
        return self.end


@dataclass(frozen=True)
class SpmResult:
    tfield: TField
    thresholds: dict[float, float]
    suprathreshold: dict[float, tuple[Interval, ...]]
    effect_size: np.ndarray
    two_tailed: bool = True


def _t_values(A: np.ndarray, B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nodewise pooled two-sample t; zero pooled variance gives t = 0, flagged."""
    n_a, n_b = len(A), len(B)
    df = n_a + n_b - 2
    mean_a = A.mean(axis=0)
    mean_b = B.mean(axis=0)
    ss_a = ((A - mean_a) ** 2).sum(axis=0)
    ss_b = ((B - mean_b) ** 2).sum(axis=0)
    pooled = (ss_a + ss_b) / df
    scale = pooled * (1.0 / n_a + 1.0 / n_b)
    degenerate = scale == 0.0
    t = np.zeros(A.shape[1])
    ok = ~degenerate
    t[ok] = (mean_a[ok] - mean_b[ok]) / np.sqrt(scale[ok])
    return t, degenerate


def two_sample_t_field(A: np.ndarray, B: np.ndarray) -> TField:
    """Independent two-sample t at each node, with field smoothness estimate."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise ValueError("groups must be (trials, nodes) arrays over the same nodes")
    if len(A) < 2 or len(B) < 2:
        raise ValueError("each group needs at least 2 trials")
    t, degenerate = _t_values(A, B)
    residuals = np.vstack([A - A.mean(axis=0), B - B.mean(axis=0)])
    fwhm = estimate_fwhm(residuals)
    return TField(t=t, df=len(A) + len(B) - 2, fwhm=fwhm, n_nodes=A.shape[1],
                  degenerate=degenerate)


def estimate_fwhm(residuals: np.ndarray) -> float:
    """Field smoothness from the gradient variance of unit-normalized residuals.

    With u the residuals normalized to unit sum of squares per node,
    v(q) = sum_trials (u[q+1] - u[q])^2, lambda = mean_q v(q), and
    FWHM = sqrt(4 ln 2 / lambda), clamped to [1, 10 * Q].
    """
    R = np.asarray(residuals, dtype=np.float64)
    if R.ndim != 2 or len(R) < 2:
        raise ValueError("need at least 2 residual curves")
    ssq = (R ** 2).sum(axis=0)
    if np.all(ssq == 0.0):
        raise ValueError("degenerate residuals: all zero")
    keep = ssq > 0.0
    u = np.zeros_like(R)
    u[:, keep] = R[:, keep] / np.sqrt(ssq[keep])
    grad = np.diff(u, axis=1)
    v = (grad ** 2).sum(axis=0)
    lam = float(v.mean())
    if lam == 0.0:
        raise ValueError("degenerate residuals: zero gradient variance")
    fwhm = math.sqrt(4.0 * math.log(2.0) / lam)
    q = R.shape[1]
    return float(min(max(fwhm, 1.0), 10.0 * q))


def rft_threshold(df: int, n_nodes: int, fwhm: float, alpha: float) -> float:
    """Smallest u with the EC-approximated P(max field > u) <= alpha."""
    if df < 1:
        raise ValueError("df must be >= 1")
    if not 0.0 < alpha <= 0.5:
        raise ValueError(f"alpha must be in (0, 0.5], got {alpha}")
    if fwhm <= 0:
        raise ValueError("fwhm must be positive")
    resels = (n_nodes - 1) / fwhm

    def exceedance(u: float) -> float:
        ec1 = (math.sqrt(4.0 * math.log(2.0)) / (2.0 * math.pi)
               * (1.0 + u * u / df) ** (-(df - 1) / 2.0))
        return float(stats.t.sf(u, df) + resels * ec1)

    lo, hi = 0.0, 1.0
    cap = 1e6
    while exceedance(hi) > alpha:
        hi *= 2.0
        if hi > cap:
            raise ValueError(f"no threshold below numeric cap {cap} for alpha={alpha}")
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if exceedance(mid) > alpha:
            lo = mid
        else:
            hi = mid
    return hi


def spm_threshold(df: int, n_nodes: int, fwhm: float, alpha: float,
                  two_tailed: bool = True) -> float:
    """Critical |t| at family-wise level alpha (alpha/2 per tail when two-tailed)."""
    return rft_threshold(df, n_nodes, fwhm, alpha / 2.0 if two_tailed else alpha)


def suprathreshold_regions(t: np.ndarray, t_star: float,
                           two_tailed: bool = True) -> tuple[Interval, ...]:
    """Maximal runs of nodes with |t| >= t_star (or t >= t_star one-tailed)."""
    if t_star <= 0:
        raise ValueError("threshold must be positive")
    t = np.asarray(t, dtype=np.float64)
    mask = np.abs(t) >= t_star if two_tailed else t >= t_star
    intervals = []
    start = None
    for q, hit in enumerate(mask):
        if hit and start is None:
            start = q
        elif not hit and start is not None:
            intervals.append(Interval(start, q - 1))
            start = None
    if start is not None:
        intervals.append(Interval(start, len(mask) - 1))
    return tuple(intervals)


def effect_size_r(t, df: int):
    """Rosenthal's r = sqrt(t^2 / (t^2 + df)), elementwise."""
    if df < 1:
        raise ValueError("df must be >= 1")
    t = np.asarray(t, dtype=np.float64)
    r = np.sqrt(t * t / (t * t + df))
    return float(r) if r.ndim == 0 else r


def spm_analyze(A: np.ndarray, B: np.ndarray,
                alphas: tuple[float, ...] = DEFAULT_ALPHAS,
                two_tailed: bool = True) -> SpmResult:
    """Full per-component SPM: t-field, thresholds, regions, effect size."""
    tfield = two_sample_t_field(A, B)
    thresholds = {}
    regions = {}
    for alpha in alphas:
        t_star = spm_threshold(tfield.df, tfield.n_nodes, tfield.fwhm, alpha,
                               two_tailed=two_tailed)
        thresholds[alpha] = t_star
        regions[alpha] = suprathreshold_regions(tfield.t, t_star, two_tailed)
    return SpmResult(tfield=tfield, thresholds=thresholds, suprathreshold=regions,
                     effect_size=effect_size_r(tfield.t, tfield.df),
                     two_tailed=two_tailed)


# ---------------------------------------------------------------------------
# Permutation oracle


@dataclass(frozen=True)
class PermutationMaxT:
    max_t: np.ndarray  # sorted ascending
    exhaustive: bool

    def threshold(self, alpha: float) -> float:
        """Conservative empirical (1 - alpha) quantile of the max-|t| distribution."""
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        return float(np.quantile(self.max_t, 1.0 - alpha, method="higher"))


def permutation_maxt(A: np.ndarray, B: np.ndarray, n_perm: int,
                     rng: np.random.Generator) -> PermutationMaxT:
    """Empirical max-|t| distribution under group-label permutation.

    When fewer distinct labelings exist than ``n_perm``, all of them are
    enumerated instead of sampling. Deterministic given the generator state.
    """
    if n_perm < 100:
        raise ValueError("n_perm must be >= 100")
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    pooled = np.vstack([A, B])
    n_a, n = len(A), len(A) + len(B)
    total = comb(n, n_a, exact=True)
    if total <= n_perm:
        picks = itertools.combinations(range(n), n_a)
        assignments = np.zeros((total, n), dtype=bool)
        for row, pick in enumerate(picks):
            assignments[row, list(pick)] = True
        exhaustive = True
    else:
        assignments = np.zeros((n_perm, n), dtype=bool)
        for row in range(n_perm):
            assignments[row, rng.permutation(n)[:n_a]] = True
        exhaustive = False

    maxima = np.empty(len(assignments))
    for row, pick in enumerate(assignments):
        t, _ = _t_values(pooled[pick], pooled[~pick])
        maxima[row] = np.abs(t).max()
    return PermutationMaxT(max_t=np.sort(maxima), exhaustive=exhaustive)


# ---------------------------------------------------------------------------
# Paired tests and correlation


@dataclass(frozen=True)
class PairedTResult:
    t: float
    df: int
    p_raw: float
    p_adjusted: float
    degenerate: bool = False


def paired_t_bonferroni(pairs, m: int) -> PairedTResult:
    """Dependent t-test on pair differences with Bonferroni adjustment.

    Zero-variance differences with a nonzero mean are flagged degenerate
    (infinite t); identical pairs give t = 0, p = 1.
    """
    if m < 1:
        raise ValueError("number of comparisons m must be >= 1")
    diffs = np.array([float(a) - float(b) for a, b in pairs], dtype=np.float64)
    if len(diffs) < 2:
        raise ValueError("need at least 2 pairs")
    df = len(diffs) - 1
    mean = diffs.mean()
    sd = diffs.std(ddof=1)
    if sd == 0.0:
        if mean == 0.0:
            return PairedTResult(t=0.0, df=df, p_raw=1.0, p_adjusted=1.0)
        return PairedTResult(t=math.copysign(math.inf, mean), df=df,
                             p_raw=0.0, p_adjusted=0.0, degenerate=True)
    t = mean / (sd / math.sqrt(len(diffs)))
    p_raw = 2.0 * float(stats.t.sf(abs(t), df))
    return PairedTResult(t=float(t), df=df, p_raw=p_raw,
                         p_adjusted=min(1.0, m * p_raw))


def pearson_corr(x, y) -> float:
    """Pearson product-moment correlation at zero lag."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("x and y must be equal-length 1D arrays with >= 2 values")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = math.sqrt(float(dx @ dx))
    sy = math.sqrt(float(dy @ dy))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("pearson correlation undefined for zero-variance input")
    return float(dx @ dy) / (sx * sy)
