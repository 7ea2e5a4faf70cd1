"""Scale-dependent normalisers and estimators built from Monte Carlo samples
of X_n: speed, concentration scales Qhat_n and Q_n, canonical widths W_n,
record points, stretched-exponential tail fits and the KPZ ratio."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy import optimize
from scipy.stats import kurtosis

CSV_COLUMNS = ("n", "count", "mean", "se_mean", "sd", "se_sd", "a_hat", "qhat", "q", "w",
               "theta_hat", "r2", "is_record", "is_quasi")
SCHEMA_VERSION = 1

MIN_QHAT_SAMPLES = 100
MIN_TAIL_SAMPLES = 1000
TAIL_FRACTION = 0.2


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class SampleSet:
    n: float
    values: np.ndarray
    seeds: tuple[int, ...] = ()

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if self.seeds and len(self.seeds) != len(vals):
            raise StatsError("values and seeds differ in length")
        if len(vals) < 2:
            raise StatsError("a sample set needs at least two values")


@dataclass(frozen=True)
class ScalingRow:
    n: float
    count: int
    mean: float
    se_mean: float
    sd: float
    se_sd: float
    a_hat: float = math.nan
    qhat: float = math.nan
    q: float = math.nan
    w: float = math.nan
    theta_hat: float = math.nan
    r2: float = math.nan
    is_record: bool = False
    is_quasi: bool = False


@dataclass(frozen=True)
class ScalingTable:
    rows: tuple[ScalingRow, ...]

    def __post_init__(self):
        ns = [r.n for r in self.rows]
        if ns != sorted(ns) or len(set(ns)) != len(ns):
            raise StatsError("rows must have strictly increasing n")

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    @property
    def n(self) -> np.ndarray:
        return self.column("n")

    def with_column(self, name: str, values) -> "ScalingTable":
        return ScalingTable(tuple(replace(r, **{name: v}) for r, v in zip(self.rows, values)))

    def to_csv(self) -> str:
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow((*CSV_COLUMNS, "schema_version"))
        for r in self.rows:
            w.writerow((*(format_value(getattr(r, c)) for c in CSV_COLUMNS), SCHEMA_VERSION))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ScalingTable":
        rows = []
        types = {f.name: f.type for f in fields(ScalingRow)}
        for rec in csv.DictReader(io.StringIO(text)):
            kw = {}
            for c in CSV_COLUMNS:
                t = types[c]
                if t == "bool":
                    kw[c] = rec[c] == "true"
                elif t == "int":
                    kw[c] = int(rec[c])
                else:
                    kw[c] = float(rec[c])
            rows.append(ScalingRow(**kw))
        return cls(tuple(rows))


def format_value(v) -> str:
    """Fixed text form: 17 significant digits for floats, lower-case bools."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.17g}"


def sd_standard_error(values: np.ndarray) -> float:
    """Delta-method SE of the sample SD, using the sample kurtosis."""
    n = len(values)
    sd = float(np.std(values, ddof=1))
    if sd == 0 or n < 4:
        return 0.0
    excess = float(kurtosis(values, fisher=True, bias=False))
    return sd * math.sqrt(max(excess + 2.0, 0.0) / (4.0 * n))


def summarize(sample_sets) -> ScalingTable:
    rows = []
    for s in sorted(sample_sets, key=lambda s: s.n):
        v = s.values
        sd = float(np.std(v, ddof=1))
        rows.append(ScalingRow(n=float(s.n), count=len(v), mean=float(np.mean(v)),
                               se_mean=sd / math.sqrt(len(v)), sd=sd,
                               se_sd=sd_standard_error(v)))
    return ScalingTable(tuple(rows))


@dataclass(frozen=True)
class MuEstimate:
    mu: float
    ci: tuple[float, float]
    fit_mu: float
    fit_a: float
    fit_gamma: float
    fit_degenerate: bool
    note: str = ("plug-in mean(n_max)/n_max; subadditivity gives E X_n >= mu n, "
                 "so this overestimates mu")


def estimate_mu(table: ScalingTable) -> MuEstimate:
    """Speed estimate from the largest tabulated scale plus a diagnostic fit
    mean(n) = mu n + a n^gamma."""
    n = table.n
    if len(n) < 3 or n[-1] / n[0] < 4:
        raise StatsError("estimate_mu needs >= 3 scales spanning a factor >= 4")
    mean = table.column("mean")
    se = table.column("se_mean")
    mu = mean[-1] / n[-1]
    half = 1.96 * se[-1] / n[-1]
    # diagnostic: profile over gamma, linear in (mu, a)
    def rss(g):
        X = np.column_stack([n, n ** g])
        coef, *_ = np.linalg.lstsq(X, mean, rcond=None)
        r = mean - X @ coef
        return float(r @ r), coef
    res = optimize.minimize_scalar(lambda g: rss(g)[0], bounds=(0.0, 0.95), method="bounded",
                                   options={"xatol": 1e-8})
    _, (fmu, fa) = rss(res.x)
    scale = max(abs(mean).max(), 1e-300)
    degenerate = abs(fa) * n[-1] ** res.x < 1e-9 * scale
    return MuEstimate(mu, (mu - half, mu + half), float(fmu), float(fa), float(res.x),
                      bool(degenerate))


def qhat_empirical(s: SampleSet, theta: float) -> float:
    """Smallest Q with P[|X - mean| > x Q] <= exp(1 - x^theta) for all x > 0,
    the probability being the empirical one.

    The empirical survival function only jumps at sample deviations d, where
    its left limit is p(d) = #{|dev| >= d}/N; the constraint there reads
    Q >= d / (1 - log p(d))^(1/theta), so the infimum is the max of these.
    """
    v = s.values
    if len(v) < MIN_QHAT_SAMPLES:
        raise StatsError(f"qhat needs at least {MIN_QHAT_SAMPLES} samples")
    if not theta > 0:
        raise StatsError("theta must be positive")
    dev = np.sort(np.abs(v - np.mean(v)))
    N = len(dev)
    pos = dev > 0
    if not pos.any():
        return 0.0
    # number of deviations >= dev[i]: first index of the value in sorted order
    first = np.searchsorted(dev, dev, side="left")
    p = (N - first) / N
    bound = dev / (1.0 - np.log(p)) ** (1.0 / theta)
    return float(bound[pos].max())


def qhat_feasible(s: SampleSet, theta: float, Q: float) -> bool:
    """Whether Q satisfies the defining tail bound (used by tests and the
    grid-search oracle)."""
    dev = np.abs(s.values - np.mean(s.values))
    if Q <= 0:
        return not (dev > 0).any()
    d = np.sort(dev)
    p = (len(d) - np.searchsorted(d, d, side="left")) / len(d)
    return bool(np.all(p[d > 0] <= np.exp(1.0 - (d[d > 0] / Q) ** theta) * (1 + 1e-12)))


def build_q_and_w(table: ScalingTable, alpha: float) -> ScalingTable:
    """Fill Q_n = max over tabulated m <= n of (n/m)^alpha Qhat_m, and
    W_n = sqrt(n Q_n)."""
    if not 0 < alpha < 0.5:
        raise StatsError("alpha must lie in (0, 1/2)")
    n = table.n
    qhat = table.column("qhat")
    if np.isnan(qhat).any():
        raise StatsError("qhat column not populated")
    q = np.array([np.max((n[i] / n[: i + 1]) ** alpha * qhat[: i + 1]) for i in range(len(n))])
    out = table.with_column("q", q)
    return out.with_column("w", np.sqrt(n * q))


def quasi_record_flags(n, qhat, C: float, alpha_prime: float) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    qhat = np.asarray(qhat, dtype=float)
    return np.array([np.max((n[i] / n[: i + 1]) ** alpha_prime * qhat[: i + 1]) <= C * qhat[i]
                     for i in range(len(n))])


def record_points(table: ScalingTable, alpha: float,
                  quasi: tuple[float, float] | None = None) -> ScalingTable:
    """Flag alpha-record points (Q_n = Qhat_n to 1e-9 relative) and, when
    ``quasi = (C, alpha')`` is given, (C, alpha')-quasi record points."""
    q = table.column("q")
    qhat = table.column("qhat")
    if np.isnan(q).any():
        table = build_q_and_w(table, alpha)
        q = table.column("q")
    rec = np.abs(q - qhat) <= 1e-9 * np.maximum(np.abs(q), np.abs(qhat))
    out = table.with_column("is_record", [bool(x) for x in rec])
    if quasi is not None:
        C, ap = quasi
        out = out.with_column("is_quasi",
                              [bool(x) for x in quasi_record_flags(table.n, qhat, C, ap)])
    return out


@dataclass(frozen=True)
class TailFit:
    theta: float
    c: float
    r2: float
    x_range: tuple[float, float]
    log_prefactor: float = 0.0


def fit_tail_exponent(s: SampleSet, fraction: float = TAIL_FRACTION) -> TailFit:
    """Fit P[|Z| > x] ~ A exp(-c x^theta) to the top ``fraction`` of the
    normalised deviations Z = (X - mean)/SD.

    -log S is regressed on (1, x^theta) by least squares, and theta is chosen
    by a bounded one-dimensional search over log theta. The empirical
    survival at the k-th largest |Z| is taken as (k - 1/2)/N.
    """
    v = s.values
    if len(v) < MIN_TAIL_SAMPLES:
        raise StatsError(f"tail fit needs at least {MIN_TAIL_SAMPLES} samples")
    sd = float(np.std(v, ddof=1))
    if sd == 0:
        raise StatsError("degenerate tail: all samples equal")
    z = np.sort(np.abs((v - np.mean(v)) / sd))[::-1]
    N = len(z)
    m = int(math.ceil(fraction * N))
    x = z[:m]
    y = -np.log((np.arange(1, m + 1) - 0.5) / N)
    if x[-1] <= 0:
        raise StatsError("degenerate tail: top deviations are zero")

    def solve(log_theta):
        X = np.column_stack([np.ones(m), x ** math.exp(log_theta)])
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        r = y - X @ coef
        return float(r @ r), coef

    lo, hi = math.log(0.05), math.log(10.0)
    res = optimize.minimize_scalar(lambda t: solve(t)[0], bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-10})
    t = _polish_stationary(x, y, solve, float(res.x), lo, hi)
    rss, (a0, c) = solve(t)
    tss = float(np.sum((y - y.mean()) ** 2))
    return TailFit(float(math.exp(t)), float(c), 1.0 - rss / tss if tss > 0 else math.nan,
                   (float(x[-1]), float(x[0])), float(-a0))


def _polish_stationary(x, y, solve, t0, lo, hi):
    """Refine Brent's minimiser by root-finding the exact profile gradient
    (envelope theorem), so that theta is reproducible to ~1e-13."""
    lx = np.log(x)

    def grad(t):
        _, (a, c) = solve(t)
        xt = x ** math.exp(t)
        r = y - a - c * xt
        return float(np.sum(r * c * xt * lx))

    step = 1e-6
    for _ in range(12):
        a, b = max(lo, t0 - step), min(hi, t0 + step)
        ga, gb = grad(a), grad(b)
        if ga == 0:
            return a
        if gb == 0:
            return b
        if (ga > 0) != (gb > 0):
            return optimize.brentq(grad, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        step *= 4
    return t0


@dataclass(frozen=True)
class KPZRatio:
    n: np.ndarray
    ratio: np.ndarray
    se: np.ndarray
    median_ratio: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def spread(self) -> float:
        """max_n r_n / min_n r_n."""
        return float(self.ratio.max() / self.ratio.min())


def kpz_ratio(table: ScalingTable, tf_means, tf_se=None, tf_medians=None) -> KPZRatio:
    """r_n = (E W_n)^2 / (n SD_n) with delta-method standard errors."""
    n = table.n
    sd = table.column("sd")
    se_sd = table.column("se_sd")
    if np.any(sd <= 0):
        raise StatsError("kpz ratio undefined for SD = 0")
    w = np.asarray(tf_means, dtype=float)
    if len(w) != len(n):
        raise StatsError("transversal fluctuation means must match the table rows")
    r = w ** 2 / (n * sd)
    sw = np.zeros_like(w) if tf_se is None else np.asarray(tf_se, dtype=float)
    rel = np.sqrt((2 * sw / w) ** 2 + (se_sd / sd) ** 2)
    med = np.zeros(0)
    if tf_medians is not None:
        med = np.asarray(tf_medians, dtype=float) ** 2 / (n * sd)
    return KPZRatio(n, r, r * rel, med)


def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    # clamp so rounding never leaves p = 0 or 1 outside its own interval
    return max(0.0, min(centre - half, p)), min(1.0, max(centre + half, p))


def bootstrap_ci(values, stat, n_boot: int = 1000, seed: int = 0, level: float = 0.95
                 ) -> tuple[float, float]:
    """Percentile bootstrap interval of ``stat`` (a function of one array)."""
    values = np.asarray(values)
    gen = np.random.default_rng(seed)
    idx = gen.integers(0, len(values), size=(n_boot, len(values)))
    reps = np.array([stat(values[i]) for i in idx])
    lo, hi = np.quantile(reps, [(1 - level) / 2, (1 + level) / 2])
    point = stat(values)
    return float(min(lo, point)), float(max(hi, point))
