"""Regression and distribution tests for the indicator study.

The centerpiece is ordinary least squares with full inference (standard
errors, t and F tests, log-likelihood) solved through a pivoted QR
factorization, plus backward stepwise elimination on top of it. The
Kolmogorov-Smirnov test and the univariate confidence-band fit support
the distribution checks and the per-indicator regressions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import linalg
from scipy.special import betainc, stdtrit

from .errors import DataError, UsageError
from .indicators import INDICATOR_NAMES, IndicatorVector

INTERCEPT = "intercept"


@dataclass(frozen=True)
class Observation:
    """One dataset-level measurement: indicators plus an observed loss.

    The loss is measured outside this package (it is the evaluation loss
    of a model finetuned on the dataset); regressions model its natural
    log.
    """

    label: str
    loss: float
    indicators: IndicatorVector
    series: str = "random"

    def __post_init__(self):
        if not self.loss > 0:
            raise DataError(f"observation {self.label!r}: loss must be positive, got {self.loss}")

    @property
    def log_loss(self) -> float:
        return math.log(self.loss)


OBSERVATION_COLUMNS = ("label", "loss") + INDICATOR_NAMES


def write_observations(observations: Sequence[Observation], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(OBSERVATION_COLUMNS + ("series",))
        for obs in observations:
            row = [obs.label, repr(obs.loss)]
            row += [repr(getattr(obs.indicators, name)) for name in INDICATOR_NAMES]
            row.append(obs.series)
            writer.writerow(row)


def load_observations(path: str | Path) -> list[Observation]:
    """Read the observations CSV; the series column is optional."""
    path = Path(path)
    out = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty observations file")
        missing = [c for c in OBSERVATION_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            try:
                indicators = IndicatorVector(
                    **{name: float(row[name]) for name in INDICATOR_NAMES}
                )
                obs = Observation(
                    label=row["label"],
                    loss=float(row["loss"]),
                    indicators=indicators,
                    series=row.get("series") or "random",
                )
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad observation ({exc})") from exc
            out.append(obs)
    return out


def design_matrix(
    observations: Sequence[Observation],
    variables: Sequence[str] = INDICATOR_NAMES,
) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    """Log-loss target and intercept-led design matrix for a regression."""
    if not observations:
        raise DataError("no observations")
    unknown = [v for v in variables if v not in INDICATOR_NAMES]
    if unknown:
        raise UsageError(f"unknown indicator names {unknown}")
    y = np.array([obs.log_loss for obs in observations])
    columns = [np.ones(len(observations))]
    for name in variables:
        columns.append(np.array([getattr(obs.indicators, name) for obs in observations]))
    return y, np.column_stack(columns), (INTERCEPT, *variables)


# --- descriptive statistics -----------------------------------------------------

def describe_values(values: Sequence[float]) -> dict[str, float]:
    """Mean, sample std (n-1), min, median, max of one variable."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise DataError("cannot describe an empty series")
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return {
        "mean": float(arr.mean()),
        "std": std,
        "min": float(arr.min()),
        "median": float(np.median(arr)),
        "max": float(arr.max()),
    }


def describe(observations: Sequence[Observation]) -> dict[str, dict[str, float]]:
    """Descriptive statistics for the loss and every indicator."""
    if not observations:
        raise DataError("no observations to describe")
    table = {"loss": describe_values([obs.loss for obs in observations])}
    for name in INDICATOR_NAMES:
        table[name] = describe_values([getattr(obs.indicators, name) for obs in observations])
    return table


# --- tail probabilities ------------------------------------------------------------

def t_sf_two_sided(t: np.ndarray, df: int) -> np.ndarray:
    """Two-sided p-value of a t statistic, via the regularized incomplete beta."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = df / (df + t * t)
    return betainc(df / 2.0, 0.5, x)


def f_sf(f: float, df_num: int, df_den: int) -> float:
    """Upper tail of the F distribution."""
    if not np.isfinite(f):
        return math.nan
    if f <= 0:
        return 1.0
    x = df_den / (df_den + df_num * f)
    return float(betainc(df_den / 2.0, df_num / 2.0, x))


def t_quantile(p: float, df: int) -> float:
    """Inverse CDF of the t distribution (for confidence bands)."""
    return float(stdtrit(df, p))


# --- ordinary least squares ----------------------------------------------------------

@dataclass(frozen=True)
class RegressionFit:
    """OLS results with the usual inference battery."""

    variables: tuple[str, ...]
    coefficients: np.ndarray
    std_errors: np.ndarray
    t_values: np.ndarray
    p_values: np.ndarray
    r2: float
    adj_r2: float
    f_statistic: float
    prob_f: float
    log_likelihood: float
    residuals: np.ndarray
    n: int
    df_resid: int
    dropped: tuple[str, ...] = field(default=())

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.variables.index(name)])

    def std_error(self, name: str) -> float:
        return float(self.std_errors[self.variables.index(name)])

    def p_value(self, name: str) -> float:
        return float(self.p_values[self.variables.index(name)])

    def summary_dict(self) -> dict:
        """JSON-ready summary with the conventional field names."""
        terms = {
            name: {
                "coef": float(self.coefficients[i]),
                "std_err": float(self.std_errors[i]),
                "t": float(self.t_values[i]),
                "p": float(self.p_values[i]),
            }
            for i, name in enumerate(self.variables)
        }
        return {
            "terms": terms,
            "r2": self.r2,
            "adj_r2": self.adj_r2,
            "f": self.f_statistic,
            "prob_f": self.prob_f,
            "loglik": self.log_likelihood,
            "n": self.n,
            "df_resid": self.df_resid,
            "dropped": list(self.dropped),
        }


def ols(y: np.ndarray, X: np.ndarray, names: Sequence[str]) -> RegressionFit:
    """Least squares with inference, solved by pivoted QR.

    `X` must already carry its intercept column. Exact collinearity is
    an error that names the offending columns rather than a silently
    unstable fit.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise UsageError("y must be (n,) and X must be (n, p) with matching n")
    n, p = X.shape
    if len(names) != p:
        raise UsageError(f"got {len(names)} names for {p} columns")
    if n <= p:
        raise DataError(f"need more observations than parameters, got n={n}, p={p}")

    Q, R, pivot = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = np.finfo(float).eps * max(n, p) * (diag[0] if diag.size else 0.0)
    rank = int((diag > tol).sum())
    if rank < p:
        collinear = sorted(names[i] for i in pivot[rank:])
        raise DataError(f"design matrix is rank deficient; collinear columns: {collinear}")

    z = linalg.solve_triangular(R, Q.T @ y)
    beta = np.empty(p)
    beta[pivot] = z

    residuals = y - X @ beta
    rss = float(residuals @ residuals)
    df_resid = n - p
    sigma2 = rss / df_resid

    r_inv = linalg.solve_triangular(R, np.eye(p))
    xtx_inv_pivoted = r_inv @ r_inv.T
    xtx_inv = np.empty((p, p))
    xtx_inv[np.ix_(pivot, pivot)] = xtx_inv_pivoted

    std_errors = np.sqrt(sigma2 * np.diag(xtx_inv))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_values = beta / std_errors
    p_values = t_sf_two_sided(t_values, df_resid)

    has_intercept = any(np.ptp(X[:, j]) == 0 and X[0, j] != 0 for j in range(p))
    if has_intercept:
        tss = float(((y - y.mean()) ** 2).sum())
        k_model = p - 1
    else:
        tss = float((y ** 2).sum())
        k_model = p
    if tss > 0:
        r2 = 1.0 - rss / tss
    else:
        r2 = 1.0 if rss == 0 else 0.0
    adj_r2 = 1.0 - (1.0 - r2) * (n - 1) / df_resid if has_intercept else r2
    if k_model > 0 and rss > 0:
        f_stat = ((tss - rss) / k_model) / (rss / df_resid)
        prob_f = f_sf(f_stat, k_model, df_resid)
    else:
        f_stat = math.nan
        prob_f = math.nan
    with np.errstate(divide="ignore"):
        log_likelihood = -n / 2.0 * (math.log(2.0 * math.pi) + np.log(rss / n) + 1.0)

    return RegressionFit(
        variables=tuple(names),
        coefficients=beta,
        std_errors=std_errors,
        t_values=t_values,
        p_values=p_values,
        r2=float(r2),
        adj_r2=float(adj_r2),
        f_statistic=float(f_stat),
        prob_f=float(prob_f),
        log_likelihood=float(log_likelihood),
        residuals=residuals,
        n=n,
        df_resid=df_resid,
    )


def stepwise(
    y: np.ndarray,
    X: np.ndarray,
    names: Sequence[str],
    alpha_remove: float = 0.05,
) -> RegressionFit:
    """Backward elimination by p-value.

    Fits the full model, then repeatedly drops the weakest variable whose
    p-value exceeds `alpha_remove` and refits, keeping constant columns
    (the intercept) unconditionally. The order of removals is recorded on
    the returned fit.
    """
    X = np.asarray(X, dtype=float)
    names = list(names)
    protected = {
        j for j in range(X.shape[1]) if np.ptp(X[:, j]) == 0 and X[0, j] != 0
    }
    keep = list(range(X.shape[1]))
    dropped: list[str] = []
    while True:
        fit = ols(y, X[:, keep], [names[j] for j in keep])
        candidates = [
            (local, float(fit.p_values[local]))
            for local, j in enumerate(keep)
            if j not in protected
        ]
        if not candidates:
            break
        worst_local, worst_p = max(candidates, key=lambda item: (item[1], item[0]))
        if worst_p <= alpha_remove:
            break
        dropped.append(names[keep[worst_local]])
        del keep[worst_local]
    return replace(fit, dropped=tuple(dropped))


# --- Kolmogorov-Smirnov -------------------------------------------------------------

@dataclass(frozen=True)
class KsResult:
    variable: str
    statistic: float
    p_value: float


def kolmogorov_sf(x: float) -> float:
    """Survival function of the Kolmogorov distribution.

    Two classical expansions cover the range: the alternating series for
    large arguments and the theta-function form for small ones, switched
    where both are well converged.
    """
    if x <= 0.0:
        return 1.0
    if x < 1.18:
        # cdf = sqrt(2 pi) / x * sum_{j odd} exp(-j^2 pi^2 / (8 x^2))
        total = 0.0
        j = 1
        while True:
            term = math.exp(-(j * j) * math.pi * math.pi / (8.0 * x * x))
            total += term
            if term < 1e-18 * max(total, 1e-300) or j > 199:
                break
            j += 2
        return 1.0 - math.sqrt(2.0 * math.pi) / x * total
    total = 0.0
    for j in range(1, 200):
        term = math.exp(-2.0 * j * j * x * x)
        if term < 1e-18:
            break
        total += term if j % 2 == 1 else -term
    return max(0.0, min(1.0, 2.0 * total))


ReferenceCdf = Callable[[np.ndarray], np.ndarray]


def _resolve_reference(reference, values: np.ndarray) -> ReferenceCdf:
    if callable(reference):
        return lambda x: np.asarray(reference(x), dtype=float)
    if reference == "normal":
        if values.size < 2:
            raise DataError("fitting a normal reference needs at least 2 values")
        mu = float(values.mean())
        sigma = float(values.std(ddof=1))
        if sigma == 0.0:
            raise DataError("zero-variance sample cannot be tested against a normal")
        return lambda x: 0.5 * (1.0 + np.vectorize(math.erf)((x - mu) / (sigma * math.sqrt(2.0))))
    if isinstance(reference, tuple) and len(reference) == 3:
        kind, a, b = reference
        if kind == "normal":
            mu, sigma = float(a), float(b)
            if sigma <= 0:
                raise DataError(f"normal reference needs sigma > 0, got {sigma}")
            return lambda x: 0.5 * (1.0 + np.vectorize(math.erf)((x - mu) / (sigma * math.sqrt(2.0))))
        if kind == "uniform":
            lo, hi = float(a), float(b)
            if not hi > lo:
                raise DataError(f"uniform reference needs hi > lo, got [{lo}, {hi}]")
            return lambda x: np.clip((x - lo) / (hi - lo), 0.0, 1.0)
    if reference == "uniform":
        return lambda x: np.clip(x, 0.0, 1.0)
    raise UsageError(f"unsupported reference distribution {reference!r}")


def ks_test(values: Sequence[float], reference="normal", variable: str = "") -> KsResult:
    """One-sample KS test of `values` against a reference distribution.

    The statistic is the exact supremum of |ECDF - F|, found by checking
    both one-sided gaps at every order statistic. The p-value uses the
    asymptotic Kolmogorov distribution of sqrt(n) times the statistic.

    `reference` may be "normal" (location and scale fitted from the
    sample), ("normal", mu, sigma), "uniform" (the unit interval),
    ("uniform", lo, hi), or any callable CDF.
    """
    arr = np.sort(np.asarray(values, dtype=float))
    if arr.size == 0:
        raise DataError("KS test needs at least one value")
    cdf = _resolve_reference(reference, arr)
    f = np.asarray(cdf(arr), dtype=float)
    n = arr.size
    steps = np.arange(1, n + 1) / n
    d_plus = float((steps - f).max())
    d_minus = float((f - (steps - 1.0 / n)).max())
    statistic = max(d_plus, d_minus, 0.0)
    p_value = kolmogorov_sf(math.sqrt(n) * statistic)
    return KsResult(variable=variable, statistic=statistic, p_value=p_value)


def ks_by_variable(
    observations: Sequence[Observation], reference="normal"
) -> list[KsResult]:
    """KS test per study variable: the loss and each indicator."""
    results = [
        ks_test([obs.loss for obs in observations], reference, variable="loss")
    ]
    for name in INDICATOR_NAMES:
        results.append(
            ks_test(
                [getattr(obs.indicators, name) for obs in observations],
                reference,
                variable=name,
            )
        )
    return results


# --- univariate fit with confidence band ----------------------------------------------

@dataclass(frozen=True)
class UnivariateFit:
    """Simple regression of log-loss on one indicator, with 95% bands."""

    indicator: str
    series: str
    slope: float
    intercept: float
    r: float
    n: int
    sigma: float
    x_mean: float
    sxx: float
    t_crit: float

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.intercept + self.slope * np.asarray(x, dtype=float)

    def band(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Fitted mean response and its pointwise 95% confidence limits."""
        x = np.asarray(x, dtype=float)
        fit = self.predict(x)
        half = self.t_crit * self.sigma * np.sqrt(
            1.0 / self.n + (x - self.x_mean) ** 2 / self.sxx
        )
        return fit, fit - half, fit + half


def _fit_univariate_series(
    xs: np.ndarray, ys: np.ndarray, indicator: str, series: str
) -> UnivariateFit:
    n = xs.size
    if n < 3:
        raise DataError(f"univariate fit needs at least 3 observations, got {n}")
    x_mean = float(xs.mean())
    y_mean = float(ys.mean())
    sxx = float(((xs - x_mean) ** 2).sum())
    if sxx == 0.0:
        raise DataError(f"indicator {indicator!r} is constant; cannot fit")
    sxy = float(((xs - x_mean) * (ys - y_mean)).sum())
    syy = float(((ys - y_mean) ** 2).sum())
    slope = sxy / sxx
    intercept = y_mean - slope * x_mean
    rss = max(syy - slope * sxy, 0.0)
    sigma = math.sqrt(rss / (n - 2))
    r = sxy / math.sqrt(sxx * syy) if syy > 0 else 0.0
    return UnivariateFit(
        indicator=indicator,
        series=series,
        slope=slope,
        intercept=intercept,
        r=r,
        n=n,
        sigma=sigma,
        x_mean=x_mean,
        sxx=sxx,
        t_crit=t_quantile(0.975, n - 2),
    )


def fit_univariate(
    observations: Sequence[Observation],
    indicator: str,
    hierarchical: bool = False,
) -> UnivariateFit | dict[str, UnivariateFit]:
    """Regress log-loss on one indicator.

    With `hierarchical` the observations are split by their series tag
    and fitted separately (the study has a random-fusion series and a
    quantile-tier series); otherwise one pooled fit is returned.
    """
    if indicator not in INDICATOR_NAMES:
        raise UsageError(f"unknown indicator {indicator!r}")
    if not observations:
        raise DataError("no observations")

    def arrays(subset: Sequence[Observation]):
        xs = np.array([getattr(obs.indicators, indicator) for obs in subset])
        ys = np.array([obs.log_loss for obs in subset])
        return xs, ys

    if not hierarchical:
        xs, ys = arrays(observations)
        return _fit_univariate_series(xs, ys, indicator, series="all")
    groups: dict[str, list[Observation]] = {}
    for obs in observations:
        groups.setdefault(obs.series, []).append(obs)
    out = {}
    for series in sorted(groups):
        xs, ys = arrays(groups[series])
        out[series] = _fit_univariate_series(xs, ys, indicator, series=series)
    return out
