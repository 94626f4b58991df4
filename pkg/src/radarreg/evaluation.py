"""Accuracy and credibility metrics plus report generation.

Credibility is judged by the normalized estimation error squared: for a
credible estimator the NEES (normalized by the state dimension d) averages to
1 and d * NEES follows a chi-square distribution with d degrees of freedom.
The ANEES is reported together with a two-sided moment test of the empirical
mean and variance of d * NEES against the chi-square moments (d and 2d); when
the test fails the ANEES value is flagged as inconclusive, which is the
expected outcome for the summing baseline.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import stats

from .geometry import MotionState, Scan, cartesian_targets, rot2, wrap_angle

REPORT_COLUMNS = (
    "method",
    "dataset",
    "rmse_m",
    "rmse_deg",
    "anees",
    "chi2_pass",
    "avg_iters",
    "avg_runtime_ms",
    "n_runs",
    "n_failures",
)

RUN_COLUMNS = (
    "method",
    "dataset",
    "config_index",
    "run_index",
    "converged",
    "iterations",
    "nees",
    "err_x",
    "err_y",
    "err_rot_rad",
    "true_x",
    "true_y",
    "true_rot_rad",
    "cost",
    "runtime_ms",
    "n_prev",
    "n_cur",
    "n_matched",
    "n_unmatched",
    "resamples",
)


def rmse(errors: Iterable[tuple[np.ndarray, float]]) -> tuple[float, float]:
    """Root-mean-square errors: (translation in meters, rotation in degrees).

    Each entry is ``(translation error vector, rotation error in radians)``;
    rotation errors are wrapped onto the circle before squaring.
    """
    t_sq = []
    r_sq = []
    for t_err, r_err in errors:
        t_err = np.atleast_1d(np.asarray(t_err, dtype=float))
        t_sq.append(float(t_err @ t_err))
        r_sq.append(wrap_angle(float(r_err)) ** 2)
    if not t_sq:
        raise ValueError("rmse of an empty error list")
    return math.sqrt(np.mean(t_sq)), math.degrees(math.sqrt(np.mean(r_sq)))


def nees(estimate: MotionState, truth: MotionState) -> float:
    """Normalized estimation error squared, divided by the state dimension."""
    if estimate.covariance is None:
        raise ValueError("estimate carries no covariance")
    err = estimate.error_to(truth)
    cov = estimate.covariance
    # Cholesky doubles as the positive-definiteness check.
    chol = np.linalg.cholesky(cov)
    white = np.linalg.solve(chol, err)
    return float(white @ white) / int(estimate.dof)


@dataclass(frozen=True)
class AneesResult:
    anees: float
    chi2_pass: bool
    p_value: float
    z_mean: float
    z_var: float


def anees(nees_samples: np.ndarray | list[float], dof: int, significance: float = 0.01) -> AneesResult:
    """Average NEES plus a chi-square moment test on d * NEES.

    The empirical mean and variance of ``d * NEES`` are z-tested against the
    chi-square_d moments (mean d, variance 2d); each side is two-sided at
    ``significance / 2`` (Bonferroni), and failure marks the ANEES value as
    inconclusive.
    """
    y = np.asarray(nees_samples, dtype=float) * dof
    n = y.size
    if n < 30:
        raise ValueError(f"need at least 30 NEES samples, got {n}")
    mean = y.mean()
    var = y.var(ddof=1)
    z_mean = (mean - dof) / math.sqrt(2.0 * dof / n)
    # Var(S^2) of chi-square_d samples: (mu4 - sigma^4) / n with
    # mu4 = (3 + 12/d) (2d)^2.
    var_s2 = (8.0 * dof**2 + 48.0 * dof) / n
    z_var = (var - 2.0 * dof) / math.sqrt(var_s2)
    p_mean = 2.0 * stats.norm.sf(abs(z_mean))
    p_var = 2.0 * stats.norm.sf(abs(z_var))
    p_value = min(1.0, 2.0 * min(p_mean, p_var))
    return AneesResult(
        anees=float(mean / dof),
        chi2_pass=bool(p_value >= significance),
        p_value=float(p_value),
        z_mean=float(z_mean),
        z_var=float(z_var),
    )


def bhattacharyya(mu1, cov1, mu2, cov2) -> float:
    """Bhattacharyya distance between two Gaussians (smaller = more overlap)."""
    mu1 = np.atleast_1d(np.asarray(mu1, dtype=float))
    mu2 = np.atleast_1d(np.asarray(mu2, dtype=float))
    cov1 = np.atleast_2d(np.asarray(cov1, dtype=float))
    cov2 = np.atleast_2d(np.asarray(cov2, dtype=float))
    cov_bar = 0.5 * (cov1 + cov2)
    diff = mu1 - mu2
    sign, logdet_bar = np.linalg.slogdet(cov_bar)
    sign1, logdet1 = np.linalg.slogdet(cov1)
    sign2, logdet2 = np.linalg.slogdet(cov2)
    if min(sign, sign1, sign2) <= 0:
        raise np.linalg.LinAlgError("covariances must be positive definite")
    maha = diff @ np.linalg.solve(cov_bar, diff)
    return float(0.125 * maha + 0.5 * (logdet_bar - 0.5 * (logdet1 + logdet2)))


@dataclass(frozen=True)
class CorrespondenceResult:
    """Nearest-distribution matching of current against previous targets."""

    pairs: tuple[tuple[int, int | None], ...]
    n_matched: int
    n_cur_unmatched: int
    n_prev_unmatched: int

    @property
    def counts(self) -> tuple[int, int]:
        """(correspondences, non-corresponding targets on both sides)."""
        return self.n_matched, self.n_cur_unmatched + self.n_prev_unmatched


def classify_correspondences(
    prev: Scan, cur: Scan, truth: MotionState, threshold: float = 1.0
) -> CorrespondenceResult:
    """Match targets by smallest Bhattacharyya distance under the true motion.

    Every current target is transformed by ``truth`` and paired with the
    closest previous target; the pair counts as a correspondence when the
    distance stays below ``threshold``.  Unpaired targets on either side are
    non-corresponding.  Multiple current targets may claim the same previous
    target (clusters), matching the plain nearest-distance rule.
    """
    prev_means, prev_covs = cartesian_targets(prev)
    cur_means, cur_covs = cartesian_targets(cur)
    rot = rot2(truth.rotation)
    cur_means = cur_means @ rot.T + truth.translation_2d()
    cur_covs = np.einsum("ab,kbc,dc->kad", rot, cur_covs, rot)

    cov_bar = 0.5 * (cur_covs[:, None, :, :] + prev_covs[None, :, :, :])
    diff = cur_means[:, None, :] - prev_means[None, :, :]
    a = cov_bar[..., 0, 0]
    b = cov_bar[..., 0, 1]
    c = cov_bar[..., 1, 1]
    det_bar = a * c - b * b
    maha = (c * diff[..., 0] ** 2 - 2.0 * b * diff[..., 0] * diff[..., 1] + a * diff[..., 1] ** 2) / det_bar
    det_cur = np.linalg.det(cur_covs)
    det_prev = np.linalg.det(prev_covs)
    dist = 0.125 * maha + 0.5 * (
        np.log(det_bar) - 0.5 * (np.log(det_cur)[:, None] + np.log(det_prev)[None, :])
    )

    pairs: list[tuple[int, int | None]] = []
    claimed: set[int] = set()
    for i in range(len(cur)):
        j = int(np.argmin(dist[i]))
        if dist[i, j] < threshold:
            pairs.append((i, j))
            claimed.add(j)
        else:
            pairs.append((i, None))
    n_matched = sum(1 for _, j in pairs if j is not None)
    return CorrespondenceResult(
        pairs=tuple(pairs),
        n_matched=n_matched,
        n_cur_unmatched=len(cur) - n_matched,
        n_prev_unmatched=len(prev) - len(claimed),
    )


@dataclass(frozen=True)
class EvaluationReport:
    """Aggregated accuracy/credibility metrics for one method on one dataset."""

    method: str
    dataset: str
    rmse_translation: float
    rmse_rotation_deg: float
    anees: float
    nees_samples: tuple[float, ...]
    chi2_pass: bool
    chi2_p_value: float
    avg_iterations: float
    avg_runtime_ms: float
    correspondence_stats: tuple[tuple[int, int], ...]
    n_runs: int
    failures: int


def build_report(
    results,
    dataset: str,
    significance: float = 0.01,
) -> list[EvaluationReport]:
    """Aggregate raw benchmark results into one report per method.

    Runs that did not converge or report no usable covariance count as
    failures and are excluded from the error and NEES statistics.  With fewer
    than 30 NEES samples the chi-square verdict is left undecided (NaN
    ANEES, failed flag).
    """
    if not results:
        raise ValueError("no results to aggregate")
    by_method: dict[str, list] = {}
    for r in results:
        by_method.setdefault(r.method, []).append(r)
    reports = []
    for method, runs in by_method.items():
        errors = []
        nees_samples = []
        iters = []
        runtimes = []
        corr = []
        failures = 0
        dof = int(runs[0].truth.dof)
        for r in runs:
            runtimes.append(r.runtime_ms)
            corr.append((r.n_matched, r.n_unmatched))
            est = r.estimate
            if not est.converged or est.covariance is None:
                failures += 1
                continue
            try:
                nees_samples.append(nees(est, r.truth))
            except (np.linalg.LinAlgError, ValueError):
                failures += 1
                continue
            err = est.error_to(r.truth)
            errors.append((err[:-1], err[-1]))
            iters.append(est.iterations)
        if errors:
            rmse_t, rmse_r = rmse(errors)
        else:
            rmse_t = rmse_r = math.nan
        if len(nees_samples) >= 30:
            ar = anees(np.array(nees_samples), dof, significance)
            anees_val, chi2_pass, p_value = ar.anees, ar.chi2_pass, ar.p_value
        else:
            anees_val, chi2_pass, p_value = math.nan, False, math.nan
        reports.append(
            EvaluationReport(
                method=method,
                dataset=dataset,
                rmse_translation=rmse_t,
                rmse_rotation_deg=rmse_r,
                anees=anees_val,
                nees_samples=tuple(nees_samples),
                chi2_pass=chi2_pass,
                chi2_p_value=p_value,
                avg_iterations=float(np.mean(iters)) if iters else math.nan,
                avg_runtime_ms=float(np.mean(runtimes)),
                correspondence_stats=tuple(corr),
                n_runs=len(runs),
                failures=failures,
            )
        )
    return reports


# -- CSV emission -----------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report_csv(
    reports: list[EvaluationReport],
    path,
    config_hash: str = "",
    include_runtime: bool = True,
) -> None:
    """One row per method/dataset; schema fixed by ``REPORT_COLUMNS``.

    ``include_runtime=False`` zeroes the (wall-clock, hence non-reproducible)
    runtime column so that outputs are byte-identical across reruns.
    """
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for rep in reports:
            writer.writerow(
                [
                    rep.method,
                    rep.dataset,
                    _fmt(rep.rmse_translation),
                    _fmt(rep.rmse_rotation_deg),
                    _fmt(rep.anees),
                    _fmt(rep.chi2_pass),
                    _fmt(rep.avg_iterations),
                    _fmt(rep.avg_runtime_ms if include_runtime else 0.0),
                    rep.n_runs,
                    rep.failures,
                ]
            )


def read_report_csv(path) -> tuple[list[dict], str]:
    """Parse a report CSV back into typed rows; returns (rows, config_hash)."""
    with open(path, newline="") as fh:
        first = fh.readline()
        if first.startswith("#"):
            config_hash = first.strip().removeprefix("# config_hash=")
        else:
            config_hash = ""
            fh.seek(0)
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            rows.append(
                {
                    "method": raw["method"],
                    "dataset": raw["dataset"],
                    "rmse_m": float(raw["rmse_m"]),
                    "rmse_deg": float(raw["rmse_deg"]),
                    "anees": float(raw["anees"]),
                    "chi2_pass": raw["chi2_pass"] == "true",
                    "avg_iters": float(raw["avg_iters"]),
                    "avg_runtime_ms": float(raw["avg_runtime_ms"]),
                    "n_runs": int(raw["n_runs"]),
                    "n_failures": int(raw["n_failures"]),
                }
            )
    return rows, config_hash


def write_runs_csv(
    results,
    dataset: str,
    path,
    config_hash: str = "",
    include_runtime: bool = True,
) -> None:
    """Per-run rows for external plotting; schema fixed by ``RUN_COLUMNS``."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(RUN_COLUMNS)
        for r in results:
            est = r.estimate
            valid = est.converged and est.covariance is not None
            nees_val = None
            err = None
            if valid:
                try:
                    nees_val = nees(est, r.truth)
                    err = est.error_to(r.truth)
                except (np.linalg.LinAlgError, ValueError):
                    nees_val = None
            three = est.dof == 3
            writer.writerow(
                [
                    r.method,
                    dataset,
                    r.config_index,
                    r.run_index,
                    _fmt(bool(est.converged)),
                    est.iterations,
                    _fmt(nees_val),
                    _fmt(float(err[0]) if err is not None else None),
                    _fmt(float(err[1]) if err is not None and three else None),
                    _fmt(float(err[-1]) if err is not None else None),
                    _fmt(float(r.truth.translation[0])),
                    _fmt(float(r.truth.translation[1]) if three else None),
                    _fmt(float(r.truth.rotation)),
                    _fmt(float(est.cost)),
                    _fmt(r.runtime_ms if include_runtime else 0.0),
                    r.n_prev,
                    r.n_cur,
                    r.n_matched,
                    r.n_unmatched,
                    r.resamples,
                ]
            )
