"""Conversion efficiency versus pump power: model, weighted fit, working point."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq, least_squares

from .chain import BudgetError


class CurveFitError(BudgetError):
    pass


@dataclass(frozen=True)
class EfficiencyCurvePoint:
    pump_power: float
    efficiency: float
    sigma: float

    def __post_init__(self):
        if self.pump_power < 0:
            raise BudgetError("pump power must be non-negative")
        if not self.sigma > 0:
            raise BudgetError("efficiency sigma must be positive")


def eta_ext(pump_power, eta_max: float, eta_nor: float, length: float):
    """eta_max * sin^2(sqrt(eta_nor * P) * L)."""
    p = np.asarray(pump_power, dtype=float)
    if np.any(p < 0) or eta_nor < 0 or length < 0:
        raise BudgetError("eta_ext arguments must be non-negative")
    out = eta_max * np.sin(np.sqrt(eta_nor * p) * length) ** 2
    return float(out) if out.ndim == 0 else out


def first_maximum_power(eta_nor: float, length: float) -> float:
    return (np.pi / 2) ** 2 / (eta_nor * length**2)


@dataclass
class CurveFit:
    eta_max: float
    eta_nor: float
    covariance: np.ndarray
    chi2: float
    dof: int
    length: float

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    @property
    def peak_power(self) -> float:
        return first_maximum_power(self.eta_nor, self.length)

    def __call__(self, pump_power):
        return eta_ext(pump_power, self.eta_max, self.eta_nor, self.length)

    def to_json(self) -> dict:
        return {
            "eta_max": self.eta_max,
            "eta_nor": self.eta_nor,
            "sigma_eta_max": float(self.sigma[0]),
            "sigma_eta_nor": float(self.sigma[1]),
            "covariance": self.covariance.tolist(),
            "chi2": self.chi2,
            "dof": self.dof,
            "length": self.length,
            "peak_power": self.peak_power,
        }


def fit_efficiency_curve(points: list[EfficiencyCurvePoint], length: float) -> CurveFit:
    """Weighted Levenberg-Marquardt fit of (eta_max, eta_nor).

    The start value puts the first maximum at the most efficient data point.
    The covariance is the inverse Fisher matrix of the supplied sigmas, not
    rescaled by the reduced chi-square.
    """
    if len(points) < 4:
        raise CurveFitError("need at least 4 points")
    P = np.array([p.pump_power for p in points])
    y = np.array([p.efficiency for p in points])
    s = np.array([p.sigma for p in points])
    if np.ptp(P) == 0:
        raise CurveFitError("all points share the same pump power")
    k = int(np.argmax(y))
    p_peak = P[k] if P[k] > 0 else P.max()
    x0 = np.array([max(y[k], 1e-6), first_maximum_power(1.0, length) / p_peak])

    def resid(x):
        return (eta_ext(P, x[0], max(x[1], 0.0), length) - y) / s

    sol = least_squares(resid, x0, x_scale=np.abs(x0), method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    if not sol.success:
        raise CurveFitError(f"curve fit did not converge: {sol.message}")
    J = sol.jac
    try:
        cov = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError as exc:
        raise CurveFitError("singular curve-fit Jacobian") from exc
    return CurveFit(
        eta_max=float(sol.x[0]),
        eta_nor=float(sol.x[1]),
        covariance=cov,
        chi2=float(np.sum(sol.fun**2)),
        dof=len(points) - 2,
        length=length,
    )


def working_point(a: CurveFit, b: CurveFit) -> tuple[float, float]:
    """Pump power and efficiency where two fitted curves cross between their first maxima."""
    lo, hi = sorted((a.peak_power, b.peak_power))
    f = lambda p: a(p) - b(p)
    if f(lo) * f(hi) > 0:
        raise CurveFitError("curves do not cross between their first maxima")
    if f(lo) == 0:
        return lo, a(lo)
    p = brentq(f, lo, hi, xtol=1e-14, rtol=1e-14)
    return float(p), float(a(p))


def write_curve_csv(path: str | Path, fits: dict[str, CurveFit], points: dict[str, list], n: int = 200) -> None:
    """Fitted curves and data in long format: arm, kind, pump_power, efficiency, sigma."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["arm", "kind", "pump_power_W", "efficiency", "sigma"])
        for name, fit in fits.items():
            for p in points.get(name, []):
                w.writerow([name, "data", repr(p.pump_power), repr(p.efficiency), repr(p.sigma)])
            pmax = max([p.pump_power for p in points.get(name, [])] + [1.5 * fit.peak_power])
            for pw in np.linspace(0.0, pmax, n):
                w.writerow([name, "fit", repr(float(pw)), repr(float(fit(pw))), ""])
