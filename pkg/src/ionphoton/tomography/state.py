"""Two-qubit state reconstruction from coincidence data.

Linear inversion from joint Pauli expectations, followed by a Poissonian
maximum-likelihood fit over the physical states rho = T^dag T / Tr(T^dag T)
with T lower triangular.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from ..measurement import binned_operators, static_operator
from ..quantum import (
    AXIS_INDEX,
    PAULI_PRODUCTS,
    DensityMatrix,
    PauliTable,
    StateVector,
    as_physical,
    bell_fidelity,
    fidelity,
    pauli_matrix,
    purity,
)
from ..wavepacket import Wavepacket
from .fringe import FringeFitError, fit_larmor_fringe
from .histograms import AXES, SIGNS, BasisSetting, HistogramError, check_complete


class MLEConvergenceError(RuntimeError):
    """Raised when the optimizer stops without meeting the convergence criteria."""

    def __init__(self, message: str, best: "MLEResult"):
        super().__init__(message)
        self.best = best


# ---------------------------------------------------------------------------
# Pauli expectations


def _ratio(terms, weights_num, weights_den):
    """R = sum(g_i . theta_i) / sum(h_i . theta_i) and its delta-method variance.

    ``terms`` is a list of ``(theta, cov)`` pairs; ``weights_num``/``weights_den``
    the matching coefficient vectors g_i and h_i.
    """
    num = sum(g @ th for (th, _), g in zip(terms, weights_num))
    den = sum(h @ th for (th, _), h in zip(terms, weights_den))
    if den == 0:
        return np.nan, np.nan
    R = num / den
    var = 0.0
    for (th, cov), g, h in zip(terms, weights_num, weights_den):
        d = (g - R * h) / den
        var += d @ cov @ d
    return float(R), float(var)


def _mean_entry(values):
    vals = [(v, s) for v, s in values if np.isfinite(v)]
    if not vals:
        return np.nan, np.nan
    n = len(vals)
    return float(np.mean([v for v, _ in vals])), float(sum(s for _, s in vals) / n**2)


def expectations_from_counts(counts: dict, durations: dict | None = None) -> PauliTable:
    """Pauli table from windowed counts of 36 static projective settings.

    ``counts`` maps :class:`BasisSetting` to counts; counts are converted to
    rates with ``durations`` when given.
    """
    missing = [s for s in _settings() if s not in counts]
    if missing:
        raise HistogramError(f"missing settings: {', '.join(s.label for s in missing)}")
    durations = durations or {}
    theta = {}
    for s in _settings():
        d = durations.get(s, 1.0)
        theta[s] = (np.array([counts[s] / d]), np.array([[max(counts[s], 0.0) / d**2]]))
    return _table_from_static(theta)


def _settings():
    return [BasisSetting(pa, ps, ia, isg) for pa in AXES for ps in SIGNS for ia in AXES for isg in SIGNS]


def _table_from_static(theta) -> PauliTable:
    S = np.zeros((4, 4))
    V = np.zeros((4, 4))
    S[0, 0] = 1.0
    one = np.array([1.0])
    ph_marg = {a: [] for a in AXES}
    ion_marg = {b: [] for b in AXES}
    for a in AXES:
        for b in AXES:
            group = [BasisSetting(a, s, b, sg) for s in SIGNS for sg in SIGNS]
            terms = [theta[g] for g in group]
            dens = [one] * 4
            S[AXIS_INDEX[a], AXIS_INDEX[b]], V[AXIS_INDEX[a], AXIS_INDEX[b]] = _ratio(
                terms, [g.photon_sign * g.ion_sign * one for g in group], dens
            )
            ph_marg[a].append(_ratio(terms, [g.photon_sign * one for g in group], dens))
            ion_marg[b].append(_ratio(terms, [g.ion_sign * one for g in group], dens))
    for a in AXES:
        S[AXIS_INDEX[a], 0], V[AXIS_INDEX[a], 0] = _mean_entry(ph_marg[a])
        S[0, AXIS_INDEX[a]], V[0, AXIS_INDEX[a]] = _mean_entry(ion_marg[a])
    return PauliTable(S, V)


def expectations_from_histograms(
    histograms,
    larmor_frequency: float,
    wavepacket: Wavepacket,
) -> PauliTable:
    """Normalized joint expectations S_ij from 36 time-resolved histograms.

    Ion z settings use windowed count sums. For ion x/y settings each fringe
    fit yields ``(a0, a1, a2)``; ``a1`` and ``a2`` carry the in-phase and
    quadrature correlations with the ion's equatorial axes at the reference
    time (the wavepacket onset), ``a0`` the normalization. Each entry is the
    unweighted mean of its independent estimates; per-setting fit failures are
    recorded in ``flags`` and dropped.
    """
    by_setting = check_complete(histograms)
    fits, failures = {}, {}
    params = {}
    for s, h in by_setting.items():
        d = h.duration
        if s.ion_axis == "z":
            n, v = h.windowed()
            params[s] = (np.array([n / d, 0.0, 0.0]), np.diag([max(v, 0.0) / d**2, 0.0, 0.0]))
            continue
        try:
            fit = fit_larmor_fringe(h, larmor_frequency, wavepacket, fit_frequency=False)
        except FringeFitError as exc:
            failures[s.label] = str(exc)
            continue
        fits[s.label] = fit
        if not fit.ok:
            failures[s.label] = f"unphysical visibility {fit.visibility:.3f}"
        params[s] = (fit.coefficients / d, fit.covariance / d**2)

    S = np.zeros((4, 4))
    V = np.zeros((4, 4))
    S[0, 0] = 1.0
    e0 = np.array([1.0, 0.0, 0.0])
    ph_marg = {a: [] for a in AXES}
    ion_marg = {b: [] for b in AXES}
    corr = {(a, b): [] for a in AXES for b in AXES}

    def in_phase(setting, target):
        """Coefficient vector extracting the ion ``target`` correlation from (a0, a1, a2)."""
        b, sg = setting.ion_axis, setting.ion_sign
        if b == "z":
            return sg * e0 if target == "z" else None
        if target == "z":
            return None
        if b == target:
            return np.array([0.0, sg, 0.0])
        # b = x gives y in the quadrature; b = y gives -x in the quadrature
        return np.array([0.0, 0.0, sg if b == "x" else -sg])

    for a in AXES:
        for b in AXES:
            group = [BasisSetting(a, s, b, sg) for s in SIGNS for sg in SIGNS]
            if any(g not in params for g in group):
                continue
            terms = [params[g] for g in group]
            dens = [e0] * 4
            ph_marg[a].append(_ratio(terms, [g.photon_sign * e0 for g in group], dens))
            for target in AXES:
                vecs = [in_phase(g, target) for g in group]
                if vecs[0] is None:
                    continue
                corr[(a, target)].append(_ratio(terms, [g.photon_sign * v for g, v in zip(group, vecs)], dens))
                ion_marg[target].append(_ratio(terms, vecs, dens))

    flags = dict(failures)
    for a in AXES:
        S[AXIS_INDEX[a], 0], V[AXIS_INDEX[a], 0] = _mean_entry(ph_marg[a])
        S[0, AXIS_INDEX[a]], V[0, AXIS_INDEX[a]] = _mean_entry(ion_marg[a])
        for b in AXES:
            S[AXIS_INDEX[a], AXIS_INDEX[b]], V[AXIS_INDEX[a], AXIS_INDEX[b]] = _mean_entry(corr[(a, b)])
    bad = ~np.isfinite(S)
    if bad.any():
        for i, j in zip(*np.nonzero(bad)):
            flags[f"S[{i},{j}]"] = "no valid estimate"
        S[bad] = 0.0
        V[bad] = np.inf
    table = PauliTable(S, V, flags=flags)
    table.fits = fits
    return table


def linear_reconstruct(S: PauliTable | np.ndarray) -> np.ndarray:
    """rho = 1/4 sum_ij S_ij sigma_i (x) sigma_j; positivity is not enforced."""
    S = S.S if isinstance(S, PauliTable) else np.asarray(S, dtype=float)
    if abs(S[0, 0] - 1.0) > 1e-12:
        raise ValueError("S[0, 0] must equal 1")
    m = pauli_matrix(S)
    return 0.5 * (m + m.conj().T)


# ---------------------------------------------------------------------------
# Likelihood data


@dataclass
class TomographyData:
    """Count records for the likelihood.

    Record ``k`` has expected value ``g[group_k] * Tr(O_k A) + background_k``
    where ``A`` is the unnormalized state. ``observed`` may be background-
    subtracted; the likelihood adds ``background`` back so every term is a
    proper Poisson count.
    """

    operators: np.ndarray
    observed: np.ndarray
    variances: np.ndarray
    background: np.ndarray
    groups: np.ndarray
    labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.operators = np.asarray(self.operators, dtype=complex)
        self.observed = np.asarray(self.observed, dtype=float)
        self.variances = np.asarray(self.variances, dtype=float)
        self.background = np.asarray(self.background, dtype=float)
        self.groups = np.asarray(self.groups, dtype=int)
        # C[k, j] = Tr(O_k P_j) / 4 so that Tr(O_k A) = C @ Tr(A P_j)
        P = PAULI_PRODUCTS.reshape(16, 4, 4)
        self.coefficients = 0.25 * np.einsum("kab,jba->kj", self.operators, P).real

    @property
    def n_groups(self) -> int:
        return int(self.groups.max()) + 1 if self.groups.size else 1

    def with_observed(self, observed: np.ndarray) -> "TomographyData":
        out = replace(self, observed=observed)
        return out


def data_from_counts(counts: dict, durations: dict | None = None, background: dict | None = None) -> TomographyData:
    """Records for windowed counts measured with static projectors."""
    durations = durations or {}
    background = background or {}
    settings = list(counts)
    ops = np.array([durations.get(s, 1.0) * static_operator(s) for s in settings])
    obs = np.array([counts[s] for s in settings], dtype=float)
    bkg = np.array([background.get(s, 0.0) for s in settings], dtype=float)
    return TomographyData(ops, obs, np.clip(obs + bkg, 0.0, None), bkg, np.zeros(len(settings)), [s.label for s in settings])


def data_from_histograms(histograms, larmor_frequency: float, wavepacket: Wavepacket) -> TomographyData:
    """Time-resolved records: one per in-window bin of every histogram."""
    hs = list(check_complete(histograms).values())
    group_ids = {g: i for i, g in enumerate(sorted({h.group for h in hs}))}
    ops, obs, var, bkg, grp, labels = [], [], [], [], [], []
    for h in hs:
        m = h.window_mask()
        weights = wavepacket.bin_weights(h.edges)[m]
        phasors = wavepacket.bin_phasors(h.edges, larmor_frequency, h.window_start)[m]
        ops.append(h.duration * binned_operators(h.setting, weights, phasors))
        obs.append(h.counts[m])
        var.append(np.clip(h.var[m], 0.0, None))
        bkg.append(h.bkg[m])
        grp.append(np.full(m.sum(), group_ids[h.group]))
        labels.extend(f"{h.setting.label}#{k}" for k in np.nonzero(m)[0])
    return TomographyData(
        np.concatenate(ops),
        np.concatenate(obs),
        np.concatenate(var),
        np.concatenate(bkg),
        np.concatenate(grp),
        labels,
    )


# ---------------------------------------------------------------------------
# Maximum likelihood


@dataclass
class MLEResult:
    rho: DensityMatrix
    T: np.ndarray
    scales: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool
    gradient_norm: float
    message: str

    def to_json(self) -> dict:
        return {
            "log_likelihood": self.log_likelihood,
            "iterations": self.iterations,
            "converged": self.converged,
            "gradient_norm": self.gradient_norm,
            "normalizations": self.scales.tolist(),
            "message": self.message,
        }


START_MIXING = 1e-8
_OFF = np.tril_indices(4, -1)


def _unpack(x: np.ndarray) -> np.ndarray:
    T = np.zeros((4, 4), dtype=complex)
    T[np.diag_indices(4)] = x[:4]
    T[_OFF] = x[4:10] + 1j * x[10:16]
    return T


def _pack(T: np.ndarray) -> np.ndarray:
    off = T[_OFF]
    return np.concatenate([np.diag(T).real, off.real, off.imag])


def cholesky_factor(A: np.ndarray) -> np.ndarray:
    """Lower-triangular T with real diagonal such that T^dag T = A (A positive definite)."""
    J = np.eye(4)[::-1]
    L = np.linalg.cholesky(J @ A @ J)
    return (J @ L @ J).conj().T


def _objective(data: TomographyData, total: float):
    P = PAULI_PRODUCTS.reshape(16, 4, 4)
    C = data.coefficients
    n = data.observed + data.background
    b = data.background
    ng = data.n_groups
    pos = n > 0

    def f(x):
        T = _unpack(x[:16])
        logg = np.concatenate([[0.0], x[16:]])
        g = np.exp(logg)[data.groups]
        A = T.conj().T @ T
        s = np.einsum("jab,ba->j", P, A).real
        q = C @ s
        mu = g * q + b
        mu_safe = np.where(mu > 0, mu, 1e-300)
        # Poisson deviance term by term: n (r - log(1 + r)) with r = mu/n - 1, or mu when n = 0.
        # Each term is non-negative, so there is no cancellation near the optimum.
        r = np.where(pos, mu_safe / np.where(pos, n, 1.0) - 1.0, 0.0)
        nll = np.sum(np.where(pos, n * (r - np.log1p(r)), mu))
        w = g * (1.0 - np.where(n > 0, n / mu_safe, 0.0))
        G = np.einsum("j,jab->ab", C.T @ w, P)
        GT = G @ T.conj().T
        # d/d Re T_ij = 2 Re[(G T^dag)_ji],  d/d Im T_ij = -2 Im[(G T^dag)_ji]
        GTt = GT.T
        gx = np.concatenate([2.0 * np.diag(GTt).real, 2.0 * GTt[_OFF].real, -2.0 * GTt[_OFF].imag])
        gg = []
        if ng > 1:
            r = (1.0 - np.where(n > 0, n / mu_safe, 0.0)) * g * q
            gg = [np.sum(r[data.groups == k]) for k in range(1, ng)]
        return nll / total, np.concatenate([gx, gg]) / total

    return f


def _initial_A(data: TomographyData, initial_guess) -> np.ndarray:
    if initial_guess is None:
        rho0 = np.eye(4) / 4
    else:
        rho0 = initial_guess.matrix if isinstance(initial_guess, DensityMatrix) else np.asarray(initial_guess)
        rho0 = 0.5 * (rho0 + rho0.conj().T)
        w, v = np.linalg.eigh(rho0)
        w = np.clip(w, 0.0, None)
        rho0 = (v * w) @ v.conj().T
        tr = np.trace(rho0).real
        rho0 = rho0 / tr if tr > 0 else np.eye(4) / 4
        # stay strictly inside the cone so the Cholesky factor exists; a small
        # admixture keeps near-pure starting points close to the boundary,
        # where the quartic landscape in T makes later progress slow
        rho0 = (1 - START_MIXING) * rho0 + START_MIXING * np.eye(4) / 4
    P = PAULI_PRODUCTS.reshape(16, 4, 4)
    q = data.coefficients @ np.einsum("jab,ba->j", P, rho0).real
    signal = max(float(np.sum(data.observed)), 1e-12)
    scale = signal / max(float(np.sum(q)), 1e-300)
    return scale * rho0


def mle_reconstruct(
    data: TomographyData,
    initial_guess: DensityMatrix | np.ndarray | None = None,
    max_iterations: int = 5000,
    ftol: float = 1e-15,
    gtol: float = 1e-10,
    warm_start: MLEResult | None = None,
) -> MLEResult:
    """Poissonian maximum-likelihood state over rho = T^dag T / Tr(T^dag T).

    Converges when the relative change of the objective drops below ``ftol``
    or the gradient norm below ``gtol``; the objective is the Poisson
    deviance divided by the total count, so both tolerances are per count.
    """
    total = max(float(np.sum(data.observed + data.background)), 1.0)
    f = _objective(data, total)
    if warm_start is not None:
        x0 = np.concatenate([_pack(warm_start.T), np.log(warm_start.scales[1:])])
    else:
        x0 = np.concatenate([_pack(cholesky_factor(_initial_A(data, initial_guess))), np.zeros(data.n_groups - 1)])
    unit = np.sqrt(max(float(np.sum(data.observed)), 1e-12))
    x_scale = np.concatenate([np.full(16, unit), np.ones(data.n_groups - 1)])

    def fs(z):
        val, grad = f(z * x_scale)
        return val, grad * x_scale

    res = minimize(
        fs,
        x0 / x_scale,
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iterations, "ftol": ftol, "gtol": gtol, "maxcor": 30},
    )
    x = res.x * x_scale
    T = _unpack(x[:16])
    A = T.conj().T @ T
    rho = as_physical(A / np.trace(A).real)
    gnorm = float(np.linalg.norm(res.jac))
    converged = bool(res.success) or (res.status == 2 and gnorm < 1e3 * gtol)
    out = MLEResult(
        rho=rho,
        T=T,
        scales=np.exp(np.concatenate([[0.0], x[16:]])),
        log_likelihood=-float(res.fun) * total,
        iterations=int(res.nit),
        converged=converged,
        gradient_norm=gnorm,
        message=str(res.message),
    )
    if not converged:
        raise MLEConvergenceError(f"MLE did not converge after {res.nit} iterations: {res.message}", out)
    return out


# ---------------------------------------------------------------------------
# Figures of merit and error bars

FUNCTIONALS = ("fidelity", "bell_fidelity", "purity")


def evaluate(rho: DensityMatrix, functional: str, target: StateVector | None = None) -> float:
    if functional == "fidelity":
        if target is None:
            raise ValueError("fidelity needs a target state")
        return fidelity(rho, target)
    if functional == "bell_fidelity":
        return bell_fidelity(rho)[0]
    if functional == "purity":
        return purity(rho)
    raise ValueError(f"unknown functional {functional!r}")


def error_bars(
    data: TomographyData,
    rho_hat: MLEResult,
    functional: str | list[str] = FUNCTIONALS,
    target: StateVector | None = None,
) -> float | dict[str, float]:
    """1-sigma errors of state functionals by Poissonian finite differences.

    Each record is shifted by its own standard deviation, the likelihood is
    re-maximized from the original optimum and the change of each functional
    is accumulated in quadrature. Records with zero variance contribute
    nothing.
    """
    names = [functional] if isinstance(functional, str) else list(functional)
    if "fidelity" in names and target is None:
        names.remove("fidelity")
    base = {k: evaluate(rho_hat.rho, k, target) for k in names}
    acc = {k: 0.0 for k in names}
    sig = np.sqrt(np.clip(data.variances, 0.0, None))
    for k in np.nonzero(sig > 0)[0]:
        obs = data.observed.copy()
        obs[k] += sig[k]
        try:
            res = mle_reconstruct(data.with_observed(obs), warm_start=rho_hat, ftol=1e-14, gtol=1e-10)
        except MLEConvergenceError as exc:
            # line-search stalls at machine precision are harmless here
            res = exc.best
        for name in names:
            acc[name] += (evaluate(res.rho, name, target) - base[name]) ** 2
    out = {k: float(np.sqrt(v)) for k, v in acc.items()}
    return out[functional] if isinstance(functional, str) else out
