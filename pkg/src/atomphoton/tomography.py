"""Two-qubit state reconstruction from count data.

Pipeline: Pauli expectation extraction -> linear inversion -> projection
onto the physical set -> maximum-likelihood refinement over a PSD
factorization. The canonical measurement set is the nine Pauli-Pauli
combinations; the atomic sigma_z settings are realized as populations
(no/full analysis transfer) and the photonic sigma_z as circular-basis
analysis.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import qmath
from .measurement import (
    ATOM_SX,
    ATOM_SY,
    ATOM_SZ,
    PHOTON_SX,
    PHOTON_SY,
    PHOTON_SZ,
    Dataset,
    MeasurementSetting,
    simulate_settings,
)

PAULI_LABELS = "xyz"

BASIS_CONVENTION = "atom (|mF=-1>,|mF=+1>) x photon (|sigma+>,|sigma->)"

_ANGLE_TOL = 1e-9


def canonical_settings():
    """The nine Pauli-Pauli measurement settings, labelled 'xx' .. 'zz'."""
    atoms = {"x": ATOM_SX, "y": ATOM_SY, "z": ATOM_SZ}
    photons = {"x": PHOTON_SX, "y": PHOTON_SY, "z": PHOTON_SZ}
    out = []
    for ai in PAULI_LABELS:
        for pj in PAULI_LABELS:
            out.append(MeasurementSetting(atom=atoms[ai], photon=photons[pj],
                                          label=ai + pj))
    return out


def simulate_tomography(rho, n_per_setting, noise=None, seed=0, exact=False):
    """Dataset over the canonical nine settings."""
    return simulate_settings(rho, canonical_settings(), n_per_setting,
                             noise=noise, seed=seed, exact=exact)


def _classify_atom(setting):
    """Map an AtomSetting onto (pauli index, sign of the transferred outcome)."""
    th, ph = setting.theta, setting.phi % (2 * math.pi)
    if abs(th - math.pi / 4) < _ANGLE_TOL:
        if min(ph, 2 * math.pi - ph) < _ANGLE_TOL:
            return 0, +1        # sigma_x, transferred = +1 eigenstate
        if abs(ph - math.pi / 2) < _ANGLE_TOL:
            return 1, +1        # sigma_y
        return None
    if abs(th - math.pi / 2) < _ANGLE_TOL:
        return 2, +1            # transfers |-1>, the sigma_z = +1 state
    if abs(th) < _ANGLE_TOL:
        return 2, -1            # transfers |+1>, the sigma_z = -1 state
    return None


def _classify_photon(setting):
    if setting.circular:
        return 2
    b = setting.beta % math.pi
    if min(b, math.pi - b) < _ANGLE_TOL:
        return 0
    if abs(b - math.pi / 4) < _ANGLE_TOL:
        return 1
    return None


@dataclass
class TomographySet:
    """Counts aggregated over the nine canonical settings.

    `counts[(i, j)]` holds the four cells in eigenvalue-sign order
    (+,+), (+,-), (-,+), (-,-) for atomic Pauli i and photonic Pauli j.
    """

    counts: dict
    exact: bool = False

    @classmethod
    def from_dataset(cls, dataset: Dataset):
        agg = {}
        for rec in dataset.records:
            atom = _classify_atom(rec.setting.atom)
            photon = _classify_photon(rec.setting.photon)
            if atom is None or photon is None:
                continue   # not a canonical tomography setting, e.g. a scan point
            i, sign = atom
            c = np.asarray(rec.counts, dtype=float)
            # record order: (F2,APD1),(F2,APD2),(F1,APD1),(F1,APD2);
            # "+" atomic outcome is F2 when sign=+1, F1 when sign=-1.
            cells = c if sign > 0 else c[[2, 3, 0, 1]]
            key = (i, photon)
            agg[key] = agg.get(key, 0.0) + cells
        missing = [
            PAULI_LABELS[i] + PAULI_LABELS[j]
            for i in range(3)
            for j in range(3)
            if (i, j) not in agg
        ]
        if missing:
            raise ValueError(f"tomography set is missing settings: {', '.join(missing)}")
        return cls(counts=agg, exact=bool(dataset.metadata.get("exact", False)))

    def totals(self):
        return {k: float(v.sum()) for k, v in sorted(self.counts.items())}


@dataclass
class CorrelationData:
    t: np.ndarray        # 3x3, <sigma_i (x) sigma_j>
    a: np.ndarray        # atomic marginal <sigma_i (x) I>
    b: np.ndarray        # photonic marginal <I (x) sigma_j>
    n_eff: dict = field(default_factory=dict)


def extract_correlations(ts: TomographySet) -> CorrelationData:
    """Pauli expectations from counts: T_ij = [n++ + n-- - n+- - n-+]/N,
    marginals averaged over the partner settings using the same counts."""
    t = np.zeros((3, 3))
    a = np.zeros(3)
    b = np.zeros(3)
    n_eff = {}
    for (i, j), c in sorted(ts.counts.items()):
        n = c.sum()
        if n <= 0:
            raise ValueError(f"setting {PAULI_LABELS[i]}{PAULI_LABELS[j]} has no counts")
        t[i, j] = (c[0] + c[3] - c[1] - c[2]) / n
        a[i] += (c[0] + c[1] - c[2] - c[3]) / n / 3.0
        b[j] += (c[0] + c[2] - c[1] - c[3]) / n / 3.0
        n_eff[PAULI_LABELS[i] + PAULI_LABELS[j]] = float(n)
    return CorrelationData(t=t, a=a, b=b, n_eff=n_eff)


def linear_inversion(corr: CorrelationData):
    """Pauli expansion rho = (I + sum a_i s_i(x)I + sum b_j I(x)s_j
    + sum T_ij s_i(x)s_j)/4. Hermitian and trace 1; may be non-PSD on
    noisy data."""
    rho = np.eye(4, dtype=complex)
    eye = np.eye(2, dtype=complex)
    for i, s in enumerate(qmath.PAULIS):
        rho += corr.a[i] * np.kron(s, eye)
        rho += corr.b[i] * np.kron(eye, s)
        for j, sj in enumerate(qmath.PAULIS):
            rho += corr.t[i, j] * np.kron(s, sj)
    return rho / 4.0


def project_physical(rho):
    """Closest PSD trace-1 matrix in Frobenius norm.

    Eigenvalues are projected onto the probability simplex (water-filling
    threshold), eigenvectors kept. Idempotent on physical inputs.
    """
    a = qmath.check_hermitian(rho)
    if abs(np.real(np.trace(a)) - 1.0) > 1e-9:
        raise ValueError("project_physical expects a trace-1 matrix")
    w, u = np.linalg.eigh(a)
    x = np.sort(w)[::-1]
    csum = np.cumsum(x)
    ks = np.arange(1, len(x) + 1)
    k = ks[x - (csum - 1.0) / ks > 0][-1]
    tau = (csum[k - 1] - 1.0) / k
    lam = np.maximum(w - tau, 0.0)
    return (u * lam) @ u.conj().T


# ----------------------------------------------------------------------
# Maximum-likelihood refinement
# ----------------------------------------------------------------------

_LOWER_OFFDIAG = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)]


def _factor_from_params(t):
    m = np.zeros((4, 4), dtype=complex)
    m[np.diag_indices(4)] = t[:4]
    for k, (r, c) in enumerate(_LOWER_OFFDIAG):
        m[r, c] = t[4 + 2 * k] + 1j * t[5 + 2 * k]
    return m


def _params_from_factor(m):
    t = np.zeros(16)
    t[:4] = np.real(np.diag(m))
    for k, (r, c) in enumerate(_LOWER_OFFDIAG):
        t[4 + 2 * k] = m[r, c].real
        t[5 + 2 * k] = m[r, c].imag
    return t


def _rho_from_params(t):
    m = _factor_from_params(t)
    a = m.conj().T @ m
    tr = np.real(np.trace(a))
    if tr < 1e-30:
        return np.eye(4, dtype=complex) / 4.0
    return a / tr


def _lower_factor(rho, floor=1e-8):
    """Lower-triangular T with T^dagger T = rho (eigenvalue-floored)."""
    w, u = np.linalg.eigh(rho)
    w = np.maximum(w, floor)
    a = (u * w) @ u.conj().T
    a /= np.real(np.trace(a))
    rev = np.flip(np.flip(a, 0), 1)
    m = np.linalg.cholesky(rev)
    upper = np.flip(np.flip(m, 0), 1)       # a = upper @ upper^dagger
    return upper.conj().T                   # lower, T^dagger T = a


_PAULI_EIG = {
    +1: [(np.eye(2, dtype=complex) + s) / 2 for s in qmath.PAULIS],
    -1: [(np.eye(2, dtype=complex) - s) / 2 for s in qmath.PAULIS],
}


def _measurement_operators(ts: TomographySet):
    """Flattened projector list matching the flattened count vector."""
    ops, counts = [], []
    for (i, j), c in sorted(ts.counts.items()):
        for sa, sp, cell in (((+1), (+1), c[0]), ((+1), (-1), c[1]),
                             ((-1), (+1), c[2]), ((-1), (-1), c[3])):
            ops.append(np.kron(_PAULI_EIG[sa][i], _PAULI_EIG[sp][j]))
            counts.append(cell)
    return np.array(ops), np.array(counts, dtype=float)


@dataclass
class FitReport:
    log_likelihood: float
    init_log_likelihood: float
    iterations: int
    converged: bool
    regularization: str = "none"

    def to_dict(self):
        return {
            "log_likelihood": self.log_likelihood,
            "init_log_likelihood": self.init_log_likelihood,
            "iterations": self.iterations,
            "converged": self.converged,
            "regularization": self.regularization,
        }


MLE_MAX_ITER = 5000
MLE_REL_TOL = 1e-10


def mle_reconstruct(ts: TomographySet, init=None):
    """Maximum-likelihood state estimate and fit report.

    The state is parameterized as T^dagger T / tr(T^dagger T) over the 16
    real entries of a lower-triangular factor, so the output is PSD with
    unit trace by construction. Maximizes the multinomial log-likelihood
    of the counts; the result never falls below the initialization.

    Sampled datasets with empty cells get a half-count weight in those
    cells (keeps the optimum off the boundary); exact-mode data is used
    as-is, where zero-weight terms drop out of the likelihood.
    """
    ops, counts = _measurement_operators(ts)
    regularization = "none"
    if not ts.exact:
        zero = counts == 0.0
        if np.any(zero):
            counts = counts.copy()
            counts[zero] = 0.5
            regularization = f"half-count prior on {int(zero.sum())} empty cells"

    active = counts > 0
    ops_a = ops[active]
    counts_a = counts[active]

    def nll(t):
        rho = _rho_from_params(t)
        p = np.einsum("kij,ji->k", ops_a, rho).real
        p = np.clip(p, 1e-12, None)
        return -float(counts_a @ np.log(p))

    if init is None:
        init_rho = project_physical(linear_inversion(extract_correlations(ts)))
    else:
        init_rho = qmath.check_density_matrix(init)
    t0 = _params_from_factor(_lower_factor(init_rho))
    f0 = nll(t0)

    res = minimize(
        nll,
        t0,
        method="L-BFGS-B",
        options={"maxiter": MLE_MAX_ITER, "ftol": MLE_REL_TOL, "gtol": 1e-10},
    )
    converged = res.nit < MLE_MAX_ITER   # hitting the cap is flagged, not raised
    if res.fun <= f0:
        rho_hat = _rho_from_params(res.x)
        final_nll = float(res.fun)
    else:
        rho_hat = _rho_from_params(t0)   # optimizer failed to improve; keep init
        final_nll = f0
        converged = False
    # strip numerically negative eigenvalues from roundoff
    rho_hat = project_physical((rho_hat + rho_hat.conj().T) / 2)
    report = FitReport(
        log_likelihood=-final_nll,
        init_log_likelihood=-f0,
        iterations=int(res.nit),
        converged=converged,
        regularization=regularization,
    )
    return rho_hat, report


# ----------------------------------------------------------------------
# Parametric bootstrap error bars
# ----------------------------------------------------------------------

def _setting_probabilities(rho, i, j):
    p = []
    for sa in (+1, -1):
        for sp in (+1, -1):
            op = np.kron(_PAULI_EIG[sa][i], _PAULI_EIG[sp][j])
            p.append(max(np.trace(rho @ op).real, 0.0))
    p = np.array(p)
    return p / p.sum()


def _bootstrap_replica(args):
    rho_list, totals, seed, replica = args
    rho = np.array(rho_list, dtype=complex)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(replica,)))
    counts = {}
    for (i, j), n in sorted(totals.items()):
        p = _setting_probabilities(rho, i, j)
        counts[(i, j)] = rng.multinomial(int(round(n)), p).astype(float)
    ts = TomographySet(counts=counts, exact=False)
    rho_hat, _ = mle_reconstruct(ts)
    from .metrics import fidelity_to_target, negativity, purity

    return replica, {
        "fidelity": fidelity_to_target(rho_hat),
        "negativity": negativity(rho_hat),
        "purity": purity(rho_hat),
    }


def bootstrap_metrics(rho_hat, ts: TomographySet, n_replicas=250, seed=0, workers=1):
    """Parametric bootstrap: resample counts from the reconstructed state,
    re-fit each replica, report spread per metric. Replicas run on
    independent substreams; aggregation sorts before reducing, so the
    result does not depend on completion order."""
    totals = {k: v.sum() for k, v in ts.counts.items()}
    jobs = [(rho_hat.tolist(), totals, int(seed), r) for r in range(n_replicas)]
    results = [None] * n_replicas
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            for replica, vals in ex.map(_bootstrap_replica, jobs):
                results[replica] = vals
    else:
        for job in jobs:
            replica, vals = _bootstrap_replica(job)
            results[replica] = vals
    out = {}
    for name in ("fidelity", "negativity", "purity"):
        vals = np.sort(np.array([r[name] for r in results]))
        out[name] = {
            "mean": float(vals.mean()),
            "std": float(vals.std(ddof=1)) if n_replicas > 1 else 0.0,
            "ci95": [float(np.percentile(vals, 2.5)), float(np.percentile(vals, 97.5))],
        }
    return out


# ----------------------------------------------------------------------
# Reconstructed-state JSON
# ----------------------------------------------------------------------

def state_to_json(rho, fit_report=None):
    payload = {
        "real": np.real(rho).tolist(),
        "imag": np.imag(rho).tolist(),
        "basis": BASIS_CONVENTION,
    }
    if fit_report is not None:
        payload["fit_report"] = fit_report.to_dict()
    return payload


def state_from_json(payload):
    rho = np.array(payload["real"], dtype=float) + 1j * np.array(payload["imag"], dtype=float)
    return rho


def write_state_json(rho, path, fit_report=None):
    with open(path, "w") as fh:
        json.dump(state_to_json(rho, fit_report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_state_json(path):
    with open(path) as fh:
        return state_from_json(json.load(fh))
