"""Scalar state analyses and sinusoidal fringe fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qmath
from .states import ideal_ket


def fidelity_to_target(rho, target=None):
    """Overlap <target|rho|target>; defaults to the ideal entangled ket."""
    if target is None:
        target = ideal_ket()
    return qmath.overlap(target, rho)


def negativity(rho):
    """Sum of |negative eigenvalues| of the partial transpose.

    Positive value certifies entanglement (PPT criterion); 0.5 for a
    maximally entangled two-qubit state.
    """
    eig = qmath.hermitian_eigenvalues(qmath.partial_transpose(rho, "photon"))
    return float(-eig[eig < 0].sum())


def correlation_matrix(rho):
    """3x3 Pauli correlation matrix T_ij = tr(rho sigma_i (x) sigma_j)."""
    r = qmath.check_density_matrix(rho)
    return np.array(
        [
            [np.trace(r @ np.kron(a, b)).real for b in qmath.PAULIS]
            for a in qmath.PAULIS
        ]
    )


def chsh_max(rho):
    """Maximal CHSH expectation over analyzer settings, with the optimum.

    Closed form from the correlation matrix: 2 sqrt(s1^2 + s2^2) with
    s1 >= s2 the two largest singular values of T. Returns
    (value, description dict). Always <= 2 sqrt(2); > 2 signals violation.
    """
    t = correlation_matrix(rho)
    u, s, vt = np.linalg.svd(t)
    value = 2.0 * math.hypot(s[0], s[1])
    detail = {
        "singular_values": [float(x) for x in s],
        "atom_axes": [u[:, 0].tolist(), u[:, 1].tolist()],
        "photon_axes": [vt[0].tolist(), vt[1].tolist()],
    }
    return value, detail


def chsh_max_search(rho, n_grid=24):
    """Numeric cross-check of chsh_max: coarse grid over the four Bloch
    axes followed by local refinement. Validation tool only."""
    from scipy.optimize import minimize

    t = correlation_matrix(rho)

    def axis(theta, phi):
        return np.array(
            [math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)]
        )

    def neg_s(x):
        a, ap = axis(x[0], x[1]), axis(x[2], x[3])
        b, bp = axis(x[4], x[5]), axis(x[6], x[7])
        return -(a @ t @ b + a @ t @ bp + ap @ t @ b - ap @ t @ bp)

    best = None
    thetas = np.linspace(0, math.pi, n_grid // 4)
    phis = np.linspace(0, 2 * math.pi, n_grid // 3, endpoint=False)
    rng = np.random.default_rng(0)
    starts = [rng.uniform(0, math.pi, 8) for _ in range(40)]
    starts += [np.array([th, ph, th + 0.5, ph, th, ph + 0.5, th + 0.5, ph + 0.5])
               for th in thetas[:3] for ph in phis[:3]]
    for x0 in starts:
        res = minimize(neg_s, x0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
        if best is None or res.fun < best:
            best = res.fun
    return -best


def purity(rho):
    """tr(rho^2), between 1/dim (maximally mixed) and 1 (pure)."""
    r = qmath.check_density_matrix(rho)
    return float(np.real(np.trace(r @ r)))


@dataclass
class FringeScan:
    """Conditional-probability fringe versus analyzer angle."""

    betas: np.ndarray          # radians
    probabilities: np.ndarray  # conditional P(F=1 | detector) per point
    counts: np.ndarray         # conditioned events per point
    detector: int = 1
    atom_label: str = ""

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=float)
        self.probabilities = np.asarray(self.probabilities, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)
        if not (len(self.betas) == len(self.probabilities) == len(self.counts)):
            raise ValueError("betas, probabilities, counts must have equal length")
        if len(self.betas) < 4:
            raise ValueError("need at least 4 points to fit 3 parameters")


@dataclass
class VisibilityFit:
    visibility: float     # peak-to-peak amplitude of the fitted curve
    offset: float
    phase: float          # radians
    rms_residual: float
    clipped: bool = False  # fitted curve exits [0, 1]

    def to_dict(self):
        return {
            "visibility": self.visibility,
            "offset": self.offset,
            "phase": self.phase,
            "rms_residual": self.rms_residual,
            "clipped": self.clipped,
        }


def fit_fringe(scan: FringeScan) -> VisibilityFit:
    """Least-squares fit of p(beta) = offset + (V/2) cos(2 beta - phase).

    The angular frequency is fixed at 2 (period pi); the fit is linear in
    (offset, c1, c2) with V = 2 sqrt(c1^2 + c2^2), so it is closed-form
    and deterministic.
    """
    b, p = scan.betas, scan.probabilities
    design = np.column_stack([np.ones_like(b), np.cos(2 * b), np.sin(2 * b)])
    if np.linalg.matrix_rank(design, tol=1e-9) < 3:
        raise ValueError("degenerate design: beta values do not resolve the fringe"
                         " (all equal mod pi/2)")
    coef, *_ = np.linalg.lstsq(design, p, rcond=None)
    c0, c1, c2 = coef
    visibility = 2.0 * math.hypot(c1, c2)
    phase = math.atan2(c2, c1)
    residuals = p - design @ coef
    rms = float(np.sqrt(np.mean(residuals**2)))
    clipped = bool(c0 + visibility / 2 > 1.0 + 1e-12 or c0 - visibility / 2 < -1e-12)
    return VisibilityFit(visibility=float(visibility), offset=float(c0),
                         phase=float(phase), rms_residual=rms, clipped=clipped)


def fringe_scans_from_dataset(dataset, atom_label=""):
    """Split a beta-scan dataset into the two detector-conditional fringes."""
    betas, p1, p2, n1, n2 = [], [], [], [], []
    for rec in dataset.records:
        betas.append(rec.setting.photon.beta)
        prob1, den1 = rec.conditional_f1(1)
        prob2, den2 = rec.conditional_f1(2)
        p1.append(prob1)
        p2.append(prob2)
        n1.append(den1)
        n2.append(den2)
    return (
        FringeScan(betas, p1, n1, detector=1, atom_label=atom_label),
        FringeScan(betas, p2, n2, detector=2, atom_label=atom_label),
    )
