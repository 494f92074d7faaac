"""Projective measurement simulation with finite statistics.

The photon analyzer projects onto (|s+> +/- e^{2i beta}|s->)/sqrt(2)
(half-wave plate rotated by beta), or onto the circular basis when
`circular` is set (quarter-wave-plate configuration). APD1 always
carries the "+" projector; in circular mode it detects |sigma+>.

The atomic analysis transfers |psi> = sin(theta)|-1> + e^{i phi} cos(theta)|+1>
to F=2 ("transferred"); the orthogonal state remains in F=1 ("remained").
Implemented as an ideal projector pair; transfer imperfections are folded
into the readout-confusion probabilities of the noise model.

Outcome order in all four-vectors of counts/probabilities:
    [(F2, APD1), (F2, APD2), (F1, APD1), (F1, APD2)]

With the ideal state and atomic sigma_x analysis the exact conditional is
P(F=1 | APD1, beta) = (1 - cos 2 beta)/2, zero at beta = 0.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import qmath
from .states import NoiseModel, apply_noise

COUNT_COLUMNS = ("n_f2_apd1", "n_f2_apd2", "n_f1_apd1", "n_f1_apd2")


@dataclass(frozen=True)
class PhotonSetting:
    """Analyzer configuration: linear rotation angle beta, or circular basis."""

    beta: float = 0.0
    circular: bool = False


@dataclass(frozen=True)
class AtomSetting:
    """STIRAP polarization angles selecting the transferred superposition."""

    theta: float
    phi: float = 0.0


@dataclass(frozen=True)
class MeasurementSetting:
    atom: AtomSetting
    photon: PhotonSetting
    label: str | None = None


# Canonical Pauli analysis settings.
ATOM_SX = AtomSetting(theta=math.pi / 4, phi=0.0)
ATOM_SY = AtomSetting(theta=math.pi / 4, phi=math.pi / 2)
ATOM_SZ = AtomSetting(theta=math.pi / 2, phi=0.0)   # transfers |-1>, the sigma_z=+1 state
PHOTON_SX = PhotonSetting(beta=0.0)
PHOTON_SY = PhotonSetting(beta=math.pi / 4)
PHOTON_SZ = PhotonSetting(circular=True)


def atom_analysis_ket(s: AtomSetting):
    """The superposition transferred to F=2 by the analysis pulse."""
    return np.array(
        [math.sin(s.theta), np.exp(1j * s.phi) * math.cos(s.theta)], dtype=complex
    )


def atom_projectors(s: AtomSetting):
    """(transferred, remained) projector pair; orthogonal and complete."""
    psi = atom_analysis_ket(s)
    p_t = np.outer(psi, psi.conj())
    return p_t, np.eye(2, dtype=complex) - p_t


def photon_projectors(s: PhotonSetting):
    """(APD1, APD2) projector pair; APD1 carries the '+' superposition."""
    if s.circular:
        plus = qmath.PHOTON_SIGMA_PLUS
    else:
        plus = np.array([1.0, np.exp(2j * s.beta)], dtype=complex) / math.sqrt(2)
    p1 = np.outer(plus, plus.conj())
    return p1, np.eye(2, dtype=complex) - p1


def _joint_probabilities_unchecked(rho, setting: MeasurementSetting):
    at, ar = atom_projectors(setting.atom)
    d1, d2 = photon_projectors(setting.photon)
    p = np.array(
        [
            np.trace(rho @ np.kron(a, d)).real
            for a in (at, ar)
            for d in (d1, d2)
        ]
    )
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def joint_probabilities(rho, setting: MeasurementSetting):
    """Exact outcome probabilities tr(rho Pi_a (x) Pi_d), in outcome order."""
    return _joint_probabilities_unchecked(qmath.check_density_matrix(rho), setting)


def apply_readout_confusion(p, eps01, eps10):
    """Flip atomic outcome labels with asymmetric probabilities.

    eps01 = P(reported F=1 | true transferred), eps10 = the reverse.
    """
    for name, eps in (("eps01", eps01), ("eps10", eps10)):
        if not 0.0 <= eps <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {eps}")
    p = np.asarray(p, dtype=float)
    if p.shape != (4,) or np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("input must be a probability 4-vector")
    out = np.empty(4)
    for d in range(2):
        f2, f1 = p[d], p[2 + d]
        out[d] = (1 - eps01) * f2 + eps10 * f1
        out[2 + d] = eps01 * f2 + (1 - eps10) * f1
    return out


@dataclass
class CountRecord:
    setting: MeasurementSetting
    counts: np.ndarray   # four cells in outcome order; floats in exact mode

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        if self.counts.shape != (4,) or np.any(self.counts < 0):
            raise ValueError("counts must be four non-negative cells")
        if self.counts.sum() < 1.0 - 1e-9:
            raise ValueError("total count must be at least 1")

    @property
    def total(self):
        return float(np.sum(self.counts))

    def conditional_f1(self, detector):
        """P(F=1 | APDdetector) estimated from this record's counts."""
        if detector not in (1, 2):
            raise ValueError("detector must be 1 or 2")
        d = detector - 1
        denom = self.counts[d] + self.counts[2 + d]
        if denom <= 0:
            raise ValueError(f"no events on APD{detector} in this record")
        return float(self.counts[2 + d] / denom), float(denom)


@dataclass
class Dataset:
    records: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.records:
            raise ValueError("a dataset needs at least one record")


def record_rng(master_seed, index):
    """Per-record generator: an independent substream keyed by (seed, index).

    Records can therefore be produced in any order, or in parallel, with
    identical results.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return np.random.default_rng(ss)


def sample_counts(p, n, seed=None, rng=None, exact=False):
    """Multinomial draw of n trials from probability vector p.

    With `exact` the expected counts n*p are returned instead (the
    infinite-statistics mode used to separate systematic from statistical
    checks). Deterministic for fixed (p, n, seed).
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (4,) or np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("p must be a probability 4-vector")
    if n < 1:
        raise ValueError("n must be >= 1")
    if exact:
        return n * p
    if rng is None:
        rng = np.random.default_rng(seed)
    q = np.clip(p, 0.0, None)
    return rng.multinomial(int(n), q / q.sum()).astype(float)


def simulate_setting(rho, setting, n, noise=None, rng=None, exact=False):
    """One CountRecord for a noisy state measured at one setting."""
    noise = noise or NoiseModel()
    noisy = apply_noise(rho, noise)
    p = joint_probabilities(noisy, setting)
    p = apply_readout_confusion(p, noise.eps01, noise.eps10)
    counts = sample_counts(p, n, rng=rng, exact=exact)
    return CountRecord(setting=setting, counts=counts)


def simulate_settings(rho, settings, n_per_setting, noise=None, seed=0, exact=False):
    """Dataset over a list of settings, one record each, substream-seeded."""
    noise = noise or NoiseModel()
    records = [
        simulate_setting(rho, s, n_per_setting, noise=noise,
                         rng=record_rng(seed, i), exact=exact)
        for i, s in enumerate(settings)
    ]
    return Dataset(
        records=records,
        metadata={
            "seed": int(seed),
            "noise": noise.to_dict(),
            "mode": "simulated",
            "exact": bool(exact),
            "n_per_setting": n_per_setting,
        },
    )


def simulate_scan(rho, atom, betas, n_per_point, noise=None, seed=0, exact=False):
    """Correlation-fringe scan: one record per analyzer angle beta."""
    betas = list(betas)
    if not betas:
        raise ValueError("betas must be non-empty")
    settings = [
        MeasurementSetting(atom=atom, photon=PhotonSetting(beta=float(b)))
        for b in betas
    ]
    ds = simulate_settings(rho, settings, n_per_point, noise=noise, seed=seed, exact=exact)
    ds.metadata["betas"] = [float(b) for b in betas]
    return ds


# ----------------------------------------------------------------------
# Dataset CSV + JSON-sidecar serialization. One row per record:
#   theta, phi, beta, n_f2_apd1, n_f2_apd2, n_f1_apd1, n_f1_apd2, photon_basis
# Angles in radians with 17 significant digits (lossless float round
# trip). photon_basis is "linear" or "circular"; readers tolerate its
# absence (linear assumed).
# ----------------------------------------------------------------------

def sidecar_path(csv_path):
    return str(csv_path) + ".meta.json" if not str(csv_path).endswith(".csv") \
        else str(csv_path)[:-4] + ".meta.json"


def write_counts_csv(dataset: Dataset, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("theta", "phi", "beta") + COUNT_COLUMNS + ("photon_basis",))
        for rec in dataset.records:
            s = rec.setting
            row = [f"{s.atom.theta:.17g}", f"{s.atom.phi:.17g}", f"{s.photon.beta:.17g}"]
            row += [f"{c:.17g}" for c in rec.counts]
            row.append("circular" if s.photon.circular else "linear")
            w.writerow(row)
    with open(sidecar_path(path), "w") as fh:
        json.dump(dataset.metadata, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_counts_csv(path):
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            setting = MeasurementSetting(
                atom=AtomSetting(theta=float(row["theta"]), phi=float(row["phi"])),
                photon=PhotonSetting(
                    beta=float(row["beta"]),
                    circular=row.get("photon_basis", "linear") == "circular",
                ),
            )
            counts = np.array([float(row[c]) for c in COUNT_COLUMNS])
            try:
                records.append(CountRecord(setting=setting, counts=counts))
            except ValueError as exc:
                raise ValueError(f"{path}: {exc}") from exc
    metadata = {"mode": "ingested"}
    try:
        with open(sidecar_path(path)) as fh:
            metadata = json.load(fh)
    except FileNotFoundError:
        pass
    return Dataset(records=records, metadata=metadata)
