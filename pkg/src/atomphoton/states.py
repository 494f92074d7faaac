"""Entangled-state preparation and the noise channels degrading it.

The spontaneous decay of the F'=0 level feeds three Zeeman channels;
only the two circularly polarized ones are collected along the
quantization axis, so the emitted photon and the atomic magnetic moment
end up in the maximally entangled superposition built by
:func:`ideal_state`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qmath

SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class DecayChannel:
    """One spontaneous-decay branch of the F'=0 -> F=1 transition."""

    m_f: int                 # final Zeeman sublevel, -1 / 0 / +1
    polarization: str        # "sigma+", "pi" or "sigma-"
    amplitude: complex       # Clebsch-Gordan weight
    collected: bool          # photon reaches the analyzer

    def __post_init__(self):
        if self.m_f not in (-1, 0, 1):
            raise ValueError(f"m_f must be -1, 0 or +1, got {self.m_f}")
        if self.polarization not in ("sigma+", "pi", "sigma-"):
            raise ValueError(f"unknown polarization {self.polarization!r}")
        if (self.polarization == "pi") == self.collected:
            raise ValueError("collected must be False exactly for pi light")


def standard_decay_channels():
    """The three decay branches with equal-weight amplitudes.

    Relative phase between the collected branches is +1; with these
    amplitudes :func:`state_from_channels` reproduces the ideal state.
    """
    return [
        DecayChannel(m_f=-1, polarization="sigma+", amplitude=1 / SQRT3, collected=True),
        DecayChannel(m_f=0, polarization="pi", amplitude=1 / SQRT3, collected=False),
        DecayChannel(m_f=+1, polarization="sigma-", amplitude=1 / SQRT3, collected=True),
    ]


_ATOM_KETS = {-1: qmath.ATOM_MINUS, +1: qmath.ATOM_PLUS}
_PHOTON_KETS = {"sigma+": qmath.PHOTON_SIGMA_PLUS, "sigma-": qmath.PHOTON_SIGMA_MINUS}


def ideal_ket():
    """(|-1>|s+> + |+1>|s->)/sqrt(2) in the fixed basis: (1,0,0,1)/sqrt(2)."""
    return np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)


def ideal_state():
    """Density matrix of the ideal entangled atom-photon state."""
    return qmath.projector(ideal_ket())


def state_from_channels(channels):
    """Coherent superposition over the collected decay branches.

    The joint ket sums amplitude * |m_f> (x) |polarization> over channels
    with collected=True and is then renormalized. All channels
    uncollected means no photon ever reaches the analyzer.
    """
    total = sum(abs(c.amplitude) ** 2 for c in channels)
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"squared channel amplitudes sum to {total:.12g}, expected 1")
    psi = np.zeros(4, dtype=complex)
    any_collected = False
    for c in channels:
        if not c.collected:
            continue
        any_collected = True
        psi += c.amplitude * np.kron(_ATOM_KETS[c.m_f], _PHOTON_KETS[c.polarization])
    if not any_collected:
        raise ValueError("no collected channel: no photon reaches the analyzer")
    psi /= np.linalg.norm(psi)
    return qmath.projector(psi)


@dataclass(frozen=True)
class NoiseModel:
    """Channels degrading the ideal state, plus atomic readout confusion.

    depolarizing: white-noise admixture p, rho -> (1-p) rho + p I/4
    dephasing: loss of atomic sigma_x/sigma_y coherence q,
        rho -> (1-q) rho + q (sz (x) I) rho (sz (x) I)
    eps01 / eps10: probability that a true atomic outcome
        (0 = transferred to F=2, 1 = remained in F=1) is reported flipped.
        Applied to outcome probabilities in the measurement layer, never
        to the state.
    """

    depolarizing: float = 0.0
    dephasing: float = 0.0
    eps01: float = 0.0
    eps10: float = 0.0

    def __post_init__(self):
        for name in ("depolarizing", "dephasing", "eps01", "eps10"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    def to_dict(self):
        return {
            "depolarizing": self.depolarizing,
            "dephasing": self.dephasing,
            "eps01": self.eps01,
            "eps10": self.eps10,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            depolarizing=float(d.get("depolarizing", 0.0)),
            dephasing=float(d.get("dephasing", 0.0)),
            eps01=float(d.get("eps01", 0.0)),
            eps10=float(d.get("eps10", 0.0)),
        )


_SZ_I = np.kron(qmath.SIGMA_Z, np.eye(2, dtype=complex))


def apply_noise(rho, noise: NoiseModel):
    """Depolarize, then dephase the atomic qubit. Readout confusion is not
    applied here; it acts on measurement outcomes."""
    out = qmath.check_density_matrix(rho)
    p, q = noise.depolarizing, noise.dephasing
    out = (1 - p) * out + p * np.eye(4, dtype=complex) / 4
    out = (1 - q) * out + q * (_SZ_I @ out @ _SZ_I)
    return out


def werner(v):
    """V |psi><psi| + (1-V) I/4 for the ideal entangled ket psi."""
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {v}")
    return v * ideal_state() + (1 - v) * np.eye(4, dtype=complex) / 4
