"""Feasibility arithmetic for an event-ready loophole-free Bell test.

Two distant atoms are each entangled with a photon; a Bell-state
measurement on the photons swaps the entanglement onto the atoms. The
routines here budget the resulting visibility, the sample size for a
significant CHSH violation, pair rates, total measurement time, the
readout-collapse probability and the locality separation. All quantities
are SI (seconds, meters, s^-1).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

SPEED_OF_LIGHT = 299_792_458.0   # m/s
CHSH_QUANTUM_MAX = 2.0 * math.sqrt(2.0)
CHSH_THRESHOLD_VISIBILITY = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class ExperimentPlan:
    """Feasibility inputs. Defaults follow the demonstrated source."""

    v_atph: float = 0.86             # atom-photon fringe visibility
    bsm_fidelity: float = 1.0        # Bell-state measurement fidelity factor
    eta_ph: float = 5e-4             # photon detection efficiency per emission
    transmission: float = 0.9        # two-fiber combined transmission T^2
    rep_rate: float = 5e5            # excitation repetition rate, s^-1
    target_sigmas: float = 3.0
    t_stirap: float = 0.2e-6         # atomic analysis pulse duration, s
    n_lifetimes: float = 10.0        # scattering lifetimes until collapse
    lifetime_tau: float = 26e-9      # excited-state lifetime, s
    measurement_window: float = 0.5e-6  # minimum budgeted measurement time, s
    p_bsm: float = 0.5               # linear-optics BSM success probability
    duty: float = 1.0                # duty cycle applied to the pair rate

    def __post_init__(self):
        for name in ("v_atph", "bsm_fidelity", "eta_ph", "transmission", "p_bsm", "duty"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("rep_rate", "lifetime_tau"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("t_stirap", "n_lifetimes", "measurement_window", "target_sigmas"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        fields = {k: float(v) for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**fields)


@dataclass(frozen=True)
class PlanReport:
    v_atat: float
    chsh_s: float
    pairs_needed: int
    pair_rate: float          # s^-1
    duration: float           # s
    collapse_probability: float
    min_separation: float     # m

    def to_dict(self):
        return asdict(self)


def swapped_visibility(v1, v2, kappa_bsm=1.0):
    """Atom-atom visibility after entanglement swapping: v1*v2*kappa,
    clipped to [0, 1]. The ideal law is kappa = 1."""
    for name, v in (("v1", v1), ("v2", v2), ("kappa_bsm", kappa_bsm)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    return min(max(v1 * v2 * kappa_bsm, 0.0), 1.0)


def _chsh_sigma(v, n_pairs):
    # pairs split equally over the 4 CHSH settings; each correlation
    # estimator E = v/sqrt(2) carries variance (1 - E^2)/(n/4)
    e = v / math.sqrt(2.0)
    return math.sqrt(4.0 * (1.0 - e * e) / (n_pairs / 4.0))


def violation_sigmas(v, n_pairs):
    """Standard deviations by which S = 2 sqrt(2) v exceeds the classical
    bound 2 with n_pairs events."""
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {v}")
    if n_pairs < 4:
        raise ValueError("need at least 4 pairs (one per setting)")
    s = CHSH_QUANTUM_MAX * v
    return (s - 2.0) / _chsh_sigma(v, n_pairs)


def pairs_for_sigmas(v, k):
    """Smallest pair count giving a k-sigma CHSH violation at visibility v."""
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {v}")
    if v <= CHSH_THRESHOLD_VISIBILITY:
        raise ValueError(
            f"no violation at this visibility ({v:.4g} <= 1/sqrt(2))"
        )
    if k <= 0:
        raise ValueError("sigma target must be positive")
    s = CHSH_QUANTUM_MAX * v
    e = v / math.sqrt(2.0)
    n = (4.0 * k * math.sqrt(1.0 - e * e) / (s - 2.0)) ** 2
    return max(4, math.ceil(n))


def single_pair_rate(rep_rate, eta_ph):
    """Rate of observed atom-photon coincidences for one source."""
    return rep_rate * eta_ph


def pair_rate(plan: ExperimentPlan, p_bsm=None):
    """Entangled atom-atom pair rate: rep * eta^2 * T^2 * p_bsm."""
    p = plan.p_bsm if p_bsm is None else p_bsm
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p_bsm must lie in [0, 1], got {p}")
    return plan.rep_rate * plan.eta_ph**2 * plan.transmission * p


def measurement_duration(n_pairs, rate, duty=1.0):
    """Wall-clock time to accumulate n_pairs at the given rate."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    if not 0.0 < duty <= 1.0:
        raise ValueError("duty must lie in (0, 1]")
    return n_pairs / (rate * duty)


def collapse_probability(n_lifetimes):
    """Probability the readout superposition has collapsed after
    n excited-state lifetimes of scattering: 1 - exp(-n)."""
    if n_lifetimes < 0:
        raise ValueError("n_lifetimes must be non-negative")
    return 1.0 - math.exp(-n_lifetimes)


def min_separation(t_meas):
    """Space-like separation needed for a measurement lasting t_meas."""
    if t_meas < 0:
        raise ValueError("measurement time must be non-negative")
    return SPEED_OF_LIGHT * t_meas


def build_plan(plan: ExperimentPlan) -> PlanReport:
    """Compose the full feasibility report from a plan's inputs.

    The sequence duration is the analysis pulse plus the scattering
    collapse time, never budgeted below the plan's measurement window.
    """
    v_atat = swapped_visibility(plan.v_atph, plan.v_atph, plan.bsm_fidelity)
    pairs = pairs_for_sigmas(v_atat, plan.target_sigmas)
    rate = pair_rate(plan)
    duration = measurement_duration(pairs, rate, plan.duty)
    t_meas = max(plan.t_stirap + plan.n_lifetimes * plan.lifetime_tau,
                 plan.measurement_window)
    return PlanReport(
        v_atat=v_atat,
        chsh_s=CHSH_QUANTUM_MAX * v_atat,
        pairs_needed=pairs,
        pair_rate=rate,
        duration=duration,
        collapse_probability=collapse_probability(plan.n_lifetimes),
        min_separation=min_separation(t_meas),
    )


def write_plan_json(plan: ExperimentPlan, report: PlanReport, path):
    with open(path, "w") as fh:
        json.dump({"plan": plan.to_dict(), "report": report.to_dict()},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_plan_json(path):
    with open(path) as fh:
        payload = json.load(fh)
    return ExperimentPlan.from_dict(payload["plan"]), payload["report"]
