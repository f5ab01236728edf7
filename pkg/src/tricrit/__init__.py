"""Monte Carlo phase-diagram toolkit for the random three-body Ising model.

Simulates E = -J * sum over triangles of tau * S1*S2*S3 on Union Jack and
triangular lattices with quenched +/-1 couplings, locates the
ferromagnetic-paramagnetic boundary from finite-size correlation-length
crossings, and intersects it with the Nishimori line to estimate the
multicritical error threshold.
"""

from .lattice import (
    Lattice,
    LatticeError,
    LatticeKind,
    build_lattice,
    build_triangular,
    build_union_jack,
    lattice_hash,
    lattice_to_json,
    verify_lattice,
)
from .disorder import (
    DisorderError,
    DisorderRealization,
    nishimori_probability,
    nishimori_temperature,
    sample_disorder,
)
from .mc import (
    ReplicaLadder,
    Schedule,
    SimulationResult,
    SpinConfiguration,
    attempt_exchanges,
    delta_energy,
    equilibration_check,
    metropolis_sweep,
    run_simulation,
    total_energy,
)
from .oracle import ExactResult, exact_disorder_average, exact_thermal

__version__ = "0.1.0"

__all__ = [
    "Lattice",
    "LatticeError",
    "LatticeKind",
    "build_lattice",
    "build_triangular",
    "build_union_jack",
    "lattice_hash",
    "lattice_to_json",
    "verify_lattice",
    "DisorderError",
    "DisorderRealization",
    "nishimori_probability",
    "nishimori_temperature",
    "sample_disorder",
    "ReplicaLadder",
    "Schedule",
    "SimulationResult",
    "SpinConfiguration",
    "attempt_exchanges",
    "delta_energy",
    "equilibration_check",
    "metropolis_sweep",
    "run_simulation",
    "total_energy",
    "ExactResult",
    "exact_disorder_average",
    "exact_thermal",
    "__version__",
]
