"""Exact reference computations by full enumeration on tiny systems.

Sums over all 2^N spin states (and, for disorder averages, all 2^N_tri
sign configurations with exact binomial weights) give sampling-free
values of the thermal observables.  These are the ground truth used to
validate the stochastic engine; the formulas mirror the observables
module exactly, including the 1/L^2 susceptibility normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .disorder import DisorderRealization
from .lattice import Lattice

MAX_ENUM_SITES = 24
MAX_ENUM_TRIANGLES = 20
_CHUNK_BITS = 16


class EnumerationSizeError(ValueError):
    """System too large for exhaustive enumeration."""


@dataclass(frozen=True)
class ExactResult:
    """Boltzmann-exact thermal expectations for one disorder realization.

    ``m0_sq``/``mk_sq`` are the squared-magnetization structure factors
    <|sum_i S_i e^{i k x_i}|^2> at k = 0 and k = k_min; ``q0_sq``/``qk_sq``
    are the analogous overlap quantities for two independent replicas.
    ``log_z`` is computed in the log domain so low temperatures do not
    overflow.
    """

    T: float
    log_z: float
    energy: float
    energy_sq: float
    m0_sq: float
    mk_sq: float
    m0_4: float
    q0_sq: float
    qk_sq: float
    ground_energy: float
    ground_degeneracy: int
    disorder_hash: str

    def chi(self, L: int) -> tuple:
        """(chi(0), chi(k_min)) with the 1/L^2 normalization."""
        return self.m0_sq / L**2, self.mk_sq / L**2

    def sg_chi(self, L: int) -> tuple:
        return self.q0_sq / L**2, self.qk_sq / L**2


def _state_chunk(code0: int, n_states: int, n_sites: int) -> np.ndarray:
    """Spins (+/-1 int8) for states code0 .. code0+n_states-1; bit i = site i."""
    codes = np.arange(code0, code0 + n_states, dtype=np.uint64)
    bits = (codes[:, None] >> np.arange(n_sites, dtype=np.uint64)[None, :]) & np.uint64(1)
    return (2 * bits.astype(np.int8) - 1).astype(np.int8)


def _energies(spins: np.ndarray, lat: Lattice, tau: np.ndarray) -> np.ndarray:
    """E = -sum_tri tau * S1*S2*S3 per state; exact (integer-valued) in float64."""
    tri = lat.triangles
    prod = (
        spins[:, tri[:, 0]].astype(np.float64)
        * spins[:, tri[:, 1]]
        * spins[:, tri[:, 2]]
    )
    return -(prod @ tau.astype(np.float64))


def exact_thermal(lat: Lattice, dis: DisorderRealization, T: float) -> ExactResult:
    """Exhaustive Boltzmann sums over all 2^N states at temperature T.

    Two passes: the first finds the ground energy (for a stable weight
    shift and the degeneracy count), the second accumulates the weighted
    spin-correlation matrix from which all quadratic observables follow.
    """
    n = lat.n_sites
    if n > MAX_ENUM_SITES:
        raise EnumerationSizeError(
            f"exact enumeration supports at most {MAX_ENUM_SITES} sites; got {n}"
        )
    if T <= 0.0:
        raise ValueError(f"temperature must be positive; got T={T}")
    beta = 1.0 / T
    tau = dis.tau
    n_states = 1 << n
    chunk = min(n_states, 1 << _CHUNK_BITS)

    e_min = np.inf
    degeneracy = 0
    for c0 in range(0, n_states, chunk):
        e = _energies(_state_chunk(c0, min(chunk, n_states - c0), n), lat, tau)
        lo = e.min()
        if lo < e_min - 0.5:
            e_min, degeneracy = lo, int(np.count_nonzero(e == lo))
        elif abs(lo - e_min) < 0.5:
            degeneracy += int(np.count_nonzero(e == e_min))

    w_sum = 0.0
    we_sum = 0.0
    we2_sum = 0.0
    wm4_sum = 0.0
    corr = np.zeros((n, n), dtype=np.float64)
    for c0 in range(0, n_states, chunk):
        spins = _state_chunk(c0, min(chunk, n_states - c0), n)
        e = _energies(spins, lat, tau)
        w = np.exp(-beta * (e - e_min))
        w_sum += w.sum()
        we_sum += (w * e).sum()
        we2_sum += (w * e * e).sum()
        m0 = spins.astype(np.float64).sum(axis=1)
        wm4_sum += (w * m0**4).sum()
        sp = spins.astype(np.float64)
        corr += (sp * w[:, None]).T @ sp

    corr /= w_sum
    cos_x, sin_x = lat.fourier_phases()
    phase = cos_x + 1j * sin_x
    ones = np.ones(n)
    m0_sq = float(ones @ corr @ ones)
    mk_sq = float(np.real(np.conj(phase) @ corr @ phase))
    corr_sq = corr * corr
    q0_sq = float(ones @ corr_sq @ ones)
    qk_sq = float(np.real(np.conj(phase) @ corr_sq @ phase))

    return ExactResult(
        T=float(T),
        log_z=float(-beta * e_min + math.log(w_sum)),
        energy=float(we_sum / w_sum),
        energy_sq=float(we2_sum / w_sum),
        m0_sq=m0_sq,
        mk_sq=mk_sq,
        m0_4=float(wm4_sum / w_sum),
        q0_sq=q0_sq,
        qk_sq=qk_sq,
        ground_energy=float(e_min),
        ground_degeneracy=degeneracy,
        disorder_hash=dis.hash,
    )


_OBSERVABLES = ("energy", "energy_sq", "m0_sq", "mk_sq", "chi0", "chi_kmin")


def exact_disorder_average(lat: Lattice, p: float, T: float, observable: str) -> float:
    """Exact quenched average [<O>]_av over all 2^N_tri sign configurations.

    Each configuration is weighted by p^(n_minus) (1-p)^(N_tri - n_minus)
    exactly; the thermal average per configuration is a full Boltzmann
    sum.  Supported observables: energy, energy_sq, m0_sq, mk_sq, chi0,
    chi_kmin.
    """
    if observable not in _OBSERVABLES:
        raise ValueError(f"unknown observable {observable!r}; expected one of {_OBSERVABLES}")
    n_tri = lat.n_triangles
    if n_tri > MAX_ENUM_TRIANGLES:
        raise EnumerationSizeError(
            f"exact disorder average supports at most {MAX_ENUM_TRIANGLES} "
            f"triangles; got {n_tri}"
        )
    if not 0.0 <= p < 1.0:
        raise ValueError(f"disorder probability must satisfy 0 <= p < 1; got p={p}")
    if T <= 0.0:
        raise ValueError(f"temperature must be positive; got T={T}")

    n = lat.n_sites
    beta = 1.0 / T
    n_states = 1 << n
    spins = _state_chunk(0, n_states, n).astype(np.float64)
    tri = lat.triangles
    # (n_states, n_tri) triangle products, fixed across disorder configs
    prods = spins[:, tri[:, 0]] * spins[:, tri[:, 1]] * spins[:, tri[:, 2]]

    cos_x, sin_x = lat.fourier_phases()
    m0 = spins.sum(axis=1)
    mk_re = spins @ cos_x
    mk_im = spins @ sin_x
    if observable in ("m0_sq", "chi0"):
        per_state = m0 * m0
    elif observable in ("mk_sq", "chi_kmin"):
        per_state = mk_re * mk_re + mk_im * mk_im
    else:
        per_state = None

    n_configs = 1 << n_tri
    chunk = max(1, min(n_configs, (1 << 22) // n_states))
    total = 0.0
    weight_total = 0.0
    for c0 in range(0, n_configs, chunk):
        m = min(chunk, n_configs - c0)
        codes = np.arange(c0, c0 + m, dtype=np.uint64)
        bits = (codes[:, None] >> np.arange(n_tri, dtype=np.uint64)[None, :]) & np.uint64(1)
        taus = 1.0 - 2.0 * bits.astype(np.float64)  # bit 1 -> tau = -1
        n_neg = bits.sum(axis=1).astype(np.float64)
        weights = p**n_neg * (1.0 - p) ** (n_tri - n_neg)
        e = -(taus @ prods.T)  # (m, n_states)
        e_min = e.min(axis=1, keepdims=True)
        w = np.exp(-beta * (e - e_min))
        z = w.sum(axis=1)
        if observable == "energy":
            vals = (w * e).sum(axis=1) / z
        elif observable == "energy_sq":
            vals = (w * e * e).sum(axis=1) / z
        else:
            vals = (w * per_state[None, :]).sum(axis=1) / z
        total += float(weights @ vals)
        weight_total += float(weights.sum())
    # weights sum to 1 exactly up to roundoff; normalize it away
    result = total / weight_total
    if observable in ("chi0", "chi_kmin"):
        result /= lat.L**2
    return result
