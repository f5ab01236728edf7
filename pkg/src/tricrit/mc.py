"""Parallel-tempering single-spin-flip engine for the three-body Hamiltonian.

The energy is E = -sum_tri tau * S1*S2*S3 (J = 1), integer-valued, and is
tracked incrementally; flipping site s costs dE = 2 * S_s * h_s with
h_s = sum over incident triangles of tau * (product of the other two
spins).  One sweep proposes one flip per site in sequential site order;
acceptance is a uint64 compare against a precomputed per-temperature
threshold table (dE takes few discrete values).  After each sweep a
replica-exchange phase alternates over even/odd adjacent temperature
pairs.

The production update rule is heat-bath, accept with 1/(1 + e^(beta dE)),
not Metropolis.  With a deterministic site scan, Metropolis acceptance
min(1, e^(-beta dE)) makes every downhill move certain, and for this
model the composed sweep map is then reducible: on the 2x2 Union Jack
system the one-sweep transition matrix has a six-fold degenerate unit
eigenvalue, so the chain converges to a mixture that is measurably not
Boltzmann (exact enumeration shows ~25% occupation errors).  Heat-bath
acceptance is strictly inside (0, 1) for every move, which makes the
sequential-scan chain irreducible and aperiodic, with the Boltzmann
distribution as its unique fixed point.  Metropolis remains available
for experiments via ``update_rule="metropolis"``.

Two independent replica sets run side by side so ferromagnetic and
overlap (spin-glass) observables come out of a single pass.  All
randomness is drawn from counter-based streams (one per replica plus one
exchange stream per set), which makes runs bit-reproducible and resumes
exact.  Configurations, not temperatures, are exchanged: stream identity
follows the configuration storage column, and a slot table maps each
temperature to its current column.

Equilibration is monitored by logarithmic binning: with measurements
indexed 1..M (M a power of two), the first measurement is burn-in and
bin k averages measurements (2^k, 2^(k+1)], so the last bin is the
second half of the run and is used for production averages.
"""

from __future__ import annotations

import hashlib
import math
import pickle
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .disorder import DisorderRealization
from .lattice import Lattice, lattice_hash
from .rng import GAMMA, acceptance_threshold, derive_seed, mix64, uniform_block

OBS_E_A, OBS_E_B = 0, 1
OBS_M2_A, OBS_M2_B = 2, 3
OBS_MK2_A, OBS_MK2_B = 4, 5
OBS_M4_A, OBS_M4_B = 6, 7
OBS_Q2, OBS_QK2 = 8, 9
OBS_M_A, OBS_M_B = 10, 11
NOBS = 12
OBS_NAMES = (
    "energy_a", "energy_b", "m0_sq_a", "m0_sq_b", "mk_sq_a", "mk_sq_b",
    "m0_4_a", "m0_4_b", "q0_sq", "qk_sq", "m0_a", "m0_b",
)
# observables whose log bins gate equilibration
EQUILIBRATION_OBS = (
    OBS_E_A, OBS_E_B, OBS_M2_A, OBS_M2_B, OBS_MK2_A, OBS_MK2_B, OBS_Q2, OBS_QK2,
)

CHECKPOINT_VERSION = 1


class ScheduleError(ValueError):
    """Invalid simulation schedule."""


class CheckpointMismatchError(RuntimeError):
    """Checkpoint does not belong to this (lattice, disorder, schedule)."""


class InsufficientBinsError(ValueError):
    """Too few logarithmic bins for an equilibration verdict."""


# ---------------------------------------------------------------------------
# elementary operations


def flatten_tau(lat: Lattice, dis: DisorderRealization) -> np.ndarray:
    """Coupling signs aligned with the per-site incidence slots."""
    if dis.n_triangles != lat.n_triangles:
        raise ValueError(
            f"disorder has {dis.n_triangles} signs but lattice has "
            f"{lat.n_triangles} triangles"
        )
    return dis.tau[lat.inc_tri]


def total_energy(spins: np.ndarray, lat: Lattice, dis: DisorderRealization) -> int:
    """Energy recomputed from scratch; exact integer in units of J."""
    tri = lat.triangles
    prod = (
        spins[tri[:, 0]].astype(np.int64) * spins[tri[:, 1]] * spins[tri[:, 2]]
    )
    return int(-(prod * dis.tau).sum())


@dataclass
class SpinConfiguration:
    """Spin state of one replica with its incrementally tracked energy."""

    spins: np.ndarray  # (N,) int8, entries +/-1
    energy: int

    @classmethod
    def random(cls, lat: Lattice, dis: DisorderRealization, seed: int, counter: int = 0):
        """Hot start: spins from draws counter+1 .. counter+N of stream ``seed``."""
        u = uniform_block(seed, counter, lat.n_sites)
        spins = np.where(u < 0.5, np.int8(1), np.int8(-1))
        return cls(spins=spins, energy=total_energy(spins, lat, dis))

    @classmethod
    def uniform(cls, lat: Lattice, dis: DisorderRealization, value: int = 1):
        spins = np.full(lat.n_sites, value, dtype=np.int8)
        return cls(spins=spins, energy=total_energy(spins, lat, dis))


def delta_energy(
    cfg: SpinConfiguration, lat: Lattice, dis: DisorderRealization, site: int
) -> int:
    """E(flipped) - E(current) for flipping one site; touches only its
    incident triangles."""
    lo, hi = lat.inc_ptr[site], lat.inc_ptr[site + 1]
    h = int(
        (
            dis.tau[lat.inc_tri[lo:hi]].astype(np.int64)
            * cfg.spins[lat.inc_nbr1[lo:hi]]
            * cfg.spins[lat.inc_nbr2[lo:hi]]
        ).sum()
    )
    return 2 * int(cfg.spins[site]) * h


HEAT_BATH = "heat-bath"
METROPOLIS = "metropolis"
UPDATE_RULES = (HEAT_BATH, METROPOLIS)


def threshold_table(beta: float, max_coord: int, rule: str = HEAT_BATH) -> np.ndarray:
    """uint64 acceptance thresholds indexed by h*S + max_coord.

    The flip costs dE = 2*sl; the entry for local sum ``sl`` encodes the
    acceptance probability of the chosen rule (heat-bath
    1/(1 + e^(2*beta*sl)) or Metropolis min(1, e^(-2*beta*sl))) so that a
    raw uint64 draw below it accepts the flip.
    """
    if rule not in UPDATE_RULES:
        raise ValueError(f"unknown update rule {rule!r}; expected one of {UPDATE_RULES}")
    table = np.empty(2 * max_coord + 1, dtype=np.uint64)
    for sl in range(-max_coord, max_coord + 1):
        x = 2.0 * beta * sl
        if rule == METROPOLIS:
            prob = min(1.0, math.exp(-x)) if x > 0 else 1.0
        else:
            # numerically stable logistic 1/(1 + e^x)
            prob = 1.0 / (1.0 + math.exp(x)) if x < 0 else math.exp(-x) / (1.0 + math.exp(-x))
        table[sl + max_coord] = acceptance_threshold(prob)
    return table


@njit(cache=True)
def _sweep_one(spins, tau_flat, inc_ptr, nb1, nb2, thr, seed, counter, max_coord):
    """One Metropolis sweep over a single replica; returns (accepted, dE_total, counter)."""
    n = spins.shape[0]
    accepted = 0
    de_total = 0
    for s in range(n):
        h = 0
        for j in range(inc_ptr[s], inc_ptr[s + 1]):
            h += tau_flat[j] * spins[nb1[j]] * spins[nb2[j]]
        sl = np.int64(spins[s]) * np.int64(h)
        counter += np.uint64(1)
        r = mix64(seed + counter * GAMMA)
        if r < thr[sl + max_coord]:
            spins[s] = -spins[s]
            accepted += 1
            de_total += 2 * sl
    return accepted, de_total, counter


def metropolis_sweep(
    cfg: SpinConfiguration,
    lat: Lattice,
    dis: DisorderRealization,
    beta: float,
    stream,
    tau_flat: Optional[np.ndarray] = None,
    rule: str = METROPOLIS,
) -> int:
    """One sweep (N proposals, sequential site order); returns accepted count.

    Acceptance is min(1, e^(-beta dE)) by default; pass
    ``rule="heat-bath"`` for the engine's production rule (see module
    docstring for why composing Metropolis sweeps is not ergodic here).
    Consumes exactly N draws from ``stream`` whether or not flips accept,
    so replicas stay on their own reproducible substreams.
    """
    if beta < 0:
        raise ValueError(f"beta must be non-negative; got {beta}")
    if tau_flat is None:
        tau_flat = flatten_tau(lat, dis)
    thr = threshold_table(beta, lat.max_coordination, rule)
    accepted, de_total, counter = _sweep_one(
        cfg.spins,
        tau_flat,
        lat.inc_ptr,
        lat.inc_nbr1,
        lat.inc_nbr2,
        thr,
        np.uint64(stream.seed),
        np.uint64(stream.counter),
        lat.max_coordination,
    )
    stream.counter = int(counter)
    cfg.energy += int(de_total)
    return int(accepted)


# ---------------------------------------------------------------------------
# replica ladder


@dataclass
class ReplicaLadder:
    """Full parallel-tempering state: two replica sets over one ladder.

    Storage column c (0 <= c < 2*n_T) is a fixed replica identity owning
    its spin column, incremental energy, and RNG stream; ``col_at[g, t]``
    names the column currently simulated at temperature slot t of set g.
    The two sets never exchange configurations with each other.
    """

    temperatures: np.ndarray  # (n_T,) strictly increasing
    spins: np.ndarray  # (N, 2*n_T) int8
    energy: np.ndarray  # (2*n_T,) int64
    col_at: np.ndarray  # (2, n_T) int32
    col_seeds: np.ndarray  # (2*n_T,) uint64
    col_counters: np.ndarray  # (2*n_T,) uint64
    ex_seeds: np.ndarray  # (2,) uint64
    ex_counters: np.ndarray  # (2,) uint64
    exch_attempts: np.ndarray  # (2, n_T-1) int64
    exch_accepts: np.ndarray  # (2, n_T-1) int64
    exchange_calls: int = 0

    @property
    def n_temperatures(self) -> int:
        return self.temperatures.shape[0]

    @property
    def betas(self) -> np.ndarray:
        return 1.0 / self.temperatures

    @classmethod
    def create(cls, lat: Lattice, dis: DisorderRealization, temperatures, seed: int):
        """Hot-start both replica sets; all streams derive from ``seed``."""
        temperatures = np.asarray(temperatures, dtype=np.float64)
        if temperatures.ndim != 1 or temperatures.size < 1:
            raise ScheduleError("temperature ladder must be a non-empty 1-D array")
        if np.any(np.diff(temperatures) <= 0):
            raise ScheduleError("temperatures must be strictly increasing")
        n_t = temperatures.size
        ncol = 2 * n_t
        n = lat.n_sites
        col_seeds = np.array(
            [derive_seed(seed, "replica", c) for c in range(ncol)], dtype=np.uint64
        )
        ex_seeds = np.array(
            [derive_seed(seed, "exchange", g) for g in range(2)], dtype=np.uint64
        )
        spins = np.empty((n, ncol), dtype=np.int8)
        energy = np.empty(ncol, dtype=np.int64)
        for c in range(ncol):
            cfg = SpinConfiguration.random(lat, dis, int(col_seeds[c]))
            spins[:, c] = cfg.spins
            energy[c] = cfg.energy
        col_at = np.stack(
            [np.arange(n_t, dtype=np.int32), np.arange(n_t, 2 * n_t, dtype=np.int32)]
        )
        return cls(
            temperatures=temperatures,
            spins=spins,
            energy=energy,
            col_at=col_at,
            col_seeds=col_seeds,
            col_counters=np.full(ncol, n, dtype=np.uint64),  # hot start used N draws
            ex_seeds=ex_seeds,
            ex_counters=np.zeros(2, dtype=np.uint64),
            exch_attempts=np.zeros((2, n_t - 1) if n_t > 1 else (2, 0), dtype=np.int64),
            exch_accepts=np.zeros((2, n_t - 1) if n_t > 1 else (2, 0), dtype=np.int64),
        )

    def configuration(self, set_index: int, slot: int) -> SpinConfiguration:
        c = int(self.col_at[set_index, slot])
        return SpinConfiguration(spins=self.spins[:, c].copy(), energy=int(self.energy[c]))


@njit(cache=True)
def _exchange_set(col_at_g, energy, betas, ex_seed, ex_counter, attempts, accepts, phase):
    """Even/odd adjacent-pair exchange pass for one replica set."""
    n_t = col_at_g.shape[0]
    for t in range(phase, n_t - 1, 2):
        ex_counter += np.uint64(1)
        u = (mix64(ex_seed + ex_counter * GAMMA) >> np.uint64(11)) * 1.1102230246251565e-16
        ca = col_at_g[t]
        cb = col_at_g[t + 1]
        delta = (betas[t] - betas[t + 1]) * (energy[ca] - energy[cb])
        attempts[t] += 1
        if delta >= 0.0 or u < math.exp(delta):
            col_at_g[t] = cb
            col_at_g[t + 1] = ca
            accepts[t] += 1
    return ex_counter


def attempt_exchanges(ladder: ReplicaLadder) -> np.ndarray:
    """One exchange phase on both replica sets; alternates even/odd pairs
    across calls.  Returns the cumulative (2, n_T-1) acceptance counts."""
    if ladder.n_temperatures < 2:
        raise ScheduleError("replica exchange needs at least two temperatures")
    phase = ladder.exchange_calls % 2
    betas = ladder.betas
    for g in range(2):
        ladder.ex_counters[g] = _exchange_set(
            ladder.col_at[g],
            ladder.energy,
            betas,
            ladder.ex_seeds[g],
            ladder.ex_counters[g],
            ladder.exch_attempts[g],
            ladder.exch_accepts[g],
            phase,
        )
    ladder.exchange_calls += 1
    return ladder.exch_accepts


def sweep_ladder(ladder: ReplicaLadder, lat: Lattice, dis: DisorderRealization,
                 tau_flat: Optional[np.ndarray] = None, rule: str = HEAT_BATH) -> None:
    """Reference path: one local-update sweep of every column, column by column.

    Bit-identical to the fused production kernel; kept as the composable
    building block and for cross-checking.
    """
    if tau_flat is None:
        tau_flat = flatten_tau(lat, dis)
    maxc = lat.max_coordination
    slot_of = np.empty(2 * ladder.n_temperatures, dtype=np.int64)
    for g in range(2):
        for t in range(ladder.n_temperatures):
            slot_of[ladder.col_at[g, t]] = t
    betas = ladder.betas
    for c in range(2 * ladder.n_temperatures):
        thr = threshold_table(betas[slot_of[c]], maxc, rule)
        accepted, de, counter = _sweep_one(
            ladder.spins[:, c],
            tau_flat,
            lat.inc_ptr,
            lat.inc_nbr1,
            lat.inc_nbr2,
            thr,
            ladder.col_seeds[c],
            ladder.col_counters[c],
            maxc,
        )
        ladder.col_counters[c] = counter
        ladder.energy[c] += de


# ---------------------------------------------------------------------------
# fused production kernel


@njit(cache=True)
def _run_block(
    spins, energy, col_at, thr_all, betas,
    col_seeds, col_counters, ex_seeds, ex_counters,
    exch_attempts, exch_accepts,
    tau_flat, inc_ptr, nb1, nb2, max_coord,
    cos_x, sin_x,
    sweep_offset, n_sweeps, measure_every,
    bin_counts, bin_sums, bin_sums2,
    record_series, series,
    record_hist, hist,
    hbuf, rbuf, slot_of,
):
    """Advance the whole ladder by ``n_sweeps`` sweeps.

    Per sweep: one Metropolis pass over every column (site-major so the
    inner replica loop vectorizes), then one exchange phase per set, then
    a measurement if due.  State arrays are updated in place; composing
    blocks is bit-identical to one long block.
    """
    n = spins.shape[0]
    ncol = spins.shape[1]
    n_t = col_at.shape[1]
    for g in range(2):
        for t in range(n_t):
            slot_of[col_at[g, t]] = t

    for k in range(1, n_sweeps + 1):
        sweep_idx = sweep_offset + k
        # --- Metropolis sweep, all columns at once
        for s in range(n):
            base = inc_ptr[s]
            nterm = inc_ptr[s + 1] - base
            for r in range(ncol):
                hbuf[r] = 0
            for m in range(nterm):
                j = base + m
                tsign = tau_flat[j]
                a = nb1[j]
                b = nb2[j]
                for r in range(ncol):
                    hbuf[r] += tsign * spins[a, r] * spins[b, r]
            for r in range(ncol):
                c = col_counters[r] + np.uint64(1)
                col_counters[r] = c
                rbuf[r] = mix64(col_seeds[r] + c * GAMMA)
            for r in range(ncol):
                sl = np.int64(spins[s, r]) * np.int64(hbuf[r])
                if rbuf[r] < thr_all[slot_of[r], sl + max_coord]:
                    spins[s, r] = -spins[s, r]
                    energy[r] += 2 * sl
        # --- replica exchange (even/odd pairs on alternating sweeps)
        phase = (sweep_idx - 1) % 2
        for g in range(2):
            cnt = ex_counters[g]
            for t in range(phase, n_t - 1, 2):
                cnt += np.uint64(1)
                u = (mix64(ex_seeds[g] + cnt * GAMMA) >> np.uint64(11)) * 1.1102230246251565e-16
                ca = col_at[g, t]
                cb = col_at[g, t + 1]
                delta = (betas[t] - betas[t + 1]) * (energy[ca] - energy[cb])
                exch_attempts[g, t] += 1
                if delta >= 0.0 or u < math.exp(delta):
                    col_at[g, t] = cb
                    col_at[g, t + 1] = ca
                    slot_of[cb] = t
                    slot_of[ca] = t + 1
                    exch_accepts[g, t] += 1
            ex_counters[g] = cnt
        # --- measurement
        if sweep_idx % measure_every == 0:
            meas_idx = sweep_idx // measure_every
            if meas_idx >= 2:
                v = meas_idx - 1
                b = 0
                while v > 1:
                    v >>= 1
                    b += 1
                bin_counts[b] += 1
            else:
                b = -1  # burn-in measurement, not binned
            for t in range(n_t):
                ca = col_at[0, t]
                cb = col_at[1, t]
                m0a = 0
                m0b = 0
                q0 = 0
                mka_re = 0.0
                mka_im = 0.0
                mkb_re = 0.0
                mkb_im = 0.0
                qk_re = 0.0
                qk_im = 0.0
                for s in range(n):
                    sa = spins[s, ca]
                    sb = spins[s, cb]
                    m0a += sa
                    m0b += sb
                    q = sa * sb
                    q0 += q
                    mka_re += sa * cos_x[s]
                    mka_im += sa * sin_x[s]
                    mkb_re += sb * cos_x[s]
                    mkb_im += sb * sin_x[s]
                    qk_re += q * cos_x[s]
                    qk_im += q * sin_x[s]
                fa = np.float64(m0a)
                fb = np.float64(m0b)
                obs0 = np.float64(energy[ca])
                obs1 = np.float64(energy[cb])
                obs2 = fa * fa
                obs3 = fb * fb
                obs4 = mka_re * mka_re + mka_im * mka_im
                obs5 = mkb_re * mkb_re + mkb_im * mkb_im
                obs6 = obs2 * obs2
                obs7 = obs3 * obs3
                obs8 = np.float64(q0) * np.float64(q0)
                obs9 = qk_re * qk_re + qk_im * qk_im
                if b >= 0:
                    bin_sums[b, t, 0] += obs0
                    bin_sums[b, t, 1] += obs1
                    bin_sums[b, t, 2] += obs2
                    bin_sums[b, t, 3] += obs3
                    bin_sums[b, t, 4] += obs4
                    bin_sums[b, t, 5] += obs5
                    bin_sums[b, t, 6] += obs6
                    bin_sums[b, t, 7] += obs7
                    bin_sums[b, t, 8] += obs8
                    bin_sums[b, t, 9] += obs9
                    bin_sums[b, t, 10] += fa
                    bin_sums[b, t, 11] += fb
                    bin_sums2[b, t, 0] += obs0 * obs0
                    bin_sums2[b, t, 1] += obs1 * obs1
                    bin_sums2[b, t, 2] += obs2 * obs2
                    bin_sums2[b, t, 3] += obs3 * obs3
                    bin_sums2[b, t, 4] += obs4 * obs4
                    bin_sums2[b, t, 5] += obs5 * obs5
                    bin_sums2[b, t, 6] += obs6 * obs6
                    bin_sums2[b, t, 7] += obs7 * obs7
                    bin_sums2[b, t, 8] += obs8 * obs8
                    bin_sums2[b, t, 9] += obs9 * obs9
                    bin_sums2[b, t, 10] += fa * fa
                    bin_sums2[b, t, 11] += fb * fb
                if record_series == 1:
                    row = meas_idx - 1
                    series[row, t, 0] = obs0
                    series[row, t, 1] = obs1
                    series[row, t, 2] = obs2
                    series[row, t, 3] = obs3
                    series[row, t, 4] = obs4
                    series[row, t, 5] = obs5
                    series[row, t, 6] = obs6
                    series[row, t, 7] = obs7
                    series[row, t, 8] = obs8
                    series[row, t, 9] = obs9
                    series[row, t, 10] = fa
                    series[row, t, 11] = fb
                if record_hist == 1:
                    code = np.uint64(0)
                    for s in range(n):
                        if spins[s, ca] > 0:
                            code |= np.uint64(1) << np.uint64(s)
                    hist[t, code] += 1


# ---------------------------------------------------------------------------
# schedules, log bins, simulation driver


@dataclass(frozen=True)
class Schedule:
    """Everything that defines one simulation run of one disorder sample."""

    temperatures: np.ndarray
    n_sweeps: int
    measure_every: int = 1
    seed: int = 0
    update_rule: str = HEAT_BATH
    record_series: bool = False
    record_state_hist: bool = False
    checkpoint_path: Optional[str] = None
    checkpoint_interval: int = 0  # sweeps between checkpoints; 0 = only at end

    def __post_init__(self):
        temps = np.asarray(self.temperatures, dtype=np.float64)
        object.__setattr__(self, "temperatures", temps)
        if temps.ndim != 1 or temps.size < 1:
            raise ScheduleError("temperature ladder must be a non-empty 1-D array")
        if np.any(np.diff(temps) <= 0):
            raise ScheduleError("temperatures must be strictly increasing")
        n, e = self.n_sweeps, self.measure_every
        if n < 1 or n & (n - 1):
            raise ScheduleError(f"n_sweeps must be a power of two; got {n}")
        if e < 1 or e & (e - 1):
            raise ScheduleError(f"measure_every must be a power of two; got {e}")
        if n // e < 16:
            raise ScheduleError(
                f"need at least 16 measurements (>= 4 logarithmic bins); "
                f"n_sweeps={n} with measure_every={e} gives {n // e}"
            )
        if self.update_rule not in UPDATE_RULES:
            raise ScheduleError(
                f"unknown update rule {self.update_rule!r}; expected one of {UPDATE_RULES}"
            )
        if self.record_series and self.checkpoint_path:
            raise ScheduleError("series recording and checkpointing are exclusive")

    @property
    def n_measurements(self) -> int:
        return self.n_sweeps // self.measure_every

    @property
    def n_bins(self) -> int:
        return self.n_measurements.bit_length() - 1

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.temperatures.tobytes())
        h.update(
            f"{self.n_sweeps}/{self.measure_every}/{self.seed}/{self.update_rule}".encode()
        )
        return h.hexdigest()


@dataclass
class LogBinnedSeries:
    """Per-(bin, temperature, observable) accumulators over 2^k-sized windows.

    Bin k collects the measurements with index in (2^k, 2^(k+1)]; the
    first measurement is burn-in and belongs to no bin.
    """

    temperatures: np.ndarray
    counts: np.ndarray  # (n_bins,) int64
    sums: np.ndarray  # (n_bins, n_T, NOBS)
    sums2: np.ndarray  # (n_bins, n_T, NOBS)

    @property
    def n_bins(self) -> int:
        return self.counts.shape[0]

    def means(self) -> np.ndarray:
        return self.sums / self.counts[:, None, None]

    def std_errors(self) -> np.ndarray:
        """Standard error of each bin mean from the within-bin scatter."""
        n = self.counts[:, None, None].astype(np.float64)
        mean = self.sums / n
        var = np.maximum(self.sums2 / n - mean**2, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            se = np.sqrt(var / np.maximum(n - 1.0, 1.0))
        se[self.counts <= 1] = np.inf
        return se


@dataclass
class SimulationResult:
    """Outcome of one run: log bins, production averages, exchange stats."""

    temperatures: np.ndarray
    log_bins: LogBinnedSeries
    production_means: np.ndarray  # (n_T, NOBS), average over the last bin
    n_production: int
    exch_attempts: np.ndarray
    exch_accepts: np.ndarray
    series: Optional[np.ndarray] = None  # (n_meas, n_T, NOBS) when recorded
    state_hist: Optional[np.ndarray] = None  # (n_T, 2^N) when recorded
    ladder: Optional[ReplicaLadder] = None


def _save_checkpoint(path, lat_hash, dis_hash, sched_digest, sweep_done, ladder, bins):
    payload = {
        "version": CHECKPOINT_VERSION,
        "lattice_hash": lat_hash,
        "disorder_hash": dis_hash,
        "schedule_digest": sched_digest,
        "sweep_done": sweep_done,
        "spins": ladder.spins,
        "energy": ladder.energy,
        "col_at": ladder.col_at,
        "col_seeds": ladder.col_seeds,
        "col_counters": ladder.col_counters,
        "ex_seeds": ladder.ex_seeds,
        "ex_counters": ladder.ex_counters,
        "exch_attempts": ladder.exch_attempts,
        "exch_accepts": ladder.exch_accepts,
        "exchange_calls": ladder.exchange_calls,
        "bin_counts": bins.counts,
        "bin_sums": bins.sums,
        "bin_sums2": bins.sums2,
    }
    tmp = str(path) + ".tmp"
    with open(tmp, "wb") as fh:
        pickle.dump(payload, fh, protocol=pickle.HIGHEST_PROTOCOL)
    import os

    os.replace(tmp, path)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return pickle.load(fh)


def run_simulation(
    lat: Lattice, dis: DisorderRealization, schedule: Schedule
) -> SimulationResult:
    """Alternate Metropolis sweeps and replica exchanges for the whole run.

    Fully deterministic in (lattice, disorder, schedule): reruns and
    checkpoint resumes are bit-identical.  If ``schedule.checkpoint_path``
    exists the run resumes from it after verifying that the lattice,
    disorder, and schedule match.
    """
    import os

    temps = schedule.temperatures
    n_t = temps.size
    lat_hash = lattice_hash(lat)
    dis_hash = dis.hash
    sched_digest = schedule.digest()
    tau_flat = flatten_tau(lat, dis)
    maxc = lat.max_coordination
    n_bins = schedule.n_bins

    sweep_done = 0
    bins = LogBinnedSeries(
        temperatures=temps,
        counts=np.zeros(n_bins, dtype=np.int64),
        sums=np.zeros((n_bins, n_t, NOBS), dtype=np.float64),
        sums2=np.zeros((n_bins, n_t, NOBS), dtype=np.float64),
    )
    ladder = None
    if schedule.checkpoint_path and os.path.exists(schedule.checkpoint_path):
        payload = load_checkpoint(schedule.checkpoint_path)
        for key, want in (
            ("version", CHECKPOINT_VERSION),
            ("lattice_hash", lat_hash),
            ("disorder_hash", dis_hash),
            ("schedule_digest", sched_digest),
        ):
            if payload.get(key) != want:
                raise CheckpointMismatchError(
                    f"checkpoint {schedule.checkpoint_path} does not match the "
                    f"requested run ({key} differs)"
                )
        sweep_done = int(payload["sweep_done"])
        ladder = ReplicaLadder(
            temperatures=temps,
            spins=payload["spins"],
            energy=payload["energy"],
            col_at=payload["col_at"],
            col_seeds=payload["col_seeds"],
            col_counters=payload["col_counters"],
            ex_seeds=payload["ex_seeds"],
            ex_counters=payload["ex_counters"],
            exch_attempts=payload["exch_attempts"],
            exch_accepts=payload["exch_accepts"],
            exchange_calls=int(payload["exchange_calls"]),
        )
        bins.counts = payload["bin_counts"]
        bins.sums = payload["bin_sums"]
        bins.sums2 = payload["bin_sums2"]
    if ladder is None:
        ladder = ReplicaLadder.create(lat, dis, temps, schedule.seed)

    if schedule.record_series:
        series = np.zeros((schedule.n_measurements, n_t, NOBS), dtype=np.float64)
        rec_series = 1
    else:
        series = np.zeros((1, 1, NOBS), dtype=np.float64)
        rec_series = 0
    if schedule.record_state_hist:
        if lat.n_sites > 20:
            raise ScheduleError("state histogram supported only for N <= 20 sites")
        hist = np.zeros((n_t, 1 << lat.n_sites), dtype=np.int64)
        rec_hist = 1
    else:
        hist = np.zeros((1, 1), dtype=np.int64)
        rec_hist = 0

    thr_all = np.empty((n_t, 2 * maxc + 1), dtype=np.uint64)
    for t in range(n_t):
        thr_all[t] = threshold_table(1.0 / temps[t], maxc, schedule.update_rule)
    hbuf = np.zeros(2 * n_t, dtype=np.int16)
    rbuf = np.zeros(2 * n_t, dtype=np.uint64)
    slot_of = np.zeros(2 * n_t, dtype=np.int64)

    interval = schedule.checkpoint_interval or schedule.n_sweeps
    while sweep_done < schedule.n_sweeps:
        block = min(interval, schedule.n_sweeps - sweep_done)
        _run_block(
            ladder.spins, ladder.energy, ladder.col_at, thr_all, ladder.betas,
            ladder.col_seeds, ladder.col_counters, ladder.ex_seeds, ladder.ex_counters,
            ladder.exch_attempts, ladder.exch_accepts,
            tau_flat, lat.inc_ptr, lat.inc_nbr1, lat.inc_nbr2, maxc,
            *lat.fourier_phases(),
            sweep_done, block, schedule.measure_every,
            bins.counts, bins.sums, bins.sums2,
            rec_series, series,
            rec_hist, hist,
            hbuf, rbuf, slot_of,
        )
        ladder.exchange_calls += block
        sweep_done += block
        if schedule.checkpoint_path and sweep_done < schedule.n_sweeps:
            _save_checkpoint(
                schedule.checkpoint_path, lat_hash, dis_hash, sched_digest,
                sweep_done, ladder, bins,
            )

    last = n_bins - 1
    production = bins.sums[last] / bins.counts[last]
    return SimulationResult(
        temperatures=temps,
        log_bins=bins,
        production_means=production,
        n_production=int(bins.counts[last]),
        exch_attempts=ladder.exch_attempts,
        exch_accepts=ladder.exch_accepts,
        series=series if rec_series else None,
        state_hist=hist if rec_hist else None,
        ladder=ladder,
    )


# ---------------------------------------------------------------------------
# equilibration


@dataclass
class EquilibrationReport:
    """Verdict of the logarithmic-binning test per (temperature, observable)."""

    passed: np.ndarray  # (n_T, n_obs) bool
    first_ok_bin: np.ndarray  # (n_T, n_obs) int, -1 where failed
    observables: tuple

    @property
    def all_passed(self) -> bool:
        return bool(self.passed.all())


def _agreement_start(means, ses, sigma):
    """Smallest k0 such that all bins k0.. agree pairwise within errors; -1 if
    even the last three do not."""
    k = means.shape[0]

    def pair_ok(i, j):
        tol = sigma * math.sqrt(ses[i] ** 2 + ses[j] ** 2)
        return abs(means[i] - means[j]) <= tol

    if not all(pair_ok(i, j) for i in range(k - 3, k) for j in range(i + 1, k)):
        return -1
    start = k - 3
    while start > 0:
        cand = start - 1
        if all(pair_ok(cand, j) for j in range(cand + 1, k)):
            start = cand
        else:
            break
    return start


def equilibration_check(bins, sigma: float = 1.0, observables=EQUILIBRATION_OBS):
    """Logarithmic-binning equilibration test.

    Passes for a (temperature, observable) pair iff the last three bin
    means agree pairwise within ``sigma`` times the quadrature sum of
    their standard errors.  ``bins`` is a LogBinnedSeries or a
    (means, std_errors) tuple of (n_bins, n_T, NOBS) arrays.
    """
    if isinstance(bins, LogBinnedSeries):
        means, ses = bins.means(), bins.std_errors()
    else:
        means, ses = bins
        means = np.asarray(means, dtype=np.float64)
        ses = np.asarray(ses, dtype=np.float64)
    if means.ndim == 1:
        means = means[:, None, None]
        ses = ses[:, None, None]
        observables = (0,)
    n_bins, n_t = means.shape[0], means.shape[1]
    if n_bins < 4:
        raise InsufficientBinsError(
            f"equilibration test needs at least 4 logarithmic bins; got {n_bins}"
        )
    obs = tuple(observables)
    passed = np.zeros((n_t, len(obs)), dtype=bool)
    first_ok = np.full((n_t, len(obs)), -1, dtype=np.int64)
    for t in range(n_t):
        for oi, o in enumerate(obs):
            start = _agreement_start(means[:, t, o], ses[:, t, o], sigma)
            first_ok[t, oi] = start
            passed[t, oi] = start >= 0
    return EquilibrationReport(passed=passed, first_ok_bin=first_ok, observables=obs)
