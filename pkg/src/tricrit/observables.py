"""Observables: susceptibilities, correlation lengths, disorder averaging.

The wave-vector susceptibility is chi(k) = <|sum_i S_i e^{i k x_i}|^2> / L^2
(unconnected, as required for a model without spin-reversal symmetry; the
1/L^2 normalization is kept verbatim even where N != L^2, since only
ratios enter the correlation length).  Spin-glass variants replace S_i by
the two-replica overlap q_i = S_i^a * S_i^b.  Disorder averaging is
average-then-ratio: the correlation length is computed from the
disorder-averaged susceptibilities, with errors from bootstrap resampling
of the samples.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lattice import Lattice
from .mc import (
    NOBS,
    OBS_E_A, OBS_E_B, OBS_M2_A, OBS_M2_B, OBS_M4_A, OBS_M4_B,
    OBS_MK2_A, OBS_MK2_B, OBS_Q2, OBS_QK2,
)
from .rng import uniform_block


class DegenerateInputError(ValueError):
    """A ratio observable was requested from degenerate inputs."""


@dataclass(frozen=True)
class MeasurementRecord:
    """Single-snapshot record for one replica pair at one temperature."""

    energy: int  # of replica a
    m: float  # magnetization per site of replica a
    m0: float  # sum_i S_i (replica a)
    mk: complex  # sum_i S_i e^{i k_min x_i} (replica a)
    q0: float  # sum_i q_i
    qk: complex  # sum_i q_i e^{i k_min x_i}


def measure(cfg_a, cfg_b, lat: Lattice) -> MeasurementRecord:
    """Fourier sums at k = 0 and k_min for the spin and overlap fields."""
    if cfg_a.spins.shape != cfg_b.spins.shape:
        raise ValueError("replica pair must live on the same lattice")
    cos_x, sin_x = lat.fourier_phases()
    sa = cfg_a.spins.astype(np.float64)
    q = (cfg_a.spins * cfg_b.spins).astype(np.float64)
    m0 = float(sa.sum())
    return MeasurementRecord(
        energy=int(cfg_a.energy),
        m=m0 / lat.n_sites,
        m0=m0,
        mk=complex(sa @ cos_x, sa @ sin_x),
        q0=float(q.sum()),
        qk=complex(q @ cos_x, q @ sin_x),
    )


def correlation_length(chi0: float, chik: float, L: int) -> float:
    """Second-moment correlation length from the susceptibility ratio,
    xi = sqrt(max(chi0/chik - 1, 0)) / (2 sin(k_min/2)) with k_min = 2 pi/L.

    Only the ratio chi0/chik enters, so any common normalization cancels.
    The argument is clamped at zero (callers flag that case); chik = 0 is
    degenerate and raises.
    """
    if chik <= 0.0:
        raise DegenerateInputError(
            f"chi(k_min) must be positive to form the ratio; got {chik}"
        )
    if chi0 < 0.0:
        raise ValueError(f"chi(0) must be non-negative; got {chi0}")
    ratio = chi0 / chik - 1.0
    return math.sqrt(max(ratio, 0.0)) / (2.0 * math.sin(math.pi / L))


def binder_ratio(m2: float, m4: float) -> float:
    """g = (3 - m4/m2^2) / 2; diagnostic only (steep and negative at the
    transition for this model, hence not used by the crossing finder)."""
    if m2 <= 0.0:
        raise DegenerateInputError(f"<m^2> must be positive; got {m2}")
    return 0.5 * (3.0 - m4 / (m2 * m2))


@dataclass(frozen=True)
class SampleMeans:
    """Thermal averages of one disorder sample at one temperature."""

    energy: float  # <E>
    m2: float  # <m0^2>
    m4: float  # <m0^4>
    mk2: float  # <|mk|^2>
    q2: float  # <q0^2>
    qk2: float  # <|qk|^2>


def sample_means_from_production(production_row: np.ndarray) -> SampleMeans:
    """Collapse the engine's per-set production means into one record.

    The two replica sets are independent chains, so their ferromagnetic
    averages are pooled; overlap observables are defined between the sets.
    """
    if production_row.shape[-1] != NOBS:
        raise ValueError(f"expected {NOBS} observables, got {production_row.shape[-1]}")
    return SampleMeans(
        energy=0.5 * (production_row[OBS_E_A] + production_row[OBS_E_B]),
        m2=0.5 * (production_row[OBS_M2_A] + production_row[OBS_M2_B]),
        m4=0.5 * (production_row[OBS_M4_A] + production_row[OBS_M4_B]),
        mk2=0.5 * (production_row[OBS_MK2_A] + production_row[OBS_MK2_B]),
        q2=production_row[OBS_Q2],
        qk2=production_row[OBS_QK2],
    )


@dataclass
class DisorderAggregate:
    """Disorder-averaged observables at one (p, L, T) with bootstrap errors."""

    n_samples: int
    energy: float
    energy_err: float
    chi0: float
    chi0_err: float
    chikmin: float
    chikmin_err: float
    xi_over_l: float
    xi_err: float
    xi_sg_over_l: float
    xi_sg_err: float
    binder: float
    binder_err: float
    xi_clamped: bool = False
    xi_sg_clamped: bool = False
    single_sample: bool = False


def _percentile_halfwidth(values: np.ndarray) -> float:
    """Half-width of the central 68.27% percentile interval."""
    values = values[np.isfinite(values)]
    if values.size == 0:
        return float("nan")
    lo, hi = np.percentile(values, [15.865, 84.135])
    return 0.5 * float(hi - lo)


def _xi_over_l(chi0: float, chik: float, L: int) -> float:
    if chik <= 0.0:
        return float("nan")
    return correlation_length(chi0, chik, L) / L


def aggregate(
    samples: Sequence[SampleMeans],
    L: int,
    n_boot: int = 1000,
    seed: int = 0,
) -> DisorderAggregate:
    """Average thermal means over disorder samples and attach errors.

    Susceptibilities are averaged first and ratios (correlation lengths,
    Binder) are formed from the averages; bootstrap resampling of the
    sample list (n_boot resamples, percentile intervals) supplies the
    error bars, including the ratio bias they inherit.
    """
    n = len(samples)
    if n < 1:
        raise ValueError("need at least one sample")
    arr = np.array(
        [[s.energy, s.m2, s.m4, s.mk2, s.q2, s.qk2] for s in samples], dtype=np.float64
    )
    norm = float(L) ** 2

    def stats(block: np.ndarray) -> np.ndarray:
        e, m2, m4, mk2, q2, qk2 = block.mean(axis=0)
        chi0 = m2 / norm
        chik = mk2 / norm
        sg_chi0 = q2 / norm
        sg_chik = qk2 / norm
        xi = _xi_over_l(chi0, chik, L)
        xi_sg = _xi_over_l(sg_chi0, sg_chik, L)
        binder = binder_ratio(m2, m4) if m2 > 0 else float("nan")
        return np.array([e, chi0, chik, xi, xi_sg, binder])

    point = stats(arr)
    if n == 1:
        warnings.warn(
            "single disorder sample: error bars are undefined", stacklevel=2
        )
        errs = np.full(6, np.nan)
    else:
        boots = np.empty((n_boot, 6))
        for b in range(n_boot):
            idx = (uniform_block(seed, b * n, n) * n).astype(np.int64)
            boots[b] = stats(arr[idx])
        errs = np.array([_percentile_halfwidth(boots[:, j]) for j in range(6)])

    mean_m2, mean_mk2 = arr[:, 1].mean(), arr[:, 3].mean()
    mean_q2, mean_qk2 = arr[:, 4].mean(), arr[:, 5].mean()
    return DisorderAggregate(
        n_samples=n,
        energy=point[0], energy_err=errs[0],
        chi0=point[1], chi0_err=errs[1],
        chikmin=point[2], chikmin_err=errs[2],
        xi_over_l=point[3], xi_err=errs[3],
        xi_sg_over_l=point[4], xi_sg_err=errs[4],
        binder=point[5], binder_err=errs[5],
        xi_clamped=bool(mean_m2 < mean_mk2),
        xi_sg_clamped=bool(mean_q2 < mean_qk2),
        single_sample=(n == 1),
    )


# ---------------------------------------------------------------------------
# results CSV (fixed schema shared by the sweep pipeline, the exact
# reference generator, and the analysis layer)

CSV_COLUMNS = (
    "p", "L", "T", "n_samples",
    "chi0", "chi0_err", "chikmin", "chikmin_err",
    "xi_over_L", "xi_err", "xi_sg_over_L", "xi_sg_err",
    "binder", "binder_err", "equilibrated",
)


@dataclass
class ResultRow:
    p: float
    L: int
    T: float
    n_samples: int
    chi0: float
    chi0_err: float
    chikmin: float
    chikmin_err: float
    xi_over_L: float
    xi_err: float
    xi_sg_over_L: float
    xi_sg_err: float
    binder: float
    binder_err: float
    equilibrated: bool

    @classmethod
    def from_aggregate(cls, p: float, L: int, T: float, agg: DisorderAggregate,
                       equilibrated: bool) -> "ResultRow":
        return cls(
            p=p, L=L, T=T, n_samples=agg.n_samples,
            chi0=agg.chi0, chi0_err=agg.chi0_err,
            chikmin=agg.chikmin, chikmin_err=agg.chikmin_err,
            xi_over_L=agg.xi_over_l, xi_err=agg.xi_err,
            xi_sg_over_L=agg.xi_sg_over_l, xi_sg_err=agg.xi_sg_err,
            binder=agg.binder, binder_err=agg.binder_err,
            equilibrated=equilibrated,
        )


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "True" if value else "False"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.17g}"


def write_results_csv(rows: Sequence[ResultRow], path) -> None:
    """Fixed column order, floats at 17 significant digits (round-trip exact)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(getattr(row, c)) for c in CSV_COLUMNS])


def read_results_csv(path) -> list:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames) != CSV_COLUMNS:
            raise ValueError(
                f"unexpected results schema {reader.fieldnames}; expected {CSV_COLUMNS}"
            )
        for rec in reader:
            rows.append(
                ResultRow(
                    p=float(rec["p"]), L=int(rec["L"]), T=float(rec["T"]),
                    n_samples=int(rec["n_samples"]),
                    chi0=float(rec["chi0"]), chi0_err=float(rec["chi0_err"]),
                    chikmin=float(rec["chikmin"]), chikmin_err=float(rec["chikmin_err"]),
                    xi_over_L=float(rec["xi_over_L"]), xi_err=float(rec["xi_err"]),
                    xi_sg_over_L=float(rec["xi_sg_over_L"]),
                    xi_sg_err=float(rec["xi_sg_err"]),
                    binder=float(rec["binder"]), binder_err=float(rec["binder_err"]),
                    equilibrated=(rec["equilibrated"] == "True"),
                )
            )
    return rows
