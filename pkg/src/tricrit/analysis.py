"""Finite-size-scaling analysis of xi/L curves.

Transition temperatures come from crossings of xi_m/L curves for pairs of
system sizes: each curve is fit by an error-weighted cubic over a common
temperature window (auto-shrunk until chi^2/dof <= 2) and the fitted
difference is root-found.  A parametric bootstrap (resampling each point
within its error bar) propagates uncertainties and classifies each pair
as crossing / no-crossing / uncertain; the absence of a crossing is data,
not failure — it is how p above the multicritical threshold shows up.

The boundary T_c(p) is assembled from inverse-variance-weighted pair
crossings; a monotone interpolation intersected with the Nishimori line
gives the multicritical point p_c, or a bracket [largest crossing p,
smallest non-crossing p] when the measured boundary stops short of the
line.  Everything is a pure function of the input tables with fixed
seeds, so reruns are bit-identical.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator, UnivariateSpline
from scipy.optimize import brentq, minimize

from .disorder import nishimori_temperature
from .rng import derive_seed, normal_block, uniform_block

CROSSING = "crossing"
NO_CROSSING = "no-crossing"
UNCERTAIN = "uncertain"

MIN_WINDOW_POINTS = 5
# bootstrap fraction of resamples that must cross for a confident verdict
CROSSING_CONFIDENCE = 0.9


class AnalysisError(ValueError):
    """Input tables do not satisfy an analysis precondition."""


@dataclass(frozen=True)
class Curve:
    """One xi/L-versus-T table for a single system size."""

    T: np.ndarray
    y: np.ndarray
    err: np.ndarray

    def __post_init__(self):
        for name in ("T", "y", "err"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if not (self.T.shape == self.y.shape == self.err.shape):
            raise AnalysisError("curve arrays must have matching shapes")
        if np.any(np.diff(self.T) <= 0):
            raise AnalysisError("curve temperatures must be strictly increasing")

    def restrict(self, lo: float, hi: float) -> "Curve":
        mask = (self.T >= lo - 1e-12) & (self.T <= hi + 1e-12)
        return Curve(self.T[mask], self.y[mask], self.err[mask])


@dataclass
class CrossingEstimate:
    """Crossing of two system-size curves (or the verdict that there is none)."""

    l_pair: Tuple[int, int]
    status: str
    t_cross: float
    err: float
    window: Tuple[float, float]
    residual: float  # worst chi^2/dof of the two cubic fits
    poly_order: int
    crossed_fraction: float  # bootstrap resamples with a root in the window


def _weights(err: np.ndarray) -> np.ndarray:
    """Inverse errors for polynomial fitting, with a floor for exact points."""
    positive = err[err > 0]
    floor = positive.min() * 1e-3 if positive.size else 1.0
    return 1.0 / np.maximum(err, floor)


def _fit_cubic(T, y, w):
    coef = np.polynomial.polynomial.polyfit(T, y, 3, w=w)
    fit = np.polynomial.polynomial.polyval(T, coef)
    dof = max(len(T) - 4, 1)
    chi2 = float((((y - fit) * w) ** 2).sum()) / dof
    return coef, chi2


def _roots_in_window(coef_diff, lo, hi):
    roots = np.polynomial.polynomial.polyroots(coef_diff)
    real = roots[np.abs(roots.imag) < 1e-9].real
    return np.sort(real[(real >= lo) & (real <= hi)])


def _crossing_once(curve_a: Curve, curve_b: Curve, lo: float, hi: float):
    """Fit both curves on [lo, hi] and root-find the fitted difference.

    Returns (roots, worst_chi2, lo, hi) after shrinking the window from
    whichever end most improves the worst fit, until chi^2/dof <= 2 or
    the minimum point count is reached.
    """
    while True:
        a = curve_a.restrict(lo, hi)
        b = curve_b.restrict(lo, hi)
        coef_a, chi_a = _fit_cubic(a.T, a.y, _weights(a.err))
        coef_b, chi_b = _fit_cubic(b.T, b.y, _weights(b.err))
        worst = max(chi_a, chi_b)
        if worst <= 2.0 or min(len(a.T), len(b.T)) <= MIN_WINDOW_POINTS:
            return _roots_in_window(coef_a - coef_b, lo, hi), worst, lo, hi
        # candidate windows: drop the leftmost or rightmost grid point
        grid = np.unique(np.concatenate([a.T, b.T]))
        cand = []
        for new_lo, new_hi in ((grid[1], hi), (lo, grid[-2])):
            aa, bb = curve_a.restrict(new_lo, new_hi), curve_b.restrict(new_lo, new_hi)
            if min(len(aa.T), len(bb.T)) < MIN_WINDOW_POINTS:
                continue
            _, ca = _fit_cubic(aa.T, aa.y, _weights(aa.err))
            _, cb = _fit_cubic(bb.T, bb.y, _weights(bb.err))
            cand.append((max(ca, cb), new_lo, new_hi))
        if not cand:
            return _roots_in_window(coef_a - coef_b, lo, hi), worst, lo, hi
        cand.sort()
        _, lo, hi = cand[0]


def find_crossing(
    curves: Dict[int, Curve],
    l_pair: Tuple[int, int],
    n_boot: int = 500,
    seed: int = 0,
) -> CrossingEstimate:
    """Locate (or rule out) the crossing of two system sizes' xi/L curves."""
    l1, l2 = l_pair
    if l1 not in curves or l2 not in curves:
        raise AnalysisError(f"curves for pair {l_pair} not provided")
    ca, cb = curves[l1], curves[l2]
    lo = max(ca.T.min(), cb.T.min())
    hi = min(ca.T.max(), cb.T.max())
    if not (
        len(ca.restrict(lo, hi).T) >= MIN_WINDOW_POINTS
        and len(cb.restrict(lo, hi).T) >= MIN_WINDOW_POINTS
    ):
        raise AnalysisError(
            f"pair {l_pair}: need a common window with at least "
            f"{MIN_WINDOW_POINTS} points per curve"
        )

    roots, worst, wlo, whi = _crossing_once(ca, cb, lo, hi)

    # parametric bootstrap: jitter every point within its error bar; noise
    # streams are keyed by system size so the estimate is swap-symmetric
    boot_roots = []
    n_crossed = 0
    for bi in range(n_boot):
        jittered = {}
        for lv, cv in ((l1, ca), (l2, cb)):
            s = derive_seed(seed, "crossing-noise", lv)
            noise = normal_block(s, 2 * bi * len(cv.T), len(cv.T))
            jittered[lv] = Curve(cv.T, cv.y + noise * cv.err, cv.err)
        rts, _, _, _ = _crossing_once(jittered[l1], jittered[l2], wlo, whi)
        if len(rts):
            n_crossed += 1
            boot_roots.append(rts[len(rts) // 2])
    frac = n_crossed / n_boot if n_boot else 0.0

    if len(roots) == 1 and frac >= CROSSING_CONFIDENCE:
        status = CROSSING
    elif len(roots) == 0 and frac <= 1.0 - CROSSING_CONFIDENCE:
        status = NO_CROSSING
    else:
        status = UNCERTAIN

    if len(roots):
        t_cross = float(roots[len(roots) // 2])
    elif boot_roots:
        t_cross = float(np.median(boot_roots))
    else:
        t_cross = float("nan")
    if boot_roots:
        lo_q, hi_q = np.percentile(boot_roots, [15.865, 84.135])
        err = max(0.5 * float(hi_q - lo_q), 1e-12)
    else:
        err = float("nan")
    return CrossingEstimate(
        l_pair=(l1, l2),
        status=status,
        t_cross=t_cross,
        err=err,
        window=(float(wlo), float(whi)),
        residual=float(worst),
        poly_order=3,
        crossed_fraction=float(frac),
    )


# ---------------------------------------------------------------------------
# scaling collapse


@dataclass
class CollapseResult:
    t_c: float
    nu: float
    quality: float  # collapse cost at the optimum
    quality_init: float  # cost at the initializer
    converged: bool
    n_evaluations: int


def _collapse_cost(params, curves: Dict[int, Curve], t_span) -> float:
    t_c, nu = params
    if not (0.1 <= nu <= 10.0) or abs(t_c - t_span[0]) > t_span[1]:
        return 1e9
    xs, ys, ws = [], [], []
    for lv, cv in curves.items():
        xs.append(float(lv) ** (1.0 / nu) * (cv.T - t_c))
        ys.append(cv.y)
        ws.append(_weights(cv.err))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    w = np.concatenate(ws)
    order = np.argsort(x)
    x, y, w = x[order], y[order], w[order]
    # merge duplicate abscissas (weighted); UnivariateSpline needs strictly increasing x
    keep_x, keep_y, keep_w = [], [], []
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[j + 1] - x[i] < 1e-12:
            j += 1
        if j == i:
            keep_x.append(x[i]); keep_y.append(y[i]); keep_w.append(w[i])
        else:
            wseg = w[i : j + 1]
            keep_x.append(x[i])
            keep_y.append(float((y[i : j + 1] * wseg).sum() / wseg.sum()))
            keep_w.append(float(wseg.sum()))
        i = j + 1
    x = np.asarray(keep_x); y = np.asarray(keep_y); w = np.asarray(keep_w)
    if len(x) < 8:
        return 1e9
    try:
        spline = UnivariateSpline(x, y, w=w, k=3, s=len(x))
        resid = y - spline(x)
    except Exception:
        return 1e9
    return float(np.mean(resid**2))


def scaling_collapse(
    curves: Dict[int, Curve],
    t_c_init: float,
    nu_init: float,
    max_iter: int = 400,
) -> CollapseResult:
    """Minimize the scatter of rescaled points around a smoothing spline.

    Rescales every (T, xi/L) point to (L^(1/nu) (T - T_c), xi/L), fits one
    smoothing spline through the merged set, and drives the mean squared
    deviation down with a Nelder-Mead simplex from the initializer
    (derivative-free: the cost is noisy and non-smooth).  Non-convergence
    returns the best point found, flagged.
    """
    if len(curves) < 3:
        raise AnalysisError("scaling collapse needs at least 3 system sizes")
    t_all = np.concatenate([c.T for c in curves.values()])
    t_span = (0.5 * (t_all.min() + t_all.max()), max(t_all.max() - t_all.min(), 1e-3) * 2)
    cost0 = _collapse_cost((t_c_init, nu_init), curves, t_span)
    res = minimize(
        _collapse_cost,
        x0=np.array([t_c_init, nu_init]),
        args=(curves, t_span),
        method="Nelder-Mead",
        options={
            "maxiter": max_iter,
            "xatol": 1e-6,
            "fatol": 1e-12,
            "initial_simplex": np.array(
                [
                    [t_c_init, nu_init],
                    [t_c_init + 0.02, nu_init],
                    [t_c_init, nu_init * 1.15],
                ]
            ),
        },
    )
    return CollapseResult(
        t_c=float(res.x[0]),
        nu=float(res.x[1]),
        quality=float(res.fun),
        quality_init=float(cost0),
        converged=bool(res.success),
        n_evaluations=int(res.nfev),
    )


# ---------------------------------------------------------------------------
# phase boundary and the multicritical point


@dataclass
class BoundaryPoint:
    p: float
    t_c: float
    err: float
    status: str


@dataclass
class PhaseBoundary:
    """The p - T_c boundary plus the derived multicritical point."""

    points: list
    p_c: float = float("nan")
    p_c_err: float = float("nan")
    p_c_bracket: Optional[Tuple[float, float]] = None
    method: str = "undetermined"
    nu_estimates: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def crossing_points(self):
        return [pt for pt in self.points if pt.status == CROSSING]


def _combine_pair_crossings(estimates: Sequence[CrossingEstimate]):
    """Inverse-variance-weighted T_c over the size pairs that cross;
    the error is widened by sqrt(chi^2/dof) when pairs scatter beyond
    their own error bars."""
    xs = np.array([e.t_cross for e in estimates])
    es = np.array([max(e.err, 1e-12) for e in estimates])
    w = 1.0 / es**2
    mean = float((xs * w).sum() / w.sum())
    err = float(math.sqrt(1.0 / w.sum()))
    if len(xs) > 1:
        chi2 = float((((xs - mean) / es) ** 2).sum() / (len(xs) - 1))
        err *= max(1.0, math.sqrt(chi2))
    return mean, err


def _point_status(estimates: Sequence[CrossingEstimate]) -> str:
    statuses = {e.status for e in estimates}
    if statuses == {CROSSING}:
        return CROSSING
    if statuses == {NO_CROSSING}:
        return NO_CROSSING
    return UNCERTAIN


def _intersect_nishimori(ps, ts):
    """Root of PCHIP(T_c)(p) - T_N(p) on the measured p range, or None."""
    interp = PchipInterpolator(ps, ts)
    lo = max(ps[0], 1e-6)
    hi = ps[-1]
    if hi <= lo:
        return None

    def g(p):
        return float(interp(p)) - nishimori_temperature(p)

    grid = np.linspace(lo, hi, 257)
    vals = [g(p) for p in grid]
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            return float(grid[i])
        if vals[i] * vals[i + 1] < 0:
            return float(brentq(g, grid[i], grid[i + 1], xtol=1e-12))
    return None


def build_phase_boundary(
    crossings_by_p: Dict[float, Sequence[CrossingEstimate]],
    n_boot: int = 500,
    seed: int = 0,
    nu_estimates: Optional[dict] = None,
) -> PhaseBoundary:
    """Assemble the boundary and locate where it meets the Nishimori line.

    Per p the pair crossings are combined by inverse-variance weighting.
    If the monotone interpolation of the crossing points intersects the
    Nishimori curve, p_c comes from that root with a parametric-bootstrap
    error; otherwise p_c is reported as the bracket between the largest
    crossing p and the smallest non-crossing p.
    """
    n_crossing = sum(
        1 for ests in crossings_by_p.values() if _point_status(ests) == CROSSING
    )
    if n_crossing < 2:
        raise AnalysisError(
            f"need at least 2 p values with status={CROSSING}; got {n_crossing}"
        )
    points = []
    for p in sorted(crossings_by_p):
        ests = list(crossings_by_p[p])
        status = _point_status(ests)
        usable = [e for e in ests if e.status == CROSSING and np.isfinite(e.t_cross)]
        if usable:
            t_c, err = _combine_pair_crossings(usable)
        else:
            t_c, err = float("nan"), float("nan")
        points.append(BoundaryPoint(p=float(p), t_c=t_c, err=err, status=status))

    boundary = PhaseBoundary(points=points, nu_estimates=dict(nu_estimates or {}))

    cross = boundary.crossing_points()
    ps = np.array([pt.p for pt in cross])
    ts = np.array([pt.t_c for pt in cross])
    errs = np.array([pt.err for pt in cross])
    for i in range(len(cross) - 1):
        gap = ts[i + 1] - ts[i]
        tol = math.hypot(errs[i], errs[i + 1])
        if gap > 3 * tol:
            boundary.warnings.append(
                f"T_c increases from p={ps[i]:g} to p={ps[i+1]:g} "
                f"by {gap:.4g} (> 3 sigma = {3*tol:.4g})"
            )

    root = _intersect_nishimori(ps, ts)
    non_cross = [pt.p for pt in boundary.points if pt.status != CROSSING]
    if root is not None:
        boundary.p_c = root
        boundary.method = "nishimori-intersection"
        boots = []
        for b in range(n_boot):
            noise = normal_block(derive_seed(seed, "boundary-noise"), 2 * b * len(ts), len(ts))
            r = _intersect_nishimori(ps, ts + noise * errs)
            if r is not None:
                boots.append(r)
        if boots:
            lo_q, hi_q = np.percentile(boots, [15.865, 84.135])
            boundary.p_c_err = 0.5 * float(hi_q - lo_q)
        if non_cross:
            hi_b = min(non_cross)
            lo_b = max(ps)
            boundary.p_c_bracket = (float(lo_b), float(hi_b))
    elif non_cross:
        lo_b = max(ps)
        hi_b = min(non_cross)
        boundary.p_c_bracket = (float(lo_b), float(hi_b))
        boundary.p_c = 0.5 * (lo_b + hi_b)
        boundary.p_c_err = 0.5 * (hi_b - lo_b)
        boundary.method = "bracket"
    else:
        boundary.warnings.append(
            "boundary never reaches the Nishimori line and no non-crossing p "
            "was measured; p_c undetermined"
        )
    return boundary


@dataclass
class ComparisonRow:
    p: float
    rel_dev: float
    err: float


def compare_boundaries(a: PhaseBoundary, b: PhaseBoundary) -> list:
    """Relative T_c deviation (a - b)/b on a's crossing grid, with b
    interpolated onto it (monotone) and errors propagated."""
    ca, cb = a.crossing_points(), b.crossing_points()
    if len(cb) < 2:
        raise AnalysisError("reference boundary needs >= 2 crossing points")
    pa = np.array([pt.p for pt in ca])
    pb = np.array([pt.p for pt in cb])
    lo, hi = max(pa.min(), pb.min()), min(pa.max(), pb.max())
    if lo > hi:
        raise AnalysisError("boundaries have disjoint p ranges")
    interp_t = PchipInterpolator(pb, [pt.t_c for pt in cb])
    interp_e = PchipInterpolator(pb, [pt.err for pt in cb])
    rows = []
    for pt in ca:
        if not (lo <= pt.p <= hi):
            continue
        tb = float(interp_t(pt.p))
        eb = float(interp_e(pt.p))
        dev = (pt.t_c - tb) / tb
        err = math.sqrt(pt.err**2 + (pt.t_c / tb) ** 2 * eb**2) / tb
        rows.append(ComparisonRow(p=pt.p, rel_dev=float(dev), err=float(err)))
    return rows


# ---------------------------------------------------------------------------
# file outputs


def write_boundary_csv(boundary: PhaseBoundary, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("p", "T_c", "err", "status"))
        for pt in boundary.points:
            writer.writerow(
                (f"{pt.p:.17g}", f"{pt.t_c:.17g}", f"{pt.err:.17g}", pt.status)
            )


def write_pc_json(boundary: PhaseBoundary, path) -> None:
    doc = {
        "p_c": None if math.isnan(boundary.p_c) else boundary.p_c,
        "err_or_bracket": (
            list(boundary.p_c_bracket)
            if boundary.method == "bracket"
            else (None if math.isnan(boundary.p_c_err) else boundary.p_c_err)
        ),
        "method": boundary.method,
    }
    if boundary.p_c_bracket is not None:
        doc["bracket"] = list(boundary.p_c_bracket)
    if boundary.nu_estimates:
        doc["nu_estimates"] = {
            f"{p:g}": list(v) if isinstance(v, (tuple, list)) else v
            for p, v in boundary.nu_estimates.items()
        }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_collapse_csv(rows: Sequence[tuple], path) -> None:
    """Rescaled collapse points: (p, L, T, x, y, err) per row."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("p", "L", "T", "x", "y", "err"))
        for p, lv, t, x, y, err in rows:
            writer.writerow(
                (f"{p:.17g}", str(int(lv)), f"{t:.17g}", f"{x:.17g}",
                 f"{y:.17g}", f"{err:.17g}")
            )


def collapse_rows(p: float, curves: Dict[int, Curve], t_c: float, nu: float) -> list:
    rows = []
    for lv in sorted(curves):
        cv = curves[lv]
        x = float(lv) ** (1.0 / nu) * (cv.T - t_c)
        for i in range(len(cv.T)):
            rows.append((p, lv, float(cv.T[i]), float(x[i]), float(cv.y[i]), float(cv.err[i])))
    return rows
