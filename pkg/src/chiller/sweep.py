"""Characteristic curves, entropy-share scans and the COP at maximum cooling load."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Union

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .models import BATHS, BathSpec, HighCutoff, ModelKind, build_model, make_baths
from .stages import STAGES, breakdown, stage_entropies
from .thermo import (
    NOISE,
    DegenerateSteadyState,
    SteadyReport,
    SteadyStateError,
    carnot_cop,
    omega_c_rev,
    solve,
)

BathsLike = Union[Mapping[str, BathSpec], Callable[[float], Mapping[str, BathSpec]]]

FOUR_LEVEL_FAMILY = (ModelKind.FOUR_LEVEL, ModelKind.FOUR_LEVEL_PRIME, ModelKind.FOUR_LEVEL_DOUBLE_PRIME)
# distances from a refined cooling edge, as fractions of the bracketing grid step;
# closer than this the currents are so small that their ratio is rounding noise
APPROACH = tuple(10.0**-k for k in range(1, 5))


@dataclass(frozen=True)
class TrackingWorkCutoff:
    """Bath factory whose work bath is cut off at ``omega_h - omega_c + offset``.

    The cutoff follows the bare work frequency as ``omega_c`` is swept.
    """

    T_w: float
    T_h: float
    T_c: float
    omega_h: float
    gamma: float = 1e-3
    offset: float = 0.0

    def __call__(self, omega_c: float) -> dict[str, BathSpec]:
        cut = HighCutoff(self.omega_h - omega_c + self.offset)
        return make_baths(self.T_w, self.T_h, self.T_c, self.gamma, {"w": cut})


def _bath_factory(baths: BathsLike) -> Callable[[float], Mapping[str, BathSpec]]:
    if callable(baths):
        return baths
    fixed = dict(baths)
    return lambda _omega_c: fixed


def _temperatures(baths_at, omega_c) -> dict[str, float]:
    b = baths_at(omega_c)
    return {a: b[a].temperature for a in BATHS}


@dataclass(frozen=True)
class SweepRow:
    """One point of a characteristic curve.

    ``cop`` is None when the work bath does not feed the device. ``shares`` are
    the stage entropy productions ``(plus, minus, leak)`` for four-level
    instances in the normal level order, otherwise None. ``tag`` is ``grid``,
    ``edge`` (a refined zero of the cooling load), ``approach`` (a point
    inserted next to an edge) or ``peak`` (the refined COP maximum).
    """

    omega_c: float
    q_c: float | None
    q_h: float | None
    q_w: float | None
    cop: float | None
    entropy_rate: float | None
    shares: tuple[float, float, float] | None
    cooling: bool
    tag: str = "grid"
    error: str | None = None
    current_scale: float = 1.0

    @property
    def ok(self) -> bool:
        return self.error is None


def _steady(kind, omega_c, omega_h, g, kappa, baths_at) -> SteadyReport:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = build_model(kind, omega_c, omega_h, g, kappa, allow_inverted=True)
    return solve(model, baths_at(omega_c))


def _row(kind, omega_c, omega_h, g, kappa, baths_at, tag="grid") -> SweepRow:
    try:
        rep = _steady(kind, omega_c, omega_h, g, kappa, baths_at)
    except DegenerateSteadyState as exc:
        return SweepRow(omega_c, None, None, None, None, None, None, False, tag, f"degenerate: {exc}")
    except (SteadyStateError, ValueError, np.linalg.LinAlgError) as exc:
        return SweepRow(omega_c, None, None, None, None, None, None, False, tag, str(exc))
    shares = None
    if kind is ModelKind.FOUR_LEVEL and omega_c > g:
        try:
            shares = stage_entropies(breakdown(omega_c, omega_h, g, baths_at(omega_c)))
        except ValueError:
            shares = None
    c = rep.currents
    return SweepRow(
        omega_c, c["c"], c["h"], c["w"], rep.cop, rep.entropy_rate, shares, rep.cooling, tag,
        current_scale=rep.current_scale,
    )


def default_range(kind: ModelKind | str, omega_h: float, g: float = 0.0, margin: float = 1e-5):
    """Widest legal ``omega_c`` interval, shrunk by ``margin * omega_h`` at each end."""
    kind = ModelKind(kind)
    pad = margin * omega_h
    upper = omega_h - g if kind in FOUR_LEVEL_FAMILY else omega_h
    return pad, upper - pad


def _refine_edges(kind, omega_h, g, kappa, baths_at, rows):
    extra = []
    good = [r for r in rows if r.ok]
    for a, b in zip(good, good[1:]):
        if (a.q_c > 0) == (b.q_c > 0):
            continue

        def f(w):
            return _steady(kind, w, omega_h, g, kappa, baths_at).currents["c"]

        try:
            root = brentq(f, a.omega_c, b.omega_c, xtol=1e-14, rtol=4 * np.finfo(float).eps)
        except (ValueError, SteadyStateError):
            continue
        extra.append(_row(kind, root, omega_h, g, kappa, baths_at, "edge"))
        step = b.omega_c - a.omega_c
        side = -1.0 if a.q_c > 0 else 1.0
        for frac in APPROACH:
            w = root + side * frac * step
            extra.append(_row(kind, w, omega_h, g, kappa, baths_at, "approach"))
    return extra


def _refine_peak(kind, omega_h, g, kappa, baths_at, rows):
    """Locate the COP maximum between the neighbours of the best cooling row.

    Edge rows are left out so the bracket stops at the closest approach point.
    """
    rows = [r for r in rows if r.tag != "edge"]
    best = max(
        (i for i, r in enumerate(rows) if r.ok and r.q_c > 0 and r.cop is not None),
        key=lambda i: rows[i].cop,
        default=None,
    )
    if best is None:
        return []
    a = rows[max(best - 1, 0)].omega_c
    b = rows[min(best + 1, len(rows) - 1)].omega_c

    def neg_cop(w):
        try:
            rep = _steady(kind, w, omega_h, g, kappa, baths_at)
        except (SteadyStateError, ValueError):
            return 0.0
        return -rep.cop if rep.cooling and rep.cop is not None else 0.0

    res = minimize_scalar(neg_cop, bounds=(a, b), method="bounded", options={"xatol": 1e-10 * omega_h})
    if -res.fun <= rows[best].cop:
        return []
    return [_row(kind, float(res.x), omega_h, g, kappa, baths_at, "peak")]


def sweep_characteristic(
    kind: ModelKind | str,
    omega_h: float,
    baths: BathsLike,
    omega_c_range: tuple[float, float] | None = None,
    n_points: int = 101,
    g: float = 0.0,
    kappa: float = 0.0,
    refine_edges: bool = True,
) -> list[SweepRow]:
    """Steady-state cooling load and COP along ``omega_c``.

    Four-level instances are followed through ``omega_c <= g`` (inverted level
    order) so the curve can be traced down to its lower cooling edge. With
    ``refine_edges`` every sign change of the cooling load between grid points
    is located by Brent's method and flanked by points approaching it
    geometrically from the cooling side, and the COP maximum is refined into a
    ``peak`` row. Failed solves become rows carrying an ``error`` string.
    """
    kind = ModelKind(kind)
    lo, hi = omega_c_range if omega_c_range is not None else default_range(kind, omega_h, g)
    if not 0 < lo < hi < omega_h:
        raise ValueError(f"omega_c range must lie inside (0, omega_h={omega_h}), got ({lo}, {hi})")
    if n_points < 2:
        raise ValueError("need at least two sweep points")
    baths_at = _bath_factory(baths)
    rows = [_row(kind, float(w), omega_h, g, kappa, baths_at) for w in np.linspace(lo, hi, n_points)]
    if refine_edges:
        rows += [r for r in _refine_edges(kind, omega_h, g, kappa, baths_at, rows) if lo < r.omega_c < hi]
        rows.sort(key=lambda r: r.omega_c)
        rows += _refine_peak(kind, omega_h, g, kappa, baths_at, rows)
    rows.sort(key=lambda r: r.omega_c)
    return rows


def cooling_edges(rows: list[SweepRow]) -> list[float]:
    return [r.omega_c for r in rows if r.tag == "edge"]


def cooling_intervals(rows: list[SweepRow]) -> list[tuple[float, float]]:
    """Maximal runs of consecutive rows with positive load and a defined COP."""
    runs, start, last = [], None, None
    for r in rows:
        inside = r.ok and r.q_c > 0 and r.cop is not None
        if inside and start is None:
            start = r.omega_c
        if not inside and start is not None:
            runs.append((start, last))
            start = None
        last = r.omega_c
    if start is not None:
        runs.append((start, last))
    return runs


def max_cop(rows: list[SweepRow]) -> float:
    vals = [r.cop for r in rows if r.ok and r.cop is not None and r.q_c > 0]
    return max(vals) if vals else math.nan


def row_violations(row: SweepRow, rtol: float = 1e-10, s_atol: float = 1e-12) -> list[str]:
    """Conservation and second-law checks for one row.

    Conservation is relative to ``max |Q|`` with an absolute floor at the
    solver noise level, which matters next to cooling edges.
    """
    if not row.ok:
        return []
    out = []
    q = (row.q_c, row.q_h, row.q_w)
    scale = max(abs(x) for x in q)
    if abs(sum(q)) > rtol * scale + NOISE * row.current_scale:
        out.append(f"omega_c={row.omega_c!r}: heat currents do not sum to zero")
    if row.entropy_rate < -s_atol:
        out.append(f"omega_c={row.omega_c!r}: negative entropy production")
    if row.shares is not None and any(s < -s_atol for s in row.shares):
        out.append(f"omega_c={row.omega_c!r}: negative stage entropy share")
    return out


# ---------------------------------------------------------------------------
# entropy shares
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShareRow:
    omega_c: float
    ds_plus: float
    ds_minus: float
    ds_leak: float

    @property
    def ds_total(self) -> float:
        return self.ds_plus + self.ds_minus + self.ds_leak


def entropy_share_scan(
    omega_h: float,
    g: float,
    baths: BathsLike,
    window: tuple[float, float] | None = None,
    n_points: int = 101,
) -> list[ShareRow]:
    """Stage entropy productions of the four-level chiller around its reversible frequency.

    The default window is ``omega_c_rev -/+ 3 max(g, 0.05)``.
    """
    baths_at = _bath_factory(baths)
    if window is None:
        t = _temperatures(baths_at, omega_h / 2)
        wrev = omega_c_rev(t["w"], t["h"], t["c"], omega_h)
        half = 3 * max(g, 0.05)
        window = (max(wrev - half, g + 1e-9), min(wrev + half, omega_h - g - 1e-9))
    lo, hi = window
    rows = []
    for w in np.linspace(lo, hi, n_points):
        w = float(w)
        bd = breakdown(w, omega_h, g, baths_at(w))
        rows.append(ShareRow(w, *(bd.stage_entropy[s] for s in STAGES)))
    return rows


# ---------------------------------------------------------------------------
# optimum
# ---------------------------------------------------------------------------


class NoCoolingWindow(ValueError):
    pass


@dataclass(frozen=True)
class OptimumReport:
    """Maximum cooling load over ``omega_c`` and the COP there.

    For the four-level model ``stage_peaks`` holds the maximisers of each
    stage's own cooling load, and ``mixture`` the approximation of the COP by
    the work-weighted stage COPs at ``omega_c_star``.
    """

    kind: ModelKind
    g: float
    omega_c_star: float
    q_c_max: float
    epsilon_star: float
    bound: float
    bound_satisfied: bool
    grid_max: float
    stage_peaks: dict[str, float] | None = None
    stage_cops: dict[str, float] | None = None
    stage_weights: dict[str, float] | None = None
    mixture: float | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "g": self.g,
            "omega_c_star": self.omega_c_star,
            "q_c_max": self.q_c_max,
            "epsilon_star": self.epsilon_star,
            "bound": self.bound,
            "bound_satisfied": self.bound_satisfied,
            "grid_max": self.grid_max,
            "stage_peaks": self.stage_peaks,
            "stage_cops": self.stage_cops,
            "stage_weights": self.stage_weights,
            "mixture": self.mixture,
        }


def _maximize(f, lo, hi, n_grid, xtol):
    """Coarse grid, then golden section around the best grid point."""
    xs = np.linspace(lo, hi, n_grid)
    ys = np.array([f(float(x)) for x in xs])
    i = int(np.nanargmax(ys))
    best_x, best_y = float(xs[i]), float(ys[i])
    if 0 < i < n_grid - 1:
        res = minimize_scalar(
            lambda x: -f(x), bracket=(xs[i - 1], xs[i], xs[i + 1]), method="golden", options={"xtol": xtol}
        )
    else:
        j0, j1 = max(i - 1, 0), min(i + 1, n_grid - 1)
        res = minimize_scalar(
            lambda x: -f(x), bounds=(xs[j0], xs[j1]), method="bounded", options={"xatol": xtol * abs(xs[i])}
        )
    if -res.fun >= best_y:
        best_x, best_y = float(res.x), float(-res.fun)
    return best_x, best_y, float(np.nanmax(ys))


def three_quarter_bound(temps: Mapping[str, float]) -> float:
    return 0.75 * carnot_cop(temps["w"], temps["h"], temps["c"])


def optimize_cooling(
    kind: ModelKind | str,
    omega_h: float,
    baths: BathsLike,
    g: float = 0.0,
    kappa: float = 0.0,
    bounds: tuple[float, float] | None = None,
    n_grid: int = 64,
    xtol: float = 1e-6,
) -> OptimumReport:
    """Locate ``omega_c`` of maximum cooling load and report the COP there.

    Raises NoCoolingWindow when no grid point cools.
    """
    kind = ModelKind(kind)
    baths_at = _bath_factory(baths)
    lo, hi = bounds if bounds is not None else default_range(kind, omega_h, g)

    def qc(w):
        try:
            return _steady(kind, w, omega_h, g, kappa, baths_at).currents["c"]
        except SteadyStateError:
            return math.nan

    w_star, q_max, grid_max = _maximize(qc, lo, hi, n_grid, xtol)
    if not q_max > 0:
        raise NoCoolingWindow(f"no cooling between omega_c={lo} and {hi}")
    rep = _steady(kind, w_star, omega_h, g, kappa, baths_at)
    eps = rep.cop if rep.cop is not None else 0.0
    bound = three_quarter_bound(_temperatures(baths_at, w_star))

    peaks = cops = weights = mixture = None
    if kind is ModelKind.FOUR_LEVEL and g > 0 and w_star > g:
        peaks = {}
        for s in ("plus", "minus"):
            def stage_qc(w, s=s):
                return breakdown(w, omega_h, g, baths_at(w)).stage_currents[(s, "c")]

            peaks[s], _, _ = _maximize(stage_qc, g * (1 + 1e-6), omega_h - g * (1 + 1e-6), n_grid, xtol)
        bd = breakdown(w_star, omega_h, g, baths_at(w_star))
        q_w = rep.currents["w"]
        cops, weights = {}, {}
        for s in ("plus", "minus"):
            qw_s = bd.stage_currents[(s, "w")]
            # a stage switched off by a filter carries no work and drops out
            cops[s] = bd.stage_currents[(s, "c")] / qw_s if qw_s != 0 else None
            weights[s] = qw_s / q_w
        mixture = sum(weights[s] * cops[s] for s in cops if cops[s] is not None)

    return OptimumReport(
        kind=kind,
        g=g,
        omega_c_star=w_star,
        q_c_max=q_max,
        epsilon_star=eps,
        bound=bound,
        bound_satisfied=eps <= bound,
        grid_max=grid_max,
        stage_peaks=peaks,
        stage_cops=cops,
        stage_weights=weights,
        mixture=mixture,
    )


def bound_check(report: OptimumReport) -> tuple[bool, float]:
    """``(epsilon_star <= 3/4 eps_C, bound - epsilon_star)``."""
    margin = report.bound - report.epsilon_star
    return margin >= 0, margin


def scan_coupling(kind, omega_h, baths: BathsLike, g_values, **kw) -> list[OptimumReport]:
    """Exploratory: the optimum for several interaction strengths."""
    return [optimize_cooling(kind, omega_h, baths, g=float(g), **kw) for g in g_values]
