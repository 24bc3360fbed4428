"""Post-hoc analysis of episode logs.

Cost of transport, Hildebrand footfall diagrams, the walk/trot crossover
finder, and the scalar score used to rank spine strategies.  Everything is
pure: functions read a SimLog (or plain arrays) and return numbers or small
value types, so batch evaluation can fan out across processes freely.

Averages run over the steady-state part of an episode by default: the
command ramp plus one second of settling is discarded.  Pass ``entire=True``
to average over every logged row instead (the convention the parameter
search uses, so scores stay comparable across runs of different lengths).
"""

from dataclasses import dataclass, fields

import numpy as np

from spinequad import gait
from spinequad.lie import NearPiRotationError, log_so3, rot_z
from spinequad.model import GRAVITY, LEG_ORDER, RobotModel, SPINE_JOINTS
from spinequad.resources import data_path
from spinequad.sim import SimLog


class ZeroVelocityError(ValueError):
    """Raised by cost_of_transport when the robot is (nearly) stationary."""


class TooShortError(ValueError):
    """Raised when a log does not cover enough of the episode to analyse."""


class NoCrossingError(ValueError):
    """Raised by gait_transition when the cost curves never cross."""


class MultipleCrossingsError(ValueError):
    """Raised by gait_transition when the cost difference changes sign
    more than once; ``crossings`` holds every crossing found."""

    def __init__(self, crossings):
        self.crossings = list(crossings)
        super().__init__(f"found {len(self.crossings)} crossings: {self.crossings}")


# ---------------------------------------------------------------------------
# windows and basic averages


def steady_window(log: SimLog, settle: float = 1.0) -> slice:
    """Row slice covering the steady-state tail of an episode.

    The cmd_* columns hold the ramped commands actually sent to the
    controller, so the ramp is over at the first row where they stop
    changing; the window starts ``settle`` seconds after that.
    """
    t = log.column("t")
    cmd = log.block("cmd")
    changed = np.any(cmd != cmd[-1], axis=1)
    ramp_end = int(np.nonzero(changed)[0][-1]) + 1 if changed.any() else 0
    keep = np.nonzero(t >= t[ramp_end] + settle)[0]
    if keep.size == 0:
        raise TooShortError(
            f"log ends at t={t[-1]:.3f}s, before the steady-state window"
        )
    return slice(int(keep[0]), len(t))


def cost_of_transport(
    log: SimLog,
    include_spine: bool = True,
    *,
    mass: float | None = None,
    gravity: float = GRAVITY,
    entire: bool = False,
) -> float:
    """Dimensionless transport cost: mean electrical power / (m g v).

    ``include_spine=False`` drops the four spine joints from the power sum,
    isolating what the legs spend.  The speed is the planar base speed
    averaged over the same window as the power.
    """
    if mass is None:
        mass = RobotModel.default().total_mass
    win = slice(None) if entire else steady_window(log)
    power = log.block("power")[win]
    if not include_spine:
        power = power[:, len(SPINE_JOINTS):]
    speed = np.hypot(log.column("base_vx")[win], log.column("base_vy")[win])
    v = float(speed.mean())
    if v <= 0.01:
        raise ZeroVelocityError(f"mean speed {v:.4f} m/s, transport cost undefined")
    return float(power.sum(axis=1).mean()) / (mass * gravity * v)


# ---------------------------------------------------------------------------
# cost of transport curves and the walk/trot crossover


@dataclass
class CotCurve:
    """Transport cost against commanded speed for one (gait, strategy) pair.

    ``cot`` includes spine actuation in the power budget, ``cot_no_spine``
    leaves it out; for a locked spine the two columns are identical.
    """

    gait: str
    strategy: str
    velocities: np.ndarray
    cot: np.ndarray
    cot_no_spine: np.ndarray

    def __post_init__(self):
        self.velocities = np.asarray(self.velocities, dtype=float)
        self.cot = np.asarray(self.cot, dtype=float)
        self.cot_no_spine = np.asarray(self.cot_no_spine, dtype=float)
        if self.velocities.ndim != 1 or len(self.velocities) < 2:
            raise ValueError("need at least two velocity points")
        if not (self.cot.shape == self.cot_no_spine.shape == self.velocities.shape):
            raise ValueError("velocity and cost columns must have equal length")
        if np.any(np.diff(self.velocities) <= 0.0):
            raise ValueError("velocities must be strictly increasing")
        if np.any(self.cot <= 0.0) or np.any(self.cot_no_spine <= 0.0):
            raise ValueError("transport cost must be positive")

    def write_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write(f"# gait={self.gait} strategy={self.strategy}\n")
            f.write("velocity,cot,cot_no_spine\n")
            for v, c, cn in zip(self.velocities, self.cot, self.cot_no_spine):
                f.write(f"{float(v)!r},{float(c)!r},{float(cn)!r}\n")

    @classmethod
    def read_csv(cls, path) -> "CotCurve":
        gait_name, strategy = "unknown", "unknown"
        with open(path) as f:
            first = f.readline().strip()
        if first.startswith("#"):
            tags = dict(kv.split("=", 1) for kv in first[1:].split() if "=" in kv)
            gait_name = tags.get("gait", gait_name)
            strategy = tags.get("strategy", strategy)
        data = np.loadtxt(path, delimiter=",", skiprows=2 if first.startswith("#") else 1, ndmin=2)
        return cls(gait_name, strategy, data[:, 0], data[:, 1], data[:, 2])


def fixture_curve(name: str) -> CotCurve:
    """Load one of the transport-cost curves shipped with the package."""
    return CotCurve.read_csv(data_path(f"fixtures/{name}.csv"))


def _bisect(f, lo, hi, tol):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0.0) == (flo > 0.0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def gait_transition(walk: CotCurve, trot: CotCurve, tol: float = 1e-4) -> float:
    """Speed at which trotting becomes cheaper than walking.

    Both curves are treated as piecewise linear.  Their difference is
    scanned on the union grid inside the velocity overlap; the single sign
    change is polished by bisection to ``tol``.  More than one sign change
    raises MultipleCrossingsError carrying all of them.
    """
    lo = max(walk.velocities[0], trot.velocities[0])
    hi = min(walk.velocities[-1], trot.velocities[-1])
    if lo >= hi:
        raise NoCrossingError("curves do not overlap in velocity")

    def diff(v):
        return float(
            np.interp(v, walk.velocities, walk.cot)
            - np.interp(v, trot.velocities, trot.cot)
        )

    knots = np.unique(
        np.clip(np.concatenate([walk.velocities, trot.velocities]), lo, hi)
    )
    sign = np.sign([diff(v) for v in knots])
    nonzero = np.nonzero(sign)[0]
    if nonzero.size == 0:
        raise NoCrossingError("cost difference is identically zero in the overlap")
    crossings = []
    for a, b in zip(nonzero[:-1], nonzero[1:]):
        if sign[a] * sign[b] < 0.0:
            crossings.append(_bisect(diff, float(knots[a]), float(knots[b]), tol))
    if not crossings:
        raise NoCrossingError("cost difference never changes sign")
    if len(crossings) > 1:
        raise MultipleCrossingsError(crossings)
    return crossings[0]


# ---------------------------------------------------------------------------
# Hildebrand footfall diagrams


@dataclass
class HildebrandGrid:
    """Footfall diagram: mean stance fraction per (leg, cycle bin).

    ``values`` is (4, n_bins) in [0, 1], legs in LEG_ORDER, bins spanning
    one shared gait cycle; ``reference`` is the commanded pattern sampled
    at the same bin centres.
    """

    values: np.ndarray
    reference: np.ndarray
    n_cycles: int
    gait: str = ""

    @property
    def n_bins(self) -> int:
        return self.values.shape[1]


def hildebrand(log: SimLog, n_bins: int, schedule: gait.GaitSchedule) -> HildebrandGrid:
    """Average the logged contact flags into a footfall diagram.

    Rows are assigned to cycles and bins by the shared gait phase; partial
    head/tail cycles are dropped so every bin averages the same number of
    cycles.  Needs a uniformly sampled log whose row spacing divides the
    cycle time, with at least one row per bin.
    """
    if n_bins < 8:
        raise ValueError("footfall grids need at least 8 bins")
    t = log.column("t")
    if len(t) < 2:
        raise TooShortError("log has fewer than two rows")
    contact = log.block("contact")
    T = schedule.t_cycle
    dt_row = float(t[1] - t[0])
    rows_per_cycle = int(round(T / dt_row))
    if n_bins > rows_per_cycle:
        raise ValueError(
            f"{n_bins} bins but only {rows_per_cycle} rows per cycle"
        )
    # Nudge by a quarter row so cycle boundaries are robust to rounding in t.
    q = t / T + 0.25 * dt_row / T
    cyc = np.floor(q).astype(int)
    phi = np.clip(q - cyc, 0.0, np.nextafter(1.0, 0.0))
    counts = np.bincount(cyc - cyc.min())
    complete = np.nonzero(counts == rows_per_cycle)[0] + cyc.min()
    if len(complete) < 2:
        raise TooShortError(
            f"need at least 2 full gait cycles, log covers {len(complete)}"
        )
    keep = np.isin(cyc, complete)
    bins = np.minimum((phi[keep] * n_bins).astype(int), n_bins - 1)
    values = np.zeros((4, n_bins))
    hits = np.zeros(n_bins)
    np.add.at(hits, bins, 1.0)
    for leg in range(4):
        np.add.at(values[leg], bins, contact[keep, leg])
    values /= hits
    return HildebrandGrid(
        values=values,
        reference=gait.footfall_reference(schedule, n_bins),
        n_cycles=len(complete),
        gait=schedule.name,
    )


def footfall_consistency(grid, reference=None) -> float:
    """Mean absolute cell difference between a grid and a reference.

    0 means the measured pattern matches the commanded one bin for bin,
    1 means every cell is maximally wrong.
    """
    if isinstance(grid, HildebrandGrid):
        if reference is None:
            reference = grid.reference
        grid = grid.values
    if reference is None:
        raise ValueError("no reference grid given")
    g = np.asarray(grid, dtype=float)
    r = np.asarray(reference, dtype=float)
    if g.shape != r.shape:
        raise ValueError(f"shape mismatch: {g.shape} vs {r.shape}")
    return float(np.abs(g - r).mean())


def grid_pgm(grid, scale: int = 1) -> bytes:
    """Render a footfall grid as a binary (P5) PGM, black = full stance."""
    vals = grid.values if isinstance(grid, HildebrandGrid) else np.asarray(grid, float)
    img = np.round((1.0 - vals) * 255.0).astype(np.uint8)
    if scale > 1:
        img = np.kron(img, np.ones((scale, scale), dtype=np.uint8))
    return b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]) + img.tobytes()


def grid_svg(grid, cell: int = 12, label_pad: int = 30) -> str:
    """Footfall diagram as a standalone SVG string.

    Cells are grey-filled by stance fraction (black = down for the whole
    bin); where a reference pattern is attached, its stance bins get a red
    outline so command/response mismatches stand out.
    """
    ref = None
    if isinstance(grid, HildebrandGrid):
        ref = grid.reference
        vals = grid.values
    else:
        vals = np.asarray(grid, dtype=float)
    n_legs, n_bins = vals.shape
    w = label_pad + n_bins * cell
    h = n_legs * cell
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
    ]
    for i in range(n_legs):
        name = LEG_ORDER[i] if i < len(LEG_ORDER) else str(i)
        out.append(
            f'<text x="2" y="{i * cell + cell - 3}" font-size="{cell - 2}" '
            f'font-family="monospace">{name}</text>'
        )
        for b in range(n_bins):
            x, y = label_pad + b * cell, i * cell
            v = float(vals[i, b])
            if v > 0.0:
                out.append(
                    f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                    f'fill="black" fill-opacity="{v:.4f}"/>'
                )
            if ref is not None and ref[i, b]:
                out.append(
                    f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                    f'fill="none" stroke="red" stroke-width="0.5"/>'
                )
    out.append("</svg>")
    return "\n".join(out)


# ---------------------------------------------------------------------------
# strategy scoring


@dataclass(frozen=True)
class CostWeights:
    """Weights of the strategy score, one field per cost term.

    Defaults are the search weights for the tracking-style strategies;
    ``for_strategy`` swaps in the stiffness row, which ignores target
    error and instead pays out for spine range of motion (negative
    weight).  The two force-spread terms weight the same per-foot
    standard deviation of the force magnitude; the split is kept so
    reports can itemise both.
    """

    position: float = 50.0
    orientation: float = 50.0
    velocity: float = 50.0
    angular_velocity: float = 10.0
    force_sigma_fd: float = 4.0
    force_sigma_lo: float = 4.0
    force_mean: float = 0.1
    force_peak: float = 1.0 / 800.0
    spine_error: float = 10.0
    spine_range: float = 0.0
    power: float = 0.002

    @classmethod
    def for_strategy(cls, strategy: str) -> "CostWeights":
        if strategy == "stiffness":
            return cls(spine_error=0.0, spine_range=-2.0)
        return cls()

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _rotation_columns(log: SimLog) -> np.ndarray:
    cols = [log.column(f"base_R{i}{j}") for i in range(3) for j in range(3)]
    return np.stack(cols, axis=1).reshape(-1, 3, 3)


def _desired_track(log: SimLog, height: float):
    """Reference trajectory implied by the logged commands.

    Same convention as the controller reference: heading integrates the
    commanded turn rate from zero (episodes start facing +x), the planar
    velocity command rides the reference heading, position integrates the
    velocity from (0, 0, stand height).
    """
    t = log.column("t")
    cmd = log.block("cmd")
    dt = np.diff(t, prepend=t[0])
    psi = np.cumsum(dt * cmd[:, 2])
    c, s = np.cos(psi), np.sin(psi)
    vd = np.stack(
        [c * cmd[:, 0] - s * cmd[:, 1], s * cmd[:, 0] + c * cmd[:, 1], np.zeros_like(psi)],
        axis=1,
    )
    rd = np.array([0.0, 0.0, height]) + np.cumsum(dt[:, None] * vd, axis=0)
    wd = np.zeros_like(vd)
    wd[:, 2] = cmd[:, 2]
    return rd, psi, vd, wd


def cost_terms(
    log: SimLog,
    spine_targets=None,
    *,
    entire: bool = False,
    height: float | None = None,
) -> dict:
    """Unweighted components of the strategy score, keyed like CostWeights.

    ``spine_targets`` is an optional (rows, 4) array of desired spine
    angles aligned with the log; omitted, the target is neutral (zero).
    """
    if height is None:
        height = RobotModel.default().stand_height
    win = slice(None) if entire else steady_window(log)

    rd, psi, vd, wd = _desired_track(log, height)
    r = np.stack([log.column("base_x"), log.column("base_y"), log.column("base_z")], axis=1)
    v = np.stack([log.column("base_vx"), log.column("base_vy"), log.column("base_vz")], axis=1)
    w = np.stack([log.column("base_wx"), log.column("base_wy"), log.column("base_wz")], axis=1)
    R = _rotation_columns(log)

    rot_err = np.empty(len(psi))
    for k in range(len(psi)):
        try:
            rot_err[k] = np.linalg.norm(log_so3(R[k] @ rot_z(psi[k]).T))
        except NearPiRotationError:
            rot_err[k] = np.pi

    terms = {
        "position": float(np.linalg.norm(rd[win] - r[win], axis=1).mean()),
        "orientation": float(rot_err[win].mean()),
        "velocity": float(np.linalg.norm(vd[win] - v[win], axis=1).mean()),
        "angular_velocity": float(np.linalg.norm(wd[win] - w[win], axis=1).mean()),
    }

    sigma = mean_f = peak_f = 0.0
    for leg in LEG_ORDER:
        mag = np.linalg.norm(log.block(f"f_{leg}")[win], axis=1)
        sigma += float(np.std(mag))
        mean_f += float(mag.mean())
        peak_f += float(mag.max())
    terms["force_sigma_fd"] = sigma
    terms["force_sigma_lo"] = sigma
    terms["force_mean"] = mean_f
    terms["force_peak"] = peak_f

    theta = log.block("q")[:, : len(SPINE_JOINTS)]
    if spine_targets is None:
        targets = np.zeros_like(theta)
    else:
        targets = np.broadcast_to(np.asarray(spine_targets, dtype=float), theta.shape)
    err = np.abs(targets[win] - theta[win])
    span = theta[win].max(axis=0) - theta[win].min(axis=0)
    terms["spine_error"] = float(err.mean(axis=0).sum())
    terms["spine_range"] = float(span.sum())
    terms["power"] = float(
        log.block("power")[win][:, : len(SPINE_JOINTS)].sum(axis=1).mean()
    )
    return terms


def strategy_cost(
    log: SimLog,
    weights: CostWeights | None = None,
    spine_targets=None,
    *,
    entire: bool = False,
    height: float | None = None,
) -> float:
    """Scalar episode score, lower is better; linear in each weight."""
    if weights is None:
        weights = CostWeights()
    terms = cost_terms(log, spine_targets, entire=entire, height=height)
    return float(sum(getattr(weights, k) * v for k, v in terms.items()))
