"""Solar-curtailment program on a radial distribution feeder.

The decision variable stacks real and reactive inverter injections
x = (p, q).  A linearized branch-flow model maps injections to squared
voltage magnitudes affinely, v = M p + N q + r, where entry (j, i) of M
is twice the resistance summed over the lines shared by the paths from
the substation to bus j and to inverter i (N likewise with reactances).
The program minimizes curtailment and reactive effort subject to
per-inverter apparent-power disks, real-power box constraints and
scaled voltage-band constraints.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dynamics import DynamicsParams, make_field
from .errors import ConvergenceTimeoutError, DivergenceError, StiffnessError
from .integrate import integrate_adaptive
from .problem import (
    ConvexProgram,
    PrimalDualPoint,
    format_float,
    sample_near_reference,
    solve_reference_kkt,
)


@dataclass(frozen=True)
class FeederConfig:
    """Radial feeder description in per-unit quantities.

    ``lines`` holds (from_bus, to_bus, resistance, reactance) and must
    form a tree covering all buses from bus 0 (the substation).
    ``inverters`` holds (bus, rated apparent power).  ``v_min``/``v_max``
    are voltage-magnitude bounds; internally the model works with
    squared magnitudes, so the bounds enter squared.  ``monitored_buses``
    restricts where the voltage band is enforced (default: every
    non-substation bus).
    """

    buses: int
    lines: tuple[tuple[int, int, float, float], ...]
    inverters: tuple[tuple[int, float], ...]
    loads: np.ndarray
    v0: float = 1.0
    c_p: float = 3.0
    c_q: float = 1.0
    v_min: float = 0.95
    v_max: float = 1.05
    voltage_scale: float = 200.0
    monitored_buses: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        loads = np.asarray(self.loads, dtype=float)
        if loads.shape != (self.buses,):
            raise ValueError("loads must give one value per bus")
        object.__setattr__(self, "loads", loads)
        object.__setattr__(self, "lines", tuple(tuple(l) for l in self.lines))
        object.__setattr__(self, "inverters", tuple(tuple(v) for v in self.inverters))
        if self.monitored_buses is not None:
            object.__setattr__(self, "monitored_buses",
                               tuple(int(b) for b in self.monitored_buses))
        for _, _, r, x in self.lines:
            if r <= 0 or x <= 0:
                raise ValueError("line impedances must be positive")
        for bus, s in self.inverters:
            if not (0 < bus < self.buses):
                raise ValueError(f"inverter bus {bus} out of range")
            if s <= 0:
                raise ValueError("inverter ratings must be positive")
        self._parents()  # validates the tree

    def _parents(self) -> list[int]:
        """Parent of each bus in the tree rooted at the substation."""
        if len(self.lines) != self.buses - 1:
            raise ValueError("a radial feeder needs exactly buses-1 lines")
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.buses)]
        for idx, (a, bus_b, _, _) in enumerate(self.lines):
            if not (0 <= a < self.buses and 0 <= bus_b < self.buses):
                raise ValueError("line endpoint out of range")
            adj[a].append((bus_b, idx))
            adj[bus_b].append((a, idx))
        parent = [-1] * self.buses
        parent_line = [-1] * self.buses
        seen = [False] * self.buses
        stack = [0]
        seen[0] = True
        while stack:
            u = stack.pop()
            for w, idx in adj[u]:
                if not seen[w]:
                    seen[w] = True
                    parent[w] = u
                    parent_line[w] = idx
                    stack.append(w)
        if not all(seen):
            raise ValueError("feeder graph does not reach every bus from the root")
        self.__dict__["_parent"] = parent
        self.__dict__["_parent_line"] = parent_line
        return parent

    def path_lines(self, bus: int) -> list[int]:
        """Line indices on the path from the substation to ``bus``."""
        parent = self.__dict__["_parent"]
        parent_line = self.__dict__["_parent_line"]
        path = []
        while bus != 0:
            path.append(parent_line[bus])
            bus = parent[bus]
        return path[::-1]

    def to_json_dict(self) -> dict:
        d = {
            "buses": self.buses,
            "lines": [list(l) for l in self.lines],
            "inverters": [list(v) for v in self.inverters],
            "loads": self.loads.tolist(),
            "v0": self.v0, "c_p": self.c_p, "c_q": self.c_q,
            "v_min": self.v_min, "v_max": self.v_max,
            "voltage_scale": self.voltage_scale,
        }
        if self.monitored_buses is not None:
            d["monitored_buses"] = list(self.monitored_buses)
        return d

    @staticmethod
    def from_json_dict(d: dict) -> "FeederConfig":
        return FeederConfig(
            buses=int(d["buses"]),
            lines=tuple((int(a), int(b), float(r), float(x))
                        for a, b, r, x in d["lines"]),
            inverters=tuple((int(b), float(s)) for b, s in d["inverters"]),
            loads=np.asarray(d["loads"], dtype=float),
            v0=float(d.get("v0", 1.0)),
            c_p=float(d.get("c_p", 3.0)),
            c_q=float(d.get("c_q", 1.0)),
            v_min=float(d.get("v_min", 0.95)),
            v_max=float(d.get("v_max", 1.05)),
            voltage_scale=float(d.get("voltage_scale", 200.0)),
            monitored_buses=(tuple(int(b) for b in d["monitored_buses"])
                             if "monitored_buses" in d else None),
        )


def load_feeder(path) -> FeederConfig:
    with open(path) as fp:
        return FeederConfig.from_json_dict(json.load(fp))


# Inverter placements and ratings (per-unit apparent power).
_TABLE_BUSES = (2, 4, 5, 6, 7, 10, 13, 15, 16, 20, 21, 27,
                28, 29, 31, 32, 33, 34)
_TABLE_SMAX = (2.7, 1.35, 2.7, 1.35, 2.025, 2.025, 2.7, 2.7, 1.35,
               2.025, 2.025, 2.025, 2.7, 2.7, 1.35, 2.7, 2.025, 1.35)

# Parent of each bus (index = bus, bus 0 = substation) for the shipped
# 36-bus radial feeder.
_DEFAULT_PARENTS = (
    -1, 0, 1, 2, 3, 4, 5, 6,        # trunk 0-7
    2, 8, 9, 10,                    # branch off bus 2
    3, 12, 13, 14, 15,              # branch off bus 3
    4, 17, 18, 19, 20,              # branch off bus 4
    5, 22, 23,                      # branch off bus 5
    6, 25, 26, 27, 28,              # branch off bus 6
    7, 30, 31, 32, 33, 34,          # branch off bus 7
)


def default_feeder_config() -> FeederConfig:
    """Synthetic 36-bus radial feeder with the standard inverter table.

    Line impedances and loads are chosen so that, at high solar
    penetration, both apparent-power disks and an upper voltage bound
    are active at the optimum while the scaled constraint rows stay mild
    enough for an explicit integrator.  The voltage band is enforced at
    a monitored subset of the inverter buses; buses whose inactive
    margin at the optimum is thin are left out, which keeps the optimum
    unchanged but avoids multipliers that drain only slowly from far
    starts.
    """
    buses = 36
    lines = []
    for bus in range(1, buses):
        parent = _DEFAULT_PARENTS[bus]
        r = 0.0008 + 0.0004 * ((3 * bus) % 5) / 4.0
        lines.append((parent, bus, r, 2.0 * r))
    loads = np.zeros(buses)
    for bus in range(1, buses):
        loads[bus] = 0.46 + 0.015 * ((7 * bus) % 5)
    return FeederConfig(
        buses=buses,
        lines=tuple(lines),
        inverters=tuple(zip(_TABLE_BUSES, _TABLE_SMAX)),
        loads=loads,
        monitored_buses=(2, 4, 5, 6, 7, 10, 13, 15, 16, 20, 21, 27, 29, 31),
    )


def build_voltage_model(config: FeederConfig
                        ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Affine squared-voltage map v = M p + N q + r for non-root buses.

    Row j (bus j+1) of M holds twice the resistance shared by the paths
    to that bus and to each inverter; N uses reactances; r is the no-
    injection profile v0^2 minus twice the load-weighted path sums.
    """
    m = config.buses
    n = len(config.inverters)
    paths = [set(config.path_lines(bus)) for bus in range(m)]
    r_line = np.array([l[2] for l in config.lines])
    x_line = np.array([l[3] for l in config.lines])

    def common_r(j, w):
        shared = paths[j] & paths[w]
        return sum(r_line[i] for i in shared)

    def common_x(j, w):
        shared = paths[j] & paths[w]
        return sum(x_line[i] for i in shared)

    M = np.zeros((m - 1, n))
    N = np.zeros((m - 1, n))
    r = np.zeros(m - 1)
    for row, bus in enumerate(range(1, m)):
        for i, (inv_bus, _) in enumerate(config.inverters):
            M[row, i] = 2.0 * common_r(bus, inv_bus)
            N[row, i] = 2.0 * common_x(bus, inv_bus)
        droop = sum(common_r(bus, w) * config.loads[w] for w in range(1, m))
        r[row] = config.v0 ** 2 - 2.0 * droop
    return M, N, r


def make_power_curtailment(config: FeederConfig, pv_ratio: float) -> ConvexProgram:
    """Curtailment program at a given solar-penetration ratio.

    Available PV power is proportional to the inverter ratings and sums
    to ``pv_ratio`` times the total real load.  Constraints in order:
    apparent-power disks p_i^2 + q_i^2 <= S_i^2, boxes 0 <= p <= p_pv,
    then scaled upper and lower voltage bounds at the monitored buses.
    """
    if pv_ratio <= 0:
        raise ValueError("pv_ratio must be positive")
    n = len(config.inverters)
    if n == 0:
        raise ValueError("feeder has no inverters")
    s_max = np.array([s for _, s in config.inverters])
    total_load = float(np.sum(config.loads))
    p_pv = s_max * (pv_ratio * total_load / float(np.sum(s_max)))
    if np.any(p_pv <= 0):
        raise ValueError("available PV power must be positive")

    M, N, r = build_voltage_model(config)
    monitored = (config.monitored_buses if config.monitored_buses is not None
                 else tuple(range(1, config.buses)))
    rows = [bus - 1 for bus in monitored]
    Mv, Nv, rv = M[rows], N[rows], r[rows]
    k = len(rows)
    scale = config.voltage_scale
    v_lo, v_hi = config.v_min ** 2, config.v_max ** 2

    dim = 2 * n
    c_p, c_q = config.c_p, config.c_q
    diag_h = np.concatenate([np.full(n, 2.0 * c_p), np.full(n, 2.0 * c_q)])
    lin = np.concatenate([-2.0 * c_p * p_pv, np.zeros(n)])
    const = c_p * float(p_pv @ p_pv)

    def objective(x):
        grad = diag_h * x + lin
        return 0.5 * float(x @ (diag_h * x)) + float(lin @ x) + const, grad

    # Affine block: boxes then voltage bounds, as F x <= v.
    F_box = np.vstack([np.hstack([-np.eye(n), np.zeros((n, n))]),
                       np.hstack([np.eye(n), np.zeros((n, n))])])
    v_box = np.concatenate([np.zeros(n), p_pv])
    F_volt = np.vstack([scale * np.hstack([Mv, Nv]),
                        -scale * np.hstack([Mv, Nv])])
    v_volt = np.concatenate([scale * (v_hi - rv), scale * (rv - v_lo)])
    F = np.vstack([F_box, F_volt])
    v = np.concatenate([v_box, v_volt])
    m_aff = F.shape[0]
    m_i = n + m_aff

    def soc_constraint(i):
        def g(x):
            grad = np.zeros(dim)
            grad[i] = 2.0 * x[i]
            grad[n + i] = 2.0 * x[n + i]
            return x[i] ** 2 + x[n + i] ** 2 - s_max[i] ** 2, grad
        return g

    def affine_constraint(row, offset):
        def g(x):
            return float(row @ x) - offset, row
        return g

    inequalities = tuple(soc_constraint(i) for i in range(n)) + tuple(
        affine_constraint(F[j], v[j]) for j in range(m_aff))

    # Any feasible optimum has |(p_i, q_i)| <= S_i, so the disk gradient
    # norm on the radius-d ball is at most 2 (S_i + d).
    bounds = tuple((lambda s: (lambda d: (2.0 * (s + d), 2.0)))(s_max[i])
                   for i in range(n)) + tuple(
        (lambda norm: (lambda d: (norm, 0.0)))(float(np.linalg.norm(F[j])))
        for j in range(m_aff))

    def batch(x):
        p, q = x[:n], x[n:]
        vals = np.empty(m_i)
        vals[:n] = p ** 2 + q ** 2 - s_max ** 2
        vals[n:] = F @ x - v
        jac = np.zeros((m_i, dim))
        idx = np.arange(n)
        jac[idx, idx] = 2.0 * p
        jac[idx, n + idx] = 2.0 * q
        jac[n:] = F
        return vals, jac

    labels = ([f"disk_{i + 1}" for i in range(n)]
              + [f"p_lo_{i + 1}" for i in range(n)]
              + [f"p_hi_{i + 1}" for i in range(n)]
              + [f"v_hi_bus{monitored[j]}" for j in range(k)]
              + [f"v_lo_bus{monitored[j]}" for j in range(k)])

    return ConvexProgram(
        n=dim, m_I=m_i, m_E=0,
        objective=objective,
        inequalities=inequalities,
        eq_matrix=np.zeros((0, dim)), eq_rhs=np.zeros(0),
        mu=2.0 * min(c_p, c_q), ell=2.0 * max(c_p, c_q),
        ineq_bounds=bounds,
        ineq_batch=batch,
        name="power-curtailment",
        extras={"config": config, "p_pv": p_pv, "s_max": s_max,
                "F": F, "v": v, "H": np.diag(diag_h), "q": lin,
                "voltage_model": (Mv, Nv, rv), "labels": labels,
                "monitored": monitored},
    )


def resolve_thread_count(requested: Optional[int], n_tasks: int) -> int:
    """Worker count: explicit request wins, AUGPDGD_THREADS is a hard cap."""
    want = requested if requested is not None else min(os.cpu_count() or 1, 8)
    cap = os.environ.get("AUGPDGD_THREADS")
    if cap:
        want = min(want, int(cap))
    return max(1, min(want, n_tasks))


@dataclass
class InstanceRun:
    """One integrated instance of the curtailment experiment."""

    instance: int
    ratio: float
    times: np.ndarray
    curve: np.ndarray
    early_rate: float
    late_rate: float
    converged: bool
    status: str = "ok"


@dataclass
class ExperimentResult:
    """All instance runs plus the reference solution used to normalize."""

    ratios: tuple[float, ...]
    instances_per_ratio: int
    rho: float
    seed: int
    base_norm: float
    runs: list[InstanceRun] = field(default_factory=list)

    def runs_for(self, ratio: float) -> list[InstanceRun]:
        return [r for r in self.runs if r.ratio == ratio]

    def mean_early_rate(self, ratio: float) -> float:
        vals = [r.early_rate for r in self.runs_for(ratio)
                if np.isfinite(r.early_rate)]
        return float(np.mean(vals)) if vals else math.nan

    def mean_late_rate(self, ratio: float) -> float:
        vals = [r.late_rate for r in self.runs_for(ratio)
                if np.isfinite(r.late_rate)]
        return float(np.mean(vals)) if vals else math.nan

    def write_curves_csv(self, fp) -> None:
        fp.write("instance,ratio,t,normalized_distance\n")
        for run in self.runs:
            rtxt = format_float(run.ratio)
            for t, d in zip(run.times, run.curve):
                fp.write(f"{run.instance},{rtxt},{format_float(t)},"
                         f"{format_float(d)}\n")

    def summary_dict(self) -> dict:
        return {
            "rho": self.rho, "seed": self.seed, "base_norm": self.base_norm,
            "instances_per_ratio": self.instances_per_ratio,
            "ratios": list(self.ratios),
            "mean_early_rate": {format_float(r): self.mean_early_rate(r)
                                for r in self.ratios},
            "mean_late_rate": {format_float(r): self.mean_late_rate(r)
                               for r in self.ratios},
            "instances": [
                {"instance": run.instance, "ratio": run.ratio,
                 "early_rate": run.early_rate, "late_rate": run.late_rate,
                 "final_distance": float(run.curve[-1]),
                 "converged": run.converged, "status": run.status}
                for run in self.runs
            ],
        }


def _fit_rate(times: np.ndarray, curve: np.ndarray,
              t_lo: float, t_hi: float) -> float:
    """Decay rate from a least-squares fit of log distance over a window."""
    mask = (times >= t_lo) & (times <= t_hi) & (curve > 1e-300)
    if np.count_nonzero(mask) < 3:
        return math.nan
    slope = np.polyfit(times[mask], np.log(curve[mask]), 1)[0]
    return float(-slope)


def sample_initial_point(rng: np.random.Generator, z_star: PrimalDualPoint,
                         radius: float, max_tries: int = 100) -> PrimalDualPoint:
    """Point at the given distance from the reference in the (x, lam) block.

    Gaussian direction with the multipliers clamped at zero and the ray
    scale chosen so the clamped offset lands exactly on the target
    sphere; the equality multipliers are left at their reference values.
    """
    return sample_near_reference(rng, z_star, radius, vary_nu=False,
                                 max_tries=max_tries)


def run_experiment(prog: ConvexProgram, d0_ratios: Sequence[float],
                   instances_per_ratio: int, rho: float, seed: int,
                   z_star: Optional[PrimalDualPoint] = None,
                   t_end: float = 200.0, rel_tol: float = 1e-6,
                   abs_tol: float = 1e-9, n_samples: int = 400,
                   early_window: float = 10.0,
                   threads: Optional[int] = None,
                   reference_tol: float = 1e-7,
                   reference_max_time: float = 600.0) -> ExperimentResult:
    """Normalized-distance decay curves from random initial points.

    For each ratio, ``instances_per_ratio`` points are sampled at
    distance ratio * |(x*, lam*)| from the reference in the primal and
    inequality-multiplier coordinates, integrated, and summarized by a
    fitted early-stage rate (first ``early_window`` time units) and a
    late-stage rate (final third).  Instances that time out or diverge
    are flagged in the report rather than aborting the run.
    """
    if not d0_ratios:
        raise ValueError("need at least one distance ratio")
    if instances_per_ratio < 1:
        raise ValueError("need at least one instance per ratio")
    if z_star is None:
        z_star = solve_reference_kkt(prog, PrimalDualPoint.zeros(prog),
                                     tol=reference_tol,
                                     max_time=reference_max_time, rho=rho)
    base = np.concatenate([z_star.x, z_star.lam])
    base_norm = float(np.linalg.norm(base))
    rng = np.random.default_rng(seed)
    starts: list[tuple[float, int, PrimalDualPoint]] = []
    for ratio in d0_ratios:
        for idx in range(instances_per_ratio):
            z0 = sample_initial_point(rng, z_star, ratio * base_norm)
            starts.append((float(ratio), idx, z0))

    field_fn = make_field(prog, DynamicsParams(rho=rho))
    n, m_i, _ = z_star.dims

    def one(run_id: int, ratio: float, z0: PrimalDualPoint) -> InstanceRun:
        status = "ok"
        try:
            traj = integrate_adaptive(field_fn, z0, t_end, rel_tol=rel_tol,
                                      abs_tol=abs_tol, n_samples=n_samples)
        except (ConvergenceTimeoutError, StiffnessError) as exc:
            return InstanceRun(run_id, ratio, np.array([0.0]),
                               np.array([ratio]), math.nan, math.nan,
                               False, status=f"failed: {exc}")
        except DivergenceError as exc:
            return InstanceRun(run_id, ratio, np.array([0.0]),
                               np.array([ratio]), math.nan, math.nan,
                               False, status=f"diverged: {exc}")
        diff = traj.states[:, :n + m_i] - base
        curve = np.linalg.norm(diff, axis=1) / base_norm
        early = _fit_rate(traj.times, curve, 0.0, min(early_window, t_end / 2))
        late = _fit_rate(traj.times, curve, 2 * t_end / 3, t_end)
        converged = bool(curve[-1] < 1e-3)
        return InstanceRun(run_id, ratio, traj.times, curve, early, late,
                           converged, status)

    workers = resolve_thread_count(threads, len(starts))
    result = ExperimentResult(ratios=tuple(float(r) for r in d0_ratios),
                              instances_per_ratio=instances_per_ratio,
                              rho=rho, seed=seed, base_norm=base_norm)
    if workers == 1:
        runs = [one(i, ratio, z0) for i, (ratio, _, z0) in enumerate(starts)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(one, i, ratio, z0)
                       for i, (ratio, _, z0) in enumerate(starts)]
            runs = [f.result() for f in futures]
    result.runs = runs
    return result
