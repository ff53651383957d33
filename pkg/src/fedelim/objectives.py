"""Synthetic objective suite with per-client shifts and bounded noise.

Five named benchmark objectives are normalized so their values lie in [0, 1]
with a maximum of 1 at the certified optimizer.  A suite holds M shifted
copies ``f_m(x) = base(clip(x - s_m))`` plus their average, a symmetric
bounded noise model, and brute-force optimum certificates computed by the
grid / random-search oracle below.  The near-optimality profiler counts
grid cells whose center clears a value threshold, a diagnostic proxy for
covering numbers of near-optimal sets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .partition import BoxDomain
from .seeding import PURPOSE_ORACLE, PURPOSE_SHIFTS, substream

ORIENT_VALUE = "value"  # f = raw / normalization_max  (raw is a reward surface)
ORIENT_COST = "cost"    # f = 1 - raw / normalization_max  (raw is a loss surface)

_PROFILE_CELL_LIMIT = 50_000_000


class OracleFailure(RuntimeError):
    """The optimum search exhausted its budget without converging."""


# ---------------------------------------------------------------------------
# Raw closed forms (batched: X has shape (n, d), result shape (n,))
# ---------------------------------------------------------------------------

def _garland_raw(X: np.ndarray) -> np.ndarray:
    x = X[:, 0]
    return 4.0 * x * (1.0 - x) * (0.75 + 0.25 * (1.0 - np.sqrt(np.abs(np.sin(60.0 * x)))))


def _doublesine_raw(X: np.ndarray) -> np.ndarray:
    x = X[:, 0]
    return 0.5 * (np.sin(13.0 * x) * np.sin(27.0 * x) + 1.0)


def _himmelblau_raw(X: np.ndarray) -> np.ndarray:
    x, y = X[:, 0], X[:, 1]
    return (x * x + y - 11.0) ** 2 + (x + y * y - 7.0) ** 2


def _rastrigin_raw(X: np.ndarray) -> np.ndarray:
    d = X.shape[1]
    return 10.0 * d + (X * X - 10.0 * np.cos(2.0 * math.pi * X)).sum(axis=1)


def _ackley_raw(X: np.ndarray) -> np.ndarray:
    quad = np.sqrt((X * X).mean(axis=1))
    cosm = np.cos(2.0 * math.pi * X).mean(axis=1)
    return -20.0 * np.exp(-0.2 * quad) - np.exp(cosm) + 20.0 + math.e


_CATALOG = {
    "garland": (_garland_raw, ORIENT_VALUE, ([0.0], [1.0]), 1),
    "doublesine": (_doublesine_raw, ORIENT_VALUE, ([0.0], [1.0]), 1),
    "himmelblau": (_himmelblau_raw, ORIENT_COST, ([-5.0, -5.0], [5.0, 5.0]), 2),
    "rastrigin": (_rastrigin_raw, ORIENT_COST, ([-1.0] * 10, [1.0] * 10), None),
    "ackley": (_ackley_raw, ORIENT_COST, ([-1.0, -1.0], [1.0, 1.0]), None),
}

OBJECTIVE_NAMES = tuple(sorted(_CATALOG))


# ---------------------------------------------------------------------------
# Optimum oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleBudget:
    """Resolution budget for the optimum search."""

    grid_points: int = 4096        # per dimension, exhaustive grid (dim <= 2)
    random_samples: int = 1_000_000  # uniform probes (dim > 2)
    zoom_points: int = 65          # per dimension per refinement round
    zoom_rounds: int = 3           # minimum refinement rounds
    max_zoom_rounds: int = 48
    shrink: float = 10.0
    top_candidates: int = 16
    tol: float = 1e-9


@dataclass
class OracleResult:
    """Certified optimum: best probed point, its value and search metadata."""

    x: np.ndarray
    value: float
    probes: int
    rounds: int
    method: str
    converged: bool


def _chunked_eval(fn, X, chunk=1_000_000):
    if len(X) <= chunk:
        return fn(X)
    parts = [fn(X[i:i + chunk]) for i in range(0, len(X), chunk)]
    return np.concatenate(parts)


def _top_separated(points: np.ndarray, values: np.ndarray, count: int, min_sep: np.ndarray):
    """Greedily keep the highest-value points pairwise separated per dimension."""
    order = np.argsort(values)[::-1]
    kept: list[int] = []
    for idx in order:
        p = points[idx]
        if all(np.any(np.abs(p - points[j]) > min_sep) for j in kept):
            kept.append(idx)
        if len(kept) >= count:
            break
    if not kept:
        kept = [order[0]]
    return [(points[i].copy(), float(values[i])) for i in kept]


def _zoom_refine(fn, domain, x0, v0, half_width, budget):
    """Repeated local grid zoom around an incumbent, shrinking each round.

    Returns (x, value, probes, rounds, converged); convergence means the
    incumbent value moved by at most ``budget.tol`` in the last round after
    the mandatory minimum number of rounds.
    """
    x, v = np.array(x0, dtype=float), float(v0)
    w = np.array(half_width, dtype=float)
    probes = 0
    rounds = 0
    quiet = 0  # consecutive sub-tolerance rounds; one alone can be a grid
    converged = False  # alignment artifact near a cusp, two are conclusive
    while rounds < budget.max_zoom_rounds:
        axes = [
            np.linspace(max(domain.lower[j], x[j] - w[j]),
                        min(domain.upper[j], x[j] + w[j]),
                        budget.zoom_points)
            for j in range(domain.dim)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        vals = fn(pts)
        probes += len(pts)
        k = int(np.argmax(vals))
        improvement = float(vals[k]) - v
        if improvement > 0:
            x, v = pts[k].copy(), float(vals[k])
        w /= budget.shrink
        rounds += 1
        quiet = quiet + 1 if abs(improvement) <= budget.tol else 0
        if rounds >= budget.zoom_rounds and quiet >= 2:
            converged = True
            break
    return x, v, probes, rounds, converged


def _coordinate_refine(fn, domain, x0, v0, budget):
    """Cyclic per-dimension line searches for dim > 2 incumbents.

    The first sweep scans each full coordinate range (so a random-search
    incumbent can escape a wrong basin); later sweeps zoom in around the
    incumbent with the usual shrink factor.  Exact for separable surfaces.
    """
    x, v = np.array(x0, dtype=float), float(v0)
    w = domain.widths / 2.0
    probes = 0
    sweeps = 0
    quiet = 0
    converged = False
    while sweeps < budget.max_zoom_rounds:
        start = v
        for j in range(domain.dim):
            grid = np.linspace(max(domain.lower[j], x[j] - w[j]),
                               min(domain.upper[j], x[j] + w[j]),
                               budget.zoom_points)
            rows = np.tile(x, (len(grid), 1))
            rows[:, j] = grid
            vals = fn(rows)
            probes += len(rows)
            k = int(np.argmax(vals))
            if vals[k] > v:
                x, v = rows[k].copy(), float(vals[k])
        w /= budget.shrink
        sweeps += 1
        quiet = quiet + 1 if v - start <= budget.tol else 0
        if sweeps >= budget.zoom_rounds and quiet >= 2:
            converged = True
            break
    return x, v, probes, sweeps, converged


def oracle_optimum(
    fn: Callable[[np.ndarray], np.ndarray],
    domain: BoxDomain,
    budget: OracleBudget | None = None,
    rng: np.random.Generator | None = None,
    hints: Sequence[np.ndarray] = (),
) -> OracleResult:
    """Certified maximum of a batched objective over a box domain.

    Dimensions up to 2 get an exhaustive uniform grid (endpoints included)
    with local zoom refinement around the top candidates; higher dimensions
    get uniform random search plus coordinate-descent refinement.  The
    returned value is the maximum over every probed point, so the
    certificate dominates all probes by construction.  Raises
    ``OracleFailure`` when the incumbent has not converged to ``budget.tol``
    within the round budget.
    """
    budget = budget or OracleBudget()
    d = domain.dim
    probes = 0

    hint_points = [np.atleast_1d(np.asarray(h, dtype=float)) for h in hints]
    hint_points = [h for h in hint_points if domain.contains(h, atol=0.0)]

    if d <= 2:
        axes = [np.linspace(domain.lower[j], domain.upper[j], budget.grid_points) for j in range(d)]
        spacing = domain.widths / (budget.grid_points - 1)
        if d == 1:
            pts = axes[0][:, None]
            vals = _chunked_eval(fn, pts)
            probes += len(pts)
            candidates = _top_separated(pts, vals, budget.top_candidates, 2 * spacing)
        else:
            best_rows: list[np.ndarray] = []
            best_vals: list[np.ndarray] = []
            chunk = max(1, 2_000_000 // budget.grid_points)
            ys = axes[1]
            for i0 in range(0, budget.grid_points, chunk):
                xs = axes[0][i0:i0 + chunk]
                mx, my = np.meshgrid(xs, ys, indexing="ij")
                pts = np.stack([mx.ravel(), my.ravel()], axis=1)
                vals = fn(pts)
                probes += len(pts)
                keep = np.argsort(vals)[-4 * budget.top_candidates:]
                best_rows.append(pts[keep])
                best_vals.append(vals[keep])
            pts = np.concatenate(best_rows)
            vals = np.concatenate(best_vals)
            candidates = _top_separated(pts, vals, budget.top_candidates, 2 * spacing)
        for h in hint_points:
            hv = float(fn(h[None, :])[0])
            probes += 1
            candidates.append((h, hv))
        method = "grid-zoom"
        refine = lambda x0, v0: _zoom_refine(fn, domain, x0, v0, 2 * spacing, budget)
    else:
        if rng is None:
            rng = np.random.default_rng(0)
        n = budget.random_samples
        best_rows, best_vals = [], []
        chunk = 250_000
        for i0 in range(0, n, chunk):
            m = min(chunk, n - i0)
            pts = rng.uniform(domain.lower, domain.upper, size=(m, d))
            vals = fn(pts)
            probes += m
            keep = np.argsort(vals)[-4 * budget.top_candidates:]
            best_rows.append(pts[keep])
            best_vals.append(vals[keep])
        pts = np.concatenate(best_rows)
        vals = np.concatenate(best_vals)
        candidates = _top_separated(pts, vals, budget.top_candidates, domain.widths / 16)
        for h in hint_points:
            hv = float(fn(h[None, :])[0])
            probes += 1
            candidates.append((h, hv))
        method = "random-zoom"
        refine = lambda x0, v0: _coordinate_refine(fn, domain, x0, v0, budget)

    best_x, best_v, best_converged, rounds_total = None, -math.inf, False, 0
    for x0, v0 in candidates:
        x, v, p, r, ok = refine(x0, v0)
        probes += p
        rounds_total += r
        if v > best_v:
            best_x, best_v, best_converged = x, v, ok
    if not best_converged:
        raise OracleFailure(
            f"optimum search did not converge to {budget.tol:g} within "
            f"{budget.max_zoom_rounds} refinement rounds"
        )
    return OracleResult(x=best_x, value=best_v, probes=probes, rounds=rounds_total,
                        method=method, converged=True)


# ---------------------------------------------------------------------------
# Base objectives
# ---------------------------------------------------------------------------

@dataclass
class BaseObjective:
    """A normalized benchmark surface on a box domain.

    ``normalization_max`` is the grid-certified extreme of the raw form;
    value-oriented surfaces map to ``raw / max`` and cost-oriented ones to
    ``1 - raw / max``, so values land in [0, 1] with the peak at 1.
    ``known_optimum`` is the analytically known argmax of the normalized
    form where one exists (used for translation shortcuts on shifted copies).
    """

    name: str
    domain: BoxDomain
    normalization_max: float
    orientation: str
    raw_fn: Callable[[np.ndarray], np.ndarray]
    known_optimum: np.ndarray | None = None

    def evaluate_batch(self, X: np.ndarray) -> np.ndarray:
        raw = self.raw_fn(np.atleast_2d(np.asarray(X, dtype=float)))
        if self.orientation == ORIENT_VALUE:
            return raw / self.normalization_max
        return 1.0 - raw / self.normalization_max

    def evaluate(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not self.domain.contains(x, atol=1e-12):
            raise ValueError(f"point {x} lies outside the {self.name} domain")
        return float(self.evaluate_batch(x[None, :])[0])


def eval_base(obj: BaseObjective, x) -> float:
    """Normalized objective value at an in-domain point."""
    return obj.evaluate(x)


_BASE_CACHE: dict[tuple, BaseObjective] = {}


def make_base(name: str, domain: BoxDomain | None = None,
              budget: OracleBudget | None = None) -> BaseObjective:
    """Build a named objective, certifying its normalization constant.

    The raw extreme is certified by the grid oracle (per dimension for the
    separable rastrigin sum, jointly otherwise).  Results for the default
    budget are cached per (name, domain).
    """
    if name not in _CATALOG:
        raise ValueError(f"unknown objective {name!r}; expected one of {OBJECTIVE_NAMES}")
    raw_fn, orientation, (dlo, dup), rigid_dim = _CATALOG[name]
    domain = domain or BoxDomain(dlo, dup)
    if rigid_dim is not None and domain.dim != rigid_dim:
        raise ValueError(f"{name} is defined on a {rigid_dim}-dimensional domain")
    key = (name, domain.bounds_key())
    if budget is None and key in _BASE_CACHE:
        return _BASE_CACHE[key]
    cert_budget = budget or OracleBudget()

    if name == "rastrigin":
        # 10*d + sum_j g(x_j) is separable: certify max(g) one dimension at a time.
        d = domain.dim
        total = 10.0 * d
        for j in range(d):
            line = BoxDomain([domain.lower[j]], [domain.upper[j]])
            g = lambda X: X[:, 0] ** 2 - 10.0 * np.cos(2.0 * math.pi * X[:, 0])
            total += oracle_optimum(g, line, cert_budget).value
        norm_max = total
        known = np.zeros(d) if domain.contains(np.zeros(d)) else None
    else:
        res = oracle_optimum(raw_fn, domain, cert_budget)
        norm_max = res.value
        if orientation == ORIENT_VALUE:
            known = res.x
        elif name == "himmelblau":
            known = np.array([3.0, 2.0]) if domain.contains(np.array([3.0, 2.0])) else None
        else:  # ackley: raw minimum 0 at the origin
            known = np.zeros(domain.dim) if domain.contains(np.zeros(domain.dim)) else None

    obj = BaseObjective(name=name, domain=domain, normalization_max=norm_max,
                        orientation=orientation, raw_fn=raw_fn, known_optimum=known)
    if budget is None:
        _BASE_CACHE[key] = obj
    return obj


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean noise uniform on [-halfwidth, +halfwidth]."""

    halfwidth: float
    kind: str = "uniform-symmetric"

    def __post_init__(self):
        if self.halfwidth < 0:
            raise ValueError("noise halfwidth must be nonnegative")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.halfwidth == 0.0:
            return np.zeros(n)
        return rng.uniform(-self.halfwidth, self.halfwidth, size=n)


@dataclass
class OptimumCertificate:
    """Best point found for one objective, with search metadata."""

    x: np.ndarray
    value: float
    method: str
    probes: int = 0
    rounds: int = 0


class ObjectiveSuite:
    """M shifted local objectives, their average, noise, and certificates.

    Local objective m evaluates the base at ``clip(x - s_m)`` so shifted
    copies stay defined and bounded on the original domain; the global
    objective is the arithmetic mean of the locals, accumulated in client
    order so scalar and batch paths round identically.
    """

    def __init__(self, base: BaseObjective, shifts: np.ndarray, noise: NoiseModel,
                 shift_std: float, seed: int,
                 local_optima: list[OptimumCertificate],
                 global_optimum: OptimumCertificate):
        self.base = base
        self.shifts = np.asarray(shifts, dtype=float)
        self.noise = noise
        self.shift_std = float(shift_std)
        self.seed = int(seed)
        self.local_optima = local_optima
        self.global_optimum = global_optimum
        if self.shifts.ndim != 2 or self.shifts.shape[1] != base.domain.dim:
            raise ValueError("shifts must have shape (clients, dim)")
        if len(local_optima) != self.shifts.shape[0]:
            raise ValueError("one optimum certificate is required per client")

    @property
    def clients(self) -> int:
        return int(self.shifts.shape[0])

    @property
    def domain(self) -> BoxDomain:
        return self.base.domain

    def _check_client(self, m: int) -> None:
        if not 1 <= m <= self.clients:
            raise ValueError(f"client index {m} out of range 1..{self.clients}")

    def eval_local_batch(self, m: int, X: np.ndarray) -> np.ndarray:
        self._check_client(m)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.base.evaluate_batch(self.domain.clip(X - self.shifts[m - 1]))

    def eval_local(self, m: int, x) -> float:
        self._check_client(m)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not self.domain.contains(x, atol=1e-12):
            raise ValueError("evaluation point lies outside the domain")
        return float(self.eval_local_batch(m, x[None, :])[0])

    def eval_global_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        acc = np.zeros(len(X))
        for m in range(1, self.clients + 1):
            acc += self.eval_local_batch(m, X)
        return acc / self.clients

    def eval_global(self, x) -> float:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        acc = 0.0
        for m in range(1, self.clients + 1):
            acc += self.eval_local(m, x)
        return acc / self.clients

    def sample(self, m: int, x, rng: np.random.Generator) -> float:
        """One noisy reward: f_m(x) plus bounded uniform noise, unclipped."""
        return self.eval_local(m, x) + float(self.noise.draw(rng, 1)[0])

    def local_star(self, m: int) -> float:
        self._check_client(m)
        return self.local_optima[m - 1].value

    def global_star(self) -> float:
        return self.global_optimum.value


def _certify_shifted(base: BaseObjective, domain: BoxDomain, shift: np.ndarray,
                     fn, budget: OracleBudget, rng) -> OptimumCertificate:
    """Optimum certificate for one shifted local objective.

    When the base optimum is known and its shifted image stays inside the
    domain, translation preserves the maximum exactly (the clip is the
    identity there) and the value 1 is certified without any search.
    """
    if base.known_optimum is not None:
        cand = base.known_optimum + shift
        if domain.contains(cand, atol=0.0):
            val = float(fn(cand[None, :])[0])
            if val >= 1.0:
                return OptimumCertificate(x=cand, value=val, method="shift-translation", probes=1)
    if domain.dim <= 2:
        res = oracle_optimum(fn, domain, budget)
    else:
        hints = []
        if base.known_optimum is not None:
            hints.append(base.known_optimum + shift)
        res = oracle_optimum(fn, domain, budget, rng=rng, hints=hints)
    return OptimumCertificate(x=res.x, value=res.value, method=res.method,
                              probes=res.probes, rounds=res.rounds)


def make_suite(base: BaseObjective, clients: int, shift_std: float,
               noise_halfwidth: float, seed: int,
               budget: OracleBudget | None = None) -> ObjectiveSuite:
    """Draw per-client shifts and certify every optimum.

    Shifts are N(0, shift_std^2) per client per dimension, drawn from the
    dedicated substream of the master seed.  Certificates come from the
    grid oracle for dimensions up to 2 and from the translation shortcut
    (falling back to seeded random search) above that.
    """
    if clients < 1:
        raise ValueError("need at least one client")
    if shift_std < 0:
        raise ValueError("shift_std must be nonnegative")
    budget = budget or OracleBudget()
    domain = base.domain
    rng_shift = substream(seed, PURPOSE_SHIFTS)
    if shift_std == 0.0:
        shifts = np.zeros((clients, domain.dim))
    else:
        shifts = rng_shift.normal(0.0, shift_std, size=(clients, domain.dim))

    local_optima = []
    for m in range(1, clients + 1):
        s = shifts[m - 1]
        fn = lambda X, s=s: base.evaluate_batch(domain.clip(np.atleast_2d(X) - s))
        cert = _certify_shifted(base, domain, s, fn, budget,
                                substream(seed, PURPOSE_ORACLE, m))
        local_optima.append(cert)

    def global_fn(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        acc = np.zeros(len(X))
        for j in range(clients):
            acc += base.evaluate_batch(domain.clip(X - shifts[j]))
        return acc / clients

    if clients == 1:
        # the average of one client is that client
        global_cert = local_optima[0]
    else:
        if domain.dim <= 2:
            gres = oracle_optimum(global_fn, domain, budget)
        else:
            hints = []
            if base.known_optimum is not None:
                hints = [domain.clip(base.known_optimum + shifts.mean(axis=0))]
            gres = oracle_optimum(global_fn, domain, budget,
                                  rng=substream(seed, PURPOSE_ORACLE, 0), hints=hints)
        global_cert = OptimumCertificate(x=gres.x, value=gres.value, method=gres.method,
                                         probes=gres.probes, rounds=gres.rounds)

    return ObjectiveSuite(base=base, shifts=shifts,
                          noise=NoiseModel(halfwidth=noise_halfwidth),
                          shift_std=shift_std, seed=seed,
                          local_optima=local_optima, global_optimum=global_cert)


# ---------------------------------------------------------------------------
# Near-optimality profiling
# ---------------------------------------------------------------------------

def _profile_grid(domain: BoxDomain, grid_step: float):
    counts = [max(1, math.ceil(w / grid_step - 1e-12)) for w in domain.widths]
    total = 1
    for n in counts:
        total *= n
    if total > _PROFILE_CELL_LIMIT:
        raise ValueError(f"profile grid of {total} cells exceeds the {_PROFILE_CELL_LIMIT} cap")
    return counts, total


def _profile_centers(domain: BoxDomain, counts, flat_idx):
    coords = np.unravel_index(flat_idx, counts)
    X = np.empty((len(flat_idx), domain.dim))
    for j in range(domain.dim):
        cw = domain.widths[j] / counts[j]
        X[:, j] = domain.lower[j] + (coords[j] + 0.5) * cw
    return X


def near_optimality_profile(fn: Callable[[np.ndarray], np.ndarray], domain: BoxDomain,
                            f_star: float, eps: float, grid_step: float) -> int:
    """Number of grid cells whose center value reaches ``f_star - eps``.

    The grid uses ceil(width / grid_step) equal cells per dimension; the
    count is a proxy for the covering number of the eps-optimal set.
    """
    if eps <= 0 or grid_step <= 0:
        raise ValueError("eps and grid_step must be positive")
    counts, total = _profile_grid(domain, grid_step)
    threshold = f_star - eps
    hits = 0
    chunk = 1_000_000
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        vals = fn(_profile_centers(domain, counts, idx))
        hits += int((vals >= threshold).sum())
    return hits


def optimality_difference_count(fn_local, local_star: float, fn_global, global_star: float,
                                domain: BoxDomain, eps_local: float, eps_global: float,
                                grid_step: float) -> int:
    """Cells near-optimal for the local objective but not for the global one.

    Evaluates both objectives on the same center grid and counts centers with
    ``f_m >= f_m* - eps_local`` that fail ``fbar >= fbar* - eps_global``.
    """
    if eps_local <= 0 or eps_global <= 0 or grid_step <= 0:
        raise ValueError("tolerances and grid_step must be positive")
    counts, total = _profile_grid(domain, grid_step)
    hits = 0
    chunk = 1_000_000
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        X = _profile_centers(domain, counts, idx)
        local_ok = fn_local(X) >= local_star - eps_local
        global_ok = fn_global(X) >= global_star - eps_global
        hits += int((local_ok & ~global_ok).sum())
    return hits


def profile_ladder(fn, domain: BoxDomain, f_star: float, nu1: float, rho: float,
                   depths=range(7)) -> list[tuple[int, float, float, int]]:
    """Near-optimality counts along the ladder eps=6*nu1*rho^h, step=rho^h."""
    rows = []
    for h in depths:
        eps = 6.0 * nu1 * rho ** h
        step = rho ** h
        rows.append((h, eps, step, near_optimality_profile(fn, domain, f_star, eps, step)))
    return rows
