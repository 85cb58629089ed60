"""Fixed-step time integration with grouped, independently evaluable stages.

One step from u at time t with step h reads

    U_i  = u + c_i h phi_1(c_i hA) F(t, u) + h sum_{j<i} a_ij(hA) D_j,
    u'   = u +     h phi_1(hA)     F(t, u) + h sum_i   b_i(hA)  D_i,

with D_j = g(t + c_j h, U_j) - g(t, u). Stages are evaluated group by
group; stages inside a group read only earlier groups' D values, so they can
run concurrently. Concurrent and sequential execution perform identical
arithmetic on identical operands in identical order per stage, which makes
the two modes bitwise reproducible - the benchmark harness treats any
mismatch as a correctness bug.

The dense path assembles nothing per step beyond matrix-vector products: all
phi matrices are cached once per (A, h). The matrix-free path evaluates each
stage with a Krylov approximation of the phi combination instead.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .phi import PhiCache, build_phi_cache, phi_combo_apply_krylov
from .problems import SemilinearProblem
from .tableaus import Scheme

__all__ = [
    "DivergenceError",
    "StepContext",
    "TrajectoryResult",
    "precompute",
    "step",
    "integrate",
]


class DivergenceError(RuntimeError):
    """A stage or update produced non-finite values."""

    def __init__(self, stage: int | None = None, step_index: int | None = None,
                 t: float | None = None, h: float | None = None):
        self.stage = stage
        self.step_index = step_index
        self.t = t
        self.h = h
        where = f"stage {stage}" if stage is not None else "final update"
        at = "" if step_index is None else f" at step {step_index} (t={t}, h={h})"
        super().__init__(f"non-finite values in {where}{at}")


@dataclass(frozen=True)
class _StagePlan:
    index: int
    c: float
    phi1: np.ndarray | None
    # rows: ((m, ((j, w), ...)), ...) sorted by phi index m
    rows: tuple
    phim: dict


@dataclass(frozen=True)
class _FinalPlan:
    phi1: np.ndarray | None
    rows: tuple
    phim: dict


def _compile_rows(polys: dict, h_unused=None):
    """Group coefficient polynomials of one row/update by phi index."""
    by_m: dict[int, list] = {}
    for j in sorted(polys):
        for m, w in polys[j].terms:
            by_m.setdefault(m, []).append((j, float(w)))
    return tuple((m, tuple(by_m[m])) for m in sorted(by_m))


@dataclass
class StepContext:
    """Everything reusable across steps for one (scheme, operator, h)."""

    scheme: Scheme
    h: float
    cache: PhiCache | None
    apply_A: object
    stage_plans: dict
    final_plan: _FinalPlan
    krylov_tol: float = 1e-10

    @property
    def dense(self) -> bool:
        return self.cache is not None


def precompute(scheme: Scheme, A, h: float, *, krylov: bool = False,
               krylov_tol: float = 1e-10, workers: int | None = None) -> StepContext:
    """Build the phi cache (dense path) and the per-stage evaluation plans.

    A may be a dense matrix or, with krylov=True, any operator action; in the
    latter case no cache is built and stages use Krylov evaluations.
    """
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    matrix_free = krylov or callable(A)
    cache = None
    if not matrix_free:
        kmax = max(scheme.max_phi_index, 1)
        cache = build_phi_cache(A, h, scheme.nodes_used, kmax, workers=workers)
    apply_A = A if callable(A) else (lambda v: A @ v)

    stage_plans = {}
    for i in range(2, scheme.s + 1):
        row = {j: scheme.a[(i, j)] for j in range(2, i) if (i, j) in scheme.a}
        rows = _compile_rows(row)
        phim = {}
        phi1 = None
        if cache is not None:
            phi1 = cache.get(scheme.c[i], 1)
            phim = {m: cache.get(scheme.c[i], m) for m, _ in rows}
        stage_plans[i] = _StagePlan(index=i, c=float(scheme.c[i]), phi1=phi1,
                                    rows=rows, phim=phim)
    brows = _compile_rows(scheme.b)
    fphi1 = cache.get(Fraction(1), 1) if cache is not None else None
    fphim = {m: cache.get(Fraction(1), m) for m, _ in brows} if cache is not None else {}
    final_plan = _FinalPlan(phi1=fphi1, rows=brows, phim=fphim)
    return StepContext(scheme=scheme, h=float(h), cache=cache, apply_A=apply_A,
                       stage_plans=stage_plans, final_plan=final_plan,
                       krylov_tol=krylov_tol)


def _combo_vectors(h_eff: float, h: float, F: np.ndarray, rows, D) -> list:
    """Vectors for the Krylov combo equivalent to the cached-matrix sum."""
    p = max((m for m, _ in rows), default=1)
    vs = [np.zeros_like(F), F] + [np.zeros_like(F) for _ in range(p - 1)]
    for m, terms in rows:
        v = np.zeros_like(F)
        for j, w in terms:
            v += w * D[j]
        vs[m] = (h / h_eff**m) * v
    return vs


def _eval_stage(ctx: StepContext, problem: SemilinearProblem, t, u, F, gn, D, i):
    plan = ctx.stage_plans[i]
    h = ctx.h
    if ctx.dense:
        acc = (plan.c * h) * (plan.phi1 @ F)
        for m, terms in plan.rows:
            v = np.zeros_like(F)
            for j, w in terms:
                v += w * D[j]
            acc += h * (plan.phim[m] @ v)
        U = u + acc
    else:
        h_eff = plan.c * h
        vs = _combo_vectors(h_eff, h, F, plan.rows, D)
        U = u + phi_combo_apply_krylov(ctx.apply_A, h_eff, vs, ctx.krylov_tol)
    if not np.all(np.isfinite(U)):
        raise DivergenceError(stage=i)
    Di = problem.g(t + plan.c * h, U) - gn
    if not np.all(np.isfinite(Di)):
        raise DivergenceError(stage=i)
    return U, Di


def step(ctx: StepContext, problem: SemilinearProblem, t: float, u: np.ndarray,
         executor: ThreadPoolExecutor | None = None) -> np.ndarray:
    """One step of the scheme from (t, u); groups run in scheme order.

    With an executor the stages of each group are evaluated concurrently;
    results are identical bit for bit either way.
    """
    h = ctx.h
    u = np.asarray(u, dtype=float)
    F = problem.f(t, u)
    gn = problem.g(t, u)
    D: list = [None] * (ctx.scheme.s + 1)
    for group in ctx.scheme.groups:
        if executor is not None and len(group) > 1:
            futures = [
                executor.submit(_eval_stage, ctx, problem, t, u, F, gn, D, i)
                for i in group
            ]
            outcomes = [f.result() for f in futures]
        else:
            outcomes = [_eval_stage(ctx, problem, t, u, F, gn, D, i) for i in group]
        for i, (_, Di) in zip(group, outcomes):
            D[i] = Di
    final = ctx.final_plan
    if ctx.dense:
        acc = h * (final.phi1 @ F)
        for m, terms in final.rows:
            v = np.zeros_like(F)
            for j, w in terms:
                v += w * D[j]
            acc += h * (final.phim[m] @ v)
        u_next = u + acc
    else:
        vs = _combo_vectors(h, h, F, final.rows, D)
        u_next = u + phi_combo_apply_krylov(ctx.apply_A, h, vs, ctx.krylov_tol)
    if not np.all(np.isfinite(u_next)):
        raise DivergenceError(stage=None)
    return u_next


@dataclass
class TrajectoryResult:
    """Final state plus timing of a fixed-step run."""

    state: np.ndarray
    steps: int
    mode: str
    step_seconds: list[float]

    @property
    def total_seconds(self) -> float:
        return sum(self.step_seconds)


def _step_count(t0: float, t_end: float, h: float) -> int:
    span = t_end - t0
    if span <= 0:
        raise ValueError(f"integration span must be positive, got [{t0}, {t_end}]")
    steps = span / h
    n = round(steps)
    if n < 1 or abs(steps - n) > 1e-9 * max(1.0, abs(steps)):
        raise ValueError(f"step {h} does not divide the interval [{t0}, {t_end}]")
    return n


def integrate(scheme: Scheme, problem: SemilinearProblem, t0: float, t_end: float,
              h: float, mode: str = "sequential", ctx: StepContext | None = None,
              krylov: bool = False, krylov_tol: float = 1e-10) -> TrajectoryResult:
    """Fixed-step integration of the problem over [t0, t_end].

    mode "concurrent" evaluates each stage group with a thread pool and is
    guaranteed to reproduce the sequential trajectory exactly.
    """
    if mode not in ("sequential", "concurrent"):
        raise ValueError(f"unknown execution mode {mode!r}")
    n_steps = _step_count(t0, t_end, h)
    if ctx is None:
        operator = problem.A if (problem.A is not None and not krylov) else problem.apply_A
        ctx = precompute(scheme, operator, h, krylov=krylov, krylov_tol=krylov_tol)
    u = np.array(problem.u0, dtype=float)
    times: list[float] = []
    executor = None
    try:
        if mode == "concurrent":
            width = max((len(g) for g in scheme.groups), default=1)
            executor = ThreadPoolExecutor(max_workers=max(width, 1))
        t = t0
        for k in range(n_steps):
            tic = time.perf_counter()
            try:
                u = step(ctx, problem, t, u, executor=executor)
            except DivergenceError as err:
                raise DivergenceError(stage=err.stage, step_index=k, t=t, h=h) from None
            times.append(time.perf_counter() - tic)
            t = t0 + (k + 1) * h
    finally:
        if executor is not None:
            executor.shutdown()
    return TrajectoryResult(state=u, steps=n_steps, mode=mode, step_seconds=times)
