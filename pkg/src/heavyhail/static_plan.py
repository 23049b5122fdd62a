"""Static planning: revenue-optimal rates, nominal processing plan, buffer pools.

The plan fixes local activity levels at min{lambda_j*, nu_j}/lambda_j* and
solves the remaining utilization and flow-balance equations for the nonlocal
levels. Buffer pools are the connected components induced by basic activities
sharing a server; a single pool collapses the workload to one dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import EconParams, NetworkModel, incidence

TOL_BASIC = 1e-9      # levels above this are classified basic
TOL_RESIDUAL = 1e-8   # max allowed residual of the balance equations
TOL_RANK = 1e-10      # smallest singular value for a unique nonlocal solve


class PlanError(ValueError):
    """Raised when no valid nominal processing plan exists."""


@dataclass(frozen=True)
class StaticPlan:
    lambda_star: np.ndarray   # optimal static demand rates, length I
    p_star: np.ndarray        # optimal static prices, length I
    mu_star: np.ndarray       # nominal activity service rates, length J
    R: np.ndarray             # input-output matrix, I x J
    nu: np.ndarray            # buffer input rates eta * q, length I
    eta: float                # e' lambda_star
    eta_hat: float            # sqrt(n) * (eta_n - eta)
    x_star: np.ndarray        # nominal activity levels in [0, 1], length J
    basic: tuple[int, ...]    # activity indices with x*_j > 0
    pools: tuple[tuple[int, ...], ...]   # buffer pools (partition of 0..I-1)
    server_pools: tuple[tuple[int, ...], ...]
    M: np.ndarray             # L x I workload matrix

    @property
    def num_pools(self) -> int:
        return len(self.pools)

    def G(self) -> np.ndarray:
        """L x I matrix with nominal server rates per server pool."""
        L, I = self.M.shape
        G = np.zeros((L, I))
        for l, servers in enumerate(self.server_pools):
            for k in servers:
                G[l, k] = self.lambda_star[k]
        return G


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def optimal_static_rates(econ: EconParams) -> tuple[np.ndarray, np.ndarray]:
    """Revenue-maximizing demand rates and prices for linear demand.

    The per-region revenue lam*(a - lam)/b is maximized at lam = a/2, which is
    interior to [0, a] for any a > 0.
    """
    lam = econ.demand_a / 2.0
    p = econ.demand_a / (2.0 * econ.demand_b)
    if np.any(lam <= 0.0) or np.any(lam >= econ.demand_a):
        raise PlanError("optimal static rates are not interior to the demand domain")
    return lam, p


def nominal_plan(model: NetworkModel, lambda_star: np.ndarray,
                 p_star: np.ndarray | None = None) -> StaticPlan:
    """Solve for the nominal processing plan under heavy-traffic balance.

    Local levels are pinned at min{lambda_j*, nu_j}/lambda_j*; the nonlocal
    levels then must satisfy full server utilization (A x = e) and buffer flow
    balance (R x = nu) simultaneously.
    """
    I, J = model.num_regions, model.num_activities
    lambda_star = np.asarray(lambda_star, dtype=float)
    if np.any(lambda_star <= 0.0):
        raise PlanError("lambda* must be positive componentwise")
    eta = float(lambda_star.sum())
    nu = eta * model.q
    eta_hat = float(np.sqrt(model.n) * (model.eta_n - eta))

    inc = incidence(model)
    mu_star = np.array([lambda_star[s] for s, _ in model.activities])
    R = mu_star * inc.C

    x = np.zeros(J)
    x[:I] = np.minimum(lambda_star, nu) / lambda_star

    if J > I:
        coeff = np.vstack([inc.A[:, I:], R[:, I:]])
        rhs = np.concatenate([np.ones(I) - inc.A[:, :I] @ x[:I],
                              nu - R[:, :I] @ x[:I]])
        sv = np.linalg.svd(coeff, compute_uv=False)
        if sv.size < J - I or sv[min(len(sv), J - I) - 1] <= TOL_RANK:
            raise PlanError("nominal plan not unique: nonlocal balance equations are rank deficient")
        sol, *_ = np.linalg.lstsq(coeff, rhs, rcond=None)
        x[I:] = sol
    # locals alone must already balance when there is nothing else to solve

    resid = max(float(np.abs(inc.A @ x - 1.0).max()), float(np.abs(R @ x - nu).max()))
    if resid > TOL_RESIDUAL:
        raise PlanError(f"heavy traffic assumption violated: balance residual {resid:.3e}")
    if float(x.min()) < -1e-6:
        raise PlanError(f"heavy traffic assumption violated: negative activity level {x.min():.3e}")
    x[np.abs(x) < TOL_BASIC] = 0.0
    x = np.clip(x, 0.0, None)

    basic = tuple(int(j) for j in range(J) if x[j] > TOL_BASIC)
    pools, server_pools = buffer_pools(model, basic)
    plan = StaticPlan(
        lambda_star=lambda_star,
        p_star=np.asarray(p_star, dtype=float) if p_star is not None else np.full(I, np.nan),
        mu_star=mu_star,
        R=R,
        nu=nu,
        eta=eta,
        eta_hat=eta_hat,
        x_star=x,
        basic=basic,
        pools=pools,
        server_pools=server_pools,
        M=workload_matrix(pools, I),
    )
    assert abs(float(mu_star @ x) - eta) <= 1e-9 * max(1.0, eta)
    return plan


def buffer_pools(model: NetworkModel, basic: tuple[int, ...] | list[int]):
    """Partition buffers into pools: merge b(j), b(j') when basic j, j' share a server."""
    I = model.num_regions
    uf = _UnionFind(I)
    by_server: dict[int, list[int]] = {}
    for j in basic:
        by_server.setdefault(model.server_of(j), []).append(model.buffer_of(j))
    for bufs in by_server.values():
        for b in bufs[1:]:
            uf.union(bufs[0], b)
    groups: dict[int, list[int]] = {}
    for i in range(I):
        groups.setdefault(uf.find(i), []).append(i)
    pools = tuple(tuple(sorted(g)) for _, g in sorted(groups.items()))
    server_pools = []
    for pool in pools:
        members = set(pool)
        servers = sorted({model.server_of(j) for j in basic if model.buffer_of(j) in members})
        server_pools.append(tuple(servers))
    return pools, tuple(server_pools)


def workload_matrix(pools, num_regions: int) -> np.ndarray:
    """Indicator matrix M with M[l][i] = 1 iff buffer i belongs to pool l."""
    M = np.zeros((len(pools), num_regions))
    seen = set()
    for l, pool in enumerate(pools):
        for i in pool:
            if i in seen:
                raise PlanError("pools do not form a partition: duplicate buffer")
            seen.add(i)
            M[l, i] = 1.0
    if len(seen) != num_regions:
        raise PlanError("pools do not form a partition: missing buffer")
    return M


def check_crp(plan: StaticPlan) -> tuple[bool, str]:
    """Complete resource pooling holds iff there is a single buffer pool."""
    if plan.num_pools == 1:
        return True, "single buffer pool: complete resource pooling holds"
    desc = "; ".join(
        f"pool {l + 1}: buffers {{{', '.join(str(i + 1) for i in pool)}}}"
        for l, pool in enumerate(plan.pools)
    )
    return False, f"complete resource pooling fails with {plan.num_pools} pools ({desc})"


def workload_consistency(plan: StaticPlan, model: NetworkModel) -> float:
    """Max abs deviation of M R - G A, zero when the workload matrix is canonical."""
    inc = incidence(model)
    return float(np.abs(plan.M @ plan.R - plan.G() @ inc.A).max())
