"""Closed-form stability/convergence guarantees and their numerical checks.

For a mu-strongly convex, L-smooth loss that is G-Lipschitz on a ball, the
ascent-descent optimizers admit closed-form bounds on uniform stability,
optimization error, and expected excess risk. This module evaluates those
bounds and, separately, verifies the per-step inequalities behind them by
direct Monte-Carlo simulation on random quadratic instances. The two routes
are kept independent on purpose: the harnesses never call the bound
evaluators and vice versa.

Hessian spectrum estimation (finite-difference Hessian-vector products and
deflated power iteration) lives here too, since the sharpness experiments
consume it as a theory-side oracle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import RngStream, derive_stream, mix_seed
from .problems import QuadraticProblem, quadratic_make

__all__ = [
    "ConvexSpec",
    "CheckReport",
    "convex_constants",
    "envelope_spec",
    "rho_feasibility_max",
    "lr_bound",
    "check_contraction",
    "check_different_example_growth",
    "check_coercivity",
    "verify_inequalities",
    "stability_bound",
    "convergence_bound",
    "excess_risk_bound",
    "hvp",
    "top_k_eigs",
]

#: inequality margins smaller than this count as violations (absorbs rounding
#: on statements that are provably non-strict)
MARGIN_TOL = 1e-10


@dataclass
class ConvexSpec:
    """(mu, L, G) constants of a strongly convex instance on a radius-R ball."""

    mu: float
    lipschitz_smooth: float
    lipschitz_loss: float
    region_radius: float

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be > 0")
        if self.lipschitz_smooth < self.mu:
            raise ValueError("need L >= mu")
        if self.lipschitz_loss <= 0 or self.region_radius <= 0:
            raise ValueError("G and R must be > 0")

    @property
    def L(self) -> float:
        return self.lipschitz_smooth

    @property
    def G(self) -> float:
        return self.lipschitz_loss


@dataclass
class CheckReport:
    """Outcome of one Monte-Carlo inequality harness invocation."""

    harness: str
    mode: str
    trials: int
    violations: int
    worst_margin: float
    config: dict = field(default_factory=dict)

    CSV_COLUMNS = ("harness", "mode", "trials", "violations", "worst_margin", "config")

    def csv_row(self) -> list:
        return [self.harness, self.mode, self.trials, self.violations,
                repr(self.worst_margin), json.dumps(self.config, sort_keys=True)]

    def merge(self, other: "CheckReport") -> "CheckReport":
        if (other.harness, other.mode) != (self.harness, self.mode):
            raise ValueError("cannot merge reports of different harnesses")
        return CheckReport(self.harness, self.mode,
                           self.trials + other.trials,
                           self.violations + other.violations,
                           min(self.worst_margin, other.worst_margin),
                           self.config)


def convex_constants(p: QuadraticProblem, R: float) -> ConvexSpec:
    """Exact (mu, L) from the dense spectrum; G = L*R on the radius-R ball."""
    if R <= 0:
        raise ValueError("R must be > 0")
    eigs = p.eigenvalues()
    mu, L = float(eigs[0]), float(eigs[-1])
    return ConvexSpec(mu=mu, lipschitz_smooth=L, lipschitz_loss=L * R, region_radius=R)


def envelope_spec(a: ConvexSpec, b: ConvexSpec) -> ConvexSpec:
    """Constants valid for both instances simultaneously (same radius)."""
    if a.region_radius != b.region_radius:
        raise ValueError("specs must share the region radius")
    mu = min(a.mu, b.mu)
    L = max(a.lipschitz_smooth, b.lipschitz_smooth)
    return ConvexSpec(mu=mu, lipschitz_smooth=L, lipschitz_loss=L * a.region_radius,
                      region_radius=a.region_radius)


def rho_feasibility_max(spec: ConvexSpec) -> float:
    """Largest perturbation radius with a positive learning-rate budget.

    Infinite when mu = L; otherwise 4 mu^2 / (L (L - mu)^2).
    """
    mu, L = spec.mu, spec.L
    if mu == L:
        return math.inf
    return 4.0 * mu * mu / (L * (L - mu) ** 2)


def lr_bound(spec: ConvexSpec, rho: float, gamma_max: float = 1.0) -> float:
    """Largest admissible constant learning rate for the ascent-descent step.

    gamma_max = 1 gives the plain variant's budget; gamma_max < 1 (the
    renormalized variant's cap on the rescale factor) stretches it by
    1/gamma_max. A non-positive return signals the infeasible regime where no
    constant learning rate satisfies the contraction hypotheses.
    """
    if rho <= 0:
        raise ValueError("rho must be > 0")
    if not 0 < gamma_max <= 1:
        raise ValueError("gamma_max must be in (0, 1]")
    mu, L = spec.mu, spec.L
    base = 2.0 / (mu + L) - (mu + L) / (2.0 * mu * L * (mu / (rho * L * L) + 1.0))
    return base / gamma_max


# ---------------------------------------------------------------------------
# Monte-Carlo inequality harnesses on quadratic instances
# ---------------------------------------------------------------------------

def _sample_ball(stream: RngStream, n: int, dim: int, radius: float) -> np.ndarray:
    """n points uniform in the dim-ball of the given radius."""
    u = stream.normal((n, dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = radius * stream.uniform(n) ** (1.0 / dim)
    return u * r[:, None]


def _one_step_pair(H: np.ndarray, W: np.ndarray, V: np.ndarray, rho: float,
                   eta: float, mode: str, H_v: np.ndarray | None = None):
    """One noise-free ascent-descent step of both iterate clouds.

    The renormalized mode applies the realized rescale factor of the W iterate
    to both updates, matching the shared-factor coupling the per-step analysis
    assumes. H_v switches the V side to a different oracle. Returns
    (W', V', gamma_rows).
    """
    Hv = H if H_v is None else H_v
    Gw = W @ H
    Gv = V @ Hv
    Ga_w = (W + rho * Gw) @ H
    Ga_v = (V + rho * Gv) @ Hv
    if mode == "ssam":
        num = np.linalg.norm(Gw, axis=1)
        den = np.linalg.norm(Ga_w, axis=1)
        gamma = np.where(den == 0.0, 1.0, num / np.where(den == 0.0, 1.0, den))
    elif mode == "sam":
        gamma = np.ones(W.shape[0])
    else:
        raise ValueError(f"mode must be 'sam' or 'ssam', got {mode!r}")
    W1 = W - (eta * gamma)[:, None] * Ga_w
    V1 = V - (eta * gamma)[:, None] * Ga_v
    return W1, V1, gamma


def _eta_cap(spec: ConvexSpec, rho: float, mode: str) -> float:
    # on a quadratic the realized rescale factor never exceeds 1/(1 + mu*rho)
    gamma_max = 1.0 / (1.0 + spec.mu * rho) if mode == "ssam" else 1.0
    return lr_bound(spec, rho, gamma_max)


def check_contraction(p: QuadraticProblem, spec: ConvexSpec, rho: float, eta: float,
                      mode: str, trials: int, seed: int) -> CheckReport:
    """Same-oracle step contracts: ||v'-w'|| <= (1 - (1+mu rho) c eta mu L/(mu+L)) ||v-w||.

    c = 1 for the plain variant; c = realized rescale factor of the w iterate
    for the renormalized one. eta above the admissible budget is rejected
    because the contraction hypotheses would not hold.
    """
    cap = _eta_cap(spec, rho, mode)
    if eta <= 0 or eta > cap * (1 + 1e-12):
        raise ValueError(f"eta={eta} outside (0, {cap}] for mode {mode}")
    stream = derive_stream(seed, 0)
    W = _sample_ball(stream, trials, p.dim, spec.region_radius)
    V = _sample_ball(stream, trials, p.dim, spec.region_radius)
    W1, V1, gamma = _one_step_pair(p.hessian, W, V, rho, eta, mode)
    factor = 1.0 - (1.0 + spec.mu * rho) * gamma * eta * spec.mu * spec.L / (spec.mu + spec.L)
    margin = factor * np.linalg.norm(V - W, axis=1) - np.linalg.norm(V1 - W1, axis=1)
    return CheckReport(
        harness="contraction", mode=mode, trials=trials,
        violations=int(np.sum(margin < -MARGIN_TOL)),
        worst_margin=float(margin.min()),
        config={"rho": rho, "eta": eta, "mu": spec.mu, "L": spec.L,
                "R": spec.region_radius, "seed": seed},
    )


def check_different_example_growth(pA: QuadraticProblem, pB: QuadraticProblem,
                                   spec: ConvexSpec, rho: float, eta: float,
                                   mode: str, trials: int, seed: int) -> CheckReport:
    """Different-oracle step grows by at most the 2 eta c G slack.

    spec must be an envelope valid for both instances. Points are sampled in
    the shrunken ball R/(1 + rho L) so every ascent point stays inside the
    radius-R region where G bounds the gradient norm.
    """
    cap = _eta_cap(spec, rho, mode)
    if eta <= 0 or eta > cap * (1 + 1e-12):
        raise ValueError(f"eta={eta} outside (0, {cap}] for mode {mode}")
    stream = derive_stream(seed, 0)
    r_in = spec.region_radius / (1.0 + rho * spec.L)
    W = _sample_ball(stream, trials, pA.dim, r_in)
    V = _sample_ball(stream, trials, pA.dim, r_in)
    W1, V1, gamma = _one_step_pair(pA.hessian, W, V, rho, eta, mode, H_v=pB.hessian)
    factor = 1.0 - (1.0 + spec.mu * rho) * gamma * eta * spec.mu * spec.L / (spec.mu + spec.L)
    rhs = factor * np.linalg.norm(V - W, axis=1) + 2.0 * eta * gamma * spec.G
    margin = rhs - np.linalg.norm(V1 - W1, axis=1)
    return CheckReport(
        harness="different_example_growth", mode=mode, trials=trials,
        violations=int(np.sum(margin < -MARGIN_TOL)),
        worst_margin=float(margin.min()),
        config={"rho": rho, "eta": eta, "mu": spec.mu, "L": spec.L,
                "G": spec.G, "R": spec.region_radius, "seed": seed},
    )


def check_coercivity(p: QuadraticProblem, spec: ConvexSpec, trials: int,
                     seed: int) -> CheckReport:
    """<grad f(v) - grad f(w), v - w> >= mu L/(mu+L) ||v-w||^2 + ||df||^2/(mu+L)."""
    stream = derive_stream(seed, 0)
    W = _sample_ball(stream, trials, p.dim, spec.region_radius)
    V = _sample_ball(stream, trials, p.dim, spec.region_radius)
    D = V - W
    DG = D @ p.hessian
    lhs = np.einsum("bi,bi->b", DG, D)
    rhs = (spec.mu * spec.L / (spec.mu + spec.L)) * np.einsum("bi,bi->b", D, D) \
        + np.einsum("bi,bi->b", DG, DG) / (spec.mu + spec.L)
    margin = lhs - rhs
    return CheckReport(
        harness="coercivity", mode="-", trials=trials,
        violations=int(np.sum(margin < -MARGIN_TOL)),
        worst_margin=float(margin.min()),
        config={"mu": spec.mu, "L": spec.L, "R": spec.region_radius, "seed": seed},
    )


def verify_inequalities(instances: int = 100, trials: int = 100, d: int = 10,
                        delta: float = 0.01, radius: float = 1.0, seed: int = 0,
                        rho_frac: float = 0.5, eta_frac: float = 1.0) -> list[CheckReport]:
    """Run every inequality harness over a sweep of random instances.

    Each instance gets its own feasible rho (a fraction of the feasibility
    ceiling) and the largest admissible eta scaled by eta_frac. Returns one
    merged report per (harness, mode), totalling instances*trials trials each.
    """
    merged: dict[tuple, CheckReport] = {}

    def _add(rep: CheckReport):
        key = (rep.harness, rep.mode)
        merged[key] = merged[key].merge(rep) if key in merged else rep

    for i in range(instances):
        pA = quadratic_make(d, delta, mix_seed(seed, 11, i))
        pB = quadratic_make(d, delta, mix_seed(seed, 12, i))
        specA = convex_constants(pA, radius)
        pair = envelope_spec(specA, convex_constants(pB, radius))
        for mode in ("sam", "ssam"):
            rho = rho_frac * min(rho_feasibility_max(specA), 1e3)
            eta = eta_frac * _eta_cap(specA, rho, mode)
            _add(check_contraction(pA, specA, rho, eta, mode, trials,
                                   seed=mix_seed(seed, 21, i)))
            rho_p = rho_frac * min(rho_feasibility_max(pair), 1e3)
            eta_p = eta_frac * _eta_cap(pair, rho_p, mode)
            _add(check_different_example_growth(pA, pB, pair, rho_p, eta_p, mode,
                                                trials, seed=mix_seed(seed, 22, i)))
        _add(check_coercivity(pA, specA, trials, seed=mix_seed(seed, 23, i)))

    out = list(merged.values())
    for rep in out:
        rep.config = {"instances": instances, "trials_per_instance": trials,
                      "d": d, "delta": delta, "R": radius, "seed": seed,
                      "rho_frac": rho_frac, "eta_frac": eta_frac}
    return out


# ---------------------------------------------------------------------------
# closed-form bound evaluators
# ---------------------------------------------------------------------------

_KINDS = ("sgd", "sam", "ssam")


def _check_kind(kind: str, gamma_max, need_gamma: bool):
    if kind not in _KINDS:
        raise ValueError(f"kind must be one of {_KINDS}, got {kind!r}")
    if need_gamma and kind == "ssam":
        if gamma_max is None or not 0.0 < gamma_max < 1.0:
            raise ValueError("ssam needs gamma_max in (0, 1)")


def stability_bound(spec: ConvexSpec, n: int, rho: float, eta: float, T: int,
                    kind: str, gamma_max: float | None = None) -> float:
    """Uniform-stability bound on the expected generalization error after T steps.

    All three kinds share the 2 G^2 (mu+L)/(n mu L) scale; the ascent variants
    shrink it by 1/(1+mu rho) and contract faster per step, the renormalized
    one additionally caps the per-step factor at gamma_max < 1.
    """
    _check_kind(kind, gamma_max, need_gamma=True)
    if n < 1 or T < 1:
        raise ValueError("need n >= 1 and T >= 1")
    if eta < 0:
        raise ValueError("eta must be >= 0")
    mu, L, G = spec.mu, spec.L, spec.G
    x = eta * mu * L / (mu + L)
    scale = 2.0 * G * G * (mu + L) / (n * mu * L)
    if kind == "sgd":
        if eta > 2.0 / (mu + L):
            raise ValueError("eta above 2/(mu+L)")
        return scale * (1.0 - (1.0 - x) ** T)
    if rho <= 0:
        raise ValueError("rho must be > 0 for the ascent variants")
    a = 1.0 + mu * rho
    cap = lr_bound(spec, rho, gamma_max if kind == "ssam" else 1.0)
    if eta > cap * (1 + 1e-12):
        raise ValueError(f"eta={eta} above the admissible budget {cap}")
    g = gamma_max if kind == "ssam" else 1.0
    return (scale / a) * (1.0 - (1.0 - a * g * x) ** T)


def convergence_bound(spec: ConvexSpec, rho: float, eta: float, T,
                      kind: str, gamma_max: float | None = None,
                      initial_gap: float = 0.0) -> float:
    """Optimization-error bound: geometric decay of the initial gap plus a
    noise-ball residual that never vanishes at fixed rho.

    T = inf returns exactly the residual term.
    """
    if kind not in ("sam", "ssam"):
        raise ValueError("convergence bound defined for 'sam' and 'ssam'")
    _check_kind(kind, gamma_max, need_gamma=True)
    if rho <= 0 or eta <= 0:
        raise ValueError("need rho > 0 and eta > 0")
    if initial_gap < 0:
        raise ValueError("initial_gap must be >= 0")
    mu, L, G = spec.mu, spec.L, spec.G
    g = gamma_max if kind == "ssam" else None
    if kind == "sam":
        base = 1.0 - 2.0 * eta * mu * rho * (mu + L)
        resid = L * G * G * (rho * rho * L + eta) / (4.0 * mu * rho * (mu + L))
    else:
        base = 1.0 - g * eta * mu * rho * (mu + L)
        resid = L * G * G * (rho * rho * L + g * eta) / (4.0 * mu * rho * (mu + L))
    if base < 0.0 or base >= 1.0:
        raise ValueError(f"contraction base {base} outside [0, 1)")
    if T is None or math.isinf(T):
        return resid
    if T < 0:
        raise ValueError("T must be >= 0")
    return base ** T * initial_gap + resid


def excess_risk_bound(spec: ConvexSpec, n: int, rho: float, eta: float,
                      kind: str, gamma_max: float | None = None) -> float:
    """Long-run excess-risk bound: asymptotic stability + convergence residual."""
    if kind not in ("sam", "ssam"):
        raise ValueError("excess risk bound defined for 'sam' and 'ssam'")
    _check_kind(kind, gamma_max, need_gamma=True)
    if n < 1:
        raise ValueError("need n >= 1")
    if eta <= 0 or rho <= 0:
        raise ValueError("need eta > 0 and rho > 0")
    mu, L, G = spec.mu, spec.L, spec.G
    gen = 2.0 * G * G * (mu + L) / (n * mu * L * (1.0 + mu * rho))
    return gen + convergence_bound(spec, rho, eta, math.inf, kind, gamma_max)


# ---------------------------------------------------------------------------
# Hessian spectrum via finite-difference Hessian-vector products
# ---------------------------------------------------------------------------

def hvp(oracle, w: np.ndarray, v: np.ndarray, fd_step: float = 1e-5) -> np.ndarray:
    """Central-difference Hessian-vector product, exact on quadratics.

    Differences gradients along the unit direction of v and rescales by
    ||v||, so the step size is independent of the magnitude of v.
    """
    vn = float(np.linalg.norm(v))
    if vn == 0.0:
        raise ValueError("v must be nonzero")
    u = v / vn
    _, gp = oracle.loss_grad(w + fd_step * u)
    _, gm = oracle.loss_grad(w - fd_step * u)
    return (gp - gm) * (vn / (2.0 * fd_step))


def top_k_eigs(oracle, w: np.ndarray, k: int, iters: int = 500, tol: float = 1e-10,
               seed: int = 0, fd_step: float = 1e-5):
    """Top-k Hessian eigenvalues by deflated power iteration on the HVP operator.

    Each eigenpair iterates until successive Rayleigh quotients move by less
    than tol (relative) or the iteration budget runs out; non-convergence is
    flagged, the value still returned. Returns (values desc, converged flags).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    dim = w.shape[0]
    stream = derive_stream(seed, 0)
    vals: list[float] = []
    vecs: list[np.ndarray] = []
    flags: list[bool] = []

    def _apply(x):
        y = hvp(oracle, w, x, fd_step)
        for lam, u in zip(vals, vecs):
            y = y - lam * (u @ x) * u
        return y

    for _ in range(k):
        b = stream.normal(dim)
        for u in vecs:
            b -= (u @ b) * u
        b /= np.linalg.norm(b)
        lam = math.inf
        converged = False
        for _ in range(iters):
            y = _apply(b)
            for u in vecs:  # counter numerical drift back into found space
                y -= (u @ y) * u
            ny = float(np.linalg.norm(y))
            if ny == 0.0:
                lam = 0.0
                converged = True
                break
            lam_new = float(b @ y)
            b = y / ny
            if math.isfinite(lam) and abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
                lam = lam_new
                converged = True
                break
            lam = lam_new
        vals.append(lam)
        vecs.append(b)
        flags.append(converged)

    order = np.argsort(vals)[::-1]
    return np.array(vals)[order], np.array(flags)[order]
