"""SGD / SAM / SAM* update family with renormalization as a composable switch.

One step works on a flat parameter vector and an oracle exposing
``loss_grad(w)``. The ascent-then-descent variants evaluate the oracle twice;
with ``renormalize=True`` the descent gradient is rescaled so its norm equals
the norm of the gradient at the unperturbed point (factor ``gamma``), which is
the whole stabilization mechanism. Plain SGD makes a single oracle call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import RngStream

__all__ = [
    "SGD",
    "SAM",
    "SAM_STAR",
    "FAMILIES",
    "OptimizerConfig",
    "OptState",
    "StepRecord",
    "DivergenceError",
    "DegenerateGradientError",
    "ascent_point",
    "renorm_factor",
    "step",
]

SGD = "sgd"
SAM = "sam"
SAM_STAR = "sam_star"
FAMILIES = (SGD, SAM, SAM_STAR)


class DivergenceError(RuntimeError):
    """Non-finite loss or gradient encountered; carries the failing step."""

    def __init__(self, t: int, what: str = "loss/gradient"):
        super().__init__(f"non-finite {what} at step {t}")
        self.t = t


class DegenerateGradientError(ValueError):
    """Normalized ascent direction undefined because the gradient is zero."""


@dataclass
class OptimizerConfig:
    family: str
    eta: float
    rho: float = 0.0
    renormalize: bool = False
    momentum: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}, expected one of {FAMILIES}")
        if self.eta <= 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.rho < 0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")

    def label(self) -> str:
        """Human-facing optimizer name used in tables and plots."""
        if self.family == SGD:
            return "sgd"
        if self.family == SAM and self.renormalize:
            return "ssam"
        return self.family + ("_renorm" if self.renormalize else "")

    def ignored_fields(self) -> tuple:
        """Config fields that have no effect for this family (echoed in logs)."""
        if self.family == SGD:
            return ("rho", "renormalize")
        return ()


@dataclass
class OptState:
    """Mutable per-run state: momentum buffer and step counter."""

    buffer: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, dim: int) -> "OptState":
        return cls(buffer=np.zeros(dim), t=0)


@dataclass
class StepRecord:
    """Per-step scalars; gamma is recorded whether or not it was applied."""

    t: int
    loss: float
    grad_norm: float
    asc_grad_norm: float
    gamma: float
    step_norm: float
    flagged: bool = False


def ascent_point(w: np.ndarray, g: np.ndarray, rho: float, family: str) -> np.ndarray:
    """Perturbed point whose gradient drives the descent step.

    sam ascends along the raw gradient (w + rho*g), sam_star along the
    normalized one (w + rho*g/||g||), sgd stays put. rho = 0 is a no-op for
    every family.
    """
    if rho < 0:
        raise ValueError(f"rho must be >= 0, got {rho}")
    if family == SGD or rho == 0.0:
        return w.copy()
    if family == SAM:
        return w + rho * g
    if family == SAM_STAR:
        gn = float(np.linalg.norm(g))
        if gn == 0.0:
            raise DegenerateGradientError("zero gradient: normalized ascent undefined")
        return w + (rho / gn) * g
    raise ValueError(f"unknown family {family!r}")


def renorm_factor(g: np.ndarray, g_asc: np.ndarray) -> float:
    """||g|| / ||g_asc||, with the degenerate zero-denominator cases pinned to 1.

    A zero ascent gradient cannot be meaningfully rescaled, so the factor
    defaults to 1 there; ``step`` flags that record.
    """
    gn = float(np.linalg.norm(g))
    an = float(np.linalg.norm(g_asc))
    if an == 0.0:
        return 1.0
    return gn / an


def step(cfg: OptimizerConfig, state: OptState, oracle, w: np.ndarray,
         noise_std: float = 0.0, rng: RngStream | None = None):
    """Advance one iterate: returns (w_next, StepRecord).

    Gradient noise (modeling mini-batch sampling) is drawn independently for
    the ascent and descent oracle calls, with the same std. Renormalization is
    applied to the descent gradient before weight decay and momentum, so the
    base-optimizer machinery sees the rescaled gradient. Raises
    DivergenceError as soon as a non-finite loss, gradient, or iterate shows
    up.
    """
    if noise_std > 0 and rng is None:
        raise ValueError("noise_std > 0 requires an RngStream")
    t = state.t
    loss, g = oracle.loss_grad(w)
    if noise_std > 0:
        g = g + noise_std * rng.normal(w.shape[0])
    if not (np.isfinite(loss) and np.all(np.isfinite(g))):
        raise DivergenceError(t)

    flagged = False
    if cfg.family == SGD:
        g_asc = g
        gamma = 1.0
        effective = g
    else:
        try:
            w_asc = ascent_point(w, g, cfg.rho, cfg.family)
        except DegenerateGradientError:
            w_asc = w.copy()
            flagged = True
        _, g_asc = oracle.loss_grad(w_asc)
        if noise_std > 0:
            g_asc = g_asc + noise_std * rng.normal(w.shape[0])
        if not np.all(np.isfinite(g_asc)):
            raise DivergenceError(t, "ascent gradient")
        gamma = renorm_factor(g, g_asc)
        if float(np.linalg.norm(g_asc)) == 0.0 and float(np.linalg.norm(g)) != 0.0:
            flagged = True
        effective = gamma * g_asc if cfg.renormalize else g_asc

    if cfg.weight_decay > 0:
        effective = effective + cfg.weight_decay * w
    if cfg.momentum > 0:
        state.buffer = cfg.momentum * state.buffer + effective
    else:
        state.buffer = effective
    w_next = w - cfg.eta * state.buffer
    if not np.all(np.isfinite(w_next)):
        raise DivergenceError(t, "iterate")

    record = StepRecord(
        t=t,
        loss=float(loss),
        grad_norm=float(np.linalg.norm(g)),
        asc_grad_norm=float(np.linalg.norm(g_asc)),
        gamma=float(gamma),
        step_norm=float(np.linalg.norm(w_next - w)),
        flagged=flagged,
    )
    state.t += 1
    return w_next, record
