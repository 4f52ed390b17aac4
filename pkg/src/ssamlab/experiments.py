"""Experiment drivers: deterministic CSV-producing desk-scale protocols.

Every driver consumes a config dataclass and returns named tables. Randomness
is drawn from streams keyed as (master_seed, mix_seed(tag, ...)), where the
tag layout is fixed per driver, so a rerun with the same config and master
seed is byte-identical regardless of the parallelism degree. Noise and
initialization streams are deliberately keyed WITHOUT the optimizer (and,
where physics allows, without rho), so competing optimizers face identical
draws and comparisons are paired.

Each emitted row ends with (master_seed, stream_id, config_hash) provenance;
stream_id is the id of the stream that drove that row's cell (0 when the cell
consumed no randomness).
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .numerics import derive_stream, mix_seed
from .optimizers import (SAM, SAM_STAR, SGD, DivergenceError, OptimizerConfig,
                         OptState, step)
from .problems import (Dataset, DatasetOracle, LinearAutoencoderProblem,
                       MlpProblem, QuadraticProblem, Toy2DProblem,
                       dataset_perturb_one, lae_make, quadratic_make,
                       synth_classification)
from .theory import top_k_eigs

__all__ = [
    "Table",
    "EscapeConfig", "run_escape",
    "SuccessRateConfig", "run_success_rate",
    "ConvergenceConfig", "run_convergence",
    "StabilityConfig", "run_stability",
    "RenormTrackConfig", "run_renorm_tracking",
    "SharpnessConfig", "run_sharpness",
    "LrSweepConfig", "run_lr_sweep",
    "config_hash", "pearson",
]

# stream-id tags (first argument to mix_seed); per-driver indices follow
TAG_INIT = 1
TAG_NOISE = 2
TAG_DATA = 3
TAG_PERTURB = 4
TAG_TESTSET = 5
TAG_MODEL_INIT = 6
TAG_SHUFFLE = 7
TAG_EIGS = 8

OPTIMIZER_NAMES = ("sgd", "sam", "sam_star", "ssam")


@dataclass
class Table:
    """One CSV-able result table: column names plus raw rows."""

    name: str
    columns: list
    rows: list


def config_hash(cfg) -> str:
    """Content hash of a config dataclass (canonical JSON, first 16 hex)."""
    blob = json.dumps(asdict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.std() == 0.0 or b.std() == 0.0:
        return 0.0
    return float(np.corrcoef(a, b)[0, 1])


def _opt_config(name: str, eta: float, rho: float) -> OptimizerConfig:
    """Map a table-facing optimizer name to an update-rule config."""
    if name == "sgd":
        return OptimizerConfig(family=SGD, eta=eta)
    if name == "sam":
        return OptimizerConfig(family=SAM, eta=eta, rho=rho)
    if name == "sam_star":
        return OptimizerConfig(family=SAM_STAR, eta=eta, rho=rho)
    if name == "ssam":
        return OptimizerConfig(family=SAM, eta=eta, rho=rho, renormalize=True)
    raise ValueError(f"unknown optimizer {name!r}")


# ---------------------------------------------------------------------------
# vectorized trajectory engine for the closed-form problems
# ---------------------------------------------------------------------------

def batched_descent(problem, optimizer: str, eta, rho,
                    W0: np.ndarray, steps: int, noise_std: float = 0.0,
                    noise_stream=None, noise_tile: int = 1,
                    full_losses: bool = False, loss_stride: int = 0,
                    tail: int = 0):
    """Advance B parallel runs of one optimizer on a batched oracle.

    eta and rho may be scalars or per-row (B,) vectors, so a whole
    (rho, eta) grid advances as rows of one trajectory. Per step the engine
    draws TWO noise blocks even for plain SGD (which uses only the first), so
    every optimizer sharing a stream sees identical draws in identical
    positions; with noise_tile > 1 only B/noise_tile distinct rows are drawn
    and block-repeated, which keeps the noise per underlying run identical
    across a leading grid axis (e.g. rho). Diverged rows propagate NaN/Inf
    instead of raising; callers read divergence off the final state.

    Returns a dict with 'W' (final iterates), 'losses' (steps, B) when
    full_losses, 'strided' list of (t, loss_vec) when loss_stride > 0, and
    'tail_mean' (B,) mean loss over the last `tail` steps.
    """
    if noise_std > 0 and noise_stream is None:
        raise ValueError("noise_std > 0 requires a noise stream")
    W = np.array(W0, dtype=np.float64)
    B, dim = W.shape
    if B % noise_tile != 0:
        raise ValueError("noise_tile must divide the batch size")
    draw_rows = B // noise_tile
    eta_col = eta[:, None] if isinstance(eta, np.ndarray) else eta
    rho_col = rho[:, None] if isinstance(rho, np.ndarray) else rho
    losses = np.empty((steps, B)) if full_losses else None
    strided = [] if loss_stride > 0 else None
    tail_sum = np.zeros(B)
    renorm = optimizer == "ssam"
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for t in range(steps):
            if noise_std > 0:
                noise = noise_std * noise_stream.normal((2, draw_rows, dim))
                if noise_tile > 1:
                    noise = np.tile(noise, (1, noise_tile, 1))
            loss, g = problem.loss_grad_batch(W)
            if noise_std > 0:
                g = g + noise[0]
            if optimizer == "sgd":
                eff = g
            else:
                if optimizer == "sam_star":
                    gn = np.linalg.norm(g, axis=1, keepdims=True)
                    Wa = W + rho_col * g / np.where(gn == 0.0, 1.0, gn)
                else:
                    Wa = W + rho_col * g
                _, ga = problem.loss_grad_batch(Wa)
                if noise_std > 0:
                    ga = ga + noise[1]
                if renorm:
                    num = np.linalg.norm(g, axis=1)
                    den = np.linalg.norm(ga, axis=1)
                    gamma = np.where(den == 0.0, 1.0, num / np.where(den == 0.0, 1.0, den))
                    eff = gamma[:, None] * ga
                else:
                    eff = ga
            if full_losses:
                losses[t] = loss
            if strided is not None and t % loss_stride == 0:
                strided.append((t, loss.copy()))
            if tail and t >= steps - tail:
                tail_sum += loss
            W = W - eta_col * eff
    return {
        "W": W,
        "losses": losses,
        "strided": strided,
        "tail_mean": tail_sum / tail if tail else None,
    }


def _run_cells(cells, worker, parallelism: int):
    """Evaluate independent cells, preserving cell order in the output."""
    if parallelism <= 1:
        return [worker(c) for c in cells]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = [pool.submit(worker, c) for c in cells]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# saddle escape on the linear autoencoder
# ---------------------------------------------------------------------------

@dataclass
class EscapeConfig:
    d: int = 20
    init_std: float = 0.01
    eta: float = 1e-3
    steps: int = 8000
    rhos: tuple = (0.02, 0.05, 0.08)
    optimizers: tuple = ("sgd", "sam", "sam_star", "ssam")
    seeds: int = 10
    noise_var: float = 0.0
    escape_fraction: float = 0.5
    stride: int = 20
    master_seed: int = 1
    output_dir: str = "out/escape"


def run_escape(cfg: EscapeConfig, parallelism: int = 1):
    """Loss trajectories and escape steps near the factorization saddle.

    One batched trajectory per optimizer advances every (rho, seed) run as a
    row; seeds share their initialization across optimizers and rho, and the
    noise stream (when enabled) is tiled so a given seed sees identical draws
    everywhere. Escape step = first step whose loss falls below
    escape_fraction * initial loss; -1 when the run never escapes.
    """
    chash = config_hash(cfg)
    problem = LinearAutoencoderProblem(cfg.d, np.zeros((cfg.d, cfg.d)),
                                       np.zeros((cfg.d, cfg.d)))
    W0 = np.stack([
        lae_make(cfg.d, cfg.init_std, mix_seed(cfg.master_seed, TAG_INIT, s)).initial_params()
        for s in range(cfg.seeds)
    ])
    noise_std = float(np.sqrt(cfg.noise_var))
    noise_sid = mix_seed(TAG_NOISE, 0)
    n_rho = len(cfg.rhos)
    rho_rows = np.repeat(np.array(cfg.rhos, dtype=np.float64), cfg.seeds)
    W0_tiled = np.tile(W0, (n_rho, 1))  # rho-major rows: (rho, seed)

    def worker(opt):
        stream = derive_stream(cfg.master_seed, noise_sid) if noise_std > 0 else None
        out = batched_descent(problem, opt, cfg.eta, rho_rows, W0_tiled, cfg.steps,
                              noise_std=noise_std, noise_stream=stream,
                              noise_tile=n_rho, full_losses=True)
        return out["losses"]

    results = _run_cells(list(cfg.optimizers), worker, parallelism)

    curve_rows, step_rows = [], []
    for opt, losses in zip(cfg.optimizers, results):
        for r, rho in enumerate(cfg.rhos):
            block = losses[:, r * cfg.seeds:(r + 1) * cfg.seeds]
            with np.errstate(invalid="ignore"):
                mean_loss = np.nanmean(block, axis=1)
            for t in range(0, cfg.steps, cfg.stride):
                curve_rows.append([opt, rho, t, float(mean_loss[t]),
                                   cfg.master_seed, noise_sid, chash])
            below = block < cfg.escape_fraction * block[0]
            for s in range(cfg.seeds):
                hit = np.flatnonzero(below[:, s])
                esc = int(hit[0]) if hit.size else -1
                step_rows.append([opt, rho, s, esc, int(hit.size > 0),
                                  cfg.master_seed, noise_sid, chash])

    return {
        "escape_curves": Table("escape_curves",
                               ["optimizer", "rho", "step", "loss",
                                "master_seed", "stream_id", "config_hash"],
                               curve_rows),
        "escape_steps": Table("escape_steps",
                              ["optimizer", "rho", "seed", "escape_step", "escaped",
                               "master_seed", "stream_id", "config_hash"],
                              step_rows),
    }


# ---------------------------------------------------------------------------
# success-rate sweep on the 2-D saddle landscape
# ---------------------------------------------------------------------------

@dataclass
class SuccessRateConfig:
    eta_min: float = 0.001
    eta_max: float = 0.3
    eta_count: int = 20
    starts: int = 500
    rhos: tuple = (0.05, 0.2, 0.4)
    optimizers: tuple = ("sgd", "sam", "sam_star", "ssam")
    steps: int = 10000
    noise_var: float = 0.005
    success_tol: float = 0.1
    master_seed: int = 1
    output_dir: str = "out/success_rate"

    def etas(self) -> np.ndarray:
        return np.logspace(np.log10(self.eta_min), np.log10(self.eta_max),
                           self.eta_count)


def run_success_rate(cfg: SuccessRateConfig, parallelism: int = 1):
    """Fraction of random starts that reach a global minimum of the toy
    landscape, per (optimizer, rho, eta).

    Each optimizer advances its whole (rho, eta, start) grid as one batched
    trajectory. Starts and the noise stream are shared across optimizers and
    tiled across rho, so plain-SGD rows are bit-identical across rho (it is
    evaluated once per eta) and cross-optimizer comparisons are paired. Runs
    that end non-finite or outside the tolerance of both minima count as
    failures.
    """
    chash = config_hash(cfg)
    problem = Toy2DProblem()
    etas = cfg.etas()
    ne, ns, nr = len(etas), cfg.starts, len(cfg.rhos)
    start_stream = derive_stream(cfg.master_seed, mix_seed(TAG_INIT, 0))
    X0 = 4.0 * start_stream.uniform((ns, 2)) - 2.0
    noise_std = float(np.sqrt(cfg.noise_var))
    noise_sid = mix_seed(TAG_NOISE, 0)
    m1, m2 = problem.minima

    # row layout: rho-major, then eta, then start; sgd skips the rho axis
    eta_block = np.repeat(etas, ns)
    X0_block = np.tile(X0, (ne, 1))

    def _successes(W):
        with np.errstate(invalid="ignore"):
            dist = np.minimum(np.linalg.norm(W - m1, axis=1),
                              np.linalg.norm(W - m2, axis=1))
        ok = np.isfinite(dist) & (dist <= cfg.success_tol)
        return ok.reshape(-1, ne, ns).sum(axis=2)  # (n_rho_axis, ne)

    def worker(opt):
        stream = derive_stream(cfg.master_seed, noise_sid)
        if opt == "sgd":
            out = batched_descent(problem, opt, eta_block, 0.0, X0_block,
                                  cfg.steps, noise_std=noise_std,
                                  noise_stream=stream)
        else:
            out = batched_descent(problem, opt, np.tile(eta_block, nr),
                                  np.repeat(np.array(cfg.rhos), ne * ns),
                                  np.tile(X0_block, (nr, 1)), cfg.steps,
                                  noise_std=noise_std, noise_stream=stream,
                                  noise_tile=nr)
        return _successes(out["W"])

    results = _run_cells(list(cfg.optimizers), worker, parallelism)
    by_opt = dict(zip(cfg.optimizers, results))

    rows = []
    for opt in cfg.optimizers:
        counts = by_opt[opt]
        for r, rho in enumerate(cfg.rhos):
            row_block = counts[0] if opt == "sgd" else counts[r]
            for i, eta in enumerate(etas):
                successes = int(row_block[i])
                rows.append([opt, rho, float(eta), successes / ns,
                             successes, ns, cfg.master_seed, noise_sid, chash])
    return {
        "success_rate": Table("success_rate",
                              ["optimizer", "rho", "eta", "success_rate",
                               "successes", "starts",
                               "master_seed", "stream_id", "config_hash"],
                              rows),
    }


# ---------------------------------------------------------------------------
# noisy-ball convergence on the random quadratic
# ---------------------------------------------------------------------------

@dataclass
class ConvergenceConfig:
    d: int = 20
    delta: float = 0.01
    problem_seed: int = 7
    eta: float = 1e-3
    steps: int = 100000
    noise_var: float = 1e-4
    rhos: tuple = (0.01, 0.05, 0.2, 0.5, 1.0, 2.0)
    optimizers: tuple = ("sgd", "sam", "sam_star", "ssam")
    replicates: int = 16
    tail: int = 1000
    stride: int = 200
    master_seed: int = 1
    output_dir: str = "out/convergence"


def run_convergence(cfg: ConvergenceConfig, parallelism: int = 1):
    """Loss curves plus last-`tail`-step mean loss per (optimizer, rho).

    Each optimizer advances its (rho, replicate) grid as one batched
    trajectory; replicate starts and the noise stream are shared by every
    optimizer and tiled across rho, so the same noise realization drives each
    cell and the terminal comparisons are paired. Plain SGD ignores rho and
    is reported at rho = 0.
    """
    chash = config_hash(cfg)
    problem = quadratic_make(cfg.d, cfg.delta, cfg.problem_seed)
    start_stream = derive_stream(cfg.master_seed, mix_seed(TAG_INIT, 0))
    W0 = start_stream.normal((cfg.replicates, cfg.d))
    noise_std = float(np.sqrt(cfg.noise_var))
    noise_sid = mix_seed(TAG_NOISE, 0)
    nr = len(cfg.rhos)
    rho_rows = np.repeat(np.array(cfg.rhos, dtype=np.float64), cfg.replicates)

    def worker(opt):
        stream = derive_stream(cfg.master_seed, noise_sid) if noise_std > 0 else None
        if opt == "sgd":
            return batched_descent(problem, opt, cfg.eta, 0.0, W0, cfg.steps,
                                   noise_std=noise_std, noise_stream=stream,
                                   loss_stride=cfg.stride, tail=cfg.tail)
        return batched_descent(problem, opt, cfg.eta, rho_rows,
                               np.tile(W0, (nr, 1)), cfg.steps,
                               noise_std=noise_std, noise_stream=stream,
                               noise_tile=nr, loss_stride=cfg.stride,
                               tail=cfg.tail)

    results = _run_cells(list(cfg.optimizers), worker, parallelism)

    curve_rows, term_rows = [], []
    for opt, out in zip(cfg.optimizers, results):
        rho_list = [0.0] if opt == "sgd" else list(cfg.rhos)
        for r, rho in enumerate(rho_list):
            sl = slice(r * cfg.replicates, (r + 1) * cfg.replicates)
            with np.errstate(invalid="ignore"):
                for t, loss_vec in out["strided"]:
                    curve_rows.append([opt, rho, t, float(np.nanmean(loss_vec[sl])),
                                       cfg.master_seed, noise_sid, chash])
                term_rows.append([opt, rho, float(np.nanmean(out["tail_mean"][sl])),
                                  cfg.master_seed, noise_sid, chash])

    return {
        "convergence_curves": Table("convergence_curves",
                                    ["optimizer", "rho", "step", "loss",
                                     "master_seed", "stream_id", "config_hash"],
                                    curve_rows),
        "convergence_terminal": Table("convergence_terminal",
                                      ["optimizer", "rho", "terminal_mean",
                                       "master_seed", "stream_id", "config_hash"],
                                      term_rows),
    }


# ---------------------------------------------------------------------------
# twin-training stability on the MLP
# ---------------------------------------------------------------------------

@dataclass
class StabilityConfig:
    n: int = 241
    p: int = 10
    classes: int = 3
    cluster_std: float = 0.5
    hidden: tuple = (32, 32)
    eta: float = 0.1
    rho: float = 0.05
    epochs: int = 30
    seeds: int = 3
    optimizers: tuple = ("sgd", "sam", "ssam")
    test_n: int = 600
    master_seed: int = 1
    output_dir: str = "out/stability"


def _train_epochs(problem: MlpProblem, data: Dataset, opt_cfg: OptimizerConfig,
                  w0: np.ndarray, perms, batch: int, epoch_hook=None,
                  record_gamma: bool = False):
    """Mini-batch training over pre-drawn per-epoch permutations.

    Returns (w, gamma_records, diverged_at) where gamma_records is a list of
    (global_step, epoch, gamma) and diverged_at is the failing epoch or -1.
    """
    w = w0.copy()
    state = OptState.fresh(problem.dim)
    gammas = []
    n = data.n
    for epoch, perm in enumerate(perms):
        try:
            for lo in range(0, n, batch):
                idx = perm[lo: lo + batch]
                oracle = DatasetOracle(problem, data.features[idx], data.labels[idx])
                w, rec = step(opt_cfg, state, oracle, w)
                if record_gamma:
                    gammas.append((rec.t, epoch, rec.gamma))
        except DivergenceError:
            return w, gammas, epoch
        if epoch_hook is not None:
            epoch_hook(epoch, w)
    return w, gammas, -1


def run_stability(cfg: StabilityConfig, parallelism: int = 1):
    """Train twin models on datasets differing in one example; track their
    parameter distance and the loss-based generalization gap per epoch.

    Twins share the initialization and the per-epoch example order, so the
    only asymmetry is the single differing example (vanilla per-example
    updates, no momentum or decay). Distances are logged once per epoch with
    epoch 0 being the shared initialization.
    """
    chash = config_hash(cfg)
    problem = MlpProblem([cfg.p, *cfg.hidden, cfg.classes])

    cells = [(opt, s) for opt in cfg.optimizers for s in range(cfg.seeds)]

    def worker(cell):
        opt, s = cell
        S0 = synth_classification(cfg.n, cfg.p, cfg.classes,
                                  mix_seed(cfg.master_seed, TAG_DATA, s),
                                  cluster_std=cfg.cluster_std)
        S, S_prime, _, _ = dataset_perturb_one(S0, mix_seed(cfg.master_seed, TAG_PERTURB, s))
        test = synth_classification(cfg.test_n, cfg.p, cfg.classes,
                                    mix_seed(cfg.master_seed, TAG_TESTSET, s),
                                    cluster_std=cfg.cluster_std)
        init_sid = mix_seed(TAG_MODEL_INIT, s)
        w0 = problem.init_params(derive_stream(cfg.master_seed, init_sid))
        shuffle = derive_stream(cfg.master_seed, mix_seed(TAG_SHUFFLE, s))
        perms = [shuffle.permutation(S.n) for _ in range(cfg.epochs)]
        opt_cfg = _opt_config(opt, cfg.eta, cfg.rho)

        snapshots_a, snapshots_b = [], []
        _, _, div_a = _train_epochs(problem, S, opt_cfg, w0, perms, batch=1,
                                    epoch_hook=lambda e, w: snapshots_a.append(w.copy()))
        _, _, div_b = _train_epochs(problem, S_prime, opt_cfg, w0, perms, batch=1,
                                    epoch_hook=lambda e, w: snapshots_b.append(w.copy()))
        diverged_at = min(d for d in (div_a, div_b) if d >= 0) if max(div_a, div_b) >= 0 else -1

        rows = []

        def metrics(w):
            train_loss, _ = problem.loss_grad(w, S.features, S.labels)
            test_loss, _ = problem.loss_grad(w, test.features, test.labels)
            return train_loss, test_loss

        tr0, te0 = metrics(w0)
        rows.append([opt, s, 0, 0.0, tr0, te0, te0 - tr0, 0,
                     cfg.master_seed, init_sid, chash])
        epochs_done = min(len(snapshots_a), len(snapshots_b))
        for e in range(epochs_done):
            wa, wb = snapshots_a[e], snapshots_b[e]
            dist = float(np.linalg.norm(wa - wb))
            tr, te = metrics(wa)
            rows.append([opt, s, e + 1, dist, tr, te, te - tr,
                         int(diverged_at >= 0), cfg.master_seed, init_sid, chash])
        return rows

    blocks = _run_cells(cells, worker, parallelism)
    rows = [r for block in blocks for r in block]
    return {
        "stability": Table("stability",
                           ["optimizer", "seed", "epoch", "param_distance",
                            "train_err", "test_err", "gen_gap", "diverged",
                            "master_seed", "stream_id", "config_hash"],
                           rows),
    }


# ---------------------------------------------------------------------------
# renormalization-factor tracking
# ---------------------------------------------------------------------------

@dataclass
class RenormTrackConfig:
    n: int = 320
    p: int = 10
    classes: int = 3
    cluster_std: float = 0.25
    hidden: tuple = (32, 32)
    eta: float = 0.1
    rhos: tuple = (0.01, 0.05, 0.2)
    epochs: int = 30
    batch: int = 32
    master_seed: int = 1
    output_dir: str = "out/renorm_track"


def run_renorm_tracking(cfg: RenormTrackConfig, parallelism: int = 1):
    """Track the gradient-norm ratio gamma_t during plain ascent-descent
    training (no renormalization applied), one run per rho.

    All rho cells share the dataset, initialization, and example order, so the
    gamma traces differ only through rho.
    """
    chash = config_hash(cfg)
    problem = MlpProblem([cfg.p, *cfg.hidden, cfg.classes])
    data = synth_classification(cfg.n, cfg.p, cfg.classes,
                                mix_seed(cfg.master_seed, TAG_DATA, 0),
                                cluster_std=cfg.cluster_std)
    init_sid = mix_seed(TAG_MODEL_INIT, 0)
    w0 = problem.init_params(derive_stream(cfg.master_seed, init_sid))
    shuffle = derive_stream(cfg.master_seed, mix_seed(TAG_SHUFFLE, 0))
    perms = [shuffle.permutation(data.n) for _ in range(cfg.epochs)]

    def worker(rho):
        opt_cfg = _opt_config("sam", cfg.eta, rho)
        _, gammas, diverged_at = _train_epochs(problem, data, opt_cfg, w0, perms,
                                               batch=cfg.batch, record_gamma=True)
        return gammas, diverged_at

    results = _run_cells(list(cfg.rhos), worker, parallelism)

    step_rows, epoch_rows = [], []
    for rho, (gammas, _) in zip(cfg.rhos, results):
        per_epoch = {}
        for t, epoch, gamma in gammas:
            step_rows.append([rho, t, gamma, cfg.master_seed, init_sid, chash])
            per_epoch.setdefault(epoch, []).append(gamma)
        for epoch in sorted(per_epoch):
            epoch_rows.append([rho, epoch, float(np.mean(per_epoch[epoch])),
                               cfg.master_seed, init_sid, chash])

    return {
        "renorm_steps": Table("renorm_steps",
                              ["rho", "step", "gamma",
                               "master_seed", "stream_id", "config_hash"],
                              step_rows),
        "renorm_epoch_mean": Table("renorm_epoch_mean",
                                   ["rho", "epoch", "gamma_mean",
                                    "master_seed", "stream_id", "config_hash"],
                                   epoch_rows),
    }


# ---------------------------------------------------------------------------
# Hessian sharpness of trained minima
# ---------------------------------------------------------------------------

@dataclass
class SharpnessConfig:
    subject: str = "mlp"  # "mlp" or "quadratic"
    n: int = 320
    p: int = 10
    classes: int = 3
    cluster_std: float = 0.25
    hidden: tuple = (32, 32)
    eta: float = 0.1
    rho: float = 0.05
    epochs: int = 30
    batch: int = 16
    seeds: int = 3
    optimizers: tuple = ("sgd", "sam", "ssam")
    top_k: int = 5
    power_iters: int = 400
    power_tol: float = 1e-9
    quad_d: int = 20
    quad_delta: float = 0.01
    quad_seed: int = 7
    master_seed: int = 1
    output_dir: str = "out/sharpness"


def run_sharpness(cfg: SharpnessConfig, parallelism: int = 1):
    """Top-k Hessian eigenvalues of the full-dataset loss at trained weights.

    The quadratic subject skips training (its Hessian is constant) and exists
    so the power-iteration path can be validated against a dense eigensolver.
    """
    chash = config_hash(cfg)
    rows = []

    if cfg.subject == "quadratic":
        problem = quadratic_make(cfg.quad_d, cfg.quad_delta, cfg.quad_seed)
        w = np.zeros(cfg.quad_d)
        vals, flags = top_k_eigs(problem, w, cfg.top_k, iters=cfg.power_iters,
                                 tol=cfg.power_tol,
                                 seed=mix_seed(cfg.master_seed, TAG_EIGS, 0))
        for rank, (lam, ok) in enumerate(zip(vals, flags), start=1):
            rows.append(["quadratic", 0, rank, float(lam), int(ok),
                         cfg.master_seed, mix_seed(TAG_EIGS, 0), chash])
    elif cfg.subject == "mlp":
        problem = MlpProblem([cfg.p, *cfg.hidden, cfg.classes])
        cells = [(opt, s) for opt in cfg.optimizers for s in range(cfg.seeds)]

        def worker(cell):
            opt, s = cell
            data = synth_classification(cfg.n, cfg.p, cfg.classes,
                                        mix_seed(cfg.master_seed, TAG_DATA, s),
                                        cluster_std=cfg.cluster_std)
            w0 = problem.init_params(
                derive_stream(cfg.master_seed, mix_seed(TAG_MODEL_INIT, s)))
            shuffle = derive_stream(cfg.master_seed, mix_seed(TAG_SHUFFLE, s))
            perms = [shuffle.permutation(data.n) for _ in range(cfg.epochs)]
            w, _, diverged_at = _train_epochs(problem, data, _opt_config(opt, cfg.eta, cfg.rho),
                                              w0, perms, batch=cfg.batch)
            if diverged_at >= 0:
                return [(opt, s, rank, float("nan"), 0) for rank in range(1, cfg.top_k + 1)]
            oracle = DatasetOracle(problem, data.features, data.labels)
            vals, flags = top_k_eigs(oracle, w, cfg.top_k, iters=cfg.power_iters,
                                     tol=cfg.power_tol,
                                     seed=mix_seed(cfg.master_seed, TAG_EIGS, s))
            return [(opt, s, rank, float(lam), int(ok))
                    for rank, (lam, ok) in enumerate(zip(vals, flags), start=1)]

        blocks = _run_cells(cells, worker, parallelism)
        for (opt, s), block in zip(cells, blocks):
            for opt_name, seed, rank, lam, ok in block:
                rows.append([opt_name, seed, rank, lam, ok, cfg.master_seed,
                             mix_seed(TAG_EIGS, seed), chash])
    else:
        raise ValueError(f"unknown subject {cfg.subject!r}")

    return {
        "sharpness": Table("sharpness",
                           ["optimizer", "seed", "eig_rank", "eigenvalue", "converged",
                            "master_seed", "stream_id", "config_hash"],
                           rows),
    }


# ---------------------------------------------------------------------------
# learning-rate sweep instability
# ---------------------------------------------------------------------------

@dataclass
class LrSweepConfig:
    n: int = 320
    p: int = 10
    classes: int = 3
    cluster_std: float = 0.25
    # scaled-up features sharpen the landscape so the wide learning-rate grid
    # actually straddles the stability edge at this network size
    feature_scale: float = 6.0
    hidden: tuple = (32, 32, 32)
    eta_min: float = 0.01
    eta_max: float = 3.16
    eta_count: int = 8
    rho: float = 1.0
    epochs: int = 15
    batch: int = 32
    optimizers: tuple = ("sgd", "sam", "sam_star", "ssam")
    master_seed: int = 1
    output_dir: str = "out/lr_sweep"

    def etas(self) -> np.ndarray:
        return np.logspace(np.log10(self.eta_min), np.log10(self.eta_max),
                           self.eta_count)


def run_lr_sweep(cfg: LrSweepConfig, parallelism: int = 1):
    """Terminal train loss/accuracy per (optimizer, eta) at a fixed, large rho.

    Divergence (non-finite loss at any point) is data, not an error: the row
    is flagged and the metrics are NaN. Every cell shares the dataset, the
    initialization, and the example order.
    """
    chash = config_hash(cfg)
    problem = MlpProblem([cfg.p, *cfg.hidden, cfg.classes])
    raw = synth_classification(cfg.n, cfg.p, cfg.classes,
                               mix_seed(cfg.master_seed, TAG_DATA, 0),
                               cluster_std=cfg.cluster_std)
    data = Dataset(raw.features * cfg.feature_scale, raw.labels, raw.classes)
    init_sid = mix_seed(TAG_MODEL_INIT, 0)
    w0 = problem.init_params(derive_stream(cfg.master_seed, init_sid))
    shuffle = derive_stream(cfg.master_seed, mix_seed(TAG_SHUFFLE, 0))
    perms = [shuffle.permutation(data.n) for _ in range(cfg.epochs)]
    etas = cfg.etas()

    cells = [(opt, i) for opt in cfg.optimizers for i in range(len(etas))]

    def worker(cell):
        opt, i = cell
        opt_cfg = _opt_config(opt, float(etas[i]), cfg.rho)
        w, _, diverged_at = _train_epochs(problem, data, opt_cfg, w0, perms,
                                          batch=cfg.batch)
        if diverged_at >= 0 or not np.all(np.isfinite(w)):
            return float("nan"), float("nan"), 1
        loss, _ = problem.loss_grad(w, data.features, data.labels)
        if not np.isfinite(loss):
            return float("nan"), float("nan"), 1
        return float(loss), problem.accuracy(w, data.features, data.labels), 0

    results = _run_cells(cells, worker, parallelism)

    rows = []
    for (opt, i), (loss, acc, diverged) in zip(cells, results):
        rows.append([opt, float(etas[i]), loss, acc, diverged,
                     cfg.master_seed, init_sid, chash])
    return {
        "lr_sweep": Table("lr_sweep",
                          ["optimizer", "eta", "final_train_loss",
                           "final_train_acc", "diverged",
                           "master_seed", "stream_id", "config_hash"],
                          rows),
    }
