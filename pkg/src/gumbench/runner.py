"""Experiment execution: configs, method loops, checkpoints, golden traces.

The four methods are deliberately separate code paths. ``muon`` and
``galore_muon`` are written as plain loops with their own update math, so
that the sampled optimizer's reduction identities (gamma = 0 reproduces the
projected baseline, gamma = n_blocks with the compensated variant reproduces
the full-parameter baseline) are checked against genuinely independent
implementations rather than against refactorings of the same code.
``unbiased_generic`` drives the same schedule through the generic dispatch
as a third route to the sampled trajectory.

Every run derives one gradient stream and one assignment stream from its
master seed, so sampling randomness can be ablated without disturbing the
gradient draws (and vice versa).
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .errors import ConfigError, InvalidInputError
from .linalg import (
    NEWTON_SCHULZ_DEFAULT,
    NewtonSchulzCoeffs,
    load_matrix,
    save_matrix,
    trace_norm,
)
from .metrics import TraceRecord, read_trace_csv, stable_rank_trace, write_trace_csv
from .optim import (
    Assignment,
    BlockState,
    GumConfig,
    Projector,
    TraceHooks,
    assemble_record,
    external_weights,
    galore_projector,
    init_block_state,
    orient_like_block,
    run_period,
    sample_assignments,
    unbiased_paradigm_step,
    muon_step,
)
from . import optim as _optim
from .problems import (
    MultiBlockQuadratic,
    NoisyLinearRegression,
    mbq_grad,
    mbq_loss,
    mbq_mean_grad,
    mbq_random_instance,
    nlr_grad,
    nlr_loss,
    nlr_mean_grad,
    nlr_optimal_value,
)

__all__ = [
    "METHODS",
    "PROBLEMS",
    "STATUS_OK",
    "STATUS_CONFIG_ERROR",
    "STATUS_NUMERICAL_FAILURE",
    "STATUS_VERIFICATION_FAILURE",
    "ExperimentConfig",
    "ProblemContext",
    "RunOutcome",
    "build_problem",
    "run_single",
    "run_suite",
    "worker_slots",
    "save_checkpoint",
    "load_checkpoint",
    "GoldenResult",
    "golden_trace_check",
]

METHODS = ("muon", "galore_muon", "gum", "unbiased_generic")
PROBLEMS = ("noisy_linear_regression", "multi_block_quadratic")

STATUS_OK = 0
STATUS_CONFIG_ERROR = 2
STATUS_NUMERICAL_FAILURE = 3
STATUS_VERIFICATION_FAILURE = 4

THREADS_ENV_VAR = "GUM_BENCH_THREADS"


def worker_slots() -> int:
    """Process-level worker cap from the environment, at least 1."""
    raw = os.environ.get(THREADS_ENV_VAR, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved description of one experiment.

    ``seeds`` are master seeds, one independent run each; the gradient and
    assignment streams are spawned from the master unless pinned explicitly
    (only meaningful for single-seed configs). ``eta_grid`` is provenance:
    the step sizes that were compared before ``step_size_eta`` was chosen.
    The three optional problem constants are recorded for convergence-trend
    reports and never estimated.
    """

    problem: str
    method: str
    total_steps: int
    period_k: int
    rank_r: int
    full_rank_layers_gamma: float
    problem_params: dict = field(default_factory=dict)
    momentum_beta: float = 0.95
    step_size_eta: float = 0.01
    compensated_variant: bool = False
    use_damping: bool = False
    msign_mode: str = "newton_schulz"
    ns_coeffs: Optional[dict] = None
    generic_per_step_projector: bool = False
    seeds: tuple = (0,)
    grad_seed: Optional[int] = None
    assignment_seed: Optional[int] = None
    trace_cadence: int = 1
    chi_cadence: int = 20
    loss_abort: float = 1e12
    eta_grid: Optional[tuple] = None
    smoothness_l_op: Optional[float] = None
    initial_gap_delta: Optional[float] = None
    noise_trace_norm: Optional[float] = None

    def __post_init__(self) -> None:
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.total_steps < 1:
            raise ConfigError("total_steps must be >= 1")
        if self.trace_cadence < 1:
            raise ConfigError("trace_cadence must be >= 1")
        if self.chi_cadence < 0:
            raise ConfigError("chi_cadence must be >= 0")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if self.method == "galore_muon" and self.full_rank_layers_gamma != 0:
            raise ConfigError("galore_muon requires full_rank_layers_gamma = 0")
        if self.method == "unbiased_generic" and self.compensated_variant:
            raise ConfigError(
                "the generic dispatch has no compensated variant; disable it"
            )
        if len(self.seeds) > 1 and (
            self.grad_seed is not None or self.assignment_seed is not None
        ):
            raise ConfigError(
                "explicit stream seeds only make sense for a single master seed"
            )
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.eta_grid is not None:
            object.__setattr__(
                self, "eta_grid", tuple(float(e) for e in self.eta_grid)
            )

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config document must be a JSON object")
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["seeds"] = list(self.seeds)
        if self.eta_grid is not None:
            data["eta_grid"] = list(self.eta_grid)
        return data

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    def newton_schulz_coeffs(self) -> NewtonSchulzCoeffs:
        if self.ns_coeffs is None:
            return NEWTON_SCHULZ_DEFAULT
        try:
            return NewtonSchulzCoeffs(
                a=float(self.ns_coeffs["a"]),
                b=float(self.ns_coeffs["b"]),
                c=float(self.ns_coeffs["c"]),
                iterations=int(self.ns_coeffs["iterations"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad ns_coeffs: {exc}") from exc


class ProblemContext(NamedTuple):
    name: str
    instance: object
    init_weights: list
    loss_fn: Callable
    mean_grad_fn: Callable
    oracle: Callable
    n_blocks: int
    loss_shift: float


def build_problem(cfg: ExperimentConfig) -> ProblemContext:
    """Instantiate the configured problem and its closures.

    The loss closure is already shifted for the regression problem, so a
    perfect minimizer reads 0 in every trace.
    """
    params = dict(cfg.problem_params)
    try:
        if cfg.problem == "noisy_linear_regression":
            problem = NoisyLinearRegression(
                n=int(params.pop("n", 20)),
                r_noise=int(params.pop("r_noise", 12)),
                sigma=float(params.pop("sigma", 100.0)),
                seed=int(params.pop("seed", 7)),
                noise_kind=str(params.pop("noise_kind", "rademacher")),
            )
            if params:
                raise ConfigError(f"unknown problem_params: {sorted(params)}")
            shift = nlr_optimal_value(problem)
            return ProblemContext(
                name=cfg.problem,
                instance=problem,
                init_weights=[np.zeros((problem.n, problem.n))],
                loss_fn=lambda ws: nlr_loss(problem, ws[0]) - shift,
                mean_grad_fn=lambda ws: [nlr_mean_grad(problem, ws[0])],
                oracle=lambda ws, rng: [nlr_grad(problem, ws[0], rng)],
                n_blocks=1,
                loss_shift=shift,
            )
        shapes = params.pop("shapes", [[10, 10], [8, 12], [12, 6], [6, 16]])
        problem = mbq_random_instance(
            shapes=shapes,
            seed=int(params.pop("seed", 3)),
            noise_sigma=float(params.pop("noise_sigma", 0.0)),
            target_norm=float(params.pop("target_norm", 10.0)),
            skew=float(params.pop("skew", 0.2)),
        )
        if params:
            raise ConfigError(f"unknown problem_params: {sorted(params)}")
        return ProblemContext(
            name=cfg.problem,
            instance=problem,
            init_weights=[np.zeros(s) for s in problem.weight_shapes()],
            loss_fn=lambda ws: mbq_loss(problem, ws),
            mean_grad_fn=lambda ws: mbq_mean_grad(problem, ws),
            oracle=lambda ws, rng: mbq_grad(problem, ws, rng),
            n_blocks=problem.n_blocks,
            loss_shift=0.0,
        )
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc


def _gum_config(cfg: ExperimentConfig, n_blocks: int) -> GumConfig:
    if cfg.full_rank_layers_gamma > n_blocks:
        raise ConfigError(
            f"full_rank_layers_gamma={cfg.full_rank_layers_gamma} exceeds "
            f"{n_blocks} blocks"
        )
    try:
        return GumConfig(
            period_k=cfg.period_k,
            rank_r=cfg.rank_r,
            full_rank_layers_gamma=cfg.full_rank_layers_gamma,
            n_blocks=n_blocks,
            momentum_beta=cfg.momentum_beta,
            step_size_eta=cfg.step_size_eta,
            compensated_variant=cfg.compensated_variant,
            use_damping=cfg.use_damping,
            msign_mode=cfg.msign_mode,
            ns_coeffs=cfg.newton_schulz_coeffs(),
            smoothness_l_op=cfg.smoothness_l_op,
            initial_gap_delta=cfg.initial_gap_delta,
            noise_trace_norm=cfg.noise_trace_norm,
        )
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc


def _streams(cfg: ExperimentConfig, master_seed: int):
    grad_ss, assign_ss = np.random.SeedSequence(master_seed).spawn(2)
    grad_rng = np.random.default_rng(
        grad_ss if cfg.grad_seed is None else cfg.grad_seed
    )
    assign_rng = np.random.default_rng(
        assign_ss if cfg.assignment_seed is None else cfg.assignment_seed
    )
    return grad_rng, assign_rng


class RunOutcome(NamedTuple):
    seed: int
    status: int
    records: list
    blocks: list
    grad_rng: np.random.Generator
    assignment_rng: np.random.Generator
    last_assignments: list


def _initial_record(blocks: Sequence[BlockState], hooks: TraceHooks) -> TraceRecord:
    ext = [external_weights(b) for b in blocks]
    ranks = stable_rank_trace(blocks)
    return TraceRecord(
        step=0,
        loss=hooks.loss_fn(ext),
        grad_trace_norm=float(sum(trace_norm(g) for g in hooks.mean_grad_fn(ext))),
        chi_residual=None,
        stable_ranks=ranks.ranks,
        stable_rank_skipped=ranks.skipped,
        assignment_full=(),
        memory_scalars=0,
    )


def _run_muon(ctx, cfg, gum_cfg, grad_rng, hooks):
    """Full-parameter baseline loop; no projector, no period structure."""
    blocks = [init_block_state(w) for w in ctx.init_weights]
    records = [_initial_record(blocks, hooks)]
    status = STATUS_OK
    for step in range(1, cfg.total_steps + 1):
        grads = ctx.oracle([external_weights(b) for b in blocks], grad_rng)
        blocks = [
            muon_step(b, orient_like_block(b, g), gum_cfg)
            for b, g in zip(blocks, grads)
        ]
        loss = hooks.loss_fn([external_weights(b) for b in blocks])
        if step % hooks.record_cadence == 0:
            records.append(
                assemble_record(
                    step,
                    blocks,
                    hooks,
                    loss,
                    [orient_like_block(b, g) for b, g in zip(blocks, grads)],
                )
            )
        if loss > hooks.loss_abort:
            status = STATUS_NUMERICAL_FAILURE
            break
    return blocks, records, status, []


def _run_galore_muon(ctx, cfg, gum_cfg, grad_rng, hooks):
    """Projected baseline: periodic projector refresh and momentum restart.

    The update math is written out here on purpose; the sampled method is
    tested against this loop, not the other way around.
    """
    beta = gum_cfg.momentum_beta
    eta = gum_cfg.step_size_eta
    damp = (1.0 - beta) if gum_cfg.use_damping else 1.0
    blocks = [init_block_state(w) for w in ctx.init_weights]
    records = [_initial_record(blocks, hooks)]
    status = STATUS_OK
    weights = [b.weights for b in blocks]
    momenta = [None] * len(blocks)
    projectors = [None] * len(blocks)
    for step in range(cfg.total_steps):
        ext = [
            w.T if b.transposed else w for b, w in zip(blocks, weights)
        ]
        grads = ctx.oracle(ext, grad_rng)
        oriented = [
            g.T if b.transposed else np.asarray(g, dtype=np.float64)
            for b, g in zip(blocks, grads)
        ]
        if step % gum_cfg.period_k == 0:
            projectors = [
                galore_projector(g, gum_cfg.rank_r) for g in oriented
            ]
            momenta = [
                np.zeros((gum_cfg.rank_r, w.shape[1])) for w in weights
            ]
        for i in range(len(blocks)):
            p = projectors[i].p
            momenta[i] = beta * momenta[i] + damp * (p.T @ oriented[i])
            weights[i] = weights[i] - eta * (
                p @ _optim._msign(momenta[i], gum_cfg)
            )
        blocks = [
            replace(
                b,
                weights=weights[i],
                momentum=momenta[i],
                projector=projectors[i],
                assignment=Assignment.LOW_RANK,
                period_index=step // gum_cfg.period_k,
            )
            for i, b in enumerate(blocks)
        ]
        loss = hooks.loss_fn([external_weights(b) for b in blocks])
        if (step + 1) % hooks.record_cadence == 0:
            records.append(
                assemble_record(step + 1, blocks, hooks, loss, oriented)
            )
        if loss > hooks.loss_abort:
            status = STATUS_NUMERICAL_FAILURE
            break
    return blocks, records, status, []


def _run_gum(ctx, cfg, gum_cfg, grad_rng, assign_rng, hooks):
    blocks = [init_block_state(w) for w in ctx.init_weights]
    records = [_initial_record(blocks, hooks)]
    status = STATUS_OK
    done = 0
    period = 0
    while done < cfg.total_steps:
        k = min(gum_cfg.period_k, cfg.total_steps - done)
        period_cfg = gum_cfg if k == gum_cfg.period_k else replace(gum_cfg, period_k=k)
        result = run_period(
            blocks,
            ctx.oracle,
            period_cfg,
            grad_rng,
            assign_rng,
            period_index=period,
            global_step=done,
            hooks=hooks,
        )
        blocks = result.blocks
        records.extend(result.records)
        if result.aborted:
            status = STATUS_NUMERICAL_FAILURE
            break
        done += k
        period += 1
    assignments = [b.assignment for b in blocks]
    return blocks, records, status, assignments


def _run_unbiased_generic(ctx, cfg, gum_cfg, grad_rng, assign_rng, hooks):
    """The sampled schedule driven through the generic dispatch.

    By default the projector rule reuses the period-start projector for the
    whole period; ``generic_per_step_projector`` recomputes it from each
    step's gradient instead.
    """
    q = gum_cfg.q
    blocks = [init_block_state(w) for w in ctx.init_weights]
    records = [_initial_record(blocks, hooks)]
    status = STATUS_OK

    def base_update(mom, eff):
        damp = (1.0 - gum_cfg.momentum_beta) if gum_cfg.use_damping else 1.0
        new_mom = gum_cfg.momentum_beta * mom + damp * eff
        return new_mom, _optim._msign(new_mom, gum_cfg)

    done = 0
    period = 0
    aborted = False
    while done < cfg.total_steps and not aborted:
        k = min(gum_cfg.period_k, cfg.total_steps - done)
        ext = [external_weights(b) for b in blocks]
        grads0 = ctx.oracle(ext, grad_rng)
        oriented0 = [orient_like_block(b, g) for b, g in zip(blocks, grads0)]
        period_projectors = [
            galore_projector(g, gum_cfg.rank_r) for g in oriented0
        ]
        assignments = sample_assignments(gum_cfg.n_blocks, q, assign_rng)
        refreshed = []
        for b, proj, assign in zip(blocks, period_projectors, assignments):
            m, n = b.weights.shape
            shape = (gum_cfg.rank_r, n) if assign is Assignment.LOW_RANK else (m, n)
            refreshed.append(
                replace(
                    b,
                    momentum=np.zeros(shape),
                    projector=proj,
                    assignment=assign,
                    period_index=period,
                )
            )
        blocks = refreshed
        for inner in range(k):
            if inner == 0:
                oriented = oriented0
            else:
                grads = ctx.oracle(
                    [external_weights(b) for b in blocks], grad_rng
                )
                oriented = [
                    orient_like_block(b, g) for b, g in zip(blocks, grads)
                ]
            stepped = []
            for i, b in enumerate(blocks):
                if cfg.generic_per_step_projector:
                    rule = lambda g, _rng: galore_projector(g, gum_cfg.rank_r)
                else:
                    cached = period_projectors[i]
                    rule = lambda g, _rng, _c=cached: _c
                stepped.append(
                    unbiased_paradigm_step(
                        b,
                        oriented[i],
                        rule,
                        base_update,
                        q,
                        grad_rng,
                        step_size_eta=gum_cfg.step_size_eta,
                    )
                )
            blocks = stepped
            step = done + inner + 1
            loss = hooks.loss_fn([external_weights(b) for b in blocks])
            if step % hooks.record_cadence == 0:
                records.append(
                    assemble_record(step, blocks, hooks, loss, oriented)
                )
            if loss > hooks.loss_abort:
                status = STATUS_NUMERICAL_FAILURE
                aborted = True
                break
        done += k
        period += 1
    assignments = [b.assignment for b in blocks]
    return blocks, records, status, assignments


def run_single(cfg: ExperimentConfig, master_seed: int) -> RunOutcome:
    """Run one seed of the configured experiment, no file output."""
    ctx = build_problem(cfg)
    gum_cfg = _gum_config(cfg, ctx.n_blocks)
    grad_rng, assign_rng = _streams(cfg, master_seed)
    hooks = TraceHooks(
        loss_fn=ctx.loss_fn,
        mean_grad_fn=ctx.mean_grad_fn,
        record_cadence=cfg.trace_cadence,
        chi_cadence=cfg.chi_cadence,
        loss_abort=cfg.loss_abort,
    )
    if cfg.method == "muon":
        blocks, records, status, assigns = _run_muon(
            ctx, cfg, gum_cfg, grad_rng, hooks
        )
    elif cfg.method == "galore_muon":
        blocks, records, status, assigns = _run_galore_muon(
            ctx, cfg, gum_cfg, grad_rng, hooks
        )
    elif cfg.method == "gum":
        blocks, records, status, assigns = _run_gum(
            ctx, cfg, gum_cfg, grad_rng, assign_rng, hooks
        )
    else:
        blocks, records, status, assigns = _run_unbiased_generic(
            ctx, cfg, gum_cfg, grad_rng, assign_rng, hooks
        )
    return RunOutcome(
        seed=master_seed,
        status=status,
        records=records,
        blocks=blocks,
        grad_rng=grad_rng,
        assignment_rng=assign_rng,
        last_assignments=assigns,
    )


def run_suite(
    cfg: ExperimentConfig,
    out_dir,
    seed_override: Optional[int] = None,
) -> dict:
    """Run every configured seed and persist traces, checkpoints, summary.

    Seeds run in parallel worker slots capped by GUM_BENCH_THREADS; each run
    is single-writer on its own files, so the thread count can never change
    any output byte.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [int(seed_override)] if seed_override is not None else list(cfg.seeds)
    resolved = cfg.to_dict()
    resolved["config_hash"] = cfg.config_hash()
    with open(out / "config.json", "w") as fh:
        json.dump(resolved, fh, indent=2, sort_keys=True)
        fh.write("\n")

    def one(seed: int) -> dict:
        outcome = run_single(cfg, seed)
        trace_path = out / f"trace_seed_{seed}.csv"
        write_trace_csv(trace_path, outcome.records)
        ckpt_dir = out / f"checkpoint_seed_{seed}"
        # On blow-up the trace is truncated; the last recorded step is then
        # the best available position for the manifest.
        steps_done = (
            cfg.total_steps
            if outcome.status == STATUS_OK
            else outcome.records[-1].step
        )
        save_checkpoint(
            ckpt_dir,
            outcome.blocks,
            config_hash=cfg.config_hash(),
            global_step=steps_done,
            period_k=cfg.period_k,
            grad_rng=outcome.grad_rng,
            assignment_rng=outcome.assignment_rng,
        )
        final = outcome.records[-1]
        return {
            "seed": seed,
            "status": outcome.status,
            "steps_recorded": len(outcome.records),
            "final_step": final.step,
            "final_loss": final.loss,
            "final_grad_trace_norm": final.grad_trace_norm,
            "trace_file": trace_path.name,
            "checkpoint_dir": ckpt_dir.name,
        }

    slots = worker_slots()
    if slots > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=slots) as pool:
            runs = list(pool.map(one, seeds))
    else:
        runs = [one(s) for s in seeds]

    summary = {
        "config_hash": cfg.config_hash(),
        "method": cfg.method,
        "problem": cfg.problem,
        "loss_shifted": cfg.problem == "noisy_linear_regression",
        "seeds": seeds,
        "runs": runs,
        "status": max(r["status"] for r in runs),
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


CHECKPOINT_MANIFEST = "manifest.json"


def save_checkpoint(
    dir_path,
    blocks: Sequence[BlockState],
    *,
    config_hash: str,
    global_step: int,
    period_k: int,
    grad_rng: np.random.Generator,
    assignment_rng: np.random.Generator,
) -> None:
    """Persist per-block matrices plus a JSON manifest.

    Weights are written in their original problem orientation; momentum and
    projector keep the optimizer's internal (rows <= cols) layout.
    """
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, b in enumerate(blocks):
        weights_file = f"block_{i:03d}_weights.bin"
        momentum_file = f"block_{i:03d}_momentum.bin"
        save_matrix(d / weights_file, external_weights(b))
        save_matrix(d / momentum_file, b.momentum)
        projector_file = None
        if b.projector is not None:
            projector_file = f"block_{i:03d}_projector.bin"
            save_matrix(d / projector_file, b.projector.p)
        entries.append(
            {
                "id": i,
                "transposed": b.transposed,
                "assignment": b.assignment.value,
                "period_index": b.period_index,
                "weights_file": weights_file,
                "momentum_file": momentum_file,
                "projector_file": projector_file,
            }
        )
    manifest = {
        "format": 1,
        "config_hash": config_hash,
        "global_step": int(global_step),
        "period_index": int(global_step) // max(1, int(period_k)),
        "step_in_period": int(global_step) % max(1, int(period_k)),
        "assignments": [b.assignment.value for b in blocks],
        "rng_state": {
            "gradient": grad_rng.bit_generator.state,
            "assignment": assignment_rng.bit_generator.state,
        },
        "blocks": entries,
    }
    with open(d / CHECKPOINT_MANIFEST, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(dir_path) -> tuple[list[BlockState], dict]:
    d = Path(dir_path)
    manifest_path = d / CHECKPOINT_MANIFEST
    if not manifest_path.is_file():
        raise InvalidInputError(f"no checkpoint manifest at {manifest_path}")
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"corrupt checkpoint manifest: {exc}") from exc
    blocks = []
    for entry in manifest.get("blocks", []):
        weights = load_matrix(d / entry["weights_file"])
        if entry["transposed"]:
            weights = weights.T.copy()
        momentum = load_matrix(d / entry["momentum_file"])
        projector = None
        if entry.get("projector_file"):
            projector = Projector(load_matrix(d / entry["projector_file"]))
        blocks.append(
            BlockState(
                weights=weights,
                momentum=momentum,
                projector=projector,
                assignment=Assignment(entry["assignment"]),
                period_index=int(entry["period_index"]),
                transposed=bool(entry["transposed"]),
            )
        )
    return blocks, manifest


class GoldenResult(NamedTuple):
    ok: bool
    message: str


def golden_trace_check(candidate_path, reference_path, tol: float = 1e-12) -> GoldenResult:
    """Compare two trace CSVs field by field.

    Numeric fields must agree within ``tol`` absolutely; empty-versus-present
    optionals and the assignment bit strings must match exactly.
    """
    cand = read_trace_csv(candidate_path)
    ref = read_trace_csv(reference_path)
    if len(cand) != len(ref):
        return GoldenResult(
            False, f"row count differs: {len(cand)} vs reference {len(ref)}"
        )
    numeric = ("loss", "grad_trace_norm", "chi_residual", "stable_rank_mean")
    for row, (a, b) in enumerate(zip(cand, ref)):
        if a["step"] != b["step"]:
            return GoldenResult(
                False, f"row {row}: step {a['step']} vs reference {b['step']}"
            )
        if a["memory_scalars"] != b["memory_scalars"]:
            return GoldenResult(
                False,
                f"row {row} (step {a['step']}): memory_scalars "
                f"{a['memory_scalars']} vs reference {b['memory_scalars']}",
            )
        if a["assignment_bits"] != b["assignment_bits"]:
            return GoldenResult(
                False,
                f"row {row} (step {a['step']}): assignment bits "
                f"{a['assignment_bits']!r} vs reference {b['assignment_bits']!r}",
            )
        for fieldname in numeric:
            x, y = a[fieldname], b[fieldname]
            if (x is None) != (y is None):
                return GoldenResult(
                    False,
                    f"row {row} (step {a['step']}): {fieldname} presence differs",
                )
            if x is not None and abs(x - y) > tol:
                return GoldenResult(
                    False,
                    f"row {row} (step {a['step']}): {fieldname} differs by "
                    f"{abs(x - y):.3e} (> {tol:g}): {x!r} vs {y!r}",
                )
    return GoldenResult(True, f"{len(cand)} rows match within {tol:g}")
