"""Experiment runner: seeded training runs, evaluation, curves, compare.

A run is specified by a flat key=value config (unknown keys are
rejected so typos fail before any work happens). Each seed derives five
named RNG streams from the run seed, in this order:

    env, exploration, replay-sampling, init, evaluation

so evaluation never perturbs training (the training trajectory is
identical with evaluation disabled), and the replay stream's draw order
within an iteration is documented in metacritic.train_iteration.

Each seed writes ``seed<k>.csv`` with columns exactly

    step,eval_return_mean,eval_return_std,loss_critic,loss_mcritic,loss_meta

(loss columns are means over the gradient iterations since the previous
evaluation row; loss_critic is the actor's critic-provided loss), a
``seed<k>.meta.txt`` key=value metadata record, and a generated
``plot_curves.py`` so nothing in the core imports a plotting library.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass

import numpy as np

from . import __version__
from .envs import make_env
from .metacritic import MetaState, train_iteration
from .nets import Actor, MetaCriticNet, actor_named_params, save_params
from .offpac import AlgoState, Hyper, exploration_action
from .replay import ReplayBuffer, Transition

CSV_COLUMNS = ("step", "eval_return_mean", "eval_return_std",
               "loss_critic", "loss_mcritic", "loss_meta")

MC_VARIANT_CHOICES = ("none", "feature", "feature-state-action", "param-reg")


@dataclass
class RunConfig:
    algo: str = "ddpg"
    mc_variant: str = "none"
    meta_loss: str = "clip"
    env: str = "pointmass"
    env_seed: int = 0
    horizon: int = 0                    # 0 -> environment default
    total_steps: int = 10_000
    eval_every: int = 1000
    eval_episodes: int = 10
    seeds: tuple = (0,)
    batch_n: int = 64
    batch_m: int = 64
    warmup_steps: int = 1000
    buffer_capacity: int = 100_000
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    mc_lr: float = 1e-3
    inner_lr: float = -1.0              # -1 -> share actor_lr
    gamma: float = 0.99
    tau: float = 0.005
    expl_noise: float = 0.1
    policy_delay: int = 2
    target_noise: float = 0.2
    noise_clip: float = 0.5
    alpha: float = 0.2
    optimizer: str = "sgd"
    sequential_inner: bool = False
    hidden_actor: tuple = (64, 64)
    hidden_critic: tuple = (64, 64)
    mc_hidden: int = 100
    updates_multiplier: float = 1.0
    params_multiplier: float = 1.0
    snapshot_every: int = 0             # env steps between actor snapshots; 0 off
    smooth_window: int = 30
    out_dir: str = "runs"

    def validate(self) -> "RunConfig":
        if self.algo not in ("ddpg", "td3", "sac"):
            raise ValueError(f"unknown algo {self.algo!r}")
        if self.mc_variant not in MC_VARIANT_CHOICES:
            raise ValueError(f"unknown mc_variant {self.mc_variant!r}")
        if self.meta_loss not in ("plain", "clip"):
            raise ValueError(f"unknown meta_loss {self.meta_loss!r}")
        if self.updates_multiplier < 1.0 or self.params_multiplier < 1.0:
            raise ValueError("control multipliers must be >= 1")
        if self.total_steps < 0 or self.eval_every < 1 or self.eval_episodes < 1:
            raise ValueError("bad step/eval settings")
        if not self.seeds:
            raise ValueError("need at least one seed")
        return self


_INT_TUPLE_FIELDS = {"seeds", "hidden_actor", "hidden_critic"}


def _parse_value(name: str, text: str, ftype):
    text = text.strip()
    if name in _INT_TUPLE_FIELDS:
        return tuple(int(v) for v in text.split(",") if v != "")
    if ftype is bool:
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"bad boolean for {name}: {text!r}")
    if ftype is int:
        return int(text)
    if ftype is float:
        return float(text)
    return text


def parse_config(text: str) -> RunConfig:
    """Parse flat key=value lines; '#' starts a comment; unknown keys error."""
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    kw = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in fields:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        kw[key] = _parse_value(key, val, type(getattr(RunConfig(), key)))
    return RunConfig(**kw).validate()


def load_config(path: str) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def config_to_text(cfg: RunConfig) -> str:
    lines = []
    for f in dataclasses.fields(RunConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        lines.append(f"{f.name}={v}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# rng architecture
# ---------------------------------------------------------------------------

@dataclass
class Streams:
    env: np.random.Generator
    exploration: np.random.Generator
    replay: np.random.Generator
    init: np.random.Generator
    evaluation: np.random.Generator


def rng_streams(seed: int) -> Streams:
    """Named independent streams derived from one run seed."""
    children = np.random.SeedSequence(seed).spawn(5)
    gens = [np.random.Generator(np.random.PCG64(c)) for c in children]
    return Streams(*gens)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def greedy_action(actor: Actor, s: np.ndarray) -> np.ndarray:
    mode = "mean" if actor.head_kind == "gaussian" else "deterministic"
    return actor.act_np(s, mode=mode)


def evaluate_policy(policy, env, episodes: int = 10,
                    rng: np.random.Generator | None = None):
    """Mean and std of the undiscounted episode return under greedy actions.

    ``policy`` is an Actor or any callable state -> action. No learning,
    no buffer writes; uses only the generator passed in.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    rng = rng or np.random.default_rng(0)
    act = (lambda s: greedy_action(policy, s)) if isinstance(policy, Actor) else policy
    returns = []
    for _ in range(episodes):
        s = env.reset(rng)
        total = 0.0
        done = False
        while not done:
            s, r, done = env.step(s, act(s), rng)
            total += r
        returns.append(total)
    returns = np.asarray(returns)
    return float(returns.mean()), float(returns.std())


# ---------------------------------------------------------------------------
# curve utilities
# ---------------------------------------------------------------------------

def smooth(series, window: int) -> np.ndarray:
    """Centered moving average, truncated at the edges; length preserved."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=np.float64)
    n = x.size
    out = np.empty(n)
    lo_off = (window - 1) // 2
    hi_off = window - 1 - lo_off
    for i in range(n):
        lo = max(0, i - lo_off)
        hi = min(n, i + hi_off + 1)
        out[i] = x[lo:hi].mean()
    return out


def write_curve(path: str, rows: list[tuple]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) if i else str(int(v))
                              for i, v in enumerate(row)) + "\n")


def read_curve(path: str) -> dict[str, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV schema in {path}: {header}")
        cols = {c: [] for c in CSV_COLUMNS}
        for line in fh:
            vals = line.strip().split(",")
            for c, v in zip(CSV_COLUMNS, vals):
                cols[c].append(float(v))
    return {c: np.asarray(v) for c, v in cols.items()}


def write_metadata(path: str, entries: dict) -> None:
    with open(path, "w") as fh:
        for k, v in entries.items():
            fh.write(f"{k}={v}\n")


def read_metadata(path: str) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line and "=" in line:
                k, v = line.split("=", 1)
                out[k] = v
    return out


_PLOT_SCRIPT = """\
# Generated plot helper; run with: python3 plot_curves.py
# Reads every seed*.csv next to this file and plots smoothed eval returns.
import glob
import os

import matplotlib.pyplot as plt
import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
WINDOW = {window}


def smooth(x, w):
    out = np.empty(len(x))
    lo_off = (w - 1) // 2
    for i in range(len(x)):
        lo = max(0, i - lo_off)
        hi = min(len(x), i + (w - 1 - lo_off) + 1)
        out[i] = np.mean(x[lo:hi])
    return out


curves = []
for path in sorted(glob.glob(os.path.join(HERE, "seed*.csv"))):
    data = np.genfromtxt(path, delimiter=",", names=True)
    curves.append(np.atleast_1d(data["eval_return_mean"]))
    steps = np.atleast_1d(data["step"])
if curves:
    m = np.mean(np.stack(curves), axis=0)
    s = np.std(np.stack(curves), axis=0)
    ms = smooth(m, WINDOW)
    plt.plot(steps, ms)
    plt.fill_between(steps, ms - s, ms + s, alpha=0.25)
    plt.xlabel("environment steps")
    plt.ylabel("eval return")
    plt.title(os.path.basename(HERE))
    plt.savefig(os.path.join(HERE, "curves.png"), dpi=150)
    print("wrote", os.path.join(HERE, "curves.png"))
"""


# ---------------------------------------------------------------------------
# parameter-count control ("+params")
# ---------------------------------------------------------------------------

def _dense_count(dims) -> int:
    return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))


def network_param_count(cfg: RunConfig, state_dim: int, action_dim: int,
                        hidden_actor=None, hidden_critic=None) -> int:
    ha = list(hidden_actor or cfg.hidden_actor)
    hc = list(hidden_critic or cfg.hidden_critic)
    head_out = 2 * action_dim if cfg.algo == "sac" else action_dim
    actor = _dense_count([state_dim] + ha) + _dense_count([ha[-1], head_out])
    critic = _dense_count([state_dim + action_dim] + hc + [1])
    if cfg.algo in ("td3", "sac"):
        critic *= 2
    return actor + critic


def params_scale(cfg: RunConfig, state_dim: int, action_dim: int) -> dict:
    """Integer hidden widths whose total actor+critic parameter count is
    within 5% of params_multiplier times the baseline count."""
    base = network_param_count(cfg, state_dim, action_dim)
    target = cfg.params_multiplier * base
    if cfg.params_multiplier == 1.0:
        return {"hidden_actor": tuple(cfg.hidden_actor),
                "hidden_critic": tuple(cfg.hidden_critic),
                "base_count": base, "achieved_count": base, "target_count": base}
    best = None
    for r1000 in range(1000, 4001):
        r = r1000 / 1000.0
        ha = tuple(max(1, round(h * r)) for h in cfg.hidden_actor)
        hc = tuple(max(1, round(h * r)) for h in cfg.hidden_critic)
        count = network_param_count(cfg, state_dim, action_dim, ha, hc)
        err = abs(count - target)
        if best is None or err < best[0]:
            best = (err, ha, hc, count)
        if count > target * 1.25:
            break
    _, ha, hc, count = best
    if abs(count - target) > 0.05 * target:
        raise ValueError(f"cannot hit parameter target within 5%: "
                         f"best {count} vs target {target:.0f}")
    return {"hidden_actor": ha, "hidden_critic": hc, "base_count": base,
            "achieved_count": count, "target_count": target}


# ---------------------------------------------------------------------------
# the runner
# ---------------------------------------------------------------------------

def build_meta_state(cfg: RunConfig, env_spec, init_rng,
                     hidden_actor=None, hidden_critic=None) -> MetaState:
    hyper = Hyper(actor_lr=cfg.actor_lr, critic_lr=cfg.critic_lr, gamma=cfg.gamma,
                  tau=cfg.tau, expl_noise=cfg.expl_noise,
                  policy_delay=cfg.policy_delay, target_noise=cfg.target_noise,
                  noise_clip=cfg.noise_clip, alpha=cfg.alpha,
                  optimizer=cfg.optimizer)
    base = AlgoState(cfg.algo, env_spec, init_rng, hyper=hyper,
                     hidden_actor=tuple(hidden_actor or cfg.hidden_actor),
                     hidden_critic=tuple(hidden_critic or cfg.hidden_critic))
    mc = None
    if cfg.mc_variant != "none":
        mc = MetaCriticNet(cfg.mc_variant, base.actor, init_rng, hidden=cfg.mc_hidden)
    inner = None if cfg.inner_lr < 0 else cfg.inner_lr
    return MetaState(base, mc, meta_loss_kind=cfg.meta_loss, inner_rate=inner,
                     mc_rate=cfg.mc_lr, sequential_inner=cfg.sequential_inner)


def run_seed(cfg: RunConfig, seed: int, out_dir: str,
             evaluation_enabled: bool = True) -> dict:
    """Train one seed; writes seedK.csv / seedK.meta.txt into out_dir."""
    streams = rng_streams(seed)
    env = make_env(cfg.env, cfg.env_seed, horizon=cfg.horizon or None)
    eval_env = make_env(cfg.env, cfg.env_seed, horizon=cfg.horizon or None)
    spec = env.spec

    scaled = params_scale(cfg, spec.state_dim, spec.action_dim)
    ms = build_meta_state(cfg, spec, streams.init,
                          hidden_actor=scaled["hidden_actor"],
                          hidden_critic=scaled["hidden_critic"])
    base = ms.base
    buffer = ReplayBuffer(cfg.buffer_capacity, spec.state_dim, spec.action_dim)

    rows: list[tuple] = []
    acc = {"loss_critic": 0.0, "loss_mcritic": 0.0, "loss_meta": 0.0}
    acc_n = 0
    update_blocks = 0
    credit = 0.0
    aborted_at = None
    snap_dir = os.path.join(out_dir, "snapshots")
    if cfg.snapshot_every > 0:
        os.makedirs(snap_dir, exist_ok=True)

    s = env.reset(streams.env)
    for step in range(1, cfg.total_steps + 1):
        if step <= cfg.warmup_steps:
            a = streams.exploration.uniform(-spec.action_bound, spec.action_bound,
                                            size=spec.action_dim)
        else:
            a = exploration_action(base, s, streams.exploration)
        s2, r, done = env.step(s, a, streams.env)
        # horizon timeouts are not terminal: bootstrap through the cutoff
        buffer.push(Transition(s.copy(), np.asarray(a, dtype=np.float64), r,
                               s2.copy(), False))
        s = env.reset(streams.env) if done else s2

        if step > cfg.warmup_steps:
            credit += cfg.updates_multiplier
            while credit >= 1.0:
                m = train_iteration(ms, buffer, streams.replay,
                                    batch_n=cfg.batch_n, batch_m=cfg.batch_m)
                update_blocks += 1
                credit -= 1.0
                if any(math.isnan(m[k]) for k in ("loss_critic", "loss_mcritic",
                                                  "loss_meta", "loss_td")):
                    aborted_at = step
                    break
                for k in acc:
                    acc[k] += m[k]
                acc_n += 1
        if aborted_at is not None:
            rows.append((step, float("nan"), float("nan"),
                         float("nan"), float("nan"), float("nan")))
            break

        if cfg.snapshot_every > 0 and step % cfg.snapshot_every == 0:
            save_params(os.path.join(snap_dir, f"seed{seed}_step{step:08d}.txt"),
                        actor_named_params(base.actor))

        if step % cfg.eval_every == 0:
            if evaluation_enabled:
                mean, std = evaluate_policy(base.actor, eval_env,
                                            cfg.eval_episodes, streams.evaluation)
            else:
                mean, std = 0.0, 0.0
            k = max(acc_n, 1)
            rows.append((step, mean, std, acc["loss_critic"] / k,
                         acc["loss_mcritic"] / k, acc["loss_meta"] / k))
            acc = {key: 0.0 for key in acc}
            acc_n = 0

    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"seed{seed}.csv")
    write_curve(csv_path, rows)
    meta = {"code_version": __version__, "seed": seed, "env_instance_seed": cfg.env_seed,
            "update_blocks": update_blocks,
            "params_actor_critic": scaled["achieved_count"],
            "params_base_count": scaled["base_count"],
            "params_hidden_actor": ",".join(map(str, scaled["hidden_actor"])),
            "params_hidden_critic": ",".join(map(str, scaled["hidden_critic"])),
            "params_formula": "hidden widths scaled by common integer-rounded factor",
            "aborted_at_step": aborted_at if aborted_at is not None else ""}
    for line in config_to_text(cfg).splitlines():
        k, v = line.split("=", 1)
        meta[f"config.{k}"] = v
    write_metadata(os.path.join(out_dir, f"seed{seed}.meta.txt"), meta)
    with open(os.path.join(out_dir, "plot_curves.py"), "w") as fh:
        fh.write(_PLOT_SCRIPT.format(window=cfg.smooth_window))
    return {"csv": csv_path, "rows": rows, "update_blocks": update_blocks,
            "meta_state": ms, "aborted_at": aborted_at}


def _run_seed_slim(args) -> tuple:
    cfg, seed, out = args
    res = run_seed(cfg, seed, out)
    return seed, {k: v for k, v in res.items() if k != "meta_state"}


def run(cfg: RunConfig, out_dir: str | None = None, workers: int = 1) -> dict:
    """Run every seed in the config; returns per-seed artifact records.

    Seeds are independent (per-seed RNG streams and per-seed output
    files), so with workers > 1 they execute in parallel processes; the
    results are identical to a serial run.
    """
    cfg.validate()
    out = out_dir or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    if workers > 1 and len(cfg.seeds) > 1:
        import multiprocessing

        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(min(workers, len(cfg.seeds))) as pool:
            return dict(pool.map(_run_seed_slim,
                                 [(cfg, s, out) for s in cfg.seeds]))
    results = {}
    for seed in cfg.seeds:
        results[seed] = run_seed(cfg, seed, out)
    return results


# ---------------------------------------------------------------------------
# summary metric and comparison
# ---------------------------------------------------------------------------

def max_average_return(curves: list[dict], window: int = 30) -> float:
    """Max over evaluation points of the across-seed mean smoothed return.

    Seeds must share evaluation steps. Smoothing the mean curve equals
    averaging per-seed smoothed curves because the smoother is linear.
    """
    if not curves:
        raise ValueError("no curves")
    steps = curves[0]["step"]
    for c in curves[1:]:
        if not np.array_equal(c["step"], steps):
            raise ValueError("curves have mismatched evaluation steps")
    mean = np.mean(np.stack([c["eval_return_mean"] for c in curves]), axis=0)
    return float(np.max(smooth(mean, window)))


def load_run_curves(run_dir: str) -> list[dict]:
    names = sorted(n for n in os.listdir(run_dir)
                   if n.startswith("seed") and n.endswith(".csv"))
    if not names:
        raise ValueError(f"no seed CSVs in {run_dir}")
    return [read_curve(os.path.join(run_dir, n)) for n in names]


def compare(dir_a: str, dir_b: str, window: int = 30) -> dict:
    a = max_average_return(load_run_curves(dir_a), window)
    b = max_average_return(load_run_curves(dir_b), window)
    return {"a": a, "b": b, "ratio": (a / b if b != 0 else float("inf"))}
