"""One-step episodic actor-critic training over randomized scenarios.

Each epoch draws a fresh scenario, samples one exploratory action, scores
it with the configured reward paradigm, and performs one critic and one
actor update.  Episodes are single-step, so the critic is a reward
regressor (discount 0) and no target networks are needed.  Everything is
deterministic given the master seed; wall-clock timing is kept out of the
metrics CSV unless explicitly requested so reruns are byte-identical.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .autograd import Graph
from .channel import (ChannelPair, Scenario, UncertaintyModel, nominal_channel,
                      rng_from, seed_child)
from .diffusion import DiffusionSchedule, actor_loss, policy_action
from .nets import (ACTOR_VARIANTS, ActorParameters, BoundParams,
                   CriticParameters, critic_forward, init_critic,
                   init_parameters)
from .secrecy import BeamformingAction, ParadigmConfig, paradigm_reward


class NumericalAbort(RuntimeError):
    """Raised when a loss or reward turns non-finite; surfaced as exit code 3."""


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 2000
    learning_rate: float = 1e-4
    batch_size: int = 64
    actor_batch_size: int | None = None  # None: same batch as the critic
    replay_capacity: int = 10_000
    soft_update_tau: float = 0.005  # kept for config compatibility; one-step
    actor_variant: str = "moe_transformer_diffusion"
    master_seed: int = 0
    paradigm: ParadigmConfig = field(default_factory=ParadigmConfig)
    scenario: Scenario = field(default_factory=Scenario)
    uncertainty: UncertaintyModel = field(default_factory=UncertaintyModel)
    schedule: DiffusionSchedule = field(default_factory=DiffusionSchedule)
    eval_every: int = 20
    eval_episodes: int = 16
    randomize_horizontal_m: float = 20.0
    randomize_vertical_m: float = 30.0
    grad_clip: float | None = None
    record_timing: bool = False
    state_channel_scale: float = 1e-4
    state_sigma_scales: tuple = (10.0, 0.2, 0.1)
    actor_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if not 0.0 < self.soft_update_tau <= 1.0:
            raise ValueError("soft_update_tau must lie in (0, 1]")
        if self.batch_size < 1 or self.batch_size > self.replay_capacity:
            raise ValueError("batch_size must lie in [1, replay_capacity]")
        if self.actor_batch_size is not None and not (
                1 <= self.actor_batch_size <= self.batch_size):
            raise ValueError("actor_batch_size must lie in [1, batch_size]")
        if self.actor_variant not in ACTOR_VARIANTS:
            raise ValueError(f"actor_variant must be one of {ACTOR_VARIANTS}, "
                             f"got {self.actor_variant!r}")
        if self.eval_every < 1 or self.eval_episodes < 1:
            raise ValueError("eval cadence fields must be >= 1")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive when set")
        if self.state_channel_scale <= 0 or min(self.state_sigma_scales) <= 0:
            raise ValueError("state standardization constants must be positive")

    @property
    def state_dim(self) -> int:
        n_rx = self.scenario.uav_array.size
        n_tx = self.scenario.bs_array.size
        return 4 * n_rx * n_tx + 3


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float

    def __post_init__(self):
        if not (np.all(np.isfinite(self.state))
                and np.all(np.isfinite(self.action))
                and np.isfinite(self.reward)):
            raise NumericalAbort("non-finite transition")


class ReplayBuffer:
    """FIFO ring of transitions; uniform sampling with replacement."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.items: list[Transition] = []

    def push(self, tr: Transition):
        self.items.append(tr)
        if len(self.items) > self.capacity:
            self.items.pop(0)

    def sample(self, n: int, rng) -> list[Transition]:
        idx = rng.integers(0, len(self.items), size=n)
        return [self.items[i] for i in idx]

    def __len__(self):
        return len(self.items)


@dataclass
class MetricsRow:
    epoch: int
    reward: float
    critic_loss: float
    actor_loss: float
    eval_reward: float | None
    iter_seconds: float
    expert_fractions: np.ndarray | None
    wall_time: float  # monotonic timestamp; not serialized


CSV_HEADER = ("epoch,reward,critic_loss,actor_loss,eval_reward,iter_seconds,"
              "expert_frac_0,expert_frac_1,expert_frac_2,expert_frac_3")


def _fmt(x) -> str:
    return "" if x is None else f"{x:.12g}"


@dataclass
class MetricsLog:
    rows: list = field(default_factory=list)

    def append(self, row: MetricsRow):
        self.rows.append(row)

    def to_csv(self, path=None, record_timing: bool = False) -> str:
        lines = [CSV_HEADER]
        for r in self.rows:
            secs = r.iter_seconds if record_timing else 0.0
            fracs = ["", "", "", ""]
            if r.expert_fractions is not None:
                fracs = [_fmt(v) for v in r.expert_fractions]
            lines.append(",".join([
                str(r.epoch), _fmt(r.reward), _fmt(r.critic_loss),
                _fmt(r.actor_loss), _fmt(r.eval_reward), _fmt(secs), *fracs]))
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w", newline="\n") as fh:
                fh.write(text)
        return text

    def summary(self) -> dict:
        rewards = [r.reward for r in self.rows]
        evals = [r.eval_reward for r in self.rows if r.eval_reward is not None]
        return {
            "epochs": len(self.rows),
            "final_reward": rewards[-1] if rewards else None,
            "mean_reward_last_50": float(np.mean(rewards[-50:])) if rewards else None,
            "final_eval_reward": evals[-1] if evals else None,
            "mean_iter_seconds": float(np.mean([r.iter_seconds for r in self.rows]))
            if self.rows else None,
        }


@dataclass
class EvaluationReport:
    """Per-episode inference rewards plus box-plot statistics."""

    rewards: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.mean(self.rewards))

    @property
    def minimum(self) -> float:
        return float(np.min(self.rewards))

    @property
    def maximum(self) -> float:
        return float(np.max(self.rewards))

    @property
    def variance(self) -> float:
        return float(np.var(self.rewards))

    @property
    def quartiles(self) -> tuple:
        from .figures import quartiles
        return quartiles(self.rewards)

    def summary(self) -> dict:
        q1, med, q3 = self.quartiles
        return {"episodes": int(self.rewards.size), "mean": self.mean,
                "min": self.minimum, "max": self.maximum,
                "variance": self.variance, "q1": q1, "median": med, "q3": q3}


@dataclass
class LatencyResult:
    mean_seconds: float
    std_seconds: float
    iterations: int


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Adaptive moment estimation with (0.9, 0.999), eps 1e-8, no decay."""

    def __init__(self, bag, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.bag = bag
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(a) for name, a in bag}
        self.v = {name: np.zeros_like(a) for name, a in bag}

    def step(self, grads: dict, clip: float | None = None):
        if self.lr == 0.0:
            return
        scale = 1.0
        if clip is not None:
            total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if total > clip:
                scale = clip / total
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        inv_sqrt_c2 = 1.0 / np.sqrt(1.0 - self.beta2 ** self.t)
        for name, g in grads.items():
            if scale != 1.0:
                g = g * scale
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            denom = np.sqrt(v)
            denom *= inv_sqrt_c2
            denom += self.eps
            np.divide(m, denom, out=denom)
            denom *= self.lr / c1
            self.bag.arrays[name] -= denom


# ---------------------------------------------------------------------------
# state encoding and scenario randomization


def make_state(nominal: ChannelPair, u: UncertaintyModel,
               cfg: TrainingConfig) -> np.ndarray:
    """Optimizer input: standardized [Re h_b, Im h_b, Re h_e, Im h_e, sigmas]."""
    cs = cfg.state_channel_scale
    ss = cfg.state_sigma_scales
    feats = np.concatenate([
        nominal.h_b.re.ravel(), nominal.h_b.im.ravel(),
        nominal.h_e.re.ravel(), nominal.h_e.im.ravel()]) / cs
    sigmas = np.array([u.position_sigma / ss[0], u.csi_error_sigma / ss[1],
                       u.aoa_sigma / ss[2]])
    return np.concatenate([feats, sigmas])


def randomized_scenario(base: Scenario, horizontal: float, vertical: float,
                        rng) -> Scenario:
    """Uniform position jitter inside the configured box; altitude kept legal."""
    def jitter(pos):
        out = np.asarray(pos, dtype=np.float64).copy()
        out[0] += rng.uniform(-horizontal, horizontal)
        out[1] += rng.uniform(-horizontal, horizontal)
        out[2] += rng.uniform(-vertical, vertical)
        out[2] = min(max(out[2], 0.5), 1000.0)
        return tuple(out)

    return base.with_positions(uav=jitter(base.uav_position),
                               eve=jitter(base.eve_position))


# ---------------------------------------------------------------------------
# trainer


class Trainer:
    """Owns the mutable parameter copies and the per-epoch update cycle."""

    def __init__(self, config: TrainingConfig):
        self.cfg = config
        seed = config.master_seed
        overrides = dict(config.actor_overrides)
        overrides.setdefault("diffusion_steps", config.schedule.steps)
        self.actor = init_parameters(config.actor_variant, config.state_dim,
                                     (seed, 100), **overrides)
        self.critic = init_critic(config.state_dim,
                                  self.actor.hyper.action_dim, (seed, 101))
        self.opt_actor = Adam(self.actor.bag, config.learning_rate)
        self.opt_critic = Adam(self.critic.bag, config.learning_rate)
        self.replay = ReplayBuffer(config.replay_capacity)
        self.log = MetricsLog()

    # one environment interaction + one critic and one actor update
    def step(self, epoch: int) -> MetricsRow:
        cfg = self.cfg
        seed = cfg.master_seed
        t0 = time.perf_counter()

        scen = randomized_scenario(cfg.scenario, cfg.randomize_horizontal_m,
                                   cfg.randomize_vertical_m,
                                   rng_from(seed, 1, epoch))
        nominal = nominal_channel(scen, seed_child(seed, 2, epoch))
        state = make_state(nominal, cfg.uncertainty, cfg)

        g = Graph()
        bound = BoundParams(g, self.actor.bag)
        action_node, _ = policy_action(
            g, self.actor, bound, cfg.schedule, g.constant(state[None]),
            "exploratory", seed_child(seed, 3, epoch), scen.tx_power)
        action_vec = action_node.value[0].copy()
        act = BeamformingAction.from_vector(action_vec, scen.tx_power)
        breakdown = paradigm_reward(nominal, scen, cfg.uncertainty, act,
                                    cfg.paradigm, seed_child(seed, 4, epoch),
                                    n_samples=cfg.paradigm.mc_samples_train)
        self.replay.push(Transition(state, act.to_vector(), breakdown.reward))

        batch = self.replay.sample(cfg.batch_size, rng_from(seed, 5, epoch))
        critic_loss = self._critic_update(batch)
        actor_loss_val, fractions = self._actor_update(batch, epoch)

        if not (np.isfinite(critic_loss) and np.isfinite(actor_loss_val)):
            raise NumericalAbort(
                f"non-finite loss at epoch {epoch}: critic={critic_loss}, "
                f"actor={actor_loss_val}")

        return MetricsRow(epoch=epoch, reward=breakdown.reward,
                          critic_loss=critic_loss, actor_loss=actor_loss_val,
                          eval_reward=None,
                          iter_seconds=time.perf_counter() - t0,
                          expert_fractions=fractions,
                          wall_time=time.monotonic())

    def _critic_update(self, batch) -> float:
        g = Graph()
        bound = BoundParams(g, self.critic.bag)
        states = g.constant(np.stack([t.state for t in batch]))
        actions = g.constant(np.stack([t.action for t in batch]))
        rewards = g.constant(np.array([[t.reward] for t in batch]))
        q1, q2 = critic_forward(g, self.critic, bound, states, actions)
        loss = g.mean(g.elementwise("square", q1 - rewards)) \
            + g.mean(g.elementwise("square", q2 - rewards))
        g.backward(loss)
        self.opt_critic.step(bound.grads(), self.cfg.grad_clip)
        return float(loss.value)

    def _actor_update(self, batch, epoch: int):
        k = self.cfg.actor_batch_size
        if k is not None:
            batch = batch[:k]
        states = np.stack([t.state for t in batch])
        loss, grads, reports = actor_loss(
            self.actor, self.critic, self.cfg.schedule, states,
            seed_child(self.cfg.master_seed, 6, epoch),
            self.cfg.scenario.tx_power)
        self.opt_actor.step(grads, self.cfg.grad_clip)
        fractions = None
        if reports:
            counts = np.sum([r.counts for r in reports], axis=0)
            fractions = counts / counts.sum()
        return loss, fractions

    def train(self) -> MetricsLog:
        cfg = self.cfg
        for epoch in range(cfg.epochs):
            row = self.step(epoch)
            if (epoch + 1) % cfg.eval_every == 0:
                report = evaluate(self.actor, cfg.eval_episodes, cfg,
                                  seed_child(cfg.master_seed, 7, epoch))
                row.eval_reward = report.mean
            self.log.append(row)
        return self.log


def train(config: TrainingConfig):
    """Run the full loop; returns (metrics log, actor, critic)."""
    tr = Trainer(config)
    log = tr.train()
    return log, tr.actor, tr.critic


def evaluate(actor: ActorParameters, n_episodes: int, cfg: TrainingConfig,
             rng_seed) -> EvaluationReport:
    """Deterministic-sampler inference over fresh scenarios, eval-grade MC."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    rewards = np.empty(n_episodes)
    for i in range(n_episodes):
        scen = randomized_scenario(cfg.scenario, cfg.randomize_horizontal_m,
                                   cfg.randomize_vertical_m,
                                   rng_from(rng_seed, 40, i))
        nominal = nominal_channel(scen, seed_child(rng_seed, 41, i))
        state = make_state(nominal, cfg.uncertainty, cfg)
        g = Graph()
        bound = BoundParams(g, actor.bag)
        action_node, _ = policy_action(
            g, actor, bound, cfg.schedule, g.constant(state[None]),
            "deterministic", seed_child(rng_seed, 42, i), scen.tx_power)
        act = BeamformingAction.from_vector(action_node.value[0], scen.tx_power)
        breakdown = paradigm_reward(nominal, scen, cfg.uncertainty, act,
                                    cfg.paradigm, seed_child(rng_seed, 43, i),
                                    n_samples=cfg.paradigm.mc_samples_eval)
        rewards[i] = breakdown.reward
    return EvaluationReport(rewards)


def measure_latency(config: TrainingConfig, n_iterations: int = 20,
                    warmup: int = 5) -> LatencyResult:
    """Wall-clock seconds per full train iteration, averaged after warm-up."""
    if n_iterations < 10:
        raise ValueError("latency measurement needs at least 10 iterations")
    tr = Trainer(config)
    for epoch in range(warmup):
        tr.step(epoch)
    times = np.empty(n_iterations)
    for k in range(n_iterations):
        t0 = time.perf_counter()
        tr.step(warmup + k)
        times[k] = time.perf_counter() - t0
    return LatencyResult(float(np.mean(times)), float(np.std(times)),
                         n_iterations)


# ---------------------------------------------------------------------------
# paired comparison


@dataclass
class ComparisonRun:
    label: str
    seed: int
    log: MetricsLog
    evaluation: EvaluationReport


@dataclass
class ComparisonResult:
    runs: list
    labels: list

    def per_run_rows(self) -> list[dict]:
        return [{"label": r.label, "seed": r.seed,
                 "final_eval_mean": r.evaluation.mean,
                 "final_eval_variance": r.evaluation.variance,
                 "final_train_reward_mean_50":
                     float(np.mean([row.reward for row in r.log.rows[-50:]]))}
                for r in self.runs]

    def aggregate(self, label: str) -> dict:
        runs = [r for r in self.runs if r.label == label]
        means = np.array([r.evaluation.mean for r in runs])
        pooled = np.concatenate([r.evaluation.rewards for r in runs])
        return {"label": label,
                "median_final_eval": float(np.median(means)),
                "mean_final_eval": float(np.mean(means)),
                "pooled_variance": float(np.var(pooled)),
                "seeds": len(runs)}

    def aggregates(self) -> list[dict]:
        base = self.aggregate(self.labels[0])
        out = []
        for label in self.labels:
            agg = self.aggregate(label)
            denom = abs(base["mean_final_eval"])
            agg["relative_improvement_vs_first"] = (
                0.0 if denom == 0.0 else
                (agg["mean_final_eval"] - base["mean_final_eval"]) / denom)
            base_runs = {r.seed: r for r in self.runs if r.label == self.labels[0]}
            wins = sum(1 for r in self.runs
                       if r.label == label
                       and r.evaluation.mean > base_runs[r.seed].evaluation.mean)
            agg["wins_vs_first"] = wins
            out.append(agg)
        return out


def compare(configs: list[TrainingConfig], seeds: list[int],
            labels: list[str] | None = None,
            eval_episodes: int | None = None) -> ComparisonResult:
    """Paired-seed benchmark of >= 2 configs sharing scenario and paradigm."""
    if len(configs) < 2:
        raise ValueError("compare needs at least two configs")
    if not seeds:
        raise ValueError("compare needs at least one seed")
    first = configs[0]
    for c in configs[1:]:
        if c.paradigm.paradigm != first.paradigm.paradigm:
            raise ValueError("compared configs must share the reward paradigm")
        if (c.scenario != first.scenario
                or c.randomize_horizontal_m != first.randomize_horizontal_m
                or c.randomize_vertical_m != first.randomize_vertical_m
                or c.uncertainty != first.uncertainty):
            raise ValueError("compared configs must share scenario ranges")
    if labels is None:
        labels = []
        for i, c in enumerate(configs):
            lbl = c.actor_variant
            labels.append(lbl if lbl not in labels else f"{lbl}#{i}")
    n_eval = eval_episodes if eval_episodes is not None else first.eval_episodes
    runs = []
    for cfg, label in zip(configs, labels):
        for seed in seeds:
            run_cfg = replace(cfg, master_seed=seed)
            log, actor, _ = train(run_cfg)
            report = evaluate(actor, n_eval, run_cfg, seed_child(seed, 900))
            runs.append(ComparisonRun(label, seed, log, report))
    return ComparisonResult(runs, list(labels))
