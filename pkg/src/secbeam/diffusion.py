"""Denoising action generator and the critic-ascent actor losses.

Actions are born as standard Gaussian noise and refined through the
reverse chain for ``steps`` iterations; the final state is squashed by
tanh and projected onto the transmit power budget.  The whole chain is
built on one graph, so the actor trains by ascending the critic through
every denoising step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Graph, NodeRef
from .channel import rng_from
from .nets import (ActorParameters, BoundParams, CriticParameters,
                   actor_forward, critic_forward, moe_balance_loss,
                   DIFFUSION_VARIANTS)
from .secrecy import project_rows_node

MODES = ("exploratory", "deterministic")
BALANCE_COEF = 0.01  # weight of the MoE load-balancing term in the actor loss


@dataclass(frozen=True)
class DiffusionSchedule:
    """Linear beta schedule; betas strictly increase, alpha_bar strictly decays."""

    steps: int = 6
    beta_start: float = 1e-4
    beta_end: float = 0.2

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("schedule needs at least one step")
        beta = self.beta
        if not (np.all(beta > 0.0) and np.all(beta < 1.0)):
            raise ValueError("betas must lie strictly inside (0, 1)")
        if self.steps > 1 and not np.all(np.diff(beta) > 0.0):
            raise ValueError("betas must be strictly increasing")

    @property
    def beta(self) -> np.ndarray:
        return np.linspace(self.beta_start, self.beta_end, self.steps)

    @property
    def alpha(self) -> np.ndarray:
        return 1.0 - self.beta

    @property
    def alpha_bar(self) -> np.ndarray:
        return np.cumprod(self.alpha)


@dataclass
class ChainRecord:
    """Reverse-chain states x_T .. x_0 plus the emitted action."""

    states: list  # numpy [B x A] per entry; len == steps + 1
    action: np.ndarray

    def replay(self, g: Graph, tx_power: float) -> np.ndarray:
        """Recompute the action from the recorded final state; bit-exact."""
        x0 = g.constant(self.states[-1])
        out = project_rows_node(g, g.elementwise("tanh", x0), tx_power)
        return out.value


def _check_mode(mode: str):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def _denoise(g, params, bound, state, x, t_idx):
    out = actor_forward(g, params, bound, state, x, t_idx)
    if params.hyper.variant == "moe_transformer_diffusion":
        return out
    return out, []


def sample_action(g: Graph, params: ActorParameters, bound: BoundParams,
                  schedule: DiffusionSchedule, state: NodeRef, mode: str,
                  rng_seed, tx_power: float):
    """Run the reverse chain for a [B x S] state batch.

    Returns (action node [B x A], ChainRecord, gate reports).  Exploratory
    mode injects per-step Gaussian noise except at the final step;
    deterministic mode is a pure function of (params, state, x_T seed).
    """
    if params.hyper.variant not in DIFFUSION_VARIANTS:
        raise ValueError(f"{params.hyper.variant!r} is not a diffusion actor")
    _check_mode(mode)
    batch = state.value.shape[0]
    a_dim = params.hyper.action_dim
    rng = rng_from(rng_seed, 30)
    beta, alpha, alpha_bar = schedule.beta, schedule.alpha, schedule.alpha_bar

    x = g.constant(rng.standard_normal((batch, a_dim)))
    states = [x.value.copy()]
    reports = []
    for t in range(schedule.steps, 0, -1):
        eps_hat, reps = _denoise(g, params, bound, state, x, t - 1)
        reports.extend(reps)
        coef = beta[t - 1] / np.sqrt(1.0 - alpha_bar[t - 1])
        mean = (x - eps_hat * coef) * (1.0 / np.sqrt(alpha[t - 1]))
        if mode == "exploratory" and t > 1:
            z = g.constant(rng.standard_normal((batch, a_dim))
                           * np.sqrt(beta[t - 1]))
            x = mean + z
        else:
            x = mean
        states.append(x.value.copy())
    action = project_rows_node(g, g.elementwise("tanh", x), tx_power)
    return action, ChainRecord(states, action.value.copy()), reports


def gaussian_action(g: Graph, params: ActorParameters, bound: BoundParams,
                    state: NodeRef, mode: str, rng_seed, tx_power: float):
    """Squashed Gaussian policy action; reparameterized in exploratory mode."""
    if params.hyper.variant != "gaussian":
        raise ValueError(f"{params.hyper.variant!r} is not the gaussian actor")
    _check_mode(mode)
    mean, log_std = actor_forward(g, params, bound, state, None, None)
    if mode == "exploratory":
        rng = rng_from(rng_seed, 31)
        z = g.constant(rng.standard_normal(mean.value.shape))
        pre = mean + g.elementwise("exp", log_std) * z
    else:
        pre = mean
    return project_rows_node(g, g.elementwise("tanh", pre), tx_power)


def policy_action(g: Graph, params: ActorParameters, bound: BoundParams,
                  schedule: DiffusionSchedule, state: NodeRef, mode: str,
                  rng_seed, tx_power: float):
    """Variant dispatch: (action node, gate reports)."""
    if params.hyper.variant == "gaussian":
        return gaussian_action(g, params, bound, state, mode, rng_seed,
                               tx_power), []
    action, _, reports = sample_action(g, params, bound, schedule, state,
                                       mode, rng_seed, tx_power)
    return action, reports


def actor_loss(actor: ActorParameters, critic: CriticParameters,
               schedule: DiffusionSchedule, states: np.ndarray, rng_seed,
               tx_power: float):
    """Critic-ascent loss over a state batch.

    loss = -mean_b min(q1, q2)(s_b, a_b) [+ 0.01 * MoE balance], with a_b
    sampled in exploratory mode through the full chain.  Critic weights are
    bound as constants, so they receive no gradient.

    Returns (loss value, actor gradient dict, gate reports).
    """
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 2 or states.shape[0] < 1:
        raise ValueError("states batch must be a non-empty [B x S] array")
    g = Graph()
    bound = BoundParams(g, actor.bag)
    state_node = g.constant(states)
    action, reports = policy_action(g, actor, bound, schedule, state_node,
                                    "exploratory", rng_seed, tx_power)

    frozen_critic = BoundParams(g, critic.bag, trainable=False)
    q1, q2 = critic_forward(g, critic, frozen_critic, state_node, action)
    min_q = q1 - g.elementwise("relu", q1 - q2)
    loss = g.elementwise("neg", g.mean(min_q))
    if reports:
        loss = loss + moe_balance_loss(g, reports, actor.hyper.n_experts) \
            * BALANCE_COEF
    g.backward(loss)
    return float(loss.value), bound.grads(), reports
