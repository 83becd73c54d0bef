"""Beamforming objectives: link rates under artificial noise, secrecy rate,
and the deterministic / stochastic / chance / robust reward paradigms.

Every objective exists twice: a plain-numpy evaluator (exact hinges, used
for reported metrics and Monte Carlo fan-out) and a graph builder on
:mod:`secbeam.autograd` (``*_node`` functions, smoothed hinges by default)
so rewards are differentiable with respect to the action.  The receiver
applies optimal linear combining for the single confidential stream, so
the noise-plus-jamming covariance is inverted through its rank-one
structure and no general matrix inverse appears anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Graph, NodeRef
from .channel import ChannelPair, ComplexMatrix, Scenario, UncertaintyModel, \
    perturb_batch

LN2 = float(np.log(2.0))
HINGE_TEMPERATURE = 0.01  # softplus smoothing used only in gradient paths
_POWER_SLACK = 1e-12

PARADIGMS = ("deterministic", "stochastic", "chance", "robust")


# ---------------------------------------------------------------------------
# actions


def project_power(w: np.ndarray, v: np.ndarray, tx_power: float):
    """Radial projection of (w, v) onto the total power budget; idempotent."""
    total = float(np.sum(np.abs(w) ** 2) + np.sum(np.abs(v) ** 2))
    if total > tx_power + _POWER_SLACK:
        scale = np.sqrt(tx_power / total)
        return w * scale, v * scale
    return w, v


class BeamformingAction:
    """Confidential-signal beamformer w and artificial-noise beamformer v.

    Construction projects onto ||w||^2 + ||v||^2 <= tx_power.
    """

    __slots__ = ("w", "v", "tx_power")

    def __init__(self, w, v, tx_power: float):
        if tx_power <= 0:
            raise ValueError("tx_power must be positive")
        w = np.asarray(w, dtype=np.complex128).reshape(-1)
        v = np.asarray(v, dtype=np.complex128).reshape(-1)
        if w.shape != v.shape:
            raise ValueError("w and v must have equal length")
        self.w, self.v = project_power(w, v, tx_power)
        self.tx_power = float(tx_power)

    @property
    def n_tx(self) -> int:
        return self.w.shape[0]

    def to_vector(self) -> np.ndarray:
        """Flat real layout [Re w, Im w, Re v, Im v]."""
        return np.concatenate([self.w.real, self.w.imag,
                               self.v.real, self.v.imag])

    @staticmethod
    def from_vector(vec: np.ndarray, tx_power: float) -> "BeamformingAction":
        vec = np.asarray(vec, dtype=np.float64).reshape(-1)
        if vec.size % 4:
            raise ValueError("action vector length must be a multiple of 4")
        n = vec.size // 4
        w = vec[0:n] + 1j * vec[n:2 * n]
        v = vec[2 * n:3 * n] + 1j * vec[3 * n:4 * n]
        return BeamformingAction(w, v, tx_power)


@dataclass(frozen=True)
class ParadigmConfig:
    paradigm: str = "stochastic"
    c_eve: float = 3.0        # eavesdropper capacity threshold, bps/Hz
    p_eve: float = 0.70       # chance-constraint satisfaction probability
    mc_samples_train: int = 64
    mc_samples_eval: int = 256

    def __post_init__(self):
        if self.paradigm not in PARADIGMS:
            raise ValueError(f"paradigm must be one of {PARADIGMS}, "
                             f"got {self.paradigm!r}")
        if not 0.0 < self.p_eve < 1.0:
            raise ValueError(f"p_eve must lie in (0, 1), got {self.p_eve}")
        if self.c_eve <= 0.0:
            raise ValueError(f"c_eve must be positive, got {self.c_eve}")
        if self.mc_samples_train < 1 or self.mc_samples_eval < 1:
            raise ValueError("Monte Carlo sample counts must be >= 1")


@dataclass
class RewardBreakdown:
    paradigm: str
    reward: float
    mean_asr: float
    mean_excess: float
    satisfaction_prob: float
    worst_sample_reward: float

    CSV_HEADER = "paradigm,reward,mean_asr,satisfaction_prob,worst_sample_reward"

    def csv_row(self) -> str:
        return (f"{self.paradigm},{self.reward:.12g},{self.mean_asr:.12g},"
                f"{self.satisfaction_prob:.12g},{self.worst_sample_reward:.12g}")


# ---------------------------------------------------------------------------
# numpy evaluation path


def rate(h: ComplexMatrix, action: BeamformingAction, noise_power: float) -> float:
    """Achievable rate log2(1 + w^H H^H S^{-1} H w), S = sigma^2 I + (Hv)(Hv)^H."""
    if noise_power <= 0:
        raise ValueError("noise_power must be positive")
    hc = h.to_complex()
    if hc.shape[1] != action.n_tx:
        raise ValueError(f"channel has {hc.shape[1]} transmit elements, "
                         f"action has {action.n_tx}")
    return float(_rate_stack(hc[None], action.w, action.v, noise_power)[0])


def rate_batch(h_stack: np.ndarray, action: BeamformingAction,
               noise_power: float) -> np.ndarray:
    """Vectorized rate over stacked channels [M, nrx, ntx]."""
    return _rate_stack(h_stack, action.w, action.v, noise_power)


def _rate_stack(hs, w, v, noise_power):
    c = hs @ w          # [M, nrx] received confidential steering
    u = hs @ v          # [M, nrx] received artificial noise
    c2 = np.sum(np.abs(c) ** 2, axis=-1)
    nu2 = np.sum(np.abs(u) ** 2, axis=-1)
    dot = np.sum(np.conj(u) * c, axis=-1)
    sinr = (c2 - np.abs(dot) ** 2 / (noise_power + nu2)) / noise_power
    return np.log2(1.0 + np.maximum(sinr, 0.0))


def asr(pair: ChannelPair, action: BeamformingAction, noise_power: float) -> float:
    """Achievable secrecy rate max(0, rate_b - rate_e); exact hinge."""
    rb = rate(pair.h_b, action, noise_power)
    re = rate(pair.h_e, action, noise_power)
    return max(0.0, rb - re)


def penalized_reward(pair: ChannelPair, action: BeamformingAction,
                     cfg: ParadigmConfig, noise_power: float) -> float:
    """ASR minus the eavesdropper capacity excess over c_eve (single sample)."""
    rb = rate(pair.h_b, action, noise_power)
    re = rate(pair.h_e, action, noise_power)
    return max(0.0, rb - re) - max(0.0, re - cfg.c_eve)


def _sample_stats(rates_b, rates_e, cfg):
    asrs = np.maximum(0.0, rates_b - rates_e)
    excesses = np.maximum(0.0, rates_e - cfg.c_eve)
    rewards = asrs - excesses
    p_hat = float(np.mean(rates_e <= cfg.c_eve))
    return asrs, excesses, rewards, p_hat


def paradigm_reward(nominal: ChannelPair, scenario: Scenario,
                    u: UncertaintyModel, action: BeamformingAction,
                    cfg: ParadigmConfig, rng_seed,
                    n_samples: int | None = None) -> RewardBreakdown:
    """Paradigm-specific reward from Monte Carlo uncertainty samples.

    deterministic: penalized reward on the nominal pair (uncertainty ignored);
    stochastic: mean penalized reward; chance: mean ASR when the estimated
    satisfaction probability reaches p_eve, stochastic fallback otherwise;
    robust: per-sample minimum. Sample seeds are (rng_seed, counter).
    """
    sigma = scenario.noise_power
    if cfg.paradigm == "deterministic":
        rb = rate(nominal.h_b, action, sigma)
        re = rate(nominal.h_e, action, sigma)
        a = max(0.0, rb - re)
        ex = max(0.0, re - cfg.c_eve)
        return RewardBreakdown("deterministic", a - ex, a, ex,
                               float(re <= cfg.c_eve), a - ex)
    n = int(n_samples if n_samples is not None else cfg.mc_samples_train)
    if n < 1:
        raise ValueError("paradigm reward needs at least one sample")
    hb, he = perturb_batch(nominal, scenario, u, rng_seed, n)
    rates_b = rate_batch(hb, action, sigma)
    rates_e = rate_batch(he, action, sigma)
    asrs, excesses, rewards, p_hat = _sample_stats(rates_b, rates_e, cfg)
    worst = float(np.min(rewards))
    if cfg.paradigm == "stochastic":
        value = float(np.mean(rewards))
    elif cfg.paradigm == "chance":
        if p_hat >= cfg.p_eve:
            value = float(np.mean(asrs))
        else:
            value = float(np.mean(asrs) - np.mean(excesses))
    else:  # robust
        value = worst
    return RewardBreakdown(cfg.paradigm, value, float(np.mean(asrs)),
                           float(np.mean(excesses)), p_hat, worst)


# ---------------------------------------------------------------------------
# graph (differentiable) path


@dataclass
class ActionNodes:
    """Graph-bound action: column-vector nodes for Re/Im of w and v."""

    w_re: NodeRef
    w_im: NodeRef
    v_re: NodeRef
    v_im: NodeRef


def action_nodes_from_vector(g: Graph, vec: NodeRef) -> ActionNodes:
    """Split a flat [4n] (or [1 x 4n]) action node into beamformer columns."""
    flat = g.reshape(vec, (-1, 1))
    n4 = flat.value.shape[0]
    if n4 % 4:
        raise ValueError("action vector length must be a multiple of 4")
    n = n4 // 4
    parts = [g.slice_axis(flat, 0, i * n, (i + 1) * n) for i in range(4)]
    return ActionNodes(*parts)


def project_rows_node(g: Graph, mat: NodeRef, tx_power: float) -> NodeRef:
    """Row-wise radial power projection of a [B x 4n] action matrix.

    Rows within budget pass through untouched (and contribute no scaling
    gradient); rows over budget are scaled to the budget sphere.
    """
    norms = g.sum(g.elementwise("square", mat), axis=1)
    over = norms.value > tx_power + _POWER_SLACK
    if not np.any(over):
        return mat
    mask = g.constant(over.astype(np.float64))
    target = g.elementwise(
        "sqrt", g.constant(np.full(1, tx_power)) / norms)
    scale = mask * target + (1.0 - mask)
    return g.mul_rowscalar(mat, scale)


def _graph_power_projection(g: Graph, act: ActionNodes, tx_power: float) -> ActionNodes:
    stacked = g.concat([act.w_re, act.w_im, act.v_re, act.v_im], axis=0)
    row = g.reshape(stacked, (1, -1))
    projected = project_rows_node(g, row, tx_power)
    return action_nodes_from_vector(g, projected)


def _complex_matvec(g: Graph, h: ComplexMatrix, x_re: NodeRef, x_im: NodeRef):
    hre = g.constant(h.re)
    him = g.constant(h.im)
    out_re = hre @ x_re - him @ x_im
    out_im = hre @ x_im + him @ x_re
    return out_re, out_im


def _sq_norm(g: Graph, re: NodeRef, im: NodeRef) -> NodeRef:
    return g.sum(g.elementwise("square", re)) + g.sum(g.elementwise("square", im))


def rate_node(g: Graph, h: ComplexMatrix, act: ActionNodes,
              noise_power: float) -> NodeRef:
    """Differentiable rate via the rank-one inverse of sigma^2 I + (Hv)(Hv)^H."""
    if noise_power <= 0:
        raise ValueError("noise_power must be positive")
    c_re, c_im = _complex_matvec(g, h, act.w_re, act.w_im)
    u_re, u_im = _complex_matvec(g, h, act.v_re, act.v_im)
    c2 = _sq_norm(g, c_re, c_im)
    nu2 = _sq_norm(g, u_re, u_im)
    dot_re = g.sum(u_re * c_re) + g.sum(u_im * c_im)
    dot_im = g.sum(u_re * c_im) - g.sum(u_im * c_re)
    leak = (g.elementwise("square", dot_re) + g.elementwise("square", dot_im)) \
        / (nu2 + noise_power)
    sinr = (c2 - leak) / noise_power
    one_plus = g.elementwise("relu", sinr) + 1.0  # clamp float cancellation
    return g.elementwise("log", one_plus) * (1.0 / LN2)


def _hinge_node(g: Graph, x: NodeRef, smooth: bool) -> NodeRef:
    if not smooth:
        return g.elementwise("relu", x)
    t = HINGE_TEMPERATURE
    return g.elementwise("softplus", x * (1.0 / t)) * t


def asr_node(g: Graph, pair: ChannelPair, act: ActionNodes,
             noise_power: float, smooth: bool = True) -> NodeRef:
    rb = rate_node(g, pair.h_b, act, noise_power)
    re = rate_node(g, pair.h_e, act, noise_power)
    return _hinge_node(g, rb - re, smooth)


def penalized_reward_node(g: Graph, pair: ChannelPair, act: ActionNodes,
                          cfg: ParadigmConfig, noise_power: float,
                          smooth: bool = True) -> NodeRef:
    rb = rate_node(g, pair.h_b, act, noise_power)
    re = rate_node(g, pair.h_e, act, noise_power)
    return _hinge_node(g, rb - re, smooth) - _hinge_node(g, re - cfg.c_eve, smooth)


def paradigm_reward_node(g: Graph, nominal: ChannelPair, scenario: Scenario,
                         u: UncertaintyModel, act: ActionNodes,
                         cfg: ParadigmConfig, rng_seed,
                         n_samples: int | None = None,
                         smooth: bool = True) -> NodeRef:
    """Differentiable counterpart of :func:`paradigm_reward`."""
    sigma = scenario.noise_power
    if cfg.paradigm == "deterministic":
        return penalized_reward_node(g, nominal, act, cfg, sigma, smooth)
    n = int(n_samples if n_samples is not None else cfg.mc_samples_train)
    hb, he = perturb_batch(nominal, scenario, u, rng_seed, n)
    asr_terms, excess_terms, reward_terms = [], [], []
    n_satisfied = 0
    for i in range(n):
        pair = ChannelPair(ComplexMatrix.from_complex(hb[i]),
                           ComplexMatrix.from_complex(he[i]))
        rb = rate_node(g, pair.h_b, act, sigma)
        re = rate_node(g, pair.h_e, act, sigma)
        a = _hinge_node(g, rb - re, smooth)
        ex = _hinge_node(g, re - cfg.c_eve, smooth)
        asr_terms.append(g.reshape(a, (1,)))
        excess_terms.append(g.reshape(ex, (1,)))
        reward_terms.append(g.reshape(a - ex, (1,)))
        n_satisfied += re.value.item() <= cfg.c_eve
    rewards_vec = g.concat(reward_terms, axis=0)
    if cfg.paradigm == "stochastic":
        return g.mean(rewards_vec)
    if cfg.paradigm == "chance":
        if n_satisfied / n >= cfg.p_eve:
            return g.mean(g.concat(asr_terms, axis=0))
        return g.mean(g.concat(asr_terms, axis=0)) \
            - g.mean(g.concat(excess_terms, axis=0))
    return g.reduce("min", rewards_vec)  # robust
