"""secbeam: robust secure beamforming optimized by diffusion actor-critic
policies, with deterministic / stochastic / chance-constrained / robust
reward paradigms and an MoE-transformer actor."""

__version__ = "0.1.0"

from .autograd import Graph, NodeRef
from .channel import (ArrayGeometry, ChannelPair, ComplexMatrix, Scenario,
                      UncertaintyModel, nominal_channel, perturb,
                      perturb_batch, rng_from, seed_child, steering_ula,
                      steering_upa)
from .diffusion import (ChainRecord, DiffusionSchedule, actor_loss,
                        gaussian_action, policy_action, sample_action)
from .nets import (ActorParameters, BoundParams, CriticParameters,
                   ParamBag, actor_forward, attention_forward,
                   critic_forward, init_critic, init_parameters, moe_forward)
from .secrecy import (ActionNodes, BeamformingAction, ParadigmConfig,
                      RewardBreakdown, asr, asr_node, paradigm_reward,
                      paradigm_reward_node, penalized_reward,
                      penalized_reward_node, project_power, rate, rate_batch,
                      rate_node)
from .training import (EvaluationReport, MetricsLog, NumericalAbort,
                       TrainingConfig, Trainer, compare, evaluate,
                       make_state, measure_latency, train)

__all__ = [name for name in dir() if not name.startswith("_")]
