"""Risk-averse policy training on randomized model ensembles, plus Bayesian
adaptation of the model distribution from target-domain episodes."""

__version__ = "0.1.0"

from .core import (
    EnvSpec,
    ModelParams,
    SourceDistribution,
    Trajectory,
    discounted_return,
    log_density,
    rollout,
    sample_params,
    substream,
    undiscounted_return,
)
from .envs import PendulumEnv, SpringHopperEnv, default_source, make_env
from .policy import GaussianMlpPolicy, act, init_policy, kl_mean, log_prob_grad
from .baseline import LinearBaseline, features, fit, predict
from .optimizers import PolOptConfig, advantages, natural_step, reinforce_gradient
from .trainer import (
    IterationRecord,
    TrainConfig,
    percentile_threshold,
    select_worst,
    train,
)
from .adaptation import (
    AdaptConfig,
    AdaptResult,
    TargetDomain,
    WeightedSample,
    adapt_loop,
    importance_weights,
    refit_distribution,
    trajectory_log_likelihood,
)
from .evaluation import (
    GridAxis,
    GridSpec,
    ReturnStats,
    grid_evaluate,
    return_statistics,
    unmodeled_protocol,
)
