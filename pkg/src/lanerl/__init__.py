"""Safe deep-RL lane-change laboratory: simulator, DDQN agent, style classifier, harness."""
from .sim import EnvConfig, create_env
from .agent import AgentConfig, DDQNAgent, compute_action_mask
from .nn import NetworkSpec, QNetwork, grad_check
from .replay import PrioritizedReplay
from .harness import RunConfig, desk_scale, train, evaluate_run, normalized_score

__all__ = ["EnvConfig", "create_env", "AgentConfig", "DDQNAgent", "compute_action_mask",
           "NetworkSpec", "QNetwork", "grad_check", "PrioritizedReplay", "RunConfig",
           "desk_scale", "train", "evaluate_run", "normalized_score"]
