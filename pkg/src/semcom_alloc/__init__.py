"""Energy-aware resource allocation for semantic communication with a DDPG agent.

Channel and distortion models, a feasible-by-construction environment, a
numpy DDPG learner, baselines and an exhaustive grid oracle, and seeded
experiment sweeps.
"""
from .config import SystemConfig, load_config, parse_config
from .env import SemComEnv
from .agent import DdpgAgent, train

__all__ = ["SystemConfig", "load_config", "parse_config", "SemComEnv", "DdpgAgent", "train"]
__version__ = "0.1.0"
