"""Brain-scan-conditioned imitation and inverse reinforcement learning at desk scale.

A scripted expert with hidden memory stands in for a human demonstrator, and
renderings of that memory stand in for brain scans. The package collects
demonstrations, learns a conditional autoregressive model of the next scan,
clones a memoryless feed-forward policy over (scan, observation), recovers
linear rewards on gridworlds and evaluates closed-loop behaviour.
"""
from .envs import EnvSpec, MDPModel, env_reset, env_step, tabular_build, value_iteration
from .errors import (ConfigError, ConvergenceError, CorruptionError, DataError, FormatError,
                     ScanIRLError, ShapeError, TrainingError, UnsupportedError, UsageError)
from .expert import Dataset, ExpertState, ScriptedExpert, collect_dataset, render_scan
from .generator import GeneratorHyper, GeneratorModel, log_likelihood, sample, train_generator
from .irl import feature_expectations, irl_recover, irl_validate
from .policy import PolicyHyper, PolicyParams, policy_act, policy_forward, policy_train
from .runtime import RolloutConfig, eval_suite, rollout
from .scans import ScanConfig, detokenize, tokenize

__version__ = "0.1.0"
