"""Semi-supervised imitation learning with leverage-weighted shaping rewards."""
from .data import DemoSet, Trajectory, load_demos, save_demos
from .experiment import ExperimentConfig, RunReport, train_run
from .leverage import LeverageConfig, evaluate_unlabeled, leverage_unlabeled
from .rewards import BinaryBank, LeverageBank, cor, lcor, policy_reward
from .sim import EnvConfig, ScriptedController, TrackEnv, builtin_track, evaluation_reward

__version__ = "0.1.0"
