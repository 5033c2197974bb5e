"""Energy-based models with shallow networks, trained by simultaneous particle and feature dynamics."""

from .dual_trainer import DualConfig, TrainerState, TrainingError, train
from .features import RidgeFeatures, TorusFeatures, make_features
from .geometry import Manifold
from .metrics import kl_estimate, read_metrics, sm_estimate
from .mmd import ArcCosine1, MmdConfig, MonteCarloKernel, mmd2, train_mmd
from .model import FeatureEnsemble, TeacherModel, energy, grad_energy_x
from .pde1d import PdeConfig, pde_run
from .runner import ExperimentConfig, load_config, run_experiment
from .sm_trainer import SmConfig, train_sm

__version__ = "0.1.0"
