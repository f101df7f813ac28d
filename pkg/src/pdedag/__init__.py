"""pdedag: compile 1D PDEs to computational DAGs, encode them with a graph
transformer, decode mesh-free solutions with a modulated INR, and recover
coefficients from noisy observations."""

from .config import (DESK_MODEL, PAPER_MODEL, ModelConfig, PsoConfig,
                     SamplingConfig, SolverConfig, TrainConfig)
from .dsl import (RescaleSpec, parse_pde, print_pde, rescale_to_canonical,
                  validate_ast)
from .graph import (PdeGraph, canonical_form, compile_pde, connectivity_mask,
                    expand_power, graph_features, shortest_paths)
from .model import ModelParams, init_model_params, model_forward, predict_grid
from .spectral import SpectralSolver, solve_pde
from .datagen import (augment_translate, generate_dataset, sample_initial_condition,
                      sample_pde, sample_points)
from .training import evaluate, lr_at, nrmse_loss, relative_l2, train
from .inverse import add_noise, pso_minimize, recover_coefficients

__all__ = [
    "DESK_MODEL", "PAPER_MODEL", "ModelConfig", "PsoConfig", "SamplingConfig",
    "SolverConfig", "TrainConfig", "RescaleSpec", "parse_pde", "print_pde",
    "rescale_to_canonical", "validate_ast", "PdeGraph", "canonical_form",
    "compile_pde", "connectivity_mask", "expand_power", "graph_features",
    "shortest_paths", "ModelParams", "init_model_params", "model_forward",
    "predict_grid", "SpectralSolver", "solve_pde", "augment_translate",
    "generate_dataset", "sample_initial_condition", "sample_pde", "sample_points",
    "evaluate", "lr_at", "nrmse_loss", "relative_l2", "train", "add_noise",
    "pso_minimize", "recover_coefficients",
]

__version__ = "0.1.0"
