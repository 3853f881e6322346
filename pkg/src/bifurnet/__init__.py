"""Bifurcation points of F(u, p) = 0 from a neural surrogate of the solution path."""

from .bifurcation import BifurcationResult, SearchConfig, find_bifurcation, grad_f2, loss_f2, sweep_bifurcation
from .datagen import Branch, SolutionSample, read_dataset, trace_branch, write_dataset
from .errors import (
    BifurnetError,
    ConvergenceError,
    DimensionError,
    DivergenceError,
    GenerationError,
    ParseError,
    SearchError,
    SingularMatrixError,
)
from .network import MlpNetwork, forward, init_network, input_jacobian, load_network, save_network
from .problems import ProblemSpec, get_problem
from .training import TrainConfig, TrainReport, grad_f1, loss_f1, train, train_best_of_k

__version__ = "0.1.0"
