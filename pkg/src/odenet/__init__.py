"""Continuous-depth ODENet and discrete ResNet training and verification toolkit."""

from .activations import ActivationKind, activation_deriv, activation_eval
from .adjoint import (
    AdjointPath,
    GeneralODEProblem,
    adjoint_backward,
    assemble_gradients,
    general_adjoint_gradient,
    loss_and_gradients,
    minibatch_loss,
)
from .baselines import knn_evaluate, knn_predict, knn_predict_batch
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .construct import (
    PWConstantPath,
    ShallowNet,
    compile_odenet_pwc,
    compile_resnet,
    expand_full_rank,
    factor_through_A,
    lift_bias,
)
from .core import Gradients, ODENetSpec, ParamPath
from .data import Dataset, accuracy, gen_circle, gen_sinusoid, load_mnist_idx, split
from .estimators import KNNClassifier, ODENetClassifier, ODENetRegressor
from .exceptions import (
    CheckpointError,
    ConfigError,
    ConstructionError,
    DivergenceError,
    RankError,
    ShapeError,
)
from .forward import Trajectory, batch_forward, euler_forward, predict
from .gradcheck import compare_gradients, fd_gradient
from .linalg import check_rank, hadamard
from .optimizer import OptimizerConfig, TrainState, momentum_step, partition_batches, sgd_step, train
from .resnet import GeneralResNetProblem, ResNetParams, resnet_backprop, resnet_forward

__version__ = "0.1.0"
