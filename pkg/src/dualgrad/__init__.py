"""Dual-weight neural network training.

Dense feedforward networks whose weight matrices are stored as a
difference W = W1 - W2 of two non-negative accumulators.  W1 tracks a
moving average of inputs seen under negative gradient (the neuron should
respond more), W2 of inputs seen under positive gradient (it should
respond less).  Training routes each single-sample update to one of the
two accumulators by the sign of the per-neuron gradient; the update rate
is the gradient magnitude times the learning rate.

Baselines (plain SGD and L2 weight decay) train ordinary single-matrix
networks from the same initialization, which lets the benchmark harness
compare all methods under identical conditions.
"""

from .errors import DataFormatError, DivergenceError, DualGradError, UpdateRateOverflowError
from .numerics import NormStats, Rng, gauss_sample, matvec, zscore_apply, zscore_fit
from .network import (
    DualLayer,
    ForwardTrace,
    Network,
    StandardLayer,
    backward,
    collapse_dual,
    forward,
    init_network,
    load_network,
    predict_batch,
    relu,
    relu_prime,
    save_network,
)
from .updaters import (
    StabilizerState,
    TrainHyper,
    batch_weighted_average,
    dual_stabilized_step,
    dual_step,
    l2_step,
    sgd_step,
)
from .data import (
    Dataset,
    DatasetSplit,
    load_csv_regression,
    load_cifar_binary,
    load_idx_images,
    make_split,
    make_synthetic_two_class,
    save_csv_regression,
)
from .experiment import (
    ExperimentConfig,
    HistoryPoint,
    MetricsRecord,
    aggregate_tables,
    evaluate,
    export_receptive_fields,
    relative_difference,
    run_experiment,
    run_training,
)

__version__ = "0.1.0"
