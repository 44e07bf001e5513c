"""Compressive learning of deep regularizers from random-Fourier sketches.

A large dataset is compressed once into a fixed-size sketch (the mean of a
random Fourier feature map); a ReLU-network energy model is then trained
from the sketch alone by grid-resampling stochastic gradient descent, and
the learned energy serves as a variational denoising regularizer for point
clouds and image patches.
"""

from .clsgd import (
    AdamStep,
    ConstantStep,
    DiminishingStep,
    TrainConfig,
    TrainHistory,
    alpha_least_squares,
    monitor_loss,
    naive_loss_and_gradient,
    step_schedule,
    train,
    unbiased_direction,
)
from .data import (
    AffineNormalizer,
    SpiralSpec,
    add_gaussian_noise,
    fit_normalizer,
    generate_spiral,
    synthetic_image,
)
from .densities import CosineParamDensity, ReluDensity
from .denoise import (
    DenoiseConfig,
    GrayImage,
    PatchConfig,
    denoise_batch,
    denoise_image,
    denoise_vector,
    extract_patches,
    psnr,
    reassemble,
    snr_db,
    snr_gain,
)
from .nn import (
    ReluNet,
    forward,
    forward_batch,
    init_network,
    input_gradient,
    input_gradient_batch,
    param_count,
    param_gradient_batch,
)
from .sketch import (
    DiscretizedOperator,
    FrequencySet,
    Grid,
    OracleCosineDensity,
    SketchState,
    apply_discretized_operator,
    backproject,
    cosine_l2_inner,
    merge_sketch_states,
    oracle_sketch_cosine,
    regular_grid,
    sample_frequencies,
    sample_grid,
    sketch_dataset,
    suggest_frequency_scale,
    unit_cube_fourier,
)

__version__ = "0.1.0"
