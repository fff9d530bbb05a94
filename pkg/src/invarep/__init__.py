"""Learning representations that keep a designated covariate out.

The library trains conditional autoencoders and bottleneck classifiers
whose latent codes are pushed toward independence from a covariate c by
a pairwise-Gaussian KL penalty, plus a gradient-reversal baseline, and
evaluates all of them with post-hoc adversaries of increasing depth.
"""

from .config import RunConfig, make_config, parse_config_file
from .data import (
    Batch,
    BatchIterator,
    Dataset,
    load_adult,
    load_german,
    load_mnist,
    make_synthetic,
)
from .divergences import (
    CodeBatch,
    GaussianCode,
    gaussian_kl,
    marginal_kl_penalty,
    pairwise_kl_matrix,
    prior_kl,
)
from .errors import (
    CheckpointError,
    ConfigError,
    DataFormatError,
    TrainingDiverged,
)
from .evaluation import (
    EvalReport,
    adversary_ladder,
    evaluate,
    export_codes,
    style_transfer_grid,
    train_posthoc_adversary,
)
from .models import (
    AdversaryHead,
    ConditionalDecoder,
    Encoder,
    Predictor,
    decoder_create,
    encode,
    encoder_create,
    predictor_create,
    reparameterize,
)
from .objectives import (
    Hyper,
    LossBreakdown,
    adversarial_vib_loss,
    vae_loss,
    vib_loss,
)
from .train import (
    TrainResult,
    build_models,
    load_model_checkpoint,
    save_model_checkpoint,
    train_model,
)

__version__ = "0.1.0"
