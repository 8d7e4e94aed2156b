"""Multi-view brain hyperconnectome autoencoding and embedding evaluation."""
from .classify import EvalReport, SvmModel, evaluate_protocol, svm_predict, svm_train
from .data import (
    Cohort,
    ConnectivityMatrix,
    MultiViewConnectome,
    generate_synthetic_cohort,
    load_cohort,
    symmetrize,
    write_cohort,
)
from .hcae import (
    Embedding,
    HcaeConfig,
    HcaeParams,
    TrainTrace,
    adversarial_losses,
    decode,
    discriminator_forward,
    embed_cohort,
    encode,
    reconstruction_loss,
    train_subject,
)
from .hypergraph import (
    Hyperconnectome,
    StackedFeatures,
    build_hyperconnectome,
    build_view_incidence,
    propagation_operator,
)

__version__ = "0.1.0"
