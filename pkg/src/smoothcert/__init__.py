"""Certification engine for noise-smoothed classifiers with provable L2 radii."""

from smoothcert.certify import (
    ABSTAIN,
    Certificate,
    RandomStream,
    SmoothedCounts,
    certify_drs,
    certify_rs,
    sample_under_noise,
)
from smoothcert.estimators import DRSCertifier, RSCertifier
from smoothcert.oracle import (
    ClassifierOracle,
    CountingOracle,
    LinearModel,
    LinearOracle,
    OracleEndpoint,
    ensemble_oracle,
    external_oracle,
    linear_smoothed_prob,
    nearest_centroid_oracle,
)
from smoothcert.partition import (
    ImageTensor,
    PartitionIndex,
    SubImagePair,
    add_gaussian_noise,
    downsample,
    make_diagonal_partition,
    resize_to,
)
from smoothcert.radius import (
    BranchProbs,
    RadiusResult,
    adv_prob_objective_min,
    asym_variance_radius,
    drs_from_rs_identity,
    drs_radius,
    drs_radius_lower,
    drs_upper_bound,
    k_partition_radius,
    rs_radius,
    rs_radius_lower,
    rs_upper_bound,
)
from smoothcert.report import DatasetFile, evaluate_dataset, load_dataset, save_dataset
from smoothcert.statfun import (
    BallMassQuery,
    ConfidenceLevel,
    Probability,
    clopper_pearson_lower,
    gaussian_ball_mass,
    gaussian_ball_mass_inv,
    normal_cdf,
    normal_quantile,
)

__version__ = "0.1.0"
