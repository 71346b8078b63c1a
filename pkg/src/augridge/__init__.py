"""Feature/ridge regression under data augmentation, with random-matrix
deterministic equivalents predicting out-of-sample error."""

from .datasets import (
    Dataset,
    InpaintingTask,
    SyntheticSpec,
    haar_orthogonal,
    inpainting_task,
    mnist_load,
    sample_synthetic,
)
from .detequiv import (
    DilationState,
    EquivalentReport,
    compute_second_order,
    equivalents,
    solve_fixed_point,
    wellspecified_reduction,
)
from .features import (
    FeatureMap,
    apply_features,
    estimate_lipschitz,
    identity_map,
    random_mlp_map,
)
from .harness import (
    ExperimentConfig,
    ResultRow,
    bias_variance_sweep,
    mnist_pipeline,
    run_sweep,
    validate,
    write_csv,
)
from .moments import (
    MomentSet,
    PerSampleMoments,
    batch_sample_moments,
    closed_population_moment_set,
    empirical_lambda_omega,
    estimate_moment_set,
    per_sample_moments,
)
from .ridge import (
    AugmentedDesign,
    RidgeFit,
    assemble_design,
    chi_stat,
    empirical_generalization,
    fit,
    overlap_stat,
    population_generalization,
    resolvent_shifted,
    xi_statistic,
)
from .schemes import (
    AugmentationScheme,
    additive_noise,
    h4_diagnostic,
    heteroskedastic,
    heteroskedastic_moments_closed,
    masking,
    mixture,
    mixture_moments_closed,
    salt_and_pepper,
    salt_pepper_lambda_closed,
    sample_augmented,
)

__version__ = "0.1.0"
