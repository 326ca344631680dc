"""Python bindings for the avsec C++ core."""

from ._avsec import (  # noqa: F401
    ACTIONS,
    DataError,
    DspConfig,
    LeakageError,
    NumericError,
    UsageError,
    __version__,
    build_action_vectors,
    dominant_actions,
    evaluate,
    fleiss_kappa,
    is_spam_rating,
    kmeans,
    log_mel,
    logmel_mean_from_file,
    mel_filterbank,
    quantize,
    resample,
    run_cli,
    train_svm,
)
