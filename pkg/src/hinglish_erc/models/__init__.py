"""The four base architectures, bundles, inference and the vote."""

from .architectures import FULL, GRU, KINDS, SIMPLE, SIMPLE_AUG, ContextGRUNet, FullHistoryNet, ModelDims, SimpleHistoryNet
from .bundle import ModelBundle, batch_size_for, build_bundle, load_bundle, save_bundle
from .predict import (
    DEFAULT_PRIORITY,
    Ensemble,
    Prediction,
    ensemble_vote,
    iter_conversation,
    load_ensemble,
    predict_conversation,
    predictions_for,
    write_ensemble_manifest,
)
