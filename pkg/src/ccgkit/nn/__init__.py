from ccgkit.nn.layers import (  # noqa: F401
    ColumnScaler,
    DenseLayer,
    LabelScaler,
    SetEncoder,
    ValueModel,
    build_model,
    encode_set,
    fit_scalers,
    predict_scaled,
    predict_value,
)
from ccgkit.nn.serialize import load_model, model_from_dict, model_to_dict, save_model  # noqa: F401
from ccgkit.nn.train import (  # noqa: F401
    GradCheckResult,
    LabeledSample,
    TrainConfig,
    TrainResult,
    TrainingDiverged,
    grad_check,
    train_model,
)
