from semcrypt.cnn.layers import Conv2d, Dense, Flatten, MaxPool2, ReLU
from semcrypt.cnn.metrics import EvalReport, auc_mann_whitney, evaluate, evaluate_scores, format_table
from semcrypt.cnn.model import CnnModel, default_model, he_uniform_init, load_model, save_model, softmax
from semcrypt.cnn.train import Domain, Secrets, TrainConfig, load_split, test_inputs, to_domain, to_input, train

__all__ = [
    "CnnModel", "Conv2d", "Dense", "Domain", "EvalReport", "Flatten", "MaxPool2", "ReLU", "Secrets",
    "TrainConfig", "auc_mann_whitney", "default_model", "evaluate", "evaluate_scores", "format_table",
    "he_uniform_init", "load_model", "load_split", "save_model", "softmax", "test_inputs", "to_domain",
    "to_input", "train",
]
