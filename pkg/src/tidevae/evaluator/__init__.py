from .classifier import ClassifierConfig, classify, train_desk_classifier
from .diversity import EncoderPatchExtractor, cosine_kernel, diversity, relative_diversity, vendi_diversity
from .metrics import AucSummary, roc_auc, stratified_kfold
from .substitution import SubstitutionReport, substitution_experiment, train_class_generators

__all__ = [
    "AucSummary", "ClassifierConfig", "EncoderPatchExtractor", "SubstitutionReport", "classify", "cosine_kernel",
    "diversity", "relative_diversity", "roc_auc", "stratified_kfold", "substitution_experiment",
    "train_class_generators", "train_desk_classifier", "vendi_diversity",
]
