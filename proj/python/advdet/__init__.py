"""Distorted-replica signature detector for adversarial examples."""

try:
    from ._core import (
        ClassStatistics,
        Dataset,
        Model,
        apply_distortion,
        auc_from_scores,
        calibrate_threshold,
        carlini_wagner,
        compute_class_statistics,
        deepfool,
        detect,
        fgsm,
        fs_legitimacy,
        fs_score,
        generate_dataset,
        load_dataset,
        projection_score,
        save_dataset,
    )
except ImportError:  # in-tree builds put the extension on PYTHONPATH directly
    from _core import (
        ClassStatistics,
        Dataset,
        Model,
        apply_distortion,
        auc_from_scores,
        calibrate_threshold,
        carlini_wagner,
        compute_class_statistics,
        deepfool,
        detect,
        fgsm,
        fs_legitimacy,
        fs_score,
        generate_dataset,
        load_dataset,
        projection_score,
        save_dataset,
    )

__all__ = [
    "ClassStatistics",
    "Dataset",
    "Model",
    "apply_distortion",
    "auc_from_scores",
    "calibrate_threshold",
    "carlini_wagner",
    "compute_class_statistics",
    "deepfool",
    "detect",
    "fgsm",
    "fs_legitimacy",
    "fs_score",
    "generate_dataset",
    "load_dataset",
    "projection_score",
    "save_dataset",
]
