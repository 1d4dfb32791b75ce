ABLATION_VARIANTS = {
    # deformable alignment only: the warped prior is the output
    "A": {"uses_tgrn": False},
    # TGRN with L1 + adversarial + identity losses
    "B": {"uses_tgrn": True, "lambda_triplet": 0.0, "positive": "anchor_positive", "negative": "identity"},
    # metric learning with the ground truth as positive and the DAM output as negative
    "C": {"uses_tgrn": True, "lambda_triplet": 1.0, "positive": "ground_truth", "negative": "warp"},
    # full model: anchor-positive I_AP, hard negative I_F
    "D": {"uses_tgrn": True, "lambda_triplet": 1.0, "positive": "anchor_positive", "negative": "identity"},
}

VARIANT_NAMES = list(ABLATION_VARIANTS)
