"""Python access to the counterfactual debiasing core."""

import json

from ._cfdebias import (
    balance_by_augmentation_json,
    disparate_impact,
    eep_aggregate,
    equal_accuracy,
    evaluate_json,
    fairness_report_json,
    fuse,
    generate_synthetic_json,
    loss_cls,
    loss_kl,
    mel_spectrogram,
    mixfeat_augment,
    predict_factual,
    predict_tie,
    report,
    resample,
    segment_clips,
    stft_spectrogram,
    sub_sample_json,
    tie,
    train,
)


def fairness_report(genders, labels, predictions, averaging="macro"):
    return json.loads(fairness_report_json(list(genders), list(labels), list(predictions), averaging))


def generate_synthetic(config=None):
    train_text, test_text = generate_synthetic_json(json.dumps(config or {}))
    return json.loads(train_text), json.loads(test_text)


def sub_sample(manifest, seed):
    return json.loads(sub_sample_json(json.dumps(manifest), seed))


def balance_by_augmentation(manifest, seed):
    return json.loads(balance_by_augmentation_json(json.dumps(manifest), seed))


def evaluate(checkpoint, test_manifest, output_dir=None):
    return json.loads(evaluate_json(str(checkpoint), str(test_manifest), None if output_dir is None else str(output_dir)))
