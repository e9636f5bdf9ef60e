"""Fine-tune a sentence encoder on labeled pairs with a cosine objective.

Two entry points. ``init_base_model`` fabricates a small randomly
initialized encoder (WordPiece tokenizer plus a one-layer transformer
with 768-wide hidden states) so the pipeline runs at desk scale without
downloading pretrained weights. ``fine_tune`` trains any base encoder,
fabricated or pretrained, on pair files produced by
``build_training_pairs`` and writes the trained model plus a run
manifest that records every hyperparameter, including the framework
defaults it inherited.
"""

from __future__ import annotations

import inspect
import json
import logging
import os
import random
from dataclasses import fields as dataclass_fields

import numpy as np

from .config import TrainConfig
from .errors import TrainingError
from .pairs import SplitPaths, load_labeled_texts

log = logging.getLogger(__name__)

MANIFEST_FILE = "run_manifest.json"
TRAINED_SUBDIR = "trained"

HIDDEN_DIM = 768

# the evaluator correlates predicted and target scores, which is
# undefined for fewer than two pairs; smaller val sets train evaluator-free
MIN_EVAL_PAIRS = 2


def _st_modules():
    try:
        from sentence_transformers.sentence_transformer import (
            evaluation, losses, modules,
        )
    except ImportError:  # older releases keep the flat layout
        from sentence_transformers import evaluation, losses
        from sentence_transformers import models as modules
    return losses, evaluation, modules


def init_base_model(texts, out_dir, vocab_size: int = 2000,
                    max_seq_length: int = 64, seed: int = 0) -> str:
    """Create an untrained 768-dim encoder directory from raw texts.

    Trains a WordPiece tokenizer over ``texts`` and pairs it with a
    randomly initialized single-layer transformer. The result loads
    anywhere a Hugging Face model directory does, in particular as the
    ``base_model`` argument of :func:`fine_tune`.
    """
    import torch
    from tokenizers import Tokenizer, normalizers, pre_tokenizers, trainers
    from tokenizers import models as tokenizer_models
    from transformers import BertConfig, BertModel, PreTrainedTokenizerFast

    texts = [t for t in texts if t and t.strip()]
    if not texts:
        raise TrainingError("base model needs at least one non-empty text")

    tokenizer = Tokenizer(tokenizer_models.WordPiece(unk_token="[UNK]"))
    tokenizer.normalizer = normalizers.Lowercase()
    tokenizer.pre_tokenizer = pre_tokenizers.Whitespace()
    trainer = trainers.WordPieceTrainer(
        vocab_size=vocab_size,
        special_tokens=["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"],
    )
    tokenizer.train_from_iterator(texts, trainer)

    os.makedirs(out_dir, exist_ok=True)
    hf_tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=tokenizer,
        pad_token="[PAD]", unk_token="[UNK]", cls_token="[CLS]",
        sep_token="[SEP]", mask_token="[MASK]",
        model_max_length=max_seq_length,
    )
    torch.manual_seed(seed)
    config = BertConfig(
        vocab_size=tokenizer.get_vocab_size(),
        hidden_size=HIDDEN_DIM,
        num_hidden_layers=1,
        num_attention_heads=4,
        intermediate_size=256,
        max_position_embeddings=max_seq_length,
    )
    BertModel(config).save_pretrained(out_dir)
    hf_tokenizer.save_pretrained(out_dir)
    log.info("base model written to %s (vocab %d)", out_dir,
             tokenizer.get_vocab_size())
    return os.fspath(out_dir)


def _framework_defaults() -> dict:
    """Fish the training defaults out of the installed framework."""
    from sentence_transformers import SentenceTransformer

    signature = inspect.signature(SentenceTransformer.fit)
    optimizer_class = signature.parameters["optimizer_class"].default
    optimizer_params = dict(signature.parameters["optimizer_params"].default)
    return {
        "batch_size": _default_batch_size(),
        "optimizer": optimizer_class.__name__,
        "learning_rate": optimizer_params.get("lr"),
        "optimizer_params": optimizer_params,
        "weight_decay": signature.parameters["weight_decay"].default,
        "scheduler": signature.parameters["scheduler"].default,
        "max_grad_norm": signature.parameters["max_grad_norm"].default,
    }


def _default_batch_size() -> int:
    from transformers import TrainingArguments

    for field in dataclass_fields(TrainingArguments):
        if field.name == "per_device_train_batch_size":
            return int(field.default)
    return 8


def embedding_dim(module) -> int:
    """Width of a module's output vectors, across framework renames."""
    for name in ("get_embedding_dimension", "get_sentence_embedding_dimension",
                 "get_word_embedding_dimension"):
        getter = getattr(module, name, None)
        if getter is not None:
            return int(getter())
    raise TrainingError(f"{type(module).__name__} does not expose its width")


def _load_encoder(base_model: str):
    """Wrap a model directory as a mean-pooled sentence encoder."""
    from sentence_transformers import SentenceTransformer

    _, _, modules = _st_modules()
    if os.path.exists(os.path.join(base_model, "modules.json")):
        return SentenceTransformer(base_model)
    word = modules.Transformer(base_model)
    pooling = modules.Pooling(embedding_dim(word), pooling_mode="mean")
    return SentenceTransformer(modules=[word, pooling])


def _check_finite(model, probe_texts) -> None:
    """Raise with diagnostics if training left non-finite state behind."""
    import torch

    bad = [name for name, param in model[0].auto_model.named_parameters()
           if not torch.isfinite(param).all()]
    if bad:
        shown = ", ".join(bad[:5])
        raise TrainingError(
            f"training diverged: {len(bad)} parameter tensors hold "
            f"non-finite values (first: {shown})"
        )
    embeddings = model.encode(list(probe_texts), convert_to_numpy=True,
                              show_progress_bar=False)
    if not np.isfinite(embeddings).all():
        rows = np.where(~np.isfinite(embeddings).all(axis=1))[0]
        raise TrainingError(
            f"training diverged: non-finite embeddings for probe rows "
            f"{rows.tolist()[:5]}"
        )


def fine_tune(splits: SplitPaths, config: TrainConfig, base_model: str) -> str:
    """Train on the split files and return the trained model directory.

    Uses a cosine-similarity objective over the numeric pair targets.
    Validation pairs, when at least two exist, are scored every
    ``config.eval_every`` steps and once more after training; the scores
    land in the run manifest alongside every hyperparameter in effect.
    """
    import torch
    from torch.utils.data import DataLoader
    from sentence_transformers import InputExample

    losses, evaluation, _ = _st_modules()

    if not os.path.isdir(base_model):
        raise TrainingError(f"{base_model}: base model directory not found")
    train_triples = load_labeled_texts(splits.train)
    if not train_triples:
        raise TrainingError(f"{splits.train}: no training pairs")
    val_triples = load_labeled_texts(splits.val) if splits.val else []

    random.seed(config.seed)
    np.random.seed(config.seed % (2 ** 32))
    torch.manual_seed(config.seed)

    defaults = _framework_defaults()
    model = _load_encoder(base_model)
    examples = [InputExample(texts=[a, b], label=target)
                for a, b, target in train_triples]
    loader = DataLoader(examples, shuffle=True,
                        batch_size=defaults["batch_size"])
    loss = losses.CosineSimilarityLoss(model)

    evaluator = None
    if len(val_triples) >= MIN_EVAL_PAIRS:
        evaluator = evaluation.EmbeddingSimilarityEvaluator(
            [a for a, _, _ in val_triples],
            [b for _, b, _ in val_triples],
            [target for _, _, target in val_triples],
            name="val",
        )

    model_dir = config.resolve(TRAINED_SUBDIR)
    log.info("fine-tuning on %d pairs (%d val) for %d epochs",
             len(train_triples), len(val_triples), config.epochs)
    model.fit(
        train_objectives=[(loader, loss)],
        evaluator=evaluator,
        epochs=config.epochs,
        warmup_steps=config.warmup_steps,
        # a positive interval with no evaluator turns on an evaluation
        # schedule the trainer cannot satisfy
        evaluation_steps=config.eval_every if evaluator is not None else 0,
        output_path=model_dir,
        # unset, the trainer drops scratch state in the caller's cwd
        checkpoint_path=config.resolve("checkpoints"),
        show_progress_bar=False,
    )

    probe = [text for triple in train_triples[:4] for text in triple[:2]]
    _check_finite(model, probe)

    val_scores = None
    if evaluator is not None:
        raw = evaluator(model)
        if not isinstance(raw, dict):
            raw = {"val_score": raw}
        # correlation is undefined when val labels have no variance;
        # keep the key but store null rather than emit non-JSON NaN
        val_scores = {
            key: float(value) if np.isfinite(value) else None
            for key, value in raw.items()
        }
        log.info("validation scores: %s", val_scores)

    manifest = {
        "epochs": config.epochs,
        "warmup_steps": config.warmup_steps,
        "eval_every": config.eval_every,
        "seed": config.seed,
        "split_ratios": [config.train_ratio, config.val_ratio,
                         config.test_ratio],
        "loss": "CosineSimilarityLoss",
        "evaluator": ("EmbeddingSimilarityEvaluator"
                      if evaluator is not None else None),
        "base_model": os.fspath(base_model),
        "train_pairs": len(train_triples),
        "val_pairs": len(val_triples),
        "val_scores": val_scores,
        **defaults,
    }
    with open(os.path.join(model_dir, MANIFEST_FILE), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return model_dir
