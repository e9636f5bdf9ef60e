"""Export a trained encoder to the portable inference format.

The exported directory holds a traced mean-pooling graph, the exact
tokenizer file the model trained with, and a manifest; the cvelink
portable backend loads all three. Every export runs a parity check:
probe sentences embedded on the training side and through the exported
runtime must agree to within a small cosine distance, otherwise the
export is considered broken and rejected.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import warnings

import numpy as np

from .errors import ExportError
from .train import MANIFEST_FILE, embedding_dim

log = logging.getLogger(__name__)

PORTABLE_FORMAT = "torchscript-mean-pool"
EXPORT_DIM = 768
PARITY_TOLERANCE = 1e-4

PROBE_SENTENCES = (
    "A crafted request to the management endpoint executes arbitrary code.",
    "Adversaries exploit public-facing applications to gain an initial foothold.",
    "Improper neutralization of special elements used in an SQL command.",
    "The update mechanism fails to validate signatures, allowing tampered "
    "packages to be installed on every client that polls the mirror.",
)


def _trace_mean_pool(model, max_seq_length: int):
    import torch

    class MeanPool(torch.nn.Module):
        def __init__(self, encoder):
            super().__init__()
            self.encoder = encoder

        def forward(self, input_ids, attention_mask):
            out = self.encoder(input_ids=input_ids,
                               attention_mask=attention_mask)
            tokens = out.last_hidden_state
            mask = attention_mask.unsqueeze(-1).to(tokens.dtype)
            summed = (tokens * mask).sum(dim=1)
            counts = mask.sum(dim=1).clamp(min=1e-9)
            return summed / counts

    wrapper = MeanPool(model).eval()
    ids = torch.zeros((2, max_seq_length), dtype=torch.long)
    mask = torch.ones((2, max_seq_length), dtype=torch.long)
    mask[0, max_seq_length // 2:] = 0
    extra = (torch.zeros((3, max_seq_length), dtype=torch.long),
             torch.ones((3, max_seq_length), dtype=torch.long))
    # transformer forward passes branch on padding, which tracing flags;
    # check_inputs plus the parity check cover trace generalization
    with warnings.catch_warnings(), torch.no_grad():
        warnings.simplefilter("ignore", torch.jit.TracerWarning)
        return torch.jit.trace(wrapper, (ids, mask), check_trace=True,
                               check_inputs=[extra])


def export_portable_model(model_dir, out_dir=None) -> str:
    """Write the portable directory for ``model_dir`` and verify it.

    Returns the export directory. Raises :class:`ExportError` when the
    source directory is incomplete, the encoder width is not 768, or
    the reloaded graph disagrees with the training-side embeddings by
    more than ``PARITY_TOLERANCE`` cosine distance on the probe set.
    """
    from sentence_transformers import SentenceTransformer

    model_dir = os.fspath(model_dir)
    tokenizer_file = os.path.join(model_dir, "tokenizer.json")
    if not os.path.exists(tokenizer_file):
        raise ExportError(f"{model_dir}: tokenizer.json missing")
    if out_dir is None:
        out_dir = model_dir.rstrip("/\\") + "-portable"
    out_dir = os.fspath(out_dir)

    model = SentenceTransformer(model_dir)
    dim = embedding_dim(model)
    if dim != EXPORT_DIM:
        raise ExportError(
            f"{model_dir}: encoder outputs {dim}-dim vectors, the "
            f"portable format carries {EXPORT_DIM}"
        )
    pad_token = model.tokenizer.pad_token
    if not pad_token:
        raise ExportError(f"{model_dir}: tokenizer declares no pad token")
    max_seq_length = int(model.max_seq_length)

    traced = _trace_mean_pool(model[0].auto_model, max_seq_length)
    os.makedirs(out_dir, exist_ok=True)
    traced.save(os.path.join(out_dir, "model.pt"))
    shutil.copyfile(tokenizer_file, os.path.join(out_dir, "tokenizer.json"))

    manifest = {
        "format": PORTABLE_FORMAT,
        "dim": dim,
        "max_seq_length": max_seq_length,
        "pad_token": pad_token,
    }
    run_manifest = os.path.join(model_dir, MANIFEST_FILE)
    if os.path.exists(run_manifest):
        with open(run_manifest, "r", encoding="utf-8") as fh:
            manifest["training"] = json.load(fh)
    with open(os.path.join(out_dir, "manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    distance = _parity_distance(model, out_dir)
    if distance > PARITY_TOLERANCE:
        raise ExportError(
            f"{out_dir}: parity check failed, worst cosine distance "
            f"{distance:.3e} exceeds {PARITY_TOLERANCE:.0e}"
        )
    log.info("exported %s (parity distance %.3e)", out_dir, distance)
    return out_dir


def _parity_distance(model, out_dir) -> float:
    """Worst cosine distance between training-side and exported runtime."""
    from cvelink import PortableBackend

    probes = list(PROBE_SENTENCES)
    reference = model.encode(probes, convert_to_numpy=True,
                             show_progress_bar=False).astype(np.float64)
    norms = np.linalg.norm(reference, axis=1, keepdims=True)
    if not np.all(norms > 0):
        raise ExportError(f"{out_dir}: training side produced a zero vector")
    reference /= norms
    exported = PortableBackend(out_dir).encode(probes).astype(np.float64)
    cosines = np.sum(reference * exported, axis=1)
    return float(np.max(1.0 - cosines))
