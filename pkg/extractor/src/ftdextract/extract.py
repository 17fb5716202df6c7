"""Feature extraction: model + dataset -> FTD dumps + run manifest.

One forward trace per sample feeds every declared site, so row i of every
dump refers to the same image. Vision and connector sites use the mean
over their (all-image) tokens; LM sites come in two flavors, the mean over
the image-token span and the final input token. Hidden states are cast to
float32 at dump time regardless of model dtype. Samples whose trace fails
are logged and dropped from all sites consistently.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass

import numpy as np
import torch

from .data import ImageFolderDataset, load_image, stratified_split
from .formats import ABSTAIN, site_entry, write_ftd, write_manifest
from .parse import AnswerParser
from .prompts import PromptTemplate
from .toy import check_capabilities, load_model

log = logging.getLogger(__name__)

MEAN_IMAGE_TOKENS = "mean_image_tokens"
LAST_INPUT_TOKEN = "last_input_token"

DEFAULT_SITES = (
    ("V", MEAN_IMAGE_TOKENS),
    ("C", MEAN_IMAGE_TOKENS),
    ("L", MEAN_IMAGE_TOKENS),
    ("L", LAST_INPUT_TOKEN),
)


@dataclass
class ExtractionSpec:
    model: str
    dataset_dir: str
    template: PromptTemplate
    sites: tuple[tuple[str, str], ...] = DEFAULT_SITES
    sample_limit: int | None = None
    seed: int = 0
    train_fraction: float = 0.8
    generate_answers: bool = True
    max_new_tokens: int = 3
    dataset_name: str | None = None
    adapter_checkpoint: str | None = None

    def __post_init__(self) -> None:
        declared = {m for m, _ in self.sites}
        for module in ("V", "C", "L"):
            if module not in declared:
                raise ValueError(f"sites must cover module {module}")
        for module, agg in self.sites:
            if module in ("V", "C") and agg != MEAN_IMAGE_TOKENS:
                raise ValueError(f"module {module} supports only {MEAN_IMAGE_TOKENS}")
            if agg not in (MEAN_IMAGE_TOKENS, LAST_INPUT_TOKEN):
                raise ValueError(f"unsupported aggregation {agg!r}")

    @property
    def run_dataset_name(self) -> str:
        return self.dataset_name or os.path.basename(os.path.normpath(self.dataset_dir))


def _load_spec_model(spec: ExtractionSpec):
    model = load_model(spec.model, seed=spec.seed, extra_words=tuple(spec.template.class_names))
    check_capabilities(model)
    if spec.adapter_checkpoint:
        from .lora import apply_adapter

        apply_adapter(model, spec.adapter_checkpoint)
    return model


def _ordered_dataset(spec: ExtractionSpec) -> tuple[ImageFolderDataset, list[int]]:
    dataset = ImageFolderDataset.scan(spec.dataset_dir, spec.sample_limit)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed, 17])))
    order = list(rng.permutation(len(dataset)))
    return dataset, order


def _dataset_parser(
    template: PromptTemplate, class_names: list[str], override: AnswerParser | None = None
) -> AnswerParser:
    """Parser whose indices follow the dataset's class order.

    The template's answer vocabulary must match the dataset's class names
    up to case; template synonyms are carried over.
    """
    if override is not None:
        return override
    by_lower = {c.lower(): i for i, c in enumerate(class_names)}
    if {t.lower() for t in template.class_names} != set(by_lower):
        raise ValueError(
            f"template answers {list(template.class_names)} do not match "
            f"dataset classes {class_names}"
        )
    synonyms: dict = {}
    for t, surfaces in (template.synonyms or {}).items():
        synonyms.setdefault(class_names[by_lower[t.lower()]], []).extend(surfaces)
    return AnswerParser(list(class_names), synonyms)


def _aggregate(trace, module: str, aggregation: str) -> list[torch.Tensor]:
    """Per-layer vectors for one (module, aggregation) site group."""
    if module == "V":
        return [s.mean(dim=0) for s in trace.vision_states]
    if module == "C":
        return [s.mean(dim=0) for s in trace.connector_states]
    start, end = trace.image_span
    if aggregation == MEAN_IMAGE_TOKENS:
        return [s[start:end].mean(dim=0) for s in trace.llm_states]
    return [s[-1] for s in trace.llm_states]


def extract_run(spec: ExtractionSpec, out_dir: str | os.PathLike) -> str:
    """Produce a run directory (FTD per site + manifest + sidecar).

    Returns the manifest path. Layer ordering inside each module follows
    forward-pass order.
    """
    out = os.fspath(out_dir)
    os.makedirs(out, exist_ok=True)
    model = _load_spec_model(spec)
    dataset, order = _ordered_dataset(spec)
    prefix_ids, suffix_ids = model.tokenizer.encode_prompt(spec.template.text)

    groups: dict[tuple[str, str], list[list[torch.Tensor]]] = {
        key: [] for key in dict.fromkeys(spec.sites)
    }
    kept: list[int] = []
    dropped: list[str] = []
    with torch.no_grad():
        for ds_index in order:
            sample = dataset.samples[ds_index]
            try:
                image = torch.from_numpy(load_image(sample.path, model.image_size))[0]
                trace = model.forward_trace(image, prefix_ids, suffix_ids)
                per_group = {
                    key: _aggregate(trace, *key) for key in groups
                }
            except Exception as exc:
                log.warning("dropping sample %s: %s", sample.rel_path, exc)
                dropped.append(sample.rel_path)
                continue
            for key, vectors in per_group.items():
                groups[key].append(vectors)
            kept.append(ds_index)

    if len(kept) < 2:
        raise RuntimeError(f"fewer than 2 samples survived extraction (dropped {len(dropped)})")

    labels = [dataset.samples[i].label for i in kept]
    split = stratified_split(labels, spec.train_fraction, spec.seed)

    sites = []
    for (module, agg), per_sample in groups.items():
        n_layers = len(per_sample[0])
        for layer in range(n_layers):
            matrix = torch.stack([vectors[layer] for vectors in per_sample]).numpy()
            site_id = f"{module}{layer}_{agg}"
            fname = f"{site_id}.ftd"
            write_ftd(matrix.astype(np.float32), os.path.join(out, fname))
            sites.append(site_entry(site_id, module, layer, agg, fname))

    final_predictions = None
    abstained = 0
    if spec.generate_answers:
        parser = _dataset_parser(spec.template, list(dataset.class_names))
        final_predictions = []
        for ds_index in kept:
            sample = dataset.samples[ds_index]
            image = torch.from_numpy(load_image(sample.path, model.image_size))[0]
            ids = model.generate(image, prefix_ids, suffix_ids, spec.max_new_tokens)
            pred = parser.parse(model.tokenizer.decode(ids))
            if pred == ABSTAIN:
                abstained += 1
            final_predictions.append(pred)

    manifest_path = os.path.join(out, "manifest.json")
    write_manifest(
        manifest_path,
        model_name=spec.model,
        dataset_name=spec.run_dataset_name,
        class_names=list(dataset.class_names),
        labels=labels,
        split=split,
        sites=sites,
        final_predictions=final_predictions,
    )
    with open(os.path.join(out, "extraction.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "model": spec.model,
                "adapter_checkpoint": spec.adapter_checkpoint,
                "decoding": {"strategy": "greedy", "max_new_tokens": spec.max_new_tokens},
                "seed": spec.seed,
                "abstained": abstained,
                "dropped": dropped,
                "sample_sources": [dataset.samples[i].rel_path for i in kept],
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    return manifest_path


def generate_final_predictions(spec: ExtractionSpec, label_parser: AnswerParser | None = None) -> list[int]:
    """Greedy-decode an answer per sample and parse it to a class index.

    Unparseable outputs record the abstain sentinel (-1), which scoring
    counts as wrong.
    """
    model = _load_spec_model(spec)
    dataset, order = _ordered_dataset(spec)
    prefix_ids, suffix_ids = model.tokenizer.encode_prompt(spec.template.text)
    parser = _dataset_parser(spec.template, list(dataset.class_names), label_parser)
    predictions = []
    with torch.no_grad():
        for ds_index in order:
            sample = dataset.samples[ds_index]
            try:
                image = torch.from_numpy(load_image(sample.path, model.image_size))[0]
                ids = model.generate(image, prefix_ids, suffix_ids, spec.max_new_tokens)
                predictions.append(parser.parse(model.tokenizer.decode(ids)))
            except Exception as exc:
                log.warning("generation failed for %s: %s", sample.rel_path, exc)
                predictions.append(ABSTAIN)
    return predictions
