"""Low-rank adapters over every linear layer, plus a small SFT driver.

The adapter path is ``base(x) + (alpha / rank) * B(A(x))`` with B
zero-initialized, so an untrained adapter leaves the model's outputs
bit-identical to the base. Adapter parameter count per wrapped layer is
``rank * (fan_in + fan_out)``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import torch
from torch import nn

from .data import ImageFolderDataset, load_image
from .prompts import PromptTemplate
from .toy import load_model


class LoraLinear(nn.Module):
    def __init__(self, base: nn.Linear, rank: int, alpha: float):
        super().__init__()
        if rank < 1 or alpha <= 0:
            raise ValueError("need rank >= 1 and alpha > 0")
        self.base = base
        for p in self.base.parameters():
            p.requires_grad_(False)
        self.rank = rank
        self.scale = alpha / rank
        self.lora_a = nn.Parameter(torch.randn(rank, base.in_features) * 0.01)
        self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + self.scale * ((x @ self.lora_a.T) @ self.lora_b.T)


def inject_lora(model: nn.Module, rank: int, alpha: float) -> list[str]:
    """Wrap every nn.Linear in the model; returns the adapted module names."""
    adapted = []
    for name, module in list(model.named_modules()):
        for child_name, child in list(module.named_children()):
            if isinstance(child, nn.Linear):
                setattr(module, child_name, LoraLinear(child, rank, alpha))
                adapted.append(f"{name}.{child_name}" if name else child_name)
    if not adapted:
        raise RuntimeError("model exposes no linear layers to adapt")
    return adapted


def adapter_parameters(model: nn.Module):
    for module in model.modules():
        if isinstance(module, LoraLinear):
            yield module.lora_a
            yield module.lora_b


def adapter_parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in adapter_parameters(model))


def adapter_state_dict(model: nn.Module) -> dict:
    return {
        k: v for k, v in model.state_dict().items() if "lora_a" in k or "lora_b" in k
    }


def apply_adapter(model: nn.Module, checkpoint: str | os.PathLike, rank: int | None = None,
                  alpha: float | None = None) -> None:
    """Inject adapters (config from the checkpoint) and load their weights."""
    payload = torch.load(checkpoint, weights_only=True)
    inject_lora(model, rank or payload["rank"], alpha or payload["alpha"])
    missing, unexpected = model.load_state_dict(payload["adapter"], strict=False)
    if unexpected:
        raise RuntimeError(f"checkpoint holds unknown adapter tensors: {unexpected}")


@dataclass
class SftSpec:
    """Adapter fine-tuning recipe; rank 8 / alpha 32 over all linear layers."""

    model: str
    dataset_dir: str
    template: PromptTemplate
    rank: int = 8
    alpha: float = 32.0
    epochs: int = 1
    learning_rate: float = 1e-2
    sample_limit: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class SftResult:
    checkpoint_path: str
    loss_trace: tuple[float, ...]
    adapter_parameter_count: int
    adapted_modules: tuple[str, ...]


def run_lora_sft(spec: SftSpec, out_path: str | os.PathLike) -> SftResult:
    """Fine-tune adapters to emit each sample's class name; save a checkpoint.

    Teacher-forced cross-entropy on the first answer token, one sample per
    step. ``epochs=0`` saves the zero-initialized adapters, whose outputs
    match the base model exactly.
    """
    model = load_model(spec.model, seed=spec.seed, extra_words=tuple(spec.template.class_names))
    adapted = inject_lora(model, spec.rank, spec.alpha)
    dataset = ImageFolderDataset.scan(spec.dataset_dir, spec.sample_limit)
    prefix_ids, suffix_ids = model.tokenizer.encode_prompt(spec.template.text)
    targets = []
    for name in dataset.class_names:
        ids = model.tokenizer.encode(name)
        if not ids:
            raise ValueError(f"class name {name!r} does not tokenize")
        targets.append(ids[0])

    params = list(adapter_parameters(model))
    optimizer = torch.optim.AdamW(params, lr=spec.learning_rate)
    trace: list[float] = []
    torch.manual_seed(spec.seed)
    model.train()
    for _ in range(spec.epochs):
        for sample in dataset.samples:
            image = torch.from_numpy(load_image(sample.path, model.image_size))[0]
            run = model.forward_trace(image, prefix_ids, suffix_ids)
            logits = model.lm_head(run.final_hidden[-1])
            loss = torch.nn.functional.cross_entropy(
                logits[None, :], torch.tensor([targets[sample.label]])
            )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            trace.append(float(loss.item()))
    model.eval()

    payload = {"rank": spec.rank, "alpha": spec.alpha, "adapter": adapter_state_dict(model)}
    torch.save(payload, out_path)
    return SftResult(
        checkpoint_path=os.fspath(out_path),
        loss_trace=tuple(trace),
        adapter_parameter_count=adapter_parameter_count(model),
        adapted_modules=tuple(adapted),
    )
