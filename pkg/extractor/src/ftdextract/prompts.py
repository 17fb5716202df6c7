"""Instruction templates shipped with the extractor.

Every template contains an ``<image>`` placeholder that is replaced by the
image-token span in the model's input sequence. The three bundled
templates cover the breast-ultrasound, COVID CT, and chest X-ray
classification tasks; custom datasets supply their own template plus the
answer vocabulary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

IMAGE_PLACEHOLDER = "<image>"


@dataclass(frozen=True)
class PromptTemplate:
    text: str
    class_names: tuple[str, ...]
    # Extra surface forms accepted per class when parsing generated text.
    synonyms: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if IMAGE_PLACEHOLDER not in self.text:
            raise ValueError(f"template must contain {IMAGE_PLACEHOLDER!r}")


BUSI = PromptTemplate(
    text=(
        "<image> Carefully examine the image to determine the diagnostic "
        "result for breast cancer. Please answer 'Normal', 'Benign', or "
        "'Malignant'."
    ),
    class_names=("Normal", "Benign", "Malignant"),
)

COVID19_CT = PromptTemplate(
    text=(
        "<image> Carefully examine the image to determine if there is COVID "
        "present. Please answer 'Yes' or 'No'."
    ),
    class_names=("No", "Yes"),
)

CHEST_XRAY = PromptTemplate(
    text=(
        "<image> Carefully examine the image to determine if there is "
        "pneumonia present. Please answer 'Yes' or 'No'."
    ),
    class_names=("No", "Yes"),
)

TEMPLATES = {
    "busi": BUSI,
    "covid19-ct": COVID19_CT,
    "chest-xray": CHEST_XRAY,
}


def yes_no_template(question: str, class_names: tuple[str, str] = ("no", "yes")) -> PromptTemplate:
    """Generic binary template in the same style as the bundled ones."""
    return PromptTemplate(
        text=f"<image> Carefully examine the image to determine {question} Please answer 'Yes' or 'No'.",
        class_names=class_names,
        synonyms={class_names[0]: ["no"], class_names[1]: ["yes"]},
    )
