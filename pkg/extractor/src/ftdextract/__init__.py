"""ftdextract: dumps per-layer features from multimodal models.

Produces the FTD + run-manifest format consumed by the probing toolkit:
per-layer vision-tower states, connector stage states, and LM states under
image-token-mean and final-input-token aggregations, plus parsed
final-answer predictions and an optional LoRA fine-tuning pass.
"""

from .data import ImageFolderDataset, load_image, stratified_split
from .extract import (
    DEFAULT_SITES,
    ExtractionSpec,
    extract_run,
    generate_final_predictions,
)
from .formats import ABSTAIN, read_ftd, write_ftd, write_manifest
from .lora import (
    LoraLinear,
    SftResult,
    SftSpec,
    adapter_parameter_count,
    apply_adapter,
    inject_lora,
    run_lora_sft,
)
from .parse import AnswerParser
from .prompts import (
    BUSI,
    CHEST_XRAY,
    COVID19_CT,
    TEMPLATES,
    PromptTemplate,
    yes_no_template,
)
from .toy import (
    CapabilityError,
    ForwardTrace,
    ToyMultimodalModel,
    WordTokenizer,
    build_toy_model,
    check_capabilities,
    load_model,
)

__version__ = "0.1.0"
