"""Edge, depth and text condition generation for defect images."""
from .depth import BlurDepthStub, DepthProvider
from .edges import EdgeConfig, adaptive_canny, hysteresis_thresholds, otsu_threshold
from .embed import text_embed_stub
from .generator import (
    ConditionGenerator,
    ConditionSet,
    DepthStubTransformer,
    EdgeMapTransformer,
    PromptBuilder,
    generate_conditions,
    image_condition_map,
)
from .image import check_gray, read_gray, write_gray
from .prompts import (
    GRID_CELLS,
    SCALES,
    PromptSpec,
    TemplateLibrary,
    build_prompt,
    classify_scale,
    locate_cell,
    prompt_specs,
)
