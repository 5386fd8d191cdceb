"""Chain-of-thought synthesis over a pluggable model client, and training sample emission."""

from ..model import ReflectionVerdict, StructuredCoT, TrajectorySummary
from .client import (
    BackendConfig,
    CachedClient,
    ChatRequest,
    HTTPClient,
    MockClient,
    ModelClient,
    ReplayClient,
    RetryPolicy,
    complete_parsed,
    make_client,
)
from .cues import render_visual_cues
from .samples import (
    LEVELS,
    SampleConfig,
    choose_level,
    emit_training_samples,
    image_count,
    sample_schema,
    validate_sample,
)
from .synthesis import (
    PRIVACY_LEVELS,
    annotate_trajectory,
    classify_privacy,
    generate_cot,
    reflect_step,
    summarize_trajectory,
)

__all__ = [
    "BackendConfig", "CachedClient", "ChatRequest", "HTTPClient", "MockClient", "ModelClient",
    "ReplayClient", "RetryPolicy", "complete_parsed", "make_client", "render_visual_cues",
    "LEVELS", "SampleConfig", "choose_level", "emit_training_samples", "image_count",
    "sample_schema", "validate_sample", "PRIVACY_LEVELS", "annotate_trajectory",
    "classify_privacy", "generate_cot", "reflect_step", "summarize_trajectory",
    "ReflectionVerdict", "StructuredCoT", "TrajectorySummary",
]
