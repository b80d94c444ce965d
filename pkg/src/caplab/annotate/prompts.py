"""Prompt templates for the captioner backend.

The recaption template carries a dedicated slot where the sample's alt-text
is embedded verbatim as supplementary context; the plain caption template
has no such slot at all.
"""

from __future__ import annotations

from ..corpus import CaptionSample
from .model import PromptError

_CAPTION_BODY = (
    "Describe this image in full detail. Cover every visible object and its "
    "attributes (color, size, texture, state), the spatial relations between "
    "objects, any legible text, and the overall scene and atmosphere. "
    "Write flowing prose, not a list."
)

PROMPT_TEMPLATES: dict[str, dict[str, str]] = {
    "default": {
        "caption": _CAPTION_BODY,
        "recaption": (
            _CAPTION_BODY
            + "\n\nOriginal alt-text of this image, for supplementary context:\n"
            + "{alt_text}\n"
            + "Fold in any facts from the alt-text that the image supports."
        ),
    },
}


def build_prompt(sample: CaptionSample, mode: str, template_id: str = "default") -> str:
    templates = PROMPT_TEMPLATES.get(template_id)
    if templates is None:
        raise PromptError(f"unknown prompt template {template_id!r}")
    if mode not in templates:
        raise PromptError(f"unknown mode {mode!r}")
    if mode == "recaption":
        if not sample.alt_text:
            raise PromptError(
                f"sample {sample.sample_id} has no alt_text; recaption needs one"
            )
        return templates[mode].format(alt_text=sample.alt_text)
    return templates[mode]
