"""Prompt templates that turn class names into caption strings.

The default template is the one used for fine-tuning; the other
presets cover the syntax ablation (a bare name, a shorter verb-less
phrase, and a numeric-id variant that replaces the name with the class
index to probe whether the words themselves matter).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError

PLACEHOLDER = "<category>"


@dataclass(frozen=True)
class PromptTemplate:
    """Template string with exactly one `<category>` placeholder.

    mode "literal" substitutes the class name; mode "numeric"
    substitutes the decimal class index instead.
    """

    template: str
    mode: str = "literal"

    def __post_init__(self):
        if self.template.count(PLACEHOLDER) != 1:
            raise ConfigError(
                f"template must contain exactly one {PLACEHOLDER!r}: {self.template!r}"
            )
        if self.mode not in ("literal", "numeric"):
            raise ConfigError(f"unknown template mode {self.mode!r}")


PRESETS: dict[str, PromptTemplate] = {
    "action": PromptTemplate("Image of a person doing the yoga pose <category>"),
    "plain": PromptTemplate("Yoga pose <category>"),
    "bare": PromptTemplate("<category>"),
    "numeric": PromptTemplate("<category>", mode="numeric"),
}

DEFAULT_PRESET = "action"


def get_preset(name: str) -> PromptTemplate:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown prompt preset {name!r}; choose from {sorted(PRESETS)}"
        ) from None


def render_prompt(template: PromptTemplate, class_name: str, class_index: int = 0) -> str:
    """Substitute one class into the template."""
    if not class_name:
        raise ConfigError("class name must be non-empty")
    if class_index < 0:
        raise ConfigError(f"class index must be >= 0, got {class_index}")
    filler = str(class_index) if template.mode == "numeric" else class_name
    return template.template.replace(PLACEHOLDER, filler)


def build_class_prompts(taxonomy, template: PromptTemplate) -> list[tuple[int, str]]:
    """One (class index, prompt) pair per L3 class, in taxonomy order.

    In literal mode duplicate class names would collapse two classes
    onto one caption, silently corrupting both training pairs and
    zero-shot ranking, so they are rejected.
    """
    prompts = [
        (i, render_prompt(template, record.l3_name, i))
        for i, record in enumerate(taxonomy.records)
    ]
    if template.mode == "literal":
        seen: dict[str, int] = {}
        for i, text in prompts:
            if text in seen:
                raise ConfigError(
                    f"classes {seen[text]} and {i} render to the same prompt {text!r}"
                )
            seen[text] = i
    return prompts
