"""Prompt construction, response parsing, and annotation campaigns for a
completion-model annotator.

The completion client is pluggable: an HTTP client for a live endpoint, a
replay client that serves canned responses keyed by (task_id, prompt_index),
and a constant stub. Campaigns are therefore fully reproducible offline.

Keyword search order matters: "agree" is a substring of "disagree", so
verdict parsing checks "not econ", then "disagree", then "agree". The
yes/no gate uses whole-word matching with "no" first.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

from .annotation_data import TaskRecord, Taxonomy
from .errors import SaineError

MAX_PREDICTED_CATEGORIES = 3


class ClientError(SaineError):
    """The completion client could not produce a response."""


class SingleVerdictKind(str, Enum):
    AGREE = "agree"
    DISAGREE = "disagree"
    NOT_ECON = "not_econ"
    BLANK = "blank"


class EconGate(str, Enum):
    YES = "yes"
    NO = "no"
    BLANK = "blank"


class CategoryVerdict(str, Enum):
    AGREE = "agree"
    DISAGREE = "disagree"
    BLANK = "blank"


@dataclass
class PromptTemplateContext:
    category_names: list[str]
    abstract: str
    cat1: str
    cat2: str | None = None
    cat3: str | None = None

    def __post_init__(self):
        if not self.cat1:
            raise SaineError("prompt context requires a first category")
        if self.cat3 and not self.cat2:
            raise SaineError("cat3 requires cat2")

    @property
    def categories(self) -> list[str]:
        return [c for c in (self.cat1, self.cat2, self.cat3) if c]


@dataclass
class LlmSingleVerdict:
    verdict: SingleVerdictKind
    suggested_category: str | None
    raw_response: str


@dataclass
class LlmMultiVerdict:
    econ: EconGate
    per_category: list[CategoryVerdict]
    extra_categories: list[str]
    raw_responses: list[str | None]


@dataclass
class LlmClientConfig:
    endpoint: str | None = None
    max_length: int = 100000
    sampling: bool = True
    temperature: float = 0.7

    def __post_init__(self):
        if self.temperature < 0:
            raise SaineError("temperature must be >= 0")


def _render_names(names: Sequence[str]) -> str:
    return "[" + ", ".join(names) + "]"


SINGLE_PROMPT_TEMPLATE = """\
I have trained a machine learning llm whose input is the abstract of a scientific article, and the predicted output is its predicted category.
Candidate categories include: {names}.
The abstract is: {abstract}.
My llm-predicted category is: {cat1}.
You have three options: 'Agree, Disagree, NOT ECON'.
Please choose ONLY ONE to output.
If you think this article belongs to the field of economics and the category predicted by the llm is correct, please output 'Agree' and give reasons;
Otherwise, If you think this article belongs to the field of economics but the category predicted by the llm is incorrect, please output 'Disagree', state which category it should belong to according to your opinion, and then provide reasons;
Otherwise, If you think this article does not belong to the field of economics, output 'NOT ECON', and give reasons."""

MULTI_GATE_TEMPLATE = """\
I have trained a machine learning llm whose input is the abstract of a scientific article, and the predicted output is its predicted categories (up to 3).
Candidate categories include: {names}.
The abstract is: {abstract}.
Do you think this abstract belongs to the field of Economics?
If so, output 'Yes'; if not, output 'No'."""

MULTI_CATEGORY_TEMPLATE = """\
The abstract is: {abstract}
Do you think this abstract belongs to the {ordinal} model-predicted category {category}? If you agree with the {ordinal} model-predicted category, please output 'Agree' and the reason; if you do not agree with the {ordinal} model-predicted category, please output 'Disagree' and the reason."""

MULTI_EXTRA_TEMPLATE = """\
Are there any other categories that you think are more suitable for this abstract, besides {categories}?
If so, please output some other categories among candidate categories {names} and the reasons. If not, please output the reason why not."""

_ORDINALS = ("first", "second", "third")


def build_single_prompt(context: PromptTemplateContext) -> str:
    """The single-label verdict prompt; the instruction block is repeated for
    every data point, never shared across them."""
    return SINGLE_PROMPT_TEMPLATE.format(
        names=_render_names(context.category_names),
        abstract=context.abstract,
        cat1=context.cat1,
    )


def build_multi_prompts(context: PromptTemplateContext) -> list[str]:
    """Ordered prompt bundle: econ gate, one prompt per predicted category,
    then the extra-categories query. Issuance is gated by the campaign; a
    negative gate answer stops after the first prompt."""
    names = _render_names(context.category_names)
    prompts = [MULTI_GATE_TEMPLATE.format(names=names, abstract=context.abstract)]
    for i, category in enumerate(context.categories):
        prompts.append(MULTI_CATEGORY_TEMPLATE.format(
            abstract=context.abstract, ordinal=_ORDINALS[i], category=category))
    prompts.append(MULTI_EXTRA_TEMPLATE.format(
        categories=" ".join(context.categories), names=names))
    return prompts


def _find_category_after(text_lower: str, start: int,
                         category_names: Sequence[str]) -> str | None:
    """Earliest candidate category mention at or after `start`; ties prefer
    the longest name."""
    best: tuple[int, int, str] | None = None
    for name in category_names:
        pos = text_lower.find(name.lower(), start)
        if pos < 0:
            continue
        key = (pos, -len(name))
        if best is None or key < (best[0], best[1]):
            best = (pos, -len(name), name)
    return best[2] if best else None


def parse_single_response(text: str, category_names: Sequence[str],
                          ) -> LlmSingleVerdict:
    """Keyword search in priority order: "not econ", "disagree", "agree".

    On Disagree, the first candidate category named after the keyword becomes
    the suggestion; a Disagree without a recognizable category stays a
    Disagree. Responses with none of the keywords are blank.
    """
    lower = text.lower()
    for keyword, kind in (("not econ", SingleVerdictKind.NOT_ECON),
                          ("disagree", SingleVerdictKind.DISAGREE),
                          ("agree", SingleVerdictKind.AGREE)):
        pos = lower.find(keyword)
        if pos < 0:
            continue
        suggested = None
        if kind is SingleVerdictKind.DISAGREE:
            suggested = _find_category_after(lower, pos + len(keyword),
                                             category_names)
        return LlmSingleVerdict(verdict=kind, suggested_category=suggested,
                                raw_response=text)
    return LlmSingleVerdict(verdict=SingleVerdictKind.BLANK,
                            suggested_category=None, raw_response=text)


def _parse_gate(text: str) -> EconGate:
    lower = text.lower()
    if re.search(r"\bno\b", lower):
        return EconGate.NO
    if re.search(r"\byes\b", lower):
        return EconGate.YES
    return EconGate.BLANK


def _parse_category_verdict(text: str) -> CategoryVerdict:
    lower = text.lower()
    if "disagree" in lower:
        return CategoryVerdict.DISAGREE
    if "agree" in lower:
        return CategoryVerdict.AGREE
    return CategoryVerdict.BLANK


def parse_multi_responses(responses: Sequence[str | None],
                          category_names: Sequence[str],
                          n_categories: int) -> LlmMultiVerdict:
    """Parse a multi-label response bundle.

    `responses` aligns with the full prompt list (gate, n_categories category
    prompts, extras); entries are None where no response exists. Missing or
    unparseable responses are blank. Category verdicts are only read when the
    gate answered yes.
    """
    expected = n_categories + 2
    padded = list(responses) + [None] * (expected - len(responses))
    gate_text = padded[0]
    gate = _parse_gate(gate_text) if gate_text is not None else EconGate.BLANK
    if gate is not EconGate.YES:
        return LlmMultiVerdict(econ=gate, per_category=[], extra_categories=[],
                               raw_responses=padded)
    per_category = []
    for i in range(n_categories):
        text = padded[1 + i]
        per_category.append(_parse_category_verdict(text)
                            if text is not None else CategoryVerdict.BLANK)
    extras: list[str] = []
    extras_text = padded[1 + n_categories]
    if extras_text:
        lower = extras_text.lower()
        hits = []
        for name in category_names:
            pos = lower.find(name.lower())
            if pos >= 0:
                hits.append((pos, name))
        extras = [name for _, name in sorted(hits)]
    return LlmMultiVerdict(econ=gate, per_category=per_category,
                           extra_categories=extras, raw_responses=padded)


# --- completion clients ----------------------------------------------------


class CompletionClient:
    def complete(self, prompt: str, *, task_id: str,
                 prompt_index: int) -> str:
        raise NotImplementedError


class StaticClient(CompletionClient):
    """Answers every prompt with the same text; handy in tests."""

    def __init__(self, text: str):
        self.text = text

    def complete(self, prompt, *, task_id, prompt_index):
        return self.text


class ReplayClient(CompletionClient):
    """Serves canned responses keyed by (task_id, prompt_index).

    Replay files are JSON lines of {task_id, prompt_index, response}.
    """

    def __init__(self, responses: dict[tuple[str, int], str]):
        self.responses = responses

    @classmethod
    def from_file(cls, path: str | Path) -> "ReplayClient":
        responses = {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                row = json.loads(line)
                key = (str(row["task_id"]), int(row["prompt_index"]))
                responses[key] = row["response"]
        return cls(responses)

    def complete(self, prompt, *, task_id, prompt_index):
        try:
            return self.responses[(task_id, prompt_index)]
        except KeyError:
            raise ClientError(
                f"no canned response for task {task_id!r} "
                f"prompt {prompt_index}") from None


class HttpCompletionClient(CompletionClient):
    """Posts {prompt, max_length, do_sample, temperature} to an endpoint that
    answers {"text": ...}."""

    def __init__(self, config: LlmClientConfig):
        if not config.endpoint:
            raise SaineError("HTTP client requires an endpoint")
        self.config = config

    def complete(self, prompt, *, task_id, prompt_index):
        import requests

        try:
            response = requests.post(self.config.endpoint, json={
                "prompt": prompt,
                "max_length": self.config.max_length,
                "do_sample": self.config.sampling,
                "temperature": self.config.temperature,
            }, timeout=300)
            response.raise_for_status()
            return response.json()["text"]
        except Exception as exc:
            raise ClientError(f"completion request failed: {exc}") from exc


# --- campaigns ---------------------------------------------------------------


@dataclass
class SingleLabelTally:
    agree: int = 0
    disagree: int = 0
    not_econ: int = 0
    blank: int = 0
    total: int = 0

    def check(self) -> None:
        if self.agree + self.disagree + self.not_econ + self.blank != self.total:
            raise SaineError("single-label tally does not sum to the task count")

    def to_csv(self) -> str:
        return ("agree,disagree,not_econ,blank,total\n"
                f"{self.agree},{self.disagree},{self.not_econ},"
                f"{self.blank},{self.total}\n")


@dataclass
class MultiLabelTally:
    econ_yes: int = 0
    econ_no: int = 0
    econ_blank: int = 0
    # (agree, disagree, blank) per category slot, counted over yes-gated
    # tasks that actually carry that slot
    category_counts: list[list[int]] = field(
        default_factory=lambda: [[0, 0, 0] for _ in range(MAX_PREDICTED_CATEGORIES)])
    total: int = 0

    def check(self) -> None:
        if self.econ_yes + self.econ_no + self.econ_blank != self.total:
            raise SaineError("multi-label gate tally does not sum to the task count")

    def to_csv(self) -> str:
        header = ["econ_yes", "econ_no", "econ_blank"]
        values = [self.econ_yes, self.econ_no, self.econ_blank]
        for i, counts in enumerate(self.category_counts, start=1):
            for suffix, value in zip(("agree", "disagree", "blank"), counts):
                header.append(f"cat{i}_{suffix}")
                values.append(value)
        header.append("total")
        values.append(self.total)
        return (",".join(header) + "\n"
                + ",".join(str(v) for v in values) + "\n")


ContextBuilder = Callable[[TaskRecord], PromptTemplateContext]


@dataclass
class SingleCampaignResult:
    rows: list[tuple[str, LlmSingleVerdict]]
    tally: SingleLabelTally
    errors: list[tuple[str, str]]


@dataclass
class MultiCampaignResult:
    rows: list[tuple[str, LlmMultiVerdict]]
    tally: MultiLabelTally
    errors: list[tuple[str, str]]


def context_from_task(task: TaskRecord, taxonomy: Taxonomy,
                      category_names: Sequence[str] | None = None,
                      ) -> PromptTemplateContext:
    """Build a prompt context from a task, naming categories via the taxonomy.

    Candidate names default to the fields under the task's discipline.
    """
    if category_names is None:
        fields = sorted(taxonomy.children(task.discipline), key=lambda n: n.id)
        category_names = [n.name for n in fields]
    names = [taxonomy.node(c).name for c in task.predicted_categories]
    return PromptTemplateContext(
        category_names=list(category_names),
        abstract=task.abstract,
        cat1=names[0],
        cat2=names[1] if len(names) > 1 else None,
        cat3=names[2] if len(names) > 2 else None,
    )


def run_single_campaign(tasks: Sequence[TaskRecord], client: CompletionClient,
                        build_context: ContextBuilder) -> SingleCampaignResult:
    """One prompt per task; client failures are recorded as blank verdicts."""
    rows = []
    errors = []
    tally = SingleLabelTally(total=len(tasks))
    for task in tasks:
        context = build_context(task)
        prompt = build_single_prompt(context)
        try:
            response = client.complete(prompt, task_id=task.task_id,
                                       prompt_index=0)
            verdict = parse_single_response(response, context.category_names)
        except ClientError as exc:
            errors.append((task.task_id, str(exc)))
            verdict = LlmSingleVerdict(verdict=SingleVerdictKind.BLANK,
                                       suggested_category=None, raw_response="")
        rows.append((task.task_id, verdict))
        if verdict.verdict is SingleVerdictKind.AGREE:
            tally.agree += 1
        elif verdict.verdict is SingleVerdictKind.DISAGREE:
            tally.disagree += 1
        elif verdict.verdict is SingleVerdictKind.NOT_ECON:
            tally.not_econ += 1
        else:
            tally.blank += 1
    tally.check()
    return SingleCampaignResult(rows=rows, tally=tally, errors=errors)


def run_multi_campaign(tasks: Sequence[TaskRecord], client: CompletionClient,
                       build_context: ContextBuilder) -> MultiCampaignResult:
    """Up to five prompts per task, stopping after a negative or blank gate."""
    rows = []
    errors = []
    tally = MultiLabelTally(total=len(tasks))
    for task in tasks:
        context = build_context(task)
        prompts = build_multi_prompts(context)
        n_categories = len(context.categories)
        responses: list[str | None] = [None] * len(prompts)

        def ask(index: int) -> str | None:
            try:
                return client.complete(prompts[index], task_id=task.task_id,
                                       prompt_index=index)
            except ClientError as exc:
                errors.append((task.task_id, str(exc)))
                return None

        responses[0] = ask(0)
        gate = _parse_gate(responses[0]) if responses[0] is not None else EconGate.BLANK
        if gate is EconGate.YES:
            for index in range(1, len(prompts)):
                responses[index] = ask(index)
        verdict = parse_multi_responses(responses, context.category_names,
                                        n_categories)
        rows.append((task.task_id, verdict))
        if verdict.econ is EconGate.YES:
            tally.econ_yes += 1
            for slot, cat_verdict in enumerate(verdict.per_category):
                column = {CategoryVerdict.AGREE: 0, CategoryVerdict.DISAGREE: 1,
                          CategoryVerdict.BLANK: 2}[cat_verdict]
                tally.category_counts[slot][column] += 1
        elif verdict.econ is EconGate.NO:
            tally.econ_no += 1
        else:
            tally.econ_blank += 1
    tally.check()
    return MultiCampaignResult(rows=rows, tally=tally, errors=errors)
