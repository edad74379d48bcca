"""Proposal engines and knowledge sources.

An engine turns a prompt state (knowledge, memory view, reflection, context,
task description) into a batch of candidate designs. Mock engines are seeded
and fully offline; the chat engine talks to an HTTP chat-completions
endpoint with a strict JSON output contract and falls back to random designs
when parsing keeps failing.

Engine protocol (duck-typed):
    propose(state, space, b) -> list[Design]         # exactly b valid designs
    reflect(batch, task_description) -> str          # never raises
    knowledge_action(history, sources, state) -> (source_index | None, query, stop)
    synthesize_knowledge(history, state) -> str
    warnings: list[str]                              # drained by the runner
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    BooleanDim,
    Context,
    ContinuousDim,
    Design,
    DesignSpace,
    MemoryEntry,
    design_cell,
    encode_batch,
    render_context,
)
from .equivalence import TransportError, _tokenize
from .numerics import shannon_entropy, stable_softmax


class DesignParseError(ValueError):
    """The raw engine output could not be parsed into any designs."""


# ---------------------------------------------------------------------------
# Prompt assembly
# ---------------------------------------------------------------------------

PROMPT_HEADERS = (
    "### Prior Knowledge",
    "### Subject",
    "### Previously Proposed Designs",
    "### Reflection",
    "### Task",
)


@dataclass
class PromptState:
    knowledge: str
    reflection: str
    memory_view: list[MemoryEntry]
    context: Context
    task_description: str
    task_name: str
    space: DesignSpace


def memory_table(space: DesignSpace, entries) -> str:
    lines = ["| index | design | score |", "|---|---|---|"]
    for i, e in enumerate(entries):
        lines.append(f"| {i} | {design_cell(space, e.design)} | {e.score:.4f} |")
    return "\n".join(lines)


def build_prompt(state: PromptState) -> str:
    """Deterministic five-section prompt with byte-stable headers."""
    sections = [
        (PROMPT_HEADERS[0], state.knowledge),
        (PROMPT_HEADERS[1], render_context(state.context)),
        (PROMPT_HEADERS[2], memory_table(state.space, state.memory_view)),
        (PROMPT_HEADERS[3], state.reflection),
        (PROMPT_HEADERS[4], state.task_description),
    ]
    return "\n\n".join(f"{header}\n{body}" for header, body in sections)


# ---------------------------------------------------------------------------
# Structured output parsing
# ---------------------------------------------------------------------------

_FENCE_RE = re.compile(r"```(?:json)?", re.IGNORECASE)


def _coerce_value(dim, v):
    if isinstance(dim, ContinuousDim):
        x = float(v)
        return min(max(x, dim.lo), dim.hi)  # out-of-range clamps to the bound
    if isinstance(dim, BooleanDim):
        if isinstance(v, bool):
            return v
        if isinstance(v, (int, float)) and v in (0, 1):
            return bool(v)
        if isinstance(v, str) and v.lower() in ("true", "false", "yes", "no"):
            return v.lower() in ("true", "yes")
        raise ValueError(f"bad boolean {v!r}")
    if isinstance(v, str):
        for i, label in enumerate(dim.labels):
            if label.lower() == v.lower():
                return i
        raise ValueError(f"unknown label {v!r}")
    if isinstance(v, int) and not isinstance(v, bool) and 0 <= v < len(dim.labels):
        return v
    raise ValueError(f"bad categorical {v!r}")


def parse_designs(raw: str, space: DesignSpace, b: int) -> tuple[list[Design], int]:
    """Parse a JSON array of {dim name: value} objects.

    Returns at most `b` designs plus the number of rejected elements.
    Raises DesignParseError when the payload is not a JSON array at all, so
    engine retry logic can resample.
    """
    text = _FENCE_RE.sub("", raw).strip()
    start, end = text.find("["), text.rfind("]")
    if start == -1 or end <= start:
        raise DesignParseError("no JSON array found")
    try:
        payload = json.loads(text[start : end + 1])
    except json.JSONDecodeError as exc:
        raise DesignParseError(f"malformed JSON: {exc}") from exc
    if not isinstance(payload, list):
        raise DesignParseError("expected a JSON array")

    designs, rejects = [], 0
    for item in payload:
        if len(designs) >= b:
            break
        if not isinstance(item, dict):
            rejects += 1
            continue
        try:
            values = tuple(_coerce_value(dim, item[dim.name]) for dim in space.dims)
        except (KeyError, ValueError, TypeError):
            rejects += 1
            continue
        designs.append(Design(values))
    return designs, rejects


# ---------------------------------------------------------------------------
# Mock engines
# ---------------------------------------------------------------------------


def random_design(space: DesignSpace, rng: np.random.Generator) -> Design:
    vals = []
    for dim in space.dims:
        if isinstance(dim, ContinuousDim):
            vals.append(float(rng.uniform(dim.lo, dim.hi)))
        elif isinstance(dim, BooleanDim):
            vals.append(bool(rng.integers(2)))
        else:
            vals.append(int(rng.integers(len(dim.labels))))
    return Design(tuple(vals))


def perturb_design(space: DesignSpace, design: Design, rng: np.random.Generator,
                   sigma: float = 0.1, flip_prob: float = 0.1) -> Design:
    """Jitter continuous dims by sigma (in encoded units), flip booleans and
    resample categoricals with probability flip_prob."""
    vals = []
    for dim, v in zip(space.dims, design.values):
        if isinstance(dim, ContinuousDim):
            width = dim.hi - dim.lo
            x = float(v) + rng.normal(0.0, sigma * width)
            vals.append(min(max(x, dim.lo), dim.hi))
        elif isinstance(dim, BooleanDim):
            vals.append((not v) if rng.random() < flip_prob else bool(v))
        else:
            if rng.random() < flip_prob:
                vals.append(int(rng.integers(len(dim.labels))))
            else:
                vals.append(int(v))
    return Design(tuple(vals))


def _batch_summary(batch) -> str:
    """Deterministic one-line reflection for mock engines: best/worst score
    plus the entropy of the batch's design histogram."""
    scores = np.array([s for _, s in batch], dtype=float)
    counts: dict[tuple, int] = {}
    for d, _ in batch:
        counts[d.values] = counts.get(d.values, 0) + 1
    p = np.array(list(counts.values()), dtype=float)
    ent = shannon_entropy(p / p.sum())
    return (
        f"Round summary: best score {scores.max():.4f}, worst score {scores.min():.4f}, "
        f"proposal entropy {ent:.4f} nats over {len(counts)} distinct designs."
    )


@dataclass
class _MockEngineBase:
    """Shared seeded plumbing for the offline engines."""

    seed: int = 0
    knowledge_stop_after: int | None = None

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)
        self.warnings: list[str] = []
        self._knowledge_round = 0

    def reflect(self, batch, task_description: str) -> str:
        if not batch:
            raise ValueError("empty batch")
        return _batch_summary(batch)

    def knowledge_action(self, history, sources, state):
        if self.knowledge_stop_after is not None and self._knowledge_round >= self.knowledge_stop_after:
            return None, "", True
        idx = self._knowledge_round % max(len(sources), 1)
        self._knowledge_round += 1
        return idx, state.task_description, False

    def synthesize_knowledge(self, history, state) -> str:
        passages = [r for _, _, r in history if r]
        return "\n\n".join(passages)


@dataclass
class RandomEngine(_MockEngineBase):
    """Uniform per-dim sampling."""

    def propose(self, state: PromptState, space: DesignSpace, b: int) -> list[Design]:
        return [random_design(space, self.rng) for _ in range(b)]


@dataclass
class BoltzmannMemoryEngine(_MockEngineBase):
    """Score-weighted sampling from a pool of random designs plus
    perturbations of top memory designs.

    Lower temperature concentrates proposals on high-scoring pool members,
    which exercises the entropy-side certainty estimate. The perturbation
    scale adapts to the spread of the current top designs, so proposals
    sharpen as the memory concentrates.
    """

    temp: float = 1.0
    pool_size: int = 64
    top_m: int = 8
    explore_frac: float = 0.25

    def _build_pool(self, state: PromptState, space: DesignSpace):
        # Parents are ranked by raw value: the mu-scaled score can collapse
        # to all-zeros on a zero-certainty step, which would make the
        # ranking arbitrary. Sampling weights still use the stored scores.
        top = sorted(state.memory_view, key=lambda e: -e.raw_value)[: self.top_m]
        pool: list[Design] = []
        scores: list[float] = []
        floor = min((e.score for e in top), default=0.0)

        n_explore = max(1, int(self.pool_size * self.explore_frac))
        if not top:
            n_explore = self.pool_size
        for _ in range(n_explore):
            pool.append(random_design(space, self.rng))
            scores.append(floor)

        if top:
            sigma, flip = self._adaptive_scale(space, [e.design for e in top])
            for e in top:  # keep incumbents themselves in the pool
                pool.append(e.design)
                scores.append(e.score)
            i = 0
            while len(pool) < self.pool_size:
                parent = top[i % len(top)]
                # alternate coarse and fine jitter so proposals keep
                # refining once the memory has concentrated
                scale = 1.0 if i % 2 == 0 else 0.1
                pool.append(perturb_design(space, parent.design, self.rng,
                                           max(sigma * scale, 1e-4),
                                           max(flip * scale, 0.01)))
                scores.append(parent.score)
                i += 1
        return pool, np.array(scores)

    def _adaptive_scale(self, space, designs):
        enc = encode_batch(space, designs)
        spread = float(enc.std(axis=0).mean()) if len(designs) > 1 else 0.1
        sigma = min(max(spread, 1e-3), 0.25)
        flip = min(max(spread, 0.02), 0.25)
        return sigma, flip

    def propose(self, state: PromptState, space: DesignSpace, b: int) -> list[Design]:
        pool, scores = self._build_pool(state, space)
        if self.temp <= 1e-9:
            return [pool[int(np.argmax(scores))]] * b
        probs = stable_softmax(scores / self.temp)
        idx = self.rng.choice(len(pool), size=b, replace=True, p=probs)
        return [pool[i] for i in idx]


@dataclass
class HillClimbEngine(_MockEngineBase):
    """Batch of perturbations of the best design in memory."""

    step: float = 0.05

    def propose(self, state: PromptState, space: DesignSpace, b: int) -> list[Design]:
        if not state.memory_view:
            return [random_design(space, self.rng) for _ in range(b)]
        best = max(state.memory_view, key=lambda e: e.score)
        flip = min(0.5, self.step)
        return [perturb_design(space, best.design, self.rng, self.step, flip) for _ in range(b)]


# ---------------------------------------------------------------------------
# Chat-API engine
# ---------------------------------------------------------------------------

SYSTEM_PROMPT = """\
You are an optimization assistant whose role is to propose designs based on
historical data and iterative feedback. You will be provided with a history
of designs along with their respective performance scores. Your task is to
propose new designs that potentially yield better outcomes. A higher score
indicates a better design. Balance exploration (trying diverse designs) and
exploitation (refining successful designs)."""


def _dim_contract(dim) -> str:
    if isinstance(dim, ContinuousDim):
        return f'"{dim.name}": a number between {dim.lo} and {dim.hi}'
    if isinstance(dim, BooleanDim):
        return f'"{dim.name}": true or false'
    labels = ", ".join(f'"{l}"' for l in dim.labels)
    return f'"{dim.name}": one of {labels}'


def output_contract(space: DesignSpace, b: int) -> str:
    dims = "; ".join(_dim_contract(d) for d in space.dims)
    return (
        f"Respond ONLY with a JSON array of exactly {b} objects, no prose. "
        f"Each object must contain every key: {dims}."
    )


@dataclass
class ChatApiEngine:
    """Engine backed by an HTTP chat-completions endpoint.

    POSTs {"model", "temperature", "messages"} and reads the first choice's
    message content. Endpoint and key default to CHAT_API_BASE /
    CHAT_API_KEY. Parsing failures are retried up to `max_retries` times;
    remaining slots are filled with random designs and a warning recorded.
    """

    model: str
    temperature: float = 1.0
    max_retries: int = 3
    endpoint: str | None = None
    api_key: str | None = None
    retry_wait: float = 0.5
    timeout: float = 60.0
    seed: int = 0

    def __post_init__(self):
        self.rng = np.random.default_rng(self.seed)
        self.warnings: list[str] = []

    def _chat(self, messages) -> str:
        import requests

        url = self.endpoint or os.environ.get("CHAT_API_BASE")
        if not url:
            raise TransportError("no chat endpoint configured (CHAT_API_BASE)")
        key = self.api_key or os.environ.get("CHAT_API_KEY", "")
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = {"model": self.model, "temperature": self.temperature, "messages": messages}
        last = None
        for attempt in range(self.max_retries):
            try:
                resp = requests.post(url, json=body, headers=headers, timeout=self.timeout)
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except Exception as exc:  # noqa: BLE001
                last = exc
                if attempt < self.max_retries - 1:
                    time.sleep(self.retry_wait * (2 ** attempt))
        raise TransportError(f"chat request failed after {self.max_retries} attempts: {last}")

    def propose(self, state: PromptState, space: DesignSpace, b: int) -> list[Design]:
        designs: list[Design] = []
        for _ in range(self.max_retries):
            need = b - len(designs)
            messages = [
                {"role": "system", "content": SYSTEM_PROMPT + "\n\n" + output_contract(space, need)},
                {"role": "user", "content": build_prompt(state) + f"\n\nPropose exactly {need} new designs now."},
            ]
            try:
                raw = self._chat(messages)
                parsed, rejects = parse_designs(raw, space, need)
                if rejects:
                    self.warnings.append(f"rejected {rejects} malformed design elements")
                designs.extend(parsed)
            except (DesignParseError, TransportError) as exc:
                self.warnings.append(f"proposal round failed: {exc}")
            if len(designs) >= b:
                break
        if len(designs) < b:
            missing = b - len(designs)
            self.warnings.append(f"filled {missing} slots with random designs after retries")
            designs.extend(random_design(space, self.rng) for _ in range(missing))
        return designs[:b]

    def reflect(self, batch, task_description: str) -> str:
        if not batch:
            raise ValueError("empty batch")
        table = "\n".join(f"| {i} | {s:.4f} |" for i, (_, s) in enumerate(batch))
        prompt = (
            f"### Task Description\n{task_description}\n\n### Scores of the last batch\n"
            f"| index | score |\n|---|---|\n{table}\n\n"
            "Analyze the scores and reflect on how to improve them. "
            "Do NOT propose a new design; respond only with your thinking."
        )
        try:
            return self._chat([{"role": "user", "content": prompt}])
        except TransportError as exc:
            self.warnings.append(f"reflection failed: {exc}")
            return ""

    def knowledge_action(self, history, sources, state):
        names = ", ".join(f'"{s.name}"' for s in sources)
        transcript = "\n".join(f"[{k}] {q} -> {r[:400]}" for k, q, r in history)
        prompt = (
            f"{render_context(state.context)}\n\nProblem description: {state.task_description}\n\n"
            f"Available knowledge sources: {names}.\nQueries so far:\n{transcript or '(none)'}\n\n"
            'Respond ONLY with JSON: {"source": <source name or null>, '
            '"query": <query string>, "stop": <true or false>}.'
        )
        try:
            raw = self._chat([{"role": "user", "content": prompt}])
            obj = json.loads(_FENCE_RE.sub("", raw).strip())
            if obj.get("stop") or obj.get("source") is None:
                return None, "", True
            for i, s in enumerate(sources):
                if s.name == obj["source"]:
                    return i, str(obj.get("query", "")), False
            self.warnings.append(f"unknown knowledge source {obj['source']!r}")
            return None, "", True
        except (TransportError, json.JSONDecodeError, KeyError, TypeError) as exc:
            self.warnings.append(f"knowledge action failed: {exc}")
            return None, "", True

    def synthesize_knowledge(self, history, state) -> str:
        transcript = "\n\n".join(f"[{k}] query: {q}\n{r}" for k, q, r in history)
        prompt = (
            f"{render_context(state.context)}\n\nProblem description: {state.task_description}\n\n"
            f"Retrieved material:\n{transcript or '(none)'}\n\n"
            "Provide relevant factual information to help solve the problem. "
            "Be specific, concise, and comprehensive."
        )
        try:
            return self._chat([{"role": "user", "content": prompt}])
        except TransportError as exc:
            self.warnings.append(f"knowledge synthesis failed: {exc}")
            return ""


# ---------------------------------------------------------------------------
# Knowledge sources
# ---------------------------------------------------------------------------


@dataclass
class StaticFactsSource:
    name: str
    text: str

    def query(self, q: str) -> str:
        return self.text


@dataclass
class ScriptedSource:
    name: str
    mapping: dict[str, str]

    def query(self, q: str) -> str:
        return self.mapping.get(q, "")


@dataclass
class FileCorpusSource:
    """Blank-line-separated passages from UTF-8 text files, ranked by token
    overlap with the query (ties keep file order)."""

    name: str
    paths: tuple[str, ...]
    top_k: int = 1
    passages: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        for path in self.paths:
            try:
                text = Path(path).read_text(encoding="utf-8")
            except OSError as exc:
                self.warnings.append(f"unreadable corpus file {path}: {exc}")
                continue
            for block in re.split(r"\n\s*\n", text):
                block = block.strip()
                if block:
                    self.passages.append(block)

    def query(self, q: str) -> str:
        q_tokens = set(_tokenize(q)) if q.strip() else set()
        scored = []
        for order, passage in enumerate(self.passages):
            overlap = len(q_tokens & set(_tokenize(passage)))
            if overlap > 0:
                scored.append((-overlap, order, passage))
        scored.sort()
        return "\n\n".join(p for _, _, p in scored[: self.top_k])


KnowledgeSource = StaticFactsSource | ScriptedSource | FileCorpusSource


def knowledge_query(source: KnowledgeSource, query: str) -> str:
    return source.query(query)


# ---------------------------------------------------------------------------
# Module-level operations
# ---------------------------------------------------------------------------


def propose(engine, state: PromptState, space: DesignSpace, b: int) -> list[Design]:
    if b < 1:
        raise ValueError("b must be >= 1")
    designs = engine.propose(state, space, b)
    if len(designs) != b:
        raise RuntimeError(f"engine returned {len(designs)} designs, expected {b}")
    for d in designs:
        space.validate(d)
    return designs


def reflect(engine, batch, task_description: str) -> str:
    return engine.reflect(batch, task_description)


def generate_knowledge(engine, sources, state: PromptState, budget: int) -> str:
    """Iterative retrieval: at most `budget` source round-trips, each chosen
    by the engine, then one synthesis pass over the transcript. Source
    failures skip the round; engine failures yield empty knowledge."""
    if budget < 0:
        raise ValueError("budget must be >= 0")
    history: list[tuple[str, str, str]] = []
    if sources:
        for _ in range(budget):
            try:
                idx, query, stop = engine.knowledge_action(history, sources, state)
            except Exception:  # noqa: BLE001 - engine failure degrades to no knowledge
                return ""
            if stop or idx is None:
                break
            source = sources[idx]
            try:
                response = knowledge_query(source, query)
            except Exception as exc:  # noqa: BLE001 - skip the round
                getattr(engine, "warnings", []).append(f"knowledge source failed: {exc}")
                continue
            history.append((source.name, query, response))
    try:
        return engine.synthesize_knowledge(history, state)
    except Exception:  # noqa: BLE001
        return ""


__all__ = [
    "DesignParseError",
    "PROMPT_HEADERS",
    "PromptState",
    "memory_table",
    "build_prompt",
    "parse_designs",
    "random_design",
    "perturb_design",
    "RandomEngine",
    "BoltzmannMemoryEngine",
    "HillClimbEngine",
    "ChatApiEngine",
    "SYSTEM_PROMPT",
    "output_contract",
    "StaticFactsSource",
    "ScriptedSource",
    "FileCorpusSource",
    "KnowledgeSource",
    "knowledge_query",
    "propose",
    "reflect",
    "generate_knowledge",
]
