from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, List, Tuple
import logging

from langchain_core.messages import AIMessage, BaseMessage, HumanMessage

from app.services.chat_client import ChatClient, parse_numbered_list
from app.services.datasets import dedup, dedup_report
from app.state import Example, GenConfig, GenerationState, GenTemplate, Label, LabeledDataset

logger = logging.getLogger(__name__)

LABEL_KINDS = ("entailment", "neutral", "contradiction")

Node = Callable[[GenerationState], Dict[str, Any]]


def _ordered_map(fn, items: List, max_workers: int) -> List:
    if max_workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(fn, items))


def _clean_paraphrase(response: str) -> str:
    numbered = parse_numbered_list(response)
    text = numbered[0] if numbered else response
    return text.strip().strip("\"'").strip()


# --- 1️⃣ PARAPHRASE ---
def make_paraphrase_node(client: ChatClient, templates: Dict[str, GenTemplate], cfg: GenConfig) -> Node:
    template = templates["paraphrase"]

    def paraphrase_seed(seed: str) -> Tuple[List[str], int]:
        prompt = template.render(s=seed, l=cfg.max_words)
        history: List[BaseMessage] = []
        out: List[str] = []
        for _ in range(cfg.n_paraphrases):
            # Earlier paraphrases stay in the conversation so the next one differs.
            history.append(HumanMessage(content=prompt))
            response = client.complete(history)
            history.append(AIMessage(content=response))
            text = _clean_paraphrase(response)
            if text:
                out.append(text)
        return out, cfg.n_paraphrases

    def paraphrase(state: GenerationState) -> Dict[str, Any]:
        logger.info("=" * 60)
        logger.info(f"📝 PARAPHRASE: {len(state.seeds)} seed statements x {cfg.n_paraphrases}")
        results = _ordered_map(paraphrase_seed, state.seeds, cfg.max_workers)
        premises: List[str] = []
        for seed, (paraphrases, _) in zip(state.seeds, results):
            if cfg.keep_original:
                premises.append(seed)
            premises.extend(paraphrases)
        logger.info(f"   Premises after paraphrasing: {len(premises)}")
        return {"premises": premises, "requests_made": state.requests_made + sum(n for _, n in results)}

    return paraphrase


# --- 2️⃣ HYPOTHESIZE ---
def make_hypothesize_node(client: ChatClient, templates: Dict[str, GenTemplate], cfg: GenConfig) -> Node:
    def hypothesize_premise(premise: str) -> Tuple[List[Example], int, int]:
        examples: List[Example] = []
        skipped = 0
        for kind in LABEL_KINDS:
            prompt = templates[kind].render(s=premise, n=cfg.n_hypotheses, l=cfg.max_words)
            hypotheses = parse_numbered_list(client.complete([HumanMessage(content=prompt)]))
            if not hypotheses:
                logger.warning(f"⚠️ No numbered sentences in {kind} response for: {premise[:60]}")
                skipped += 1
                continue
            label = Label.parse(kind)
            examples.extend(Example(premise=premise, hypothesis=h, label=label) for h in hypotheses)
        return examples, len(LABEL_KINDS), skipped

    def hypothesize(state: GenerationState) -> Dict[str, Any]:
        logger.info(f"💡 HYPOTHESIZE: {len(state.premises)} premises x {len(LABEL_KINDS)} labels")
        results = _ordered_map(hypothesize_premise, state.premises, cfg.max_workers)
        examples = [e for batch, _, _ in results for e in batch]
        skipped = sum(s for _, _, s in results)
        logger.info(f"   Hypotheses parsed: {len(examples)} (skipped responses: {skipped})")
        return {
            "examples": examples,
            "requests_made": state.requests_made + sum(n for _, n, _ in results),
            "skipped_responses": state.skipped_responses + skipped,
        }

    return hypothesize


# --- 3️⃣ FINALIZE ---
def finalize(state: GenerationState) -> Dict[str, Any]:
    dataset = LabeledDataset(examples=state.examples, provenance="generated")
    report = dedup_report(dataset)
    kept = dedup(dataset)
    logger.info(f"✅ FINALIZE: {report.kept} examples kept, {report.dropped} duplicates dropped")
    logger.info("=" * 60)
    return {"examples": kept.examples, "dedup": report}
