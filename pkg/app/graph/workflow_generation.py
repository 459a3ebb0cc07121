import logging
from typing import Dict, Iterable, List, Optional, Tuple, Union

from langgraph.graph import END, StateGraph

from app.graph.nodes_generation import finalize, make_hypothesize_node, make_paraphrase_node
from app.services.chat_client import ChatClient
from app.services.datasets import load_templates
from app.state import GenConfig, GenerationState, GenTemplate, LabeledDataset

logger = logging.getLogger(__name__)

# ============================================================
# GENERATION WORKFLOW (linear)
#   paraphrase -> hypothesize -> finalize
# ============================================================


def build_generation_graph(client: ChatClient, templates: Dict[str, GenTemplate], cfg: GenConfig):
    workflow = StateGraph(GenerationState)
    workflow.add_node("paraphrase", make_paraphrase_node(client, templates, cfg))
    workflow.add_node("hypothesize", make_hypothesize_node(client, templates, cfg))
    workflow.add_node("finalize", finalize)

    workflow.set_entry_point("paraphrase")
    workflow.add_edge("paraphrase", "hypothesize")
    workflow.add_edge("hypothesize", "finalize")
    workflow.add_edge("finalize", END)
    return workflow.compile()


def generate_from_seeds(
    seeds: List[str],
    templates: Optional[Dict[str, GenTemplate]] = None,
    cfg: Optional[GenConfig] = None,
    client: Optional[ChatClient] = None,
) -> Tuple[LabeledDataset, GenerationState]:
    """
    Expands seed statements into a labeled NLI dataset through a remote chat
    model. Raises GenerationError (or MissingAPIKeyError) on endpoint failure.
    """
    cfg = cfg or GenConfig()
    templates = templates or load_templates()
    client = client or ChatClient(cfg)
    seeds = [s.strip() for s in seeds if s.strip()]

    logger.info(f"🚀 Generating dataset from {len(seeds)} seed statements (model={cfg.model})")
    graph = build_generation_graph(client, templates, cfg)
    final = GenerationState.model_validate(graph.invoke(GenerationState(seeds=seeds)))
    logger.info(
        f"🏁 Generation done: {len(final.examples)} examples, "
        f"{final.requests_made} requests, {final.skipped_responses} skipped responses"
    )
    return LabeledDataset(examples=final.examples, provenance="generated"), final


def generate_remote(
    premises: List[str],
    templates: Optional[Union[Dict[str, GenTemplate], Iterable[GenTemplate]]] = None,
    cfg: Optional[GenConfig] = None,
    client: Optional[ChatClient] = None,
) -> LabeledDataset:
    if templates is not None and not isinstance(templates, dict):
        templates = {t.kind: t for t in templates}
    dataset, _ = generate_from_seeds(premises, templates, cfg, client)
    return dataset
