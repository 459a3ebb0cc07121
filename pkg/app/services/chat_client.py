import json
import logging
import re
import threading
import time
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional, Sequence

import requests
from langchain_core.messages import AIMessage, BaseMessage, HumanMessage, SystemMessage

from app.config import settings
from app.services.datasets import GenerationError
from app.state import GenConfig

logger = logging.getLogger(__name__)

NUMBERED_LINE = re.compile(r"^\s*(\d+)[.)]\s+(.+?)\s*$")


class MissingAPIKeyError(GenerationError):
    pass


def parse_numbered_list(text: str) -> List[str]:
    """'1. foo' / '2) bar' lines -> ['foo', 'bar']; other lines are ignored."""
    items = []
    for line in (text or "").splitlines():
        m = NUMBERED_LINE.match(line)
        if m:
            items.append(m.group(2).strip().strip('"').strip())
    return [i for i in items if i]


def _role(message: BaseMessage) -> str:
    if isinstance(message, SystemMessage):
        return "system"
    if isinstance(message, AIMessage):
        return "assistant"
    if isinstance(message, HumanMessage):
        return "user"
    raise TypeError(f"unsupported message type {type(message).__name__}")


class ChatClient:
    """
    Minimal chat-completion client (OpenAI-compatible JSON shape) with
    retries and a JSONL audit trail of every request/response pair.
    """

    def __init__(self, cfg: Optional[GenConfig] = None, session: Optional[Any] = None, api_key: Optional[str] = None):
        self.cfg = cfg or GenConfig()
        self.session = session or requests.Session()
        key = api_key or settings.api_key()
        if not key:
            raise MissingAPIKeyError("FACTGEN_API_KEY is not set; remote generation needs an API key")
        self.headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
        self._audit_lock = threading.Lock()

    def _audit(self, record: Dict[str, Any]) -> None:
        if not self.cfg.audit_log:
            return
        record = {"timestamp": datetime.now(timezone.utc).isoformat(), **record}
        with self._audit_lock, open(self.cfg.audit_log, "a", encoding="utf-8") as f:
            f.write(json.dumps(record, ensure_ascii=False) + "\n")

    def complete(self, messages: Sequence[BaseMessage]) -> str:
        payload = {
            "model": self.cfg.model,
            "messages": [{"role": _role(m), "content": m.content} for m in messages],
            "temperature": self.cfg.temperature,
        }
        last_error: Optional[str] = None
        for attempt in range(self.cfg.retries + 1):
            try:
                response = self.session.post(
                    self.cfg.api_url, json=payload, headers=self.headers, timeout=self.cfg.timeout_seconds
                )
                if not response.ok:
                    logger.error(f"Chat API failed ({response.status_code}): {response.text[:200]}")
                response.raise_for_status()
                content = response.json()["choices"][0]["message"]["content"]
                self._audit({"request": payload, "response": content, "attempt": attempt + 1})
                return content
            except (requests.RequestException, KeyError, IndexError, ValueError) as e:
                last_error = str(e)
                self._audit({"request": payload, "error": last_error, "attempt": attempt + 1})
                if attempt < self.cfg.retries:
                    delay = self.cfg.backoff_seconds * (2**attempt)
                    logger.warning(f"⚠️ Chat request attempt {attempt + 1} failed: {e}; retrying in {delay:.1f}s")
                    time.sleep(delay)
        raise GenerationError(f"chat request failed after {self.cfg.retries + 1} attempts: {last_error}")
