import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv

load_dotenv()

DATA_DIR = Path(__file__).parent / "data"


class Config:
    # Remote dataset generation (chat-completion endpoint)
    FACTGEN_API_KEY = os.getenv("FACTGEN_API_KEY")
    FACTGEN_API_URL = os.getenv("FACTGEN_API_URL", "https://api.openai.com/v1/chat/completions")
    FACTGEN_API_MODEL = os.getenv("FACTGEN_API_MODEL", "gpt-3.5-turbo")
    FACTGEN_AUDIT_LOG = os.getenv("FACTGEN_AUDIT_LOG", "generation_audit.jsonl")

    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")

    # Shipped assets
    DEFAULT_STOPWORDS = DATA_DIR / "stopwords_id.txt"
    DEFAULT_PROMPTS = DATA_DIR / "prompts_id.json"
    SAMPLE_KG = DATA_DIR / "kg" / "covid_sample.tsv"

    @classmethod
    def api_key(cls) -> Optional[str]:
        """Environment first, then the value captured at import."""
        return os.getenv("FACTGEN_API_KEY") or cls.FACTGEN_API_KEY


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    """
    Loads a TOML run-config. One table per command, e.g. [train] or
    [dataset.split]. Missing path -> empty config.
    """
    if not path:
        return {}
    with open(path, "rb") as f:
        return tomllib.load(f)


settings = Config()
